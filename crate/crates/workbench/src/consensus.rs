//! Deliberative consensus over two or more binary codings.
//!
//! Any cell on which the inputs are not unanimous is a disagreement and
//! must be resolved, with a rationale, before a final matrix exists.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use themeloom_core::matrix::{cells, Cell};
use themeloom_core::{BinaryMatrix, Dims};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsensusError {
    #[error("consensus needs at least two codings, got {0}")]
    TooFewInputs(usize),
    #[error("codings have mixed dimensions: {0} and {1}")]
    MixedDimensions(Dims, Dims),
    #[error("{0} is not a disputed cell")]
    NotDisputed(Cell),
    #[error("rationale is empty")]
    EmptyRationale,
    #[error("session is already complete")]
    AlreadyComplete,
    #[error("{} cell(s) still unresolved", .0.len())]
    Unresolved(Vec<Cell>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Open,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub cell: Cell,
    pub value: bool,
    pub rationale: String,
    pub resolved_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusSession {
    pub session_id: String,
    pub input_runs: Vec<String>,
    pub dims: Dims,
    pub codebook_version: u64,
    /// Cell values where every input agrees; disputed cells hold `false`.
    agreed: Vec<bool>,
    pub disagreements: Vec<Cell>,
    pub resolutions: Vec<Resolution>,
    pub status: SessionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus_run: Option<String>,
    pub created_at: DateTime<Utc>,
}

impl ConsensusSession {
    pub fn open(
        session_id: String,
        input_runs: Vec<String>,
        codebook_version: u64,
        inputs: &[&BinaryMatrix],
    ) -> Result<Self, ConsensusError> {
        if inputs.len() < 2 {
            return Err(ConsensusError::TooFewInputs(inputs.len()));
        }
        let dims = inputs[0].dims();
        if let Some(other) = inputs.iter().map(|m| m.dims()).find(|d| *d != dims) {
            return Err(ConsensusError::MixedDimensions(dims, other));
        }
        let mut agreed = Vec::with_capacity(dims.cells());
        let mut disagreements = Vec::new();
        for (i, cell) in cells(dims).enumerate() {
            let first = inputs[0].bits()[i];
            if inputs.iter().all(|m| m.bits()[i] == first) {
                agreed.push(first);
            } else {
                agreed.push(false);
                disagreements.push(cell);
            }
        }
        let status = if disagreements.is_empty() { SessionStatus::Complete } else { SessionStatus::Open };
        Ok(Self {
            session_id,
            input_runs,
            dims,
            codebook_version,
            agreed,
            disagreements,
            resolutions: Vec::new(),
            status,
            consensus_run: None,
            created_at: Utc::now(),
        })
    }

    pub fn is_complete(&self) -> bool {
        self.status == SessionStatus::Complete
    }

    pub fn resolution(&self, cell: Cell) -> Option<&Resolution> {
        self.resolutions.iter().find(|r| r.cell == cell)
    }

    pub fn unresolved(&self) -> Vec<Cell> {
        self.disagreements.iter().copied().filter(|c| self.resolution(*c).is_none()).collect()
    }

    /// Records a decision; re-resolving a cell replaces the earlier decision
    /// while the session is open.
    pub fn resolve(&mut self, cell: Cell, value: bool, rationale: &str) -> Result<(), ConsensusError> {
        if self.is_complete() {
            return Err(ConsensusError::AlreadyComplete);
        }
        if !self.disagreements.contains(&cell) {
            return Err(ConsensusError::NotDisputed(cell));
        }
        let rationale = rationale.trim();
        if rationale.is_empty() {
            return Err(ConsensusError::EmptyRationale);
        }
        self.resolutions.retain(|r| r.cell != cell);
        self.resolutions.push(Resolution { cell, value, rationale: rationale.to_string(), resolved_at: Utc::now() });
        self.resolutions.sort_by_key(|r| r.cell);
        if self.unresolved().is_empty() {
            self.status = SessionStatus::Complete;
        }
        Ok(())
    }

    pub fn final_matrix(&self, coder_id: &str) -> Result<BinaryMatrix, ConsensusError> {
        let open = self.unresolved();
        if !open.is_empty() {
            return Err(ConsensusError::Unresolved(open));
        }
        BinaryMatrix::from_fn(coder_id, self.dims, |cell| match self.resolution(cell) {
            Some(r) => r.value,
            None => self.agreed[(cell.statement as usize - 1) * self.dims.themes + cell.theme as usize - 1],
        })
        .map_err(|e| unreachable!("dims are fixed at open: {e}"))
    }
}
