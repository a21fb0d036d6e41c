use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use themeloom_core::matrix::Cell;
use themeloom_core::{Coding, PromptSpec, ScoreMatrix};
use themeloom_gateway::{ProviderConfig, ProviderKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coder {
    Model { provider: ProviderKind, model_id: String },
    Human { name: String },
    /// Output of a completed consensus session.
    Consensus { session_id: String },
}

impl Coder {
    pub fn model(config: &ProviderConfig) -> Self {
        Coder::Model { provider: config.provider, model_id: config.model_id.clone() }
    }

    /// Identifier carried by the run's matrix.
    pub fn label(&self) -> String {
        match self {
            Coder::Model { provider, model_id } => format!("{provider}:{model_id}"),
            Coder::Human { name } => name.clone(),
            Coder::Consensus { session_id } => format!("consensus:{session_id}"),
        }
    }

    pub fn is_model(&self) -> bool {
        matches!(self, Coder::Model { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Failed { error: String },
}

/// A score that changed between a pass-1 run and its revision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionDelta {
    pub cell: Cell,
    pub before: u8,
    pub after: u8,
    /// `None` when the model changed the score without saying why.
    pub justification: Option<String>,
}

impl RevisionDelta {
    pub fn is_justified(&self) -> bool {
        self.justification.is_some()
    }
}

/// Every cell whose score differs, with the revised matrix's justification.
pub fn revision_deltas(prior: &ScoreMatrix, revised: &ScoreMatrix) -> Vec<RevisionDelta> {
    prior
        .iter()
        .zip(revised.iter())
        .filter(|((_, a), (_, b))| a != b)
        .map(|((cell, before), (_, after))| RevisionDelta {
            cell,
            before,
            after,
            justification: revised.justification(cell).map(String::from),
        })
        .collect()
}

/// What is needed to re-derive a machine run from the response cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineProvenance {
    pub config: ProviderConfig,
    pub spec: PromptSpec,
    pub cache_key: String,
    pub provider_echo: String,
    pub from_cache: bool,
    pub latency_ms: u64,
    /// Theme names were matched with whitespace repair.
    #[serde(default)]
    pub repaired: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodingRun {
    pub run_id: String,
    pub coder: Coder,
    pub pass_number: u8,
    pub prompt_hash: Option<String>,
    pub parent_run: Option<String>,
    pub codebook_version: u64,
    pub created_at: DateTime<Utc>,
    pub status: RunStatus,
    pub matrix: Option<Coding>,
    pub deltas: Vec<RevisionDelta>,
    pub provenance: Option<MachineProvenance>,
    pub raw_response: Option<String>,
}

impl CodingRun {
    pub fn new_id() -> String {
        uuid::Uuid::new_v4().to_string()
    }

    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Complete
    }

    pub fn scores(&self) -> Option<&ScoreMatrix> {
        match &self.matrix {
            Some(Coding::Scores(m)) => Some(m),
            _ => None,
        }
    }

    /// Structural invariants independent of the rest of the project.
    pub fn check(&self) -> Result<(), String> {
        match (&self.status, &self.matrix) {
            (RunStatus::Complete, None) => return Err("complete run has no matrix".into()),
            (RunStatus::Failed { .. }, Some(_)) => return Err("failed run carries a matrix".into()),
            _ => {}
        }
        if !(1..=2).contains(&self.pass_number) {
            return Err(format!("pass_number {} is not 1 or 2", self.pass_number));
        }
        if self.pass_number == 2 && self.parent_run.is_none() {
            return Err("pass-2 run has no parent_run".into());
        }
        match (&self.coder, &self.matrix) {
            (Coder::Model { .. }, Some(Coding::Binary(_))) => return Err("model run carries a binary matrix".into()),
            (Coder::Human { .. } | Coder::Consensus { .. }, Some(Coding::Scores(_))) => {
                return Err("human run carries a score matrix".into())
            }
            _ => {}
        }
        if self.coder.is_model() && self.prompt_hash.is_none() {
            return Err("model run has no prompt_hash".into());
        }
        if !self.coder.is_model() && self.pass_number != 1 {
            return Err("human runs are single-pass".into());
        }
        Ok(())
    }
}
