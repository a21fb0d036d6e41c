//! Coding runs, revision passes, human coding, consensus and codebook drafts.
//!
//! Model runs are split into [`prepare_model_run`] / [`prepare_revision`]
//! (reads the project), a gateway call that needs no project access, and
//! [`finish`] (writes the run). The one-shot helpers compose the three.

use std::sync::Arc;

use chrono::Utc;
use serde::Serialize;
use thiserror::Error;
use themeloom_core::analysis::{threshold_sweep_with, AnalysisError};
use themeloom_core::cards::DeckError;
use themeloom_core::corpus::CorpusError;
use themeloom_core::matrix::{Cell, MatrixError};
use themeloom_core::payload::{ParseOptions, PayloadError};
use themeloom_core::prompting::{PromptError, Prompter};
use themeloom_core::{
    AgreementReport, BinaryMatrix, Codebook, Coding, Deck, Dims, Exec, PromptSpec, Reflection, RenderedPrompt,
    ScoreMatrix, SweepPoint, Theme, Threshold,
};
use themeloom_gateway::{parse_score_matrix, Gateway, GatewayError, ProviderConfig, RawResponse, ResponseCache};

use crate::consensus::{ConsensusError, ConsensusSession};
use crate::run::{revision_deltas, Coder, CodingRun, MachineProvenance, RunStatus};
use crate::store::{Project, StoreError};

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("provider error{}: {source}", run_suffix(.run_id))]
    Gateway { run_id: Option<String>, source: GatewayError },
    #[error("unparseable response{}: {source}", run_suffix(.run_id))]
    Parse { run_id: Option<String>, source: PayloadError },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Deck(#[from] DeckError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("expected a {expected} matrix, got {found}")]
    Dimensions { expected: Dims, found: Dims },
    #[error("cannot read a theme list from the response: {message}")]
    ThemeList { message: String, raw: String },
    #[error("{0}")]
    Invalid(String),
}

fn run_suffix(run_id: &Option<String>) -> String {
    run_id.as_ref().map(|id| format!(" (run {id} recorded as failed)")).unwrap_or_default()
}

impl WorkflowError {
    /// Provider, response and disk failures; everything else is a caller error.
    pub fn is_system(&self) -> bool {
        matches!(
            self,
            WorkflowError::Gateway { .. }
                | WorkflowError::Parse { .. }
                | WorkflowError::ThemeList { .. }
                | WorkflowError::Store(StoreError::Io { .. } | StoreError::Corrupt { .. })
        )
    }

    pub fn failed_run(&self) -> Option<&str> {
        match self {
            WorkflowError::Gateway { run_id, .. } | WorkflowError::Parse { run_id, .. } => run_id.as_deref(),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, WorkflowError>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Collapse whitespace runs when matching theme names in responses.
    pub repair: bool,
}

/// A gateway for `config` whose cache lives in the project.
pub fn project_gateway(project: &Project, config: ProviderConfig) -> Result<Gateway> {
    let cache = ResponseCache::open(project.cache_dir()).map_err(gateway_err(None))?;
    Ok(Gateway::new(config).map_err(gateway_err(None))?.with_cache(Arc::new(cache)))
}

fn gateway_err(run_id: Option<String>) -> impl FnOnce(GatewayError) -> WorkflowError {
    move |source| WorkflowError::Gateway { run_id, source }
}

pub fn prompter(project: &Project) -> Result<Prompter> {
    Ok(Prompter::from_dir(project.templates_dir())?)
}

/// Everything needed to persist a model run once its response arrives.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub run_id: String,
    pub coder: Coder,
    pub pass_number: u8,
    pub parent_run: Option<String>,
    pub codebook_version: u64,
    pub config: ProviderConfig,
    pub spec: PromptSpec,
    pub prompt: RenderedPrompt,
    pub cache_key: String,
    pub options: RunOptions,
    prior: Option<ScoreMatrix>,
}

pub fn prepare_model_run(project: &Project, config: &ProviderConfig, spec: &PromptSpec, options: RunOptions) -> Result<PreparedRun> {
    config.validate().map_err(gateway_err(None))?;
    let codebook = project.active_codebook()?;
    let prompt = prompter(project)?.build_coding_prompt(codebook, project.corpus()?, spec)?;
    Ok(PreparedRun {
        run_id: CodingRun::new_id(),
        coder: Coder::model(config),
        pass_number: 1,
        parent_run: None,
        codebook_version: codebook.version(),
        config: config.clone(),
        spec: spec.clone(),
        cache_key: themeloom_gateway::CacheKey::new(&prompt.content_hash, &config.cache_model_id(), config.temperature)
            .as_str()
            .to_string(),
        prompt,
        options,
        prior: None,
    })
}

/// Prepares the second pass of `parent_id`. `spec` defaults to the parent's
/// spec switched to revision mode.
pub fn prepare_revision(
    project: &Project,
    config: &ProviderConfig,
    parent_id: &str,
    spec: Option<&PromptSpec>,
    options: RunOptions,
) -> Result<PreparedRun> {
    config.validate().map_err(gateway_err(None))?;
    let parent = project.run(parent_id)?;
    let (Some(prior), Some(prov)) = (parent.scores(), parent.provenance.as_ref()) else {
        return Err(WorkflowError::Invalid(format!("run {parent_id} is not a completed model run")));
    };
    if parent.pass_number != 1 {
        return Err(WorkflowError::Invalid(format!("run {parent_id} is already a revision pass")));
    }
    let coder = Coder::model(config);
    if coder != parent.coder {
        return Err(WorkflowError::Invalid(format!(
            "revision must use the parent's coder {}, not {}",
            parent.coder.label(),
            coder.label()
        )));
    }
    let spec = spec.cloned().unwrap_or_else(|| prov.spec.revision());
    let codebook = project.codebook(parent.codebook_version)?;
    let prompt = prompter(project)?.build_revision_prompt(prior, codebook, project.corpus()?, &spec)?;
    Ok(PreparedRun {
        run_id: CodingRun::new_id(),
        coder,
        pass_number: 2,
        parent_run: Some(parent_id.to_string()),
        codebook_version: parent.codebook_version,
        config: config.clone(),
        cache_key: themeloom_gateway::CacheKey::new(&prompt.content_hash, &config.cache_model_id(), config.temperature)
            .as_str()
            .to_string(),
        spec,
        prompt,
        options,
        prior: Some(prior.clone()),
    })
}

/// Records the outcome of a prepared run, failed or not. On failure the
/// error names the persisted run.
pub fn finish(
    project: &mut Project,
    prepared: PreparedRun,
    response: std::result::Result<RawResponse, GatewayError>,
) -> Result<String> {
    let codebook = project.codebook(prepared.codebook_version)?.clone();
    let mut run = CodingRun {
        run_id: prepared.run_id.clone(),
        coder: prepared.coder.clone(),
        pass_number: prepared.pass_number,
        prompt_hash: Some(prepared.prompt.content_hash.clone()),
        parent_run: prepared.parent_run.clone(),
        codebook_version: prepared.codebook_version,
        created_at: Utc::now(),
        status: RunStatus::Complete,
        matrix: None,
        deltas: Vec::new(),
        provenance: None,
        raw_response: None,
    };
    let response = match response {
        Ok(r) => r,
        Err(source) => {
            run.status = RunStatus::Failed { error: source.to_string() };
            project.append_run(run)?;
            return Err(WorkflowError::Gateway { run_id: Some(prepared.run_id), source });
        }
    };
    run.raw_response = Some(response.text.clone());
    run.provenance = Some(MachineProvenance {
        config: prepared.config.clone(),
        spec: prepared.spec.clone(),
        cache_key: prepared.cache_key.clone(),
        provider_echo: response.provider_echo.clone(),
        from_cache: response.from_cache,
        latency_ms: response.latency_ms,
        repaired: prepared.options.repair,
    });
    let opts = ParseOptions { repair: prepared.options.repair };
    match parse_score_matrix(&response, &run.coder.label(), &codebook, project.corpus()?, opts) {
        Ok(mut m) => {
            m.set_pass_number(prepared.pass_number)?;
            if let Some(prior) = &prepared.prior {
                run.deltas = revision_deltas(prior, &m);
            }
            run.matrix = Some(Coding::Scores(m));
            project.append_run(run)?;
            Ok(prepared.run_id)
        }
        Err(source) => {
            run.status = RunStatus::Failed { error: source.to_string() };
            project.append_run(run)?;
            Err(WorkflowError::Parse { run_id: Some(prepared.run_id), source })
        }
    }
}

/// Pass 1: render, call, parse and persist.
pub fn run_model_coder(project: &mut Project, gateway: &Gateway, spec: &PromptSpec, options: RunOptions) -> Result<String> {
    let prepared = prepare_model_run(project, gateway.config(), spec, options)?;
    let response = gateway.complete(&prepared.prompt);
    finish(project, prepared, response)
}

/// Pass 2 of `parent_id`, with deltas against the parent's scores.
pub fn run_revision_pass(
    project: &mut Project,
    gateway: &Gateway,
    parent_id: &str,
    spec: Option<&PromptSpec>,
    options: RunOptions,
) -> Result<String> {
    let prepared = prepare_revision(project, gateway.config(), parent_id, spec, options)?;
    let response = gateway.complete(&prepared.prompt);
    finish(project, prepared, response)
}

/// Re-parses a stored model run from the response cache alone.
pub fn rederive_run(project: &Project, run_id: &str) -> Result<ScoreMatrix> {
    let run = project.run(run_id)?;
    let (Some(prov), Some(stored)) = (run.provenance.as_ref(), run.scores()) else {
        return Err(WorkflowError::Invalid(format!("run {run_id} is not a completed model run")));
    };
    let cache = ResponseCache::open(project.cache_dir()).map_err(gateway_err(None))?;
    let key = themeloom_gateway::CacheKey::from_hex(&prov.cache_key)
        .ok_or_else(|| WorkflowError::Invalid(format!("run {run_id} has a malformed cache key")))?;
    let entry = cache
        .get(&key)
        .map_err(gateway_err(None))?
        .ok_or_else(|| StoreError::not_found("cached response", prov.cache_key.clone()))?;
    let codebook = project.codebook(run.codebook_version)?;
    let response = RawResponse { text: entry.text, provider_echo: entry.provider_echo, latency_ms: 0, from_cache: true };
    let mut m = parse_score_matrix(&response, stored.coder_id(), codebook, project.corpus()?, ParseOptions { repair: prov.repaired })
        .map_err(|source| WorkflowError::Parse { run_id: None, source })?;
    m.set_pass_number(run.pass_number)?;
    Ok(m)
}

// ---- human coding and consensus ----

pub fn record_human_coding(project: &mut Project, name: &str, matrix: BinaryMatrix) -> Result<String> {
    let name = name.trim();
    if name.is_empty() {
        return Err(WorkflowError::Invalid("coder name is empty".into()));
    }
    let expected = project.dims()?;
    if matrix.dims() != expected {
        return Err(WorkflowError::Dimensions { expected, found: matrix.dims() });
    }
    let run = CodingRun {
        run_id: CodingRun::new_id(),
        coder: Coder::Human { name: name.to_string() },
        pass_number: 1,
        prompt_hash: None,
        parent_run: None,
        codebook_version: project.active_codebook()?.version(),
        created_at: Utc::now(),
        status: RunStatus::Complete,
        matrix: Some(Coding::Binary(matrix)),
        deltas: Vec::new(),
        provenance: None,
        raw_response: None,
    };
    Ok(project.append_run(run)?.run_id.clone())
}

/// Human coding from a `statement,<theme names...>` CSV of 0/1 values.
pub fn import_human_csv(project: &mut Project, name: &str, csv_text: &str) -> Result<String> {
    let m = BinaryMatrix::from_csv(csv_text, name, project.active_codebook()?, project.corpus()?.len())?;
    record_human_coding(project, name, m)
}

/// Human coding from row-major integer values, which must all be 0 or 1.
pub fn record_human_values(project: &mut Project, name: &str, dims: Dims, values: &[i64]) -> Result<String> {
    let expected = project.dims()?;
    if dims != expected {
        return Err(WorkflowError::Dimensions { expected, found: dims });
    }
    let m = BinaryMatrix::from_values(name, dims, values)?;
    record_human_coding(project, name, m)
}

pub fn open_consensus(project: &mut Project, run_ids: &[String]) -> Result<ConsensusSession> {
    let mut inputs = Vec::with_capacity(run_ids.len());
    let mut version = None;
    for id in run_ids {
        let run = project.run(id)?;
        let Some(Coding::Binary(m)) = &run.matrix else {
            return Err(WorkflowError::Invalid(format!("run {id} is not a human coding")));
        };
        if !matches!(run.coder, Coder::Human { .. }) {
            return Err(WorkflowError::Invalid(format!("run {id} is not a human coding")));
        }
        if *version.get_or_insert(run.codebook_version) != run.codebook_version {
            return Err(WorkflowError::Invalid("input runs use different codebook versions".into()));
        }
        inputs.push(m);
    }
    let session = ConsensusSession::open(
        CodingRun::new_id(),
        run_ids.to_vec(),
        version.unwrap_or_default(),
        &inputs,
    )?;
    save_and_emit(project, session)
}

pub fn resolve_cell(project: &mut Project, session_id: &str, cell: Cell, value: bool, rationale: &str) -> Result<ConsensusSession> {
    let mut session = project.session(session_id)?.clone();
    session.resolve(cell, value, rationale)?;
    save_and_emit(project, session)
}

fn save_and_emit(project: &mut Project, mut session: ConsensusSession) -> Result<ConsensusSession> {
    project.save_session(session.clone())?;
    if session.is_complete() && session.consensus_run.is_none() {
        let coder = Coder::Consensus { session_id: session.session_id.clone() };
        let matrix = session.final_matrix(&coder.label())?;
        let run = CodingRun {
            run_id: CodingRun::new_id(),
            coder,
            pass_number: 1,
            prompt_hash: None,
            parent_run: None,
            codebook_version: session.codebook_version,
            created_at: Utc::now(),
            status: RunStatus::Complete,
            matrix: Some(Coding::Binary(matrix)),
            deltas: Vec::new(),
            provenance: None,
            raw_response: None,
        };
        let run_id = project.append_run(run)?.run_id.clone();
        session.consensus_run = Some(run_id);
        project.save_session(session.clone())?;
    }
    Ok(session)
}

// ---- codebooks ----

/// Asks the model for themes and stores them as an unreviewed draft.
pub fn generate_codebook(project: &mut Project, gateway: &Gateway, guidance: &str) -> Result<u64> {
    let prompt = prompter(project)?.build_theme_generation_prompt(project.corpus()?, guidance)?;
    let response = gateway.complete(&prompt).map_err(gateway_err(None))?;
    let themes = parse_theme_list(&response.text)?;
    let version = project.latest_version().unwrap_or(0) + 1;
    let draft = Codebook::draft(version, themes).map_err(|e| WorkflowError::ThemeList {
        message: e.to_string(),
        raw: response.text.clone(),
    })?;
    Ok(project.add_codebook(draft)?)
}

/// Reads `1. Name - description` style lines. Bold markers are stripped and
/// `-`, en dash, em dash or `:` separate name from description.
pub fn parse_theme_list(text: &str) -> Result<Vec<Theme>> {
    let mut themes = Vec::new();
    for line in text.lines() {
        let Some(item) = numbered_item(line.trim()) else { continue };
        let item = item.replace("**", "");
        let (name, description) = split_description(item.trim());
        if name.is_empty() {
            continue;
        }
        themes.push(Theme { id: themes.len() as u32 + 1, name, description });
    }
    if themes.len() < 2 {
        return Err(WorkflowError::ThemeList {
            message: format!("found {} numbered theme(s), need at least 2", themes.len()),
            raw: text.to_string(),
        });
    }
    Ok(themes)
}

fn numbered_item(line: &str) -> Option<&str> {
    let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits == 0 {
        return None;
    }
    let rest = line[digits..].strip_prefix(['.', ')'])?;
    rest.starts_with(char::is_whitespace).then(|| rest.trim())
}

fn split_description(item: &str) -> (String, Option<String>) {
    let cut = [" - ", " \u{2013} ", " \u{2014} ", ": "]
        .iter()
        .filter_map(|sep| item.find(sep).map(|i| (i, sep.len())))
        .min();
    match cut {
        Some((i, len)) => {
            let desc = item[i + len..].trim();
            (item[..i].trim().to_string(), (!desc.is_empty()).then(|| desc.to_string()))
        }
        None => (item.trim().to_string(), None),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ThemeEdit {
    Rename { id: u32, name: String },
    Describe { id: u32, description: Option<String> },
    Add { name: String, description: Option<String> },
}

/// Applies edits to a draft and stores the result as a newer draft.
pub fn edit_draft(project: &mut Project, version: u64, edits: &[ThemeEdit]) -> Result<u64> {
    let mut cb = project.codebook(version)?.clone();
    if !cb.is_draft() {
        return Err(WorkflowError::Invalid(format!("codebook version {version} is not a draft")));
    }
    for edit in edits {
        match edit {
            ThemeEdit::Rename { id, name } => cb.rename_theme(*id, name.clone())?,
            ThemeEdit::Describe { id, description } => cb.set_description(*id, description.clone())?,
            ThemeEdit::Add { name, description } => {
                cb.add_theme(name.clone(), description.clone())?;
            }
        }
    }
    let floor = project.latest_version().unwrap_or(0) + 1;
    if cb.version() < floor {
        cb.bump_to(floor)?;
    }
    Ok(project.add_codebook(cb)?)
}

// ---- reflections ----

pub fn attach_reflection(project: &mut Project, deck: &Deck, card_id: u32, prompt_hash: &str, note: &str) -> Result<Reflection> {
    let card = deck.card(card_id).ok_or_else(|| StoreError::not_found("card", card_id.to_string()))?;
    let reflection = Reflection::new(card, prompt_hash, note)?;
    project.append_reflection(reflection.clone())?;
    Ok(reflection)
}

// ---- analysis over stored runs ----

fn completed_coding<'a>(project: &'a Project, run_id: &str) -> Result<&'a Coding> {
    project
        .run(run_id)?
        .matrix
        .as_ref()
        .ok_or_else(|| WorkflowError::Invalid(format!("run {run_id} failed and has no matrix")))
}

pub fn agreement(project: &Project, a: &str, b: &str, tau: Threshold) -> Result<AgreementReport> {
    Ok(AgreementReport::compute(completed_coding(project, a)?, completed_coding(project, b)?, tau)?)
}

/// Thresholds `from, from+step, ..` up to and including `to`.
pub fn threshold_grid(from: Threshold, to: Threshold, step: u8) -> Result<Vec<Threshold>> {
    if step == 0 {
        return Err(WorkflowError::Invalid("step must be positive".into()));
    }
    if from > to {
        return Err(WorkflowError::Invalid(format!("from {} exceeds to {}", from.value(), to.value())));
    }
    (from.value()..=to.value())
        .step_by(step as usize)
        .map(|v| Threshold::new(v as i64).map_err(WorkflowError::from))
        .collect()
}

/// Sweeps a scored run against a reference, which is binarized at each
/// threshold too when it is itself scored.
pub fn sweep(project: &Project, run: &str, reference: &str, grid: &[Threshold], exec: Exec) -> Result<Vec<SweepPoint>> {
    let Coding::Scores(scores) = completed_coding(project, run)? else {
        return Err(WorkflowError::Invalid(format!("run {run} has no scores to threshold")));
    };
    match completed_coding(project, reference)? {
        Coding::Binary(reference) => Ok(threshold_sweep_with(exec, scores, reference, grid)?),
        other => {
            let mut out = Vec::with_capacity(grid.len());
            for &tau in grid {
                out.extend(threshold_sweep_with(Exec::Sequential, scores, &other.binary_at(tau), &[tau])?);
            }
            Ok(out)
        }
    }
}

// ---- exports ----

#[derive(Debug, Clone, Serialize)]
pub struct RunExport<'a> {
    pub run_id: &'a str,
    pub coder: &'a Coder,
    pub coder_label: String,
    pub pass_number: u8,
    pub prompt_hash: Option<&'a str>,
    pub parent_run: Option<&'a str>,
    pub codebook_version: u64,
    pub created_at: chrono::DateTime<Utc>,
    pub status: &'a RunStatus,
    /// Relative to the project root; absent for failed runs.
    pub matrix_csv: Option<String>,
    pub raw_response: Option<String>,
    pub justifications: Vec<JustificationExport>,
    pub deltas: &'a [crate::run::RevisionDelta],
    pub unjustified_changes: usize,
    pub provenance: Option<&'a MachineProvenance>,
}

#[derive(Debug, Clone, Serialize)]
pub struct JustificationExport {
    pub statement: u32,
    pub theme: u32,
    pub theme_name: String,
    pub text: String,
}

pub fn export_run<'a>(project: &'a Project, run_id: &str) -> Result<RunExport<'a>> {
    let run = project.run(run_id)?;
    let codebook = project.codebook(run.codebook_version)?;
    let justifications = run
        .scores()
        .map(|m| {
            m.justifications()
                .iter()
                .map(|n| JustificationExport {
                    statement: n.cell.statement,
                    theme: n.cell.theme,
                    theme_name: codebook.theme(n.cell.theme).map(|t| t.name.clone()).unwrap_or_default(),
                    text: n.text.clone(),
                })
                .collect()
        })
        .unwrap_or_default();
    let dir = format!("runs/{}", run.run_id);
    Ok(RunExport {
        run_id: &run.run_id,
        coder: &run.coder,
        coder_label: run.coder.label(),
        pass_number: run.pass_number,
        prompt_hash: run.prompt_hash.as_deref(),
        parent_run: run.parent_run.as_deref(),
        codebook_version: run.codebook_version,
        created_at: run.created_at,
        status: &run.status,
        matrix_csv: run.matrix.is_some().then(|| format!("{dir}/matrix.csv")),
        raw_response: run.raw_response.is_some().then(|| format!("{dir}/raw_response.txt")),
        justifications,
        deltas: &run.deltas,
        unjustified_changes: run.deltas.iter().filter(|d| !d.is_justified()).count(),
        provenance: run.provenance.as_ref(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectExport<'a> {
    pub label: &'a str,
    pub schema_version: u32,
    pub active_codebook: Option<u64>,
    pub codebooks: Vec<&'a Codebook>,
    pub approvals: &'a [crate::store::Approval],
    pub runs: Vec<RunExport<'a>>,
    pub consensus_sessions: Vec<&'a ConsensusSession>,
    pub reflections: &'a [Reflection],
}

pub fn export_project(project: &Project) -> Result<ProjectExport<'_>> {
    Ok(ProjectExport {
        label: project.label(),
        schema_version: project.schema_version(),
        active_codebook: project.active_version(),
        codebooks: project.codebooks().collect(),
        approvals: project.approvals(),
        runs: project.runs().iter().map(|r| export_run(project, &r.run_id)).collect::<Result<_>>()?,
        consensus_sessions: project.sessions().collect(),
        reflections: project.reflections(),
    })
}
