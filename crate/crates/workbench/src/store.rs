//! Durable project directory.
//!
//! ```text
//! manifest.json           index: schema, label, codebook versions, run and session ids
//! corpus.json
//! codebooks/v{n}.json
//! runs/{run_id}/meta.json, matrix.csv, raw_response.txt
//! consensus/{session_id}.json
//! reflections.json
//! cache/                  gateway response cache
//! ```
//!
//! Every file is written to a temporary sibling, synced and renamed into
//! place. A run is acknowledged only once the manifest listing it has been
//! renamed, so an interrupted append leaves at most an unlisted directory.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use themeloom_core::matrix::CellNote;
use themeloom_core::{BinaryMatrix, Codebook, Coding, Corpus, Dims, Reflection, ScoreMatrix, Threshold};

use crate::consensus::ConsensusSession;
use crate::run::{Coder, CodingRun, MachineProvenance, RevisionDelta, RunStatus};

pub const SCHEMA_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const CORPUS: &str = "corpus.json";
const REFLECTIONS: &str = "reflections.json";
const LOCK: &str = ".lock";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{0} exists and is not empty")]
    NotEmpty(PathBuf),
    #[error("{0} is not a project (no manifest.json)")]
    NotAProject(PathBuf),
    #[error("project schema_version {found} is newer than supported version {supported}")]
    UnsupportedSchema { found: u32, supported: u32 },
    #[error("corrupt file {file}: {detail}")]
    Corrupt { file: PathBuf, detail: String },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("integrity violation: {0}")]
    Integrity(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{what} {id} not found")]
    NotFound { what: &'static str, id: String },
    #[error("project is locked by another process ({0}); remove the file if no other process is running")]
    Locked(PathBuf),
    #[error("project has no corpus yet")]
    NoCorpus,
    #[error("project has no active codebook yet")]
    NoCodebook,
}

impl StoreError {
    pub fn not_found(what: &'static str, id: impl Into<String>) -> Self {
        StoreError::NotFound { what, id: id.into() }
    }
}

type Result<T> = std::result::Result<T, StoreError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Approval {
    pub draft_version: u64,
    pub approved_version: u64,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    label: String,
    created_at: DateTime<Utc>,
    has_corpus: bool,
    codebook_versions: Vec<u64>,
    active_codebook: Option<u64>,
    runs: Vec<String>,
    consensus_sessions: Vec<String>,
    #[serde(default)]
    approvals: Vec<Approval>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum MatrixKind {
    Scores,
    Binary,
}

/// `meta.json`: a run without its matrix cells and raw text.
#[derive(Serialize, Deserialize)]
struct RunMeta {
    run_id: String,
    coder: Coder,
    pass_number: u8,
    prompt_hash: Option<String>,
    parent_run: Option<String>,
    codebook_version: u64,
    created_at: DateTime<Utc>,
    status: RunStatus,
    matrix_kind: Option<MatrixKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold_used: Option<Threshold>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    justifications: Vec<CellNote>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    deltas: Vec<RevisionDelta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<MachineProvenance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Project {
    root: PathBuf,
    manifest: Manifest,
    corpus: Option<Corpus>,
    codebooks: BTreeMap<u64, Codebook>,
    runs: Vec<CodingRun>,
    sessions: BTreeMap<String, ConsensusSession>,
    reflections: Vec<Reflection>,
}

impl Project {
    /// Creates the scaffold in an absent or empty directory.
    pub fn init(path: impl AsRef<Path>, label: &str) -> Result<Self> {
        let root = path.as_ref().to_path_buf();
        if root.exists() {
            let mut entries = fs::read_dir(&root).map_err(|e| io_err(&root, e))?;
            if entries.next().is_some() {
                return Err(StoreError::NotEmpty(root));
            }
        }
        for dir in ["codebooks", "runs", "consensus", "cache"] {
            fs::create_dir_all(root.join(dir)).map_err(|e| io_err(&root.join(dir), e))?;
        }
        let project = Self {
            manifest: Manifest {
                schema_version: SCHEMA_VERSION,
                label: label.to_string(),
                created_at: Utc::now(),
                has_corpus: false,
                codebook_versions: Vec::new(),
                active_codebook: None,
                runs: Vec::new(),
                consensus_sessions: Vec::new(),
                approvals: Vec::new(),
            },
            root,
            corpus: None,
            codebooks: BTreeMap::new(),
            runs: Vec::new(),
            sessions: BTreeMap::new(),
            reflections: Vec::new(),
        };
        write_atomic(&project.root.join(REFLECTIONS), b"[]\n")?;
        project.write_manifest(&project.manifest)?;
        Ok(project)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let root = path.as_ref().to_path_buf();
        let manifest_path = root.join(MANIFEST);
        if !manifest_path.is_file() {
            return Err(StoreError::NotAProject(root));
        }
        let raw: serde_json::Value = read_json(&manifest_path)?;
        let found = raw.get("schema_version").and_then(|v| v.as_u64()).ok_or_else(|| StoreError::Corrupt {
            file: manifest_path.clone(),
            detail: "missing field `schema_version`".into(),
        })?;
        if found > SCHEMA_VERSION as u64 {
            return Err(StoreError::UnsupportedSchema { found: found as u32, supported: SCHEMA_VERSION });
        }
        let manifest: Manifest = serde_json::from_value(raw).map_err(|e| corrupt(&manifest_path, e))?;

        let corpus = if manifest.has_corpus {
            let p = root.join(CORPUS);
            let text = read_text(&p)?;
            Some(Corpus::from_json(manifest.label.clone(), &text).map_err(|e| corrupt(&p, e))?)
        } else {
            None
        };
        let mut codebooks = BTreeMap::new();
        for &v in &manifest.codebook_versions {
            let p = codebook_path(&root, v);
            let cb = Codebook::from_json(&read_text(&p)?).map_err(|e| corrupt(&p, e))?;
            if cb.version() != v {
                return Err(corrupt(&p, format!("field `version` is {}, file name says {v}", cb.version())));
            }
            codebooks.insert(v, cb);
        }
        let mut project = Self {
            root,
            manifest,
            corpus,
            codebooks,
            runs: Vec::new(),
            sessions: BTreeMap::new(),
            reflections: Vec::new(),
        };
        for id in project.manifest.runs.clone() {
            let run = project.read_run(&id)?;
            project.check_run(&run).map_err(|e| match e {
                StoreError::Integrity(m) => StoreError::Integrity(format!("run {id}: {m}")),
                other => other,
            })?;
            project.runs.push(run);
        }
        for id in project.manifest.consensus_sessions.clone() {
            let p = project.root.join("consensus").join(format!("{id}.json"));
            let s: ConsensusSession = read_json(&p)?;
            project.sessions.insert(id, s);
        }
        project.reflections = read_json(&project.root.join(REFLECTIONS))?;
        project.check_integrity()?;
        Ok(project)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn label(&self) -> &str {
        &self.manifest.label
    }

    pub fn schema_version(&self) -> u32 {
        self.manifest.schema_version
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.root.join("cache")
    }

    /// Optional prompt template overrides (`coding.txt`, `revision.txt`, `themes.txt`).
    pub fn templates_dir(&self) -> PathBuf {
        self.root.join("templates")
    }

    /// Takes the single-writer lock; released when the guard drops.
    pub fn lock(&self) -> Result<ProjectLock> {
        ProjectLock::acquire(&self.root)
    }

    // ---- corpus and codebooks ----

    pub fn corpus(&self) -> Result<&Corpus> {
        self.corpus.as_ref().ok_or(StoreError::NoCorpus)
    }

    /// Replaces the corpus. Refused once runs exist, since they index it.
    pub fn set_corpus(&mut self, corpus: Corpus) -> Result<()> {
        if !self.runs.is_empty() {
            return Err(StoreError::Conflict("cannot replace the corpus of a project that has runs".into()));
        }
        let corpus = Corpus::new(self.manifest.label.clone(), corpus.statements().to_vec())
            .map_err(|e| StoreError::Integrity(e.to_string()))?;
        write_atomic(&self.root.join(CORPUS), corpus.to_json().as_bytes())?;
        let mut next = self.manifest.clone();
        next.has_corpus = true;
        self.commit(next)?;
        self.corpus = Some(corpus);
        Ok(())
    }

    pub fn codebooks(&self) -> impl Iterator<Item = &Codebook> {
        self.codebooks.values()
    }

    pub fn codebook(&self, version: u64) -> Result<&Codebook> {
        self.codebooks.get(&version).ok_or_else(|| StoreError::not_found("codebook version", version.to_string()))
    }

    pub fn active_version(&self) -> Option<u64> {
        self.manifest.active_codebook
    }

    pub fn active_codebook(&self) -> Result<&Codebook> {
        let v = self.manifest.active_codebook.ok_or(StoreError::NoCodebook)?;
        self.codebook(v)
    }

    pub fn latest_version(&self) -> Option<u64> {
        self.codebooks.keys().next_back().copied()
    }

    pub fn approvals(&self) -> &[Approval] {
        &self.manifest.approvals
    }

    /// Stores a new codebook version. Reviewed codebooks become active;
    /// drafts never replace the active one.
    pub fn add_codebook(&mut self, codebook: Codebook) -> Result<u64> {
        let v = codebook.version();
        if let Some(latest) = self.latest_version() {
            if v <= latest {
                return Err(StoreError::Conflict(format!(
                    "codebook version {v} is not newer than stored version {latest}"
                )));
            }
        }
        write_atomic(&codebook_path(&self.root, v), codebook.to_json().as_bytes())?;
        let mut next = self.manifest.clone();
        next.codebook_versions.push(v);
        if !codebook.is_draft() {
            next.active_codebook = Some(v);
        }
        self.commit(next)?;
        self.codebooks.insert(v, codebook);
        Ok(v)
    }

    /// Approves a stored draft: the approved codebook is stored under a new
    /// version, made active, and the approval is logged.
    pub fn approve_codebook(&mut self, draft_version: u64) -> Result<u64> {
        let draft = self.codebook(draft_version)?;
        if !draft.is_draft() {
            return Err(StoreError::Conflict(format!("codebook version {draft_version} is not a draft")));
        }
        let mut approved = draft.clone();
        approved.approve();
        let floor = self.latest_version().unwrap_or(0) + 1;
        if approved.version() < floor {
            approved.bump_to(floor).map_err(|e| StoreError::Integrity(e.to_string()))?;
        }
        let v = approved.version();
        write_atomic(&codebook_path(&self.root, v), approved.to_json().as_bytes())?;
        let mut next = self.manifest.clone();
        next.codebook_versions.push(v);
        next.active_codebook = Some(v);
        next.approvals.push(Approval { draft_version, approved_version: v, at: Utc::now() });
        self.commit(next)?;
        self.codebooks.insert(v, approved);
        Ok(v)
    }

    /// `(S, K)` for the corpus and the active codebook.
    pub fn dims(&self) -> Result<Dims> {
        Ok(Dims::new(self.corpus()?.len(), self.active_codebook()?.len()))
    }

    pub fn dims_for(&self, codebook_version: u64) -> Result<Dims> {
        Ok(Dims::new(self.corpus()?.len(), self.codebook(codebook_version)?.len()))
    }

    // ---- runs ----

    pub fn runs(&self) -> &[CodingRun] {
        &self.runs
    }

    pub fn run(&self, run_id: &str) -> Result<&CodingRun> {
        self.runs.iter().find(|r| r.run_id == run_id).ok_or_else(|| StoreError::not_found("run", run_id))
    }

    pub fn knows_prompt_hash(&self, hash: &str) -> bool {
        self.runs.iter().any(|r| r.prompt_hash.as_deref() == Some(hash))
    }

    /// Validates and durably records `run`; returns it as stored.
    pub fn append_run(&mut self, mut run: CodingRun) -> Result<&CodingRun> {
        if self.runs.iter().any(|r| r.run_id == run.run_id) {
            return Err(StoreError::Conflict(format!("run {} already exists", run.run_id)));
        }
        let label = run.coder.label();
        match &mut run.matrix {
            Some(Coding::Scores(m)) => m.set_coder_id(label),
            Some(Coding::Binary(m)) => m.set_coder_id(label),
            None => {}
        }
        self.check_run(&run)?;
        self.write_run(&run)?;
        let mut next = self.manifest.clone();
        next.runs.push(run.run_id.clone());
        self.commit(next)?;
        self.runs.push(run);
        Ok(self.runs.last().expect("just pushed"))
    }

    fn check_run(&self, run: &CodingRun) -> Result<()> {
        run.check().map_err(StoreError::Integrity)?;
        let codebook = self.codebooks.get(&run.codebook_version).ok_or_else(|| {
            StoreError::Integrity(format!("run references codebook version {}, which does not exist", run.codebook_version))
        })?;
        let corpus = self.corpus.as_ref().ok_or_else(|| StoreError::Integrity("run recorded before any corpus".into()))?;
        let want = Dims::new(corpus.len(), codebook.len());
        if let Some(m) = &run.matrix {
            if m.dims() != want {
                return Err(StoreError::Integrity(format!("matrix is {}, project is {want}", m.dims())));
            }
        }
        if let Some(parent_id) = &run.parent_run {
            let parent = self
                .runs
                .iter()
                .find(|r| &r.run_id == parent_id)
                .ok_or_else(|| StoreError::Integrity(format!("parent run {parent_id} does not exist")))?;
            if parent.pass_number != 1 || parent.coder != run.coder {
                return Err(StoreError::Integrity(format!("parent run {parent_id} is not a pass-1 run by the same coder")));
            }
        }
        Ok(())
    }

    fn write_run(&self, run: &CodingRun) -> Result<()> {
        let dir = self.root.join("runs").join(&run.run_id);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let codebook = self.codebook(run.codebook_version)?;
        let (kind, threshold_used, justifications, csv) = match &run.matrix {
            Some(Coding::Scores(m)) => {
                (Some(MatrixKind::Scores), None, m.justifications().to_vec(), Some(m.to_csv(codebook)))
            }
            Some(Coding::Binary(m)) => (Some(MatrixKind::Binary), m.threshold_used(), Vec::new(), Some(m.to_csv(codebook))),
            None => (None, None, Vec::new(), None),
        };
        if let Some(csv) = csv {
            let csv = csv.map_err(|e| StoreError::Integrity(e.to_string()))?;
            write_atomic(&dir.join("matrix.csv"), csv.as_bytes())?;
        }
        if let Some(raw) = &run.raw_response {
            write_atomic(&dir.join("raw_response.txt"), raw.as_bytes())?;
        }
        let meta = RunMeta {
            run_id: run.run_id.clone(),
            coder: run.coder.clone(),
            pass_number: run.pass_number,
            prompt_hash: run.prompt_hash.clone(),
            parent_run: run.parent_run.clone(),
            codebook_version: run.codebook_version,
            created_at: run.created_at,
            status: run.status.clone(),
            matrix_kind: kind,
            threshold_used,
            justifications,
            deltas: run.deltas.clone(),
            provenance: run.provenance.clone(),
        };
        write_atomic(&dir.join("meta.json"), to_json(&meta).as_bytes())
    }

    fn read_run(&self, run_id: &str) -> Result<CodingRun> {
        let dir = self.root.join("runs").join(run_id);
        let meta_path = dir.join("meta.json");
        let meta: RunMeta = read_json(&meta_path)?;
        if meta.run_id != run_id {
            return Err(corrupt(&meta_path, format!("field `run_id` is {:?}, directory is {run_id:?}", meta.run_id)));
        }
        let matrix = match meta.matrix_kind {
            None => None,
            Some(kind) => {
                let p = dir.join("matrix.csv");
                let text = read_text(&p)?;
                let codebook = self
                    .codebooks
                    .get(&meta.codebook_version)
                    .ok_or_else(|| corrupt(&meta_path, format!("field `codebook_version` {} is unknown", meta.codebook_version)))?;
                let s = self.corpus.as_ref().map_or(0, Corpus::len);
                let label = meta.coder.label();
                Some(match kind {
                    MatrixKind::Scores => {
                        let mut m = ScoreMatrix::from_csv(&text, label, meta.pass_number, codebook, s)
                            .map_err(|e| corrupt(&p, e))?;
                        m.set_justifications(meta.justifications.clone()).map_err(|e| corrupt(&meta_path, e))?;
                        Coding::Scores(m)
                    }
                    MatrixKind::Binary => {
                        let m = BinaryMatrix::from_csv(&text, label, codebook, s).map_err(|e| corrupt(&p, e))?;
                        Coding::Binary(match meta.threshold_used {
                            Some(t) => m.with_threshold(t),
                            None => m,
                        })
                    }
                })
            }
        };
        let raw_path = dir.join("raw_response.txt");
        let raw_response = match fs::read_to_string(&raw_path) {
            Ok(t) => Some(t),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(io_err(&raw_path, e)),
        };
        Ok(CodingRun {
            run_id: meta.run_id,
            coder: meta.coder,
            pass_number: meta.pass_number,
            prompt_hash: meta.prompt_hash,
            parent_run: meta.parent_run,
            codebook_version: meta.codebook_version,
            created_at: meta.created_at,
            status: meta.status,
            matrix,
            deltas: meta.deltas,
            provenance: meta.provenance,
            raw_response,
        })
    }

    // ---- consensus and reflections ----

    pub fn sessions(&self) -> impl Iterator<Item = &ConsensusSession> {
        self.manifest.consensus_sessions.iter().filter_map(|id| self.sessions.get(id))
    }

    pub fn session(&self, id: &str) -> Result<&ConsensusSession> {
        self.sessions.get(id).ok_or_else(|| StoreError::not_found("consensus session", id))
    }

    pub fn save_session(&mut self, session: ConsensusSession) -> Result<()> {
        for id in &session.input_runs {
            self.run(id).map_err(|_| StoreError::Integrity(format!("session input run {id} does not exist")))?;
        }
        let p = self.root.join("consensus").join(format!("{}.json", session.session_id));
        write_atomic(&p, to_json(&session).as_bytes())?;
        if !self.manifest.consensus_sessions.contains(&session.session_id) {
            let mut next = self.manifest.clone();
            next.consensus_sessions.push(session.session_id.clone());
            self.commit(next)?;
        }
        self.sessions.insert(session.session_id.clone(), session);
        Ok(())
    }

    pub fn reflections(&self) -> &[Reflection] {
        &self.reflections
    }

    pub fn reflections_for(&self, prompt_hash: &str) -> Vec<&Reflection> {
        self.reflections.iter().filter(|r| r.prompt_hash == prompt_hash).collect()
    }

    pub fn append_reflection(&mut self, reflection: Reflection) -> Result<()> {
        if !self.knows_prompt_hash(&reflection.prompt_hash) {
            return Err(StoreError::not_found("prompt hash", reflection.prompt_hash));
        }
        let mut all = self.reflections.clone();
        all.push(reflection);
        write_atomic(&self.root.join(REFLECTIONS), to_json(&all).as_bytes())?;
        self.reflections = all;
        Ok(())
    }

    // ---- internals ----

    fn check_integrity(&self) -> Result<()> {
        if let Some(v) = self.manifest.active_codebook {
            if !self.codebooks.contains_key(&v) {
                return Err(StoreError::Integrity(format!("active codebook version {v} does not exist")));
            }
        }
        for s in self.sessions.values() {
            for id in &s.input_runs {
                if self.run(id).is_err() {
                    return Err(StoreError::Integrity(format!("session {} references missing run {id}", s.session_id)));
                }
            }
        }
        Ok(())
    }

    fn commit(&mut self, next: Manifest) -> Result<()> {
        self.write_manifest(&next)?;
        self.manifest = next;
        Ok(())
    }

    fn write_manifest(&self, manifest: &Manifest) -> Result<()> {
        write_atomic(&self.root.join(MANIFEST), to_json(manifest).as_bytes())
    }
}

/// Exclusive lock file; removed on drop.
#[derive(Debug)]
pub struct ProjectLock {
    path: PathBuf,
}

impl ProjectLock {
    pub fn acquire(root: &Path) -> Result<Self> {
        let path = root.join(LOCK);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(StoreError::Locked(path)),
            Err(e) => Err(io_err(&path, e)),
        }
    }
}

impl Drop for ProjectLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn codebook_path(root: &Path, version: u64) -> PathBuf {
    root.join("codebooks").join(format!("v{version}.json"))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("store types serialize");
    s.push('\n');
    s
}

fn io_err(path: &Path, e: std::io::Error) -> StoreError {
    StoreError::Io { path: path.to_path_buf(), message: e.to_string() }
}

fn corrupt(path: &Path, e: impl std::fmt::Display) -> StoreError {
    StoreError::Corrupt { file: path.to_path_buf(), detail: e.to_string() }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => corrupt(path, "file is missing"),
        _ => io_err(path, e),
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| corrupt(path, e))
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().expect("store paths have a parent");
    let tmp = dir.join(format!(".{}.tmp", path.file_name().and_then(|n| n.to_str()).unwrap_or("file")));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        fs::File::open(dir)?.sync_all()
    };
    write().map_err(|e| io_err(path, e))
}
