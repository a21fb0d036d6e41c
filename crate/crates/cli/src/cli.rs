use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use themeloom_core::cards::{load_deck, Category};
use themeloom_core::corpus::{load_codebook, load_corpus};
use themeloom_core::matrix::Cell;
use themeloom_core::{fixtures, Deck, Exec, Modifier, PromptSpec, Threshold};
use themeloom_workbench::workflow::{self, project_gateway, RunOptions, ThemeEdit};
use themeloom_workbench::{Project, RunStatus};

use crate::error::CliError;
use crate::provider::ProviderArgs;

#[derive(Debug, Parser)]
#[command(name = "themeloom", version, about = "Thematic analysis workbench: machine and human coding, agreement, consensus")]
pub struct Cli {
    /// Project directory
    #[arg(long, global = true, env = "THEMELOOM_PROJECT", default_value = ".")]
    pub project: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a project in an empty or absent directory
    Init {
        #[arg(long, default_value = "project")]
        label: String,
    },
    /// Store the corpus (JSON array of statements)
    ImportCorpus { file: PathBuf },
    /// Store a codebook as a new version
    ImportCodebook {
        file: PathBuf,
        /// Store as an unreviewed draft instead of activating it
        #[arg(long)]
        draft: bool,
    },
    /// Ask a model for themes; stored as a draft codebook
    GenThemes {
        #[command(flatten)]
        provider: ProviderArgs,
        #[arg(long, default_value = "")]
        guidance: String,
        #[arg(long, conflicts_with = "guidance")]
        guidance_file: Option<PathBuf>,
    },
    /// Pass-1 model coding run
    Code {
        #[command(flatten)]
        provider: ProviderArgs,
        #[command(flatten)]
        spec: SpecArgs,
        /// Collapse whitespace when matching theme names in the response
        #[arg(long)]
        repair: bool,
    },
    /// Pass-2 revision of a model run
    Revise {
        #[arg(long)]
        run: String,
        #[command(flatten)]
        provider: ProviderArgs,
        #[arg(long)]
        repair: bool,
    },
    /// Record a human coding from a 0/1 CSV (statement column plus theme names)
    HumanImport {
        #[arg(long)]
        name: String,
        file: PathBuf,
    },
    /// Consensus sessions over human codings
    Consensus {
        #[command(subcommand)]
        action: ConsensusCommand,
    },
    /// Agreement report for two runs
    Agree {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long, allow_negative_numbers = true)]
        tau: i64,
    },
    /// Agreement of a scored run against a reference over a threshold grid
    Sweep {
        #[arg(long)]
        run: String,
        #[arg(long = "ref")]
        reference: String,
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        from: i64,
        #[arg(long, default_value_t = 100, allow_negative_numbers = true)]
        to: i64,
        #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
        step: i64,
        /// Evaluate thresholds one after another
        #[arg(long)]
        sequential: bool,
    },
    /// JSON export of a run, a consensus session or the whole project
    Export {
        #[arg(long, conflicts_with = "session")]
        run: Option<String>,
        #[arg(long)]
        session: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List runs
    Runs,
    /// Reflexivity cards
    Cards {
        #[command(subcommand)]
        action: CardsCommand,
    },
    /// Codebook versions
    Codebook {
        #[command(subcommand)]
        action: CodebookCommand,
    },
    /// Serve the HTTP API
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Directory holding a built UI bundle
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Concurrent background model runs
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct SpecArgs {
    /// Study context placed before the instructions
    #[arg(long, default_value = "")]
    pub context: String,
    #[arg(long)]
    pub sceptical: bool,
    #[arg(long)]
    pub parsimonious: bool,
}

impl SpecArgs {
    pub fn to_spec(&self) -> PromptSpec {
        let mut spec = PromptSpec { context_preamble: self.context.clone(), ..PromptSpec::default() };
        if self.sceptical {
            spec = spec.with_modifier(Modifier::Sceptical);
        }
        if self.parsimonious {
            spec = spec.with_modifier(Modifier::Parsimonious);
        }
        spec
    }
}

#[derive(Debug, Subcommand)]
pub enum ConsensusCommand {
    /// Open a session over two or more human runs
    Open {
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        runs: Vec<String>,
    },
    /// Resolve one disputed cell
    Resolve {
        #[arg(long)]
        session: String,
        #[arg(long)]
        statement: u32,
        #[arg(long)]
        theme: u32,
        #[arg(long)]
        value: u8,
        #[arg(long)]
        rationale: String,
    },
    Show {
        #[arg(long)]
        session: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum CardsCommand {
    /// Seeded draw, optionally from one category
    Draw {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        category: Option<String>,
        /// Deck file; defaults to the project's cards.json, then the shipped deck
        #[arg(long)]
        deck: Option<PathBuf>,
    },
    /// Attach a reflection note to a prompt version
    Reflect {
        #[arg(long)]
        card: u32,
        #[arg(long)]
        prompt_hash: String,
        #[arg(long)]
        note: String,
        #[arg(long)]
        deck: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum CodebookCommand {
    List,
    /// Approve a draft; the result becomes the active codebook
    Approve { version: u64 },
    /// Rename a theme in a draft, storing a newer draft
    Rename {
        version: u64,
        #[arg(long)]
        theme: u32,
        #[arg(long)]
        name: String,
    },
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                1
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match dispatch(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

fn io(e: std::io::Error) -> CliError {
    CliError::system(e.to_string())
}

fn threshold(v: i64) -> Result<Threshold, CliError> {
    Threshold::new(v).map_err(|e| CliError::user(e.to_string()))
}

fn open(root: &Path) -> Result<Project, CliError> {
    Ok(Project::load(root)?)
}

pub fn project_deck(root: &Path, explicit: Option<&Path>) -> Result<Deck, String> {
    let local = root.join("cards.json");
    match explicit {
        Some(p) => load_deck(p).map_err(|e| e.to_string()),
        None if local.is_file() => load_deck(&local).map_err(|e| e.to_string()),
        None => Ok(fixtures::deck()),
    }
}

fn json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let root = cli.project.as_path();
    match cli.command {
        Command::Init { label } => {
            Project::init(root, &label)?;
            writeln!(out, "initialized {}", root.display()).map_err(io)?;
        }
        Command::ImportCorpus { file } => {
            let corpus = load_corpus(&file).map_err(|e| CliError::user(e.to_string()))?;
            let mut p = open(root)?;
            let _lock = p.lock()?;
            let n = corpus.len();
            p.set_corpus(corpus)?;
            writeln!(out, "imported {n} statements").map_err(io)?;
        }
        Command::ImportCodebook { file, draft } => {
            let mut cb = load_codebook(&file).map_err(|e| CliError::user(e.to_string()))?;
            let mut p = open(root)?;
            let _lock = p.lock()?;
            if draft && !cb.is_draft() {
                cb = themeloom_core::Codebook::draft(cb.version(), cb.themes().to_vec()).expect("themes already validated");
            }
            let floor = p.latest_version().unwrap_or(0) + 1;
            if cb.version() < floor {
                cb.bump_to(floor).map_err(|e| CliError::user(e.to_string()))?;
            }
            let v = p.add_codebook(cb)?;
            let state = if p.active_version() == Some(v) { "active" } else { "draft" };
            writeln!(out, "stored codebook version {v} ({state})").map_err(io)?;
        }
        Command::GenThemes { provider, guidance, guidance_file } => {
            let guidance = match guidance_file {
                Some(path) => std::fs::read_to_string(&path).map_err(|e| CliError::user(format!("{}: {e}", path.display())))?,
                None => guidance,
            };
            let config = provider.to_config().map_err(CliError::user)?;
            let mut p = open(root)?;
            let _lock = p.lock()?;
            let gw = project_gateway(&p, config)?;
            let v = workflow::generate_codebook(&mut p, &gw, &guidance)?;
            let cb = p.codebook(v)?;
            writeln!(out, "draft codebook version {v} with {} themes (unreviewed)", cb.len()).map_err(io)?;
            for t in cb.themes() {
                writeln!(out, "{}. {}", t.id, t.name).map_err(io)?;
            }
        }
        Command::Code { provider, spec, repair } => {
            let config = provider.to_config().map_err(CliError::user)?;
            let mut p = open(root)?;
            let _lock = p.lock()?;
            let gw = project_gateway(&p, config)?;
            let id = workflow::run_model_coder(&mut p, &gw, &spec.to_spec(), RunOptions { repair })?;
            writeln!(out, "{id}").map_err(io)?;
        }
        Command::Revise { run, provider, repair } => {
            let config = provider.to_config().map_err(CliError::user)?;
            let mut p = open(root)?;
            let _lock = p.lock()?;
            let gw = project_gateway(&p, config)?;
            let id = workflow::run_revision_pass(&mut p, &gw, &run, None, RunOptions { repair })?;
            let r = p.run(&id)?;
            let unjustified = r.deltas.iter().filter(|d| !d.is_justified()).count();
            writeln!(out, "{id}").map_err(io)?;
            writeln!(err, "{} changed cells, {unjustified} without justification", r.deltas.len()).map_err(io)?;
        }
        Command::HumanImport { name, file } => {
            let text = std::fs::read_to_string(&file).map_err(|e| CliError::user(format!("{}: {e}", file.display())))?;
            let mut p = open(root)?;
            let _lock = p.lock()?;
            let id = workflow::import_human_csv(&mut p, &name, &text)?;
            writeln!(out, "{id}").map_err(io)?;
        }
        Command::Consensus { action } => {
            let mut p = open(root)?;
            let session = match action {
                ConsensusCommand::Open { runs } => {
                    let _lock = p.lock()?;
                    workflow::open_consensus(&mut p, &runs)?
                }
                ConsensusCommand::Resolve { session, statement, theme, value, rationale } => {
                    let value = match value {
                        0 => false,
                        1 => true,
                        v => return Err(CliError::user(format!("--value must be 0 or 1, got {v}"))),
                    };
                    let _lock = p.lock()?;
                    workflow::resolve_cell(&mut p, &session, Cell::new(statement, theme), value, &rationale)?
                }
                ConsensusCommand::Show { session } => p.session(&session)?.clone(),
            };
            write!(out, "{}", json(&session)).map_err(io)?;
        }
        Command::Agree { a, b, tau } => {
            let tau = threshold(tau)?;
            let p = open(root)?;
            let report = workflow::agreement(&p, &a, &b, tau)?;
            write!(out, "{}", report.to_json()).map_err(io)?;
        }
        Command::Sweep { run, reference, from, to, step, sequential } => {
            let step = u8::try_from(step).map_err(|_| CliError::user(format!("step {step} is outside [1, 100]")))?;
            let grid = workflow::threshold_grid(threshold(from)?, threshold(to)?, step)?;
            let p = open(root)?;
            let exec = if sequential { Exec::Sequential } else { Exec::Parallel };
            let points = workflow::sweep(&p, &run, &reference, &grid, exec)?;
            write!(out, "{}", json(&points)).map_err(io)?;
        }
        Command::Export { run, session, out: path } => {
            let p = open(root)?;
            let text = match (run, session) {
                (Some(id), _) => json(&workflow::export_run(&p, &id)?),
                (None, Some(id)) => json(p.session(&id)?),
                (None, None) => json(&workflow::export_project(&p)?),
            };
            match path {
                Some(path) => std::fs::write(&path, text).map_err(io)?,
                None => write!(out, "{text}").map_err(io)?,
            }
        }
        Command::Runs => {
            let p = open(root)?;
            for r in p.runs() {
                let status = match &r.status {
                    RunStatus::Complete => "complete",
                    RunStatus::Failed { .. } => "failed",
                };
                writeln!(out, "{}\t{}\tpass {}\tcodebook v{}\t{status}", r.run_id, r.coder.label(), r.pass_number, r.codebook_version)
                    .map_err(io)?;
            }
        }
        Command::Cards { action } => match action {
            CardsCommand::Draw { seed, category, deck } => {
                let deck = project_deck(root, deck.as_deref()).map_err(CliError::user)?;
                let category = category
                    .map(|c| Category::parse(&c).ok_or_else(|| CliError::user(format!("unknown category {c:?}; expected Structure, Consequences or Output"))))
                    .transpose()?;
                let card = deck.draw(seed, category).map_err(|e| CliError::user(e.to_string()))?;
                write!(out, "{}", json(card)).map_err(io)?;
            }
            CardsCommand::Reflect { card, prompt_hash, note, deck } => {
                let deck = project_deck(root, deck.as_deref()).map_err(CliError::user)?;
                let mut p = open(root)?;
                let _lock = p.lock()?;
                let r = workflow::attach_reflection(&mut p, &deck, card, &prompt_hash, &note)?;
                write!(out, "{}", json(&r)).map_err(io)?;
            }
        },
        Command::Codebook { action } => {
            let mut p = open(root)?;
            match action {
                CodebookCommand::List => {
                    for cb in p.codebooks() {
                        let state = if p.active_version() == Some(cb.version()) {
                            "active"
                        } else if cb.is_draft() {
                            "draft"
                        } else {
                            "reviewed"
                        };
                        writeln!(out, "v{}\t{} themes\t{state}", cb.version(), cb.len()).map_err(io)?;
                    }
                }
                CodebookCommand::Approve { version } => {
                    let _lock = p.lock()?;
                    let v = p.approve_codebook(version)?;
                    writeln!(out, "approved draft v{version} as active codebook v{v}").map_err(io)?;
                }
                CodebookCommand::Rename { version, theme, name } => {
                    let _lock = p.lock()?;
                    let v = workflow::edit_draft(&mut p, version, &[ThemeEdit::Rename { id: theme, name }])?;
                    writeln!(out, "stored draft v{v}").map_err(io)?;
                }
            }
        }
        Command::Serve { bind, static_dir, workers } => {
            let p = open(root)?;
            let lock = p.lock()?;
            let deck = project_deck(root, None).map_err(CliError::user)?;
            let listener = std::net::TcpListener::bind(&bind).map_err(|e| CliError::system(format!("cannot bind {bind}: {e}")))?;
            let addr = listener.local_addr().map_err(io)?;
            writeln!(err, "serving {} on http://{addr}", root.display()).map_err(io)?;
            let state = crate::api::AppState::new(p, deck, workers.max(1)).map_err(CliError::from)?;
            crate::api::serve_blocking(listener, state, static_dir).map_err(io)?;
            drop(lock);
        }
    }
    Ok(())
}
