//! The `annotate` command line.
//!
//! Exit codes: 0 success, 1 validation findings, 2 usage error, 3 I/O or
//! parse failure. Data goes to stdout, diagnostics to stderr.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use crate::collab::{http, Hub, HubConfig};
use crate::gridview::{group_by, GroupKey};
use crate::model::{Anchor, Attribute, Media, Project};
use crate::serialization::{self, ImportError, ImportOptions, LoadError};
use crate::timeline::{diarisation_stats, file_segments};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Findings = 1,
    Usage = 2,
    Failure = 3,
}

impl From<ExitStatus> for ExitCode {
    fn from(s: ExitStatus) -> Self {
        ExitCode::from(s as u8)
    }
}

#[derive(Debug, Parser)]
#[command(name = "annotate", version, about = "Validate, convert, summarize and serve annotation projects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a project file; prints one line per violation, or OK.
    Validate { project: PathBuf },
    /// Convert a project to CSV (or canonical JSON).
    Export {
        #[arg(long, value_enum)]
        format: Format,
        project: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Append the rows of an exported CSV to a project.
    Import {
        csv: PathBuf,
        #[arg(long)]
        into: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Fail on any row error or auto-created attribute/file.
        #[arg(long)]
        strict: bool,
    },
    /// Count entries, optionally per value of one attribute.
    Stats {
        project: PathBuf,
        /// Attribute name or id.
        #[arg(long)]
        by: Option<String>,
    },
    /// Run the collaboration service.
    Serve {
        #[arg(long)]
        port: u16,
        #[arg(long, env = "ANNOTATE_DATA_DIR")]
        data: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Accepted operations between two snapshots.
        #[arg(long, default_value_t = 100)]
        snapshot_interval: u64,
    },
}

struct Failure {
    status: ExitStatus,
    lines: Vec<String>,
}

impl Failure {
    fn new(status: ExitStatus, msg: impl Into<String>) -> Self {
        Failure {
            status,
            lines: vec![msg.into()],
        }
    }
}

type CmdResult = Result<ExitStatus, Failure>;

pub fn main() -> ExitCode {
    run(std::env::args_os()).into()
}

pub fn run<I, T>(args: I) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitStatus::Usage
            } else {
                ExitStatus::Success
            };
        }
    };
    let result = match cli.command {
        Command::Validate { project } => validate(&project),
        Command::Export { format, project, output } => export(format, &project, output.as_deref()),
        Command::Import {
            csv,
            into,
            output,
            strict,
        } => import(&csv, &into, output.as_deref(), strict),
        Command::Stats { project, by } => stats(&project, by.as_deref()),
        Command::Serve {
            port,
            data,
            host,
            snapshot_interval,
        } => serve(SocketAddr::new(host, port), data, snapshot_interval),
    };
    match result {
        Ok(status) => status,
        Err(f) => {
            for line in f.lines {
                eprintln!("annotate: {line}");
            }
            f.status
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::new(ExitStatus::Failure, format!("{}: {e}", path.display())))
}

fn emit(output: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    let result = match output {
        Some(path) => std::fs::write(path, bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush())
        }
    };
    result.map_err(|e| Failure::new(ExitStatus::Failure, format!("write failed: {e}")))
}

fn load_error(path: &Path, e: LoadError) -> Failure {
    match e {
        LoadError::InvalidProject(violations) => Failure {
            status: ExitStatus::Findings,
            lines: std::iter::once(format!("{}: invalid project", path.display()))
                .chain(violations.iter().map(ToString::to_string))
                .collect(),
        },
        other => Failure::new(ExitStatus::Failure, format!("{}: {other}", path.display())),
    }
}

fn load(path: &Path) -> Result<Project, Failure> {
    let bytes = read(path)?;
    let loaded = serialization::load_project(&bytes).map_err(|e| load_error(path, e))?;
    for w in &loaded.warnings {
        eprintln!("annotate: {}: ignored unknown key {w}", path.display());
    }
    Ok(loaded.project)
}

fn validate(path: &Path) -> CmdResult {
    let bytes = read(path)?;
    let parsed = serialization::parse_project(&bytes).map_err(|e| load_error(path, e))?;
    for w in &parsed.warnings {
        eprintln!("annotate: {}: ignored unknown key {w}", path.display());
    }
    let mut violations = parsed.duplicates;
    violations.extend(parsed.project.validate());
    let mut out = String::new();
    if violations.is_empty() {
        out.push_str("OK\n");
    }
    for v in &violations {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    emit(None, out.as_bytes())?;
    Ok(if violations.is_empty() {
        ExitStatus::Success
    } else {
        ExitStatus::Findings
    })
}

fn export(format: Format, path: &Path, output: Option<&Path>) -> CmdResult {
    let project = load(path)?;
    let bytes = match format {
        Format::Csv => serialization::export_csv(&project),
        Format::Json => serialization::save_project(&project),
    }
    .expect("loaded projects are valid");
    emit(output, &bytes)?;
    Ok(ExitStatus::Success)
}

fn import(csv: &Path, into: &Path, output: Option<&Path>, strict: bool) -> CmdResult {
    let project = load(into)?;
    let doc = read(csv)?;
    let outcome = match serialization::import_csv(&doc, &project, ImportOptions { strict }) {
        Ok(o) => o,
        Err(ImportError::HeaderMismatch) => {
            return Err(Failure::new(
                ExitStatus::Failure,
                format!("{}: {}", csv.display(), ImportError::HeaderMismatch),
            ))
        }
        Err(ImportError::Rows(errors)) => {
            return Err(Failure {
                status: ExitStatus::Findings,
                lines: errors.iter().map(|e| format!("{}: {e}", csv.display())).collect(),
            })
        }
        Err(ImportError::Warnings(warnings)) => {
            return Err(Failure {
                status: ExitStatus::Findings,
                lines: warnings.iter().map(|w| format!("{}: {w}", csv.display())).collect(),
            })
        }
        Err(ImportError::InvalidProject(v)) => return Err(load_error(into, LoadError::InvalidProject(v))),
    };
    for e in &outcome.row_errors {
        eprintln!("annotate: {}: skipped {e}", csv.display());
    }
    for w in &outcome.warnings {
        eprintln!("annotate: {}: {w}", csv.display());
    }
    let bytes = serialization::save_project(&outcome.project).expect("imports keep projects valid");
    emit(output, &bytes)?;
    Ok(ExitStatus::Success)
}

fn resolve_attribute<'p>(project: &'p Project, key: &str) -> Result<&'p Attribute, Failure> {
    if let Some(attr) = project.attribute(key) {
        return Ok(attr);
    }
    let named: Vec<&Attribute> = project.attributes().values().filter(|a| a.name == key).collect();
    match named.as_slice() {
        [one] => Ok(one),
        [] => Err(Failure::new(ExitStatus::Usage, format!("unknown attribute {key:?}"))),
        many => Err(Failure::new(
            ExitStatus::Usage,
            format!(
                "attribute name {key:?} is ambiguous; use one of the ids {}",
                many.iter().map(|a| a.aid.as_str()).collect::<Vec<_>>().join(", ")
            ),
        )),
    }
}

fn seconds(x: f64) -> String {
    format!("{}", (x * 1e6).round() / 1e6)
}

fn stats(path: &Path, by: Option<&str>) -> CmdResult {
    let project = load(path)?;
    let mut out = String::new();
    match by {
        None => {
            out.push_str("anchor\tcount\n");
            for anchor in [Anchor::File, Anchor::SpatialRegion, Anchor::TemporalSegment] {
                let n = project.metadata().values().filter(|e| e.anchor() == anchor).count();
                if n > 0 {
                    out.push_str(&format!("{anchor}\t{n}\n"));
                }
            }
        }
        Some(key) => {
            let attr = resolve_attribute(&project, key)?;
            let groups = group_by(&project, &attr.aid).expect("attribute exists");
            let temporal = attr.anchor == Anchor::TemporalSegment;
            let mut totals: BTreeMap<Option<String>, f64> = BTreeMap::new();
            if temporal {
                for file in project.files().values().filter(|f| f.media != Media::Image) {
                    let segs = file_segments(&project, file.fid.as_str(), Some(&attr.aid));
                    let duration = file
                        .duration
                        .unwrap_or_else(|| segs.iter().map(|s| s.end).fold(0.0, f64::max));
                    let per_label = diarisation_stats(&segs, duration).map_err(|e| {
                        Failure::new(ExitStatus::Findings, format!("{}: {}", file.uri, e))
                    })?;
                    for (label, s) in per_label {
                        *totals.entry(label).or_default() += s.total;
                    }
                }
                out.push_str("value\tcount\tseconds\n");
            } else {
                out.push_str("value\tcount\n");
            }
            for g in &groups {
                let label = g.key.value().map(|v| attr.display_value(v));
                let shown = match (&g.key, &label) {
                    (GroupKey::Unset, _) | (_, None) => "(unset)".to_owned(),
                    (_, Some(l)) => l.clone(),
                };
                if temporal {
                    let secs = totals.get(&label).copied().unwrap_or(0.0);
                    out.push_str(&format!("{shown}\t{}\t{}\n", g.members.len(), seconds(secs)));
                } else {
                    out.push_str(&format!("{shown}\t{}\n", g.members.len()));
                }
            }
        }
    }
    emit(None, out.as_bytes())?;
    Ok(ExitStatus::Success)
}

fn serve(addr: SocketAddr, data: PathBuf, snapshot_interval: u64) -> CmdResult {
    let _ = tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .try_init();
    let hub = Hub::open(HubConfig {
        data_dir: Some(data.clone()),
        snapshot_interval,
    })
    .map_err(|e| Failure::new(ExitStatus::Failure, format!("{}: {e}", data.display())))?;
    let hub = Arc::new(hub);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::new(ExitStatus::Failure, format!("runtime: {e}")))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::new(ExitStatus::Failure, format!("cannot bind {addr}: {e}")))?;
        let local = listener
            .local_addr()
            .map_err(|e| Failure::new(ExitStatus::Failure, e.to_string()))?;
        eprintln!("annotate: listening on http://{local}");
        http::serve(listener, hub.clone(), shutdown_signal())
            .await
            .map_err(|e| Failure::new(ExitStatus::Failure, format!("server: {e}")))
    })?;
    hub.flush()
        .map_err(|e| Failure::new(ExitStatus::Failure, format!("final snapshot: {e}")))?;
    eprintln!("annotate: stopped");
    Ok(ExitStatus::Success)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
