//! Batch front end for the `peakonlab` library: every subcommand writes its
//! CSV/JSON (and optionally SVG) artifacts plus a `manifest.json` with the
//! resolved configuration and SHA-256 checksums.

pub mod commands;
pub mod config;
pub mod format;
pub mod ingest;
pub mod svg;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{Cli, RunConfig};
use crate::format::{json_bytes, obj};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Phase(#[from] peakonlab::phase_plane::PhaseError),
    #[error(transparent)]
    Wave(#[from] peakonlab::wave_builder::WaveError),
    #[error(transparent)]
    Peakon(#[from] peakonlab::peakon_dynamics::PeakonError),
    #[error(transparent)]
    Verify(#[from] peakonlab::weak_verifier::VerifyError),
    #[error(transparent)]
    Curve(#[from] peakonlab::curve_flows::CurveError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Input(_) => "input",
            CliError::Phase(_) => "phase_plane",
            CliError::Wave(_) => "wave_builder",
            CliError::Peakon(_) => "peakon_dynamics",
            CliError::Verify(_) => "weak_verifier",
            CliError::Curve(_) => "curve_flows",
            CliError::Io { .. } => "io",
        }
    }

    pub fn to_json(&self, subcommand: Option<&str>) -> Value {
        obj([
            ("error", self.kind().into()),
            ("message", self.to_string().into()),
            ("exit_code", self.exit_code().into()),
            ("subcommand", subcommand.map(Value::from).unwrap_or(Value::Null)),
        ])
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// A named file produced by a subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: &str, bytes: Vec<u8>) -> Self {
        Self {
            name: name.to_string(),
            bytes,
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub exit_code: i32,
    /// Files written, manifest last.
    pub files: Vec<PathBuf>,
    /// Error JSON, when the run failed.
    pub error: Option<Value>,
}

pub const TOOL: &str = "peakonlab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn sha256_hex(b: &[u8]) -> String {
    Sha256::digest(b).iter().map(|x| format!("{x:02x}")).collect()
}

fn manifest(cfg: &RunConfig, artifacts: &[Artifact], status: &str) -> Vec<u8> {
    let files: Vec<Value> = artifacts
        .iter()
        .map(|a| {
            obj([
                ("name", a.name.clone().into()),
                ("sha256", sha256_hex(&a.bytes).into()),
                ("bytes", a.bytes.len().into()),
            ])
        })
        .collect();
    json_bytes(&obj([
        ("tool", TOOL.into()),
        ("version", VERSION.into()),
        ("subcommand", cfg.task.name().into()),
        ("status", status.into()),
        ("config", cfg.to_json()),
        ("files", Value::Array(files)),
    ]))
}

fn write_all(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out = Vec::new();
    for a in artifacts {
        let p = dir.join(&a.name);
        fs::write(&p, &a.bytes).map_err(|e| CliError::io(&p, e))?;
        out.push(p);
    }
    Ok(out)
}

/// Runs one configuration and writes its artifacts and manifest. Failures
/// are reported in `error.json` (when the directory is writable) and in the
/// returned outcome.
pub fn run(cfg: &RunConfig) -> Outcome {
    let (mut artifacts, status, error) = match commands::dispatch(cfg) {
        Ok(a) => (a, "ok", None),
        Err(e) => {
            let j = e.to_json(Some(cfg.task.name()));
            if let CliError::Io { .. } = e {
                return Outcome {
                    exit_code: e.exit_code(),
                    files: vec![],
                    error: Some(j),
                };
            }
            (vec![Artifact::new("error.json", json_bytes(&j))], "error", Some((e.exit_code(), j)))
        }
    };
    artifacts.sort_by(|a, b| a.name.cmp(&b.name));
    let m = Artifact::new("manifest.json", manifest(cfg, &artifacts, status));
    artifacts.push(m);
    match write_all(&cfg.out, &artifacts) {
        Ok(files) => Outcome {
            exit_code: error.as_ref().map(|e| e.0).unwrap_or(0),
            files,
            error: error.map(|e| e.1),
        },
        Err(e) => Outcome {
            exit_code: e.exit_code(),
            files: vec![],
            error: Some(e.to_json(Some(cfg.task.name()))),
        },
    }
}

/// Entry point shared by the binary and the tests. `env_out` is the value of
/// [`config::OUT_ENV`]. Returns the process exit code.
pub fn main_with<I, T>(args: I, env_out: Option<PathBuf>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            let j = CliError::Config(e.kind().to_string()).to_json(None);
            println!("{}", serde_json::to_string(&j).unwrap_or_default());
            return 1;
        }
    };
    let cfg = match config::resolve(cli, env_out) {
        Ok(c) => c,
        Err(e) => {
            println!("{}", serde_json::to_string(&e.to_json(None)).unwrap_or_default());
            return e.exit_code();
        }
    };
    let out = run(&cfg);
    if let Some(e) = &out.error {
        println!("{}", serde_json::to_string(e).unwrap_or_default());
    }
    out.exit_code
}
