//! Shared command plumbing: config loading, output guarding, atomic JSON
//! writes, and the per-run log file.

use std::path::{Path, PathBuf};

use qoe_eeg::config::{ConfigError, RunConfig};
use qoe_eeg::dataset::DatasetError;
use qoe_eeg::dsp::DspError;
use qoe_eeg::fsutil;
use qoe_eeg::ingest::IngestError;
use qoe_eeg::nn::NnError;
use qoe_eeg::plot::PlotError;
use qoe_eeg::train::TrainError;

/// Errors split by exit code: usage problems exit 2, everything that went
/// wrong while doing the work exits 1.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

macro_rules! runtime_from {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )*};
}
runtime_from!(IngestError, DspError, DatasetError, NnError, TrainError, PlotError);

/// State threaded through one subcommand invocation.
pub struct CommandContext {
    pub config: RunConfig,
    pub seed: u64,
    pub force: bool,
    out: PathBuf,
    started: chrono::DateTime<chrono::Utc>,
    log_lines: Vec<String>,
}

fn timestamp(t: chrono::DateTime<chrono::Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string()
}

impl CommandContext {
    pub fn new(
        config_path: Option<&Path>,
        seed: Option<u64>,
        force: bool,
        out: PathBuf,
    ) -> Result<CommandContext, CliError> {
        let config = match config_path {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        std::fs::create_dir_all(&out)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;
        Ok(CommandContext {
            seed: seed.unwrap_or(config.train.seed),
            config,
            force,
            out,
            started: chrono::Utc::now(),
            log_lines: Vec::new(),
        })
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Refuses to clobber existing outputs unless `--force` was given.
    pub fn guard(&self, names: &[&str]) -> Result<(), CliError> {
        if self.force {
            return Ok(());
        }
        for name in names {
            let path = self.out_path(name);
            if path.exists() {
                return Err(CliError::Runtime(format!(
                    "{} already exists; pass --force to overwrite",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    /// Appends a timestamped line to the pending run log.
    pub fn note(&mut self, message: impl AsRef<str>) {
        self.log_lines
            .push(format!("{} {}", timestamp(chrono::Utc::now()), message.as_ref()));
    }

    /// Serializes `value` as pretty JSON with a trailing newline and writes
    /// it atomically under the output directory.
    pub fn write_json<T: serde::Serialize>(
        &mut self,
        name: &str,
        value: &T,
    ) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Runtime(format!("cannot serialize {name}: {e}")))?;
        self.write_bytes(name, format!("{text}\n").as_bytes())
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.out_path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| {
                CliError::Runtime(format!("cannot create {}: {e}", parent.display()))
            })?;
        }
        fsutil::atomic_write(&path, bytes)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.note(format!("wrote {name}"));
        Ok(())
    }

    /// Writes `run.log` and ends the command. The log is the only output
    /// that differs between reruns.
    pub fn finish(mut self, command: &str) -> Result<(), CliError> {
        let elapsed = (chrono::Utc::now() - self.started).as_seconds_f64();
        let mut lines =
            vec![format!("{} start {command} seed={}", timestamp(self.started), self.seed)];
        lines.append(&mut self.log_lines);
        lines.push(format!(
            "{} done {command} ({elapsed:.3} s)",
            timestamp(chrono::Utc::now())
        ));
        let text = lines.join("\n") + "\n";
        fsutil::atomic_write(&self.out_path("run.log"), text.as_bytes())
            .map_err(|e| CliError::Runtime(format!("cannot write run.log: {e}")))?;
        Ok(())
    }
}
