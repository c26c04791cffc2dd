//! Command-line experiment runner for two-state Hamiltonian identification:
//! single-axis characterization, the two-axis protocol, Monte Carlo coverage
//! studies and the shot-count scaling sweep.
//!
//! Every command is a pure function of its [`config::ExperimentConfig`]; trial
//! seeds are derived from the master seed and the trial index, so output is
//! byte-identical whatever the worker count.

pub mod config;
pub mod experiment;
pub mod report;

pub use config::{ExperimentConfig, Mode};
pub use experiment::run_command;
pub use report::{Format, Report};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] hamid_core::Error),
    #[error("{0}")]
    FitFailed(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Machine-readable error name.
    pub fn name(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "ConfigError",
            HarnessError::Core(e) => e.name(),
            HarnessError::FitFailed(_) => "FitFailed",
            HarnessError::Io(_) => "IoError",
        }
    }

    /// 2 config, 3 degenerate signal, 4 fit failure, 1 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Core(e) if e.is_degenerate() => 3,
            HarnessError::Core(_) => 2,
            HarnessError::FitFailed(_) => 4,
            HarnessError::Io(_) => 1,
        }
    }
}

/// Runs `f` on a pool of `workers` threads, or rayon's default pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
