//! Command-line driver: builds the artifacts, runs the experiments and writes
//! CSV tables plus one pass/fail line per check.

pub mod commands;
pub mod config;

pub use config::RunConfig;

use dpnls::numcore::csv::fmt17;
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Numerics(#[from] dpnls::Error),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

impl CliError {
    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Groundstate,
    LinopsAudit,
    ProfileBuild,
    LawIntegrate,
    EvolveValidate,
    MinimalMass,
    DefocusingSanity,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Groundstate => "groundstate",
            Command::LinopsAudit => "linops-audit",
            Command::ProfileBuild => "profile-build",
            Command::LawIntegrate => "law-integrate",
            Command::EvolveValidate => "evolve-validate",
            Command::MinimalMass => "minimal-mass",
            Command::DefocusingSanity => "defocusing-sanity",
            Command::Report => "report",
        }
    }
}

/// One run-level assertion.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    /// acceptance criterion number, 0 when the check is auxiliary
    pub criterion: u32,
    pub name: String,
    pub value: f64,
    /// human-readable condition, e.g. "< 1e-7"
    pub threshold: String,
    pub passed: bool,
}

impl Check {
    pub fn new(criterion: u32, name: impl Into<String>, value: f64, threshold: impl Into<String>, passed: bool) -> Self {
        Self { criterion, name: name.into(), value, threshold: threshold.into(), passed }
    }
    pub fn below(criterion: u32, name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(criterion, name, value, format!("< {limit:e}"), value < limit)
    }
    pub fn above(criterion: u32, name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(criterion, name, value, format!("> {limit:e}"), value > limit)
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} [{}] {} = {} ({})", self.criterion, self.name, fmt17(self.value), self.threshold)
    }
}

/// Checks of one command, in the order they were made.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    /// `criterion,check,value,threshold,passed`
    pub fn csv(&self) -> String {
        let mut s = String::from("criterion,check,value,threshold,passed\n");
        for c in &self.checks {
            s.push_str(&format!("{},{},{},{},{}\n", c.criterion, c.name, fmt17(c.value), c.threshold, c.passed));
        }
        s
    }
}

pub(crate) fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(CliError::io(format!("writing {}", path.display())))
}

/// Run one command: artifacts and `summary_<command>.csv` go to the output directory.
pub fn run(command: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    write_file(&dir, &format!("config_{}.toml", command.name()), &cfg.resolved_toml()?)?;
    let out = match command {
        Command::Groundstate => commands::groundstate(cfg)?,
        Command::LinopsAudit => commands::linops_audit(cfg)?,
        Command::ProfileBuild => commands::profile_build(cfg)?,
        Command::LawIntegrate => commands::law_integrate(cfg)?,
        Command::EvolveValidate => commands::evolve_validate(cfg)?,
        Command::MinimalMass => commands::minimal_mass(cfg)?,
        Command::DefocusingSanity => commands::defocusing_sanity(cfg)?,
        Command::Report => return commands::report(cfg),
    };
    write_file(&dir, &format!("summary_{}.csv", command.name()), &out.csv())?;
    Ok(out)
}
