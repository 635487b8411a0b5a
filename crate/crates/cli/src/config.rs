use std::fs;
use std::path::PathBuf;

use clap::Args;
use polyharm_core::growth::ProfileConfig;
use polyharm_core::removability::{corpus, CorpusEntry, PipelineConfig, Theorem};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Flags shared by every subcommand; each overrides the `--config` file.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML file with any of the keys below (kebab-case).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Polyharmonic order.
    #[arg(long)]
    pub m: Option<usize>,
    /// Dimension.
    #[arg(long)]
    pub n: Option<usize>,
    /// `gamma`, a corpus name, or a field spec such as "x1^3 - 2*r^2".
    #[arg(long)]
    pub field: Option<String>,
    /// T1 or T2.
    #[arg(long, value_parser = parse_theorem)]
    pub theorem: Option<Theorem>,
    /// Sphere quadrature level for traces and kernel checks.
    #[arg(long)]
    pub level: Option<usize>,
    /// Base finite-difference step.
    #[arg(long = "fd-step")]
    pub fd_step: Option<f64>,
    /// Residual tolerance relative to the largest trace.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Number of interior residual samples.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Largest profile radius.
    #[arg(long)]
    pub r0: Option<f64>,
    /// Number of dyadic profile radii.
    #[arg(long)]
    pub radii: Option<usize>,
    /// Seed for randomized sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for verdict.json and CSV reports.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn parse_theorem(s: &str) -> Result<Theorem, String> {
    match s.to_ascii_uppercase().as_str() {
        "T1" => Ok(Theorem::T1),
        "T2" => Ok(Theorem::T2),
        _ => Err(format!("unknown theorem '{s}' (expected T1 or T2)")),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    m: Option<usize>,
    n: Option<usize>,
    field: Option<String>,
    theorem: Option<String>,
    level: Option<usize>,
    fd_step: Option<f64>,
    tol: Option<f64>,
    samples: Option<usize>,
    r0: Option<f64>,
    radii: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

/// Fully resolved parameters, embedded in every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub m: usize,
    pub n: usize,
    pub field: Option<String>,
    pub theorem: Theorem,
    pub level: usize,
    pub fd_step: f64,
    pub tol: f64,
    pub samples: usize,
    pub r0: f64,
    pub radii: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(command: &str, args: &RunArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
                toml::from_str::<FileConfig>(&text)
                    .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let file_theorem = file.theorem.as_deref().map(parse_theorem).transpose().map_err(CliError::Usage)?;
        let field = args.field.clone().or(file.field);
        let entry = field.as_deref().and_then(corpus_entry);
        let defaults = PipelineConfig::new(
            entry.as_ref().map_or(Theorem::T1, |e| e.theorem),
            entry.as_ref().map_or(2, |e| e.m),
            entry.as_ref().map_or(3, |e| e.n),
        );
        let profile = ProfileConfig::default();
        let cfg = RunConfig {
            command: command.to_string(),
            m: args.m.or(file.m).unwrap_or(defaults.m),
            n: args.n.or(file.n).unwrap_or(defaults.n),
            field,
            theorem: args.theorem.or(file_theorem).unwrap_or(defaults.theorem),
            level: args.level.or(file.level).unwrap_or(defaults.level),
            fd_step: args.fd_step.or(file.fd_step).unwrap_or(defaults.fd_step),
            tol: args.tol.or(file.tol).unwrap_or(defaults.tol),
            samples: args.samples.or(file.samples).unwrap_or(defaults.samples),
            r0: args.r0.or(file.r0).unwrap_or(profile.r0),
            radii: args.radii.or(file.radii).unwrap_or(profile.count),
            seed: args.seed.or(file.seed).unwrap_or(0),
            out: args.out.clone().or(file.out),
        };
        cfg.pipeline().validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn profile(&self) -> ProfileConfig {
        ProfileConfig {
            r0: self.r0,
            count: self.radii,
            ..ProfileConfig::default()
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            theorem: self.theorem,
            m: self.m,
            n: self.n,
            level: self.level,
            fd_step: self.fd_step,
            tol: self.tol,
            samples: self.samples,
            profile: self.profile(),
        }
    }

    /// The pipeline config for a corpus entry, with this run's numerics.
    pub fn pipeline_for(&self, e: &CorpusEntry) -> PipelineConfig {
        PipelineConfig {
            theorem: e.theorem,
            m: e.m,
            n: e.n,
            ..self.pipeline()
        }
    }

    pub fn require_field(&self) -> Result<&str, CliError> {
        self.field
            .as_deref()
            .ok_or_else(|| CliError::Usage(format!("{} needs --field", self.command)))
    }
}

pub fn corpus_entry(name: &str) -> Option<CorpusEntry> {
    corpus().into_iter().find(|e| e.name == name)
}
