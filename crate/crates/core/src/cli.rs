//! Command-line front end: `envrepair repair <file>` and `envrepair bench <dir>`.
//!
//! Exit codes: 0 fixed (or bench completed), 1 unfixed, 2 usage error, 3 aborted.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{corpus_files, run_corpus, summary_table, BenchConfig};
use crate::dockerfile::{emit, BuildRecipe};
use crate::llm::{Gateway, GenerationConfig, HttpBackend, SimulatedModel, TextBackend, TranscriptBackend, DEFAULT_BACKEND_URL};
use crate::registry::{
    DiskCache, FixtureRegistry, HttpRegistry, RegistrySource, Retriever, DEFAULT_CACHE_TTL, DEFAULT_REGISTRY_URL,
};
use crate::repair::{LoopConfig, RepairStatus, Repairer};
use crate::source::SourceFile;
use crate::validator::{ContainerValidator, SimulatedValidator, ValidatorBackend, World};

pub const EXIT_FIXED: i32 = 0;
pub const EXIT_UNFIXED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ABORTED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "envrepair", version, about = "Find an interpreter and pinned modules that make a Python snippet run")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Repair one file.
    Repair {
        file: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Repair every .py file of a directory, possibly several times.
    Bench {
        dir: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
        runs: u32,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ValidatorChoice {
    Container,
    Simulated,
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(format!("expected true or false, got {other:?}")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct Flags {
    #[arg(long, default_value = "gemma2")]
    pub model: String,
    #[arg(long, default_value_t = 0.7)]
    pub temp: f64,
    #[arg(long = "loop", default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub loop_budget: u32,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(0..=3))]
    pub range: u32,
    #[arg(long, default_value = "true", value_parser = parse_bool, action = clap::ArgAction::Set)]
    pub rag: bool,
    /// Model server URL, or `stub:`, `stub:stochastic`, `transcript:<path>`.
    #[arg(long, env = "ENVREPAIR_BACKEND_URL", default_value = DEFAULT_BACKEND_URL)]
    pub backend_url: String,
    #[arg(long, value_enum, default_value_t = ValidatorChoice::Container)]
    pub validator: ValidatorChoice,
    /// Directory with `world.json` (simulated validator) and optionally `registry/<name>.json`.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    #[arg(long, default_value = "envrepair-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: u64,
    #[arg(long, env = "ENVREPAIR_REGISTRY_URL", default_value = DEFAULT_REGISTRY_URL)]
    pub registry_url: String,
    #[arg(long, env = "ENVREPAIR_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
}

/// A usage problem detected after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl Flags {
    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            loop_budget: self.loop_budget,
            range: self.range,
            rag: self.rag,
            generation: GenerationConfig {
                model_name: self.model.clone(),
                temperature: self.temp,
                seed: self.seed,
            },
            run_id: uuid::Uuid::new_v4().simple().to_string()[..8].to_string(),
            ..LoopConfig::default()
        }
    }

    fn backend(&self) -> Result<Arc<dyn TextBackend>, UsageError> {
        let url = self.backend_url.trim();
        if let Some(rest) = url.strip_prefix("stub:") {
            return match rest {
                "" | "deterministic" => Ok(Arc::new(SimulatedModel::deterministic())),
                "stochastic" => Ok(Arc::new(SimulatedModel::stochastic(0.5))),
                other => match other.strip_prefix("stochastic=").and_then(|p| p.parse::<f64>().ok()) {
                    Some(p) => Ok(Arc::new(SimulatedModel::stochastic(p))),
                    None => Err(UsageError(format!("unknown stub backend {url:?}"))),
                },
            };
        }
        if let Some(path) = url.strip_prefix("transcript:") {
            return TranscriptBackend::load(path)
                .map(|t| Arc::new(t) as Arc<dyn TextBackend>)
                .map_err(|e| UsageError(format!("transcript {path}: {e}")));
        }
        HttpBackend::new(url)
            .map(|b| Arc::new(b) as Arc<dyn TextBackend>)
            .map_err(|e| UsageError(e.to_string()))
    }

    fn world(&self) -> Result<Option<World>, UsageError> {
        match &self.fixtures {
            Some(dir) => {
                let path = dir.join("world.json");
                if path.exists() {
                    World::load(&path).map(Some).map_err(|e| UsageError(e.to_string()))
                } else {
                    Ok(None)
                }
            }
            None => Ok(None),
        }
    }

    fn registry(&self, world: Option<&World>) -> Result<Arc<Retriever>, UsageError> {
        if let Some(dir) = &self.fixtures {
            let reg_dir = dir.join("registry");
            if reg_dir.is_dir() {
                return Ok(Arc::new(Retriever::new(Arc::new(FixtureRegistry::new(reg_dir)))));
            }
            if let Some(w) = world {
                return Ok(Arc::new(Retriever::new(Arc::new(w.registry()))));
            }
        }
        let source: Arc<dyn RegistrySource> =
            Arc::new(HttpRegistry::new(self.registry_url.clone()).map_err(|e| UsageError(e.to_string()))?);
        let cache_dir = self.cache_dir.clone().or_else(|| {
            std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".cache").join("envrepair").join("registry"))
        });
        let retriever = Retriever::new(source);
        Ok(Arc::new(match cache_dir {
            Some(dir) => retriever.with_disk_cache(DiskCache::new(dir, DEFAULT_CACHE_TTL)),
            None => retriever,
        }))
    }

    /// Assemble a repairer from the flags.
    pub fn repairer(&self) -> Result<Repairer, UsageError> {
        let world = self.world()?;
        let validator: Arc<dyn ValidatorBackend> = match self.validator {
            ValidatorChoice::Container => Arc::new(ContainerValidator::new()),
            ValidatorChoice::Simulated => match &world {
                Some(w) => Arc::new(SimulatedValidator::new(w.clone())),
                None => {
                    return Err(UsageError(
                        "--validator simulated needs --fixtures <dir> containing world.json".into(),
                    ))
                }
            },
        };
        let retriever = self.registry(world.as_ref())?;
        let gateway = Arc::new(Gateway::new(self.backend()?));
        Ok(Repairer::new(gateway, Some(retriever), validator))
    }
}

fn exit_for(status: RepairStatus) -> i32 {
    match status {
        RepairStatus::Fixed => EXIT_FIXED,
        RepairStatus::Unfixed => EXIT_UNFIXED,
        RepairStatus::Aborted => EXIT_ABORTED,
    }
}

fn run_repair(file: &Path, flags: &Flags) -> Result<i32, UsageError> {
    if !file.is_file() {
        return Err(UsageError(format!("no such file: {}", file.display())));
    }
    let source = SourceFile::read(file).map_err(|e| UsageError(e.to_string()))?;
    let repairer = flags.repairer()?;
    let mut cfg = flags.loop_config();
    cfg.trace_dir = Some(flags.out.clone());
    let result = repairer.repair(&source, &cfg);
    if let Some(c) = &result.winning_candidate {
        if let Ok(text) = emit(&BuildRecipe::new(c.clone(), &cfg.run_id)) {
            let path = flags.out.join("Dockerfile");
            if let Err(e) = std::fs::create_dir_all(&flags.out).and_then(|_| std::fs::write(&path, text)) {
                tracing::warn!("could not write {}: {e}", path.display());
            }
        }
    }
    println!("{}", result.summary());
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    Ok(exit_for(result.status))
}

fn run_bench(dir: &Path, runs: u32, flags: &Flags) -> Result<i32, UsageError> {
    if !dir.is_dir() {
        return Err(UsageError(format!("no such directory: {}", dir.display())));
    }
    let files = corpus_files(dir).map_err(|e| UsageError(e.to_string()))?;
    let repairer = flags.repairer()?;
    let cfg = BenchConfig {
        corpus_id: dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "corpus".into()),
        runs,
        jobs: flags.jobs as usize,
        base_seed: flags.seed.unwrap_or(0),
        loop_cfg: flags.loop_config(),
        out_dir: Some(flags.out.clone()),
    };
    let result = run_corpus(&repairer, &files, &cfg).map_err(|e| UsageError(e.to_string()))?;
    print!("{}", summary_table(&result));
    let aborted = result.runs.iter().any(|r| r.totals.aborted > 0);
    Ok(if aborted { EXIT_ABORTED } else { EXIT_FIXED })
}

/// Parse `args` (program name first), run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_FIXED };
        }
    };
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .try_init();
    let outcome = match &cli.command {
        Command::Repair { file, flags } => run_repair(file, flags),
        Command::Bench { dir, runs, flags } => run_bench(dir, *runs, flags),
    };
    match outcome {
        Ok(code) => code,
        Err(UsageError(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_defaults_mirror_loop_defaults() {
        let cli = Cli::try_parse_from(["envrepair", "repair", "x.py"]).unwrap();
        let Command::Repair { flags, .. } = cli.command else { panic!() };
        let cfg = flags.loop_config();
        assert_eq!((cfg.loop_budget, cfg.range, cfg.rag), (10, 1, true));
        assert_eq!(cfg.generation.model_name, "gemma2");
        assert_eq!(cfg.generation.temperature, 0.7);
    }

    #[test]
    fn rag_accepts_capitalized() {
        let cli = Cli::try_parse_from(["envrepair", "repair", "x.py", "--rag=False"]).unwrap();
        let Command::Repair { flags, .. } = cli.command else { panic!() };
        assert!(!flags.rag);
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(main_with_args(["envrepair", "repair", "x.py", "--loop=0"]), EXIT_USAGE);
        assert_eq!(main_with_args(["envrepair", "repair", "/definitely/missing.py"]), EXIT_USAGE);
        assert_eq!(main_with_args(["envrepair", "repair", "x.py", "--range=4"]), EXIT_USAGE);
    }
}
