//! Validation through a container engine's command line (`docker` or a compatible CLI).

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use super::{
    emit_or_failure, settle_run_status, BuildOutcome, OutcomePhase, OutcomeStatus, Slots, ValidationError,
    ValidationLimits, ValidatorBackend, ValidatorKind,
};
use crate::dockerfile::BuildRecipe;
use crate::source::SourceFile;

pub const DEFAULT_ENGINE: &str = "docker";

#[derive(Debug)]
pub struct ContainerValidator {
    engine: String,
    limits: ValidationLimits,
    slots: Slots,
    probe: OnceLock<Result<(), String>>,
}

struct Captured {
    log: String,
    exit_code: Option<i32>,
    timed_out: bool,
    elapsed: Duration,
}

impl ContainerValidator {
    pub fn new() -> Self {
        Self::with_engine(DEFAULT_ENGINE)
    }

    pub fn with_engine(engine: impl Into<String>) -> Self {
        let limits = ValidationLimits::default();
        ContainerValidator {
            engine: engine.into(),
            slots: Slots::new(limits.concurrency),
            limits,
            probe: OnceLock::new(),
        }
    }

    pub fn with_limits(mut self, limits: ValidationLimits) -> Self {
        self.slots = Slots::new(limits.concurrency);
        self.limits = limits;
        self
    }

    /// Whether the engine answers at all; checked once per validator.
    pub fn probe(&self) -> Result<(), ValidationError> {
        self.probe
            .get_or_init(|| {
                let out = Command::new(&self.engine)
                    .args(["version", "--format", "{{.Server.Version}}"])
                    .stdin(Stdio::null())
                    .output()
                    .map_err(|e| format!("{}: {e}", self.engine))?;
                if out.status.success() {
                    Ok(())
                } else {
                    Err(String::from_utf8_lossy(&out.stderr).trim().to_string())
                }
            })
            .clone()
            .map_err(ValidationError::EngineUnavailable)
    }

    fn engine_cmd(&self, args: &[&str]) -> Command {
        let mut cmd = Command::new(&self.engine);
        cmd.args(args).env("BUILDKIT_PROGRESS", "plain");
        cmd
    }

    /// Run with stdout and stderr sharing one pipe, so the log keeps their interleaving.
    fn capture(&self, mut cmd: Command, limit: Duration, on_timeout: impl FnOnce()) -> Result<Captured, ValidationError> {
        let unavailable = |e: std::io::Error| ValidationError::EngineUnavailable(format!("{}: {e}", self.engine));
        let (mut reader, writer) = std::io::pipe().map_err(unavailable)?;
        cmd.stdin(Stdio::null())
            .stdout(writer.try_clone().map_err(unavailable)?)
            .stderr(writer);
        let start = Instant::now();
        let mut child = cmd.spawn().map_err(unavailable)?;
        // the command still holds write ends; drop it so the reader sees end-of-file
        drop(cmd);
        let pump = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = reader.read_to_end(&mut buf);
            buf
        });
        let mut timed_out = false;
        let status = loop {
            if let Some(status) = child.try_wait().map_err(unavailable)? {
                break Some(status);
            }
            if start.elapsed() >= limit {
                timed_out = true;
                on_timeout();
                let _ = child.kill();
                let _ = child.wait();
                break None;
            }
            std::thread::sleep(Duration::from_millis(50));
        };
        let bytes = pump.join().unwrap_or_default();
        Ok(Captured {
            log: String::from_utf8_lossy(&bytes).into_owned(),
            exit_code: status.and_then(|s| s.code()),
            timed_out,
            elapsed: start.elapsed().max(if timed_out { limit } else { Duration::ZERO }),
        })
    }

    fn quiet(&self, args: &[&str]) {
        let _ = self
            .engine_cmd(args)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status();
    }

    fn context_dir(recipe: &BuildRecipe) -> PathBuf {
        std::env::temp_dir().join(format!("{}-{}", recipe.container_tag, uuid::Uuid::new_v4().simple()))
    }

    fn write_context(dir: &Path, dockerfile: &str, recipe: &BuildRecipe, snippet: &SourceFile) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("Dockerfile"), dockerfile)?;
        std::fs::write(dir.join(&recipe.snippet_filename), snippet.content())
    }
}

impl Default for ContainerValidator {
    fn default() -> Self {
        Self::new()
    }
}

impl ValidatorBackend for ContainerValidator {
    fn kind(&self) -> ValidatorKind {
        ValidatorKind::Container
    }

    fn limits(&self) -> &ValidationLimits {
        &self.limits
    }

    fn validate(&self, recipe: &BuildRecipe, snippet: &SourceFile) -> Result<BuildOutcome, ValidationError> {
        self.probe()?;
        let dockerfile = match emit_or_failure(recipe) {
            Ok(text) => text,
            Err(outcome) => return Ok(outcome),
        };
        let _slot = self.slots.acquire();
        let key = recipe.candidate.canonical_key().to_string();
        let tag = recipe.container_tag.as_str();
        let dir = Self::context_dir(recipe);
        Self::write_context(&dir, &dockerfile, recipe, snippet)
            .map_err(|e| ValidationError::EngineUnavailable(format!("build context {}: {e}", dir.display())))?;
        let dir_text = dir.to_string_lossy().into_owned();

        let build = self.capture(self.engine_cmd(&["build", "-t", tag, &dir_text]), self.limits.build_timeout, || {})?;
        let _ = std::fs::remove_dir_all(&dir);
        let build_failed = build.timed_out || build.exit_code != Some(0);
        if build_failed {
            self.quiet(&["rmi", "-f", tag]);
            let mut log = build.log;
            if build.timed_out {
                log.push_str(&format!("[envrepair] build exceeded the {} s limit and was stopped\n", self.limits.build_timeout.as_secs()));
            }
            return Ok(BuildOutcome {
                phase: OutcomePhase::Build,
                status: if build.timed_out { OutcomeStatus::Timeout } else { OutcomeStatus::Failure },
                exit_code: build.exit_code,
                log,
                duration_seconds: build.elapsed.as_secs_f64(),
                candidate_key: key,
            });
        }

        let run = self.capture(
            self.engine_cmd(&["run", "--name", tag, tag]),
            self.limits.run_timeout,
            || self.quiet(&["rm", "-f", tag]),
        )?;
        self.quiet(&["rm", "-f", tag]);
        self.quiet(&["rmi", "-f", tag]);

        let mut log = build.log;
        log.push_str(&run.log);
        let status = if run.timed_out {
            log.push_str(&format!("[envrepair] run exceeded the {} s limit and was stopped\n", self.limits.run_timeout.as_secs()));
            OutcomeStatus::Timeout
        } else {
            let code = run.exit_code.unwrap_or(-1);
            log.push_str(&format!("[envrepair] container exited with code {code}\n"));
            if code == 0 {
                OutcomeStatus::Success
            } else {
                OutcomeStatus::Failure
            }
        };
        let mut outcome = BuildOutcome {
            phase: OutcomePhase::Run,
            status,
            exit_code: run.exit_code,
            log,
            duration_seconds: (build.elapsed + run.elapsed).as_secs_f64(),
            candidate_key: key,
        };
        settle_run_status(&mut outcome);
        Ok(outcome)
    }
}
