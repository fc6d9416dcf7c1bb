use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::output::{to_json, write_file};
use super::{simulate, Cli, CliError, CliResult, Command, ReplayArgs};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Record of one invocation. Output paths are relative to the manifest's
/// directory unless absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: Option<Value>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub outputs: Vec<String>,
    pub duration_s: f64,
}

impl RunManifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::malformed(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::malformed(format!("{}: {e}", path.display())))
    }

    pub fn output_paths(&self, manifest: &Path) -> Vec<PathBuf> {
        let dir = manifest.parent().unwrap_or(Path::new(""));
        self.outputs.iter().map(|o| dir.join(o)).collect()
    }
}

/// Manifest location for a command writing the single file `out`.
pub fn manifest_path_for(out: &Path) -> PathBuf {
    out.with_extension(MANIFEST_NAME)
}

pub struct ManifestWriter {
    pub command: &'static str,
    pub args: Vec<String>,
    pub config: Option<Value>,
    pub seed: Option<u64>,
    pub started: Instant,
}

impl ManifestWriter {
    pub fn new(command: &'static str, args: Vec<String>) -> Self {
        ManifestWriter {
            command,
            args,
            config: None,
            seed: None,
            started: Instant::now(),
        }
    }

    pub fn write(self, manifest: &Path, outputs: &[PathBuf]) -> CliResult<()> {
        let dir = manifest.parent().unwrap_or(Path::new(""));
        let outputs = outputs
            .iter()
            .map(|p| match (p.parent(), p.file_name()) {
                (Some(parent), Some(name)) if parent == dir => name.to_string_lossy().into_owned(),
                _ => std::path::absolute(p).unwrap_or_else(|_| p.clone()).display().to_string(),
            })
            .collect();
        let m = RunManifest {
            command: self.command.into(),
            args: self.args,
            config: self.config,
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            outputs,
            duration_s: self.started.elapsed().as_secs_f64(),
        };
        write_file(manifest, &to_json(&m)?)
    }
}

fn replace_out(args: &[String], out: &Path) -> Vec<String> {
    let mut kept = Vec::with_capacity(args.len() + 2);
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--out" {
            it.next();
        } else if !a.starts_with("--out=") {
            kept.push(a.clone());
        }
    }
    kept.push("--out".into());
    kept.push(out.display().to_string());
    kept
}

/// Re-runs the recorded command, optionally at a new location, and with
/// `--check` compares every output byte for byte.
pub fn replay(a: &ReplayArgs) -> CliResult<u8> {
    let m = RunManifest::load(&a.manifest)?;
    let args = match &a.out {
        Some(out) => replace_out(&m.args, out),
        None => m.args.clone(),
    };
    let cli = Cli::try_parse_from(std::iter::once("sqkd".to_string()).chain(args.iter().cloned()))
        .map_err(|e| CliError::malformed(format!("manifest arguments do not parse: {e}")))?;
    let (code, new_manifest) = match cli.command {
        Command::Simulate(s) => {
            let config = m
                .config
                .clone()
                .ok_or_else(|| CliError::malformed("simulate manifest has no config snapshot"))?;
            let config = serde_json::from_value(config)
                .map_err(|e| CliError::malformed(format!("config snapshot: {e}")))?;
            let path = s.out.join(MANIFEST_NAME);
            (simulate::run_config(config, &s, args)?, path)
        }
        Command::Replay(_) => return Err(CliError::malformed("a manifest cannot record a replay")),
        cmd => {
            let out = match &cmd {
                Command::Keyrate(k) => k.out.clone(),
                Command::Threshold(t) => t.out.clone(),
                Command::VerifyBounds(v) => v.out.clone(),
                _ => None,
            }
            .ok_or_else(|| CliError::malformed("manifest command has no output file"))?;
            (super::execute(cmd, args)?, manifest_path_for(&out))
        }
    };
    if a.check {
        let regenerated = RunManifest::load(&new_manifest)?;
        let old = m.output_paths(&a.manifest);
        let new = regenerated.output_paths(&new_manifest);
        if old.len() != new.len() {
            return Err(CliError::malformed(format!(
                "replay produced {} outputs, manifest lists {}",
                new.len(),
                old.len()
            )));
        }
        for (o, n) in old.iter().zip(&new) {
            if std::fs::read(o)? != std::fs::read(n)? {
                return Err(CliError::malformed(format!("{} differs from {}", n.display(), o.display())));
            }
        }
        println!("replay matches: {} outputs identical", old.len());
    }
    Ok(code)
}
