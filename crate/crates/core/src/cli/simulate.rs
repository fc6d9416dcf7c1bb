use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use super::manifest::{ManifestWriter, MANIFEST_NAME};
use super::output::{to_json, write_file};
use super::{CliError, CliResult, RateModel, SimulateArgs, EXIT_ABORT, EXIT_OK, EXIT_SYMMETRY};
use crate::channels::ServerMode;
use crate::keyrate::{keyrate_semi_honest, keyrate_worst_high, keyrate_worst_low, KeyRateReport};
use crate::postprocess::{distill, FinalKeyResult};
use crate::protocol::{check_symmetry, run_protocol, write_transcript_csv, ProtocolConfig, SymmetryReport, TranscriptStats};

/// Keeps forward/reverse strength estimates strictly below 1.
const MAX_STRENGTH: f64 = 1.0 - 1e-9;

#[derive(Serialize)]
struct StatsFile<'a> {
    n: usize,
    seed: u64,
    tau: f64,
    aborted: bool,
    raw_key_len: usize,
    statistics: &'a TranscriptStats,
    symmetry: Option<&'a SymmetryReport>,
    key_rate: Option<&'a KeyRateReport>,
    final_key: Option<&'a FinalKeyResult>,
    notes: Vec<String>,
}

fn load_config(path: &Path) -> CliResult<ProtocolConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::malformed(format!("{}: {e}", path.display())))?;
    let config: ProtocolConfig =
        serde_json::from_str(&text).map_err(|e| CliError::malformed(format!("{}: {e}", path.display())))?;
    config
        .validate()
        .map_err(|e| CliError::malformed(format!("{}: {e}", path.display())))?;
    Ok(config)
}

fn needed(name: &str, v: Option<f64>) -> Result<f64, String> {
    v.ok_or_else(|| format!("no rounds to estimate {name}"))
}

/// Rate report from the observed statistics.
fn observed_rate(stats: &TranscriptStats, model: RateModel, server: &ServerMode) -> Result<KeyRateReport, String> {
    let model = match (model, server) {
        (RateModel::Auto, ServerMode::Adversarial { .. }) => RateModel::WorstLow,
        (RateModel::Auto, _) => RateModel::SemiHonest,
        (m, _) => m,
    };
    let q = needed("Q", stats.q_hat.value())?;
    let p_w = needed("p_w", stats.p_w.value())?;
    let r = match model {
        RateModel::SemiHonest | RateModel::Auto => {
            let p = (2.0 * q).min(MAX_STRENGTH);
            let rev = ((4.0 * p_w - p) / (1.0 - p)).clamp(0.0, MAX_STRENGTH);
            keyrate_semi_honest(p, rev)
        }
        RateModel::WorstLow => {
            let q_z = needed("Q_Z", stats.q_z.value())?;
            keyrate_worst_low(q, q_z, p_w, needed("p_a", stats.p_a.value())?)
        }
        RateModel::WorstHigh => keyrate_worst_high(q, p_w, needed("p_a", stats.p_a.value())?),
    };
    r.map_err(|e| e.to_string())
}

pub fn run(a: &SimulateArgs, args: Vec<String>) -> CliResult<u8> {
    let mut config = load_config(&a.config)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    run_config(config, a, args)
}

pub fn run_config(config: ProtocolConfig, a: &SimulateArgs, args: Vec<String>) -> CliResult<u8> {
    let mut manifest = ManifestWriter::new("simulate", args);
    config.validate()?;
    manifest.config = Some(serde_json::to_value(&config).map_err(crate::Error::from)?);
    manifest.seed = Some(config.seed);
    std::fs::create_dir_all(&a.out)?;

    let run = run_protocol(&config)?;
    let transcript = a.out.join("transcript.csv");
    let stats_path = a.out.join("stats.json");
    let key_path = a.out.join("final_key.txt");
    {
        let file = std::fs::File::create(&transcript)?;
        write_transcript_csv(&run.records, BufWriter::new(file))?;
    }

    let mut notes = Vec::new();
    let mut code = EXIT_OK;
    let mut symmetry = None;
    let mut rate = None;
    let mut key = None;
    if run.aborted {
        code = EXIT_ABORT;
        notes.push(format!("aborted: both-reflect error rate exceeds tau = {}", config.tau));
    } else {
        let report = check_symmetry(&run.stats, a.z_sigma)?;
        if !report.pass {
            code = EXIT_SYMMETRY;
            notes.push("symmetry check failed".into());
        }
        symmetry = Some(report);
    }
    if code == EXIT_OK {
        match observed_rate(&run.stats, a.rate_model, &config.server) {
            Ok(r) => rate = Some(r),
            Err(e) => notes.push(format!("no key rate: {e}")),
        }
        notes.push("reconciliation parities are charged as fully disclosed; leakage beyond n*h(Q_Z) shortens the key".into());
    }
    if let (Some(r), Some(q_z)) = (&rate, run.stats.q_z.value()) {
        if q_z < 0.5 {
            key = Some(distill(&run.keys, q_z, r, config.seed)?);
        } else {
            notes.push(format!("no key: Q_Z = {q_z} leaves nothing to reconcile"));
        }
    }

    let stats = StatsFile {
        n: config.n,
        seed: config.seed,
        tau: config.tau,
        aborted: run.aborted,
        raw_key_len: run.keys.len(),
        statistics: &run.stats,
        symmetry: symmetry.as_ref(),
        key_rate: rate.as_ref(),
        final_key: key.as_ref(),
        notes,
    };
    write_file(&stats_path, &to_json(&stats)?)?;
    let mut outputs = vec![transcript, stats_path];
    if let Some(k) = &key {
        write_file(&key_path, &k.export())?;
        outputs.push(key_path);
        println!("{}", k.summary());
    } else if key_path.exists() {
        std::fs::remove_file(&key_path)?;
    }
    manifest.write(&a.out.join(MANIFEST_NAME), &outputs)?;
    if code != EXIT_OK {
        eprintln!("{}", stats.notes.join("; "));
    }
    Ok(code)
}
