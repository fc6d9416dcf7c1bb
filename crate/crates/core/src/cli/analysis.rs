use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use super::manifest::{manifest_path_for, ManifestWriter};
use super::output::{to_json, write_file};
use super::{CliError, CliResult, KeyrateArgs, Model, ModelArgs, ThresholdArgs, VerifyArgs, EXIT_OK, EXIT_VIOLATION};
use crate::channels::{random_symmetric_attack, validate_attack, AttackOperator};
use crate::fmt::g9;
use crate::keyrate::{bound_chain, curves, find_threshold, BoundChain, KeyRateReport, Threshold};
use crate::protocol::iteration_rng;

fn rate_at(m: &ModelArgs, q: f64) -> crate::Result<KeyRateReport> {
    match m.model {
        Model::SemiHonest => {
            let p = 2.0 * q;
            crate::keyrate::keyrate_semi_honest(p, m.reverse.resolve(p))
        }
        Model::WorstLow => curves::worst_low(q, m.pa, Some(m.pw.resolve(q)), Some(m.qz.resolve(q))),
        Model::WorstHigh => curves::worst_high(q, m.pa, Some(m.pw.resolve(q))),
    }
}

fn flag_list(r: &KeyRateReport) -> String {
    r.flags
        .iter()
        .map(|f| serde_json::to_value(f).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
        .collect::<Vec<_>>()
        .join(";")
}

pub fn keyrate(a: &KeyrateArgs, args: Vec<String>) -> CliResult<u8> {
    let manifest = ManifestWriter::new("keyrate", args);
    let rows = a
        .q_grid
        .points()
        .into_par_iter()
        .map(|q| rate_at(&a.model, q).map(|r| (q, r)))
        .collect::<crate::Result<Vec<_>>>()?;
    let mut csv = String::from("Q,r,i_ab,i_ac_bound,formula,flags\n");
    for (q, r) in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            g9(*q),
            g9(r.rate),
            g9(r.i_ab),
            g9(r.i_ac_bound),
            r.formula.tag(),
            flag_list(r)
        );
    }
    match &a.out {
        Some(path) => {
            write_file(path, &csv)?;
            manifest.write(&manifest_path_for(path), std::slice::from_ref(path))?;
        }
        None => print!("{csv}"),
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct ThresholdFile<'a> {
    model: &'a ModelArgs,
    lo: f64,
    hi: f64,
    #[serde(flatten)]
    threshold: Threshold,
}

pub fn threshold(a: &ThresholdArgs, args: Vec<String>) -> CliResult<u8> {
    let manifest = ManifestWriter::new("threshold", args);
    // validate parameters once so errors surface instead of becoming NaN rates
    rate_at(&a.model, a.lo)?;
    rate_at(&a.model, a.hi)?;
    let t = find_threshold(|q| rate_at(&a.model, q).map(|r| r.rate).unwrap_or(f64::NAN), a.lo, a.hi)?;
    let json = to_json(&ThresholdFile {
        model: &a.model,
        lo: a.lo,
        hi: a.hi,
        threshold: t,
    })?;
    print!("{json}");
    if let Some(path) = &a.out {
        write_file(path, &json)?;
        manifest.write(&manifest_path_for(path), std::slice::from_ref(path))?;
    }
    Ok(EXIT_OK)
}

#[derive(Serialize, Default)]
struct LinkSlack {
    tightest: f64,
    loosest: f64,
}

#[derive(Serialize)]
struct Violation {
    sample: u64,
    d_c: usize,
    q: f64,
    links: Vec<&'static str>,
    chain: BoundChain,
}

#[derive(Serialize)]
struct VerifyReport {
    samples: u64,
    evaluations: usize,
    seed: u64,
    d_c: Vec<usize>,
    q: Vec<f64>,
    attack_file: Option<String>,
    tol: f64,
    violations: usize,
    slack: BTreeMap<&'static str, LinkSlack>,
    first_violation: Option<Violation>,
    violation_file: Option<String>,
}

struct Case {
    sample: u64,
    d_c: usize,
    q: f64,
    attack: AttackOperator,
}

fn sampled_case(a: &VerifyArgs, i: u64) -> Case {
    let d_c = a.dc[i as usize % a.dc.len()];
    let q = a.q[(i as usize / a.dc.len()) % a.q.len()];
    let attack = random_symmetric_attack(d_c, &mut iteration_rng(a.seed, i));
    Case { sample: i, d_c, q, attack }
}

pub fn verify_bounds(a: &VerifyArgs, args: Vec<String>) -> CliResult<u8> {
    let mut manifest = ManifestWriter::new("verify-bounds", args);
    manifest.seed = Some(a.seed);
    if a.samples == 0 {
        return Err(CliError::malformed("--samples must be at least 1"));
    }
    if a.dc.is_empty() || a.dc.contains(&0) || a.q.is_empty() {
        return Err(CliError::malformed("--dc needs positive dimensions and --q at least one value"));
    }
    if let Some(&q) = a.q.iter().find(|q| !(0.0..1.0).contains(*q)) {
        return Err(CliError::malformed(format!("Q = {q} is outside [0, 1)")));
    }

    let evaluate = |c: &Case| -> CliResult<(BoundChain, Vec<&'static str>)> {
        let chain = bound_chain(&c.attack, c.q)?;
        let v = chain.violations(a.tol);
        Ok((chain, v))
    };
    let results: Vec<(Case, BoundChain, Vec<&'static str>)> = match &a.attack_file {
        Some(path) => {
            let attack = AttackOperator::load(path)
                .map_err(|e| CliError::malformed(format!("{}: {e}", path.display())))?;
            let report = validate_attack(&attack, true);
            if !report.pass {
                return Err(CliError::malformed(format!("{}: {}", path.display(), report.failure_summary())));
            }
            a.q.iter()
                .map(|&q| {
                    let c = Case {
                        sample: 0,
                        d_c: attack.ancilla_dim(),
                        q,
                        attack: attack.clone(),
                    };
                    evaluate(&c).map(|(ch, v)| (c, ch, v))
                })
                .collect::<CliResult<_>>()?
        }
        None => (0..a.samples)
            .into_par_iter()
            .map(|i| {
                let c = sampled_case(a, i);
                evaluate(&c).map(|(ch, v)| (c, ch, v))
            })
            .collect::<CliResult<_>>()?,
    };

    let mut slack: BTreeMap<&'static str, LinkSlack> = BTreeMap::new();
    for (_, chain, _) in &results {
        for (name, lhs, rhs) in chain.links() {
            let s = rhs - lhs;
            let e = slack.entry(name).or_insert(LinkSlack {
                tightest: f64::INFINITY,
                loosest: f64::NEG_INFINITY,
            });
            e.tightest = e.tightest.min(s);
            e.loosest = e.loosest.max(s);
        }
    }
    let violations = results.iter().filter(|r| !r.2.is_empty()).count();
    let first = results.iter().find(|r| !r.2.is_empty());
    let mut outputs: Vec<PathBuf> = Vec::new();
    let mut violation_file = None;
    if let Some((case, _, _)) = first {
        let path = a.violation_out.clone().unwrap_or_else(|| match &a.out {
            Some(out) => out.with_extension("violation.json"),
            None => PathBuf::from("violating_attack.json"),
        });
        case.attack.save(&path)?;
        violation_file = Some(path.display().to_string());
        outputs.push(path);
    }
    let report = VerifyReport {
        samples: if a.attack_file.is_some() { 1 } else { a.samples },
        evaluations: results.len(),
        seed: a.seed,
        d_c: a.dc.clone(),
        q: a.q.clone(),
        attack_file: a.attack_file.as_ref().map(|p| p.display().to_string()),
        tol: a.tol,
        violations,
        slack,
        first_violation: first.map(|(c, chain, links)| Violation {
            sample: c.sample,
            d_c: c.d_c,
            q: c.q,
            links: links.clone(),
            chain: *chain,
        }),
        violation_file,
    };
    let json = to_json(&report)?;
    print!("{json}");
    if let Some(path) = &a.out {
        write_file(path, &json)?;
        outputs.insert(0, path.clone());
        manifest.write(&manifest_path_for(path), &outputs)?;
    }
    Ok(if violations > 0 { EXIT_VIOLATION } else { EXIT_OK })
}
