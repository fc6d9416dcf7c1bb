//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::Value;
use sqkd_core::channels::{random_symmetric_attack, semi_honest_f_norms, ServerMode};
use sqkd_core::keyrate::{bound_chain, exact_iac, information_bound, keyrate_semi_honest, p_a_formula};
use sqkd_core::postprocess::distill;
use sqkd_core::protocol::{iteration_rng, run_protocol, Estimate, ProtocolConfig};
use sqkd_core::quantum::{random_gaussian_ket, trace_norm, C64};

struct Outcome {
    pass: bool,
    detail: String,
}

fn sqkd(args: &[&str]) -> (i32, Vec<u8>, Duration) {
    let start = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_sqkd")).args(args).output().expect("run sqkd");
    (o.status.code().unwrap_or(-1), o.stdout, start.elapsed())
}

fn threshold(args: &[&str]) -> (f64, Duration) {
    let mut full = vec!["threshold"];
    full.extend_from_slice(args);
    let (code, out, t) = sqkd(&full);
    assert_eq!(code, 0, "threshold {args:?} exited {code}");
    let v: Value = serde_json::from_slice(&out).expect("threshold JSON");
    (v["q_star"].as_f64().expect("q_star"), t)
}

fn semi_honest(p: f64, q: f64, n: usize, p_measure: f64, seed: u64) -> ProtocolConfig {
    ProtocolConfig {
        n,
        p_measure_a: p_measure,
        p_measure_b: p_measure,
        tau: 1.0,
        seed,
        server: ServerMode::SemiHonest { p, q },
    }
}

fn criterion_1() -> Outcome {
    let (q, t) = threshold(&["--model", "semi-honest"]);
    Outcome {
        pass: (q - 0.199).abs() <= 0.001 && t < Duration::from_secs(5),
        detail: format!("semi-honest p=q threshold Q* = {q:.6} (target 0.199 +/- 0.001), {:.2?}", t),
    }
}

fn criterion_2() -> Outcome {
    let (q, t) = threshold(&["--model", "worst-low", "--pa", "0.5", "--pw", "Q", "--qz", "Q"]);
    Outcome {
        pass: (q - 0.0335).abs() <= 0.0005 && t < Duration::from_secs(5),
        detail: format!("worst-low threshold Q* = {q:.6} (target 0.0335 +/- 0.0005), {:.2?}", t),
    }
}

fn criterion_3() -> Outcome {
    let (a, ta) = threshold(&["--model", "worst-high", "--pa", "0.5", "--pw", "Q"]);
    let (b, tb) = threshold(&["--model", "worst-high", "--pa", "0.3", "--pw", "Q"]);
    Outcome {
        pass: (a - 0.1065).abs() <= 0.0005 && (b - 0.0525).abs() <= 0.0005 && ta + tb < Duration::from_secs(5),
        detail: format!(
            "worst-high thresholds Q* = {a:.6} at p_a=0.5 (target 0.1065), {b:.6} at p_a=0.3 (target 0.0525), {:.2?}",
            ta + tb
        ),
    }
}

fn criterion_4() -> Outcome {
    let (p, q) = (0.2, 0.2);
    let start = Instant::now();
    let run = run_protocol(&semi_honest(p, q, 1_000_000, 0.5, 2024)).expect("run");
    let t = start.elapsed();
    let s = &run.stats;
    let p_a = p_a_formula(p / 2.0, semi_honest_f_norms(q).unwrap());
    let checks: [(&str, Estimate, f64); 7] = [
        ("p00", s.p_hat[0][0], 0.5 - p / 4.0),
        ("Q", s.q_hat, p / 2.0),
        ("p_w", s.p_w, (1.0 - q) * p / 4.0 + q / 4.0),
        ("p_minus1_eq", s.p_minus1_eq, (1.0 - q) / 2.0 + q / 4.0),
        ("p_minus1_neq", s.p_minus1_neq, q / 4.0),
        ("Q_Z", s.q_z, p * q / (8.0 * p_a)),
        ("p_a", s.p_a, p_a),
    ];
    let zs: Vec<String> = checks
        .iter()
        .map(|(name, e, want)| format!("{name} z={:+.2}", (e.value().unwrap() - want) / e.std_err().unwrap()))
        .collect();
    Outcome {
        pass: checks.iter().all(|(_, e, want)| e.within_sigma(*want, 3.0)) && t < Duration::from_secs(60),
        detail: format!("N=1e6 semi-honest statistics within 3 sigma: {}; {:.2?}", zs.join(", "), t),
    }
}

fn criterion_5() -> Outcome {
    let cfg = ProtocolConfig {
        n: 100_000,
        p_measure_a: 0.5,
        p_measure_b: 0.5,
        tau: 0.0,
        seed: 55,
        server: ServerMode::Honest,
    };
    let run = run_protocol(&cfg).expect("run");
    let reflect_errors = run.records.iter().filter(|r| r.reflect_error).count();
    let mismatches = run.keys.mismatches();
    let want = 0.5 * 0.5 / 2.0;
    let sift = run.stats.sift_rate;
    let z = (sift.value().unwrap() - want) / sift.std_err().unwrap();
    Outcome {
        pass: reflect_errors == 0 && mismatches == 0 && !run.aborted && sift.within_sigma(want, 5.0),
        detail: format!(
            "honest N=1e5: reflect errors {reflect_errors}, key mismatches {mismatches}, sift rate {:.5} (z={z:+.2})",
            sift.value().unwrap()
        ),
    }
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let dims = [1usize, 2, 4];
    let qs = [0.0, 0.05, 0.1];
    let results: Vec<(usize, f64)> = (0..1000u64)
        .into_par_iter()
        .map(|i| {
            let d = dims[i as usize % 3];
            let q = qs[(i as usize / 3) % 3];
            let attack = random_symmetric_attack(d, &mut iteration_rng(606, i));
            let chain = bound_chain(&attack, q).expect("chain");
            let bound = information_bound(q, attack.f_norms(), chain.p_a).expect("bound");
            let iac = exact_iac(&attack, q).expect("exact");
            let mut bad = chain.violations(1e-9).len();
            bad += usize::from(iac > bound.pairwise + 1e-9);
            bad += usize::from(bound.pairwise > bound.loose + 1e-9);
            (bad, chain.min_slack())
        })
        .collect();
    let t = start.elapsed();
    let violations: usize = results.iter().map(|r| r.0).sum();
    let tightest = results.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    Outcome {
        pass: violations == 0 && t < Duration::from_secs(120),
        detail: format!("1000 random symmetric attacks: {violations} violations, tightest slack {tightest:.3e}, {t:.2?}"),
    }
}

fn criterion_7() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for _ in 0..1000 {
        let dim = rng.random_range(1..=16);
        let a = random_gaussian_ket(dim, &mut rng).scaled(C64::new(rng.random_range(0.01..2.0), 0.0));
        let b0 = random_gaussian_ket(dim, &mut rng);
        let b = b0.minus(&a.scaled(C64::new(a.inner(&b0).re / a.norm_sqr(), 0.0)));
        let norm = trace_norm(&(a.outer(&b) + b.outer(&a))).expect("trace norm");
        let bound = 2.0 * (a.norm_sqr() * b.norm_sqr()).sqrt();
        worst = worst.max(norm - bound);
        violations += usize::from(norm > bound + 1e-9);
    }
    Outcome {
        pass: violations == 0,
        detail: format!("1000 zero-trace dyads in dim <= 16: {violations} violations, max excess {worst:.3e}"),
    }
}

fn criterion_8() -> Outcome {
    let (p, q) = (0.2, 0.2);
    let report = keyrate_semi_honest(p, q).expect("rate");
    let runs: Vec<(bool, usize, usize)> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let run = run_protocol(&semi_honest(p, q, 36_000, 0.9, 8000 + seed)).expect("run");
            let qz = run.stats.q_z.value().expect("q_z");
            let out = distill(&run.keys, qz, &report, seed).expect("distill");
            (out.verified, run.keys.len(), out.final_len)
        })
        .collect();
    let verified = runs.iter().filter(|r| r.0).count();
    let min_raw = runs.iter().map(|r| r.1).min().unwrap();
    let ratios: Vec<f64> = runs.iter().map(|r| r.2 as f64 / (r.1 as f64 * report.rate)).collect();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Outcome {
        pass: verified >= 99 && min_raw >= 10_000 && lo >= 0.9 && hi <= 1.1,
        detail: format!(
            "Q=0.1, 100 runs: {verified} verified, sifted bits >= {min_raw}, final length / (n r) in [{lo:.3}, {hi:.3}] with r = {:.5}",
            report.rate
        ),
    }
}

fn strip_duration(bytes: &[u8]) -> Vec<u8> {
    let mut v: Value = serde_json::from_slice(bytes).expect("manifest");
    v.as_object_mut().unwrap().remove("duration_s");
    serde_json::to_vec(&v).unwrap()
}

fn collect_outputs(manifest: &Path) -> Vec<Vec<u8>> {
    let m: Value = serde_json::from_slice(&std::fs::read(manifest).unwrap()).unwrap();
    let mut files: Vec<Vec<u8>> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| std::fs::read(manifest.parent().unwrap().join(o.as_str().unwrap())).unwrap())
        .collect();
    files.push(strip_duration(&std::fs::read(manifest).unwrap()));
    files
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, serde_json::to_string(&semi_honest(0.2, 0.2, 50_000, 0.5, 1)).unwrap()).unwrap();
    let cfg = cfg.to_str().unwrap().to_string();
    let invocations: Vec<(&str, Vec<String>)> = vec![
        ("simulate", vec!["simulate".into(), cfg.clone(), "--seed".into(), "99".into(), "--out".into()]),
        ("keyrate", vec!["keyrate".into(), "--model".into(), "worst-high".into(), "--pa".into(), "0.3".into(), "--out".into()]),
        ("threshold", vec!["threshold".into(), "--model".into(), "semi-honest".into(), "--out".into()]),
        ("verify-bounds", vec!["verify-bounds".into(), "--samples".into(), "100".into(), "--seed".into(), "9".into(), "--out".into()]),
    ];
    let mut same = Vec::new();
    let mut differing = Vec::new();
    for (name, args) in &invocations {
        let base = dir.path().join(name);
        let (target, manifest) = if *name == "simulate" {
            (base.clone(), base.join("manifest.json"))
        } else {
            (base.join("out.dat"), base.join("out.manifest.json"))
        };
        let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
        full.push(target.to_str().unwrap());
        // the same invocation twice, snapshotting its outputs after each run
        let runs: Vec<Vec<Vec<u8>>> = (0..2)
            .map(|_| {
                let (code, stdout, _) = sqkd(&full);
                assert_eq!(code, 0, "{name} exited {code}");
                let mut files = collect_outputs(&manifest);
                files.push(stdout);
                files
            })
            .collect();
        if runs[0] == runs[1] {
            same.push(*name);
        } else {
            differing.push(*name);
        }
    }
    Outcome {
        pass: differing.is_empty(),
        detail: format!("byte-identical outputs for {:?}; differing: {:?}", same, differing),
    }
}

fn main() {
    // honor the libtest filter convention loosely: `cargo test --test acceptance -- 4 8`
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, fn() -> Outcome); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let mut failed = 0;
    for (id, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let outcome = f();
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {id}: {status}  {}", outcome.detail);
        failed += usize::from(!outcome.pass);
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
