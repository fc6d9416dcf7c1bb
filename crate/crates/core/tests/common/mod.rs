#![allow(dead_code)]

use sqkd_core::channels::{AttackOperator, InitialState, ServerMode};
use sqkd_core::protocol::{Estimate, ProtocolConfig};
use sqkd_core::quantum::{bell_state, Ket, C64};

pub fn semi_honest_config(p: f64, q: f64, n: usize, p_measure: f64, seed: u64) -> ProtocolConfig {
    ProtocolConfig {
        n,
        p_measure_a: p_measure,
        p_measure_b: p_measure,
        tau: 1.0,
        seed,
        server: ServerMode::SemiHonest { p, q },
    }
}

pub fn adversarial_config(initial_state: InitialState, attack: AttackOperator, n: usize, seed: u64) -> ProtocolConfig {
    ProtocolConfig {
        n,
        p_measure_a: 0.5,
        p_measure_b: 0.5,
        tau: 1.0,
        seed,
        server: ServerMode::Adversarial { initial_state, attack },
    }
}

/// Announces `-1` whenever both users saw 0 and never when both saw 1.
pub fn zero_biased_attack() -> AttackOperator {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let c = |x: f64| C64::new(x, 0.0);
    let b00 = Ket::basis(4, 0);
    let b11 = Ket::basis(4, 3);
    let e = [b11.scaled(c(s)), b11.scaled(c(-s)), bell_state(2), bell_state(3)];
    let f = [b00.scaled(c(s)), b00.scaled(c(s)), Ket::zeros(4), Ket::zeros(4)];
    AttackOperator::validated(1, e, f, false).unwrap()
}

/// Two-sample z statistic for equal proportions.
pub fn two_sample_z(x: Estimate, y: Estimate) -> f64 {
    let (a, b) = (x.value().unwrap(), y.value().unwrap());
    let var = a * (1.0 - a) / x.trials as f64 + b * (1.0 - b) / y.trials as f64;
    if var == 0.0 {
        return if a == b { 0.0 } else { f64::INFINITY };
    }
    (a - b) / var.sqrt()
}
