use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqkd_core::quantum::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_hermitian(dim: usize, r: &mut ChaCha8Rng) -> CMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)));
    &g + g.adjoint()
}

fn holevo_gap(r0: &DensityMatrix, r1: &DensityMatrix) -> f64 {
    let avg = r0.mix(0.5, r1);
    von_neumann_entropy(&avg).unwrap() - 0.5 * von_neumann_entropy(r0).unwrap() - 0.5 * von_neumann_entropy(r1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn trace_norm_dominates_trace(seed in any::<u64>(), dim in 1usize..=12) {
        let m = random_hermitian(dim, &mut rng(seed));
        prop_assert!(trace_norm(&m).unwrap() + 1e-12 >= m.trace().re.abs());
    }

    #[test]
    fn trace_norm_is_unitarily_invariant(seed in any::<u64>(), dim in 1usize..=12) {
        let mut r = rng(seed);
        let m = random_hermitian(dim, &mut r);
        let u = random_unitary(dim, &mut r);
        let rotated = &u * &m * u.adjoint();
        prop_assert!((trace_norm(&rotated).unwrap() - trace_norm(&m).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn entropy_is_basis_independent(seed in any::<u64>(), dim in 1usize..=12, rank in 1usize..=12) {
        let mut r = rng(seed);
        let rho = random_density_matrix(dim, rank.min(dim), &mut r);
        let u = random_unitary(dim, &mut r);
        let a = von_neumann_entropy(&rho).unwrap();
        let b = von_neumann_entropy(&rho.conjugate_by(&u)).unwrap();
        prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
    }

    #[test]
    fn bell_probabilities_sum_to_one(seed in any::<u64>()) {
        let psi = random_ket(4, &mut rng(seed));
        let total: f64 = bell_projection_probs(&psi).unwrap().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// `‖|a⟩⟨b| + |b⟩⟨a|‖₁ ≤ 2√(⟨a|a⟩⟨b|b⟩)` whenever `Re⟨a|b⟩ = 0`.
    #[test]
    fn zero_trace_dyad_bound(seed in any::<u64>(), dim in 1usize..=16) {
        let mut r = rng(seed);
        let a = random_gaussian_ket(dim, &mut r).scaled(C64::new(r.random_range(0.01..2.0), 0.0));
        let b0 = random_gaussian_ket(dim, &mut r).scaled(C64::new(r.random_range(0.01..2.0), 0.0));
        let shift = a.inner(&b0).re / a.norm_sqr();
        let b = b0.minus(&a.scaled(C64::new(shift, 0.0)));
        let dyad = a.outer(&b) + b.outer(&a);
        prop_assert!(dyad.trace().norm() < 1e-10);
        let bound = 2.0 * (a.norm_sqr() * b.norm_sqr()).sqrt();
        prop_assert!(trace_norm(&dyad).unwrap() <= bound + 1e-9);
    }

    /// `S(ρ) - ½S(ρ⁰) - ½S(ρ¹) ≤ ½‖ρ⁰ - ρ¹‖₁` for `ρ = ½ρ⁰ + ½ρ¹`.
    #[test]
    fn holevo_gap_below_half_trace_distance(seed in any::<u64>(), dim in 2usize..=8, r0 in 1usize..=8, r1 in 1usize..=8) {
        let mut r = rng(seed);
        let a = random_density_matrix(dim, r0.min(dim), &mut r);
        let b = random_density_matrix(dim, r1.min(dim), &mut r);
        let half = 0.5 * trace_norm(&(a.matrix() - b.matrix())).unwrap();
        prop_assert!(holevo_gap(&a, &b) <= half + 1e-8);
    }
}

#[test]
fn holevo_gap_is_tight_for_orthogonal_pure_states() {
    let a = DensityMatrix::pure(&Ket::basis(3, 0)).unwrap();
    let b = DensityMatrix::pure(&Ket::basis(3, 2)).unwrap();
    assert!((holevo_gap(&a, &b) - 1.0).abs() < 1e-12);
    assert!((0.5 * trace_norm(&(a.matrix() - b.matrix())).unwrap() - 1.0).abs() < 1e-12);
}
