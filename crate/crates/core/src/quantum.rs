//! Dense linear algebra and quantum-information primitives for small
//! Hilbert spaces.
//!
//! Tensor factors are ordered left to right with the left factor most
//! significant, so `|a⟩ ⊗ |b⟩` has amplitude index `ia * dim(b) + ib`. In the
//! protocol the factor order is `(T_A, T_B, C)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{check_probability, Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Normalization tolerance for kets that must be unit vectors.
pub const NORM_TOL: f64 = 1e-10;
/// Hermiticity tolerance for stored density matrices.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Hermiticity tolerance accepted by spectral routines.
pub const SPECTRAL_HERMITIAN_TOL: f64 = 1e-9;
/// Eigenvalues in `[-PSD_TOL, 0)` are treated as numerical zeros.
pub const PSD_TOL: f64 = 1e-9;
/// Trace tolerance for density matrices.
pub const TRACE_TOL: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);

/// A (not necessarily normalized) state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Ket {
    amps: Vec<C64>,
}

impl Ket {
    pub fn new(amps: Vec<C64>) -> Self {
        assert!(!amps.is_empty(), "a ket needs at least one amplitude");
        Ket { amps }
    }

    pub fn from_real(amps: &[f64]) -> Self {
        Ket::new(amps.iter().map(|&a| C64::new(a, 0.0)).collect())
    }

    pub fn zeros(dim: usize) -> Self {
        Ket::new(vec![ZERO; dim])
    }

    /// Computational basis vector `|index⟩`.
    pub fn basis(dim: usize, index: usize) -> Self {
        assert!(index < dim);
        let mut k = Ket::zeros(dim);
        k.amps[index] = C64::new(1.0, 0.0);
        k
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOL
    }

    /// Returns a unit vector along `self`, or an error for a zero vector.
    pub fn normalized(&self) -> Result<Ket> {
        let n = self.norm_sqr().sqrt();
        if n < 1e-12 {
            return Err(Error::Degenerate("cannot normalize a zero vector".into()));
        }
        Ok(self.scaled(C64::new(1.0 / n, 0.0)))
    }

    /// `⟨self|other⟩`, antilinear in `self`.
    pub fn inner(&self, other: &Ket) -> C64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scaled(&self, c: C64) -> Ket {
        Ket::new(self.amps.iter().map(|a| a * c).collect())
    }

    pub fn plus(&self, other: &Ket) -> Ket {
        assert_eq!(self.dim(), other.dim());
        Ket::new(self.amps.iter().zip(&other.amps).map(|(a, b)| a + b).collect())
    }

    pub fn minus(&self, other: &Ket) -> Ket {
        assert_eq!(self.dim(), other.dim());
        Ket::new(self.amps.iter().zip(&other.amps).map(|(a, b)| a - b).collect())
    }

    /// `self += c * other`
    pub fn add_scaled(&mut self, c: C64, other: &Ket) {
        assert_eq!(self.dim(), other.dim());
        for (a, b) in self.amps.iter_mut().zip(&other.amps) {
            *a += c * b;
        }
    }

    /// `|self⟩⟨other|`
    pub fn outer(&self, other: &Ket) -> CMatrix {
        CMatrix::from_fn(self.dim(), other.dim(), |r, c| self.amps[r] * other.amps[c].conj())
    }

    /// `|self⟩⟨self|`
    pub fn projector(&self) -> CMatrix {
        self.outer(self)
    }

    pub fn apply(&self, op: &CMatrix) -> Ket {
        assert_eq!(op.ncols(), self.dim());
        let v = op * nalgebra::DVector::from_column_slice(&self.amps);
        Ket::new(v.iter().copied().collect())
    }
}

/// A Hermitian positive semi-definite matrix with a declared trace.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    m: CMatrix,
}

impl DensityMatrix {
    /// Validates a trace-one state.
    pub fn new(m: CMatrix) -> Result<Self> {
        Self::with_trace(m, 1.0)
    }

    /// Validates Hermiticity, positivity and the given trace.
    pub fn with_trace(m: CMatrix, trace: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!("{}x{} is not square", m.nrows(), m.ncols())));
        }
        let dev = hermitian_deviation(&m);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        let tr = m.trace();
        if (tr.re - trace).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {} differs from {}", tr, trace)));
        }
        let min = hermitian_eigenvalues(&m)?.into_iter().fold(f64::INFINITY, f64::min);
        if min < -PSD_TOL {
            return Err(Error::InvalidState(format!("minimum eigenvalue {min:e} is negative")));
        }
        Ok(DensityMatrix { m })
    }

    /// Wraps a matrix without validation; for intermediate results whose
    /// invariants follow from construction.
    pub fn new_unchecked(m: CMatrix) -> Self {
        DensityMatrix { m }
    }

    /// `|ψ⟩⟨ψ|` for a normalized ket.
    pub fn pure(psi: &Ket) -> Result<Self> {
        if !psi.is_normalized() {
            return Err(Error::InvalidState(format!("ket norm² {} is not 1", psi.norm_sqr())));
        }
        Ok(DensityMatrix { m: psi.projector() })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix {
            m: CMatrix::identity(dim, dim) * C64::new(1.0 / dim as f64, 0.0),
        }
    }

    /// Diagonal state in the computational basis.
    pub fn diagonal(probs: &[f64]) -> Result<Self> {
        let n = probs.len();
        Self::new(CMatrix::from_fn(n, n, |r, c| {
            if r == c {
                C64::new(probs[r], 0.0)
            } else {
                ZERO
            }
        }))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        hermitian_eigenvalues(&self.m)
    }

    /// Mixture `w * self + (1 - w) * other`.
    pub fn mix(&self, w: f64, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            m: &self.m * C64::new(w, 0.0) + &other.m * C64::new(1.0 - w, 0.0),
        }
    }

    /// `U ρ U†`
    pub fn conjugate_by(&self, u: &CMatrix) -> DensityMatrix {
        DensityMatrix {
            m: u * &self.m * u.adjoint(),
        }
    }
}

/// Kronecker product with the left operand as the most significant factor.
pub trait Tensor {
    fn tensor(&self, other: &Self) -> Self;
}

impl Tensor for Ket {
    fn tensor(&self, other: &Ket) -> Ket {
        let mut amps = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amps {
            amps.extend(other.amps.iter().map(|b| a * b));
        }
        Ket::new(amps)
    }
}

impl Tensor for CMatrix {
    fn tensor(&self, other: &CMatrix) -> CMatrix {
        self.kronecker(other)
    }
}

impl Tensor for DensityMatrix {
    fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            m: self.m.kronecker(&other.m),
        }
    }
}

pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for r in 0..n {
        for c in r..n {
            dev = dev.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    dev
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{}x{} is not square", m.nrows(), m.ncols())));
    }
    let dev = hermitian_deviation(m);
    if dev > SPECTRAL_HERMITIAN_TOL {
        return Err(Error::NotHermitian(dev));
    }
    // symmetrize away the sub-tolerance anti-Hermitian part
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Reduced state over the factors listed in `keep`.
///
/// `dims` lists the factor dimensions (most significant first); kept factors
/// stay in their original order regardless of the order of `keep`.
pub fn partial_trace(rho: &DensityMatrix, dims: &[usize], keep: &[usize]) -> Result<DensityMatrix> {
    let total: usize = dims.iter().product();
    if total != rho.dim() || dims.is_empty() {
        return Err(Error::Dimension(format!(
            "factor dimensions {:?} do not multiply to {}",
            dims,
            rho.dim()
        )));
    }
    let mut kept = vec![false; dims.len()];
    for &k in keep {
        if k >= dims.len() || kept[k] {
            return Err(Error::Dimension(format!("invalid kept factor list {keep:?}")));
        }
        kept[k] = true;
    }
    let kept_dim: usize = dims.iter().zip(&kept).filter(|(_, &k)| k).map(|(d, _)| d).product();

    // split every full index into (kept index, traced index)
    let split: Vec<(usize, usize)> = (0..total)
        .map(|mut idx| {
            let (mut ki, mut ti, mut kstride, mut tstride) = (0, 0, 1, 1);
            for (f, &d) in dims.iter().enumerate().rev() {
                let digit = idx % d;
                idx /= d;
                if kept[f] {
                    ki += digit * kstride;
                    kstride *= d;
                } else {
                    ti += digit * tstride;
                    tstride *= d;
                }
            }
            (ki, ti)
        })
        .collect();

    let m = rho.matrix();
    let mut out = CMatrix::zeros(kept_dim, kept_dim);
    for r in 0..total {
        let (kr, tr) = split[r];
        for c in 0..total {
            let (kc, tc) = split[c];
            if tr == tc {
                out[(kr, kc)] += m[(r, c)];
            }
        }
    }
    Ok(DensityMatrix::new_unchecked(out))
}

/// Sum of absolute eigenvalues of a Hermitian matrix.
pub fn trace_norm(m: &CMatrix) -> Result<f64> {
    Ok(hermitian_eigenvalues(m)?.iter().map(|l| l.abs()).sum())
}

/// Shannon entropy in bits of a probability vector, with `0 log 0 = 0`.
fn shannon_bits(probs: impl IntoIterator<Item = f64>) -> f64 {
    probs
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum::<f64>()
        .max(0.0)
}

/// Von Neumann entropy in bits.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    let ev = rho.eigenvalues()?;
    if let Some(&min) = ev.first() {
        if min < -PSD_TOL {
            return Err(Error::InvalidState(format!("minimum eigenvalue {min:e} is negative")));
        }
    }
    let tr: f64 = ev.iter().sum();
    if (tr - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidState(format!("trace {tr} is not 1")));
    }
    Ok(shannon_bits(ev.into_iter().map(|l| l.max(0.0))))
}

/// Binary Shannon entropy `h(x)` in bits.
pub fn binary_entropy(x: f64) -> Result<f64> {
    check_probability("x", x)?;
    Ok(shannon_bits([x, 1.0 - x]))
}

/// The Bell basis `φ0 = Φ+, φ1 = Φ-, φ2 = Ψ+, φ3 = Ψ-`.
#[derive(Clone, Debug)]
pub struct BellBasis {
    pub states: [Ket; 4],
}

impl Default for BellBasis {
    fn default() -> Self {
        Self::new()
    }
}

impl BellBasis {
    pub fn new() -> Self {
        BellBasis {
            states: [0, 1, 2, 3].map(bell_state),
        }
    }

    /// Change-of-basis matrix whose column `i` is `φ_i` in the computational basis.
    pub fn matrix(&self) -> CMatrix {
        CMatrix::from_fn(4, 4, |r, c| self.states[c].amps[r])
    }
}

/// Bell state `φ_index` as a 4-dimensional ket.
pub fn bell_state(index: usize) -> Ket {
    let s = FRAC_1_SQRT_2;
    match index {
        0 => Ket::from_real(&[s, 0.0, 0.0, s]),
        1 => Ket::from_real(&[s, 0.0, 0.0, -s]),
        2 => Ket::from_real(&[0.0, s, s, 0.0]),
        3 => Ket::from_real(&[0.0, s, -s, 0.0]),
        _ => panic!("Bell index {index} out of range"),
    }
}

/// Coefficients `c_i = ⟨φ_i|ψ⟩` of a two-qubit vector.
pub fn bell_coefficients(psi: &Ket) -> Result<[C64; 4]> {
    if psi.dim() != 4 {
        return Err(Error::Dimension(format!("expected a two-qubit ket, got dim {}", psi.dim())));
    }
    let a = &psi.amps;
    let s = FRAC_1_SQRT_2;
    Ok([
        (a[0] + a[3]) * s,
        (a[0] - a[3]) * s,
        (a[1] + a[2]) * s,
        (a[1] - a[2]) * s,
    ])
}

/// Born probabilities of a Bell measurement.
pub fn bell_projection_probs(psi: &Ket) -> Result<[f64; 4]> {
    if !psi.is_normalized() {
        return Err(Error::InvalidState(format!("ket norm² {} is not 1", psi.norm_sqr())));
    }
    Ok(bell_coefficients(psi)?.map(|c| c.norm_sqr()))
}

fn qubit_stride(dim: usize, qubit: usize) -> Result<usize> {
    let span = 1usize
        .checked_shl(qubit as u32 + 1)
        .ok_or_else(|| Error::Dimension(format!("qubit index {qubit} too large")))?;
    if !dim.is_multiple_of(span) {
        return Err(Error::Dimension(format!(
            "dimension {dim} has no qubit factor at index {qubit}"
        )));
    }
    Ok(dim / span)
}

/// Probability of reading `outcome` on `qubit` (counted among the leading
/// qubit factors) and the renormalized post-measurement ket.
pub fn z_project_qubit(psi: &Ket, qubit: usize, outcome: u8) -> Result<(f64, Ket)> {
    let stride = qubit_stride(psi.dim(), qubit)?;
    let bit = |idx: usize| ((idx / stride) % 2) as u8;
    let prob: f64 = psi
        .amps
        .iter()
        .enumerate()
        .filter(|(i, _)| bit(*i) == outcome)
        .map(|(_, a)| a.norm_sqr())
        .sum();
    if prob <= 1e-15 {
        return Err(Error::ZeroProbabilityBranch { qubit, outcome });
    }
    let scale = 1.0 / prob.sqrt();
    let amps = psi
        .amps
        .iter()
        .enumerate()
        .map(|(i, a)| if bit(i) == outcome { a * scale } else { ZERO })
        .collect();
    Ok((prob, Ket::new(amps)))
}

/// Samples a computational-basis measurement of one qubit. The collapsed ket
/// carries `|r⟩` on the measured qubit, which is exactly the state a
/// measure-and-resend party returns.
pub fn z_measure_qubit<R: Rng + ?Sized>(psi: &Ket, qubit: usize, rng: &mut R) -> Result<(u8, Ket)> {
    if !psi.is_normalized() {
        return Err(Error::InvalidState(format!("ket norm² {} is not 1", psi.norm_sqr())));
    }
    let stride = qubit_stride(psi.dim(), qubit)?;
    let p1: f64 = psi
        .amps
        .iter()
        .enumerate()
        .filter(|(i, _)| (i / stride) % 2 == 1)
        .map(|(_, a)| a.norm_sqr())
        .sum();
    let outcome = u8::from(rng.random::<f64>() < p1);
    let (_, post) = z_project_qubit(psi, qubit, outcome)?;
    Ok((outcome, post))
}

/// Complex vector with i.i.d. standard normal real and imaginary parts.
pub fn random_gaussian_ket<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Ket {
    Ket::new(
        (0..dim)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect(),
    )
}

/// Haar-random unit vector.
pub fn random_ket<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Ket {
    random_gaussian_ket(dim, rng)
        .normalized()
        .expect("gaussian vector is nonzero almost surely")
}

/// Haar-random unitary from the QR decomposition of a Ginibre matrix.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for c in 0..dim {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for row in 0..dim {
            q[(row, c)] *= phase;
        }
    }
    q
}

/// Random mixed state of the given rank.
pub fn random_density_matrix<R: Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> DensityMatrix {
    let mut m = CMatrix::zeros(dim, dim);
    for _ in 0..rank.max(1) {
        m += random_gaussian_ket(dim, rng).projector();
    }
    let tr = m.trace().re;
    DensityMatrix::new_unchecked(m / C64::new(tr, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn tensor_basis_and_distributivity() {
        let zero = Ket::basis(2, 0);
        let one = Ket::basis(2, 1);
        assert_eq!(zero.tensor(&zero), Ket::basis(4, 0));

        let plus = zero.plus(&one).scaled(c(FRAC_1_SQRT_2, 0.0));
        let got = plus.tensor(&one);
        let want = Ket::from_real(&[0.0, FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2]);
        for (a, b) in got.amplitudes().iter().zip(want.amplitudes()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn tensor_of_states_has_unit_trace() {
        let phi = DensityMatrix::pure(&bell_state(0)).unwrap();
        let rho = phi.tensor(&DensityMatrix::maximally_mixed(2));
        assert_eq!(rho.dim(), 8);
        assert!(close(rho.trace(), 1.0, 1e-12));
        DensityMatrix::new(rho.into_matrix()).unwrap();
    }

    #[test]
    fn partial_trace_of_bell_pair_is_maximally_mixed() {
        let phi = DensityMatrix::pure(&bell_state(0)).unwrap();
        for keep in [[0], [1]] {
            let red = partial_trace(&phi, &[2, 2], &keep).unwrap();
            let diff = red.matrix() - DensityMatrix::maximally_mixed(2).matrix();
            assert!(diff.norm() < 1e-14);
        }
        let same = partial_trace(&phi, &[2, 2], &[0, 1]).unwrap();
        assert!((same.matrix() - phi.matrix()).norm() < 1e-15);
    }

    #[test]
    fn partial_trace_removes_b_from_classical_quantum_state() {
        // Σ p(x,y)|x,y⟩⟨x,y| ⊗ ρ_C^(x,y) traced over B gives Σ_x p(x)|x⟩⟨x| ⊗ ρ_C^(x)
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = [[0.4, 0.1], [0.15, 0.35]];
        let states: Vec<Vec<DensityMatrix>> = (0..2)
            .map(|_| (0..2).map(|_| random_density_matrix(3, 2, &mut rng)).collect())
            .collect();
        let mut full = CMatrix::zeros(12, 12);
        let mut expected = CMatrix::zeros(6, 6);
        for x in 0..2 {
            let px = p[x][0] + p[x][1];
            let mut cond = CMatrix::zeros(3, 3);
            for y in 0..2 {
                let reg = Ket::basis(4, 2 * x + y).projector();
                full += reg.kronecker(states[x][y].matrix()) * c(p[x][y], 0.0);
                cond += states[x][y].matrix() * c(p[x][y] / px, 0.0);
            }
            expected += Ket::basis(2, x).projector().kronecker(&cond) * c(px, 0.0);
        }
        let rho = DensityMatrix::new(full).unwrap();
        let red = partial_trace(&rho, &[2, 2, 3], &[0, 2]).unwrap();
        assert!((red.matrix() - expected).norm() < 1e-12);
        assert!(close(red.trace(), 1.0, 1e-12));
    }

    #[test]
    fn partial_trace_rejects_bad_dims() {
        let rho = DensityMatrix::maximally_mixed(4);
        assert!(matches!(partial_trace(&rho, &[2, 3], &[0]), Err(Error::Dimension(_))));
        assert!(matches!(partial_trace(&rho, &[2, 2], &[2]), Err(Error::Dimension(_))));
    }

    #[test]
    fn trace_norm_basic_cases() {
        assert_eq!(trace_norm(&CMatrix::zeros(3, 3)).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_density_matrix(5, 3, &mut rng);
        assert!(close(trace_norm(rho.matrix()).unwrap(), 1.0, 1e-12));
        let mut bad = CMatrix::zeros(2, 2);
        bad[(0, 1)] = c(1.0, 0.0);
        assert!(matches!(trace_norm(&bad), Err(Error::NotHermitian(_))));
    }

    /// Reference eigenvalues of `|a⟩⟨b| + |b⟩⟨a|` from its 2x2 block in the
    /// orthonormal frame `{ã, ζ}` built by Gram-Schmidt.
    fn two_by_two_block_trace_norm(a: &Ket, b: &Ket) -> f64 {
        let alpha = a.norm_sqr().sqrt();
        let a_hat = a.scaled(c(1.0 / alpha, 0.0));
        let x = a_hat.inner(b);
        let resid = b.minus(&a_hat.scaled(x));
        let y = resid.norm_sqr().sqrt();
        let zeta = resid.scaled(c(1.0 / y, 0.0));
        let basis = [a_hat, zeta];
        let rho = a.outer(b) + b.outer(a);
        let mut blk = [[C64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let v = basis[j].apply(&rho);
                blk[i][j] = basis[i].inner(&v);
            }
        }
        // closed-form eigenvalues of a Hermitian 2x2
        let (p, q) = (blk[0][0].re, blk[1][1].re);
        let mean = (p + q) / 2.0;
        let rad = (((p - q) / 2.0).powi(2) + blk[0][1].norm_sqr()).sqrt();
        (mean + rad).abs() + (mean - rad).abs()
    }

    #[test]
    fn trace_norm_of_zero_trace_dyad_matches_block_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dim in [2, 3, 5, 8] {
            let a = random_gaussian_ket(dim, &mut rng);
            let mut b = random_gaussian_ket(dim, &mut rng);
            let re = a.inner(&b).re / a.norm_sqr();
            b.add_scaled(c(-re, 0.0), &a);
            let ab = a.inner(&b);
            assert!(ab.re.abs() < 1e-12);
            let rho = a.outer(&b) + b.outer(&a);
            let got = trace_norm(&rho).unwrap();
            let closed = 2.0 * (a.norm_sqr() * b.norm_sqr() - ab.norm_sqr()).sqrt();
            let oracle = two_by_two_block_trace_norm(&a, &b);
            assert!(close(got, oracle, 1e-10), "{got} vs {oracle}");
            assert!(close(got, closed, 1e-10), "{got} vs {closed}");
        }
    }

    #[test]
    fn entropy_cases() {
        let pure = DensityMatrix::pure(&random_ket(6, &mut ChaCha8Rng::seed_from_u64(3))).unwrap();
        assert!(close(von_neumann_entropy(&pure).unwrap(), 0.0, 1e-9));
        let mixed = DensityMatrix::maximally_mixed(2);
        assert!(close(von_neumann_entropy(&mixed).unwrap(), 1.0, 1e-12));
        for q in [0.0, 0.03, 0.11, 0.5, 0.9] {
            let d = DensityMatrix::diagonal(&[1.0 - q, q]).unwrap();
            assert!(close(von_neumann_entropy(&d).unwrap(), binary_entropy(q).unwrap(), 1e-12));
        }
    }

    #[test]
    fn binary_entropy_values() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!(close(binary_entropy(0.5).unwrap(), 1.0, 1e-15));
        // eigen-based oracle
        let d = DensityMatrix::new(
            bell_basis_rotation() * DensityMatrix::diagonal(&[0.89, 0.11, 0.0, 0.0]).unwrap().matrix()
                * bell_basis_rotation().adjoint(),
        )
        .unwrap();
        assert!(close(binary_entropy(0.11).unwrap(), von_neumann_entropy(&d).unwrap(), 1e-12));
        assert!(close(binary_entropy(0.11).unwrap(), 0.4999162, 1e-6));
        assert!(binary_entropy(-0.1).is_err());
        assert!(binary_entropy(1.5).is_err());
    }

    fn bell_basis_rotation() -> CMatrix {
        BellBasis::new().matrix()
    }

    #[test]
    fn bell_basis_is_orthonormal() {
        let b = BellBasis::new();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((b.states[i].inner(&b.states[j]) - c(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn bell_projection_examples() {
        let p = bell_projection_probs(&bell_state(0)).unwrap();
        assert!(close(p[0], 1.0, 1e-15) && p[1..].iter().all(|&x| x < 1e-15));

        let p = bell_projection_probs(&Ket::basis(4, 0)).unwrap();
        let want = [0.5, 0.5, 0.0, 0.0];
        assert!(p.iter().zip(want).all(|(a, b)| close(*a, b, 1e-15)));

        let q: f64 = 0.07;
        let psi = bell_state(0)
            .scaled(c((1.0 - q).sqrt(), 0.0))
            .plus(&bell_state(2).scaled(c(q.sqrt(), 0.0)));
        let p = bell_projection_probs(&psi).unwrap();
        let want = [1.0 - q, 0.0, q, 0.0];
        assert!(p.iter().zip(want).all(|(a, b)| close(*a, b, 1e-14)));

        assert!(matches!(bell_projection_probs(&Ket::basis(8, 0)), Err(Error::Dimension(_))));
    }

    #[test]
    fn z_measure_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (bit, post) = z_measure_qubit(&Ket::basis(2, 0), 0, &mut rng).unwrap();
        assert_eq!(bit, 0);
        assert_eq!(post, Ket::basis(2, 0));

        let mut counts = [0usize; 2];
        for _ in 0..4000 {
            let (bit, post) = z_measure_qubit(&bell_state(0), 0, &mut rng).unwrap();
            counts[bit as usize] += 1;
            let want = Ket::basis(4, if bit == 0 { 0 } else { 3 });
            assert!(post.minus(&want).norm_sqr() < 1e-24);
        }
        // 1/2 within 5 sigma
        assert!((counts[0] as f64 - 2000.0).abs() < 5.0 * 1000f64.sqrt());

        assert!(matches!(
            z_project_qubit(&Ket::basis(2, 0), 0, 1),
            Err(Error::ZeroProbabilityBranch { .. })
        ));
    }

    #[test]
    fn z_measure_joint_distribution_of_symmetric_state() {
        let q: f64 = 0.2;
        let psi = bell_state(0)
            .scaled(c((1.0 - q).sqrt(), 0.0))
            .plus(&bell_state(2).scaled(c(q.sqrt(), 0.0)));
        // exact joint probabilities via sequential projections
        let mut joint = [[0.0; 2]; 2];
        for a in 0..2u8 {
            let (pa, post) = z_project_qubit(&psi, 0, a).unwrap();
            for b in 0..2u8 {
                let pb = z_project_qubit(&post, 1, b).map(|(p, _)| p).unwrap_or(0.0);
                joint[a as usize][b as usize] = pa * pb;
            }
        }
        assert!(close(joint[0][0], (1.0 - q) / 2.0, 1e-14));
        assert!(close(joint[1][1], (1.0 - q) / 2.0, 1e-14));
        assert!(close(joint[0][1], q / 2.0, 1e-14));
        assert!(close(joint[1][0], q / 2.0, 1e-14));
    }

    #[test]
    fn z_measure_on_ancilla_extended_ket() {
        // qubit 1 of a (2, 2, 3) layout
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let psi = random_ket(12, &mut rng);
        let (p0, post0) = z_project_qubit(&psi, 1, 0).unwrap();
        let (p1, _) = z_project_qubit(&psi, 1, 1).unwrap();
        assert!(close(p0 + p1, 1.0, 1e-12));
        for (i, a) in post0.amplitudes().iter().enumerate() {
            if (i / 3) % 2 == 1 {
                assert_eq!(a.norm(), 0.0);
            }
        }
    }
}
