//! Server and channel models: the honest Bell-measuring server, the
//! semi-honest server behind two depolarizing channels, and adversarial
//! attack operators stored by their Bell-basis images.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{check_probability, Error, Result};
use crate::quantum::{
    bell_coefficients, bell_state, hermitian_deviation, random_gaussian_ket, random_unitary, CMatrix, DensityMatrix,
    Ket, Tensor, C64,
};

/// Tolerance on the isometry and symmetry conditions of an attack.
pub const ATTACK_TOL: f64 = 1e-8;
/// Returned two-qubit vectors with smaller Bell-coefficient norm are rejected.
pub const DEGENERATE_NORM: f64 = 1e-12;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Forward (`p`) and reverse (`q`) depolarizing probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepolarizingPair {
    pub p: f64,
    pub q: f64,
}

impl DepolarizingPair {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        check_probability("p", p)?;
        check_probability("q", q)?;
        Ok(DepolarizingPair { p, q })
    }
}

/// The classical announcement made by the server.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Message {
    Plus,
    Minus,
}

impl Message {
    pub fn as_i8(self) -> i8 {
        match self {
            Message::Plus => 1,
            Message::Minus => -1,
        }
    }
}

/// `(1 - λ) ρ + λ I/d`
pub fn depolarize(rho: &DensityMatrix, lambda: f64) -> Result<DensityMatrix> {
    check_probability("lambda", lambda)?;
    Ok(rho.mix(1.0 - lambda, &DensityMatrix::maximally_mixed(rho.dim())))
}

/// `⟨f_i|f_i⟩` for an honest Bell measurement behind a reverse depolarizing
/// channel of strength `q`.
pub fn semi_honest_f_norms(q: f64) -> Result<[f64; 4]> {
    check_probability("q", q)?;
    Ok([q / 4.0, 1.0 - 0.75 * q, q / 4.0, q / 4.0])
}

/// The state the server sends in step one, `Σ α_ij |ij⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialState {
    alpha: [C64; 4],
}

impl InitialState {
    pub fn new(alpha: [C64; 4]) -> Result<Self> {
        let n: f64 = alpha.iter().map(|a| a.norm_sqr()).sum();
        if (n - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("Σ|α_ij|² = {n} is not 1")));
        }
        Ok(InitialState { alpha })
    }

    /// `|Φ+⟩`
    pub fn bell() -> Self {
        Self::symmetric(0.0).expect("Q = 0 is valid")
    }

    /// `√(1-Q)|Φ+⟩ + √Q|Ψ+⟩`
    pub fn symmetric(q: f64) -> Result<Self> {
        Self::symmetric_with_phases(q, [0.0; 4])
    }

    /// `Σ e^{iθ_jk} p_jk |jk⟩` with `p_jj = √((1-Q)/2)` and `p_jk = √(Q/2)` otherwise.
    pub fn symmetric_with_phases(q: f64, theta: [f64; 4]) -> Result<Self> {
        check_probability("Q", q)?;
        let same = ((1.0 - q) / 2.0).sqrt();
        let diff = (q / 2.0).sqrt();
        let mags = [same, diff, diff, same];
        Self::new(std::array::from_fn(|i| C64::from_polar(mags[i], theta[i])))
    }

    pub fn alpha(&self) -> &[C64; 4] {
        &self.alpha
    }

    pub fn ket(&self) -> Ket {
        Ket::new(self.alpha.to_vec())
    }

    /// Probability that Z measurements by both users disagree.
    pub fn mismatch_probability(&self) -> f64 {
        self.alpha[1].norm_sqr() + self.alpha[2].norm_sqr()
    }
}

/// A server attack `U|φ_i⟩ = |e_i⟩|+1⟩ + |f_i⟩|-1⟩`, with `e_i, f_i` living in
/// the returned two qubits tensored with a `d_C`-dimensional ancilla.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackOperator {
    ancilla_dim: usize,
    e: [Ket; 4],
    f: [Ket; 4],
}

impl AttackOperator {
    /// Checks dimensions only; see [`validate_attack`] for the isometry test.
    pub fn new(ancilla_dim: usize, e: [Ket; 4], f: [Ket; 4]) -> Result<Self> {
        if ancilla_dim == 0 {
            return Err(Error::InvalidAttack("ancilla dimension must be positive".into()));
        }
        let dim = 4 * ancilla_dim;
        if let Some(bad) = e.iter().chain(&f).find(|k| k.dim() != dim) {
            return Err(Error::InvalidAttack(format!(
                "image vector has dimension {}, expected {dim}",
                bad.dim()
            )));
        }
        Ok(AttackOperator { ancilla_dim, e, f })
    }

    /// Constructs and requires [`validate_attack`] to pass.
    pub fn validated(ancilla_dim: usize, e: [Ket; 4], f: [Ket; 4], symmetric: bool) -> Result<Self> {
        let attack = Self::new(ancilla_dim, e, f)?;
        let report = validate_attack(&attack, symmetric);
        if !report.pass {
            return Err(Error::InvalidAttack(report.failure_summary()));
        }
        Ok(attack)
    }

    /// The honest server: Bell measurement, `-1` iff the outcome is `Φ-`,
    /// with the ancilla left in `|0⟩`.
    pub fn honest(ancilla_dim: usize) -> Self {
        let c0 = Ket::basis(ancilla_dim, 0);
        let zero = Ket::zeros(4 * ancilla_dim);
        let image = |i: usize| bell_state(i).tensor(&c0);
        AttackOperator {
            ancilla_dim,
            e: [image(0), zero.clone(), image(2), image(3)],
            f: [zero.clone(), image(1), zero.clone(), zero],
        }
    }

    /// Announces `-1` on every input.
    pub fn always_minus(ancilla_dim: usize) -> Self {
        let c0 = Ket::basis(ancilla_dim, 0);
        let zero = Ket::zeros(4 * ancilla_dim);
        AttackOperator {
            ancilla_dim,
            e: std::array::from_fn(|_| zero.clone()),
            f: std::array::from_fn(|i| bell_state(i).tensor(&c0)),
        }
    }

    /// Purified semi-honest server: the reverse depolarizing channel is
    /// dilated into a 16-dimensional environment of two-qubit Pauli labels held
    /// by the server, followed by the honest Bell measurement.
    pub fn semi_honest(q: f64) -> Result<Self> {
        check_probability("q", q)?;
        let paulis = single_qubit_paulis();
        let env = 16;
        let proj_minus = bell_state(1).projector();
        let proj_plus = CMatrix::identity(4, 4) - &proj_minus;
        let mut e: [Ket; 4] = std::array::from_fn(|_| Ket::zeros(4 * env));
        let mut f: [Ket; 4] = std::array::from_fn(|_| Ket::zeros(4 * env));
        for a in 0..4 {
            for b in 0..4 {
                let k = 4 * a + b;
                let weight = if k == 0 { 1.0 - 15.0 * q / 16.0 } else { q / 16.0 };
                let kraus = paulis[a].kronecker(&paulis[b]) * C64::new(weight.sqrt(), 0.0);
                let label = Ket::basis(env, k);
                for i in 0..4 {
                    let moved = bell_state(i).apply(&kraus);
                    e[i] = e[i].plus(&moved.apply(&proj_plus).tensor(&label));
                    f[i] = f[i].plus(&moved.apply(&proj_minus).tensor(&label));
                }
            }
        }
        Self::new(env, e, f)
    }

    pub fn ancilla_dim(&self) -> usize {
        self.ancilla_dim
    }

    /// Dimension of the image vectors, `4 * d_C`.
    pub fn image_dim(&self) -> usize {
        4 * self.ancilla_dim
    }

    pub fn e(&self) -> &[Ket; 4] {
        &self.e
    }

    pub fn f(&self) -> &[Ket; 4] {
        &self.f
    }

    pub fn f_norms(&self) -> [f64; 4] {
        std::array::from_fn(|i| self.f[i].norm_sqr())
    }

    /// Unnormalized `+1` and `-1` branches `(Σ c_i e_i, Σ c_i f_i)` for a
    /// returned two-qubit vector with Bell coefficients `c_i`.
    pub fn branches(&self, returned: &Ket) -> Result<(Ket, Ket)> {
        let c = bell_coefficients(returned)?;
        let cn: f64 = c.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if cn < DEGENERATE_NORM {
            return Err(Error::Degenerate(format!("returned vector has norm {cn:e}")));
        }
        let mut plus = Ket::zeros(self.image_dim());
        let mut minus = Ket::zeros(self.image_dim());
        for i in 0..4 {
            plus.add_scaled(c[i], &self.e[i]);
            minus.add_scaled(c[i], &self.f[i]);
        }
        Ok((plus, minus))
    }

    /// Probability of announcing `-1` on a normalized returned vector.
    pub fn minus_probability(&self, returned: &Ket) -> Result<f64> {
        Ok(self.branches(returned)?.1.norm_sqr())
    }

    /// The attack `U V` for a two-qubit unitary `V` given in the
    /// computational basis.
    pub fn precompose(&self, v: &CMatrix) -> Result<Self> {
        if v.nrows() != 4 || v.ncols() != 4 {
            return Err(Error::Dimension("pre-composed operator must be 4x4".into()));
        }
        let mut e: [Ket; 4] = std::array::from_fn(|_| Ket::zeros(self.image_dim()));
        let mut f = e.clone();
        for i in 0..4 {
            let c = bell_coefficients(&bell_state(i).apply(v))?;
            for j in 0..4 {
                e[i].add_scaled(c[j], &self.e[j]);
                f[i].add_scaled(c[j], &self.f[j]);
            }
        }
        Self::new(self.ancilla_dim, e, f)
    }

    pub fn to_spec(&self) -> AttackSpec {
        AttackSpec {
            d_c: self.ancilla_dim,
            e: self.e.iter().map(ket_to_pairs).collect(),
            f: self.f.iter().map(ket_to_pairs).collect(),
            symmetric: validate_attack(self, true).pass,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: AttackSpec = serde_json::from_str(&text)?;
        spec.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.to_spec())?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

fn single_qubit_paulis() -> [CMatrix; 4] {
    let i = C64::new(0.0, 1.0);
    [
        CMatrix::identity(2, 2),
        CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        CMatrix::from_row_slice(2, 2, &[ZERO, -i, i, ZERO]),
        CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
    ]
}

/// Applies the attack to the returned state and samples the announcement.
/// Returns the message and the normalized post-measurement state of the
/// returned qubits and ancilla.
pub fn attack_response<R: Rng + ?Sized>(
    attack: &AttackOperator,
    returned: &Ket,
    rng: &mut R,
) -> Result<(Message, Ket)> {
    let (plus, minus) = attack.branches(returned)?;
    let (pp, pm) = (plus.norm_sqr(), minus.norm_sqr());
    let total = pp + pm;
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidAttack(format!(
            "branch probabilities sum to {total}; the attack is not an isometry or the input is not normalized"
        )));
    }
    let (msg, branch) = if rng.random::<f64>() * total < pm {
        (Message::Minus, minus)
    } else {
        (Message::Plus, plus)
    };
    Ok((msg, branch.normalized()?))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariantCheck {
    pub name: String,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackReport {
    pub checks: Vec<InvariantCheck>,
    pub pass: bool,
}

impl AttackReport {
    pub fn failure_summary(&self) -> String {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("{} deviates by {:e} (tolerance {:e})", c.name, c.deviation, c.tolerance))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Gram matrix `⟨f_i|f_j⟩` of the minus-branch images.
pub fn f_gram(attack: &AttackOperator) -> CMatrix {
    CMatrix::from_fn(4, 4, |i, j| attack.f[i].inner(&attack.f[j]))
}

/// Checks `⟨e_i|e_j⟩ + ⟨f_i|f_j⟩ = δ_ij` and, when `symmetric`,
/// `Re⟨f0|f1⟩ = Re⟨f2|f3⟩ = 0`.
pub fn validate_attack(attack: &AttackOperator, symmetric: bool) -> AttackReport {
    let mut checks = Vec::new();
    let mut gram_dev = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            let g = attack.e[i].inner(&attack.e[j]) + attack.f[i].inner(&attack.f[j]);
            let want = if i == j { ONE } else { ZERO };
            gram_dev = gram_dev.max((g - want).norm());
        }
    }
    checks.push(InvariantCheck {
        name: "isometry".into(),
        deviation: gram_dev,
        tolerance: ATTACK_TOL,
        pass: gram_dev <= ATTACK_TOL,
    });
    if symmetric {
        for (a, b) in [(0, 1), (2, 3)] {
            let dev = attack.f[a].inner(&attack.f[b]).re.abs();
            checks.push(InvariantCheck {
                name: format!("re<f{a}|f{b}>"),
                deviation: dev,
                tolerance: ATTACK_TOL,
                pass: dev <= ATTACK_TOL,
            });
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    AttackReport { checks, pass }
}

/// Random attack satisfying the isometry and symmetry conditions.
pub fn random_symmetric_attack<R: Rng + ?Sized>(ancilla_dim: usize, rng: &mut R) -> AttackOperator {
    let u: f64 = rng.random();
    random_symmetric_attack_scaled(ancilla_dim, u.sqrt(), rng)
}

/// As [`random_symmetric_attack`], with the minus-branch images scaled to
/// `scale` times the largest magnitude that still admits an isometric
/// completion (`0` gives an attack that always announces `+1`).
pub fn random_symmetric_attack_scaled<R: Rng + ?Sized>(ancilla_dim: usize, scale: f64, rng: &mut R) -> AttackOperator {
    assert!(ancilla_dim >= 1);
    assert!((0.0..=1.0).contains(&scale));
    let dim = 4 * ancilla_dim;
    let mut f: [Ket; 4] = std::array::from_fn(|_| random_gaussian_ket(dim, rng));
    for (a, b) in [(0, 1), (2, 3)] {
        let r = f[a].inner(&f[b]).re / f[a].norm_sqr();
        let fa = f[a].clone();
        f[b].add_scaled(C64::new(-r, 0.0), &fa);
    }
    // uneven norms across the four images; positive real factors keep Re⟨f_a|f_b⟩ = 0
    for k in f.iter_mut() {
        let w: f64 = rng.random_range(0.05..1.0);
        *k = k.scaled(C64::new(w, 0.0));
    }
    let gram = CMatrix::from_fn(4, 4, |i, j| f[i].inner(&f[j]));
    let top = crate::quantum::hermitian_eigenvalues(&gram)
        .expect("Gram matrices are Hermitian")
        .last()
        .copied()
        .unwrap_or(0.0);
    let s = if top > 0.0 { scale / top.sqrt() } else { 0.0 };
    let f = f.map(|k| k.scaled(C64::new(s, 0.0)));

    // e-images with Gram I - s²G_f: columns of W D^{1/2} V† for I - s²G_f = V D V†
    let ge = CMatrix::identity(4, 4) - CMatrix::from_fn(4, 4, |i, j| f[i].inner(&f[j]));
    let ge = (&ge + ge.adjoint()) * C64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::new(ge);
    let sqrt_d = DMatrix::from_fn(4, 4, |r, c| {
        if r == c {
            C64::new(eig.eigenvalues[r].max(0.0).sqrt(), 0.0)
        } else {
            ZERO
        }
    });
    let frame = random_unitary(dim, rng).columns(0, 4).into_owned();
    let m = frame * sqrt_d * eig.eigenvectors.adjoint();
    let e: [Ket; 4] = std::array::from_fn(|j| Ket::new(m.column(j).iter().copied().collect()));
    AttackOperator::new(ancilla_dim, e, f).expect("dimensions are consistent")
}

/// State arriving back at the server when the users independently reflect
/// (with the given probabilities) or measure in Z and resend. The two
/// transit qubits are the leading factors of `rho`.
pub fn user_operations_channel(rho: &DensityMatrix, p_reflect_a: f64, p_reflect_b: f64) -> Result<DensityMatrix> {
    check_probability("p_reflect_a", p_reflect_a)?;
    check_probability("p_reflect_b", p_reflect_b)?;
    let dim = rho.dim();
    if !dim.is_multiple_of(4) {
        return Err(Error::Dimension(format!("dimension {dim} has no two-qubit prefix")));
    }
    let stride = dim / 4;
    let bit = |idx: usize, q: usize| (idx / stride) >> (1 - q) & 1;
    let dephase = |m: &CMatrix, q: usize| CMatrix::from_fn(dim, dim, |r, c| {
        if bit(r, q) == bit(c, q) {
            m[(r, c)]
        } else {
            ZERO
        }
    });
    let m = rho.matrix();
    let da = dephase(m, 0);
    let db = dephase(m, 1);
    let dab = dephase(&da, 1);
    let (ra, rb) = (p_reflect_a, p_reflect_b);
    let w = |x: f64| C64::new(x, 0.0);
    let out = m * w(ra * rb) + da * w((1.0 - ra) * rb) + db * w(ra * (1.0 - rb)) + dab * w((1.0 - ra) * (1.0 - rb));
    debug_assert!(hermitian_deviation(&out) < 1e-9);
    Ok(DensityMatrix::new_unchecked(out))
}

fn ket_to_pairs(k: &Ket) -> Vec<[f64; 2]> {
    k.amplitudes().iter().map(|a| [a.re, a.im]).collect()
}

fn pairs_to_ket(v: &[[f64; 2]]) -> Result<Ket> {
    if v.is_empty() {
        return Err(Error::InvalidAttack("empty image vector".into()));
    }
    Ok(Ket::new(v.iter().map(|p| C64::new(p[0], p[1])).collect()))
}

/// On-disk attack description; vectors are listed in Bell index order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    #[serde(rename = "d_C")]
    pub d_c: usize,
    pub e: Vec<Vec<[f64; 2]>>,
    pub f: Vec<Vec<[f64; 2]>>,
    pub symmetric: bool,
}

impl TryFrom<AttackSpec> for AttackOperator {
    type Error = Error;

    fn try_from(spec: AttackSpec) -> Result<Self> {
        if spec.e.len() != 4 || spec.f.len() != 4 {
            return Err(Error::InvalidAttack("e and f must each list four vectors".into()));
        }
        let mut e = Vec::with_capacity(4);
        let mut f = Vec::with_capacity(4);
        for i in 0..4 {
            e.push(pairs_to_ket(&spec.e[i])?);
            f.push(pairs_to_ket(&spec.f[i])?);
        }
        let e: [Ket; 4] = e.try_into().expect("four vectors");
        let f: [Ket; 4] = f.try_into().expect("four vectors");
        AttackOperator::validated(spec.d_c, e, f, spec.symmetric)
    }
}

impl Serialize for AttackOperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_spec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for AttackOperator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = AttackSpec::deserialize(d)?;
        spec.try_into().map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct InitialStateSpec {
    alpha: [[f64; 2]; 4],
}

impl Serialize for InitialState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        InitialStateSpec {
            alpha: self.alpha.map(|a| [a.re, a.im]),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for InitialState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = InitialStateSpec::deserialize(d)?;
        InitialState::new(spec.alpha.map(|p| C64::new(p[0], p[1]))).map_err(serde::de::Error::custom)
    }
}

/// How the server behaves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServerMode {
    Honest,
    SemiHonest {
        p: f64,
        q: f64,
    },
    Adversarial {
        initial_state: InitialState,
        attack: AttackOperator,
    },
}

impl ServerMode {
    pub fn validate(&self) -> Result<()> {
        match self {
            ServerMode::Honest => Ok(()),
            ServerMode::SemiHonest { p, q } => DepolarizingPair::new(*p, *q).map(|_| ()),
            ServerMode::Adversarial { attack, .. } => {
                let report = validate_attack(attack, false);
                if report.pass {
                    Ok(())
                } else {
                    Err(Error::InvalidAttack(report.failure_summary()))
                }
            }
        }
    }
}
