//! Two-slot testers for fixed-causal-order (FCO) circuits acting on a pair of
//! qubit operations, and the payoff operators of the discrimination task.
//!
//! All 16x16 operators live on A_I ⊗ A_O ⊗ B_I ⊗ B_O in that order, and are
//! contracted with Choi matrices as p(±) = Tr[W±ᵀ (A ⊗ B)].

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::channels::{choi_of_channel, choi_of_unitary, ChoiMatrix, QubitChannel, Rotation};
use crate::discrimination::{periodic_nodes, GridSpec};
use crate::error::{invalid, Error, Result};
use crate::fock::truncation_order;
use crate::linalg::{
    c64, hermitian_part, hs_inner, identity, kron, kron_all, max_abs_diff, min_eigenvalue,
    pairwise_sum_mats, paulis, to_dyn, trace, CMat, C64, M2, ONE, ZERO,
};
use crate::tensor::{embed, partial_trace, partial_transpose, permute_factors};

/// The four qubit ports, in tensor-factor order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Port {
    AI = 0,
    AO = 1,
    BI = 2,
    BO = 3,
}

const PORT_DIMS: [usize; 4] = [2; 4];

fn idx(ports: &[Port]) -> Vec<usize> {
    ports.iter().map(|&p| p as usize).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Order {
    #[serde(rename = "ab")]
    AThenB,
    #[serde(rename = "ba")]
    BThenA,
}

impl Order {
    pub fn label(self) -> &'static str {
        match self {
            Order::AThenB => "ab",
            Order::BThenA => "ba",
        }
    }

    /// (first input, first output, second input, second output).
    pub fn slots(self) -> [Port; 4] {
        match self {
            Order::AThenB => [Port::AI, Port::AO, Port::BI, Port::BO],
            Order::BThenA => [Port::BI, Port::BO, Port::AI, Port::AO],
        }
    }

    /// Canonical-order ports other than the final output: the support of the
    /// operator W with W₊ + W₋ = W ⊗ 1.
    pub fn y_ports(self) -> Vec<Port> {
        let o2 = self.slots()[3];
        [Port::AI, Port::AO, Port::BI, Port::BO].into_iter().filter(|&p| p != o2).collect()
    }
}

/// Deviations from the FCO tester conditions; all are zero for a valid tester.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TesterResiduals {
    /// max(0, -min eigenvalue of W₊)
    pub psd_plus: f64,
    pub psd_minus: f64,
    /// |W₊ + W₋ - Y ⊗ 1_{O2}|
    pub reconstruction: f64,
    /// |Tr_{I2} Y - Z ⊗ 1_{O1}|
    pub trace_condition: f64,
    /// |Tr Z - 1|
    pub normalization: f64,
}

impl TesterResiduals {
    pub fn max(&self) -> f64 {
        [self.psd_plus, self.psd_minus, self.reconstruction, self.trace_condition, self.normalization]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tester {
    pub order: Order,
    pub w_plus: CMat,
    pub w_minus: CMat,
    pub residuals: TesterResiduals,
}

/// Marginals of a tester total W: Y on `order.y_ports()` and Z on the first input.
pub(crate) fn tester_marginals(order: Order, w: &CMat) -> Result<(CMat, CMat)> {
    let [_, o1, i2, o2] = order.slots();
    let y = partial_trace(w, &PORT_DIMS, &[o2 as usize])?.scale(0.5);
    let y_ports = order.y_ports();
    let pos_i2 = y_ports.iter().position(|&p| p == i2).expect("I2 is kept");
    let ty = partial_trace(&y, &[2, 2, 2], &[pos_i2])?;
    // ty lives on (I1, O1) in canonical order, and I1 precedes O1 for both orders.
    debug_assert!((order.slots()[0] as usize) < (o1 as usize));
    let z = partial_trace(&ty, &[2, 2], &[1])?.scale(0.5);
    Ok((y, z))
}

pub fn tester_residuals(order: Order, w_plus: &CMat, w_minus: &CMat) -> Result<TesterResiduals> {
    for w in [w_plus, w_minus] {
        if w.nrows() != 16 || w.ncols() != 16 {
            return Err(Error::Dimension(format!("tester operators must be 16x16, got {}x{}", w.nrows(), w.ncols())));
        }
    }
    let w = w_plus + w_minus;
    let [_, _, i2, _] = order.slots();
    let (y, z) = tester_marginals(order, &w)?;
    let y_ports = order.y_ports();
    let reconstruction = max_abs_diff(&w, &embed(&y, &idx(&y_ports), &PORT_DIMS)?);
    let pos_i2 = y_ports.iter().position(|&p| p == i2).expect("I2 is kept");
    let ty = partial_trace(&y, &[2, 2, 2], &[pos_i2])?;
    let trace_condition = max_abs_diff(&ty, &kron(&z, &identity(2)));
    Ok(TesterResiduals {
        psd_plus: (-min_eigenvalue(w_plus)).max(0.0),
        psd_minus: (-min_eigenvalue(w_minus)).max(0.0),
        reconstruction: reconstruction.max(max_abs_diff(&w, &w.adjoint())),
        trace_condition,
        normalization: (trace(&z) - ONE).norm(),
    })
}

impl Tester {
    pub fn new(order: Order, w_plus: CMat, w_minus: CMat) -> Result<Self> {
        let residuals = tester_residuals(order, &w_plus, &w_minus)?;
        Ok(Self { order, w_plus, w_minus, residuals })
    }

    /// Outputs a fair coin whatever the operations: W± = 1/8.
    pub fn coin_flip(order: Order) -> Self {
        let half = identity(16).scale(0.125);
        Self::new(order, half.clone(), half).expect("coin-flip tester is well formed")
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.residuals.max() <= tol
    }
}

fn check_choi(c: &ChoiMatrix) -> Result<()> {
    if c.matrix.nrows() != 4 || c.matrix.ncols() != 4 {
        return Err(Error::Dimension("qubit Choi matrices must be 4x4".into()));
    }
    Ok(())
}

/// Generalized Born rule p(±) = Tr[W±ᵀ (A ⊗ B)].
pub fn apply_tester(t: &Tester, choi_a: &ChoiMatrix, choi_b: &ChoiMatrix) -> Result<(f64, f64)> {
    check_choi(choi_a)?;
    check_choi(choi_b)?;
    let ab = kron(&choi_a.matrix, &choi_b.matrix);
    Ok((transpose_pairing(&t.w_plus, &ab), transpose_pairing(&t.w_minus, &ab)))
}

/// Re Tr[Wᵀ G].
fn transpose_pairing(w: &CMat, g: &CMat) -> f64 {
    w.iter().zip(g.iter()).map(|(a, b)| (a * b).re).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Ideal,
    Finite { nbar: f64 },
    Haar,
}

/// Payoff operators: the averaged success probability of a tester is
/// ½Tr[W₊ᵀG₊] + ½Tr[W₋ᵀG₋].
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffPair {
    pub g_plus: CMat,
    pub g_minus: CMat,
    pub provenance: Provenance,
}

pub fn success_probability(t: &Tester, payoff: &PayoffPair) -> f64 {
    0.5 * transpose_pairing(&t.w_plus, &payoff.g_plus) + 0.5 * transpose_pairing(&t.w_minus, &payoff.g_minus)
}

fn word(ps: &[usize]) -> CMat {
    let p = paulis();
    kron_all(&ps.iter().map(|&k| to_dyn(&p[k])).collect::<Vec<_>>())
}

/// Closed forms for ideal unitaries, as sums of Pauli words on (A_I A_O)(B_I B_O).
pub fn assemble_g_ideal() -> PayoffPair {
    let (i, x, y, z) = (0, 1, 2, 3);
    let p = word(&[i, i]) + word(&[x, x]).scale(0.5) - word(&[y, y]).scale(0.5);
    let pm = word(&[i, i]) - word(&[x, x]).scale(0.5) + word(&[y, y]).scale(0.5);
    let q = word(&[x, x]) + word(&[y, y]);
    let r = word(&[x, y]) - word(&[y, x]);
    let zz = word(&[i, i]) - word(&[z, z]);
    let g_plus = (kron(&p, &p) + kron(&q, &q).scale(0.125) + kron(&r, &r).scale(0.125)).scale(0.25);
    let g_minus = (kron(&zz, &pm) - kron(&q, &q).scale(0.25) - kron(&r, &r).scale(0.25)).scale(0.25);
    PayoffPair { g_plus, g_minus, provenance: Provenance::Ideal }
}

/// Quadrature of Choi(A) ⊗ Choi(B) over both pair sets, with operation A
/// given by `choi_a(theta, phi)`.
pub(crate) fn assemble_g_quadrature<F>(grid: &GridSpec, choi_a: F) -> Result<(CMat, CMat)>
where
    F: Fn(f64, f64) -> Result<CMat> + Sync,
{
    let tas = periodic_nodes(grid.n_theta_a);
    let tbs = periodic_nodes(grid.n_theta_b);
    let plus: Vec<CMat> = periodic_nodes(grid.n_phi)
        .par_iter()
        .map(|&phi| -> Result<CMat> {
            let a = pairwise_sum_mats(&tas.iter().map(|&t| choi_a(t, phi)).collect::<Result<Vec<_>>>()?);
            let b = pairwise_sum_mats(
                &tbs.iter().map(|&t| choi_of_unitary(&Rotation::equatorial(t, phi).matrix).matrix).collect::<Vec<_>>(),
            );
            Ok(kron(&a, &b))
        })
        .collect::<Result<_>>()?;
    let n_plus = (grid.n_phi * grid.n_theta_a * grid.n_theta_b) as f64;
    let vbs = periodic_nodes(grid.n_vphi_b);
    let minus: Vec<CMat> = periodic_nodes(grid.n_phi_a)
        .par_iter()
        .map(|&pa| -> Result<CMat> {
            let a = choi_a(PI, pa)?;
            let b = pairwise_sum_mats(
                &vbs.iter().map(|&v| choi_of_unitary(&Rotation::pi_tilted(pa, v).matrix).matrix).collect::<Vec<_>>(),
            );
            Ok(kron(&a, &b))
        })
        .collect::<Result<_>>()?;
    let n_minus = (grid.n_phi_a * grid.n_vphi_b) as f64;
    Ok((
        hermitian_part(&pairwise_sum_mats(&plus).unscale(n_plus)),
        hermitian_part(&pairwise_sum_mats(&minus).unscale(n_minus)),
    ))
}

/// Payoffs when operation A is the coherent-field map of mean energy `nbar`.
pub fn assemble_g_finite(nbar: f64, grid: &GridSpec, tail_tol: f64) -> Result<PayoffPair> {
    if !(nbar.is_finite() && nbar > 0.0) {
        return Err(invalid(format!("mean photon number must be finite and > 0, got {nbar}")));
    }
    let trunc = truncation_order(nbar, tail_tol)?;
    let (g_plus, g_minus) = assemble_g_quadrature(grid, |theta, phi| {
        Ok(choi_of_channel(&QubitChannel::jaynes_cummings(theta, phi, nbar, trunc)?).matrix)
    })?;
    Ok(PayoffPair { g_plus, g_minus, provenance: Provenance::Finite { nbar } })
}

/// S1 = sum_i s_i ⊗ s_iᵀ on two factors.
fn s1() -> CMat {
    let p = paulis();
    (1..4).map(|i| kron(&to_dyn(&p[i]), &to_dyn(&p[i].transpose()))).fold(CMat::zeros(4, 4), |a, b| a + b)
}

/// S2 = sum_ij s_i s_jᵀ s_i s_jᵀ + s_i s_jᵀ s_j s_iᵀ on four factors.
fn s2() -> CMat {
    let p: Vec<CMat> = paulis().iter().map(to_dyn).collect();
    let t: Vec<CMat> = p.iter().map(|m| m.transpose()).collect();
    let mut out = CMat::zeros(16, 16);
    for i in 1..4 {
        for j in 1..4 {
            out += kron_all(&[p[i].clone(), t[j].clone(), p[i].clone(), t[j].clone()]);
            out += kron_all(&[p[i].clone(), t[j].clone(), p[j].clone(), t[i].clone()]);
        }
    }
    out
}

/// Ideal payoffs averaged over a common Haar-random frame, in closed form.
pub fn assemble_g_haar() -> PayoffPair {
    let id4 = identity(4);
    let s1 = s1();
    let one_s = kron(&id4, &s1);
    let s_one = kron(&s1, &id4);
    let ss = kron(&s1, &s1);
    let s2 = s2();
    let g_plus = (identity(16) + one_s.scale(1.0 / 3.0) + s_one.scale(1.0 / 3.0) + ss.scale(1.0 / 15.0) + s2.scale(1.0 / 15.0)).scale(0.25);
    let g_minus = (identity(16) - one_s.scale(1.0 / 3.0) - s_one.scale(1.0 / 3.0) + ss.scale(0.2) - s2.scale(2.0 / 15.0)).scale(0.25);
    PayoffPair { g_plus, g_minus, provenance: Provenance::Haar }
}

/// Haar-random 2x2 unitary: QR of a complex Gaussian matrix with the phases
/// of R's diagonal moved into Q.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R) -> M2 {
    let mut g = M2::zeros();
    for z in g.iter_mut() {
        *z = c64(rng.sample(StandardNormal), rng.sample(StandardNormal));
    }
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut out = q;
    for k in 0..2 {
        let d = r[(k, k)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        out.column_mut(k).scale_mut(1.0);
        for row in 0..2 {
            out[(row, k)] *= ph;
        }
    }
    out
}

/// The same frame change V on every port: K = V ⊗ V̄ ⊗ V ⊗ V̄.
pub fn frame_operator(v: &M2) -> CMat {
    let v = to_dyn(v);
    let vc = v.map(|z| z.conj());
    kron_all(&[v.clone(), vc.clone(), v, vc])
}

pub fn conjugate_payoff(payoff: &PayoffPair, v: &M2) -> PayoffPair {
    let k = frame_operator(v);
    PayoffPair {
        g_plus: &k * &payoff.g_plus * k.adjoint(),
        g_minus: &k * &payoff.g_minus * k.adjoint(),
        provenance: payoff.provenance,
    }
}

const HAAR_BLOCK: usize = 4096;

/// Monte-Carlo frame average with per-entry standard errors. Block `b` draws
/// from stream `b` of a ChaCha generator seeded with `seed`.
pub fn haar_average_with_stderr(payoff: &PayoffPair, samples: usize, seed: u64) -> Result<(PayoffPair, CMat, CMat)> {
    if samples == 0 {
        return Err(invalid("need at least one Haar sample"));
    }
    let blocks = samples.div_ceil(HAAR_BLOCK);
    let parts: Vec<[CMat; 4]> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let n = HAAR_BLOCK.min(samples - b * HAAR_BLOCK);
            let mut acc = [CMat::zeros(16, 16), CMat::zeros(16, 16), CMat::zeros(16, 16), CMat::zeros(16, 16)];
            for _ in 0..n {
                let c = conjugate_payoff(payoff, &haar_unitary(&mut rng));
                acc[0] += &c.g_plus;
                acc[1] += &c.g_minus;
                acc[2] += c.g_plus.map(|z| c64(z.re * z.re, z.im * z.im));
                acc[3] += c.g_minus.map(|z| c64(z.re * z.re, z.im * z.im));
            }
            acc
        })
        .collect();
    let sum = |k: usize| pairwise_sum_mats(&parts.iter().map(|p| p[k].clone()).collect::<Vec<_>>());
    let n = samples as f64;
    let mean_p = sum(0).unscale(n);
    let mean_m = sum(1).unscale(n);
    // Standard error per real and imaginary part, packed into one complex entry.
    let stderr = |sq: CMat, mean: &CMat| {
        CMat::from_fn(16, 16, |r, c| {
            let var_re = (sq[(r, c)].re / n - mean[(r, c)].re.powi(2)).max(0.0);
            let var_im = (sq[(r, c)].im / n - mean[(r, c)].im.powi(2)).max(0.0);
            c64((var_re / n).sqrt(), (var_im / n).sqrt())
        })
    };
    let se_p = stderr(sum(2), &mean_p);
    let se_m = stderr(sum(3), &mean_m);
    Ok((PayoffPair { g_plus: mean_p, g_minus: mean_m, provenance: payoff.provenance }, se_p, se_m))
}

pub fn haar_average_oracle(payoff: &PayoffPair, samples: usize, seed: u64) -> Result<PayoffPair> {
    Ok(haar_average_with_stderr(payoff, samples, seed)?.0)
}

/// Orthonormal basis of the 14-dimensional operator space left invariant by
/// a common frame change on all four ports.
#[derive(Debug, Clone)]
pub struct IsotropicBasis {
    pub ops: Vec<CMat>,
    /// Orthogonal projector acting on row-major vectorized 16x16 matrices.
    pub projector: CMat,
}

fn ket_one() -> CMat {
    CMat::from_column_slice(4, 1, &[ONE, ZERO, ZERO, ONE])
}

fn ket_sigma_y() -> CMat {
    let i = c64(0.0, 1.0);
    CMat::from_column_slice(4, 1, &[ZERO, i, -i, ZERO])
}

fn projector_of(k: &CMat) -> CMat {
    k * k.adjoint()
}

/// Antisymmetrized Pauli triple xyz + xzy + yxz - zyx - zxy - yzx.
fn pauli_triple() -> CMat {
    let w = |a, b, c| word(&[a, b, c]);
    w(1, 2, 3) + w(1, 3, 2) + w(2, 1, 3) - w(3, 2, 1) - w(3, 1, 2) - w(2, 3, 1)
}

fn spanning_operators() -> Result<Vec<CMat>> {
    use Port::*;
    let p1 = projector_of(&ket_one());
    let py = projector_of(&ket_sigma_y());
    let place = |op: &CMat, ports: &[Port]| embed(op, &idx(ports), &PORT_DIMS);
    let trip = pauli_triple();
    Ok(vec![
        identity(16),
        place(&p1, &[AI, AO])?,
        place(&p1, &[BI, BO])?,
        place(&kron(&p1, &p1), &[AI, AO, BI, BO])?,
        place(&p1, &[AI, BO])?,
        place(&p1, &[BI, AO])?,
        place(&kron(&p1, &p1), &[AI, BO, BI, AO])?,
        place(&py, &[AI, BI])?,
        place(&py, &[AO, BO])?,
        place(&kron(&py, &py), &[AI, BI, AO, BO])?,
        place(&trip, &[AI, AO, BI])?,
        place(&trip, &[AO, BI, BO])?,
        place(&trip, &[BI, BO, AI])?,
        place(&trip, &[BO, AI, AO])?,
    ])
}

pub const ISOTROPIC_DIM: usize = 14;
const RANK_THRESHOLD: f64 = 1e-8;

/// Builds the spanning list, orthonormalizes it under Tr[X†Y] and fails if
/// the numerical rank is not 14.
pub fn isotropic_basis() -> Result<IsotropicBasis> {
    let mut ops: Vec<CMat> = Vec::new();
    for op in spanning_operators()? {
        let scale = hs_inner(&op, &op).re.sqrt();
        let mut v = op;
        for _ in 0..2 {
            for b in &ops {
                let c = hs_inner(b, &v);
                v -= b.map(|z| z * c);
            }
        }
        let n = hs_inner(&v, &v).re.sqrt();
        if n > RANK_THRESHOLD * scale {
            ops.push(v.unscale(n));
        }
    }
    if ops.len() != ISOTROPIC_DIM {
        return Err(Error::Rank { found: ops.len(), expected: ISOTROPIC_DIM });
    }
    let mut projector = CMat::zeros(256, 256);
    for b in &ops {
        let v = DVector::from_iterator(256, b.transpose().iter().copied());
        projector += &v * v.adjoint();
    }
    Ok(IsotropicBasis { ops, projector })
}

impl IsotropicBasis {
    pub fn project(&self, m: &CMat) -> CMat {
        let mut out = CMat::zeros(16, 16);
        for b in &self.ops {
            out += b.map(|z| z * hs_inner(b, m));
        }
        out
    }
}

/// A fixed-order circuit: state preparation on (first input ⊗ memory m1), a
/// channel from (first output ⊗ m1) to (second input ⊗ m2), and a binary
/// measurement on (second output ⊗ m2).
#[derive(Debug, Clone)]
pub struct CircuitElements {
    pub order: Order,
    pub memory_in: usize,
    pub memory_out: usize,
    pub rho: CMat,
    /// Kraus operators of the middle channel; a single one for an isometry.
    pub channel: Vec<CMat>,
    pub povm: [CMat; 2],
}

impl CircuitElements {
    pub fn validate(&self) -> Result<()> {
        let (d1, d2) = (2 * self.memory_in, 2 * self.memory_out);
        let shape = |m: &CMat, r: usize, c: usize, what: &str| {
            if m.nrows() != r || m.ncols() != c {
                Err(Error::Dimension(format!("{what} is {}x{}, expected {r}x{c}", m.nrows(), m.ncols())))
            } else {
                Ok(())
            }
        };
        shape(&self.rho, d1, d1, "state")?;
        if self.channel.is_empty() {
            return Err(invalid("channel needs at least one Kraus operator"));
        }
        for k in &self.channel {
            shape(k, d2, d1, "channel Kraus operator")?;
        }
        for e in &self.povm {
            shape(e, d2, d2, "measurement effect")?;
        }
        let tol = 1e-10;
        if (trace(&self.rho) - ONE).norm() > tol || min_eigenvalue(&self.rho) < -tol || max_abs_diff(&self.rho, &self.rho.adjoint()) > tol {
            return Err(invalid("state must be a density matrix"));
        }
        let tp = self.channel.iter().fold(CMat::zeros(d1, d1), |a, k| a + k.adjoint() * k);
        if max_abs_diff(&tp, &identity(d1)) > tol {
            return Err(invalid("channel must be trace preserving"));
        }
        let sum = &self.povm[0] + &self.povm[1];
        if max_abs_diff(&sum, &identity(d2)) > tol || self.povm.iter().any(|e| min_eigenvalue(e) < -tol) {
            return Err(invalid("measurement effects must be positive and sum to the identity"));
        }
        Ok(())
    }

    /// Born-rule probabilities of the circuit run on operations with Kraus
    /// lists `a` and `b`, by direct simulation.
    pub fn simulate(&self, a: &[M2], b: &[M2]) -> Result<(f64, f64)> {
        self.validate()?;
        let (first, second) = match self.order {
            Order::AThenB => (a, b),
            Order::BThenA => (b, a),
        };
        let on_qubit = |ks: &[M2], m: &CMat, mem: usize| {
            ks.iter().fold(CMat::zeros(m.nrows(), m.ncols()), |acc, k| {
                let big = kron(&to_dyn(k), &identity(mem));
                acc + &big * m * big.adjoint()
            })
        };
        let s1 = on_qubit(first, &self.rho, self.memory_in);
        let s2 = self.channel.iter().fold(CMat::zeros(2 * self.memory_out, 2 * self.memory_out), |acc, k| acc + k * &s1 * k.adjoint());
        let s3 = on_qubit(second, &s2, self.memory_out);
        Ok(((&self.povm[0] * &s3).trace().re, (&self.povm[1] * &s3).trace().re))
    }
}

/// Choi matrix Σ_K |K⟩⟩⟨⟨K| of a Kraus list, input factor first.
fn choi_of_kraus(ks: &[CMat]) -> CMat {
    let (dout, din) = (ks[0].nrows(), ks[0].ncols());
    let mut m = CMat::zeros(din * dout, din * dout);
    for k in ks {
        let v = DVector::from_fn(din * dout, |r, _| k[(r % dout, r / dout)]);
        m += &v * v.adjoint();
    }
    m
}

/// Link product of the circuit elements:
/// W± = Tr_{m1 m2}[(E±ᵀ ⊗ 1)(C^{T_{m1 m2}} ⊗ 1)(ρ ⊗ 1)].
pub fn tester_from_circuit(c: &CircuitElements) -> Result<Tester> {
    c.validate()?;
    // Factors: I1, O1, I2, O2, m1, m2.
    let dims = [2, 2, 2, 2, c.memory_in, c.memory_out];
    let rho = embed(&c.rho, &[0, 4], &dims)?;
    let choi_c = partial_transpose(&choi_of_kraus(&c.channel), &[2, c.memory_in, 2, c.memory_out], &[1, 3])?;
    let chan = embed(&choi_c, &[1, 4, 2, 5], &dims)?;
    let base = &chan * &rho;
    let mut ws = Vec::with_capacity(2);
    for e in &c.povm {
        let eff = embed(&e.transpose(), &[3, 5], &dims)?;
        let w = partial_trace(&(&eff * &base), &dims, &[4, 5])?;
        let slots = idx(&c.order.slots());
        // w is ordered as the slots; reorder to A_I, A_O, B_I, B_O.
        let perm: Vec<usize> = (0..4).map(|p| slots.iter().position(|&s| s == p).expect("slots cover all ports")).collect();
        ws.push(hermitian_part(&permute_factors(&w, &PORT_DIMS, &perm)?));
    }
    let wm = ws.pop().expect("two effects");
    let wp = ws.pop().expect("two effects");
    Tester::new(c.order, wp, wm)
}

/// The B-before-A circuit that separates the two ideal pair sets perfectly:
/// a maximally entangled input on B_I ⊗ b, an isometry from B_O ⊗ b into
/// A_I ⊗ a1 ⊗ a2 (a2 three-dimensional), and a projective measurement.
pub fn optimal_circuit_ba() -> CircuitElements {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let phi_plus = DVector::from_vec(vec![c64(s, 0.0), ZERO, ZERO, c64(s, 0.0)]);
    let rho = &phi_plus * phi_plus.adjoint();
    // Rows index (A_I, a1, a2) as ai*6 + a1*3 + a2, columns (B_O, b) as bo*2 + b.
    let row = |ai: usize, a1: usize, a2: usize| ai * 6 + a1 * 3 + a2;
    let mut iso = CMat::zeros(12, 4);
    for a2 in 0..2 {
        let col = a2 * 2 + a2; // |00> -> a2 = 0, |11> -> a2 = 1
        iso[(row(0, 0, a2), col)] = c64(s, 0.0);
        iso[(row(1, 1, a2), col)] = c64(s, 0.0);
    }
    iso[(row(0, 1, 2), 1)] = ONE;
    iso[(row(1, 0, 2), 2)] = ONE;
    // Effects on (A_O, a1, a2) with the same index layout.
    let mut minus = CMat::zeros(12, 12);
    let ket = |entries: &[(usize, C64)]| {
        let mut v = DVector::zeros(12);
        for &(i, z) in entries {
            v[i] = z;
        }
        v
    };
    let h = c64(s, 0.0);
    for v in [
        ket(&[(row(0, 1, 0), h), (row(0, 1, 1), -h)]),
        ket(&[(row(1, 0, 0), h), (row(1, 0, 1), -h)]),
        ket(&[(row(0, 0, 2), h), (row(1, 1, 2), -h)]),
    ] {
        minus += &v * v.adjoint();
    }
    let plus = identity(12) - &minus;
    CircuitElements { order: Order::BThenA, memory_in: 2, memory_out: 6, rho, channel: vec![iso], povm: [plus, minus] }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfectDiscriminationCheck {
    pub max_abs_overlap: f64,
    pub max_norm_defect: f64,
    pub samples: usize,
}

/// Final pure state of a circuit with a pure input and an isometric channel,
/// run on ideal unitaries.
fn circuit_output(c: &CircuitElements, psi: &DVector<C64>, ua: &M2, ub: &M2) -> DVector<C64> {
    let (first, second) = match c.order {
        Order::AThenB => (ua, ub),
        Order::BThenA => (ub, ua),
    };
    let s1 = kron(&to_dyn(first), &identity(c.memory_in)) * psi;
    let s2 = &c.channel[0] * s1;
    kron(&to_dyn(second), &identity(c.memory_out)) * s2
}

/// Simulates the circuit on `samples` random draws from each pair set and
/// reports the largest overlap between a commuting and an anticommuting output.
pub fn verify_perfect_discrimination(c: &CircuitElements, samples: usize, seed: u64) -> Result<PerfectDiscriminationCheck> {
    c.validate()?;
    if c.channel.len() != 1 {
        return Err(invalid("state simulation needs an isometric channel"));
    }
    let (vals, vecs) = crate::linalg::hermitian_eigen(&c.rho);
    if vals[..vals.len() - 1].iter().any(|&v| v.abs() > 1e-12) {
        return Err(invalid("state simulation needs a pure input state"));
    }
    let psi: DVector<C64> = vecs.column(vecs.ncols() - 1).into_owned();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut angle = || rng.random_range(-PI..PI);
    let mut com = Vec::with_capacity(samples);
    let mut anti = Vec::with_capacity(samples);
    for _ in 0..samples {
        let (phi, ta, tb) = (angle(), angle(), angle());
        com.push(circuit_output(c, &psi, &Rotation::equatorial(ta, phi).matrix, &Rotation::equatorial(tb, phi).matrix));
        let (pa, vb) = (angle(), angle());
        anti.push(circuit_output(c, &psi, &Rotation::equatorial(PI, pa).matrix, &Rotation::pi_tilted(pa, vb).matrix));
    }
    let max_norm_defect = com.iter().chain(&anti).map(|v| (v.norm() - 1.0).abs()).fold(0.0, f64::max);
    let max_abs_overlap = com
        .par_iter()
        .map(|x| anti.iter().map(|y| x.dotc(y).norm()).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max);
    Ok(PerfectDiscriminationCheck { max_abs_overlap, max_norm_defect, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrimination::GridSpec;
    use crate::linalg::hermiticity_defect;

    fn random_channel(rng: &mut ChaCha8Rng, kraus: usize) -> Vec<M2> {
        // Stinespring: columns of a random isometry from 2 to 2*kraus dims.
        let d = 2 * kraus;
        let mut g = CMat::zeros(d, 2);
        for z in g.iter_mut() {
            *z = c64(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
        let q = g.qr().q();
        (0..kraus).map(|k| M2::from_fn(|i, j| q[(2 * k + i, j)])).collect()
    }

    fn random_circuit(rng: &mut ChaCha8Rng, order: Order) -> CircuitElements {
        let (m1, m2) = (2, 3);
        let mut g = CMat::zeros(2 * m1, 2 * m1);
        for z in g.iter_mut() {
            *z = c64(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
        let rho = &g * g.adjoint();
        let rho = rho.unscale(trace(&rho).re);
        let mut h = CMat::zeros(2 * 2 * m2, 2 * m1);
        for z in h.iter_mut() {
            *z = c64(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
        let q = h.qr().q();
        let channel: Vec<CMat> = (0..2).map(|k| q.rows(k * 2 * m2, 2 * m2).into_owned()).collect();
        let mut e = CMat::zeros(2 * m2, 2 * m2);
        for z in e.iter_mut() {
            *z = c64(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
        let e = &e * e.adjoint();
        let norm = crate::linalg::hermitian_eigen(&e).0.last().copied().unwrap();
        let ep = e.unscale(norm * 1.01);
        let em = identity(2 * m2) - &ep;
        CircuitElements { order, memory_in: m1, memory_out: m2, rho, channel, povm: [ep, em] }
    }

    #[test]
    fn coin_flip_tester_gives_fair_coin() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for order in [Order::AThenB, Order::BThenA] {
            let t = Tester::coin_flip(order);
            assert!(t.is_valid(1e-12));
            let a = choi_of_channel(&QubitChannel::new(random_channel(&mut rng, 2)));
            let b = choi_of_channel(&QubitChannel::new(random_channel(&mut rng, 3)));
            let (p, m) = apply_tester(&t, &a, &b).unwrap();
            assert!((p - 0.5).abs() < 1e-12 && (m - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn link_product_reproduces_simulated_circuits() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for order in [Order::AThenB, Order::BThenA] {
            for _ in 0..5 {
                let c = random_circuit(&mut rng, order);
                let t = tester_from_circuit(&c).unwrap();
                assert!(t.is_valid(1e-9), "{:?}", t.residuals);
                for _ in 0..20 {
                    let a = random_channel(&mut rng, 2);
                    let b = random_channel(&mut rng, 2);
                    let want = c.simulate(&a, &b).unwrap();
                    let got = apply_tester(
                        &t,
                        &choi_of_channel(&QubitChannel::new(a)),
                        &choi_of_channel(&QubitChannel::new(b)),
                    )
                    .unwrap();
                    assert!((got.0 - want.0).abs() < 1e-9 && (got.1 - want.1).abs() < 1e-9);
                    assert!((got.0 + got.1 - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn coin_circuit_yields_fair_coin_tester() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut c = random_circuit(&mut rng, Order::AThenB);
        let d = 2 * c.memory_out;
        c.povm = [identity(d).scale(0.5), identity(d).scale(0.5)];
        let t = tester_from_circuit(&c).unwrap();
        let a = choi_of_channel(&QubitChannel::new(random_channel(&mut rng, 2)));
        let b = choi_of_channel(&QubitChannel::new(random_channel(&mut rng, 2)));
        let (p, m) = apply_tester(&t, &a, &b).unwrap();
        assert!((p - 0.5).abs() < 1e-12 && (m - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ideal_payoff_traces_and_positivity() {
        let g = assemble_g_ideal();
        for m in [&g.g_plus, &g.g_minus] {
            assert!((trace(m).re - 4.0).abs() < 1e-12);
            assert!(min_eigenvalue(m) >= -1e-12);
            assert!(hermiticity_defect(m) < 1e-15);
        }
    }

    #[test]
    fn ideal_payoff_matches_quadrature() {
        let grid = GridSpec::uniform(64);
        let (p, m) = assemble_g_quadrature(&grid, |t, phi| Ok(choi_of_unitary(&Rotation::equatorial(t, phi).matrix).matrix)).unwrap();
        let g = assemble_g_ideal();
        assert!(max_abs_diff(&p, &g.g_plus) < 1e-6);
        assert!(max_abs_diff(&m, &g.g_minus) < 1e-6);
    }

    #[test]
    fn finite_payoff_approaches_ideal() {
        let g = assemble_g_finite(1e4, &GridSpec::uniform(24), 1e-12).unwrap();
        let ideal = assemble_g_ideal();
        assert!(max_abs_diff(&g.g_plus, &ideal.g_plus) <= 1e-3);
        assert!(max_abs_diff(&g.g_minus, &ideal.g_minus) <= 1e-3);
        assert!((trace(&g.g_plus).re - 4.0).abs() < 1e-6);
    }

    #[test]
    fn isotropic_basis_properties() {
        let b = isotropic_basis().unwrap();
        assert_eq!(b.ops.len(), 14);
        let p2 = &b.projector * &b.projector;
        assert!(max_abs_diff(&p2, &b.projector) < 1e-10);
        for (i, x) in b.ops.iter().enumerate() {
            for (j, y) in b.ops.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((hs_inner(x, y) - c64(want, 0.0)).norm() < 1e-12);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut h = CMat::zeros(16, 16);
        for z in h.iter_mut() {
            *z = c64(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
        let h = hermitian_part(&h);
        assert!(hermiticity_defect(&b.project(&h)) < 1e-12);
    }

    #[test]
    fn haar_payoff_is_isotropic_with_trace_four() {
        let b = isotropic_basis().unwrap();
        let g = assemble_g_haar();
        for m in [&g.g_plus, &g.g_minus] {
            assert!(max_abs_diff(&b.project(m), m) < 1e-10);
            assert!((trace(m).re - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_frame_leaves_payoff_unchanged() {
        let g = assemble_g_ideal();
        let c = conjugate_payoff(&g, &M2::identity());
        assert_eq!(c.g_plus, g.g_plus);
        assert_eq!(c.g_minus, g.g_minus);
    }

    #[test]
    fn haar_unitaries_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let u = haar_unitary(&mut rng);
            assert!((u.adjoint() * u - M2::identity()).iter().all(|z| z.norm() < 1e-14));
        }
    }

    #[test]
    fn monte_carlo_frame_average_matches_closed_form() {
        let ideal = assemble_g_ideal();
        let haar = assemble_g_haar();
        let (avg, se_p, se_m) = haar_average_with_stderr(&ideal, 100_000, 2024).unwrap();
        for (m, se, want) in [(&avg.g_plus, &se_p, &haar.g_plus), (&avg.g_minus, &se_m, &haar.g_minus)] {
            for k in 0..256 {
                let d = m[k] - want[k];
                assert!(d.re.abs() <= 5.0 * se[k].re + 1e-10, "entry {k}: {d} vs {}", se[k]);
                assert!(d.im.abs() <= 5.0 * se[k].im + 1e-10, "entry {k}: {d} vs {}", se[k]);
            }
        }
    }

    #[test]
    fn frame_average_residual_shrinks_with_samples() {
        let b = isotropic_basis().unwrap();
        let ideal = assemble_g_ideal();
        let resid = |n: usize| {
            let avg = haar_average_oracle(&ideal, n, 9).unwrap();
            max_abs_diff(&b.project(&avg.g_plus), &avg.g_plus)
        };
        let (small, large) = (resid(400), resid(25_600));
        // sqrt(64) = 8 times fewer fluctuations; allow generous slack.
        assert!(large < small / 3.0, "{small} {large}");
    }

    #[test]
    fn haar_average_is_deterministic_in_seed() {
        let g = assemble_g_ideal();
        let a = haar_average_oracle(&g, 5000, 42).unwrap();
        let b = haar_average_oracle(&g, 5000, 42).unwrap();
        assert_eq!(a.g_plus, b.g_plus);
        let c = haar_average_oracle(&g, 5000, 43).unwrap();
        assert_ne!(a.g_plus, c.g_plus);
    }

    #[test]
    fn optimal_circuit_elements() {
        let c = optimal_circuit_ba();
        c.validate().unwrap();
        let iso = &c.channel[0];
        assert!(max_abs_diff(&(iso.adjoint() * iso), &identity(4)) < 1e-15);
        // With both rotations trivial the output is |Φ+>|+>.
        let psi = DVector::from_vec(vec![c64(0.5f64.sqrt(), 0.0), ZERO, ZERO, c64(0.5f64.sqrt(), 0.0)]);
        let out = circuit_output(&c, &psi, &M2::identity(), &M2::identity());
        let h = 0.5;
        for (i, z) in out.iter().enumerate() {
            let want = match i {
                0 | 1 | 9 | 10 => h,
                _ => 0.0,
            };
            assert!((z - c64(want, 0.0)).norm() < 1e-15, "{i}: {z}");
        }
    }

    #[test]
    fn optimal_circuit_separates_the_sets() {
        let r = verify_perfect_discrimination(&optimal_circuit_ba(), 1000, 17).unwrap();
        assert!(r.max_abs_overlap <= 1e-10);
        assert!(r.max_norm_defect <= 1e-12);
    }

    #[test]
    fn scrambled_circuit_fails_to_separate() {
        let mut c = optimal_circuit_ba();
        // Route the cross terms into a2 = 0 and 1 instead of 2.
        let iso = &mut c.channel[0];
        iso[(3 + 2, 1)] = ZERO;
        iso[(6 + 2, 2)] = ZERO;
        iso[(3 + 1, 1)] = ONE;
        iso[(6, 2)] = ONE;
        let r = verify_perfect_discrimination(&c, 200, 17).unwrap();
        assert!(r.max_abs_overlap > 0.1, "{}", r.max_abs_overlap);
    }

    #[test]
    fn optimal_circuit_tester_is_perfect_on_ideal_payoff() {
        let t = tester_from_circuit(&optimal_circuit_ba()).unwrap();
        assert!(t.is_valid(1e-9), "{:?}", t.residuals);
        let p = success_probability(&t, &assemble_g_ideal());
        assert!(p >= 1.0 - 1e-6, "{p}");
    }

    #[test]
    fn validation_catches_broken_elements() {
        let mut c = optimal_circuit_ba();
        c.povm[0] = identity(12);
        assert!(c.validate().is_err());
        let mut c = optimal_circuit_ba();
        c.memory_out = 3;
        assert!(tester_from_circuit(&c).is_err());
    }
}
