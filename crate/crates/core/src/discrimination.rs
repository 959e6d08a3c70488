//! The commuting-vs-anticommuting task: which of two unitary families a pair
//! (U_A, U_B) was drawn from, decided by measuring the control qubit of a
//! quantum switch (QS) or of its four-box simulation (4B). U_A is realized by
//! a Jaynes-Cummings interaction with a coherent field and U_B is perfect.

use nalgebra::{SymmetricEigen, Vector2, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::channels::{QubitChannel, Rotation};
use crate::error::{invalid, Error, Result};
use crate::fock::{coherent_state, jc_unitary, kraus_from_field, truncation_order, FockTruncation, DEFAULT_TAIL_TOL};
use crate::linalg::{c64, pairwise_sum, sigma_z, C64, M2, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Setup {
    #[serde(rename = "QS")]
    Qs,
    #[serde(rename = "4B")]
    FourBox,
}

impl Setup {
    pub fn label(self) -> &'static str {
        match self {
            Setup::Qs => "QS",
            Setup::FourBox => "4B",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetTag {
    Commuting,
    Anticommuting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PairAngles {
    /// U_A ~ R_phi(theta_a), U_B = R_phi(theta_b).
    Commuting { phi: f64, theta_a: f64, theta_b: f64 },
    /// U_A ~ R_phi_a(pi), U_B = pi rotation about an axis orthogonal to U_A's.
    Anticommuting { phi_a: f64, vphi_b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub angles: PairAngles,
    pub weight: f64,
}

impl PairSample {
    pub fn commuting(phi: f64, theta_a: f64, theta_b: f64) -> Self {
        Self { angles: PairAngles::Commuting { phi, theta_a, theta_b }, weight: 1.0 }
    }

    pub fn anticommuting(phi_a: f64, vphi_b: f64) -> Self {
        Self { angles: PairAngles::Anticommuting { phi_a, vphi_b }, weight: 1.0 }
    }

    pub fn set_tag(&self) -> SetTag {
        match self.angles {
            PairAngles::Commuting { .. } => SetTag::Commuting,
            PairAngles::Anticommuting { .. } => SetTag::Anticommuting,
        }
    }

    /// (theta, phi) of the rotation the field interaction aims at.
    pub fn target_a(&self) -> (f64, f64) {
        match self.angles {
            PairAngles::Commuting { phi, theta_a, .. } => (theta_a, phi),
            PairAngles::Anticommuting { phi_a, .. } => (PI, phi_a),
        }
    }

    pub fn unitary_b(&self) -> M2 {
        match self.angles {
            PairAngles::Commuting { phi, theta_b, .. } => Rotation::equatorial(theta_b, phi).matrix,
            PairAngles::Anticommuting { phi_a, vphi_b } => Rotation::pi_tilted(phi_a, vphi_b).matrix,
        }
    }

    /// +1 for commuting pairs, -1 for anticommuting ones.
    fn sign(&self) -> f64 {
        match self.set_tag() {
            SetTag::Commuting => 1.0,
            SetTag::Anticommuting => -1.0,
        }
    }
}

/// Periodic nodes -pi + 2 pi k / n.
pub fn periodic_nodes(n: usize) -> Vec<f64> {
    (0..n).map(|k| -PI + 2.0 * PI * k as f64 / n as f64).collect()
}

fn check_nodes(counts: &[usize]) -> Result<()> {
    if counts.iter().any(|&n| n < 2) {
        return Err(invalid(format!("grid node counts must be at least 2, got {counts:?}")));
    }
    Ok(())
}

pub fn grid_commuting(n_phi: usize, n_theta_a: usize, n_theta_b: usize) -> Result<Vec<PairSample>> {
    check_nodes(&[n_phi, n_theta_a, n_theta_b])?;
    let w = 1.0 / (n_phi * n_theta_a * n_theta_b) as f64;
    let (ps, tas, tbs) = (periodic_nodes(n_phi), periodic_nodes(n_theta_a), periodic_nodes(n_theta_b));
    let mut out = Vec::with_capacity(n_phi * n_theta_a * n_theta_b);
    for &phi in &ps {
        for &theta_a in &tas {
            for &theta_b in &tbs {
                out.push(PairSample { angles: PairAngles::Commuting { phi, theta_a, theta_b }, weight: w });
            }
        }
    }
    Ok(out)
}

pub fn grid_anticommuting(n_phi_a: usize, n_vphi_b: usize) -> Result<Vec<PairSample>> {
    check_nodes(&[n_phi_a, n_vphi_b])?;
    let w = 1.0 / (n_phi_a * n_vphi_b) as f64;
    let mut out = Vec::with_capacity(n_phi_a * n_vphi_b);
    for &phi_a in &periodic_nodes(n_phi_a) {
        for &vphi_b in &periodic_nodes(n_vphi_b) {
            out.push(PairSample { angles: PairAngles::Anticommuting { phi_a, vphi_b }, weight: w });
        }
    }
    Ok(out)
}

fn check_rho(rho: &M2) -> Result<()> {
    let herm = (rho - rho.adjoint()).iter().fold(0.0f64, |a, z| a.max(z.norm()));
    let tr = rho.trace();
    let min_ev = SymmetricEigen::new((rho + rho.adjoint()) * c64(0.5, 0.0)).eigenvalues.min();
    if herm > 1e-12 || (tr - c64(1.0, 0.0)).norm() > 1e-12 || min_ev < -1e-12 {
        return Err(invalid("rho_S must be a Hermitian, unit-trace, positive 2x2 matrix"));
    }
    Ok(())
}

fn check_nbar(nbar: f64) -> Result<()> {
    if !(nbar.is_finite() && nbar > 0.0) {
        return Err(invalid(format!("mean photon number must be finite and > 0, got {nbar}")));
    }
    Ok(())
}

/// Tr[Y U†] for 2x2 matrices.
fn trace_with_adjoint(y: &M2, u: &M2) -> C64 {
    y.iter().zip(u.iter()).map(|(a, b)| a * b.conj()).sum()
}

/// Kraus operator (1 ⊗ <a|) U (1 ⊗ |a>) of one box holding a coherent field
/// of mean `box_nbar`, with the coupling time set for that field.
pub fn box_kraus(theta: f64, phi: f64, box_nbar: f64, trunc: FockTruncation) -> Result<M2> {
    check_nbar(box_nbar)?;
    let field = coherent_state(box_nbar, trunc)?;
    let ks = kraus_from_field(theta, phi, box_nbar, &field);
    Ok(ks.iter().zip(&field.coeffs).map(|(a, &c)| a * c64(c, 0.0)).sum())
}

/// <Phi_0|Phi_1> of the quantum switch: Tr[F(U_B rho) U_B†].
pub fn overlap_qs(pair: &PairSample, nbar: f64, rho: &M2, trunc: FockTruncation) -> Result<C64> {
    check_nbar(nbar)?;
    check_rho(rho)?;
    let (theta, phi) = pair.target_a();
    let f = QubitChannel::jaynes_cummings(theta, phi, nbar, trunc)?;
    let ub = pair.unitary_b();
    let x = ub * rho;
    let y: M2 = f.kraus.iter().map(|a| a * x * a.adjoint()).sum();
    Ok(trace_with_adjoint(&y, &ub))
}

/// <Phi_0|Phi_1> of the four-box simulation with nbar/2 photons per box:
/// Tr[G U_B rho G† U_B†]. `trunc` must cover a field of mean nbar/2.
pub fn overlap_4b(pair: &PairSample, nbar: f64, rho: &M2, trunc: FockTruncation) -> Result<C64> {
    overlap_4b_split(pair, nbar, 0.5, rho, trunc)
}

/// Four-box overlap with box A_0 holding `split * nbar` photons and box A_1
/// the rest: Tr[G_1 U_B rho G_0† U_B†]. Experimental; `trunc` must cover the
/// larger of the two boxes.
pub fn overlap_4b_split(pair: &PairSample, nbar: f64, split: f64, rho: &M2, trunc: FockTruncation) -> Result<C64> {
    check_nbar(nbar)?;
    check_rho(rho)?;
    if !(split > 0.0 && split < 1.0) {
        return Err(invalid(format!("box energy split must lie in (0, 1), got {split}")));
    }
    let (theta, phi) = pair.target_a();
    let g0 = box_kraus(theta, phi, split * nbar, trunc)?;
    let g1 = box_kraus(theta, phi, (1.0 - split) * nbar, trunc)?;
    let ub = pair.unitary_b();
    let y = g1 * ub * rho * g0.adjoint();
    Ok(trace_with_adjoint(&y, &ub))
}

/// Truncation fitting the fields a setup uses at total energy `nbar`.
pub fn setup_truncation(setup: Setup, nbar: f64, tail_tol: f64) -> Result<FockTruncation> {
    match setup {
        Setup::Qs => truncation_order(nbar, tail_tol),
        Setup::FourBox => truncation_order(0.5 * nbar, tail_tol),
    }
}

pub fn overlap(setup: Setup, pair: &PairSample, nbar: f64, rho: &M2, trunc: FockTruncation) -> Result<C64> {
    match setup {
        Setup::Qs => overlap_qs(pair, nbar, rho, trunc),
        Setup::FourBox => overlap_4b(pair, nbar, rho, trunc),
    }
}

/// Success probability (1 ± Re overlap)/2, with + for commuting pairs.
pub fn success_pair(setup: Setup, pair: &PairSample, nbar: f64, rho: &M2, trunc: FockTruncation) -> Result<(f64, SetTag)> {
    let ov = overlap(setup, pair, nbar, rho, trunc)?;
    Ok((0.5 * (1.0 + pair.sign() * ov.re), pair.set_tag()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_phi: usize,
    pub n_theta_a: usize,
    pub n_theta_b: usize,
    pub n_phi_a: usize,
    pub n_vphi_b: usize,
}

impl GridSpec {
    pub fn uniform(n: usize) -> Self {
        Self { n_phi: n, n_theta_a: n, n_theta_b: n, n_phi_a: n, n_vphi_b: n }
    }

    fn halved(&self) -> Self {
        let h = |n: usize| (n / 2).max(2);
        Self {
            n_phi: h(self.n_phi),
            n_theta_a: h(self.n_theta_a),
            n_theta_b: h(self.n_theta_b),
            n_phi_a: h(self.n_phi_a),
            n_vphi_b: h(self.n_vphi_b),
        }
    }

    fn validate(&self) -> Result<()> {
        check_nodes(&[self.n_phi, self.n_theta_a, self.n_theta_b, self.n_phi_a, self.n_vphi_b])
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::uniform(48)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    pub setup: Setup,
    /// Total photon budget for operation A.
    pub nbar: f64,
    pub rho_s: M2,
    pub grid: GridSpec,
    pub tail_tol: f64,
    /// Fraction of the budget held by box A_0 in the four-box setup.
    pub box_split: f64,
}

impl TaskConfig {
    pub fn new(setup: Setup, nbar: f64) -> Self {
        Self {
            setup,
            nbar,
            rho_s: maximally_mixed(),
            grid: GridSpec::default(),
            tail_tol: DEFAULT_TAIL_TOL,
            box_split: 0.5,
        }
    }
}

pub fn maximally_mixed() -> M2 {
    M2::identity() * c64(0.5, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub setup: Setup,
    pub nbar: f64,
    pub p_commuting: f64,
    pub p_anticommuting: f64,
    pub p_average: f64,
    pub quadrature_error_estimate: f64,
}

impl SuccessReport {
    fn new(setup: Setup, nbar: f64, p_commuting: f64, p_anticommuting: f64, err: f64) -> Self {
        Self {
            setup,
            nbar,
            p_commuting,
            p_anticommuting,
            p_average: 0.5 * (p_commuting + p_anticommuting),
            quadrature_error_estimate: err,
        }
    }
}

/// Evaluates the operator-A part once per (phi, theta) and reuses it for all U_B.
enum AOperator {
    Channel(nalgebra::Matrix4<C64>),
    Kraus { g0: M2, g1: M2 },
}

impl AOperator {
    fn build(cfg: &TaskConfig, trunc: FockTruncation, theta: f64, phi: f64) -> Result<Self> {
        Ok(match cfg.setup {
            Setup::Qs => AOperator::Channel(QubitChannel::jaynes_cummings(theta, phi, cfg.nbar, trunc)?.transfer_matrix()),
            Setup::FourBox => AOperator::Kraus {
                g0: box_kraus(theta, phi, cfg.box_split * cfg.nbar, trunc)?,
                g1: box_kraus(theta, phi, (1.0 - cfg.box_split) * cfg.nbar, trunc)?,
            },
        })
    }

    fn overlap(&self, ub: &M2, rho: &M2) -> C64 {
        let x = ub * rho;
        match self {
            AOperator::Channel(t) => {
                let y = t * Vector4::new(x[(0, 0)], x[(0, 1)], x[(1, 0)], x[(1, 1)]);
                y[0] * ub[(0, 0)].conj() + y[1] * ub[(0, 1)].conj() + y[2] * ub[(1, 0)].conj() + y[3] * ub[(1, 1)].conj()
            }
            AOperator::Kraus { g0, g1 } => trace_with_adjoint(&(g1 * x * g0.adjoint()), ub),
        }
    }
}

fn average_on_grid(cfg: &TaskConfig, trunc: FockTruncation, grid: &GridSpec) -> Result<(f64, f64)> {
    let rho = cfg.rho_s;
    // Commuting set: one A-operator per (phi, theta_a), inner loop over theta_b.
    let outer: Vec<(f64, f64)> = periodic_nodes(grid.n_phi)
        .into_iter()
        .flat_map(|phi| periodic_nodes(grid.n_theta_a).into_iter().map(move |ta| (phi, ta)))
        .collect();
    let tbs = periodic_nodes(grid.n_theta_b);
    let com: Vec<f64> = outer
        .par_iter()
        .map(|&(phi, ta)| -> Result<f64> {
            let a = AOperator::build(cfg, trunc, ta, phi)?;
            let terms: Vec<f64> = tbs
                .iter()
                .map(|&tb| a.overlap(&Rotation::equatorial(tb, phi).matrix, &rho).re)
                .collect();
            Ok(pairwise_sum(&terms))
        })
        .collect::<Result<_>>()?;
    let mean_com = pairwise_sum(&com) / (outer.len() * tbs.len()) as f64;

    let pas = periodic_nodes(grid.n_phi_a);
    let vbs = periodic_nodes(grid.n_vphi_b);
    let anti: Vec<f64> = pas
        .par_iter()
        .map(|&pa| -> Result<f64> {
            let a = AOperator::build(cfg, trunc, PI, pa)?;
            let terms: Vec<f64> = vbs
                .iter()
                .map(|&vb| a.overlap(&Rotation::pi_tilted(pa, vb).matrix, &rho).re)
                .collect();
            Ok(pairwise_sum(&terms))
        })
        .collect::<Result<_>>()?;
    let mean_anti = pairwise_sum(&anti) / (pas.len() * vbs.len()) as f64;
    Ok((0.5 * (1.0 + mean_com), 0.5 * (1.0 - mean_anti)))
}

/// Grid-averaged success probabilities; the error estimate is the change
/// against the same average on a grid with half the nodes per angle.
pub fn average_success(cfg: &TaskConfig) -> Result<SuccessReport> {
    check_nbar(cfg.nbar)?;
    check_rho(&cfg.rho_s)?;
    cfg.grid.validate()?;
    if !(cfg.box_split > 0.0 && cfg.box_split < 1.0) {
        return Err(invalid(format!("box energy split must lie in (0, 1), got {}", cfg.box_split)));
    }
    let box_max = match cfg.setup {
        Setup::Qs => cfg.nbar,
        Setup::FourBox => cfg.nbar * cfg.box_split.max(1.0 - cfg.box_split),
    };
    let trunc = truncation_order(box_max, cfg.tail_tol)?;
    let (pc, pa) = average_on_grid(cfg, trunc, &cfg.grid)?;
    let (hc, ha) = average_on_grid(cfg, trunc, &cfg.grid.halved())?;
    let err = (0.5 * (pc + pa) - 0.5 * (hc + ha)).abs();
    Ok(SuccessReport::new(cfg.setup, cfg.nbar, pc, pa, err))
}

/// Leading-order large-energy success probabilities.
pub fn asymptotic_success(setup: Setup, nbar: f64, rho: &M2) -> Result<SuccessReport> {
    check_nbar(nbar)?;
    check_rho(rho)?;
    let pi2 = PI * PI;
    let (com, anti) = match setup {
        Setup::Qs => (1.0, 2.0 + pi2),
        Setup::FourBox => {
            let z = (sigma_z() * rho).trace().re;
            (2.0 + pi2 / 3.0 - z, 4.0 + pi2)
        }
    };
    let k = 16.0 * nbar;
    Ok(SuccessReport::new(setup, nbar, 1.0 - com / k, 1.0 - anti / k, 0.0))
}

fn binary_entropy(x: f64) -> f64 {
    let h = |p: f64| if p <= 0.0 { 0.0 } else { -p * p.log2() };
    h(x) + h(1.0 - x)
}

/// Entanglement entropy (bits) between the control qubit and the rest,
/// H((1 + |overlap|)/2).
pub fn control_entropy(overlap: C64) -> f64 {
    binary_entropy(0.5 * (1.0 + overlap.norm().min(1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderConstants {
    /// Re overlap = ±(1 - c/nbar) + O(1/nbar^2).
    pub c: f64,
    /// Im overlap = d/nbar + O(1/nbar^2).
    pub d: f64,
    pub converged: bool,
}

/// Extracts c and d by Richardson extrapolation of nbar(1 ∓ Re overlap) and
/// nbar Im overlap over nbar = 200, 400, 800.
pub fn first_order_constant(setup: Setup, pair: &PairSample, tail_tol: f64) -> Result<FirstOrderConstants> {
    let rho = maximally_mixed();
    let mut fc = Vec::new();
    let mut fd = Vec::new();
    for &n in &[200.0, 400.0, 800.0] {
        let ov = overlap(setup, pair, n, &rho, setup_truncation(setup, n, tail_tol)?)?;
        fc.push(n * (1.0 - pair.sign() * ov.re));
        fd.push(n * ov.im);
    }
    let rich = |f: &[f64]| (2.0 * f[1] - f[0], 2.0 * f[2] - f[1]);
    let close = |(a, b): (f64, f64)| (a - b).abs() <= 0.05 * b.abs().max(1e-6);
    let (rc, rd) = (rich(&fc), rich(&fd));
    Ok(FirstOrderConstants { c: rc.1, d: rd.1, converged: close(rc) && close(rd) })
}

pub const DEFAULT_MAX_AMPLITUDES: usize = 1 << 26;

/// Overlap computed from the full joint state of system and fields, without
/// any reduced map. Each branch is built by applying the joint unitaries.
#[derive(Debug, Clone, Copy)]
pub struct StatevectorOracle {
    /// Largest state vector (complex amplitudes) the oracle may allocate.
    pub max_amplitudes: usize,
}

impl Default for StatevectorOracle {
    fn default() -> Self {
        Self { max_amplitudes: DEFAULT_MAX_AMPLITUDES }
    }
}

fn apply_qubit_gate(u: &M2, state: &mut [C64], block: usize) {
    let (lo, hi) = state.split_at_mut(block);
    for (g, e) in lo.iter_mut().zip(hi.iter_mut()) {
        let (a, b) = (*g, *e);
        *g = u[(0, 0)] * a + u[(0, 1)] * b;
        *e = u[(1, 0)] * a + u[(1, 1)] * b;
    }
}

fn inner(a: &[C64], b: &[C64]) -> C64 {
    let terms: Vec<C64> = a.iter().zip(b).map(|(x, y)| x.conj() * y).collect();
    pairwise_sum(&terms)
}

impl StatevectorOracle {
    /// <Phi_0|Phi_1> for `rho` given as a mixture over its eigenvectors.
    pub fn overlap(&self, setup: Setup, pair: &PairSample, nbar: f64, rho: &M2, trunc: FockTruncation) -> Result<C64> {
        check_nbar(nbar)?;
        check_rho(rho)?;
        let eig = SymmetricEigen::new((rho + rho.adjoint()) * c64(0.5, 0.0));
        let mut total = ZERO;
        for k in 0..2 {
            let p = eig.eigenvalues[k];
            if p <= 1e-15 {
                continue;
            }
            let psi = Vector2::new(eig.eigenvectors[(0, k)], eig.eigenvectors[(1, k)]);
            total += self.overlap_pure(setup, pair, nbar, &psi, trunc)? * p;
        }
        Ok(total)
    }

    pub fn overlap_pure(&self, setup: Setup, pair: &PairSample, nbar: f64, psi: &Vector2<C64>, trunc: FockTruncation) -> Result<C64> {
        match setup {
            Setup::Qs => self.qs(pair, nbar, psi, trunc),
            Setup::FourBox => self.four_box(pair, nbar, psi, trunc),
        }
    }

    fn check_cap(&self, needed: usize) -> Result<()> {
        if needed > self.max_amplitudes {
            return Err(Error::MemoryCap { needed, cap: self.max_amplitudes });
        }
        Ok(())
    }

    /// Phi_0 = U_B U_A |psi, alpha>, Phi_1 = U_A U_B |psi, alpha> on S ⊗ F_A.
    fn qs(&self, pair: &PairSample, nbar: f64, psi: &Vector2<C64>, trunc: FockTruncation) -> Result<C64> {
        let m = trunc.n_max + 1;
        self.check_cap(2 * m)?;
        let (theta, phi) = pair.target_a();
        let ua = jc_unitary(theta, phi, nbar, trunc)?;
        let ub = pair.unitary_b();
        let field = coherent_state(nbar, trunc)?;
        let mut start = vec![ZERO; 2 * m];
        for s in 0..2 {
            for n in 0..m {
                start[s * m + n] = psi[s] * field.coeffs[n];
            }
        }
        let mut phi0 = start.clone();
        ua.apply(&mut phi0);
        apply_qubit_gate(&ub, &mut phi0, m);
        let mut phi1 = start;
        apply_qubit_gate(&ub, &mut phi1, m);
        ua.apply(&mut phi1);
        Ok(inner(&phi0, &phi1))
    }

    /// Phi_0 = U_B U_{A0} |psi, a, a>, Phi_1 = U_{A1} U_B |psi, a, a> on
    /// S ⊗ F_{A0} ⊗ F_{A1}, each box holding nbar/2 photons.
    fn four_box(&self, pair: &PairSample, nbar: f64, psi: &Vector2<C64>, trunc: FockTruncation) -> Result<C64> {
        let m = trunc.n_max + 1;
        let needed = m.checked_mul(m).and_then(|x| x.checked_mul(2)).unwrap_or(usize::MAX);
        self.check_cap(needed)?;
        let half = 0.5 * nbar;
        let (theta, phi) = pair.target_a();
        let ua = jc_unitary(theta, phi, half, trunc)?;
        let ub = pair.unitary_b();
        let field = coherent_state(half, trunc)?;
        let plane = m * m;
        let mut start = vec![ZERO; 2 * plane];
        for s in 0..2 {
            for n0 in 0..m {
                for n1 in 0..m {
                    start[s * plane + n0 * m + n1] = psi[s] * field.coeffs[n0] * field.coeffs[n1];
                }
            }
        }
        let mut phi0 = start.clone();
        for n1 in 0..m {
            ua.apply_strided(&mut phi0, n1, plane, m);
        }
        apply_qubit_gate(&ub, &mut phi0, plane);
        let mut phi1 = start;
        apply_qubit_gate(&ub, &mut phi1, plane);
        for n0 in 0..m {
            ua.apply_strided(&mut phi1, n0 * m, plane, 1);
        }
        Ok(inner(&phi0, &phi1))
    }
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn pair_strategy() -> impl Strategy<Value = PairSample> {
        prop_oneof![
            (-4.0f64..4.0, -4.0f64..4.0, -4.0f64..4.0).prop_map(|(p, a, b)| PairSample::commuting(p, a, b)),
            (-4.0f64..4.0, -4.0f64..4.0).prop_map(|(p, v)| PairSample::anticommuting(p, v)),
        ]
    }

    fn state(a: f64, b: f64, c: f64) -> M2 {
        // Bloch vector scaled into the unit ball.
        let n = (a * a + b * b + c * c).sqrt().max(1.0);
        let (x, y, z) = (a / n, b / n, c / n);
        M2::new(c64(0.5 * (1.0 + z), 0.0), c64(0.5 * x, -0.5 * y), c64(0.5 * x, 0.5 * y), c64(0.5 * (1.0 - z), 0.0))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn overlap_is_bounded_and_linear(
            pair in pair_strategy(),
            nbar in 0.5f64..30.0,
            r1 in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
            r2 in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
            four_box in any::<bool>(),
        ) {
            let setup = if four_box { Setup::FourBox } else { Setup::Qs };
            let trunc = setup_truncation(setup, nbar, DEFAULT_TAIL_TOL).unwrap();
            let (s1, s2) = (state(r1.0, r1.1, r1.2), state(r2.0, r2.1, r2.2));
            let o1 = overlap(setup, &pair, nbar, &s1, trunc).unwrap();
            let o2 = overlap(setup, &pair, nbar, &s2, trunc).unwrap();
            let mix = overlap(setup, &pair, nbar, &((s1 + s2) * c64(0.5, 0.0)), trunc).unwrap();
            prop_assert!(o1.norm() <= 1.0 + 1e-10);
            prop_assert!((mix - (o1 + o2) * 0.5).norm() <= 1e-12);
            let (p, _) = success_pair(setup, &pair, nbar, &s1, trunc).unwrap();
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&p));
        }

        #[test]
        fn entropy_matches_binary_entropy(re in -1.0f64..1.0, im in -1.0f64..1.0) {
            let ov = c64(re, im);
            prop_assume!(ov.norm() <= 1.0);
            let x = 0.5 * (1.0 + ov.norm());
            let h = if x >= 1.0 { 0.0 } else { -x * x.log2() - (1.0 - x) * (1.0 - x).log2() };
            prop_assert!((control_entropy(ov) - h).abs() <= 1e-10);
        }
    }
}
