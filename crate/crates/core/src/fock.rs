//! Truncated Fock space for a single cavity mode, coherent states and the
//! resonant Jaynes-Cummings evolution of a qubit coupled to that mode.
//!
//! The joint unitary conserves the excitation number, so on the truncated
//! space it splits into 2x2 blocks on {|g,n>, |e,n-1>} plus the two 1x1
//! blocks |g,0> and |e,N>. Each block is exponentiated exactly, which keeps
//! the truncated operator unitary to rounding without any repair step.

use crate::error::{invalid, Result};
use std::f64::consts::PI;

use crate::linalg::{c64, CMat, C64, M2, ONE, ZERO};

pub const DEFAULT_TAIL_TOL: f64 = 1e-12;
const MIN_LEVELS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FockTruncation {
    /// Highest retained Fock level N.
    pub n_max: usize,
    /// Bound on the discarded Poisson mass.
    pub tail_tol: f64,
}

/// ln of the Poisson weight p_n = e^{-nbar} nbar^n / n!, accurate to rounding
/// for large arguments (Stirling series with the cancelling terms grouped).
fn ln_poisson(nbar: f64, n: usize) -> f64 {
    if n < 20 {
        let ln_fact: f64 = (2..=n).map(|k| (k as f64).ln()).sum();
        return -nbar + n as f64 * nbar.ln() - ln_fact;
    }
    let x = n as f64;
    let series = 1.0 / (12.0 * x) - 1.0 / (360.0 * x.powi(3)) + 1.0 / (1260.0 * x.powi(5));
    x * ((nbar - x) / x).ln_1p() - (nbar - x) - 0.5 * (2.0 * PI * x).ln() - series
}

/// Poisson weights p_0..p_{len-1}, recursed outwards from the mode.
fn poisson_weights(nbar: f64, len: usize) -> Vec<f64> {
    let mut p = vec![0.0; len];
    if nbar == 0.0 {
        p[0] = 1.0;
        return p;
    }
    let mode = nbar.floor() as usize;
    let mut w = ln_poisson(nbar, mode).exp();
    for n in (0..=mode).rev() {
        if n < len {
            p[n] = w;
        }
        w *= n as f64 / nbar;
    }
    let mut w = ln_poisson(nbar, mode).exp();
    for (n, slot) in p.iter_mut().enumerate().skip(mode + 1) {
        w *= nbar / n as f64;
        *slot = w;
    }
    p
}

/// Poisson mass strictly above `n_max`, summed directly from the tail.
pub fn poisson_tail(nbar: f64, n_max: usize) -> f64 {
    if nbar == 0.0 {
        return 0.0;
    }
    let mut n = n_max + 1;
    let mut term = ln_poisson(nbar, n).exp();
    let mut sum = 0.0;
    loop {
        sum += term;
        if (n as f64) > nbar && term <= sum * 1e-18 {
            break;
        }
        n += 1;
        term *= nbar / n as f64;
    }
    sum
}

fn check_nbar(nbar: f64) -> Result<()> {
    if !nbar.is_finite() || nbar < 0.0 {
        return Err(invalid(format!("mean photon number must be finite and >= 0, got {nbar}")));
    }
    Ok(())
}

/// Smallest level of the form max(16, ceil(nbar + k sqrt(nbar) + 10)), k = 4, 6, ...
/// whose discarded Poisson tail is below `tail_tol`.
pub fn truncation_order(nbar: f64, tail_tol: f64) -> Result<FockTruncation> {
    check_nbar(nbar)?;
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(invalid(format!("tail tolerance must lie in (0, 1), got {tail_tol}")));
    }
    let mut k = 4.0;
    loop {
        let n_max = MIN_LEVELS.max((nbar + k * nbar.sqrt() + 10.0).ceil() as usize);
        if poisson_tail(nbar, n_max) < tail_tol {
            return Ok(FockTruncation { n_max, tail_tol });
        }
        k += 2.0;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherentField {
    pub nbar: f64,
    /// Real positive amplitude alpha with alpha^2 = nbar.
    pub amplitude: f64,
    /// c_n = exp(-nbar/2) nbar^(n/2) / sqrt(n!) for n = 0..=N, not renormalized.
    pub coeffs: Vec<f64>,
}

pub fn coherent_state(nbar: f64, trunc: FockTruncation) -> Result<CoherentField> {
    check_nbar(nbar)?;
    let coeffs = poisson_weights(nbar, trunc.n_max + 1).into_iter().map(f64::sqrt).collect();
    Ok(CoherentField { nbar, amplitude: nbar.sqrt(), coeffs })
}

impl CoherentField {
    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.coeffs.iter().enumerate().map(|(n, c)| n as f64 * c * c).sum()
    }
}

/// Jaynes-Cummings unitary on qubit ⊗ field with coupling time theta/sqrt(nbar),
/// stored block by block.
#[derive(Debug, Clone)]
pub struct JointUnitary {
    pub n_max: usize,
    pub theta: f64,
    pub phi: f64,
    pub nbar: f64,
    /// `blocks[n-1]` acts on (|g,n>, |e,n-1>) for n = 1..=N.
    blocks: Vec<M2>,
}

/// The 2x2 block on (|g,n>, |e,n-1>) after coupling time theta/sqrt(nbar).
fn jc_block(theta: f64, phi: f64, nbar: f64, n: usize) -> M2 {
    let x = 0.5 * theta * (n as f64 / nbar).sqrt();
    let (s, c) = x.sin_cos();
    let cc = c64(c, 0.0);
    M2::new(
        cc,
        c64(0.0, -s) * C64::from_polar(1.0, -phi),
        c64(0.0, -s) * C64::from_polar(1.0, phi),
        cc,
    )
}

fn check_rotation_args(theta: f64, phi: f64, nbar: f64) -> Result<()> {
    if !theta.is_finite() || !phi.is_finite() {
        return Err(invalid("rotation angles must be finite"));
    }
    if !(nbar.is_finite() && nbar > 0.0) {
        return Err(invalid(format!("mean photon number must be > 0 for a coupling time, got {nbar}")));
    }
    Ok(())
}

pub fn jc_unitary(theta: f64, phi: f64, nbar: f64, trunc: FockTruncation) -> Result<JointUnitary> {
    check_rotation_args(theta, phi, nbar)?;
    let blocks = (1..=trunc.n_max).map(|n| jc_block(theta, phi, nbar, n)).collect();
    Ok(JointUnitary { n_max: trunc.n_max, theta, phi, nbar, blocks })
}

impl JointUnitary {
    pub fn dim(&self) -> usize {
        2 * (self.n_max + 1)
    }

    pub fn block(&self, n: usize) -> &M2 {
        &self.blocks[n - 1]
    }

    /// Applies U in place to the qubit-field amplitudes found at
    /// `offset + a*atom_stride + n*field_stride`, which lets the field be one
    /// factor of a larger product state.
    pub fn apply_strided(&self, state: &mut [C64], offset: usize, atom_stride: usize, field_stride: usize) {
        for (k, b) in self.blocks.iter().enumerate() {
            let n = k + 1;
            let ig = offset + n * field_stride;
            let ie = offset + atom_stride + (n - 1) * field_stride;
            let (g, e) = (state[ig], state[ie]);
            state[ig] = b[(0, 0)] * g + b[(0, 1)] * e;
            state[ie] = b[(1, 0)] * g + b[(1, 1)] * e;
        }
    }

    /// Applies U to a qubit ⊗ field vector of length `dim()`.
    pub fn apply(&self, state: &mut [C64]) {
        assert_eq!(state.len(), self.dim(), "state length must match the truncated space");
        self.apply_strided(state, 0, self.n_max + 1, 1);
    }

    /// Dense matrix in qubit ⊗ field order (index a*(N+1) + n).
    pub fn to_dense(&self) -> CMat {
        let m = self.n_max + 1;
        let mut u = CMat::from_element(self.dim(), self.dim(), ZERO);
        u[(0, 0)] = ONE;
        u[(m + self.n_max, m + self.n_max)] = ONE;
        for (k, b) in self.blocks.iter().enumerate() {
            let n = k + 1;
            let (ig, ie) = (n, m + n - 1);
            u[(ig, ig)] = b[(0, 0)];
            u[(ig, ie)] = b[(0, 1)];
            u[(ie, ig)] = b[(1, 0)];
            u[(ie, ie)] = b[(1, 1)];
        }
        u
    }

    /// Largest entry of U†U - 1, computed block by block.
    pub fn unitarity_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| (b.adjoint() * b - M2::identity()).iter().fold(0.0f64, |a, z| a.max(z.norm())))
            .fold(0.0, f64::max)
    }
}

/// Kraus operators A_n = <n|U|alpha> of the qubit map induced by the
/// interaction with a coherent field, n = 0..=N.
pub fn kraus_operators(theta: f64, phi: f64, nbar: f64, trunc: FockTruncation) -> Result<Vec<M2>> {
    check_rotation_args(theta, phi, nbar)?;
    let field = coherent_state(nbar, trunc)?;
    Ok(kraus_from_field(theta, phi, nbar, &field))
}

/// Same as [`kraus_operators`] with the coupling time set by `time_nbar` but
/// the field given explicitly.
pub(crate) fn kraus_from_field(theta: f64, phi: f64, time_nbar: f64, field: &CoherentField) -> Vec<M2> {
    let c = &field.coeffs;
    let top = c.len() - 1;
    (0..=top)
        .map(|n| {
            let mut a = M2::zeros();
            // <g,n| couples to |g,n> and |e,n-1>.
            if n == 0 {
                a[(0, 0)] = c64(c[0], 0.0);
            } else {
                let b = jc_block(theta, phi, time_nbar, n);
                a[(0, 0)] = b[(0, 0)] * c[n];
                a[(0, 1)] = b[(0, 1)] * c[n - 1];
            }
            // <e,n| couples to |g,n+1> and |e,n>; |e,N> is left invariant.
            if n == top {
                a[(1, 1)] = c64(c[n], 0.0);
            } else {
                let b = jc_block(theta, phi, time_nbar, n + 1);
                a[(1, 0)] = b[(1, 0)] * c[n + 1];
                a[(1, 1)] = b[(1, 1)] * c[n];
            }
            a
        })
        .collect()
}
