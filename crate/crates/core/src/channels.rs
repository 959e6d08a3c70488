//! Qubit channels in Kraus form, their Choi matrices, target rotations,
//! average gate fidelity, and the first-order large-energy expansions of the
//! Jaynes-Cummings induced maps.
//!
//! Choi convention: <i,j|M|k,l> = <j| M(|i><k|) |l>, input factor first.

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fock::{coherent_state, kraus_from_field, kraus_operators, FockTruncation};
use crate::linalg::{c64, paulis, CMat, C64, M2, ZERO};

pub use crate::tensor::{partial_trace, partial_transpose};

#[derive(Debug, Clone)]
pub struct QubitChannel {
    pub kraus: Vec<M2>,
    /// max |sum K†K - 1| when the channel was built.
    pub tp_defect: f64,
}

fn max_entry(m: &M2) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

impl QubitChannel {
    pub fn new(kraus: Vec<M2>) -> Self {
        let s: M2 = kraus.iter().map(|k| k.adjoint() * k).sum();
        let tp_defect = max_entry(&(s - M2::identity()));
        Self { kraus, tp_defect }
    }

    pub fn identity() -> Self {
        Self::new(vec![M2::identity()])
    }

    pub fn unitary(u: M2) -> Self {
        Self::new(vec![u])
    }

    /// The map F induced on the qubit by a resonant interaction with a
    /// coherent field of mean photon number `nbar`, aimed at rotation R_phi(theta).
    pub fn jaynes_cummings(theta: f64, phi: f64, nbar: f64, trunc: FockTruncation) -> Result<Self> {
        Ok(Self::new(kraus_operators(theta, phi, nbar, trunc)?))
    }

    /// Superoperator acting on row-major vectorized 2x2 matrices.
    pub fn transfer_matrix(&self) -> Matrix4<C64> {
        let mut t = Matrix4::zeros();
        for k in &self.kraus {
            for a in 0..2 {
                for b in 0..2 {
                    for i in 0..2 {
                        for j in 0..2 {
                            t[(2 * a + b, 2 * i + j)] += k[(a, i)] * k[(b, j)].conj();
                        }
                    }
                }
            }
        }
        t
    }
}

/// X -> sum K X K†, applied linearly to any 2x2 input.
pub fn apply_channel(ch: &QubitChannel, x: &M2) -> M2 {
    ch.kraus.iter().map(|k| k * x * k.adjoint()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RotationKind {
    /// exp(-i theta/2 (cos phi X + sin phi Y))
    Equatorial { theta: f64, phi: f64 },
    /// pi rotation about (sin phi_a sin vphi_b, -cos phi_a sin vphi_b, cos vphi_b)
    PiTilted { phi_a: f64, vphi_b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    pub kind: RotationKind,
    pub matrix: M2,
}

impl Rotation {
    pub fn equatorial(theta: f64, phi: f64) -> Self {
        let (s, c) = (0.5 * theta).sin_cos();
        let axis = C64::from_polar(1.0, phi);
        let matrix = M2::new(c64(c, 0.0), c64(0.0, -s) * axis.conj(), c64(0.0, -s) * axis, c64(c, 0.0));
        Self { kind: RotationKind::Equatorial { theta, phi }, matrix }
    }

    pub fn pi_tilted(phi_a: f64, vphi_b: f64) -> Self {
        let [_, x, y, z] = paulis();
        let (nx, ny, nz) = (phi_a.sin() * vphi_b.sin(), -phi_a.cos() * vphi_b.sin(), vphi_b.cos());
        let n_sigma = x * c64(nx, 0.0) + y * c64(ny, 0.0) + z * c64(nz, 0.0);
        Self { kind: RotationKind::PiTilted { phi_a, vphi_b }, matrix: n_sigma * c64(0.0, -1.0) }
    }

    pub fn identity() -> Self {
        Self::equatorial(0.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    pub d_in: usize,
    pub d_out: usize,
    pub matrix: CMat,
}

pub fn choi_of_channel(ch: &QubitChannel) -> ChoiMatrix {
    let mut m = CMat::from_element(4, 4, ZERO);
    for k in &ch.kraus {
        let v = vectorized(k);
        for r in 0..4 {
            for c in 0..4 {
                m[(r, c)] += v[r] * v[c].conj();
            }
        }
    }
    ChoiMatrix { d_in: 2, d_out: 2, matrix: m }
}

pub fn choi_of_unitary(u: &M2) -> ChoiMatrix {
    choi_of_channel(&QubitChannel::unitary(*u))
}

/// |K>> = sum_i |i> ⊗ K|i>, i.e. entry (i,j) holds K[j][i].
fn vectorized(k: &M2) -> [C64; 4] {
    [k[(0, 0)], k[(1, 0)], k[(0, 1)], k[(1, 1)]]
}

/// Choi matrix of the ideal rotation by theta about x, written out entrywise.
pub fn ideal_rotation_choi(theta: f64) -> ChoiMatrix {
    let (s, c) = theta.sin_cos();
    let (p, m, is) = (c64(1.0 + c, 0.0), c64(1.0 - c, 0.0), c64(0.0, s));
    #[rustfmt::skip]
    let entries = [
        p,   is,  is,  p,
        -is, m,   m,   -is,
        -is, m,   m,   -is,
        p,   is,  is,  p,
    ];
    let matrix = CMat::from_row_slice(4, 4, &entries).scale(0.5);
    ChoiMatrix { d_in: 2, d_out: 2, matrix }
}

/// Moves a phi = 0 Choi matrix to azimuth phi: second row and third column
/// pick up e^{i phi}, third row and second column e^{-i phi}.
fn with_azimuth(mut m: CMat, phi: f64) -> CMat {
    let d = [C64::new(1.0, 0.0), C64::from_polar(1.0, phi), C64::from_polar(1.0, -phi), C64::new(1.0, 0.0)];
    for r in 0..4 {
        for c in 0..4 {
            m[(r, c)] *= d[r] * d[c].conj();
        }
    }
    m
}

/// R_0(theta) plus the 1/(16 nbar) correction of the coherent-field map F.
pub fn first_order_choi_f(theta: f64, phi: f64, nbar: f64) -> ChoiMatrix {
    let t = theta;
    let (s, c) = t.sin_cos();
    let t2 = t * t;
    let a = s - t * (2.0 - c) + t2 * s;
    let b = s - t * c + t2 * s;
    let d = s + t * (2.0 - 3.0 * c) + t2 * s;
    let mid = -4.0 * (1.0 - c) + t * s + t2 * c;
    let r = |x: f64| c64(x, 0.0);
    let i = |x: f64| c64(0.0, x);
    #[rustfmt::skip]
    let k = [
        r(t * s - t2 * c),  i(-a),              i(-b),               r(-t * s - t2 * c),
        i(a),               r(-t * s + t2 * c), r(mid),              i(b),
        i(b),               r(mid),             r(3.0 * t * s + t2 * c), i(d),
        r(-t * s - t2 * c), i(-b),              i(-d),               r(-3.0 * t * s - t2 * c),
    ];
    let corr = CMat::from_row_slice(4, 4, &k).scale(1.0 / (16.0 * nbar));
    let matrix = with_azimuth(ideal_rotation_choi(theta).matrix + corr, phi);
    ChoiMatrix { d_in: 2, d_out: 2, matrix }
}

/// R_0(theta) plus the 1/(8 nbar) correction of the single-Kraus map G.
pub fn first_order_choi_g(theta: f64, phi: f64, nbar: f64) -> ChoiMatrix {
    let t = theta;
    let (s, c) = t.sin_cos();
    let h = 0.5 * t * t;
    let a = s - t + h * s;
    let b = s + t * (1.0 - 2.0 * c) + h * s;
    let mid = -2.0 * (1.0 - c) + t * s - h * (1.0 - c);
    let r = |x: f64| c64(x, 0.0);
    let i = |x: f64| c64(0.0, x);
    #[rustfmt::skip]
    let k = [
        r(t * s - h * (1.0 + c)),  i(-a),  i(-a),  r(-t * s - h * (1.0 + c)),
        i(a),                      r(mid), r(mid), i(b),
        i(a),                      r(mid), r(mid), i(b),
        r(-t * s - h * (1.0 + c)), i(-b),  i(-b),  r(-3.0 * t * s - h * (1.0 + c)),
    ];
    let corr = CMat::from_row_slice(4, 4, &k).scale(1.0 / (8.0 * nbar));
    let matrix = with_azimuth(ideal_rotation_choi(theta).matrix + corr, phi);
    ChoiMatrix { d_in: 2, d_out: 2, matrix }
}

/// G = (1 ⊗ <a|) U (1 ⊗ |a>) with |a> the coherent state of mean nbar/2 and
/// the coupling time set for nbar/2. `trunc` is the truncation for nbar/2.
pub fn single_kraus_g(theta: f64, phi: f64, nbar: f64, trunc: FockTruncation) -> Result<M2> {
    let half = 0.5 * nbar;
    let field = coherent_state(half, trunc)?;
    kraus_operators(theta, phi, half, trunc)?; // argument validation
    let ks = kraus_from_field(theta, phi, half, &field);
    Ok(ks.iter().zip(&field.coeffs).map(|(a, &c)| a * c64(c, 0.0)).sum())
}

/// F = 1/2 + 1/12 sum_j Tr[U s_j U† ch(s_j)] over the three Pauli matrices.
pub fn average_gate_fidelity(ch: &QubitChannel, target: &Rotation) -> f64 {
    let u = target.matrix;
    let sum: f64 = paulis()[1..]
        .iter()
        .map(|s| (u * s * u.adjoint() * apply_channel(ch, s)).trace().re)
        .sum();
    0.5 + sum / 12.0
}
