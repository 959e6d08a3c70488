//! Dense block SDPs solved by ADMM, and the fixed-causal-order tester
//! optimization built on them.
//!
//! maximize Σ_b Tr[C_b X_b]  s.t.  Σ_b Tr[A_{k,b} X_b] = r_k,  X_b ⪰ 0 for PSD blocks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{c64, hermiticity_defect, identity, min_eigenvalue, CMat};
use crate::tensor::{embed, partial_trace};
use crate::tester::{isotropic_basis, success_probability, Order, PayoffPair, Tester};
#[cfg(test)]
use crate::tester::{optimal_circuit_ba, tester_from_circuit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Psd,
    /// Hermitian with no cone constraint.
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub dim: usize,
    pub kind: BlockKind,
}

/// Σ_b Tr[A_b X_b] = rhs; blocks without an entry have a zero coefficient.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub terms: Vec<(usize, CMat)>,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub blocks: Vec<Block>,
    /// One Hermitian cost per block.
    pub objective: Vec<CMat>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    MaxIter,
    Infeasible,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Optimal => "optimal",
            Status::MaxIter => "max_iter",
            Status::Infeasible => "infeasible",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub over_relaxation: f64,
    pub rho: f64,
    /// Anderson acceleration memory; 0 runs plain ADMM.
    pub anderson_memory: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 200_000, over_relaxation: 1.6, rho: 1.0, anderson_memory: 10 }
    }
}

impl SolverSettings {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub blocks: Vec<CMat>,
    pub primal_value: f64,
    /// bᵀy for the multipliers of the kept constraints.
    pub dual_value: f64,
    pub gap: f64,
    pub iterations: usize,
    pub status: Status,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Dual slack Σ_k y_k A_k - C per block; PSD (or zero on free blocks) at a
    /// dual-feasible point.
    pub dual_slack: Vec<CMat>,
    /// Constraint rows left after pruning dependent ones.
    pub kept_constraints: usize,
}

const PRUNE_THRESHOLD: f64 = 1e-10;

fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

/// Type-II Anderson acceleration of a fixed-point map w -> g(w).
struct Anderson {
    memory: usize,
    dw: std::collections::VecDeque<DVector<f64>>,
    df: std::collections::VecDeque<DVector<f64>>,
    last: Option<(DVector<f64>, DVector<f64>)>,
    /// Whether the current point came from extrapolation.
    pending: bool,
    dim: usize,
}

impl Anderson {
    fn new(memory: usize, dim: usize) -> Self {
        Self { memory, dw: Default::default(), df: Default::default(), last: None, pending: false, dim }
    }

    fn reset(&mut self) {
        self.dw.clear();
        self.df.clear();
        self.last = None;
        self.pending = false;
    }

    /// Next point given the current one and its image.
    fn extrapolate(&mut self, w: &DVector<f64>, g: DVector<f64>) -> DVector<f64> {
        if self.memory == 0 {
            return g;
        }
        let f = &g - w;
        if let Some((wp, fp)) = self.last.take() {
            if self.dw.len() == self.memory {
                self.dw.pop_front();
                self.df.pop_front();
            }
            self.dw.push_back(w - wp);
            self.df.push_back(&f - fp);
        }
        self.last = Some((w.clone(), f.clone()));
        let m = self.df.len();
        self.pending = false;
        if m == 0 {
            return g;
        }
        let mut df = DMatrix::zeros(self.dim, m);
        for (j, col) in self.df.iter().enumerate() {
            df.set_column(j, col);
        }
        let mut gram = df.transpose() * &df;
        let reg = 1e-12 * (gram.trace() / m as f64).max(f64::MIN_POSITIVE);
        for j in 0..m {
            gram[(j, j)] += reg;
        }
        let Some(chol) = gram.cholesky() else {
            return g;
        };
        let gamma = chol.solve(&(df.transpose() * &f));
        if !gamma.iter().all(|v| v.is_finite()) {
            return g;
        }
        let mut out = g;
        for j in 0..m {
            out -= (&self.dw[j] + &self.df[j]) * gamma[j];
        }
        self.pending = true;
        out
    }
}
const BALANCE_EVERY: usize = 50;

/// Real coordinates of a Hermitian matrix in which Tr[A B] is the dot product.
fn hvec_into(m: &CMat, out: &mut [f64]) {
    let d = m.nrows();
    let s2 = std::f64::consts::SQRT_2;
    let mut k = 0;
    for i in 0..d {
        out[k] = m[(i, i)].re;
        k += 1;
    }
    for i in 0..d {
        for j in (i + 1)..d {
            out[k] = s2 * m[(i, j)].re;
            out[k + 1] = s2 * m[(i, j)].im;
            k += 2;
        }
    }
}

fn hunvec(v: &[f64], d: usize) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = CMat::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        m[(i, i)] = c64(v[k], 0.0);
        k += 1;
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let z = c64(s * v[k], s * v[k + 1]);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    m
}

/// Orthonormal Hermitian basis of d x d matrices matching the coordinates above.
pub fn hermitian_basis(d: usize) -> Vec<CMat> {
    (0..d * d)
        .map(|k| {
            let mut e = vec![0.0; d * d];
            e[k] = 1.0;
            hunvec(&e, d)
        })
        .collect()
}

struct Layout {
    offsets: Vec<usize>,
    dims: Vec<usize>,
    n: usize,
}

impl Layout {
    fn new(blocks: &[Block]) -> Self {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut n = 0;
        for b in blocks {
            offsets.push(n);
            n += b.dim * b.dim;
        }
        Self { offsets, dims: blocks.iter().map(|b| b.dim).collect(), n }
    }

    fn range(&self, b: usize) -> std::ops::Range<usize> {
        self.offsets[b]..self.offsets[b] + self.dims[b] * self.dims[b]
    }

    fn pack(&self, mats: &[CMat]) -> DVector<f64> {
        let mut v = DVector::zeros(self.n);
        for (b, m) in mats.iter().enumerate() {
            hvec_into(m, &mut v.as_mut_slice()[self.range(b)]);
        }
        v
    }

    fn unpack(&self, v: &DVector<f64>) -> Vec<CMat> {
        (0..self.dims.len()).map(|b| hunvec(&v.as_slice()[self.range(b)], self.dims[b])).collect()
    }
}

/// Affine set {x : A x = b} kept as orthonormal rows Q with A_kept = Rᵀ Q.
struct AffineSet {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    b_kept: DVector<f64>,
    x0: DVector<f64>,
}

impl AffineSet {
    /// Modified Gram-Schmidt with one reorthogonalization pass; rows whose
    /// remainder falls below the threshold (relative to their norm) are
    /// dropped after checking their right-hand side is consistent.
    fn new(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Result<Self> {
        let n = a.ncols();
        let mut qrows: Vec<DVector<f64>> = Vec::new();
        let mut rcols: Vec<Vec<f64>> = Vec::new();
        let mut kept_b = Vec::new();
        for k in 0..a.nrows() {
            let row: DVector<f64> = a.row(k).transpose();
            let scale = row.norm();
            if scale == 0.0 {
                if b[k].abs() > tol {
                    return Err(Error::Solver { status: Status::Infeasible.to_string(), detail: format!("constraint {k} is 0 = {}", b[k]) });
                }
                continue;
            }
            let mut v = row.clone();
            let mut coeffs = vec![0.0; qrows.len()];
            for _ in 0..2 {
                for (j, q) in qrows.iter().enumerate() {
                    let c = q.dot(&v);
                    coeffs[j] += c;
                    v.axpy(-c, q, 1.0);
                }
            }
            let rem = v.norm();
            if rem > PRUNE_THRESHOLD * scale {
                coeffs.push(rem);
                qrows.push(v / rem);
                rcols.push(coeffs);
                kept_b.push(b[k]);
            } else {
                // Dependent row: its right-hand side must follow from the kept ones.
                let implied = Self::implied_rhs(&rcols, &kept_b, &coeffs);
                if (implied - b[k]).abs() > tol.max(1e-9) * (1.0 + b[k].abs()) {
                    return Err(Error::Solver {
                        status: Status::Infeasible.to_string(),
                        detail: format!("constraint {k} contradicts earlier rows ({implied} vs {})", b[k]),
                    });
                }
            }
        }
        let m = qrows.len();
        let mut q = DMatrix::zeros(m, n);
        for (i, row) in qrows.iter().enumerate() {
            q.set_row(i, &row.transpose());
        }
        // Row k of A_kept = Σ_j R[j,k] q_j, so R is upper triangular m x m.
        let mut r = DMatrix::zeros(m, m);
        for (k, col) in rcols.iter().enumerate() {
            for (j, &c) in col.iter().enumerate() {
                r[(j, k)] = c;
            }
        }
        let b_kept = DVector::from_vec(kept_b);
        // Solve Rᵀ t = b, then x0 = Qᵀ t is the least-norm solution.
        let t = r.transpose().solve_lower_triangular(&b_kept).ok_or_else(|| Error::Solver {
            status: Status::Infeasible.to_string(),
            detail: "singular constraint factor".into(),
        })?;
        let x0 = q.transpose() * t;
        Ok(Self { q, r, b_kept, x0 })
    }

    /// Right-hand side implied by a dependent row with coefficients `coeffs`
    /// on the orthonormal rows.
    fn implied_rhs(rcols: &[Vec<f64>], kept_b: &[f64], coeffs: &[f64]) -> f64 {
        let m = rcols.len();
        if m == 0 {
            return 0.0;
        }
        let mut r = DMatrix::zeros(m, m);
        for (k, col) in rcols.iter().enumerate() {
            for (j, &c) in col.iter().enumerate() {
                r[(j, k)] = c;
            }
        }
        let t = r.transpose().solve_lower_triangular(&DVector::from_column_slice(kept_b)).unwrap_or_else(|| DVector::zeros(m));
        DVector::from_column_slice(&coeffs[..m]).dot(&t)
    }

    fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let qv = &self.q * v;
        v - self.q.transpose() * qv + &self.x0
    }

    /// Least-squares multipliers y with A_keptᵀ y ≈ g.
    fn multipliers(&self, g: &DVector<f64>) -> DVector<f64> {
        let qg = &self.q * g;
        self.r.solve_upper_triangular(&qg).unwrap_or_else(|| DVector::zeros(qg.len()))
    }

    fn rows(&self) -> usize {
        self.q.nrows()
    }
}

fn check_problem(p: &SdpProblem) -> Result<()> {
    if p.blocks.is_empty() || p.objective.len() != p.blocks.len() {
        return Err(invalid("need one objective matrix per block"));
    }
    let check = |m: &CMat, b: usize, what: &str| -> Result<()> {
        let d = p.blocks[b].dim;
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::Dimension(format!("{what} for block {} is {}x{}, expected {d}x{d}", p.blocks[b].name, m.nrows(), m.ncols())));
        }
        if hermiticity_defect(m) > 1e-12 * (1.0 + crate::linalg::max_abs(m)) {
            return Err(invalid(format!("{what} for block {} is not Hermitian", p.blocks[b].name)));
        }
        Ok(())
    };
    for (b, c) in p.objective.iter().enumerate() {
        check(c, b, "objective")?;
    }
    for con in &p.constraints {
        for (b, a) in &con.terms {
            if *b >= p.blocks.len() {
                return Err(invalid(format!("constraint refers to missing block {b}")));
            }
            check(a, *b, "constraint")?;
        }
    }
    Ok(())
}

fn project_cone(v: &DVector<f64>, layout: &Layout, blocks: &[Block]) -> DVector<f64> {
    let mut out = v.clone();
    for (b, blk) in blocks.iter().enumerate() {
        if blk.kind == BlockKind::Psd {
            let m = hunvec(&v.as_slice()[layout.range(b)], blk.dim);
            let p = crate::linalg::psd_projection(&m);
            hvec_into(&p, &mut out.as_mut_slice()[layout.range(b)]);
        }
    }
    out
}

/// Initial iterate: identity on PSD blocks scaled to unit trace, zero elsewhere.
fn initial_point(layout: &Layout, blocks: &[Block]) -> DVector<f64> {
    let mats: Vec<CMat> = blocks
        .iter()
        .map(|b| match b.kind {
            BlockKind::Psd => identity(b.dim).unscale(b.dim as f64),
            BlockKind::Free => CMat::zeros(b.dim, b.dim),
        })
        .collect();
    layout.pack(&mats)
}

pub fn solve(p: &SdpProblem, settings: &SolverSettings) -> Result<SdpSolution> {
    check_problem(p)?;
    if !(1e-10..=1e-3).contains(&settings.tol) {
        return Err(invalid(format!("tolerance {} outside [1e-10, 1e-3]", settings.tol)));
    }
    if !(settings.over_relaxation > 0.0 && settings.over_relaxation < 2.0) || settings.rho <= 0.0 {
        return Err(invalid("over-relaxation must lie in (0, 2) and rho must be positive"));
    }
    let layout = Layout::new(&p.blocks);
    let n = layout.n;
    let mut a = DMatrix::zeros(p.constraints.len(), n);
    let mut scratch = vec![0.0; n];
    for (k, con) in p.constraints.iter().enumerate() {
        for (b, m) in &con.terms {
            let r = layout.range(*b);
            hvec_into(m, &mut scratch[r.clone()]);
            for (j, x) in r.clone().zip(&scratch[r]) {
                a[(k, j)] += x;
            }
        }
    }
    let b = DVector::from_iterator(p.constraints.len(), p.constraints.iter().map(|c| c.rhs));
    let aff = AffineSet::new(&a, &b, settings.tol)?;
    let c = layout.pack(&p.objective);

    let tol = settings.tol;
    let alpha = settings.over_relaxation;
    let mut rho = settings.rho;
    let mut w = stack(&initial_point(&layout, &p.blocks), &DVector::zeros(n));
    let mut x = DVector::zeros(n);
    let mut u = DVector::zeros(n);
    let mut aa = Anderson::new(settings.anderson_memory, 2 * n);
    let mut fallback: Option<DVector<f64>> = None;
    let mut reference = f64::INFINITY;
    let mut status = Status::MaxIter;
    let mut iterations = settings.max_iter;
    let (mut r_prim, mut r_dual, mut gap, mut dual_value) = (f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::NAN);
    let scale_c = 1.0 + c.norm();
    for it in 1..=settings.max_iter {
        let (z_in, u_in) = (w.rows(0, n).into_owned(), w.rows(n, n).into_owned());
        x = aff.project(&(&z_in - &u_in + &c / rho));
        if !x.iter().all(|v| v.is_finite()) {
            status = Status::Infeasible;
            iterations = it;
            break;
        }
        let xh = &x * alpha + &z_in * (1.0 - alpha);
        let z = project_cone(&(&xh + &u_in), &layout, &p.blocks);
        u = &u_in + &xh - &z;
        let mut g = stack(&z, &u);
        let f_norm = (&g - &w).norm();
        if aa.pending && f_norm > reference {
            // The extrapolated point made things worse: restart from the plain step.
            w = fallback.take().expect("plain step kept before extrapolating");
            aa.reset();
            continue;
        }
        if it % 10 == 0 || it == settings.max_iter {
            let scale_x = 1.0 + x.norm().max(z.norm());
            r_prim = (&x - &z).norm() / scale_x;
            r_dual = rho * (&z - &z_in).norm() / scale_c;
            let y = aff.multipliers(&(&c - &u * rho));
            dual_value = aff.b_kept.dot(&y);
            let primal_value = c.dot(&x);
            gap = (dual_value - primal_value).abs() / (1.0 + primal_value.abs() + dual_value.abs());
            if r_prim <= tol && r_dual <= tol && gap <= tol {
                status = Status::Optimal;
                iterations = it;
                break;
            }
            if it % BALANCE_EVERY == 0 {
                let factor = if r_prim > 10.0 * r_dual {
                    2.0
                } else if r_dual > 10.0 * r_prim {
                    0.5
                } else {
                    1.0
                };
                if factor != 1.0 {
                    rho *= factor;
                    u /= factor;
                    g = stack(&z, &u);
                    aa.reset();
                }
            }
        }
        reference = f_norm;
        fallback = Some(g.clone());
        w = aa.extrapolate(&w, g);
    }
    let y = aff.multipliers(&(&c - &u * rho));
    let slack = aff.q.transpose() * (&aff.r * &y) - &c;
    let dual_slack = layout.unpack(&slack);
    Ok(SdpSolution {
        primal_value: c.dot(&x),
        dual_value: if dual_value.is_nan() { aff.b_kept.dot(&y) } else { dual_value },
        blocks: layout.unpack(&x),
        gap,
        iterations,
        status,
        primal_residual: r_prim,
        dual_residual: r_dual,
        dual_slack,
        kept_constraints: aff.rows(),
    })
}

#[derive(Debug, Clone)]
pub struct FcoSolution {
    pub p_star: f64,
    pub tester: Tester,
    /// Upper bound on the optimum from the dual iterate, valid even when that
    /// iterate is slightly infeasible.
    pub certificate: f64,
    pub iterations: usize,
    pub status: Status,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

/// Tester-problem blocks: W₊, W₋ (PSD), Y on the ports before the last
/// output and Z on the first input (free).
fn tester_problem(payoff: &PayoffPair, order: Order, isotropic: bool) -> Result<SdpProblem> {
    const PORTS: [usize; 4] = [2; 4];
    for g in [&payoff.g_plus, &payoff.g_minus] {
        if g.nrows() != 16 || g.ncols() != 16 {
            return Err(Error::Dimension("payoff operators must be 16x16".into()));
        }
        if hermiticity_defect(g) > 1e-10 {
            return Err(invalid("payoff operators must be Hermitian"));
        }
        if min_eigenvalue(g) < -1e-9 {
            return Err(invalid("payoff operators must be positive semidefinite"));
        }
    }
    let blocks = vec![
        Block { name: "W+".into(), dim: 16, kind: BlockKind::Psd },
        Block { name: "W-".into(), dim: 16, kind: BlockKind::Psd },
        Block { name: "Y".into(), dim: 8, kind: BlockKind::Free },
        Block { name: "Z".into(), dim: 2, kind: BlockKind::Free },
    ];
    let objective = vec![
        crate::linalg::hermitian_part(&payoff.g_plus.transpose()).scale(0.5),
        crate::linalg::hermitian_part(&payoff.g_minus.transpose()).scale(0.5),
        CMat::zeros(8, 8),
        CMat::zeros(2, 2),
    ];
    let [_, o1, i2, o2] = order.slots();
    let y_ports = order.y_ports();
    let pos_i2 = y_ports.iter().position(|&p| p == i2).expect("I2 precedes O2");
    let mut constraints = Vec::new();
    // W₊ + W₋ = Y ⊗ 1_{O2}
    for h in hermitian_basis(16) {
        let ty = partial_trace(&h, &PORTS, &[o2 as usize])?;
        constraints.push(Constraint { terms: vec![(0, h.clone()), (1, h), (2, -ty)], rhs: 0.0 });
    }
    // Tr_{I2} Y = Z ⊗ 1_{O1}, with (I1, O1) in canonical order.
    let io_positions: Vec<usize> = (0..3).filter(|&k| k != pos_i2).collect();
    debug_assert!((order.slots()[0] as usize) < (o1 as usize));
    for h in hermitian_basis(4) {
        let lifted = embed(&h, &io_positions, &[2, 2, 2])?;
        let tz = partial_trace(&h, &[2, 2], &[1])?;
        constraints.push(Constraint { terms: vec![(2, lifted), (3, -tz)], rhs: 0.0 });
    }
    constraints.push(Constraint { terms: vec![(3, identity(2))], rhs: 1.0 });
    if isotropic {
        let basis = isotropic_basis()?;
        for h in hermitian_basis(16) {
            let r = crate::linalg::hermitian_part(&(&h - basis.project(&h)));
            if crate::linalg::max_abs(&r) < 1e-12 {
                continue;
            }
            constraints.push(Constraint { terms: vec![(0, r.clone())], rhs: 0.0 });
            constraints.push(Constraint { terms: vec![(1, r)], rhs: 0.0 });
        }
    }
    Ok(SdpProblem { blocks, objective, constraints })
}

/// Mixes W± with the coin-flip tester just enough to make both blocks PSD.
fn repair_tester(order: Order, w_plus: &CMat, w_minus: &CMat) -> Result<Tester> {
    let eps = (-min_eigenvalue(w_plus)).max(-min_eigenvalue(w_minus)).max(0.0);
    let lambda = 8.0 * eps / (1.0 + 8.0 * eps);
    let coin = identity(16).scale(0.125);
    let mix = |w: &CMat| crate::linalg::hermitian_part(&(w.scale(1.0 - lambda) + coin.scale(lambda)));
    Tester::new(order, mix(w_plus), mix(w_minus))
}

fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Maximal FCO success probability for the given payoff and order,
/// optionally restricted to frame-invariant testers.
pub fn optimize_fco(payoff: &PayoffPair, order: Order, isotropic: bool, settings: &SolverSettings) -> Result<FcoSolution> {
    let problem = tester_problem(payoff, order, isotropic)?;
    let sol = solve(&problem, settings)?;
    if sol.status == Status::Infeasible {
        return Err(Error::Solver { status: sol.status.to_string(), detail: "affine projection diverged".into() });
    }
    let tester = repair_tester(order, &sol.blocks[0], &sol.blocks[1])?;
    let p_star = success_probability(&tester, payoff);
    // Any valid tester has Tr W± ≤ 4, |Y|_F ≤ Tr Y = 2 and |Z|_F ≤ 1.
    let s = &sol.dual_slack;
    let certificate = sol.dual_value
        + 4.0 * ((-min_eigenvalue(&s[0])).max(0.0) + (-min_eigenvalue(&s[1])).max(0.0))
        + 2.0 * frobenius(&s[2])
        + frobenius(&s[3]);
    Ok(FcoSolution {
        p_star,
        tester,
        certificate,
        iterations: sol.iterations,
        status: sol.status,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        gap: sol.gap,
    })
}
