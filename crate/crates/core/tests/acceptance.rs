//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::PI;
use std::process::Command;
use std::time::Instant;

use causalbench::channels::{
    average_gate_fidelity, choi_of_channel, choi_of_unitary, first_order_choi_f, first_order_choi_g, single_kraus_g,
    QubitChannel, Rotation,
};
use causalbench::discrimination::{
    average_success, control_entropy, overlap, setup_truncation, GridSpec, PairSample, Setup, StatevectorOracle,
    TaskConfig,
};
use causalbench::fock::{kraus_operators, truncation_order, DEFAULT_TAIL_TOL};
use causalbench::linalg::{c64, max_abs_diff, trace, M2};
use causalbench::sdp::{optimize_fco, FcoSolution, SolverSettings, Status};
use causalbench::tester::{
    apply_tester, assemble_g_finite, assemble_g_haar, assemble_g_ideal, isotropic_basis, optimal_circuit_ba,
    success_probability, tester_from_circuit, verify_perfect_discrimination, Order, PayoffPair, ISOTROPIC_DIM,
};
use causalbench::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

/// Every SDP solved here, for the duality-gap check.
#[derive(Default)]
struct Ledger {
    solves: Vec<(String, f64)>,
}

impl Ledger {
    fn solve(&mut self, name: &str, payoff: &PayoffPair, order: Order, isotropic: bool) -> Result<FcoSolution> {
        let settings = SolverSettings::default();
        let s = optimize_fco(payoff, order, isotropic, &settings)?;
        self.solves.push((name.to_string(), s.gap));
        Ok(s)
    }
}

fn c1(ledger: &mut Ledger) -> Result<Outcome> {
    let start = Instant::now();
    let s = ledger.solve("ideal ab", &assemble_g_ideal(), Order::AThenB, false)?;
    let secs = start.elapsed().as_secs_f64();
    let pass = s.status == Status::Optimal && (s.p_star - 0.9489).abs() <= 2e-3 && secs < 60.0;
    outcome(pass, format!("p* = {:.7}, status {}, {:.1} s", s.p_star, s.status, secs))
}

fn c2(ledger: &mut Ledger) -> Result<Outcome> {
    let s = ledger.solve("ideal ba", &assemble_g_ideal(), Order::BThenA, false)?;
    outcome(s.status == Status::Optimal && s.p_star >= 1.0 - 1e-5, format!("p* = {:.9}, status {}", s.p_star, s.status))
}

fn c3(ledger: &mut Ledger) -> Result<Outcome> {
    let ideal = assemble_g_ideal();
    let haar = assemble_g_haar();
    let mut pass = true;
    let mut parts = Vec::new();
    for order in [Order::AThenB, Order::BThenA] {
        let iso = ledger.solve(&format!("iso {}", order.label()), &ideal, order, true)?;
        let h = ledger.solve(&format!("haar {}", order.label()), &haar, order, false)?;
        pass &= iso.status == Status::Optimal && h.status == Status::Optimal;
        pass &= (iso.p_star - 0.9288).abs() <= 2e-3 && (h.p_star - iso.p_star).abs() <= 2e-3;
        parts.push(format!("{}: iso {:.7} haar {:.7}", order.label(), iso.p_star, h.p_star));
    }
    outcome(pass, parts.join(", "))
}

fn c4() -> Result<Outcome> {
    let circuit = optimal_circuit_ba();
    let check = verify_perfect_discrimination(&circuit, 1000, 2024)?;
    let t = tester_from_circuit(&circuit)?;
    let p = success_probability(&t, &assemble_g_ideal());
    let pass = check.max_abs_overlap <= 1e-10 && check.samples >= 1000 && p >= 1.0 - 1e-6;
    outcome(pass, format!("max overlap {:.2e} over {} draws per set, tester p = {:.12}", check.max_abs_overlap, check.samples, p))
}

fn c5() -> Result<Outcome> {
    let start = Instant::now();
    let first_qs = |n: f64| 1.0 - (3.0 + PI * PI) / (32.0 * n);
    let first_4b = |n: f64| 1.0 - (6.0 + 4.0 * PI * PI / 3.0) / (32.0 * n);
    let mut pass = true;
    let mut worst: (f64, &str, f64) = (0.0, "", 0.0);
    let mut order_violations = Vec::new();
    for k in 1..=20 {
        let n = k as f64;
        let qs = average_success(&TaskConfig { grid: GridSpec::uniform(48), ..TaskConfig::new(Setup::Qs, n) })?.p_average;
        let fb = average_success(&TaskConfig { grid: GridSpec::uniform(48), ..TaskConfig::new(Setup::FourBox, n) })?.p_average;
        if qs <= fb {
            order_violations.push(k);
        }
        if k >= 8 {
            for (label, got, want) in [("QS", qs, first_qs(n)), ("4B", fb, first_4b(n))] {
                let d = got - want;
                if d.abs() > worst.0.abs() {
                    worst = (d, label, n);
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= worst.0.abs() <= 2e-3 && order_violations.is_empty() && secs < 600.0;
    outcome(
        pass,
        format!(
            "worst first-order deviation {:+.2e} ({} at n̄ = {}), QS <= 4B at n̄ {:?}, {:.0} s",
            worst.0, worst.1, worst.2, order_violations, secs
        ),
    )
}

fn c6() -> Result<Outcome> {
    let n = 200.0;
    let cfg = |setup| TaskConfig { grid: GridSpec::uniform(48), ..TaskConfig::new(setup, n) };
    let qs = n * (1.0 - average_success(&cfg(Setup::Qs))?.p_average);
    let fb = n * (1.0 - average_success(&cfg(Setup::FourBox))?.p_average);
    let ch = QubitChannel::jaynes_cummings(PI, 0.0, n, truncation_order(n, DEFAULT_TAIL_TOL)?)?;
    let fid = n * (1.0 - average_gate_fidelity(&ch, &Rotation::equatorial(PI, 0.0)));
    let want = [(3.0 + PI * PI) / 32.0, (6.0 + 4.0 * PI * PI / 3.0) / 32.0, (2.0 + PI * PI / 2.0) / 12.0];
    let got = [qs, fb, fid];
    let rel: Vec<f64> = got.iter().zip(&want).map(|(g, w)| (g - w).abs() / w).collect();
    outcome(
        rel.iter().all(|&r| r <= 0.03),
        format!("QS {:.5} ({:.1}%), 4B {:.5} ({:.1}%), fidelity {:.5} ({:.1}%)", qs, 100.0 * rel[0], fb, 100.0 * rel[1], fid, 100.0 * rel[2]),
    )
}

fn random_density(rng: &mut ChaCha8Rng) -> M2 {
    let g = M2::from_fn(|_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let r = g * g.adjoint();
    r / r.trace()
}

fn random_pair(rng: &mut ChaCha8Rng, commuting: bool) -> PairSample {
    let mut a = || rng.random_range(-PI..PI);
    if commuting {
        PairSample::commuting(a(), a(), a())
    } else {
        PairSample::anticommuting(a(), a())
    }
}

fn c7() -> Result<Outcome> {
    let oracle = StatevectorOracle::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for setup in [Setup::Qs, Setup::FourBox] {
        for n in [5.0, 20.0] {
            let trunc = setup_truncation(setup, n, DEFAULT_TAIL_TOL)?;
            for k in 0..100 {
                let pair = random_pair(&mut rng, k % 2 == 0);
                let rho = random_density(&mut rng);
                let a = overlap(setup, &pair, n, &rho, trunc)?;
                let b = oracle.overlap(setup, &pair, n, &rho, trunc)?;
                worst = worst.max((a - b).norm());
            }
        }
    }
    outcome(worst <= 1e-10, format!("max deviation {worst:.2e} over 400 pairs"))
}

fn c8() -> Result<Outcome> {
    let n = 400.0;
    let mut worst_f: f64 = 0.0;
    let mut worst_g: f64 = 0.0;
    for theta in [PI / 4.0, PI / 2.0, PI] {
        let f = QubitChannel::jaynes_cummings(theta, 0.0, n, truncation_order(n, DEFAULT_TAIL_TOL)?)?;
        worst_f = worst_f.max(n * max_abs_diff(&choi_of_channel(&f).matrix, &first_order_choi_f(theta, 0.0, n).matrix));
        let g = single_kraus_g(theta, 0.0, n, truncation_order(n / 2.0, DEFAULT_TAIL_TOL)?)?;
        worst_g = worst_g.max(n * max_abs_diff(&choi_of_unitary(&g).matrix, &first_order_choi_g(theta, 0.0, n).matrix));
    }
    outcome(worst_f <= 0.05 && worst_g <= 0.05, format!("F residual {worst_f:.4}, G residual {worst_g:.4}"))
}

fn c9(ledger: &Ledger) -> Result<Outcome> {
    let mut fails = Vec::new();

    let mut completeness: f64 = 0.0;
    for n in [0.5, 5.0, 20.0, 100.0] {
        let trunc = truncation_order(n, DEFAULT_TAIL_TOL)?;
        for theta in [PI / 3.0, PI] {
            let ks = kraus_operators(theta, 0.7, n, trunc)?;
            let sum: M2 = ks.iter().map(|k| k.adjoint() * k).sum();
            completeness = completeness.max((sum - M2::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
    }
    if completeness > 10.0 * DEFAULT_TAIL_TOL {
        fails.push(format!("completeness {completeness:.1e}"));
    }

    let circuit = tester_from_circuit(&optimal_circuit_ba())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut sum_defect: f64 = 0.0;
    for _ in 0..50 {
        let a = Rotation::equatorial(rng.random_range(-PI..PI), rng.random_range(-PI..PI));
        let b = Rotation::pi_tilted(rng.random_range(-PI..PI), rng.random_range(-PI..PI));
        let (p, m) = apply_tester(&circuit, &choi_of_unitary(&a.matrix), &choi_of_unitary(&b.matrix))?;
        sum_defect = sum_defect.max((p + m - 1.0).abs());
    }
    if sum_defect > 1e-9 {
        fails.push(format!("probability sum {sum_defect:.1e}"));
    }

    let mut trace_defect: f64 = 0.0;
    for g in [assemble_g_ideal(), assemble_g_haar(), assemble_g_finite(5.0, &GridSpec::uniform(12), DEFAULT_TAIL_TOL)?] {
        trace_defect = trace_defect.max((trace(&g.g_plus).re - 4.0).abs()).max((trace(&g.g_minus).re - 4.0).abs());
    }
    if trace_defect > 1e-6 {
        fails.push(format!("Tr G {trace_defect:.1e}"));
    }

    let h = |x: f64| -x * x.log2() - (1.0 - x) * (1.0 - x).log2();
    let mut entropy_defect: f64 = 0.0;
    for _ in 0..100 {
        let ov = c64(rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7));
        entropy_defect = entropy_defect.max((control_entropy(ov) - h(0.5 * (1.0 + ov.norm()))).abs());
    }
    if entropy_defect > 1e-10 {
        fails.push(format!("entropy {entropy_defect:.1e}"));
    }

    let rank = isotropic_basis()?.ops.len();
    if rank != ISOTROPIC_DIM || rank != 14 {
        fails.push(format!("isotropic rank {rank}"));
    }

    let tol = SolverSettings::default().tol;
    let worst_gap = ledger.solves.iter().map(|(_, g)| g.abs()).fold(0.0, f64::max);
    if worst_gap > tol {
        fails.push(format!("duality gap {worst_gap:.1e}"));
    }

    outcome(
        fails.is_empty(),
        if fails.is_empty() {
            format!(
                "completeness {completeness:.1e}, sum {sum_defect:.1e}, Tr G {trace_defect:.1e}, entropy {entropy_defect:.1e}, rank {rank}, worst gap {worst_gap:.1e} over {} solves",
                ledger.solves.len()
            )
        } else {
            fails.join(", ")
        },
    )
}

fn run_cli(args: &[&str], threads: &str) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_causalbench"))
        .args(args)
        .env("CAUSALBENCH_THREADS", threads)
        .output()
        .expect("failed to launch the CLI");
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn c10() -> Result<Outcome> {
    let runs: [&[&str]; 6] = [
        &["success-sweep", "--nbar-min", "2", "--nbar-max", "10", "--nbar-steps", "3", "--grid", "8"],
        &["fco-optimize", "--nbar", "ideal,5", "--grid", "8", "--isotropic"],
        &["verify-circuit", "--samples", "300", "--seed", "5"],
        &["fidelity-sweep", "--nbar-steps", "5"],
        &["entropy", "--nbar-steps", "5"],
        &["asymptotics"],
    ];
    let mut differing = Vec::new();
    for args in runs {
        let reference = run_cli(args, "1");
        for threads in ["2", "1", "3"] {
            if run_cli(args, threads) != reference {
                differing.push(format!("{} (threads {threads})", args[0]));
            }
        }
    }
    outcome(differing.is_empty(), if differing.is_empty() { "6 commands byte-identical across thread counts 1, 2, 3".into() } else { differing.join(", ") })
}

fn main() {
    let mut ledger = Ledger::default();
    let results: Vec<(usize, Result<Outcome>)> = vec![
        (1, c1(&mut ledger)),
        (2, c2(&mut ledger)),
        (3, c3(&mut ledger)),
        (4, c4()),
        (5, c5()),
        (6, c6()),
        (7, c7()),
        (8, c8()),
        (9, c9(&ledger)),
        (10, c10()),
    ];
    let mut failed = 0;
    for (k, r) in results {
        let (pass, detail) = match r {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!("criterion {k:>2}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
