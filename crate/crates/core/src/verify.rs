//! Self-checks behind the `verify` command: curvature conditions of the
//! relaxation, stationarity of the closed-form primal updates, mobility
//! statistics and the two-zone handover example.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::channel::RateTensor;
use crate::convexity::{check_monomial_convexity, numeric_concavity_witness, numeric_hessian_witness, Curvature};
use crate::mobility::{expected_leg_length, misprediction_frequency, service_time_bound, MobilityParams, Room};
use crate::problem::ProblemInstance;
use crate::sim::IntuitionScenario;
use crate::solver::{primal_update, MultiplierSet, RelaxedPrimal, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Sample sizes for [`run_all`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub hessian_samples: usize,
    pub kkt_sets: usize,
    pub leg_samples: usize,
    pub stop_trials: usize,
}

impl Budget {
    pub const FULL: Budget = Budget {
        hessian_samples: 10_000,
        kkt_sets: 100,
        leg_samples: 10_000_000,
        stop_trials: 100_000,
    };
    pub const QUICK: Budget = Budget {
        hessian_samples: 1_000,
        kkt_sets: 20,
        leg_samples: 1_000_000,
        stop_trials: 20_000,
    };
}

pub fn run_all(budget: Budget, seed: u64) -> Vec<Check> {
    let mut checks = convexity_checks(budget.hessian_samples, seed);
    checks.push(kkt_check(budget.kkt_sets, seed));
    checks.extend(mobility_checks(budget.leg_samples, budget.stop_trials, seed));
    checks.push(intuition_check());
    checks
}

/// Analytic verdict and sampled Hessians agree on both sides of the
/// boundaries a = 2β−1 (later slots) and a = β (first slot).
pub fn convexity_checks(samples: usize, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    // `side` selects the semi-definiteness being probed; `holds` whether it should.
    let mut case = |label: String, (a, b, c): (f64, f64, f64), side: Curvature, holds: bool| {
        let analytic = check_monomial_convexity(a, b, c);
        let probe = match side {
            Curvature::Concave => numeric_concavity_witness(a, b, c, samples, seed),
            _ => numeric_hessian_witness(a, b, c, samples, seed),
        };
        let expected = if holds { side } else { Curvature::Neither };
        let passed = analytic == expected && probe.holds() == holds;
        let what = if holds { "expected semi-definite" } else { "expected counterexample" };
        out.push(Check::new(
            label,
            passed,
            format!("({a:.3}, {b:.3}, {c:.3}): analytic {analytic:?}, numeric {probe:?}, {what}"),
        ));
    };
    for beta in [1.5, 2.0, 3.0] {
        let later = (2.0 * beta - 1.0, 1.0 - beta, 1.0 - beta);
        let first = (beta, 1.0 - beta, 0.0);
        case(format!("convex later slot, beta {beta}"), later, Curvature::Convex, true);
        case(format!("convex later slot a-0.1, beta {beta}"), (later.0 - 0.1, later.1, later.2), Curvature::Convex, false);
        case(format!("convex first slot, beta {beta}"), first, Curvature::Convex, true);
        case(format!("convex first slot a-0.1, beta {beta}"), (first.0 - 0.1, first.1, 0.0), Curvature::Convex, false);
    }
    for beta in [0.6, 0.75, 0.9] {
        let later = (2.0 * beta - 1.0, 1.0 - beta, 1.0 - beta);
        let first = (beta, 1.0 - beta, 0.0);
        case(format!("concave later slot, beta {beta}"), later, Curvature::Concave, true);
        case(format!("concave later slot a+0.1, beta {beta}"), (later.0 + 0.1, later.1, later.2), Curvature::Concave, false);
        case(format!("concave first slot, beta {beta}"), first, Curvature::Concave, true);
        case(format!("concave first slot a+0.1, beta {beta}"), (first.0 + 0.1, first.1, 0.0), Curvature::Concave, false);
    }
    out
}

/// Outcome of the stationarity suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    pub max_relative_residual: f64,
    /// Largest relative violation of λ·x·p = γ·r on later slots.
    pub max_identity_error: f64,
    pub checked: usize,
}

/// Random instance and multipliers for which every share numerator is
/// positive (so the primal update never reports a degenerate AP).
pub fn random_kkt_case(rng: &mut ChaCha8Rng) -> (ProblemInstance, MultiplierSet) {
    let (t, u, a) = (rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=3));
    let rates = RateTensor::from_fn(t, u, a, |_| rng.gen_range(0.2..10.0)).expect("positive rates");
    let prev = (0..u).map(|_| rng.gen_range(0..a)).collect();
    let inst = ProblemInstance::new(rates, prev, rng.gen_range(0.5..=1.0), rng.gen_range(1.3..3.5))
        .expect("valid random instance");
    let mult = MultiplierSet {
        lambda: Array2::from_shape_fn((t, a), |_| rng.gen_range(0.2..5.0)),
        zeta: Array2::from_shape_fn((t, u), |_| rng.gen_range(-5.0..-0.01)),
        gamma: Array3::from_shape_fn((t - 1, u, a), |_| rng.gen_range(0.005..0.5)),
    };
    (inst, mult)
}

/// Lagrangian of the relaxed problem expanded into its individual products,
/// so a finite difference can be taken term by term without cancellation.
fn lagrangian_terms(inst: &ProblemInstance, mult: &MultiplierSet, v: &RelaxedPrimal, out: &mut Vec<f64>) {
    out.clear();
    let (t_n, u_n, a_n) = (inst.horizon(), inst.users(), inst.aps());
    let beta = inst.beta;
    for t in 0..t_n {
        for u in 0..u_n {
            for a in 0..a_n {
                let (x, p, r) = (v.x[[t, u, a]], v.p[[t, u, a]], v.r[[t, u, a]]);
                let (lambda, zeta) = (mult.lambda[[t, a]], mult.zeta[[t, u]]);
                out.push(x.powf(2.0 * beta - 1.0) * (r * p).powf(1.0 - beta));
                out.push(lambda * x * p);
                out.push(zeta * x);
                if t > 0 {
                    let gamma = mult.gamma[[t - 1, u, a]];
                    let rate = inst.rates.get(t, u, a);
                    out.push(gamma * r);
                    out.push(-gamma * (1.0 - inst.eta0) * v.x[[t - 1, u, a]] * rate);
                    out.push(-gamma * inst.eta0 * rate);
                }
            }
        }
        out.extend(mult.lambda.row(t).iter().map(|l| -l));
        out.extend(mult.zeta.row(t).iter().map(|z| -z));
    }
}

#[derive(Clone, Copy)]
enum Var {
    X,
    P,
    R,
}

/// Derivative of the Lagrangian along one coordinate and the sum of the
/// absolute per-term contributions (the scale the residual is measured
/// against). Central differences with one Richardson step.
fn partial(inst: &ProblemInstance, mult: &MultiplierSet, at: &RelaxedPrimal, var: Var, idx: (usize, usize, usize)) -> (f64, f64) {
    let mut v = at.clone();
    let base = match var {
        Var::X => at.x[idx],
        Var::P => at.p[idx],
        Var::R => at.r[idx],
    };
    let (mut plus, mut minus) = (Vec::new(), Vec::new());
    let mut diff = |h: f64| -> Vec<f64> {
        let set = |val: f64, v: &mut RelaxedPrimal| match var {
            Var::X => v.x[idx] = val,
            Var::P => v.p[idx] = val,
            Var::R => v.r[idx] = val,
        };
        set(base + h, &mut v);
        lagrangian_terms(inst, mult, &v, &mut plus);
        set(base - h, &mut v);
        lagrangian_terms(inst, mult, &v, &mut minus);
        set(base, &mut v);
        plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    };
    let h = 1e-4 * base.abs().max(1e-12);
    let coarse = diff(h);
    let fine = diff(h / 2.0);
    let terms: Vec<f64> = fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect();
    (terms.iter().sum(), terms.iter().map(|d| d.abs()).sum())
}

/// Runs the closed-form primal update on random instances and multipliers
/// and measures ∂L/∂x, ∂L/∂p, ∂L/∂r by finite differences at every
/// coordinate where no bound is active.
pub fn kkt_residuals(sets: usize, seed: u64) -> KktReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SolverConfig::default();
    let mut report = KktReport {
        max_relative_residual: 0.0,
        max_identity_error: 0.0,
        checked: 0,
    };
    for _ in 0..sets {
        let (inst, mult) = random_kkt_case(&mut rng);
        let primal = primal_update(&inst, &mult, &cfg).expect("positive numerators");
        for ((t, u, a), &x) in primal.x.indexed_iter() {
            let (p, r) = (primal.p[[t, u, a]], primal.r[[t, u, a]]);
            let interior_r = t == 0 || (r > 0.0 && r < inst.rates.get(t, u, a));
            if !(x > 1e-9 && x < 1.0 - 1e-9 && p > cfg.p_floor * (1.0 + 1e-9) && p < 1.0 - 1e-9 && interior_r) {
                continue;
            }
            let mut vars = vec![Var::X, Var::P];
            if t > 0 {
                vars.push(Var::R);
            }
            for var in vars {
                let (d, scale) = partial(&inst, &mult, &primal, var, (t, u, a));
                report.max_relative_residual = report.max_relative_residual.max(d.abs() / scale);
            }
            if t > 0 {
                let lhs = mult.lambda[[t, a]] * x * p;
                let rhs = mult.gamma[[t - 1, u, a]] * r;
                report.max_identity_error = report.max_identity_error.max((lhs - rhs).abs() / lhs.abs());
            }
            report.checked += 1;
        }
    }
    report
}

pub fn kkt_check(sets: usize, seed: u64) -> Check {
    let rep = kkt_residuals(sets, seed);
    Check::new(
        "stationarity of closed-form updates",
        rep.checked > 0 && rep.max_relative_residual < 1e-6 && rep.max_identity_error < 1e-9,
        format!(
            "{} unclamped coordinates over {sets} sets, max relative residual {:.2e}, max identity error {:.2e}",
            rep.checked, rep.max_relative_residual, rep.max_identity_error
        ),
    )
}

pub const UNIT_SQUARE_MEAN_DISTANCE: f64 = 0.52141;

/// Mean leg length on the unit square, and the stop frequency at the
/// service-time bound for δ = 0.1, T = 3, speeds in [0.1, 1] m/s.
pub fn mobility_checks(leg_samples: usize, trials: usize, seed: u64) -> Vec<Check> {
    let unit = Room {
        width: 1.0,
        depth: 1.0,
    };
    let mut out = Vec::new();
    let mean = expected_leg_length(&unit, leg_samples, seed).expect("valid room");
    out.push(Check::new(
        "mean leg length, unit square",
        (mean - UNIT_SQUARE_MEAN_DISTANCE).abs() <= 0.005,
        format!("{mean:.5} from {leg_samples} samples (reference {UNIT_SQUARE_MEAN_DISTANCE})"),
    ));
    let params = MobilityParams {
        v_min: 0.1,
        v_max: 1.0,
        ..MobilityParams::default()
    };
    let tau = service_time_bound(0.1, 3, 0.1, 1.0, mean).expect("valid bound inputs");
    let freq = misprediction_frequency(&unit, &params, 3, tau, trials, seed).expect("valid trial inputs");
    out.push(Check::new(
        "misprediction frequency at the service-time bound",
        freq <= 0.13,
        format!("{freq:.4} over {trials} stationary users, service time {tau:.4} s, target 0.1"),
    ));
    out
}

/// Handing both users over at once gives the best two-step average rate.
pub fn intuition_check() -> Check {
    let rows = IntuitionScenario::preset().strategies().expect("valid preset");
    let best = rows
        .iter()
        .max_by(|a, b| a.average().total_cmp(&b.average()))
        .expect("three strategies");
    Check::new(
        "two-zone handover timing",
        best.first_handovers == 2,
        format!(
            "two-step average Mbit/s by first-slot handovers: {}",
            rows.iter()
                .map(|r| format!("{}: {:.1}", r.first_handovers, r.average() / 1e6))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}
