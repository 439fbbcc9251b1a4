//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `ACCEPTANCE_ONLY=5,6,8` restricts the run to the listed criteria.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use vlc_mvr::channel::{capacity, lambertian_order, path_loss, PhyParams};
use vlc_mvr::convexity::{check_monomial_convexity, numeric_concavity_witness, numeric_hessian_witness, Curvature, HessianWitness};
use vlc_mvr::mobility::{expected_leg_length, misprediction_frequency, service_time_bound, MobilityParams, Room};
use vlc_mvr::sim::{oracle_compare, run, Algorithm, IntuitionScenario, PredictionMode, ScenarioConfig, Simulation, INTUITION_MIDDLE_AP};
use vlc_mvr::solver::{primal_update, MultiplierSet, MvrSolver, SolverConfig};
use vlc_mvr::verify::random_kkt_case;
use vlc_mvr::{AllocationSolution, Point, ProblemInstance, RateTensor};

struct Outcome {
    passed: bool,
    detail: String,
}

type Criterion = (usize, &'static str, fn() -> Outcome);

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));

    let criteria: Vec<Criterion> = vec![
        (5, "monomial curvature", c5_curvature),
        (6, "stationarity of the closed forms", c6_kkt),
        (7, "feasibility after every solve", c7_feasibility),
        (8, "channel closed form and capacity", c8_channel),
        (9, "mobility statistics", c9_mobility),
        (10, "two-zone handover timing", c10_intuition),
        (1, "gap to the exhaustive optimum", c1_oracle_gap),
        (2, "throughput grows with look-ahead", c2_throughput),
        (3, "look-ahead gain saturates", c3_saturation),
        (4, "handovers grow with look-ahead", c4_handovers),
    ];
    let mut failed = Vec::new();
    for (n, name, check) in criteria {
        if !wanted(n) {
            continue;
        }
        let started = Instant::now();
        let o = check();
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!(
            "criterion {n:>2} {verdict}: {name}: {} [{:.1} s]",
            o.detail,
            started.elapsed().as_secs_f64()
        );
        if !o.passed {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

/// Exact Hessian of x^a y^b z^c.
fn monomial_hessian(e: [f64; 3], v: [f64; 3]) -> Matrix3<f64> {
    let f = v[0].powf(e[0]) * v[1].powf(e[1]) * v[2].powf(e[2]);
    Matrix3::from_fn(|i, j| {
        if i == j {
            e[i] * (e[i] - 1.0) * f / (v[i] * v[i])
        } else {
            e[i] * e[j] * f / (v[i] * v[j])
        }
    })
}

fn c5_curvature() -> Outcome {
    const SAMPLES: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let points: Vec<[f64; 3]> = (0..SAMPLES)
        .map(|_| std::array::from_fn(|_| rng.gen_range(0.1..10.0)))
        .collect();
    // worst λ_min/‖H‖ of the exact Hessian, with sign flipped for the concave side
    let exact_worst = |e: [f64; 3], sign: f64| {
        points
            .iter()
            .map(|&p| {
                let eig = SymmetricEigen::new(monomial_hessian(e, p) * sign).eigenvalues;
                let norm = eig.abs().max();
                if norm == 0.0 { 0.0 } else { eig.min() / norm }
            })
            .fold(f64::INFINITY, f64::min)
    };
    let mut failures = Vec::new();
    let mut cases = 0;
    let mut probe = |beta: f64, e: [f64; 3], side: Curvature, holds: bool| {
        cases += 1;
        let sign = if side == Curvature::Concave { -1.0 } else { 1.0 };
        let witness = if sign > 0.0 {
            numeric_hessian_witness(e[0], e[1], e[2], SAMPLES, 5)
        } else {
            numeric_concavity_witness(e[0], e[1], e[2], SAMPLES, 5)
        };
        let analytic = check_monomial_convexity(e[0], e[1], e[2]);
        let ok = if holds {
            witness.holds() && analytic == side && exact_worst(e, sign) >= -1e-8
        } else {
            match witness {
                HessianWitness::Counterexample { point, .. } => {
                    let eig = SymmetricEigen::new(monomial_hessian(e, point) * sign).eigenvalues;
                    analytic == Curvature::Neither && eig.min() < 0.0
                }
                _ => false,
            }
        };
        if !ok {
            failures.push(format!("beta {beta} {e:?}: {witness:?}, analytic {analytic:?}"));
        }
    };
    for beta in [1.5, 2.0, 3.0] {
        let a = 2.0 * beta - 1.0;
        probe(beta, [a, 1.0 - beta, 1.0 - beta], Curvature::Convex, true);
        probe(beta, [a - 0.1, 1.0 - beta, 1.0 - beta], Curvature::Convex, false);
    }
    for beta in [0.6, 0.75, 0.9] {
        let a = 2.0 * beta - 1.0;
        probe(beta, [a, 1.0 - beta, 1.0 - beta], Curvature::Concave, true);
        probe(beta, [a + 0.1, 1.0 - beta, 1.0 - beta], Curvature::Concave, false);
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{cases} cases over {SAMPLES} points each agree with the exact Hessians")
        } else {
            failures.join("; ")
        },
    )
}

/// Terms of the Lagrangian that involve one primal coordinate, as a
/// function of that coordinate's value.
fn local_terms(inst: &ProblemInstance, mult: &MultiplierSet, x: f64, p: f64, r: f64, var: usize, idx: (usize, usize, usize)) -> impl Fn(f64) -> Vec<f64> {
    let (t, u, a) = idx;
    let beta = inst.beta;
    let lambda = mult.lambda[[t, a]];
    let zeta = mult.zeta[[t, u]];
    let next = (t + 1 < inst.horizon()).then(|| {
        mult.gamma[[t, u, a]] * (1.0 - inst.eta0) * inst.rates.get(t + 1, u, a)
    });
    let own_gamma = (t > 0).then(|| mult.gamma[[t - 1, u, a]]);
    move |v: f64| {
        let (x, p, r) = match var {
            0 => (v, p, r),
            1 => (x, v, r),
            _ => (x, p, v),
        };
        let mut out = vec![x.powf(2.0 * beta - 1.0) * (r * p).powf(1.0 - beta), lambda * x * p];
        match var {
            0 => {
                out.push(zeta * x);
                if let Some(g) = next {
                    out.push(-g * x);
                }
            }
            2 => out.push(own_gamma.expect("later slot") * r),
            _ => {}
        }
        out
    }
}

/// Richardson-extrapolated central difference of every term; returns the
/// sum and the sum of magnitudes.
fn fd_partial(f: impl Fn(f64) -> Vec<f64>, at: f64) -> (f64, f64) {
    let diff = |h: f64| -> Vec<f64> {
        f(at + h).iter().zip(f(at - h)).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    };
    let h = 1e-4 * at.abs();
    let coarse = diff(h);
    let fine = diff(h / 2.0);
    let d: Vec<f64> = fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect();
    (d.iter().sum(), d.iter().map(|v| v.abs()).sum())
}

fn c6_kkt() -> Outcome {
    const SETS: usize = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let cfg = SolverConfig::default();
    let (mut worst, mut worst_identity, mut checked) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..SETS {
        let (inst, mult) = random_kkt_case(&mut rng);
        let primal = primal_update(&inst, &mult, &cfg).expect("positive numerators");
        for ((t, u, a), &x) in primal.x.indexed_iter() {
            let (p, r) = (primal.p[[t, u, a]], primal.r[[t, u, a]]);
            let r_free = t == 0 || r < inst.rates.get(t, u, a);
            if !(x > 1e-9 && x < 1.0 - 1e-9 && p > 2.0 * cfg.p_floor && p < 1.0 - 1e-9 && r_free) {
                continue;
            }
            let vars: &[(usize, f64)] = if t == 0 { &[(0, x), (1, p)] } else { &[(0, x), (1, p), (2, r)] };
            for &(var, at) in vars {
                let (d, scale) = fd_partial(local_terms(&inst, &mult, x, p, r, var, (t, u, a)), at);
                worst = worst.max(d.abs() / scale);
            }
            if t > 0 {
                let lhs = mult.lambda[[t, a]] * x * p;
                let rhs = mult.gamma[[t - 1, u, a]] * r;
                worst_identity = worst_identity.max((lhs - rhs).abs() / lhs);
            }
            checked += 1;
        }
    }
    outcome(
        checked > 0 && worst < 1e-6 && worst_identity < 1e-9,
        format!("{checked} unclamped coordinates, max relative residual {worst:.2e}, max λxp−γr error {worst_identity:.2e}"),
    )
}

/// Returns a description of the first violation, if any.
fn feasibility_violation(sol: &AllocationSolution, aps: usize) -> Option<String> {
    let x = sol.indicator();
    for (u, row) in x.outer_iter().enumerate() {
        let total: u32 = row.iter().map(|&v| v as u32).sum();
        if total != 1 {
            return Some(format!("user {u} holds {total} APs"));
        }
    }
    for a in 0..aps {
        if !sol.assignment.contains(&a) {
            continue;
        }
        let load: f64 = (0..x.nrows()).map(|u| x[[u, a]] as f64 * sol.shares[[u, a]]).sum();
        if (load - 1.0).abs() > 1e-12 {
            return Some(format!("AP {a} load {load}"));
        }
    }
    None
}

fn c7_feasibility() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let cfg = SolverConfig {
        max_iterations: 300,
        ..SolverConfig::default()
    };
    let (mut solves, mut degenerate) = (0usize, 0usize);
    let mut violation = None;
    for _ in 0..500 {
        let (t, u, a) = (rng.gen_range(1..=3), rng.gen_range(1..=8), rng.gen_range(1..=4));
        let rates = RateTensor::from_fn(t, u, a, |_| rng.gen_range(0.0..5.0)).expect("non-negative");
        let prev = (0..u).map(|_| rng.gen_range(0..a)).collect();
        let inst = ProblemInstance::new(rates, prev, rng.gen_range(0.3..=1.0), rng.gen_range(1.2..3.0)).expect("valid");
        match MvrSolver::new(cfg.clone()).solve(&inst) {
            Ok(sol) => {
                solves += 1;
                violation = violation.or_else(|| feasibility_violation(&sol, a));
            }
            Err(_) => degenerate += 1,
        }
    }
    let scenario = ScenarioConfig {
        duration_s: 60.0,
        horizon: 2,
        ..ScenarioConfig::preset("room4ap").expect("shipped preset")
    };
    let mut sim = Simulation::new(scenario.clone()).expect("valid preset");
    let mut solver = MvrSolver::new(scenario.solver.clone());
    for _ in 0..scenario.steps() {
        let inst = sim.instance().expect("valid instance");
        match solver.solve(&inst) {
            Ok(sol) => {
                solves += 1;
                violation = violation.or_else(|| feasibility_violation(&sol, inst.aps()));
                sim.commit_solution(&sol);
            }
            Err(_) => {
                degenerate += 1;
                sim.step().expect("fallback step");
            }
        }
    }
    outcome(
        violation.is_none(),
        match violation {
            None => format!("{solves} solves feasible ({degenerate} degenerate instances reported as errors)"),
            Some(v) => v,
        },
    )
}

/// Channel gain written out angle by angle.
fn literal_gain(user: Point, ap: Point, phy: &PhyParams) -> f64 {
    let h = phy.vertical_distance_m;
    let dx = user.x - ap.x;
    let dy = user.y - ap.y;
    let horizontal = (dx * dx + dy * dy).sqrt();
    let d = (horizontal * horizontal + h * h).sqrt();
    let irradiance = horizontal.atan2(h);
    let incidence = irradiance;
    let fov = phy.fov_semi_angle_deg.to_radians();
    if incidence > fov {
        return 0.0;
    }
    let m = -(2f64.ln()) / phy.half_intensity_angle_deg.to_radians().cos().ln();
    let concentrator = phy.refractive_index.powi(2) / fov.sin().powi(2);
    (m + 1.0) * phy.pd_area_m2 / (2.0 * PI * d * d)
        * irradiance.cos().powf(m)
        * phy.optical_filter_gain
        * concentrator
        * incidence.cos()
}

fn c8_channel() -> Outcome {
    const GEOMETRIES: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let (mut worst, mut blocked) = (0.0f64, 0usize);
    for _ in 0..GEOMETRIES {
        let phy = PhyParams {
            half_intensity_angle_deg: rng.gen_range(10.0..80.0),
            fov_semi_angle_deg: rng.gen_range(20.0..=90.0),
            pd_area_m2: rng.gen_range(1e-5..1e-3),
            refractive_index: rng.gen_range(1.0..2.0),
            optical_filter_gain: rng.gen_range(0.5..1.0),
            vertical_distance_m: rng.gen_range(0.5..4.0),
            ..PhyParams::default()
        };
        let user = Point::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0));
        let ap = Point::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0));
        let closed = path_loss(user, ap, &phy);
        let literal = literal_gain(user, ap, &phy);
        if literal == 0.0 {
            blocked += 1;
            worst = worst.max(if closed == 0.0 { 0.0 } else { f64::INFINITY });
        } else {
            worst = worst.max((closed - literal).abs() / literal);
        }
    }
    let order_ok = (lambertian_order(60.0).unwrap() - 1.0).abs() < 1e-12;
    let c = capacity(1.0, 20e6);
    outcome(
        worst < 1e-12 && c == 20e6 && order_ok,
        format!("{GEOMETRIES} geometries ({blocked} outside the field of view), max relative error {worst:.2e}; capacity(1, 20 MHz) = {c} bit/s"),
    )
}

fn c9_mobility() -> Outcome {
    let unit = Room { width: 1.0, depth: 1.0 };
    // mean distance between two uniform points of the unit square
    let exact = (2.0 + 2f64.sqrt() + 5.0 * (1.0 + 2f64.sqrt()).ln()) / 15.0;
    let mean = expected_leg_length(&unit, 10_000_000, 9).expect("valid room");
    let params = MobilityParams {
        v_min: 0.1,
        v_max: 1.0,
        ..MobilityParams::default()
    };
    let tau = service_time_bound(0.1, 3, 0.1, 1.0, mean).expect("valid bound inputs");
    let freq = misprediction_frequency(&unit, &params, 3, tau, 100_000, 9).expect("valid trials");
    outcome(
        (mean - 0.52141).abs() <= 0.005 && (exact - 0.52141).abs() < 1e-5 && freq <= 0.13,
        format!("E[l] = {mean:.5} (exact {exact:.5}); service time {tau:.4} s, misprediction frequency {freq:.4}"),
    )
}

fn c10_intuition() -> Outcome {
    let scenario = IntuitionScenario::preset();
    let rates = scenario.rate_tensor();
    let rows = scenario.strategies().expect("valid preset");
    // recomputed here: equal split per AP, η0 on the slot a user switches in
    let expected: Vec<f64> = (0..=2)
        .map(|k| {
            let plan = IntuitionScenario::strategy_plan(k);
            let mut prev = vec![INTUITION_MIDDLE_AP; 2];
            let mut total = 0.0;
            for (t, slot) in plan.iter().enumerate() {
                for (u, &a) in slot.iter().enumerate() {
                    let sharing = slot.iter().filter(|&&b| b == a).count() as f64;
                    let eta = if a == prev[u] { 1.0 } else { scenario.eta0 };
                    total += eta * rates.get(t, u, a) / sharing;
                }
                prev = slot.clone();
            }
            total / 2.0
        })
        .collect();
    let agree = rows.iter().zip(&expected).all(|(r, e)| (r.average() - e).abs() <= 1e-9 * e);
    let best = rows.iter().max_by(|a, b| a.average().total_cmp(&b.average())).expect("three rows");
    let strict = rows.iter().filter(|r| r.average() >= best.average()).count() == 1;
    outcome(
        agree && strict && best.first_handovers == 2,
        format!(
            "two-step averages by first-slot handovers (eta0 = {}): {}",
            scenario.eta0,
            rows.iter()
                .map(|r| format!("{} -> {:.1} Mbit/s", r.first_handovers, r.average() / 1e6))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn c1_oracle_gap() -> Outcome {
    const SEEDS: u64 = 5;
    let (mut within, mut steps, mut oracle_below) = (0usize, 0usize, 0usize);
    let mut worst_total: f64 = 0.0;
    let mut per_case = Vec::new();
    for horizon in [1, 2] {
        for seed in 0..SEEDS {
            let cfg = ScenarioConfig {
                users: 3,
                horizon,
                service_time_s: 0.3,
                duration_s: 60.0,
                seed,
                ..ScenarioConfig::default()
            };
            let gaps = oracle_compare(&cfg).expect("within the enumeration cap");
            let ok = gaps.iter().filter(|g| g.gap <= 0.05).count();
            oracle_below += gaps.iter().filter(|g| g.u_oracle < g.u_mvr - 1e-12 * g.u_mvr.abs()).count();
            within += ok;
            steps += gaps.len();
            let mvr = run(&cfg).expect("valid scenario").total_objective();
            let exact = run(&ScenarioConfig {
                algorithm: Algorithm::Exhaustive,
                ..cfg
            })
            .expect("valid scenario")
            .total_objective();
            let total_gap = (mvr - exact).abs() / exact.abs();
            worst_total = worst_total.max(total_gap);
            per_case.push(format!("T{horizon}/s{seed} {ok}/{} {:.2}%", gaps.len(), 100.0 * total_gap));
        }
    }
    let share = within as f64 / steps as f64;
    outcome(
        share >= 0.95 && worst_total <= 0.05 && oracle_below == 0,
        format!(
            "{:.1}% of {steps} steps within 5% (need 95%), worst total-objective gap {:.2}%, oracle below MVR at {oracle_below} steps; per run (steps within, total gap): {}",
            100.0 * share,
            100.0 * worst_total,
            per_case.join(", ")
        ),
    )
}

/// Per-seed results of the 15-user, 15-minute room2ap runs for T = 1..=4.
struct TrendRuns {
    throughput: Vec<[f64; 4]>,
    objective: Vec<[f64; 4]>,
    handovers: Vec<[f64; 4]>,
}

fn trend_runs() -> &'static TrendRuns {
    static RUNS: std::sync::OnceLock<TrendRuns> = std::sync::OnceLock::new();
    RUNS.get_or_init(|| {
        let mut out = TrendRuns {
            throughput: Vec::new(),
            objective: Vec::new(),
            handovers: Vec::new(),
        };
        for seed in 0..10 {
            let (mut thr, mut obj, mut ho) = ([0.0; 4], [0.0; 4], [0.0; 4]);
            for horizon in 1..=4 {
                let cfg = ScenarioConfig {
                    users: 15,
                    horizon,
                    duration_s: 900.0,
                    seed,
                    ..ScenarioConfig::preset("room2ap").expect("shipped preset")
                };
                let r = run(&cfg).expect("valid scenario");
                thr[horizon - 1] = r.mean_throughput();
                obj[horizon - 1] = r.total_objective();
                ho[horizon - 1] = r.handovers() as f64;
            }
            out.throughput.push(thr);
            out.objective.push(obj);
            out.handovers.push(ho);
        }
        out
    })
}

fn column(rows: &[[f64; 4]], horizon: usize) -> Vec<f64> {
    rows.iter().map(|r| r[horizon - 1]).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Paired one-sided t-test of `b > a`: (mean difference, t, p).
fn paired_t(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let diffs: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
    let n = diffs.len() as f64;
    let m = mean(&diffs);
    let sd = (diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = m / (sd / n.sqrt());
    let p = 1.0 - StudentsT::new(0.0, 1.0, n - 1.0).expect("n >= 2").cdf(t);
    (m, t, p)
}

/// The verdict uses the preset as shipped (two-fix position estimates);
/// the same test with true future positions is reported alongside.
fn c2_throughput() -> Outcome {
    let runs = trend_runs();
    let t1 = column(&runs.throughput, 1);
    let t3 = column(&runs.throughput, 3);
    let (m, t, p) = paired_t(&t1, &t3);

    let oracle: Vec<[f64; 2]> = (0..t1.len() as u64)
        .map(|seed| {
            [1, 3].map(|horizon| {
                let cfg = ScenarioConfig {
                    users: 15,
                    horizon,
                    duration_s: 900.0,
                    seed,
                    prediction: PredictionMode::OraclePositions,
                    ..ScenarioConfig::preset("room2ap").expect("shipped preset")
                };
                run(&cfg).expect("valid scenario").mean_throughput()
            })
        })
        .collect();
    let o1: Vec<f64> = oracle.iter().map(|r| r[0]).collect();
    let o3: Vec<f64> = oracle.iter().map(|r| r[1]).collect();
    let (om, ot, op) = paired_t(&o1, &o3);
    outcome(
        m > 0.0 && p < 0.05,
        format!(
            "two-fix prediction: mean throughput T1 {:.3}, T3 {:.3} Mbit/s over {} seeds, paired t = {t:.3}, one-sided p = {p:.4}; \
             true future positions: T1 {:.3}, T3 {:.3} Mbit/s, difference {:.4} Mbit/s, t = {ot:.3}, p = {op:.4}",
            mean(&t1) / 1e6,
            mean(&t3) / 1e6,
            t1.len(),
            mean(&o1) / 1e6,
            mean(&o3) / 1e6,
            om / 1e6,
        ),
    )
}

fn c3_saturation() -> Outcome {
    let runs = trend_runs();
    let o: Vec<f64> = (1..=4).map(|h| mean(&column(&runs.objective, h))).collect();
    let early = o[1] - o[0];
    let late = o[3] - o[2];
    outcome(
        late < 0.25 * early,
        format!(
            "mean total objective T1..T4: {:.1}, {:.1}, {:.1}, {:.1}; gain T1->2 {early:.2}, T3->4 {late:.2}",
            o[0], o[1], o[2], o[3]
        ),
    )
}

fn c4_handovers() -> Outcome {
    let runs = trend_runs();
    let h1 = mean(&column(&runs.handovers, 1));
    let h3 = mean(&column(&runs.handovers, 3));
    outcome(h3 >= h1, format!("mean total handovers T1 {h1:.1}, T3 {h3:.1}"))
}
