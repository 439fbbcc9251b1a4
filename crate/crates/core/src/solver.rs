//! Relaxation solver for the look-ahead problem: closed-form primal updates
//! of the relaxed problem, projected dual gradient ascent, then recovery of
//! a binary first-slot assignment and normalized shares.
//!
//! Internally rates are divided by `ProblemInstance::rate_unit`; the primal
//! rate variables in [`RelaxedPrimal`] are in those internal units.

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::problem::{AllocationSolution, Diagnostics, ProblemInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    #[default]
    Constant,
    /// ε(n) = ε₀/√n
    InvSqrt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// ε₀, the step of the λ and ζ updates.
    pub step_size: f64,
    pub schedule: StepSchedule,
    /// ε_λ / ε_γ.
    pub gamma_step_ratio: f64,
    /// Stop once no multiplier moves by more than this in one iteration.
    pub tolerance: f64,
    pub p_floor: f64,
    pub lambda_floor: f64,
    pub x_floor: f64,
    pub gamma_floor: f64,
    /// Start from the previous call's multipliers, shifted one slot.
    pub warm_start: bool,
    /// Record the relaxed objective every this many iterations (0 = never).
    pub trace_stride: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            step_size: 0.05,
            schedule: StepSchedule::Constant,
            gamma_step_ratio: 100.0,
            tolerance: 1e-5,
            p_floor: 1e-6,
            lambda_floor: 1e-9,
            x_floor: 1e-12,
            gamma_floor: 1e-12,
            warm_start: true,
            trace_stride: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(invalid("solver.max_iterations", "must be >= 1"));
        }
        let positive = [
            ("solver.step_size", self.step_size),
            ("solver.gamma_step_ratio", self.gamma_step_ratio),
            ("solver.tolerance", self.tolerance),
            ("solver.p_floor", self.p_floor),
            ("solver.lambda_floor", self.lambda_floor),
            ("solver.x_floor", self.x_floor),
            ("solver.gamma_floor", self.gamma_floor),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be > 0, got {v}")));
            }
        }
        if self.p_floor >= 1.0 {
            return Err(invalid("solver.p_floor", "must be < 1"));
        }
        Ok(())
    }

    pub fn step(&self, n: usize) -> f64 {
        match self.schedule {
            StepSchedule::Constant => self.step_size,
            StepSchedule::InvSqrt => self.step_size / (n.max(1) as f64).sqrt(),
        }
    }
}

/// Dual variables. `gamma[[k, u, a]]` belongs to slot `k + 1`; the first
/// slot's rate is fixed and has no multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSet {
    /// `[slot][ap]`, resource constraints.
    pub lambda: Array2<f64>,
    /// `[slot][user]`, one-AP-per-user constraints.
    pub zeta: Array2<f64>,
    /// `[slot − 1][user][ap]`, rate-definition constraints.
    pub gamma: Array3<f64>,
}

impl MultiplierSet {
    /// λ = 1, ζ = 0, γ = (β−1)/R̄^β with R̄ the mean internal rate.
    pub fn initial(inst: &ProblemInstance) -> Self {
        let (t, u, a) = (inst.horizon(), inst.users(), inst.aps());
        let mean = inst.rates.mean() / inst.rate_unit;
        let mean = if mean > 0.0 { mean } else { 1.0 };
        Self {
            lambda: Array2::ones((t, a)),
            zeta: Array2::zeros((t, u)),
            gamma: Array3::from_elem((t - 1, u, a), (inst.beta - 1.0) / mean.powf(inst.beta)),
        }
    }

    pub fn fits(&self, inst: &ProblemInstance) -> bool {
        let (t, u, a) = (inst.horizon(), inst.users(), inst.aps());
        self.lambda.dim() == (t, a) && self.zeta.dim() == (t, u) && self.gamma.dim() == (t - 1, u, a)
    }

    /// Multipliers for the next service time: every slot moves one step
    /// earlier and the last slot is repeated.
    pub fn shifted(&self) -> Self {
        fn shift2(m: &Array2<f64>) -> Array2<f64> {
            let mut out = m.clone();
            let n = m.nrows();
            if n > 1 {
                out.slice_mut(s![..n - 1, ..]).assign(&m.slice(s![1.., ..]));
            }
            out
        }
        let mut gamma = self.gamma.clone();
        let n = gamma.len_of(Axis(0));
        if n > 1 {
            gamma.slice_mut(s![..n - 1, .., ..]).assign(&self.gamma.slice(s![1.., .., ..]));
        }
        Self {
            lambda: shift2(&self.lambda),
            zeta: shift2(&self.zeta),
            gamma,
        }
    }
}

/// Relaxed primal iterate, all `[slot][user][ap]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedPrimal {
    pub x: Array3<f64>,
    pub p: Array3<f64>,
    /// Rates in internal units; slot 0 is fixed by the previous assignment.
    pub r: Array3<f64>,
}

/// Σ x^(2β−1) / (r·p)^(β−1); terms with x ≤ 1e-12 contribute nothing.
pub fn relaxed_objective(primal: &RelaxedPrimal, beta: f64) -> f64 {
    relaxed_objective_floored(primal, beta, SolverConfig::default().x_floor)
}

fn relaxed_objective_floored(primal: &RelaxedPrimal, beta: f64, x_floor: f64) -> f64 {
    primal
        .x
        .iter()
        .zip(primal.p.iter())
        .zip(primal.r.iter())
        .filter(|((&x, _), _)| x > x_floor)
        .map(|((&x, &p), &r)| pow(x, 2.0 * beta - 1.0) / pow(r * p, beta - 1.0))
        .sum()
}

/// `powf` with the exponents that occur for β = 2 done exactly and cheaply.
#[inline]
fn pow(v: f64, e: f64) -> f64 {
    if e == 1.0 {
        v
    } else if e == 0.5 {
        v.sqrt()
    } else if e == 2.0 {
        v * v
    } else if e == 3.0 {
        v * v * v
    } else {
        v.powf(e)
    }
}

/// Exponents and constants of the closed forms, fixed by β.
struct Shape {
    beta: f64,
    /// (β−1)/(3β−2)
    p_coeff: f64,
    /// 2β−1
    x_order: f64,
    /// 1/(2β−2)
    x_root: f64,
    /// (2β−1)/(β−1)
    k_power: f64,
}

impl Shape {
    fn new(beta: f64) -> Self {
        Self {
            beta,
            p_coeff: (beta - 1.0) / (3.0 * beta - 2.0),
            x_order: 2.0 * beta - 1.0,
            x_root: 1.0 / (2.0 * beta - 2.0),
            k_power: (2.0 * beta - 1.0) / (beta - 1.0),
        }
    }

    /// x from ∂L/∂x = 0 at fixed r, p: x^(2β−2) = K (r p)^(β−1).
    fn x_given(&self, k: f64, rp: f64) -> f64 {
        pow(k * pow(rp, self.beta - 1.0), self.x_root)
    }
}

fn check_solver_instance(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<()> {
    inst.validate()?;
    cfg.validate()?;
    if inst.beta <= 1.0 {
        return Err(invalid("beta", format!("the relaxation solver needs beta > 1, got {}", inst.beta)));
    }
    Ok(())
}

/// Closed-form minimiser of the Lagrangian for fixed multipliers.
///
/// p from ∂L/∂p = 0. x from ∂L/∂x = 0 given the (possibly clamped) p, and
/// for later slots r jointly with x from ∂L/∂r = 0. When p is not clamped
/// these coincide with x = (r^(β−1) p^β λ/(β−1))^(1/(2β−2)) and
/// r = λ^((2β−1)/(β−1)) p^((3β−2)/(β−1)) / ((β−1)^(1/(β−1)) γ²).
/// r is kept within [0, R] since no assignment can do better.
///
/// Fails with [`Error::Degenerate`] when at some slot an AP has a negative
/// share numerator for every user.
pub fn primal_update(inst: &ProblemInstance, mult: &MultiplierSet, cfg: &SolverConfig) -> Result<RelaxedPrimal> {
    check_solver_instance(inst, cfg)?;
    if !mult.fits(inst) {
        return Err(Error::DimensionMismatch("multipliers do not match the instance".into()));
    }
    let ws = Workspace::new(inst);
    let mut primal = ws.empty_primal();
    if let Some((slot, ap)) = ws.primal_update(mult, cfg, &mut primal) {
        return Err(Error::Degenerate { slot, ap });
    }
    Ok(primal)
}

/// One projected ascent step with step ε(n).
pub fn dual_step(
    inst: &ProblemInstance,
    primal: &RelaxedPrimal,
    mult: &MultiplierSet,
    n: usize,
    cfg: &SolverConfig,
) -> MultiplierSet {
    let ws = Workspace::new(inst);
    let mut next = mult.clone();
    ws.dual_step(primal, &mut next, cfg.step(n), cfg);
    next
}

/// Argmax per user, lowest index on ties; a row without any positive finite
/// entry keeps the user's `fallback` AP.
pub fn recover_assignment(x: ArrayView2<f64>, fallback: &[usize]) -> Vec<usize> {
    x.outer_iter()
        .enumerate()
        .map(|(u, row)| {
            let mut best: Option<(usize, f64)> = None;
            for (a, &v) in row.iter().enumerate() {
                if v.is_finite() && v > 0.0 && best.is_none_or(|(_, b)| v > b) {
                    best = Some((a, v));
                }
            }
            best.map_or(fallback[u], |(a, _)| a)
        })
        .collect()
}

/// Rescales shares so each occupied AP hands out all of its resource; pairs
/// off the assignment get 0. A group whose shares sum to zero is split equally.
pub fn normalize_allocation(p: ArrayView2<f64>, assignment: &[usize]) -> Array2<f64> {
    let aps = p.ncols();
    let mut sum = vec![0.0; aps];
    let mut members = vec![0usize; aps];
    for (u, &a) in assignment.iter().enumerate() {
        sum[a] += p[[u, a]].max(0.0);
        members[a] += 1;
    }
    let mut out = Array2::zeros(p.dim());
    for (u, &a) in assignment.iter().enumerate() {
        out[[u, a]] = if sum[a] > 0.0 {
            p[[u, a]].max(0.0) / sum[a]
        } else {
            1.0 / members[a] as f64
        };
    }
    out
}

/// Cold-started solve.
pub fn solve(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<AllocationSolution> {
    MvrSolver::new(SolverConfig {
        warm_start: false,
        ..cfg.clone()
    })
    .solve(inst)
}

/// Solver holding its multipliers between calls so consecutive service
/// times can warm-start.
#[derive(Debug, Clone)]
pub struct MvrSolver {
    pub config: SolverConfig,
    multipliers: Option<MultiplierSet>,
}

impl MvrSolver {
    pub fn new(config: SolverConfig) -> Self {
        Self {
            config,
            multipliers: None,
        }
    }

    pub fn multipliers(&self) -> Option<&MultiplierSet> {
        self.multipliers.as_ref()
    }

    pub fn reset(&mut self) {
        self.multipliers = None;
    }

    pub fn solve(&mut self, inst: &ProblemInstance) -> Result<AllocationSolution> {
        let cfg = &self.config;
        check_solver_instance(inst, cfg)?;
        let ws = Workspace::new(inst);
        let mut mult = match self.multipliers.take() {
            Some(m) if cfg.warm_start && m.fits(inst) => m.shifted(),
            _ => MultiplierSet::initial(inst),
        };
        let mut primal = ws.empty_primal();
        let mut diag = Diagnostics::default();

        for n in 1..=cfg.max_iterations {
            ws.primal_update(&mult, cfg, &mut primal);
            if cfg.trace_stride > 0 && (n - 1) % cfg.trace_stride == 0 {
                diag.objective_trace
                    .push((n, relaxed_objective_floored(&primal, inst.beta, cfg.x_floor)));
            }
            let change = ws.dual_step(&primal, &mut mult, cfg.step(n), cfg);
            diag.iterations = n;
            diag.final_change = change;
            if change < cfg.tolerance {
                diag.converged = true;
                break;
            }
        }
        ws.primal_update(&mult, cfg, &mut primal);
        diag.max_residual = ws.max_residual(&primal);

        if let Some((t, _, a)) = primal
            .x
            .indexed_iter()
            .chain(primal.p.indexed_iter())
            .find(|(_, v)| !v.is_finite())
            .map(|(i, _)| i)
        {
            self.multipliers = None;
            return Err(Error::Degenerate { slot: t, ap: a });
        }

        let mut plan = Vec::with_capacity(ws.t);
        let mut plan_shares = Array3::zeros((ws.t, ws.u, ws.a));
        for t in 0..ws.t {
            let fallback = if t == 0 { &inst.prev_assignment } else { &plan[t - 1] };
            let assign = recover_assignment(primal.x.index_axis(Axis(0), t), fallback);
            let shares = normalize_allocation(primal.p.index_axis(Axis(0), t), &assign);
            plan_shares.index_axis_mut(Axis(0), t).assign(&shares);
            plan.push(assign);
        }
        let effective_rates = Array2::from_shape_fn((ws.u, ws.a), |(u, a)| inst.first_slot_rate(u, a));
        self.multipliers = Some(mult);
        Ok(AllocationSolution {
            assignment: plan[0].clone(),
            shares: plan_shares.index_axis(Axis(0), 0).to_owned(),
            effective_rates,
            plan,
            plan_shares,
            diagnostics: diag,
        })
    }
}

/// Flat views of one instance in internal units.
struct Workspace<'a> {
    inst: &'a ProblemInstance,
    shape: Shape,
    t: usize,
    u: usize,
    a: usize,
    /// R / rate_unit, `[slot][user][ap]` flattened.
    rates: Vec<f64>,
}

impl<'a> Workspace<'a> {
    fn new(inst: &'a ProblemInstance) -> Self {
        let rates = inst.rates.as_array().iter().map(|r| r / inst.rate_unit).collect();
        Self {
            inst,
            shape: Shape::new(inst.beta),
            t: inst.horizon(),
            u: inst.users(),
            a: inst.aps(),
            rates,
        }
    }

    fn idx(&self, t: usize, u: usize, a: usize) -> usize {
        (t * self.u + u) * self.a + a
    }

    fn empty_primal(&self) -> RelaxedPrimal {
        let dim = (self.t, self.u, self.a);
        let mut r = Array3::zeros(dim);
        for u in 0..self.u {
            for a in 0..self.a {
                r[[0, u, a]] = self.inst.first_slot_rate(u, a) / self.inst.rate_unit;
            }
        }
        RelaxedPrimal {
            x: Array3::zeros(dim),
            p: Array3::zeros(dim),
            r,
        }
    }

    /// Writes the closed-form minimiser into `out`; returns the first
    /// (slot, ap) whose share numerators are all negative, if any.
    fn primal_update(&self, mult: &MultiplierSet, cfg: &SolverConfig, out: &mut RelaxedPrimal) -> Option<(usize, usize)> {
        let sh = &self.shape;
        let eta0 = self.inst.eta0;
        let beta = sh.beta;
        let lambda = mult.lambda.as_slice().expect("standard layout");
        let zeta = mult.zeta.as_slice().expect("standard layout");
        let gamma = mult.gamma.as_slice().expect("standard layout");
        let x = out.x.as_slice_mut().expect("standard layout");
        let p = out.p.as_slice_mut().expect("standard layout");
        let r = out.r.as_slice_mut().expect("standard layout");
        let mut degenerate = None;
        let mut any_positive = vec![false; self.a];

        for t in 0..self.t {
            any_positive.iter_mut().for_each(|v| *v = false);
            for u in 0..self.u {
                let z = zeta[t * self.u + u];
                for a in 0..self.a {
                    let i = self.idx(t, u, a);
                    let lam = lambda[t * self.a + a].max(cfg.lambda_floor);
                    let future = if t + 1 < self.t {
                        gamma[i] // slot t + 1 sits at γ row t
                            * (1.0 - eta0)
                            * self.rates[self.idx(t + 1, u, a)]
                    } else {
                        0.0
                    };
                    let num = future - z;
                    if num >= 0.0 {
                        any_positive[a] = true;
                    }
                    let pi = (sh.p_coeff * num / lam).clamp(cfg.p_floor, 1.0);
                    let k = (num - lam * pi) / sh.x_order;
                    p[i] = pi;
                    if k <= 0.0 {
                        x[i] = 0.0;
                        if t > 0 {
                            r[i] = 0.0;
                        }
                        continue;
                    }
                    if t == 0 {
                        x[i] = sh.x_given(k, r[i] * pi).min(1.0);
                        continue;
                    }
                    let g = gamma[i - self.u * self.a].max(cfg.gamma_floor);
                    let cap = self.rates[i];
                    let mut ri = pow((beta - 1.0) / g, 2.0) * pow(k, sh.k_power) * pi;
                    let mut xi = sh.x_given(k, ri * pi);
                    if xi > 1.0 {
                        xi = 1.0;
                        ri = pow((beta - 1.0) / (g * pow(pi, beta - 1.0)), 1.0 / beta);
                    }
                    if ri > cap {
                        ri = cap;
                        xi = sh.x_given(k, ri * pi).min(1.0);
                    }
                    r[i] = ri;
                    x[i] = xi;
                }
            }
            if degenerate.is_none() {
                if let Some(a) = any_positive.iter().position(|&v| !v) {
                    degenerate = Some((t, a));
                }
            }
        }
        degenerate
    }

    /// Applies the projected ascent step in place; returns the largest
    /// multiplier change.
    fn dual_step(&self, primal: &RelaxedPrimal, mult: &mut MultiplierSet, eps: f64, cfg: &SolverConfig) -> f64 {
        let eta0 = self.inst.eta0;
        let eps_gamma = eps / cfg.gamma_step_ratio;
        let x = primal.x.as_slice().expect("standard layout");
        let p = primal.p.as_slice().expect("standard layout");
        let r = primal.r.as_slice().expect("standard layout");
        let lambda = mult.lambda.as_slice_mut().expect("standard layout");
        let zeta = mult.zeta.as_slice_mut().expect("standard layout");
        let gamma = mult.gamma.as_slice_mut().expect("standard layout");
        let mut change: f64 = 0.0;

        for t in 0..self.t {
            for a in 0..self.a {
                let load: f64 = (0..self.u).map(|u| {
                    let i = self.idx(t, u, a);
                    x[i] * p[i]
                }).sum();
                let l = &mut lambda[t * self.a + a];
                let next = (*l + eps * (load - 1.0)).max(0.0);
                change = change.max((next - *l).abs());
                *l = next;
            }
            for u in 0..self.u {
                let i0 = self.idx(t, u, 0);
                let total: f64 = x[i0..i0 + self.a].iter().sum();
                let z = &mut zeta[t * self.u + u];
                let step = eps * (total - 1.0);
                change = change.max(step.abs());
                *z += step;
            }
            if t == 0 {
                continue;
            }
            for u in 0..self.u {
                for a in 0..self.a {
                    let i = self.idx(t, u, a);
                    let prev = x[self.idx(t - 1, u, a)];
                    let target = ((1.0 - eta0) * prev + eta0) * self.rates[i];
                    let g = &mut gamma[i - self.u * self.a];
                    let next = (*g + eps_gamma * (r[i] - target)).max(cfg.gamma_floor);
                    change = change.max((next - *g).abs());
                    *g = next;
                }
            }
        }
        change
    }

    /// Largest violation of the relaxed constraints.
    fn max_residual(&self, primal: &RelaxedPrimal) -> f64 {
        let eta0 = self.inst.eta0;
        let mut worst: f64 = 0.0;
        for t in 0..self.t {
            for a in 0..self.a {
                let load: f64 = (0..self.u).map(|u| primal.x[[t, u, a]] * primal.p[[t, u, a]]).sum();
                worst = worst.max(load - 1.0);
            }
            for u in 0..self.u {
                let total: f64 = (0..self.a).map(|a| primal.x[[t, u, a]]).sum();
                worst = worst.max((total - 1.0).abs());
                if t == 0 {
                    continue;
                }
                for a in 0..self.a {
                    let i = self.idx(t, u, a);
                    let target = ((1.0 - eta0) * primal.x[[t - 1, u, a]] + eta0) * self.rates[i];
                    worst = worst.max((primal.r[[t, u, a]] - target).abs() / target.max(1.0));
                }
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::RateTensor;
    use ndarray::array;
    use proptest::prelude::*;

    fn instance(t: usize, u: usize, a: usize, rate: impl Fn(usize, usize, usize) -> f64, prev: Vec<usize>) -> ProblemInstance {
        let rates = RateTensor::from_fn(t, u, a, |(t, u, a)| rate(t, u, a)).unwrap();
        ProblemInstance::new(rates, prev, 0.75, 2.0).unwrap()
    }

    fn single(x: f64, p: f64, r: f64) -> RelaxedPrimal {
        RelaxedPrimal {
            x: Array3::from_elem((1, 1, 1), x),
            p: Array3::from_elem((1, 1, 1), p),
            r: Array3::from_elem((1, 1, 1), r),
        }
    }

    #[test]
    fn objective_examples() {
        assert_eq!(relaxed_objective(&single(0.0, 0.3, 2.0), 2.0), 0.0);
        assert_eq!(relaxed_objective(&single(1.0, 1.0, 2.0), 2.0), 0.5);
        // binary x: |ψ₂(r·p)| = 1/(r·p)
        let rp: f64 = 0.4 * 3.0;
        assert!((relaxed_objective(&single(1.0, 0.4, 3.0), 2.0) - 1.0 / rp).abs() < 1e-15);
    }

    #[test]
    fn share_closed_form() {
        let inst = instance(1, 1, 1, |_, _, _| 1.0, vec![0]);
        let mut mult = MultiplierSet::initial(&inst);
        mult.zeta[[0, 0]] = -1.0;
        let primal = primal_update(&inst, &mult, &SolverConfig::default()).unwrap();
        assert_eq!(primal.p[[0, 0, 0]], 0.25);
    }

    #[test]
    fn unit_assignment_closed_form() {
        // ζ = −4 puts p* at exactly 1 with λ = 1, and r = 1 from the fixed first slot
        let inst = instance(1, 1, 1, |_, _, _| 1.0, vec![0]);
        let mut mult = MultiplierSet::initial(&inst);
        mult.zeta[[0, 0]] = -4.0;
        let primal = primal_update(&inst, &mult, &SolverConfig::default()).unwrap();
        assert_eq!(primal.p[[0, 0, 0]], 1.0);
        assert_eq!(primal.r[[0, 0, 0]], 1.0);
        assert!((primal.x[[0, 0, 0]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn all_negative_numerators_are_degenerate() {
        let inst = instance(1, 2, 2, |_, _, _| 1.0, vec![0, 0]);
        let mut mult = MultiplierSet::initial(&inst);
        mult.zeta.fill(1.0);
        assert!(matches!(
            primal_update(&inst, &mult, &SolverConfig::default()),
            Err(Error::Degenerate { slot: 0, ap: 0 })
        ));
    }

    #[test]
    fn dual_step_examples() {
        let inst = instance(1, 2, 1, |_, _, _| 1.0, vec![0, 0]);
        let cfg = SolverConfig {
            step_size: 0.1,
            ..SolverConfig::default()
        };
        let primal = RelaxedPrimal {
            x: Array3::ones((1, 2, 1)),
            p: Array3::from_elem((1, 2, 1), 0.75),
            r: Array3::ones((1, 2, 1)),
        };
        let mut mult = MultiplierSet::initial(&inst);
        mult.lambda[[0, 0]] = 0.2;
        let next = dual_step(&inst, &primal, &mult, 1, &cfg);
        assert!((next.lambda[[0, 0]] - 0.25).abs() < 1e-15);
        assert_eq!(next.zeta, mult.zeta);

        let idle = RelaxedPrimal {
            p: Array3::from_elem((1, 2, 1), 0.0),
            ..primal.clone()
        };
        mult.lambda[[0, 0]] = 0.05;
        assert_eq!(dual_step(&inst, &idle, &mult, 1, &cfg).lambda[[0, 0]], 0.0);

        let exact = RelaxedPrimal {
            p: Array3::from_elem((1, 2, 1), 0.5),
            ..primal
        };
        assert_eq!(dual_step(&inst, &exact, &mult, 1, &cfg), mult);
    }

    #[test]
    fn dual_step_rate_multiplier() {
        let inst = instance(2, 1, 1, |_, _, _| 2.0, vec![0]);
        let cfg = SolverConfig {
            step_size: 1.0,
            gamma_step_ratio: 100.0,
            ..SolverConfig::default()
        };
        let mut primal = RelaxedPrimal {
            x: Array3::ones((2, 1, 1)),
            p: Array3::ones((2, 1, 1)),
            r: Array3::from_elem((2, 1, 1), 2.0),
        };
        let mult = MultiplierSet::initial(&inst);
        // r equals (x(1−η0) + η0)·R, so γ stays put
        assert_eq!(dual_step(&inst, &primal, &mult, 1, &cfg).gamma, mult.gamma);
        primal.r[[1, 0, 0]] = 3.0;
        let next = dual_step(&inst, &primal, &mult, 1, &cfg);
        assert!((next.gamma[[0, 0, 0]] - (mult.gamma[[0, 0, 0]] + 0.01)).abs() < 1e-15);
    }

    #[test]
    fn recovery_examples() {
        assert_eq!(recover_assignment(array![[0.2, 0.7, 0.1]].view(), &[0]), vec![1]);
        assert_eq!(recover_assignment(array![[0.5, 0.5]].view(), &[1]), vec![0]);
        assert_eq!(recover_assignment(array![[0.0, 1.0], [1.0, 0.0]].view(), &[0, 0]), vec![1, 0]);
        assert_eq!(recover_assignment(array![[0.0, 0.0]].view(), &[1]), vec![1]);
        assert_eq!(recover_assignment(array![[f64::NAN, 0.0]].view(), &[1]), vec![1]);
    }

    #[test]
    fn normalization_examples() {
        let n = normalize_allocation(array![[0.3], [0.2]].view(), &[0, 0]);
        assert!((n[[0, 0]] - 0.6).abs() < 1e-15 && (n[[1, 0]] - 0.4).abs() < 1e-15);
        let n = normalize_allocation(array![[0.3, 0.9]].view(), &[0]);
        assert_eq!(n, array![[1.0, 0.0]]);
        let n = normalize_allocation(array![[0.0], [0.0]].view(), &[0, 0]);
        assert_eq!(n, array![[0.5], [0.5]]);
    }

    #[test]
    fn single_user_single_ap() {
        for beta in [1.5, 2.0, 3.0] {
            let rates = RateTensor::from_fn(2, 1, 1, |_| 5.0).unwrap();
            let inst = ProblemInstance::new(rates, vec![0], 0.75, beta).unwrap();
            let sol = solve(&inst, &SolverConfig::default()).unwrap();
            assert_eq!(sol.assignment, vec![0]);
            assert_eq!(sol.shares[[0, 0]], 1.0);
        }
    }

    #[test]
    fn equal_users_split_evenly() {
        let inst = instance(1, 2, 1, |_, _, _| 1.0, vec![0, 0]);
        let sol = solve(&inst, &SolverConfig::default()).unwrap();
        assert!((sol.shares[[0, 0]] - 0.5).abs() < 1e-12);
        assert!((sol.shares[[1, 0]] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn relaxed_optimum_of_two_users() {
        // One AP, rates 1 and 4: the β = 2 relaxed optimum has x = 1 and
        // p ∝ r^(−1/2), i.e. (2/3, 1/3).
        let inst = instance(1, 2, 1, |_, u, _| if u == 0 { 1.0 } else { 4.0 }, vec![0, 0]);
        let cfg = SolverConfig {
            max_iterations: 20_000,
            tolerance: 1e-12,
            ..SolverConfig::default()
        };
        let sol = solve(&inst, &cfg).unwrap();
        assert!((sol.shares[[0, 0]] - 2.0 / 3.0).abs() < 1e-4, "{}", sol.shares);
    }

    #[test]
    fn mobility_unaware_case_ignores_rate_multipliers() {
        let inst = instance(1, 3, 2, |_, u, a| 1.0 + (u * 2 + a) as f64, vec![0, 1, 0]);
        assert_eq!(MultiplierSet::initial(&inst).gamma.len(), 0);
        let base = solve(&inst, &SolverConfig::default()).unwrap();
        let other = solve(
            &inst,
            &SolverConfig {
                gamma_step_ratio: 3.0,
                gamma_floor: 0.5,
                ..SolverConfig::default()
            },
        )
        .unwrap();
        assert_eq!(base.assignment, other.assignment);
        assert_eq!(base.shares, other.shares);
    }

    #[test]
    fn warm_start_shifts_slots() {
        let inst = instance(3, 1, 2, |t, _, a| 1.0 + (t + a) as f64, vec![0]);
        let mut mult = MultiplierSet::initial(&inst);
        mult.lambda[[1, 0]] = 7.0;
        mult.gamma[[1, 0, 1]] = 3.0;
        let s = mult.shifted();
        assert_eq!(s.lambda[[0, 0]], 7.0);
        assert_eq!(s.gamma[[0, 0, 1]], 3.0);
        assert_eq!(s.gamma[[1, 0, 1]], 3.0);
        assert!(s.fits(&inst));
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        assert!(SolverConfig { max_iterations: 0, ..SolverConfig::default() }.validate().is_err());
        assert!(SolverConfig { step_size: -1.0, ..SolverConfig::default() }.validate().is_err());
        assert!(SolverConfig { p_floor: 1.0, ..SolverConfig::default() }.validate().is_err());
        let cfg = SolverConfig { schedule: StepSchedule::InvSqrt, step_size: 0.4, ..SolverConfig::default() };
        assert!((cfg.step(4) - 0.2).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn recovered_solution_is_feasible(
            rates in proptest::collection::vec(0.05f64..5.0, 2 * 4 * 3),
            prev in proptest::collection::vec(0usize..3, 4),
        ) {
            let inst = instance(2, 4, 3, |t, u, a| rates[(t * 4 + u) * 3 + a], prev);
            let cfg = SolverConfig { max_iterations: 200, ..SolverConfig::default() };
            let Ok(sol) = solve(&inst, &cfg) else { return Ok(()) };
            let x = sol.indicator();
            for row in x.outer_iter() {
                prop_assert_eq!(row.iter().map(|&v| v as u32).sum::<u32>(), 1);
            }
            for a in 0..3 {
                let occupied = sol.assignment.contains(&a);
                let load: f64 = (0..4).map(|u| x[[u, a]] as f64 * sol.shares[[u, a]]).sum();
                if occupied {
                    prop_assert!((load - 1.0).abs() <= 1e-12);
                } else {
                    prop_assert_eq!(load, 0.0);
                }
            }
            for (u, &a) in sol.assignment.iter().enumerate() {
                prop_assert!(sol.shares[[u, a]] > 0.0 && sol.shares[[u, a]] <= 1.0);
            }
        }

        #[test]
        fn closed_forms_satisfy_the_rate_identity(seed in 0u64..1000) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (inst, mult) = crate::verify::random_kkt_case(&mut rng);
            let cfg = SolverConfig::default();
            let primal = primal_update(&inst, &mult, &cfg).unwrap();
            for ((t, u, a), &x) in primal.x.indexed_iter() {
                let p = primal.p[[t, u, a]];
                let r = primal.r[[t, u, a]];
                let cap = inst.rates.get(t, u, a) / inst.rate_unit;
                if t == 0 || x <= 0.0 || x >= 1.0 || p <= cfg.p_floor || p >= 1.0 || r >= cap {
                    continue;
                }
                let lhs = mult.lambda[[t, a]] * x * p;
                let rhs = mult.gamma[[t - 1, u, a]] * r;
                prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()));
            }
        }
    }
}
