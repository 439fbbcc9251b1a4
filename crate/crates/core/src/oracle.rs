//! Exact solution of the look-ahead problem by enumerating every feasible
//! assignment over the horizon. Only usable on small instances; serves as
//! ground truth for the relaxation solver.

use ndarray::{Array2, Array3};

use crate::error::{invalid, Error, Result};
use crate::problem::{fairness, AllocationSolution, Diagnostics, ProblemInstance};

pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// One AP per user per slot: `plan[slot][user]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeasibleAssignment {
    pub plan: Vec<Vec<usize>>,
}

/// Number of feasible assignments, |A|^(|U|·T), saturating.
pub fn assignment_count(users: usize, aps: usize, horizon: usize) -> u128 {
    let exp = users.saturating_mul(horizon);
    u32::try_from(exp)
        .ok()
        .and_then(|e| (aps as u128).checked_pow(e))
        .unwrap_or(u128::MAX)
}

fn check_cap(users: usize, aps: usize, horizon: usize, cap: u64) -> Result<u128> {
    if users == 0 || aps == 0 || horizon == 0 {
        return Err(invalid("instance", "users, aps and horizon must be >= 1"));
    }
    let count = assignment_count(users, aps, horizon);
    if count > cap as u128 {
        return Err(Error::EnumerationCap { count, cap });
    }
    Ok(count)
}

/// Lexicographic odometer over `digits` base-`base` positions.
#[derive(Debug, Clone)]
struct Odometer {
    digits: Vec<usize>,
    base: usize,
    done: bool,
}

impl Odometer {
    fn new(len: usize, base: usize) -> Self {
        Self {
            digits: vec![0; len],
            base,
            done: false,
        }
    }

    fn advance(&mut self) {
        for d in self.digits.iter_mut().rev() {
            *d += 1;
            if *d < self.base {
                return;
            }
            *d = 0;
        }
        self.done = true;
    }
}

/// Streams every feasible assignment exactly once in lexicographic order
/// (slot-major, user-minor, last user varying fastest).
pub struct FeasibleAssignments {
    odometer: Odometer,
    users: usize,
}

impl Iterator for FeasibleAssignments {
    type Item = FeasibleAssignment;

    fn next(&mut self) -> Option<FeasibleAssignment> {
        if self.odometer.done {
            return None;
        }
        let plan = self.odometer.digits.chunks(self.users).map(<[usize]>::to_vec).collect();
        self.odometer.advance();
        Some(FeasibleAssignment { plan })
    }
}

pub fn enumerate_feasible(users: usize, aps: usize, horizon: usize, cap: u64) -> Result<FeasibleAssignments> {
    check_cap(users, aps, horizon, cap)?;
    Ok(FeasibleAssignments {
        odometer: Odometer::new(users * horizon, aps),
        users,
    })
}

fn check_plan(plan: &[Vec<usize>], inst: &ProblemInstance) -> Result<()> {
    if plan.len() != inst.horizon() || plan.iter().any(|s| s.len() != inst.users()) {
        return Err(Error::DimensionMismatch(format!(
            "plan must be {} slots x {} users",
            inst.horizon(),
            inst.users()
        )));
    }
    if plan.iter().flatten().any(|&a| a >= inst.aps()) {
        return Err(invalid("plan", "AP index out of range"));
    }
    Ok(())
}

/// Optimal shares for a fixed assignment: on each AP and slot, shares are
/// proportional to r̂^(1/β − 1) over the users it serves.
///
/// Groups containing a zero effective rate (β > 1) fall back to equal shares.
pub fn per_assignment_allocation(plan: &[Vec<usize>], inst: &ProblemInstance) -> Result<Array3<f64>> {
    check_plan(plan, inst)?;
    let rates = inst.plan_rates(plan);
    let exponent = 1.0 / inst.beta - 1.0;
    let (horizon, users, aps) = (inst.horizon(), inst.users(), inst.aps());
    let mut shares = Array3::zeros((horizon, users, aps));
    for (t, slot) in plan.iter().enumerate() {
        let mut weight_sum = vec![0.0; aps];
        let mut members = vec![0usize; aps];
        for (u, &a) in slot.iter().enumerate() {
            weight_sum[a] += rates[[t, u, a]].powf(exponent);
            members[a] += 1;
        }
        for (u, &a) in slot.iter().enumerate() {
            let w = rates[[t, u, a]].powf(exponent);
            shares[[t, u, a]] = if weight_sum[a].is_finite() && weight_sum[a] > 0.0 {
                w / weight_sum[a]
            } else {
                1.0 / members[a] as f64
            };
        }
    }
    Ok(shares)
}

/// Σ over slots and users of ψ_β(p · r̂) for the assigned pairs.
pub fn assignment_utility(plan: &[Vec<usize>], shares: &Array3<f64>, inst: &ProblemInstance) -> Result<f64> {
    check_plan(plan, inst)?;
    let rates = inst.plan_rates(plan);
    Ok(plan
        .iter()
        .enumerate()
        .flat_map(|(t, slot)| slot.iter().enumerate().map(move |(u, &a)| (t, u, a)))
        .map(|(t, u, a)| fairness(shares[[t, u, a]] * rates[[t, u, a]], inst.beta))
        .sum())
}

/// Optimal utility of a fixed assignment without materialising the shares:
/// with optimal shares each (slot, AP) group contributes S^β / (1 − β) where
/// S = Σ r̂^((1−β)/β) over its members.
fn optimal_plan_utility(digits: &[usize], inst: &ProblemInstance, sums: &mut Array2<f64>) -> f64 {
    let (users, beta) = (inst.users(), inst.beta);
    let exponent = (1.0 - beta) / beta;
    sums.fill(0.0);
    for (i, &a) in digits.iter().enumerate() {
        let (t, u) = (i / users, i % users);
        let prev = if t == 0 { inst.prev_assignment[u] } else { digits[i - users] };
        let eff = if prev == a { 1.0 } else { inst.eta0 };
        sums[[t, a]] += (eff * inst.rates.get(t, u, a)).powf(exponent);
    }
    sums.iter().filter(|&&s| s > 0.0).map(|&s| s.powf(beta) / (1.0 - beta)).sum()
}

/// Globally optimal assignment and shares; ties go to the
/// lexicographically smallest assignment.
pub fn exhaustive_solve(inst: &ProblemInstance, cap: u64) -> Result<AllocationSolution> {
    inst.validate()?;
    let (horizon, users, aps) = (inst.horizon(), inst.users(), inst.aps());
    let count = check_cap(users, aps, horizon, cap)?;

    let mut odometer = Odometer::new(users * horizon, aps);
    let mut sums = Array2::zeros((horizon, aps));
    let mut best: Option<(f64, Vec<usize>)> = None;
    while !odometer.done {
        let u = optimal_plan_utility(&odometer.digits, inst, &mut sums);
        match &best {
            Some((b, _)) if !(u > *b) => {}
            _ => best = Some((u, odometer.digits.clone())),
        }
        odometer.advance();
    }
    let (_, digits) = best.expect("at least one assignment");
    let plan: Vec<Vec<usize>> = digits.chunks(users).map(<[usize]>::to_vec).collect();
    let plan_shares = per_assignment_allocation(&plan, inst)?;

    let shares = plan_shares.index_axis(ndarray::Axis(0), 0).to_owned();
    let effective_rates = Array2::from_shape_fn((users, aps), |(u, a)| inst.first_slot_rate(u, a));
    Ok(AllocationSolution {
        assignment: plan[0].clone(),
        shares,
        effective_rates,
        plan,
        plan_shares,
        diagnostics: Diagnostics {
            converged: true,
            enumerated: count as u64,
            ..Diagnostics::default()
        },
    })
}
