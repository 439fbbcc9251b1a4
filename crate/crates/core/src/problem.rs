//! The T-step look-ahead allocation problem and the solution record shared
//! by the relaxation solver and the exhaustive oracle.

use ndarray::{Array2, Array3};

use crate::channel::{handover_efficiency, RateTensor};
use crate::error::{invalid, Error, Result};

/// β-proportional fairness utility ψ_β(r) = r^(1−β)/(1−β), β ≠ 1.
pub fn fairness(rate: f64, beta: f64) -> f64 {
    rate.powf(1.0 - beta) / (1.0 - beta)
}

/// One allocation round: predicted rates for the horizon, the assignment in
/// force during the previous service time, and the fairness parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub rates: RateTensor,
    /// AP serving each user during the previous service time.
    pub prev_assignment: Vec<usize>,
    pub eta0: f64,
    pub beta: f64,
    /// Unit the rates are expressed in relative to the solver's internal
    /// scale (e.g. the bandwidth in Hz when `rates` are in bit/s).
    pub rate_unit: f64,
}

impl ProblemInstance {
    pub fn new(rates: RateTensor, prev_assignment: Vec<usize>, eta0: f64, beta: f64) -> Result<Self> {
        let inst = Self {
            rates,
            prev_assignment,
            eta0,
            beta,
            rate_unit: 1.0,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn with_rate_unit(mut self, unit: f64) -> Result<Self> {
        if !(unit.is_finite() && unit > 0.0) {
            return Err(invalid("rate_unit", format!("must be > 0, got {unit}")));
        }
        self.rate_unit = unit;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.prev_assignment.len() != self.users() {
            return Err(Error::DimensionMismatch(format!(
                "{} previous assignments for {} users",
                self.prev_assignment.len(),
                self.users()
            )));
        }
        if let Some(&a) = self.prev_assignment.iter().find(|&&a| a >= self.aps()) {
            return Err(invalid("prev_assignment", format!("AP index {a} out of range")));
        }
        if !(self.eta0 > 0.0 && self.eta0 <= 1.0) {
            return Err(invalid("eta0", format!("must lie in (0, 1], got {}", self.eta0)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) || self.beta == 1.0 {
            return Err(invalid("beta", format!("must be > 0 and != 1, got {}", self.beta)));
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.rates.horizon()
    }

    pub fn users(&self) -> usize {
        self.rates.users()
    }

    pub fn aps(&self) -> usize {
        self.rates.aps()
    }

    /// Previous assignment as a 0/1 indicator.
    pub fn prev_indicator(&self, user: usize, ap: usize) -> f64 {
        if self.prev_assignment[user] == ap {
            1.0
        } else {
            0.0
        }
    }

    /// Effective rate of the first slot, fixed by the previous assignment.
    pub fn first_slot_rate(&self, user: usize, ap: usize) -> f64 {
        handover_efficiency(self.prev_indicator(user, ap), self.eta0) * self.rates.get(0, user, ap)
    }

    /// Effective rates `[slot][user][ap]` of a complete binary plan.
    pub fn plan_rates(&self, plan: &[Vec<usize>]) -> Array3<f64> {
        Array3::from_shape_fn((self.horizon(), self.users(), self.aps()), |(t, u, a)| {
            let prev = if t == 0 { self.prev_assignment[u] } else { plan[t - 1][u] };
            let stayed = if prev == a { 1.0 } else { 0.0 };
            handover_efficiency(stayed, self.eta0) * self.rates.get(t, u, a)
        })
    }
}

/// Iteration diagnostics; fields that do not apply to a solver are left at
/// their defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// Largest constraint violation of the final relaxed iterate.
    pub max_residual: f64,
    /// Largest multiplier change in the final iteration.
    pub final_change: f64,
    /// `(iteration, relaxed objective)` samples.
    pub objective_trace: Vec<(usize, f64)>,
    pub enumerated: u64,
}

/// A committed decision for the forthcoming service time, plus the plan the
/// solver formed for the rest of the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationSolution {
    /// AP serving each user during the forthcoming service time.
    pub assignment: Vec<usize>,
    /// Resource shares `[user][ap]`; zero off the assigned AP.
    pub shares: Array2<f64>,
    /// Effective first-slot rates `[user][ap]` in the instance's units.
    pub effective_rates: Array2<f64>,
    /// Binary plan `[slot][user]` over the horizon (slot 0 == `assignment`).
    pub plan: Vec<Vec<usize>>,
    /// Shares `[slot][user][ap]` matching `plan`.
    pub plan_shares: Array3<f64>,
    pub diagnostics: Diagnostics,
}

impl AllocationSolution {
    /// Rate each user receives in the first slot: share × effective rate.
    pub fn user_rates(&self) -> Vec<f64> {
        self.assignment
            .iter()
            .enumerate()
            .map(|(u, &a)| self.shares[[u, a]] * self.effective_rates[[u, a]])
            .collect()
    }

    /// Binary indicator matrix `[user][ap]` of the first-slot assignment.
    pub fn indicator(&self) -> Array2<u8> {
        let mut x = Array2::zeros(self.shares.dim());
        for (u, &a) in self.assignment.iter().enumerate() {
            x[[u, a]] = 1;
        }
        x
    }
}
