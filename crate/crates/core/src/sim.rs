//! Service-time loop: move users, predict, build rates, solve, then charge
//! the committed decision against the users' true positions.

use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{handover_efficiency, rate_tensor, ApLayout, InterferencePolicy, PhyParams, RateTensor};
use crate::error::{invalid, Error, Result};
use crate::geometry::Point;
use crate::mobility::{motion_rng, predict, rwp_init, rwp_step, MobilityParams, Room, UserState};
use crate::oracle::{assignment_utility, exhaustive_solve, DEFAULT_ENUMERATION_CAP};
use crate::problem::{fairness, AllocationSolution, ProblemInstance};
use crate::solver::{normalize_allocation, MvrSolver, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Mvr,
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    /// The users' actual future positions.
    OraclePositions,
    /// Constant-velocity extrapolation from the last two fixes.
    #[default]
    TwoFixEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub room: Room,
    /// AP positions on the ceiling, projected onto the floor plane.
    pub aps: Vec<Point>,
    pub interference: InterferencePolicy,
    pub phy: PhyParams,
    pub mobility: MobilityParams,
    pub users: usize,
    pub beta: f64,
    pub eta0: f64,
    /// Look-ahead horizon T in service times.
    pub horizon: usize,
    pub service_time_s: f64,
    pub duration_s: f64,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub prediction: PredictionMode,
    pub enumeration_cap: u64,
    pub solver: SolverConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            room: Room {
                width: 8.0,
                depth: 4.0,
            },
            aps: vec![Point::new(2.0, 2.0), Point::new(6.0, 2.0)],
            interference: InterferencePolicy::FrequencyReuse,
            phy: PhyParams::default(),
            mobility: MobilityParams::default(),
            users: 15,
            beta: 2.0,
            eta0: 0.75,
            horizon: 3,
            service_time_s: 0.3,
            duration_s: 900.0,
            algorithm: Algorithm::Mvr,
            seed: 0,
            prediction: PredictionMode::TwoFixEstimate,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            solver: SolverConfig::default(),
        }
    }
}

pub const PRESETS: [&str; 2] = ["room2ap", "room4ap"];

impl ScenarioConfig {
    /// `room2ap`: 8 m × 4 m, APs over the centres of the two halves.
    /// `room4ap`: 8 m × 8 m, APs on a 2 × 2 grid.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "room2ap" => Ok(Self::default()),
            "room4ap" => Ok(Self {
                room: Room {
                    width: 8.0,
                    depth: 8.0,
                },
                aps: vec![
                    Point::new(2.0, 2.0),
                    Point::new(6.0, 2.0),
                    Point::new(2.0, 6.0),
                    Point::new(6.0, 6.0),
                ],
                ..Self::default()
            }),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        self.phy.validate()?;
        self.mobility.validate()?;
        self.solver.validate()?;
        if self.aps.is_empty() {
            return Err(invalid("aps", "need at least one AP"));
        }
        if let Some(p) = self.aps.iter().find(|p| !self.room.contains(**p)) {
            return Err(invalid("aps", format!("AP at ({}, {}) lies outside the room", p.x, p.y)));
        }
        if self.users == 0 {
            return Err(invalid("users", "need at least one user"));
        }
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            return Err(invalid("beta", format!("must be > 1, got {}", self.beta)));
        }
        if !(self.eta0 > 0.0 && self.eta0 <= 1.0) {
            return Err(invalid("eta0", format!("must lie in (0, 1], got {}", self.eta0)));
        }
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be >= 1"));
        }
        if !(self.service_time_s > 0.0 && self.service_time_s.is_finite()) {
            return Err(invalid("service_time_s", format!("must be > 0, got {}", self.service_time_s)));
        }
        if !(self.duration_s >= self.service_time_s && self.duration_s.is_finite()) {
            return Err(invalid("duration_s", "must be at least one service time"));
        }
        if self.enumeration_cap == 0 {
            return Err(invalid("enumeration_cap", "must be >= 1"));
        }
        Ok(())
    }

    /// Number of service times simulated.
    pub fn steps(&self) -> usize {
        // tolerate duration/τp landing a hair below an integer
        ((self.duration_s / self.service_time_s) + 1e-9).floor() as usize
    }

    pub fn layout(&self) -> Result<ApLayout> {
        ApLayout::new(self.aps.clone(), self.interference, self.phy.clone())
    }
}

/// One service time's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    /// Start of the service time.
    pub time_s: f64,
    /// Sum of the users' realized rates, bit/s.
    pub throughput_bps: f64,
    /// Σ ψ_β of the realized rates in units of the bandwidth.
    pub objective: f64,
    pub handovers: usize,
    pub iterations: usize,
    pub wall_time_s: f64,
    /// The solver failed and the previous assignment was kept.
    #[serde(skip)]
    pub degenerate: bool,
}

/// Rate a user actually gets: share × handover efficiency × capacity at
/// its true position.
pub fn realized_rate(ap: usize, share: f64, prev_ap: usize, true_position: Point, layout: &ApLayout, eta0: f64) -> f64 {
    let stayed = if ap == prev_ap { 1.0 } else { 0.0 };
    share * handover_efficiency(stayed, eta0) * layout.rates_at(true_position)[ap]
}

/// Number of (user, step) pairs whose AP differs from the step before.
pub fn handover_count(history: &[Vec<usize>]) -> usize {
    history
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).filter(|(a, b)| a != b).count())
        .sum()
}

pub fn total_objective(records: &[MetricsRecord]) -> f64 {
    records.iter().map(|r| r.objective).sum()
}

/// ψ_β summed over users, rates divided by `unit` and floored at `floor`.
pub fn step_objective(rates: &[f64], unit: f64, beta: f64, floor: f64) -> f64 {
    rates.iter().map(|&r| fairness((r / unit).max(floor), beta)).sum()
}

/// Simulation state between service times.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: ScenarioConfig,
    layout: ApLayout,
    users: Vec<UserState>,
    rngs: Vec<ChaCha8Rng>,
    /// Positions one service time ago.
    prev_fix: Vec<Point>,
    assignment: Vec<usize>,
    solver: MvrSolver,
    step: usize,
}

impl Simulation {
    /// Users start from the stationary distribution one service time before
    /// time 0 so the first prediction already has two fixes. The initial
    /// association is the rate argmax at time 0.
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = cfg.layout()?;
        let mut users = rwp_init(&cfg.room, &cfg.mobility, cfg.users, cfg.seed)?;
        let mut rngs: Vec<ChaCha8Rng> = (0..cfg.users).map(|u| motion_rng(cfg.seed, u)).collect();
        let prev_fix = users.iter().map(|s| s.position).collect();
        for (s, rng) in users.iter_mut().zip(&mut rngs) {
            *s = rwp_step(s, cfg.service_time_s, &cfg.mobility, &cfg.room, rng);
        }
        let assignment = users.iter().map(|s| argmax(&layout.rates_at(s.position))).collect();
        let solver = MvrSolver::new(cfg.solver.clone());
        Ok(Self {
            cfg,
            layout,
            users,
            rngs,
            prev_fix,
            assignment,
            solver,
            step: 0,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &ApLayout {
        &self.layout
    }

    pub fn positions(&self) -> Vec<Point> {
        self.users.iter().map(|s| s.position).collect()
    }

    pub fn users(&self) -> &[UserState] {
        &self.users
    }

    /// AP serving each user during the last committed service time.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.service_time_s
    }

    /// Positions 1..=T service times ahead, per user.
    pub fn predicted_positions(&self) -> Vec<Vec<Point>> {
        let c = &self.cfg;
        match c.prediction {
            PredictionMode::TwoFixEstimate => self
                .users
                .iter()
                .zip(&self.prev_fix)
                .map(|(s, &prev)| predict(prev, s.position, c.service_time_s, c.horizon, &c.room))
                .collect(),
            PredictionMode::OraclePositions => self
                .users
                .iter()
                .zip(&self.rngs)
                .map(|(s, rng)| {
                    let mut rng = rng.clone();
                    let mut s = *s;
                    (0..c.horizon)
                        .map(|_| {
                            s = rwp_step(&s, c.service_time_s, &c.mobility, &c.room, &mut rng);
                            s.position
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// The look-ahead problem for the coming service time.
    pub fn instance(&self) -> Result<ProblemInstance> {
        let rates = rate_tensor(&self.predicted_positions(), &self.layout, self.cfg.horizon)?;
        ProblemInstance::new(rates, self.assignment.clone(), self.cfg.eta0, self.cfg.beta)?
            .with_rate_unit(self.cfg.phy.bandwidth_hz)
    }

    /// Solves the coming service time with the configured algorithm and
    /// commits the result.
    pub fn step(&mut self) -> Result<MetricsRecord> {
        let started = Instant::now();
        let inst = self.instance()?;
        let solved = match self.cfg.algorithm {
            Algorithm::Mvr => self.solver.solve(&inst),
            Algorithm::Exhaustive => exhaustive_solve(&inst, self.cfg.enumeration_cap),
        };
        let (assignment, shares, iterations, degenerate) = match solved {
            Ok(sol) => (sol.assignment, sol.shares, sol.diagnostics.iterations, false),
            Err(Error::Degenerate { .. }) => {
                let keep = self.assignment.clone();
                let shares = normalize_allocation(ndarray::Array2::zeros((inst.users(), inst.aps())).view(), &keep);
                (keep, shares, 0, true)
            }
            Err(e) => return Err(e),
        };
        let shares: Vec<f64> = assignment.iter().enumerate().map(|(u, &a)| shares[[u, a]]).collect();
        let mut record = self.commit(&assignment, &shares);
        record.iterations = iterations;
        record.degenerate = degenerate;
        record.wall_time_s = started.elapsed().as_secs_f64();
        Ok(record)
    }

    /// Commits a decision from any solver (its first slot).
    pub fn commit_solution(&mut self, sol: &AllocationSolution) -> MetricsRecord {
        let shares: Vec<f64> = sol.assignment.iter().enumerate().map(|(u, &a)| sol.shares[[u, a]]).collect();
        let mut record = self.commit(&sol.assignment, &shares);
        record.iterations = sol.diagnostics.iterations;
        record
    }

    /// Advances every user by one service time and charges `assignment`
    /// with `shares[user]` against the true positions at its end.
    fn commit(&mut self, assignment: &[usize], shares: &[f64]) -> MetricsRecord {
        let c = &self.cfg;
        self.prev_fix = self.positions();
        for (s, rng) in self.users.iter_mut().zip(&mut self.rngs) {
            *s = rwp_step(s, c.service_time_s, &c.mobility, &c.room, rng);
        }
        let rates: Vec<f64> = assignment
            .iter()
            .enumerate()
            .map(|(u, &a)| realized_rate(a, shares[u], self.assignment[u], self.users[u].position, &self.layout, c.eta0))
            .collect();
        let handovers = assignment.iter().zip(&self.assignment).filter(|(a, b)| a != b).count();
        let record = MetricsRecord {
            step: self.step,
            time_s: self.time(),
            throughput_bps: rates.iter().sum(),
            objective: step_objective(&rates, c.phy.bandwidth_hz, c.beta, c.solver.p_floor),
            handovers,
            iterations: 0,
            wall_time_s: 0.0,
            degenerate: false,
        };
        self.assignment = assignment.to_vec();
        self.step += 1;
        record
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    /// User positions at the start of every service time, plus the final ones.
    pub trajectory: Vec<Vec<Point>>,
    /// Initial association followed by every committed assignment.
    pub assignments: Vec<Vec<usize>>,
}

impl RunOutput {
    pub fn total_objective(&self) -> f64 {
        total_objective(&self.records)
    }

    pub fn mean_throughput(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.throughput_bps).sum::<f64>() / self.records.len() as f64
    }

    pub fn handovers(&self) -> usize {
        handover_count(&self.assignments)
    }
}

pub fn run(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let mut sim = Simulation::new(cfg.clone())?;
    let steps = cfg.steps();
    let mut out = RunOutput {
        records: Vec::with_capacity(steps),
        trajectory: vec![sim.positions()],
        assignments: vec![sim.assignment().to_vec()],
    };
    for _ in 0..steps {
        out.records.push(sim.step()?);
        out.trajectory.push(sim.positions());
        out.assignments.push(sim.assignment().to_vec());
    }
    Ok(out)
}

/// Horizon utilities of the relaxation solver and the exhaustive optimum
/// on one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRecord {
    pub instance_id: usize,
    #[serde(rename = "U_oracle")]
    pub u_oracle: f64,
    #[serde(rename = "U_mvr")]
    pub u_mvr: f64,
    pub gap: f64,
    pub enumerated_count: u64,
    pub wall_time: f64,
}

/// |U_mvr − U_oracle| / |U_oracle|; 0 when both are equal (including 0).
pub fn relative_gap(u_mvr: f64, u_oracle: f64) -> f64 {
    if u_mvr == u_oracle {
        0.0
    } else {
        (u_mvr - u_oracle).abs() / u_oracle.abs()
    }
}

/// Runs the scenario driven by the relaxation solver and, at every service
/// time, also solves the identical instance exhaustively. Utilities are the
/// look-ahead objective of each solver's plan and shares, with rates in
/// units of the bandwidth.
pub fn oracle_compare(cfg: &ScenarioConfig) -> Result<Vec<GapRecord>> {
    let mut sim = Simulation::new(ScenarioConfig {
        algorithm: Algorithm::Mvr,
        ..cfg.clone()
    })?;
    let mut solver = MvrSolver::new(cfg.solver.clone());
    let unit = cfg.phy.bandwidth_hz;
    let mut out = Vec::with_capacity(cfg.steps());
    for id in 0..cfg.steps() {
        let inst = sim.instance()?;
        let scaled = ProblemInstance::new(
            inst.rates.scaled(1.0 / unit),
            inst.prev_assignment.clone(),
            inst.eta0,
            inst.beta,
        )?;
        let started = Instant::now();
        let exact = exhaustive_solve(&inst, cfg.enumeration_cap)?;
        let wall = started.elapsed().as_secs_f64();
        let mvr = solver.solve(&inst)?;
        let u_oracle = assignment_utility(&exact.plan, &exact.plan_shares, &scaled)?;
        let u_mvr = assignment_utility(&mvr.plan, &mvr.plan_shares, &scaled)?;
        out.push(GapRecord {
            instance_id: id,
            u_oracle,
            u_mvr,
            gap: relative_gap(u_mvr, u_oracle),
            enumerated_count: exact.diagnostics.enumerated,
            wall_time: wall,
        });
        sim.commit_solution(&mvr);
    }
    Ok(out)
}

/// The two-zone illustration: two users leave the middle AP's coverage
/// in opposite directions, each towards a neighbour. In the first service
/// time both are in the outer zone of the middle AP and of their
/// neighbour (rate R/2), in the second both sit in their neighbour's inner
/// zone (rate R) and out of the middle AP's reach.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntuitionScenario {
    pub rate: f64,
    pub eta0: f64,
}

/// AP indices: left neighbour, middle, right neighbour.
pub const INTUITION_MIDDLE_AP: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyOutcome {
    /// Handovers initiated in the first service time.
    pub first_handovers: usize,
    /// Aggregate rate of both users in each service time.
    pub first_rate: f64,
    pub second_rate: f64,
}

impl StrategyOutcome {
    pub fn average(&self) -> f64 {
        0.5 * (self.first_rate + self.second_rate)
    }
}

/// Name under which the CLI exposes [`IntuitionScenario::preset`].
pub const INTUITION_PRESET: &str = "intuition";

impl IntuitionScenario {
    /// Inner-zone rate of 200 Mbit/s with η0 = 0.75.
    pub fn preset() -> Self {
        Self {
            rate: 200e6,
            eta0: 0.75,
        }
    }

    pub fn new(rate: f64, eta0: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(invalid("rate", "must be > 0"));
        }
        if !(eta0 > 0.0 && eta0 <= 1.0) {
            return Err(invalid("eta0", format!("must lie in (0, 1], got {eta0}")));
        }
        Ok(Self { rate, eta0 })
    }

    pub fn rate_tensor(&self) -> RateTensor {
        let (r, half) = (self.rate, self.rate / 2.0);
        // [slot][user][ap]; user 0 heads left, user 1 right
        let rates = [[[half, half, 0.0], [0.0, half, half]], [[r, 0.0, 0.0], [0.0, 0.0, r]]];
        RateTensor::from_fn(2, 2, 3, |(t, u, a)| rates[t][u][a]).expect("finite non-negative")
    }

    /// Both users start on the middle AP.
    pub fn instance(&self, beta: f64) -> Result<ProblemInstance> {
        ProblemInstance::new(
            self.rate_tensor(),
            vec![INTUITION_MIDDLE_AP; 2],
            self.eta0,
            beta,
        )
    }

    /// Plan in which the first `first_handovers` users leave the middle AP
    /// in the first service time and the rest in the second.
    pub fn strategy_plan(first_handovers: usize) -> Vec<Vec<usize>> {
        let target = [0, 2];
        let first = (0..2)
            .map(|u| if u < first_handovers { target[u] } else { INTUITION_MIDDLE_AP })
            .collect();
        vec![first, target.to_vec()]
    }

    /// Aggregate rates of a plan with the resource of each AP split equally
    /// among its users.
    pub fn evaluate(&self, plan: &[Vec<usize>]) -> Result<StrategyOutcome> {
        let inst = self.instance(2.0)?;
        let rates = inst.plan_rates(plan);
        let slot_rate = |t: usize| -> f64 {
            plan[t]
                .iter()
                .enumerate()
                .map(|(u, &a)| {
                    let sharing = plan[t].iter().filter(|&&b| b == a).count() as f64;
                    rates[[t, u, a]] / sharing
                })
                .sum()
        };
        let first_handovers = plan[0].iter().filter(|&&a| a != INTUITION_MIDDLE_AP).count();
        Ok(StrategyOutcome {
            first_handovers,
            first_rate: slot_rate(0),
            second_rate: slot_rate(1),
        })
    }

    /// The three strategies, ordered by handovers in the first service time.
    pub fn strategies(&self) -> Result<Vec<StrategyOutcome>> {
        (0..=2).map(|k| self.evaluate(&Self::strategy_plan(k))).collect()
    }
}
