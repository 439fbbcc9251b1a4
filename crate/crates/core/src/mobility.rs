//! Random-waypoint user motion, two-fix position prediction and the
//! service-time bound derived from the misprediction probability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::Point;

/// Rectangular room `[0, width] × [0, depth]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room {
    pub width: f64,
    pub depth: f64,
}

impl Room {
    pub fn new(width: f64, depth: f64) -> Result<Self> {
        let room = Self { width, depth };
        room.validate()?;
        Ok(room)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width.is_finite() && self.width > 0.0 && self.depth.is_finite() && self.depth > 0.0) {
            return Err(invalid(
                "room",
                format!("width and depth must be > 0, got {} x {}", self.width, self.depth),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, p: Point) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.depth).contains(&p.y)
    }

    pub fn clamp(&self, p: Point) -> Point {
        Point::new(p.x.clamp(0.0, self.width), p.y.clamp(0.0, self.depth))
    }

    pub fn diagonal(&self) -> f64 {
        self.width.hypot(self.depth)
    }

    pub fn uniform_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        Point::new(rng.gen::<f64>() * self.width, rng.gen::<f64>() * self.depth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityParams {
    pub v_min: f64,
    pub v_max: f64,
    pub pause_min: f64,
    pub pause_max: f64,
}

impl Default for MobilityParams {
    fn default() -> Self {
        Self {
            v_min: 0.0,
            v_max: 1.0,
            pause_min: 0.0,
            pause_max: 1.0,
        }
    }
}

impl MobilityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_min >= 0.0 && self.v_min <= self.v_max && self.v_max.is_finite()) {
            return Err(invalid(
                "mobility.v_min/v_max",
                format!("need 0 <= v_min <= v_max, got [{}, {}]", self.v_min, self.v_max),
            ));
        }
        if !(self.pause_min >= 0.0 && self.pause_min <= self.pause_max && self.pause_max.is_finite()) {
            return Err(invalid(
                "mobility.pause_min/pause_max",
                format!("need 0 <= pause_min <= pause_max, got [{}, {}]", self.pause_min, self.pause_max),
            ));
        }
        Ok(())
    }

    fn leg_speed<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        uniform(rng, self.v_min, self.v_max)
    }

    fn pause<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        uniform(rng, self.pause_min, self.pause_max)
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Moving,
    Paused,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub position: Point,
    pub waypoint: Point,
    /// Speed of the current leg, m/s.
    pub speed: f64,
    /// Pause time left, s (meaningful while paused).
    pub pause_remaining: f64,
    pub phase: Phase,
}

impl UserState {
    /// A user walking from `position` to `waypoint` at `speed`.
    pub fn moving(position: Point, waypoint: Point, speed: f64) -> Self {
        Self {
            position,
            waypoint,
            speed,
            pause_remaining: 0.0,
            phase: Phase::Moving,
        }
    }

    pub fn velocity(&self) -> Point {
        let d = self.waypoint - self.position;
        let len = d.norm();
        if self.phase == Phase::Paused || len == 0.0 {
            Point::default()
        } else {
            d * (self.speed / len)
        }
    }
}

/// RNG stream used to draw a user's stationary initial state.
pub fn init_rng(seed: u64, user: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * user as u64);
    rng
}

/// RNG stream driving a user's motion after initialisation.
pub fn motion_rng(seed: u64, user: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * user as u64 + 1);
    rng
}

/// Draws `count` users from the stationary random-waypoint distribution.
///
/// A leg is two independent uniform points accepted with probability
/// proportional to its length; the user sits uniformly along it, heading
/// for the second point. With `v_min > 0` the speed follows the
/// stationary density ∝ 1/v, otherwise the leg distribution.
pub fn rwp_init(room: &Room, params: &MobilityParams, count: usize, seed: u64) -> Result<Vec<UserState>> {
    room.validate()?;
    params.validate()?;
    if count == 0 {
        return Err(invalid("count", "need at least one user"));
    }
    let diag = room.diagonal();
    Ok((0..count)
        .map(|u| {
            let mut rng = init_rng(seed, u);
            let (from, to) = loop {
                let a = room.uniform_point(&mut rng);
                let b = room.uniform_point(&mut rng);
                if rng.gen::<f64>() * diag < a.distance(b) {
                    break (a, b);
                }
            };
            let along: f64 = rng.gen();
            let position = room.clamp(from + (to - from) * along);
            let speed = if params.v_min > 0.0 && params.v_max > params.v_min {
                params.v_min * (params.v_max / params.v_min).powf(rng.gen::<f64>())
            } else {
                params.leg_speed(&mut rng)
            };
            UserState::moving(position, to, speed)
        })
        .collect())
}

/// Advances one user by `dt` seconds, crossing any number of arrivals,
/// pauses and new legs.
pub fn rwp_step<R: Rng + ?Sized>(
    state: &UserState,
    dt: f64,
    params: &MobilityParams,
    room: &Room,
    rng: &mut R,
) -> UserState {
    let mut s = *state;
    let mut remaining = dt.max(0.0);
    loop {
        match s.phase {
            Phase::Moving => {
                let offset = s.waypoint - s.position;
                let dist = offset.norm();
                if s.speed <= 0.0 && dist > 0.0 {
                    break;
                }
                let arrival = if dist == 0.0 { 0.0 } else { dist / s.speed };
                if remaining < arrival {
                    s.position = room.clamp(s.position + offset * (s.speed * remaining / dist));
                    break;
                }
                remaining -= arrival;
                s.position = s.waypoint;
                s.phase = Phase::Paused;
                s.pause_remaining = params.pause(rng);
            }
            Phase::Paused => {
                if remaining < s.pause_remaining {
                    s.pause_remaining -= remaining;
                    break;
                }
                remaining -= s.pause_remaining;
                s.pause_remaining = 0.0;
                s.waypoint = room.uniform_point(rng);
                s.speed = params.leg_speed(rng);
                s.phase = Phase::Moving;
                if remaining == 0.0 {
                    break;
                }
            }
        }
    }
    s
}

/// Constant-velocity extrapolation from two fixes `service_time` apart.
/// Returns the positions 1..=horizon service times ahead, clamped to the room.
pub fn predict(prev: Point, now: Point, service_time: f64, horizon: usize, room: &Room) -> Vec<Point> {
    let velocity = (now - prev) * (1.0 / service_time);
    (1..=horizon)
        .map(|t| room.clamp(now + velocity * (t as f64 * service_time)))
        .collect()
}

/// Probability that the user stops (reaches its waypoint) within
/// `horizon` service times; 1 for a paused user.
pub fn misprediction_probability(state: &UserState, horizon: usize, service_time: f64) -> f64 {
    if state.phase == Phase::Paused {
        return 1.0;
    }
    let leg_left = state.position.distance(state.waypoint);
    if leg_left <= 0.0 {
        return 1.0;
    }
    (state.speed * horizon as f64 * service_time / leg_left).min(1.0)
}

/// Fraction of users drawn from the stationary distribution whose leg ends
/// (arrival at the waypoint) within `horizon` service times, i.e. whose
/// constant-velocity prediction breaks. Users are stepped one service time
/// at a time on their own motion streams.
pub fn misprediction_frequency(
    room: &Room,
    params: &MobilityParams,
    horizon: usize,
    service_time: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if !(service_time > 0.0) {
        return Err(invalid("service_time", "must be > 0"));
    }
    let users = rwp_init(room, params, trials, seed)?;
    let stopped = users
        .iter()
        .enumerate()
        .filter(|(u, start)| {
            let mut rng = motion_rng(seed, *u);
            let mut s = **start;
            (0..horizon).any(|_| {
                s = rwp_step(&s, service_time, params, room, &mut rng);
                s.phase == Phase::Paused || s.waypoint != start.waypoint
            })
        })
        .count();
    Ok(stopped as f64 / trials as f64)
}

/// Monte Carlo mean distance between two independent uniform points.
pub fn expected_leg_length(room: &Room, samples: usize, seed: u64) -> Result<f64> {
    room.validate()?;
    if samples == 0 {
        return Err(invalid("samples", "need at least one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    for _ in 0..samples {
        let a = room.uniform_point(&mut rng);
        let b = room.uniform_point(&mut rng);
        sum += a.distance(b);
    }
    Ok(sum / samples as f64)
}

/// Largest service time keeping the expected misprediction probability
/// over `horizon` steps below `delta`, for leg speeds uniform on
/// `[v_min, v_max]` and mean leg length `mean_leg`.
pub fn service_time_bound(delta: f64, horizon: usize, v_min: f64, v_max: f64, mean_leg: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    if horizon == 0 {
        return Err(invalid("horizon", "must be >= 1"));
    }
    if !(v_min > 0.0) {
        return Err(invalid("v_min", "the bound needs v_min > 0 (v_min = 0 acts as a pause)"));
    }
    if !(v_max >= v_min && v_max.is_finite()) {
        return Err(invalid("v_max", format!("need v_max >= v_min, got {v_max}")));
    }
    if !(mean_leg > 0.0) {
        return Err(invalid("mean_leg", "must be > 0"));
    }
    // E[1/v] for v ~ U[v_min, v_max]; degenerates to 1/v for equal bounds.
    let inv_speed = if v_max > v_min {
        (v_max / v_min).ln() / (v_max - v_min)
    } else {
        1.0 / v_min
    };
    Ok(delta / horizon as f64 * inv_speed * mean_leg)
}
