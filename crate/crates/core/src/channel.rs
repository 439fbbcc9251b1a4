//! Line-of-sight VLC downlink channel.
//!
//! Everything here is a pure function of its inputs: Lambertian emission
//! from ceiling APs, a receiver photodiode pointing straight up, SINR with
//! optional co-channel interference and the Shannon rate on top.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::Point;

/// Physical-layer constants shared by every AP/user pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhyParams {
    /// Half-intensity radiation semi-angle, degrees.
    pub half_intensity_angle_deg: f64,
    /// Photodiode area, m².
    pub pd_area_m2: f64,
    /// Receiver field-of-view semi-angle, degrees.
    pub fov_semi_angle_deg: f64,
    pub refractive_index: f64,
    pub optical_filter_gain: f64,
    /// Average transmitted optical power, W.
    pub tx_optical_power_w: f64,
    /// Optical-to-electrical conversion efficiency.
    pub oe_efficiency: f64,
    /// Ratio of average optical power to the RMS electrical signal amplitude.
    pub dc_bias_ratio: f64,
    /// Receiver noise power spectral density, W/Hz.
    pub noise_psd: f64,
    /// Modulation bandwidth, Hz.
    pub bandwidth_hz: f64,
    /// Vertical distance between the AP plane and the receiver plane, m.
    pub vertical_distance_m: f64,
}

impl Default for PhyParams {
    fn default() -> Self {
        Self {
            half_intensity_angle_deg: 30.0,
            pd_area_m2: 1e-4,
            fov_semi_angle_deg: 90.0,
            refractive_index: 1.5,
            optical_filter_gain: 1.0,
            tx_optical_power_w: 10.0,
            oe_efficiency: 0.53,
            dc_bias_ratio: 3.0,
            noise_psd: 1e-19,
            bandwidth_hz: 20e6,
            vertical_distance_m: 2.3,
        }
    }
}

impl PhyParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("pd_area_m2", self.pd_area_m2),
            ("refractive_index", self.refractive_index),
            ("optical_filter_gain", self.optical_filter_gain),
            ("tx_optical_power_w", self.tx_optical_power_w),
            ("oe_efficiency", self.oe_efficiency),
            ("dc_bias_ratio", self.dc_bias_ratio),
            ("noise_psd", self.noise_psd),
            ("bandwidth_hz", self.bandwidth_hz),
            ("vertical_distance_m", self.vertical_distance_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        lambertian_order(self.half_intensity_angle_deg)?;
        if !(self.fov_semi_angle_deg > 0.0 && self.fov_semi_angle_deg <= 90.0) {
            return Err(invalid(
                "fov_semi_angle_deg",
                format!("must lie in (0, 90], got {}", self.fov_semi_angle_deg),
            ));
        }
        Ok(())
    }

    /// Electrical noise term ι²·N·B of the SINR denominator.
    pub fn noise_power(&self) -> f64 {
        self.dc_bias_ratio.powi(2) * self.noise_psd * self.bandwidth_hz
    }
}

/// Which APs interfere with a given serving AP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferencePolicy {
    /// Adjacent cells use disjoint channels; the interference set is empty.
    #[default]
    FrequencyReuse,
    /// Every other AP transmits continuously at full power on the same channel.
    FullInterference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApLayout {
    pub positions: Vec<Point>,
    #[serde(default)]
    pub interference: InterferencePolicy,
    #[serde(default)]
    pub phy: PhyParams,
}

impl ApLayout {
    pub fn new(positions: Vec<Point>, interference: InterferencePolicy, phy: PhyParams) -> Result<Self> {
        let layout = Self {
            positions,
            interference,
            phy,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.is_empty() {
            return Err(invalid("positions", "at least one AP is required"));
        }
        if let Some(p) = self.positions.iter().find(|p| !p.is_finite()) {
            return Err(invalid("positions", format!("non-finite AP position {p:?}")));
        }
        self.phy.validate()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Achievable rate (bit/s) from every AP to a receiver at `user`.
    pub fn rates_at(&self, user: Point) -> Vec<f64> {
        let gains: Vec<f64> = self
            .positions
            .iter()
            .map(|&ap| path_loss(user, ap, &self.phy))
            .collect();
        (0..gains.len())
            .map(|serving| rate_from_gains(serving, &gains, self.interference, &self.phy))
            .collect()
    }
}

/// Predicted achievable rates, indexed `[slot][user][ap]` where slot 0 is
/// the forthcoming service time (t = 1).
#[derive(Debug, Clone, PartialEq)]
pub struct RateTensor(Array3<f64>);

impl RateTensor {
    pub fn new(rates: Array3<f64>) -> Result<Self> {
        let (t, u, a) = rates.dim();
        if t == 0 || u == 0 || a == 0 {
            return Err(Error::DimensionMismatch(format!(
                "rate tensor must be non-empty, got {t}x{u}x{a}"
            )));
        }
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(invalid("rates", "entries must be finite and >= 0"));
        }
        Ok(Self(rates))
    }

    pub fn from_fn(
        horizon: usize,
        users: usize,
        aps: usize,
        f: impl FnMut((usize, usize, usize)) -> f64,
    ) -> Result<Self> {
        Self::new(Array3::from_shape_fn((horizon, users, aps), f))
    }

    pub fn horizon(&self) -> usize {
        self.0.dim().0
    }

    pub fn users(&self) -> usize {
        self.0.dim().1
    }

    pub fn aps(&self) -> usize {
        self.0.dim().2
    }

    /// Rate at zero-based slot `slot`.
    pub fn get(&self, slot: usize, user: usize, ap: usize) -> f64 {
        self.0[[slot, user, ap]]
    }

    pub fn as_array(&self) -> &Array3<f64> {
        &self.0
    }

    pub fn mean(&self) -> f64 {
        self.0.mean().unwrap_or(0.0)
    }

    pub fn scaled(&self, factor: f64) -> RateTensor {
        RateTensor(self.0.mapv(|r| r * factor))
    }
}

/// Lambertian emission order m = −1 / log₂(cos Φ½).
pub fn lambertian_order(half_angle_deg: f64) -> Result<f64> {
    if !(half_angle_deg > 0.0 && half_angle_deg < 90.0) {
        return Err(invalid(
            "half_intensity_angle_deg",
            format!("must lie in (0, 90), got {half_angle_deg}"),
        ));
    }
    Ok(-1.0 / half_angle_deg.to_radians().cos().log2())
}

/// Optical concentrator gain for incidence angle `incidence_deg`.
pub fn concentrator_gain(incidence_deg: f64, refractive_index: f64, fov_deg: f64) -> Result<f64> {
    if incidence_deg < 0.0 || incidence_deg.is_nan() {
        return Err(invalid("incidence_deg", format!("must be >= 0, got {incidence_deg}")));
    }
    if incidence_deg <= fov_deg {
        Ok(refractive_index.powi(2) / fov_deg.to_radians().sin().powi(2))
    } else {
        Ok(0.0)
    }
}

/// LoS DC channel gain between a ceiling AP and an upward-facing receiver.
///
/// Uses the closed form obtained when irradiance and incidence angles
/// coincide (cos φ = cos ψ = h / D).
pub fn path_loss(user: Point, ap: Point, phy: &PhyParams) -> f64 {
    let h = phy.vertical_distance_m;
    let r_sq = (user - ap).norm_sq();
    let d_sq = r_sq + h * h;
    let fov = phy.fov_semi_angle_deg.to_radians();
    // ψ = arccos(h / D) > Ψf  <=>  h / D < cos Ψf
    if h < d_sq.sqrt() * fov.cos() {
        return 0.0;
    }
    // Validated upstream; fall back to 0 on a bad angle rather than panic.
    let Ok(m) = lambertian_order(phy.half_intensity_angle_deg) else {
        return 0.0;
    };
    let n = phy.refractive_index;
    (m + 1.0) * phy.pd_area_m2 * phy.optical_filter_gain * n * n * h.powf(m + 1.0)
        / (2.0 * std::f64::consts::PI * fov.sin().powi(2))
        * d_sq.powf(-(m + 3.0) / 2.0)
}

/// Electrical SINR of the serving link given the interfering channel gains.
pub fn sinr(serving_gain: f64, interferer_gains: &[f64], phy: &PhyParams) -> f64 {
    let kappa_sq = phy.oe_efficiency * phy.oe_efficiency;
    let p = phy.tx_optical_power_w;
    let signal = kappa_sq * (p * serving_gain).powi(2);
    let interference: f64 = interferer_gains.iter().map(|g| (p * g).powi(2)).sum();
    signal / (phy.noise_power() + kappa_sq * interference)
}

/// Shannon capacity in bit/s.
pub fn capacity(sinr: f64, bandwidth_hz: f64) -> f64 {
    bandwidth_hz * (1.0 + sinr).log2()
}

/// Affine handover efficiency: 1 when the user stays on the AP, η0 after a
/// switch, linear in between for relaxed assignments.
pub fn handover_efficiency(prev_assignment: f64, eta0: f64) -> f64 {
    (1.0 - eta0) * prev_assignment + eta0
}

fn rate_from_gains(serving: usize, gains: &[f64], policy: InterferencePolicy, phy: &PhyParams) -> f64 {
    let s = match policy {
        InterferencePolicy::FrequencyReuse => sinr(gains[serving], &[], phy),
        InterferencePolicy::FullInterference => {
            let others: Vec<f64> = gains
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != serving)
                .map(|(_, &g)| g)
                .collect();
            sinr(gains[serving], &others, phy)
        }
    };
    capacity(s, phy.bandwidth_hz)
}

/// Builds `R[t][μ][α]` from per-user predicted positions.
///
/// `positions[user][slot]` must hold at least `horizon` entries.
pub fn rate_tensor(positions: &[Vec<Point>], layout: &ApLayout, horizon: usize) -> Result<RateTensor> {
    if horizon == 0 {
        return Err(invalid("horizon", "must be >= 1"));
    }
    if positions.is_empty() {
        return Err(Error::DimensionMismatch("no users".into()));
    }
    if let Some((u, p)) = positions.iter().enumerate().find(|(_, p)| p.len() < horizon) {
        return Err(Error::DimensionMismatch(format!(
            "user {u} has {} predicted positions, horizon is {horizon}",
            p.len()
        )));
    }
    let mut out = Array3::zeros((horizon, positions.len(), layout.len()));
    for (u, track) in positions.iter().enumerate() {
        for (t, &pos) in track.iter().take(horizon).enumerate() {
            for (a, r) in layout.rates_at(pos).into_iter().enumerate() {
                out[[t, u, a]] = r;
            }
        }
    }
    RateTensor::new(out)
}
