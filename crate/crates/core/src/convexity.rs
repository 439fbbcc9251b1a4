//! Curvature of monomials f = x^a y^b z^c on the positive orthant, both from
//! the principal-minor sign conditions and numerically from sampled Hessians.

use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Curvature {
    Convex,
    Concave,
    Neither,
}

/// The Hessian is f·D⁻¹MD⁻¹ with D = diag(x, y, z) and
/// M = w wᵀ − diag(w), w = (a, b, c), so its sign pattern is that of M.
/// Constant and linear monomials satisfy both sets and report `Convex`.
pub fn check_monomial_convexity(a: f64, b: f64, c: f64) -> Curvature {
    let diag = [a * (a - 1.0), b * (b - 1.0), c * (c - 1.0)];
    let pairs = [a * b * (a + b - 1.0), a * c * (a + c - 1.0), b * c * (b + c - 1.0)];
    let det = a * b * c * (a + b + c - 1.0);
    let pairs_ok = pairs.iter().all(|&m| m <= 0.0);
    if pairs_ok && diag.iter().all(|&d| d >= 0.0) && det >= 0.0 {
        Curvature::Convex
    } else if pairs_ok && diag.iter().all(|&d| d <= 0.0) && det <= 0.0 {
        Curvature::Concave
    } else {
        Curvature::Neither
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum HessianWitness {
    /// Every sampled Hessian passed; the worst min-eigenvalue / spectral norm seen.
    PsdEverywhereSampled { worst_relative_eigenvalue: f64 },
    /// First sampled point whose Hessian has an eigenvalue below −tol·‖H‖.
    Counterexample { point: [f64; 3], min_eigenvalue: f64, norm: f64 },
}

impl HessianWitness {
    pub fn holds(&self) -> bool {
        matches!(self, HessianWitness::PsdEverywhereSampled { .. })
    }
}

/// Allowed negative eigenvalue relative to the Hessian's spectral norm.
pub const HESSIAN_TOLERANCE: f64 = 1e-8;

const SAMPLE_LO: f64 = 0.1;
const SAMPLE_HI: f64 = 10.0;

/// Samples points uniformly in [0.1, 10]³ and checks the finite-difference
/// Hessian of x^a y^b z^c for positive semi-definiteness.
pub fn numeric_hessian_witness(a: f64, b: f64, c: f64, samples: usize, rng_seed: u64) -> HessianWitness {
    witness(1.0, [a, b, c], samples, rng_seed)
}

/// Same as [`numeric_hessian_witness`] for negative semi-definiteness.
pub fn numeric_concavity_witness(a: f64, b: f64, c: f64, samples: usize, rng_seed: u64) -> HessianWitness {
    witness(-1.0, [a, b, c], samples, rng_seed)
}

fn witness(sign: f64, exps: [f64; 3], samples: usize, seed: u64) -> HessianWitness {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..samples.max(1) {
        let point: [f64; 3] = std::array::from_fn(|_| rng.gen_range(SAMPLE_LO..SAMPLE_HI));
        let h = finite_difference_hessian(|v| sign * monomial(exps, v), point);
        let eig = SymmetricEigen::new(h).eigenvalues;
        let min = eig.min();
        let norm = eig.abs().max();
        if norm == 0.0 {
            worst = worst.min(0.0);
            continue;
        }
        if min < -HESSIAN_TOLERANCE * norm {
            return HessianWitness::Counterexample {
                point,
                min_eigenvalue: min,
                norm,
            };
        }
        worst = worst.min(min / norm);
    }
    HessianWitness::PsdEverywhereSampled {
        worst_relative_eigenvalue: worst,
    }
}

fn monomial([a, b, c]: [f64; 3], [x, y, z]: [f64; 3]) -> f64 {
    x.powf(a) * y.powf(b) * z.powf(c)
}

/// Central differences with one Richardson extrapolation; steps are
/// relative to each coordinate.
pub fn finite_difference_hessian(f: impl Fn([f64; 3]) -> f64, at: [f64; 3]) -> Matrix3<f64> {
    let raw = |scale: f64| {
        let h: [f64; 3] = std::array::from_fn(|i| scale * at[i]);
        let shifted = |i: usize, di: f64, j: usize, dj: f64| {
            let mut p = at;
            p[i] += di;
            p[j] += dj;
            f(p)
        };
        let f0 = f(at);
        Matrix3::from_fn(|i, j| {
            if i == j {
                let mut hi = at;
                let mut lo = at;
                hi[i] += h[i];
                lo[i] -= h[i];
                (f(hi) - 2.0 * f0 + f(lo)) / (h[i] * h[i])
            } else {
                (shifted(i, h[i], j, h[j]) - shifted(i, h[i], j, -h[j]) - shifted(i, -h[i], j, h[j])
                    + shifted(i, -h[i], j, -h[j]))
                    / (4.0 * h[i] * h[j])
            }
        })
    };
    let coarse = raw(2e-3);
    let fine = raw(1e-3);
    let h = (fine * 4.0 - coarse) / 3.0;
    (h + h.transpose()) * 0.5
}
