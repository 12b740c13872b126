//! Storage cost families, their evaluation in power and energy coordinates,
//! subgradients of the composed objective, and the convexity certifier.
//!
//! Composing a convex cost `c` with `phi_inverse` does not preserve convexity
//! in general. It does when `c` is nondecreasing in every coordinate on
//! `[0, inf)`, which the built-in families satisfy under simple sign
//! conditions on their data. Energy arbitrage has its own, weaker, per-period
//! slope condition. [`certify_convexity`] only ever answers "certified" when
//! one of those sufficient conditions holds.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{build_dynamics, DynamicsMatrices, StorageParams};
use crate::transform::{phi_inverse, velocity};

/// Absolute slack allowed by [`midpoint_convexity_probe`] before a triple
/// counts as a violation.
pub const PROBE_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("cost parameter `{what}` has length {actual}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("custom cost `{0}` has no subgradient oracle")]
    NoSubgradientOracle(String),
}

/// A user-supplied convex cost on power profiles.
///
/// Implementors promise convexity of [`CustomCost::evaluate`]. Monotonicity is
/// never inferred; it has to be declared per coordinate for the certifier to
/// use it.
pub trait CustomCost: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn evaluate(&self, u: &[f64]) -> f64;

    /// Any subgradient of the cost at `u`. At `u[t] == 0` the charging-side
    /// (right) derivative should be returned so the composed subgradient stays
    /// valid at the kink.
    fn subgradient(&self, _u: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Whether the cost is declared nondecreasing in coordinate `t` on `[0, inf)`.
    fn nondecreasing_on_nonnegative(&self, t: usize) -> bool;

    /// Bound on `|dc/du_t|` over the power box, if known.
    fn coordinate_lipschitz(&self, _t: usize) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone)]
pub enum CostSpec {
    /// `max_t |u_t + load_t|`
    PeakShaving {
        load: Vec<f64>,
    },
    /// `sum_t (u_t + load_t)^2`
    LoadBalancing {
        load: Vec<f64>,
    },
    /// `sum_t |u_t - signal_t|`
    PowerRegulation {
        signal: Vec<f64>,
    },
    /// `sum_t p_buy_t * max(u_t, 0) + p_sell_t * min(u_t, 0)`
    EnergyArbitrage {
        p_buy: Vec<f64>,
        p_sell: Vec<f64>,
    },
    /// `sum_{t>=1} |(s_t - u_t) - (s_{t-1} - u_{t-1})|`
    PowerSmoothing {
        renewable: Vec<f64>,
    },
    Custom(Arc<dyn CustomCost>),
}

impl PartialEq for CostSpec {
    fn eq(&self, other: &Self) -> bool {
        use CostSpec::*;
        match (self, other) {
            (PeakShaving { load: a }, PeakShaving { load: b }) => a == b,
            (LoadBalancing { load: a }, LoadBalancing { load: b }) => a == b,
            (PowerRegulation { signal: a }, PowerRegulation { signal: b }) => a == b,
            (EnergyArbitrage { p_buy: a, p_sell: b }, EnergyArbitrage { p_buy: c, p_sell: d }) => a == c && b == d,
            (PowerSmoothing { renewable: a }, PowerSmoothing { renewable: b }) => a == b,
            (Custom(a), Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl CostSpec {
    pub fn family_name(&self) -> &str {
        match self {
            CostSpec::PeakShaving { .. } => "peak_shaving",
            CostSpec::LoadBalancing { .. } => "load_balancing",
            CostSpec::PowerRegulation { .. } => "power_regulation",
            CostSpec::EnergyArbitrage { .. } => "energy_arbitrage",
            CostSpec::PowerSmoothing { .. } => "power_smoothing",
            CostSpec::Custom(c) => c.name(),
        }
    }

    /// Named parameter vectors, in a fixed order.
    pub fn parameter_vectors(&self) -> Vec<(&'static str, &[f64])> {
        match self {
            CostSpec::PeakShaving { load } | CostSpec::LoadBalancing { load } => vec![("load", load)],
            CostSpec::PowerRegulation { signal } => vec![("signal", signal)],
            CostSpec::EnergyArbitrage { p_buy, p_sell } => vec![("p_buy", p_buy), ("p_sell", p_sell)],
            CostSpec::PowerSmoothing { renewable } => vec![("renewable", renewable)],
            CostSpec::Custom(_) => vec![],
        }
    }

    pub fn check_horizon(&self, horizon: usize) -> Result<(), CostError> {
        for (what, v) in self.parameter_vectors() {
            if v.len() != horizon {
                return Err(CostError::LengthMismatch {
                    what,
                    expected: horizon,
                    actual: v.len(),
                });
            }
        }
        Ok(())
    }

    /// Per-coordinate bound on `|dc/du_t|` for `u` in `[u_lo, u_hi]`.
    /// `None` for custom costs that do not provide one.
    pub fn coordinate_lipschitz(&self, u_lo: &[f64], u_hi: &[f64]) -> Option<Vec<f64>> {
        let n = u_lo.len();
        let out = match self {
            CostSpec::PeakShaving { .. } | CostSpec::PowerRegulation { .. } => vec![1.0; n],
            CostSpec::LoadBalancing { load } => (0..n)
                .map(|t| 2.0 * (u_lo[t] + load[t]).abs().max((u_hi[t] + load[t]).abs()))
                .collect(),
            CostSpec::EnergyArbitrage { p_buy, p_sell } => {
                (0..n).map(|t| p_buy[t].abs().max(p_sell[t].abs())).collect()
            }
            CostSpec::PowerSmoothing { .. } => vec![2.0; n],
            CostSpec::Custom(c) => (0..n).map(|t| c.coordinate_lipschitz(t)).collect::<Option<_>>()?,
        };
        Some(out)
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn evaluate_power_cost(c: &CostSpec, u: &[f64]) -> f64 {
    match c {
        CostSpec::PeakShaving { load } => u
            .iter()
            .zip(load)
            .map(|(u, l)| (u + l).abs())
            .fold(f64::NEG_INFINITY, f64::max),
        CostSpec::LoadBalancing { load } => u.iter().zip(load).map(|(u, l)| (u + l) * (u + l)).sum(),
        CostSpec::PowerRegulation { signal } => u.iter().zip(signal).map(|(u, r)| (u - r).abs()).sum(),
        CostSpec::EnergyArbitrage { p_buy, p_sell } => u
            .iter()
            .zip(p_buy.iter().zip(p_sell))
            .map(|(&u, (pb, ps))| pb * u.max(0.0) + ps * u.min(0.0))
            .sum(),
        CostSpec::PowerSmoothing { renewable } => (1..u.len())
            .map(|t| ((renewable[t] - u[t]) - (renewable[t - 1] - u[t - 1])).abs())
            .sum(),
        CostSpec::Custom(cost) => cost.evaluate(u),
    }
}

pub fn evaluate_energy_cost(c: &CostSpec, x: &[f64], params: &StorageParams, dynamics: &DynamicsMatrices) -> f64 {
    evaluate_power_cost(c, &phi_inverse(x, params, dynamics))
}

/// A subgradient of `c` at `u`. Where a coordinate sits exactly on a kink of
/// the family formula, the charging-side slope is used.
pub fn subgradient_power_cost(c: &CostSpec, u: &[f64]) -> Result<Vec<f64>, CostError> {
    let n = u.len();
    let g = match c {
        CostSpec::PeakShaving { load } => {
            let mut g = vec![0.0; n];
            let mut best: Option<(usize, f64)> = None;
            for (t, (u, l)) in u.iter().zip(load).enumerate() {
                let w = (u + l).abs();
                if best.is_none_or(|(_, b)| w > b) {
                    best = Some((t, w));
                }
            }
            if let Some((t, _)) = best {
                g[t] = sign(u[t] + load[t]);
            }
            g
        }
        CostSpec::LoadBalancing { load } => u.iter().zip(load).map(|(u, l)| 2.0 * (u + l)).collect(),
        CostSpec::PowerRegulation { signal } => u.iter().zip(signal).map(|(u, r)| sign(u - r)).collect(),
        CostSpec::EnergyArbitrage { p_buy, p_sell } => {
            (0..n).map(|t| if u[t] >= 0.0 { p_buy[t] } else { p_sell[t] }).collect()
        }
        CostSpec::PowerSmoothing { renewable } => {
            let mut g = vec![0.0; n];
            for t in 1..n {
                let d = (renewable[t] - u[t]) - (renewable[t - 1] - u[t - 1]);
                g[t] -= sign(d);
                g[t - 1] += sign(d);
            }
            g
        }
        CostSpec::Custom(cost) => cost
            .subgradient(u)
            .ok_or_else(|| CostError::NoSubgradientOracle(cost.name().to_string()))?,
    };
    Ok(g)
}

/// Subgradient of `x -> c(phi_inverse(x))` by the chain rule:
/// `(A^-1)^T * D(v) * dc(u)` with `v = A^-1 (x - b)`, `u = phi_inverse(x)` and
/// `D(v)` the slope of the inverse loss map (`1/eta_c` for `v >= 0`, `eta_d`
/// below zero).
pub fn subgradient_energy_cost(
    c: &CostSpec,
    x: &[f64],
    params: &StorageParams,
    dynamics: &DynamicsMatrices,
) -> Result<Vec<f64>, CostError> {
    let v = velocity(x, dynamics);
    let u = crate::transform::inverse_loss_map(&v, params);
    let du = subgradient_power_cost(c, &u)?;
    let scaled = nalgebra::DVector::from_iterator(
        v.len(),
        v.iter().zip(&du).map(|(&vt, g)| {
            let slope = if vt >= 0.0 { 1.0 / params.eta_c } else { params.eta_d };
            slope * g
        }),
    );
    Ok(dynamics.a_inverse.tr_mul(&scaled).iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Certification {
    Certified,
    NotCertified,
}

/// Which sufficient condition produced a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificationRule {
    /// Convex cost, nondecreasing in each coordinate on `[0, inf)`.
    MonotoneOnNonnegative,
    /// `p_buy_t / eta_c >= eta_d * p_sell_t` for every period.
    ArbitrageSlope,
    /// `eta_c = eta_d = 1`, so `phi_inverse` is affine.
    Lossless,
}

impl CertificationRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            CertificationRule::MonotoneOnNonnegative => "monotone_on_nonnegative",
            CertificationRule::ArbitrageSlope => "arbitrage_slope",
            CertificationRule::Lossless => "lossless",
        }
    }
}

/// Sound but incomplete: `NotCertified` says nothing about nonconvexity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvexityCertificate {
    pub verdict: Certification,
    pub rule: Option<CertificationRule>,
    /// Periods that broke the checked condition (empty when certified).
    pub failing_indices: Vec<usize>,
}

impl ConvexityCertificate {
    pub fn is_certified(&self) -> bool {
        self.verdict == Certification::Certified
    }

    fn certified(rule: CertificationRule) -> Self {
        Self {
            verdict: Certification::Certified,
            rule: Some(rule),
            failing_indices: Vec::new(),
        }
    }

    fn not_certified(failing_indices: Vec<usize>) -> Self {
        Self {
            verdict: Certification::NotCertified,
            rule: None,
            failing_indices,
        }
    }
}

pub fn certify_convexity(c: &CostSpec, params: &StorageParams) -> ConvexityCertificate {
    let failing = |v: &[f64], bad: fn(f64) -> bool| -> Vec<usize> {
        v.iter().enumerate().filter(|(_, &e)| bad(e)).map(|(t, _)| t).collect()
    };

    let (failures, rule) = match c {
        // Smoothing is convex in u but is never certified: its composition is
        // the standard counterexample family.
        CostSpec::PowerSmoothing { .. } => return ConvexityCertificate::not_certified(Vec::new()),
        CostSpec::PeakShaving { load } | CostSpec::LoadBalancing { load } => {
            (failing(load, |l| l < 0.0), CertificationRule::MonotoneOnNonnegative)
        }
        CostSpec::PowerRegulation { signal } => {
            (failing(signal, |r| r > 0.0), CertificationRule::MonotoneOnNonnegative)
        }
        CostSpec::EnergyArbitrage { p_buy, p_sell } => {
            let bad: Vec<usize> = (0..p_buy.len())
                .filter(|&t| p_buy[t] / params.eta_c < params.eta_d * p_sell[t])
                .collect();
            // Under this condition the composed cost is a sum of convex
            // one-dimensional functions of the velocity; no lossless bypass
            // applies when it fails, since the cost itself is then nonconvex.
            return if bad.is_empty() {
                ConvexityCertificate::certified(CertificationRule::ArbitrageSlope)
            } else {
                ConvexityCertificate::not_certified(bad)
            };
        }
        CostSpec::Custom(cost) => (
            (0..params.horizon)
                .filter(|&t| !cost.nondecreasing_on_nonnegative(t))
                .collect(),
            CertificationRule::MonotoneOnNonnegative,
        ),
    };

    if failures.is_empty() {
        ConvexityCertificate::certified(rule)
    } else if params.eta_c == 1.0 && params.eta_d == 1.0 {
        ConvexityCertificate::certified(CertificationRule::Lossless)
    } else {
        ConvexityCertificate::not_certified(failures)
    }
}

/// Outcome of a randomized search for midpoint-convexity violations of
/// `x -> c(phi_inverse(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub samples: usize,
    pub violations: usize,
    pub worst: Option<ProbeViolation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeViolation {
    pub x_a: Vec<f64>,
    pub x_b: Vec<f64>,
    pub theta: f64,
    /// `c(mix) - (theta c(x_a) + (1 - theta) c(x_b))`
    pub excess: f64,
}

impl ProbeReport {
    pub fn is_clean(&self) -> bool {
        self.violations == 0
    }
}

/// Default half-width of the sampling box: one period of unit power plus the
/// largest cost parameter, so kinks induced by the cost data are reachable.
pub fn default_probe_radius(c: &CostSpec, params: &StorageParams) -> f64 {
    let scale = c
        .parameter_vectors()
        .iter()
        .flat_map(|(_, v)| v.iter())
        .fold(0.0f64, |m, e| m.max(e.abs()));
    params.delta * (1.0 + scale)
}

/// Samples `x_a`, `x_b` uniformly in a box of [`default_probe_radius`] around
/// `b` and `theta` in `[0, 1]`, and counts triples that break midpoint
/// convexity by more than [`PROBE_TOL`].
pub fn midpoint_convexity_probe(c: &CostSpec, params: &StorageParams, samples: usize, seed: u64) -> ProbeReport {
    let dynamics = build_dynamics(params);
    let radius = default_probe_radius(c, params);
    midpoint_convexity_probe_around(c, params, &dynamics, &dynamics.b_offset, radius, samples, seed)
}

pub fn midpoint_convexity_probe_around(
    c: &CostSpec,
    params: &StorageParams,
    dynamics: &DynamicsMatrices,
    center: &[f64],
    radius: f64,
    samples: usize,
    seed: u64,
) -> ProbeReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ProbeReport {
        samples,
        violations: 0,
        worst: None,
    };
    let draw =
        |rng: &mut ChaCha8Rng| -> Vec<f64> { center.iter().map(|&m| m + rng.random_range(-radius..=radius)).collect() };
    for _ in 0..samples {
        let x_a = draw(&mut rng);
        let x_b = draw(&mut rng);
        let theta: f64 = rng.random_range(0.0..=1.0);
        let mid: Vec<f64> = x_a
            .iter()
            .zip(&x_b)
            .map(|(a, b)| theta * a + (1.0 - theta) * b)
            .collect();
        let lhs = evaluate_energy_cost(c, &mid, params, dynamics);
        let rhs = theta * evaluate_energy_cost(c, &x_a, params, dynamics)
            + (1.0 - theta) * evaluate_energy_cost(c, &x_b, params, dynamics);
        let excess = lhs - rhs;
        if excess > PROBE_TOL {
            report.violations += 1;
            if report.worst.as_ref().is_none_or(|w| excess > w.excess) {
                report.worst = Some(ProbeViolation {
                    x_a,
                    x_b,
                    theta,
                    excess,
                });
            }
        }
    }
    report
}
