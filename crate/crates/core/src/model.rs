//! Storage parameters, bounds, and the linear-algebraic description of the
//! state-of-charge recursion.
//!
//! The stored energy evolves as
//!
//! ```text
//! x[t+1] = lambda * x[t] + delta * (eta_c * max(u[t], 0) + min(u[t], 0) / eta_d)
//! ```
//!
//! Energy profiles are stored 0-based as `(x_1, ..., x_T)`; the initial state
//! `x0` is data and lives only in [`StorageParams`].

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid efficiency: {name} = {value} is outside (0, 1]")]
    InvalidEfficiency { name: &'static str, value: f64 },
    #[error("invalid self-discharge rate: lambda = {0} is outside (0, 1]")]
    InvalidSelfDischarge(f64),
    #[error("invalid period duration: delta = {0} must be positive and finite")]
    InvalidDuration(f64),
    #[error("invalid initial state of charge: x0 = {0} must be finite")]
    InvalidInitialState(f64),
    #[error("invalid horizon: T = {0}, expected at least 1")]
    InvalidHorizon(usize),
    #[error("invalid bound: {0}")]
    InvalidBound(String),
    #[error("length mismatch for {what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
}

/// Physical description of a single lossy storage unit.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageParams {
    /// Charging efficiency, in (0, 1].
    pub eta_c: f64,
    /// Discharging efficiency, in (0, 1].
    pub eta_d: f64,
    /// Fraction of stored energy retained per period, in (0, 1].
    pub lambda: f64,
    /// Period duration in hours.
    pub delta: f64,
    /// State of charge at the start of the horizon.
    pub x0: f64,
    /// Number of periods `T`.
    pub horizon: usize,
}

/// Per-period box limits on power and energy.
///
/// `u_min_mag` holds discharge limits as nonnegative magnitudes, so the power
/// box is `[-u_min_mag, u_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub u_max: Vec<f64>,
    pub u_min_mag: Vec<f64>,
    pub x_max: Vec<f64>,
    pub x_min: Vec<f64>,
}

impl Bounds {
    /// Same limits in every period.
    pub fn uniform(horizon: usize, u_max: f64, u_min_mag: f64, x_min: f64, x_max: f64) -> Self {
        Self {
            u_max: vec![u_max; horizon],
            u_min_mag: vec![u_min_mag; horizon],
            x_max: vec![x_max; horizon],
            x_min: vec![x_min; horizon],
        }
    }
}

/// Parameters and bounds that passed validation.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageSystem {
    params: StorageParams,
    bounds: Bounds,
}

impl StorageSystem {
    pub fn new(params: StorageParams, bounds: Bounds) -> Result<Self, ModelError> {
        validate_params(params, bounds)
    }

    pub fn params(&self) -> &StorageParams {
        &self.params
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn horizon(&self) -> usize {
        self.params.horizon
    }

    pub fn dynamics(&self) -> DynamicsMatrices {
        build_dynamics(&self.params)
    }

    pub fn into_parts(self) -> (StorageParams, Bounds) {
        (self.params, self.bounds)
    }
}

fn in_unit_interval(v: f64) -> bool {
    v > 0.0 && v <= 1.0
}

/// Checks every parameter and bound invariant and returns the validated pair.
pub fn validate_params(params: StorageParams, bounds: Bounds) -> Result<StorageSystem, ModelError> {
    for (name, value) in [("eta_c", params.eta_c), ("eta_d", params.eta_d)] {
        if !in_unit_interval(value) {
            return Err(ModelError::InvalidEfficiency { name, value });
        }
    }
    if !in_unit_interval(params.lambda) {
        return Err(ModelError::InvalidSelfDischarge(params.lambda));
    }
    if !(params.delta > 0.0 && params.delta.is_finite()) {
        return Err(ModelError::InvalidDuration(params.delta));
    }
    if !params.x0.is_finite() {
        return Err(ModelError::InvalidInitialState(params.x0));
    }
    if params.horizon < 1 {
        return Err(ModelError::InvalidHorizon(params.horizon));
    }

    let t = params.horizon;
    for (what, v) in [
        ("u_max", &bounds.u_max),
        ("u_min", &bounds.u_min_mag),
        ("x_max", &bounds.x_max),
        ("x_min", &bounds.x_min),
    ] {
        if v.len() != t {
            return Err(ModelError::LengthMismatch {
                what,
                expected: t,
                actual: v.len(),
            });
        }
        if let Some(i) = v.iter().position(|e| !e.is_finite()) {
            return Err(ModelError::InvalidBound(format!("{what}[{i}] is not finite")));
        }
    }
    for (what, v) in [
        ("u_max", &bounds.u_max),
        ("u_min", &bounds.u_min_mag),
        ("x_min", &bounds.x_min),
    ] {
        if let Some(i) = v.iter().position(|&e| e < 0.0) {
            return Err(ModelError::InvalidBound(format!("{what}[{i}] = {} is negative", v[i])));
        }
    }
    if let Some(i) = (0..t).find(|&i| bounds.x_min[i] > bounds.x_max[i]) {
        return Err(ModelError::InvalidBound(format!(
            "x_min[{i}] = {} exceeds x_max[{i}] = {}",
            bounds.x_min[i], bounds.x_max[i]
        )));
    }

    Ok(StorageSystem { params, bounds })
}

/// The matrix `A`, offset `b` and the analytic inverse of `A` that turn the
/// recursion into `x = A * f(u) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsMatrices {
    pub a_matrix: DMatrix<f64>,
    pub b_offset: Vec<f64>,
    pub a_inverse: DMatrix<f64>,
}

impl DynamicsMatrices {
    pub fn horizon(&self) -> usize {
        self.b_offset.len()
    }
}

/// Builds `A[i][j] = delta * lambda^(i-j)` for `j <= i`, `b[t] = lambda^(t+1) * x0`
/// and `A^-1 = (I - lambda * L) / delta` with `L` the lower shift matrix.
pub fn build_dynamics(params: &StorageParams) -> DynamicsMatrices {
    let t = params.horizon;
    let lambda = params.lambda;
    let delta = params.delta;

    // powers[k] = lambda^k by running product
    let mut powers = Vec::with_capacity(t + 1);
    let mut p = 1.0;
    for _ in 0..=t {
        powers.push(p);
        p *= lambda;
    }

    let a_matrix = DMatrix::from_fn(t, t, |i, j| if j <= i { delta * powers[i - j] } else { 0.0 });
    let b_offset = (0..t).map(|k| powers[k + 1] * params.x0).collect();
    let a_inverse = DMatrix::from_fn(t, t, |i, j| {
        if i == j {
            1.0 / delta
        } else if i == j + 1 {
            -lambda / delta
        } else {
            0.0
        }
    });

    DynamicsMatrices {
        a_matrix,
        b_offset,
        a_inverse,
    }
}

/// One step of the state-of-charge recursion. Defined for any real inputs.
pub fn step(x_t: f64, u_t: f64, params: &StorageParams) -> f64 {
    params.lambda * x_t + params.delta * (params.eta_c * u_t.max(0.0) + u_t.min(0.0) / params.eta_d)
}

/// Iterates [`step`] from `x0` and returns `(x_1, ..., x_T)`.
pub fn simulate(u: &[f64], params: &StorageParams) -> Result<Vec<f64>, ModelError> {
    if u.len() != params.horizon {
        return Err(ModelError::LengthMismatch {
            what: "power profile",
            expected: params.horizon,
            actual: u.len(),
        });
    }
    let mut x = params.x0;
    Ok(u.iter()
        .map(|&ut| {
            x = step(x, ut, params);
            x
        })
        .collect())
}
