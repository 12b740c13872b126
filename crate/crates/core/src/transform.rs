//! The piecewise-affine bijection between power and energy profiles.
//!
//! `phi(u) = A * f(u) + b` where `f` applies the charging/discharging losses
//! per period. Its inverse is `phi_inverse(x) = f_inv(A^-1 * (x - b))`, and the
//! intermediate `v = A^-1 * (x - b)` (the "velocity") is where the power limits
//! become a plain box: `v in [-u_min / eta_d, eta_c * u_max]`. That box together
//! with the energy box is the convex polytope of feasible energy profiles, even
//! though the feasible power set itself is generally nonconvex.

use std::fmt;
use std::ops::Deref;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{DynamicsMatrices, StorageParams, StorageSystem};

/// Absolute tolerance used for membership tests unless a caller overrides it.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Seed used by [`find_nonconvexity_witness`] callers that do not care.
pub const DEFAULT_WITNESS_SEED: u64 = 0x005e_ed0f_u64;

macro_rules! profile_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Default)]
        pub struct $name(pub Vec<f64>);

        impl $name {
            pub fn zeros(len: usize) -> Self {
                Self(vec![0.0; len])
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }
        }

        impl Deref for $name {
            type Target = [f64];

            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }

        impl From<&[f64]> for $name {
            fn from(v: &[f64]) -> Self {
                Self(v.to_vec())
            }
        }
    };
}

profile_newtype!(
    /// Signed charging power per period; positive charges, negative discharges.
    PowerProfile
);
profile_newtype!(
    /// State of charge at the end of each period, `(x_1, ..., x_T)`.
    EnergyProfile
);

/// `eta_c * u+ + u- / eta_d`, elementwise.
pub fn loss_map(u: &[f64], params: &StorageParams) -> Vec<f64> {
    u.iter()
        .map(|&ut| params.eta_c * ut.max(0.0) + ut.min(0.0) / params.eta_d)
        .collect()
}

/// `v+ / eta_c + eta_d * v-`, elementwise. Exact inverse of [`loss_map`].
pub fn inverse_loss_map(v: &[f64], params: &StorageParams) -> PowerProfile {
    PowerProfile(
        v.iter()
            .map(|&vt| vt.max(0.0) / params.eta_c + params.eta_d * vt.min(0.0))
            .collect(),
    )
}

pub fn phi(u: &[f64], params: &StorageParams, dynamics: &DynamicsMatrices) -> EnergyProfile {
    let f = DVector::from_vec(loss_map(u, params));
    let af = &dynamics.a_matrix * f;
    EnergyProfile(af.iter().zip(&dynamics.b_offset).map(|(a, b)| a + b).collect())
}

/// `A^-1 * (x - b)`.
pub fn velocity(x: &[f64], dynamics: &DynamicsMatrices) -> Vec<f64> {
    let shifted = DVector::from_iterator(x.len(), x.iter().zip(&dynamics.b_offset).map(|(x, b)| x - b));
    (&dynamics.a_inverse * shifted).iter().copied().collect()
}

pub fn phi_inverse(x: &[f64], params: &StorageParams, dynamics: &DynamicsMatrices) -> PowerProfile {
    inverse_loss_map(&velocity(x, dynamics), params)
}

/// Which inequality a profile failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    PowerUpper,
    PowerLower,
    EnergyUpper,
    EnergyLower,
    VelocityUpper,
    VelocityLower,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Constraint::PowerUpper => "power upper bound",
            Constraint::PowerLower => "power lower bound",
            Constraint::EnergyUpper => "energy upper bound",
            Constraint::EnergyLower => "energy lower bound",
            Constraint::VelocityUpper => "velocity upper bound",
            Constraint::VelocityLower => "velocity lower bound",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub constraint: Constraint,
    /// 0-based period index.
    pub period: usize,
    pub value: f64,
    pub limit: f64,
}

impl Violation {
    pub fn amount(&self) -> f64 {
        (self.value - self.limit).abs()
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} violated in period {}: {} vs limit {}",
            self.constraint, self.period, self.value, self.limit
        )
    }
}

/// Every violated constraint, in checking order. Empty means member.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Verdict {
    pub violations: Vec<Violation>,
}

impl Verdict {
    pub fn is_member(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first(&self) -> Option<&Violation> {
        self.violations.first()
    }

    /// Largest violation amount, zero for members.
    pub fn residual(&self) -> f64 {
        self.violations.iter().map(Violation::amount).fold(0.0, f64::max)
    }

    fn check_box(
        &mut self,
        values: &[f64],
        lower: impl Fn(usize) -> f64,
        upper: impl Fn(usize) -> f64,
        kinds: (Constraint, Constraint),
        tol: f64,
    ) {
        for (t, &value) in values.iter().enumerate() {
            let (lo, hi) = (lower(t), upper(t));
            if value > hi + tol {
                self.violations.push(Violation {
                    constraint: kinds.1,
                    period: t,
                    value,
                    limit: hi,
                });
            } else if value < lo - tol {
                self.violations.push(Violation {
                    constraint: kinds.0,
                    period: t,
                    value,
                    limit: lo,
                });
            }
        }
    }
}

/// Membership in the (generally nonconvex) set of feasible power profiles.
/// Power limits are checked before the induced energy profile.
pub fn in_power_set(u: &[f64], system: &StorageSystem, dynamics: &DynamicsMatrices, tol: f64) -> Verdict {
    let bounds = system.bounds();
    let mut verdict = Verdict::default();
    verdict.check_box(
        u,
        |t| -bounds.u_min_mag[t],
        |t| bounds.u_max[t],
        (Constraint::PowerLower, Constraint::PowerUpper),
        tol,
    );
    let x = phi(u, system.params(), dynamics);
    verdict.check_box(
        &x,
        |t| bounds.x_min[t],
        |t| bounds.x_max[t],
        (Constraint::EnergyLower, Constraint::EnergyUpper),
        tol,
    );
    verdict
}

/// Membership of an energy profile using the definition directly: energy box
/// plus power limits on `phi_inverse(x)`.
pub fn in_energy_set_by_definition(
    x: &[f64],
    system: &StorageSystem,
    dynamics: &DynamicsMatrices,
    tol: f64,
) -> Verdict {
    let bounds = system.bounds();
    let mut verdict = Verdict::default();
    verdict.check_box(
        x,
        |t| bounds.x_min[t],
        |t| bounds.x_max[t],
        (Constraint::EnergyLower, Constraint::EnergyUpper),
        tol,
    );
    let u = phi_inverse(x, system.params(), dynamics);
    verdict.check_box(
        &u,
        |t| -bounds.u_min_mag[t],
        |t| bounds.u_max[t],
        (Constraint::PowerLower, Constraint::PowerUpper),
        tol,
    );
    verdict
}

/// Half-space description of the feasible energy profiles: an energy box and a
/// box on the velocity `A^-1 * (x - b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyPolytope {
    pub v_lower: Vec<f64>,
    pub v_upper: Vec<f64>,
    pub x_lower: Vec<f64>,
    pub x_upper: Vec<f64>,
    pub dynamics: DynamicsMatrices,
    lambda: f64,
    delta: f64,
    x0: f64,
}

pub fn build_energy_polytope(system: &StorageSystem, dynamics: &DynamicsMatrices) -> EnergyPolytope {
    let p = system.params();
    let b = system.bounds();
    EnergyPolytope {
        v_lower: b.u_min_mag.iter().map(|m| -m / p.eta_d).collect(),
        v_upper: b.u_max.iter().map(|m| p.eta_c * m).collect(),
        x_lower: b.x_min.clone(),
        x_upper: b.x_max.clone(),
        dynamics: dynamics.clone(),
        lambda: p.lambda,
        delta: p.delta,
        x0: p.x0,
    }
}

impl EnergyPolytope {
    pub fn horizon(&self) -> usize {
        self.x_lower.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    /// Bounds on `x[t] - lambda * x[t-1]` (with `x[-1] = x0`), i.e. the
    /// velocity box scaled by the period length.
    pub fn increment_bounds(&self, t: usize) -> (f64, f64) {
        (self.delta * self.v_lower[t], self.delta * self.v_upper[t])
    }

    pub fn velocity(&self, x: &[f64]) -> Vec<f64> {
        velocity(x, &self.dynamics)
    }

    /// Exact per-period range `[min x_t, max x_t]` over the polytope, or
    /// `None` when the polytope is empty.
    ///
    /// The constraints form a chain in time, so a forward sweep gives the
    /// states reachable from `x0` and a backward sweep the states from which
    /// the rest of the horizon stays feasible; their intersection is the
    /// coordinate projection of the polytope.
    pub fn coordinate_ranges(&self) -> Option<Vec<(f64, f64)>> {
        let n = self.horizon();
        let mut forward = Vec::with_capacity(n);
        let (mut lo, mut hi) = (self.x0, self.x0);
        for t in 0..n {
            let (dlo, dhi) = self.increment_bounds(t);
            lo = (self.lambda * lo + dlo).max(self.x_lower[t]);
            hi = (self.lambda * hi + dhi).min(self.x_upper[t]);
            if lo > hi {
                return None;
            }
            forward.push((lo, hi));
        }
        let mut ranges = forward;
        let (mut next_lo, mut next_hi) = ranges[n - 1];
        for t in (0..n - 1).rev() {
            let (dlo, dhi) = self.increment_bounds(t + 1);
            let lo = ranges[t].0.max((next_lo - dhi) / self.lambda);
            let hi = ranges[t].1.min((next_hi - dlo) / self.lambda);
            // rounding can cross the ends of a degenerate range
            let (lo, hi) = if lo > hi { (hi.min(lo), hi.min(lo)) } else { (lo, hi) };
            ranges[t] = (lo, hi);
            next_lo = lo;
            next_hi = hi;
        }
        Some(ranges)
    }

    pub fn is_empty(&self) -> bool {
        self.coordinate_ranges().is_none()
    }
}

/// Half-space membership test.
pub fn in_energy_polytope(x: &[f64], polytope: &EnergyPolytope, tol: f64) -> Verdict {
    let mut verdict = Verdict::default();
    verdict.check_box(
        x,
        |t| polytope.x_lower[t],
        |t| polytope.x_upper[t],
        (Constraint::EnergyLower, Constraint::EnergyUpper),
        tol,
    );
    let v = polytope.velocity(x);
    verdict.check_box(
        &v,
        |t| polytope.v_lower[t],
        |t| polytope.v_upper[t],
        (Constraint::VelocityLower, Constraint::VelocityUpper),
        tol,
    );
    verdict
}

/// Two feasible power profiles whose mixture is infeasible.
#[derive(Debug, Clone, PartialEq)]
pub struct NonconvexityWitness {
    pub u_a: PowerProfile,
    pub u_b: PowerProfile,
    pub theta: f64,
    pub mixture: PowerProfile,
    pub violated: Violation,
}

fn mix(a: &[f64], b: &[f64], theta: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(a, b)| theta * a + (1.0 - theta) * b).collect()
}

fn check_pair(
    u_a: &[f64],
    u_b: &[f64],
    theta: f64,
    system: &StorageSystem,
    dynamics: &DynamicsMatrices,
) -> Option<NonconvexityWitness> {
    if !in_power_set(u_a, system, dynamics, MEMBERSHIP_TOL).is_member()
        || !in_power_set(u_b, system, dynamics, MEMBERSHIP_TOL).is_member()
    {
        return None;
    }
    let mixture = mix(u_a, u_b, theta);
    let verdict = in_power_set(&mixture, system, dynamics, MEMBERSHIP_TOL);
    let violated = *verdict.first()?;
    Some(NonconvexityWitness {
        u_a: PowerProfile::from(u_a),
        u_b: PowerProfile::from(u_b),
        theta,
        mixture: PowerProfile(mixture),
        violated,
    })
}

/// Fill-early profile versus discharge-then-fill profile on periods
/// `(s, s + 1)`, zero power elsewhere.
fn patterned_witness(system: &StorageSystem, dynamics: &DynamicsMatrices) -> Option<NonconvexityWitness> {
    let p = system.params();
    let bounds = system.bounds();
    let n = p.horizon;
    let mut state = p.x0;
    for s in 0..n.saturating_sub(1) {
        let mut u_a = vec![0.0; n];
        let mut u_b = vec![0.0; n];

        let fill = (bounds.x_max[s] - p.lambda * state) / (p.delta * p.eta_c);
        u_a[s] = fill.clamp(0.0, bounds.u_max[s]);

        u_b[s + 1] = bounds.u_max[s + 1];
        let target = (bounds.x_max[s + 1] - p.delta * p.eta_c * bounds.u_max[s + 1]) / p.lambda;
        let v = (target - p.lambda * state) / p.delta;
        u_b[s] = inverse_loss_map(&[v], p)[0].clamp(-bounds.u_min_mag[s], bounds.u_max[s]);

        if let Some(w) = check_pair(&u_a, &u_b, 0.5, system, dynamics) {
            return Some(w);
        }
        state = crate::model::step(state, 0.0, p);
    }
    None
}

/// Searches for two feasible power profiles whose midpoint is infeasible.
///
/// A structured fill/discharge pattern is tried first; after that, `attempts`
/// uniform draws from the power box are made and each feasible draw is paired
/// with earlier feasible draws that differ in sign in some period. Returns
/// `None` when nothing is found, which is the expected outcome for lossless or
/// sign-restricted storage.
pub fn find_nonconvexity_witness(
    system: &StorageSystem,
    dynamics: &DynamicsMatrices,
    attempts: usize,
    seed: u64,
) -> Option<NonconvexityWitness> {
    patterned_witness(system, dynamics).or_else(|| random_witness(system, dynamics, attempts, seed))
}

fn random_witness(
    system: &StorageSystem,
    dynamics: &DynamicsMatrices,
    attempts: usize,
    seed: u64,
) -> Option<NonconvexityWitness> {
    const POOL: usize = 64;
    let bounds = system.bounds();
    let n = system.horizon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<Vec<f64>> = Vec::with_capacity(POOL);
    for i in 0..attempts {
        let u: Vec<f64> = (0..n)
            .map(|t| {
                let (lo, hi) = (-bounds.u_min_mag[t], bounds.u_max[t]);
                if hi > lo {
                    rng.random_range(lo..=hi)
                } else {
                    lo
                }
            })
            .collect();
        if !in_power_set(&u, system, dynamics, MEMBERSHIP_TOL).is_member() {
            continue;
        }
        for other in &pool {
            let opposite = u.iter().zip(other).any(|(a, b)| a * b < 0.0);
            if opposite {
                if let Some(w) = check_pair(other, &u, 0.5, system, dynamics) {
                    return Some(w);
                }
            }
        }
        if pool.len() < POOL {
            pool.push(u);
        } else {
            pool[i % POOL] = u;
        }
    }
    None
}
