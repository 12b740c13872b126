//! Euclidean projection onto the feasible energy polytope.
//!
//! The polytope is `S_box ∩ S_inc` where `S_box` is the energy box and
//! `S_inc` bounds the increments `x[t] - lambda * x[t-1]` (`x[-1] = x0`).
//! Each increment constraint only touches two neighbouring coordinates, so
//! splitting them by the parity of `t` gives two sets made of disjoint slabs,
//! each with a closed-form projection. Dykstra's method cycles over the three
//! sets and converges to the projection onto their intersection.

use thiserror::Error;

use crate::transform::{EnergyPolytope, EnergyProfile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("projection did not converge in {cycles} cycles (residual {residual:e})")]
    NotConverged {
        cycles: usize,
        residual: f64,
        point: EnergyProfile,
    },
    #[error("feasible energy set looks empty: residual stalled at {residual:e} after {cycles} cycles")]
    EmptyIntersectionSuspected { cycles: usize, residual: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub point: EnergyProfile,
    pub cycles: usize,
    /// Largest constraint violation of `point`, in energy units.
    pub residual: f64,
}

/// Reusable buffers for repeated projections onto one polytope.
#[derive(Debug, Clone)]
pub struct DykstraProjector<'a> {
    polytope: &'a EnergyPolytope,
    increments: [Vec<f64>; 3],
    scratch: Vec<f64>,
}

impl<'a> DykstraProjector<'a> {
    pub fn new(polytope: &'a EnergyPolytope) -> Self {
        let n = polytope.horizon();
        Self {
            polytope,
            increments: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            scratch: vec![0.0; n],
        }
    }

    /// Largest violation of any box or increment constraint.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let p = self.polytope;
        let mut worst = 0.0f64;
        let mut prev = p.x0();
        for (t, &xt) in x.iter().enumerate() {
            worst = worst.max(p.x_lower[t] - xt).max(xt - p.x_upper[t]);
            let (lo, hi) = p.increment_bounds(t);
            let s = xt - p.lambda() * prev;
            worst = worst.max(lo - s).max(s - hi);
            prev = xt;
        }
        worst
    }

    fn project_box(&self, z: &mut [f64]) {
        let p = self.polytope;
        for (t, zt) in z.iter_mut().enumerate() {
            *zt = zt.clamp(p.x_lower[t], p.x_upper[t]);
        }
    }

    /// Projects onto the increment constraints with `t % 2 == parity`.
    fn project_slabs(&self, z: &mut [f64], parity: usize) {
        let p = self.polytope;
        let lambda = p.lambda();
        let norm2 = 1.0 + lambda * lambda;
        let mut t = parity;
        while t < z.len() {
            let (lo, hi) = p.increment_bounds(t);
            if t == 0 {
                let base = lambda * p.x0();
                z[0] = z[0].clamp(base + lo, base + hi);
            } else {
                let s = z[t] - lambda * z[t - 1];
                let d = if s > hi {
                    (s - hi) / norm2
                } else if s < lo {
                    (s - lo) / norm2
                } else {
                    0.0
                };
                z[t] -= d;
                z[t - 1] += lambda * d;
            }
            t += 2;
        }
    }

    pub fn project(&mut self, x: &[f64], tol: f64, max_cycles: usize) -> Result<Projection, ProjectionError> {
        let start = self.residual(x);
        if start <= tol {
            return Ok(Projection {
                point: EnergyProfile::from(x),
                cycles: 0,
                residual: start,
            });
        }

        for inc in &mut self.increments {
            inc.iter_mut().for_each(|e| *e = 0.0);
        }
        let mut y = x.to_vec();
        let mut history = Vec::with_capacity(max_cycles);
        let mut residual = start;
        for cycle in 1..=max_cycles {
            let mut change = 0.0f64;
            for set in 0..3 {
                let z = &mut self.scratch;
                for ((zt, yt), pt) in z.iter_mut().zip(&y).zip(&self.increments[set]) {
                    *zt = yt + pt;
                }
                let mut projected = std::mem::take(&mut self.scratch);
                match set {
                    0 => self.project_box(&mut projected),
                    1 => self.project_slabs(&mut projected, 0),
                    _ => self.project_slabs(&mut projected, 1),
                }
                for t in 0..y.len() {
                    let z_t = y[t] + self.increments[set][t];
                    self.increments[set][t] = z_t - projected[t];
                    change = change.max((projected[t] - y[t]).abs());
                    y[t] = projected[t];
                }
                self.scratch = projected;
            }
            residual = self.residual(&y);
            history.push(residual);
            if residual <= tol && change <= tol {
                return Ok(Projection {
                    point: EnergyProfile(y),
                    cycles: cycle,
                    residual,
                });
            }
        }

        let tail_start = history[(max_cycles * 9) / 10];
        if tail_start - residual < 1e-12 {
            Err(ProjectionError::EmptyIntersectionSuspected {
                cycles: max_cycles,
                residual,
            })
        } else {
            Err(ProjectionError::NotConverged {
                cycles: max_cycles,
                residual,
                point: EnergyProfile(y),
            })
        }
    }
}

/// Euclidean projection of `x` onto the polytope, to within `tol`.
pub fn project_onto_polytope(
    x: &[f64],
    polytope: &EnergyPolytope,
    tol: f64,
    max_cycles: usize,
) -> Result<Projection, ProjectionError> {
    DykstraProjector::new(polytope).project(x, tol, max_cycles)
}
