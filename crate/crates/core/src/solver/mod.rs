//! Minimizes `c(phi_inverse(x))` over the feasible energy polytope with a
//! projected subgradient method.
//!
//! Steps are taken along the normalized subgradient, so the step size is a
//! distance in energy units. The best iterate is tracked throughout, and at
//! every doubling of the iteration count the step-weighted average of the
//! iterates since the previous doubling is tried as well. The run stops when
//! the best objective improves by less than `objective_tolerance` over a
//! doubling period.

mod projection;

pub use projection::{project_onto_polytope, DykstraProjector, Projection, ProjectionError};

use thiserror::Error;

use crate::costs::{certify_convexity, evaluate_energy_cost, subgradient_energy_cost, ConvexityCertificate, CostError};
use crate::problem::Problem;
use crate::transform::{
    build_energy_polytope, in_energy_polytope, phi_inverse, EnergyPolytope, EnergyProfile, PowerProfile,
};

/// First iteration at which the stall test runs.
const FIRST_CHECKPOINT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Fixed step length. `None` uses the default scale.
    Constant(Option<f64>),
    /// `a / sqrt(k)`. `None` uses the default scale for `a`.
    Diminishing(Option<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialPoint {
    /// Start from `b`, the energy profile of zero power.
    Offset,
    /// Start from the centre of the energy box.
    BoxMidpoint,
    UserSupplied(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub max_iterations: usize,
    pub step_rule: StepRule,
    /// Energy units.
    pub projection_tolerance: f64,
    pub max_projection_cycles: usize,
    /// Cost units, relative to `max(1, |best|)`.
    pub objective_tolerance: f64,
    pub seed: u64,
    pub initial_point: InitialPoint,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1 << 22,
            step_rule: StepRule::Diminishing(None),
            projection_tolerance: 1e-11,
            max_projection_cycles: 100_000,
            objective_tolerance: 1e-6,
            seed: 0,
            initial_point: InitialPoint::Offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Guarantee {
    /// The objective is certified convex, so the result approximates the global optimum.
    GlobalOptimumClaimed,
    BestEffort,
}

impl Guarantee {
    pub fn as_str(&self) -> &'static str {
        match self {
            Guarantee::GlobalOptimumClaimed => "global_optimum_claimed",
            Guarantee::BestEffort => "best_effort",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x_star: EnergyProfile,
    /// Always `phi_inverse(x_star)`.
    pub u_star: PowerProfile,
    pub objective: f64,
    pub iterations_used: usize,
    /// `(iteration, best objective so far)` recorded whenever the best improves.
    pub best_objective_trace: Vec<(usize, f64)>,
    /// Largest half-space violation of `x_star`.
    pub feasibility_residual: f64,
    pub certificate: ConvexityCertificate,
    pub guarantee: Guarantee,
    pub converged: bool,
    pub instance_fingerprint: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("the feasible energy set is empty")]
    InfeasibleProblem,
    #[error("iteration limit reached before the objective settled (best {:e})", .0.objective)]
    MaxIterationsExceeded(Box<Solution>),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("invalid solve options: {0}")]
    InvalidOptions(String),
}

impl SolveError {
    /// The best iterate, when the error still carries one.
    pub fn solution(&self) -> Option<&Solution> {
        match self {
            SolveError::MaxIterationsExceeded(s) => Some(s),
            _ => None,
        }
    }
}

fn check_options(options: &SolveOptions, horizon: usize) -> Result<(), SolveError> {
    let bad = |m: &str| Err(SolveError::InvalidOptions(m.to_string()));
    if options.max_iterations < 1 {
        return bad("max_iterations must be at least 1");
    }
    if options.max_projection_cycles < 1 {
        return bad("max_projection_cycles must be at least 1");
    }
    let positive = |v: f64| v > 0.0;
    if !positive(options.projection_tolerance) || !positive(options.objective_tolerance) {
        return bad("tolerances must be positive");
    }
    match options.step_rule {
        StepRule::Constant(Some(a)) | StepRule::Diminishing(Some(a)) if !(a > 0.0 && a.is_finite()) => {
            return bad("step size must be positive and finite")
        }
        _ => {}
    }
    if let InitialPoint::UserSupplied(x) = &options.initial_point {
        if x.len() != horizon {
            return bad("initial point length does not match the horizon");
        }
    }
    Ok(())
}

/// `phi_inverse(x_star)`.
pub fn recover_power_profile(x_star: &[f64], problem: &Problem) -> PowerProfile {
    phi_inverse(x_star, problem.system.params(), &problem.system.dynamics())
}

struct Run<'a> {
    problem: &'a Problem,
    polytope: &'a EnergyPolytope,
    projector: DykstraProjector<'a>,
    options: &'a SolveOptions,
}

impl Run<'_> {
    fn objective(&self, x: &[f64]) -> f64 {
        evaluate_energy_cost(
            &self.problem.cost,
            x,
            self.problem.system.params(),
            &self.polytope.dynamics,
        )
    }

    fn project(&mut self, x: &[f64]) -> Result<Vec<f64>, SolveError> {
        let p = self
            .projector
            .project(x, self.options.projection_tolerance, self.options.max_projection_cycles)?;
        Ok(p.point.into_inner())
    }
}

pub fn solve(problem: &Problem, options: &SolveOptions) -> Result<Solution, SolveError> {
    let n = problem.system.horizon();
    check_options(options, n)?;
    let params = problem.system.params();
    let dynamics = problem.system.dynamics();
    let polytope = build_energy_polytope(&problem.system, &dynamics);
    let ranges = polytope.coordinate_ranges().ok_or(SolveError::InfeasibleProblem)?;
    let certificate = certify_convexity(&problem.cost, params);

    let diameter = ranges.iter().map(|(lo, hi)| (hi - lo) * (hi - lo)).sum::<f64>().sqrt();
    let (scale, diminishing) = match options.step_rule {
        StepRule::Constant(a) => (a.unwrap_or(diameter / 10.0), false),
        StepRule::Diminishing(a) => (a.unwrap_or(diameter / 10.0), true),
    };

    let mut run = Run {
        problem,
        polytope: &polytope,
        projector: DykstraProjector::new(&polytope),
        options,
    };

    let start = match &options.initial_point {
        InitialPoint::Offset => dynamics.b_offset.clone(),
        InitialPoint::BoxMidpoint => polytope
            .x_lower
            .iter()
            .zip(&polytope.x_upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect(),
        InitialPoint::UserSupplied(x) => x.clone(),
    };
    let mut x = run.project(&start)?;
    let mut best_x = x.clone();
    let mut best = run.objective(&x);
    let mut trace = vec![(0, best)];

    let mut tail_sum = vec![0.0; n];
    let mut tail_weight = 0.0;
    let mut best_at_checkpoint = best;
    let mut next_checkpoint = FIRST_CHECKPOINT;
    let mut converged = false;
    let mut iterations = 0;

    // A single-point polytope has nothing to search.
    if diameter > 0.0 {
        for k in 1..=options.max_iterations {
            iterations = k;
            let g = subgradient_energy_cost(&problem.cost, &x, params, &dynamics)?;
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                converged = true;
                break;
            }
            let step = if diminishing { scale / (k as f64).sqrt() } else { scale };
            let trial: Vec<f64> = x.iter().zip(&g).map(|(x, g)| x - step * g / norm).collect();
            x = run.project(&trial)?;

            let value = run.objective(&x);
            if value < best {
                best = value;
                best_x.clone_from(&x);
                trace.push((k, best));
            }
            for (s, xt) in tail_sum.iter_mut().zip(&x) {
                *s += step * xt;
            }
            tail_weight += step;

            if k == next_checkpoint {
                let avg: Vec<f64> = tail_sum.iter().map(|s| s / tail_weight).collect();
                // a convex combination of members, up to rounding
                let avg = run.project(&avg)?;
                let value = run.objective(&avg);
                if value < best {
                    best = value;
                    best_x = avg;
                    trace.push((k, best));
                }
                let improvement = best_at_checkpoint - best;
                if improvement <= options.objective_tolerance * best.abs().max(1.0) {
                    converged = true;
                    break;
                }
                best_at_checkpoint = best;
                tail_sum.iter_mut().for_each(|s| *s = 0.0);
                tail_weight = 0.0;
                next_checkpoint *= 2;
            }
        }
    } else {
        converged = true;
    }

    let u_star = phi_inverse(&best_x, params, &dynamics);
    let feasibility_residual = in_energy_polytope(&best_x, &polytope, 0.0).residual();
    let guarantee = if certificate.is_certified() {
        Guarantee::GlobalOptimumClaimed
    } else {
        Guarantee::BestEffort
    };
    let solution = Solution {
        x_star: EnergyProfile(best_x),
        u_star,
        objective: best,
        iterations_used: iterations,
        best_objective_trace: trace,
        feasibility_residual,
        certificate,
        guarantee,
        converged,
        instance_fingerprint: problem.fingerprint(),
    };
    if converged {
        Ok(solution)
    } else {
        Err(SolveError::MaxIterationsExceeded(Box::new(solution)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::CostSpec;
    use crate::model::fixtures::*;
    use crate::model::{Bounds, StorageParams, StorageSystem};
    use crate::transform::{in_power_set, MEMBERSHIP_TOL};

    fn two_period_problem(cost: CostSpec) -> Problem {
        Problem::new(two_period_system(), cost).unwrap()
    }

    #[test]
    fn two_period_arbitrage_sells_everything() {
        let p = two_period_problem(CostSpec::EnergyArbitrage {
            p_buy: vec![1.0, 1.0],
            p_sell: vec![1.0, 1.0],
        });
        let s = solve(&p, &SolveOptions::default()).unwrap();
        // discharging 0.75 of stored energy at eta_d = 0.5 delivers 0.375
        assert!((s.objective + 0.375).abs() < 1e-4, "{}", s.objective);
        assert_eq!(s.guarantee, Guarantee::GlobalOptimumClaimed);
        let sys = &p.system;
        assert!(in_power_set(&s.u_star, sys, &sys.dynamics(), 1e-6).is_member());
    }

    #[test]
    fn zero_power_storage_stays_at_offset() {
        let sys = StorageSystem::new(two_period_params(), Bounds::uniform(2, 0.0, 0.0, 0.0, 1.0)).unwrap();
        let p = Problem::new(sys, CostSpec::PeakShaving { load: vec![0.3, 0.7] }).unwrap();
        let s = solve(&p, &SolveOptions::default()).unwrap();
        assert!((s.x_star[0] - 0.75).abs() < 1e-9 && (s.x_star[1] - 0.75).abs() < 1e-9);
        assert!((s.objective - 0.7).abs() < 1e-9);
        assert!(s.u_star.iter().all(|u| u.abs() < 1e-8));
    }

    #[test]
    fn empty_polytope_is_infeasible() {
        let sys = StorageSystem::new(
            StorageParams {
                x0: 10.0,
                ..two_period_params()
            },
            Bounds::uniform(2, 1.0, 0.1, 0.0, 1.0),
        )
        .unwrap();
        let p = Problem::new(sys, CostSpec::LoadBalancing { load: vec![0.0, 0.0] }).unwrap();
        assert_eq!(solve(&p, &SolveOptions::default()), Err(SolveError::InfeasibleProblem));
    }

    #[test]
    fn best_trace_is_nonincreasing() {
        let p = two_period_problem(CostSpec::PeakShaving { load: vec![0.4, 0.375] });
        let s = solve(&p, &SolveOptions::default()).unwrap();
        assert!(s
            .best_objective_trace
            .windows(2)
            .all(|w| w[1].1 <= w[0].1 && w[1].0 >= w[0].0));
        assert_eq!(s.best_objective_trace.last().unwrap().1, s.objective);
    }

    #[test]
    fn smoothing_is_best_effort() {
        let p = two_period_problem(CostSpec::PowerSmoothing {
            renewable: vec![0.0, 1.0],
        });
        let s = match solve(&p, &SolveOptions::default()) {
            Ok(s) => s,
            Err(e) => e.solution().unwrap().clone(),
        };
        assert_eq!(s.guarantee, Guarantee::BestEffort);
        let sys = &p.system;
        assert!(in_power_set(&s.u_star, sys, &sys.dynamics(), 1e-6).is_member());
    }

    #[test]
    fn iteration_cap_reports_best_iterate() {
        let p = two_period_problem(CostSpec::LoadBalancing { load: vec![0.4, 0.375] });
        let opts = SolveOptions {
            max_iterations: 10,
            ..SolveOptions::default()
        };
        let err = solve(&p, &opts).unwrap_err();
        let s = err.solution().unwrap();
        assert_eq!(s.iterations_used, 10);
        assert!(!s.converged);
        assert!(
            in_energy_polytope(&s.x_star, &build_energy_polytope(&p.system, &p.system.dynamics()), 1e-9).is_member()
        );
    }

    #[test]
    fn invalid_options_rejected() {
        let p = two_period_problem(CostSpec::LoadBalancing { load: vec![0.0, 0.0] });
        let opts = SolveOptions {
            step_rule: StepRule::Constant(Some(-1.0)),
            ..SolveOptions::default()
        };
        assert!(matches!(solve(&p, &opts), Err(SolveError::InvalidOptions(_))));
        let opts = SolveOptions {
            initial_point: InitialPoint::UserSupplied(vec![0.0]),
            ..SolveOptions::default()
        };
        assert!(matches!(solve(&p, &opts), Err(SolveError::InvalidOptions(_))));
    }

    #[test]
    fn recover_power_profile_examples() {
        let p = two_period_problem(CostSpec::LoadBalancing { load: vec![0.0, 0.0] });
        assert_eq!(recover_power_profile(&[0.75, 0.75], &p).0, vec![0.0, 0.0]);
        assert_eq!(recover_power_profile(&[1.0, 1.0], &p).0, vec![0.5, 0.0]);
        assert_eq!(recover_power_profile(&[0.5, 1.0], &p).0, vec![-0.125, 1.0]);
    }

    #[test]
    fn starting_points_agree() {
        let p = two_period_problem(CostSpec::PowerRegulation {
            signal: vec![-0.3, -0.3],
        });
        let a = solve(&p, &SolveOptions::default()).unwrap();
        for init in [InitialPoint::BoxMidpoint, InitialPoint::UserSupplied(vec![5.0, -5.0])] {
            let opts = SolveOptions {
                initial_point: init,
                ..SolveOptions::default()
            };
            let b = solve(&p, &opts).unwrap();
            assert!((a.objective - b.objective).abs() < 1e-4);
        }
        assert!((a.objective - 0.225).abs() < 1e-4, "{}", a.objective);
        let _ = MEMBERSHIP_TOL;
    }
}
