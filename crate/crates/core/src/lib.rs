//! Convex reformulation of lossy energy storage scheduling.
//!
//! A lossy store with charging power `u` follows a nonlinear state-of-charge
//! recursion, and the set of feasible power profiles is generally nonconvex.
//! The map from power to energy profiles is a piecewise-affine bijection,
//! though, and the image of the feasible set under it is a polytope with an
//! explicit half-space description. Optimizing over energy profiles instead
//! of power profiles therefore gives a problem with a convex feasible set,
//! and for a broad class of costs a convex objective too.
//!
//! * [`model`]: parameters, bounds, dynamics matrices, simulation.
//! * [`transform`]: the bijection, membership tests, the energy polytope.
//! * [`costs`]: cost families, subgradients, convexity certification.
//! * [`solver`]: projected subgradient descent over the energy polytope.
//! * [`oracle`]: brute-force grid search over power profiles for validation.

pub mod costs;
pub mod model;
pub mod oracle;
pub mod problem;
pub mod solver;
pub mod transform;

pub use costs::{
    certify_convexity, evaluate_energy_cost, evaluate_power_cost, midpoint_convexity_probe,
    midpoint_convexity_probe_around, Certification, CertificationRule, ConvexityCertificate, CostError, CostSpec,
    CustomCost, ProbeReport, ProbeViolation,
};
pub use model::{
    build_dynamics, simulate, step, validate_params, Bounds, DynamicsMatrices, ModelError, StorageParams, StorageSystem,
};
pub use oracle::{
    brute_force_solve, compare, enumerate_feasible, GapReport, GapVerdict, GridSpec, OracleError, OracleSolution,
};
pub use problem::{Problem, ProblemError};
pub use solver::{
    project_onto_polytope, recover_power_profile, solve, Guarantee, InitialPoint, Solution, SolveError, SolveOptions,
    StepRule,
};
pub use transform::{
    build_energy_polytope, find_nonconvexity_witness, in_energy_polytope, in_energy_set_by_definition, in_power_set,
    phi, phi_inverse, velocity, EnergyPolytope, EnergyProfile, NonconvexityWitness, PowerProfile, Verdict,
    MEMBERSHIP_TOL,
};
