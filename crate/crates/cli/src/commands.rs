//! The four verbs. Each writes its artifacts into the output directory and
//! returns the process exit code.

use std::fs;
use std::path::{Path, PathBuf};

use ess_reform::solver::ProjectionError;
use ess_reform::{
    brute_force_solve, certify_convexity, compare, find_nonconvexity_witness, in_power_set, midpoint_convexity_probe,
    GapVerdict, GridSpec, Guarantee, OracleError, Problem, Solution, SolveError,
};
use thiserror::Error;

use crate::report::{
    write_json, write_set_csv, write_trace_csv, CertificateReport, CertifyReport, FailureReport, OracleReport,
    ProbeSummary, SolutionReport, WitnessReport,
};
use crate::scenario::{Output, Scenario, ScenarioError};
use crate::sets::{
    check_request, probe_energy_samples, probe_power_samples, sample_energy_set, sample_power_set, SampleError,
};

pub mod exit {
    pub const OK: u8 = 0;
    /// An oracle check ran and the gap exceeded its tolerance.
    pub const CHECK_FAILED: u8 = 1;
    pub const INFEASIBLE: u8 = 2;
    pub const NOT_CONVERGED: u8 = 3;
    /// A result was produced but carries no optimality guarantee.
    pub const BEST_EFFORT: u8 = 4;
    pub const USAGE: u8 = 64;
    pub const SCHEMA: u8 = 65;
    pub const IO: u8 = 74;
}

pub const SOLUTION_FILE: &str = "solution.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const CERTIFICATE_FILE: &str = "certificate.json";
pub const ORACLE_FILE: &str = "oracle.json";
pub const POWER_SET_FILE: &str = "power_set.csv";
pub const ENERGY_SET_FILE: &str = "energy_set.csv";
pub const SETS_SUMMARY_FILE: &str = "sets.json";

/// Samples drawn by the convexity probe of `certify`.
pub const CERTIFY_PROBE_SAMPLES: usize = 100_000;
/// Random draws for the power-set nonconvexity search of `certify`.
pub const WITNESS_ATTEMPTS: usize = 10_000;
/// Member pairs drawn by the midpoint probes of `sample-sets`.
pub const SET_PROBE_PAIRS: usize = 10_000;
pub const DEFAULT_SET_RESOLUTION: usize = 201;
/// Allowed `|solver - oracle|` for `oracle-check`.
pub const ORACLE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error("{0}")]
    Usage(String),
    #[error("invalid solve settings: {0}")]
    Options(String),
    #[error("cannot write {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Scenario(ScenarioError::Io { .. }) | CliError::Io { .. } => exit::IO,
            CliError::Scenario(_) | CliError::Options(_) => exit::SCHEMA,
            CliError::Sample(_) | CliError::Usage(_) => exit::USAGE,
        }
    }
}

/// Command-line settings shared by the verbs. `None` falls back to the
/// scenario file, then to the built-in default.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub resolution: Option<usize>,
}

impl RunConfig {
    fn seed(&self, scenario: &Scenario) -> u64 {
        self.seed.unwrap_or_else(|| scenario.solve_options().seed)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn io_err(path: &Path, e: impl ToString) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn json_out<T: serde::Serialize>(cfg: &RunConfig, name: &str, value: &T) -> Result<(), CliError> {
    let path = cfg.path(name);
    write_json(&path, value).map_err(|e| io_err(&path, e))
}

fn prepare(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out).map_err(|e| io_err(&cfg.out, e))
}

/// What the solver produced, already mapped to an exit code.
enum SolveOutcome {
    Solved(Box<Solution>, u8),
    Failed {
        status: &'static str,
        message: String,
        code: u8,
    },
}

fn run_solver(problem: &Problem, scenario: &Scenario, cfg: &RunConfig) -> Result<SolveOutcome, CliError> {
    let mut options = scenario.solve_options();
    options.seed = cfg.seed(scenario);
    Ok(match ess_reform::solve(problem, &options) {
        Ok(s) => {
            let code = match s.guarantee {
                Guarantee::GlobalOptimumClaimed => exit::OK,
                Guarantee::BestEffort => exit::BEST_EFFORT,
            };
            SolveOutcome::Solved(Box::new(s), code)
        }
        Err(SolveError::MaxIterationsExceeded(s)) => SolveOutcome::Solved(s, exit::NOT_CONVERGED),
        Err(
            e @ (SolveError::InfeasibleProblem
            | SolveError::Projection(ProjectionError::EmptyIntersectionSuspected { .. })),
        ) => SolveOutcome::Failed {
            status: "infeasible",
            message: e.to_string(),
            code: exit::INFEASIBLE,
        },
        Err(e @ SolveError::Projection(ProjectionError::NotConverged { .. })) => SolveOutcome::Failed {
            status: "not_converged",
            message: e.to_string(),
            code: exit::NOT_CONVERGED,
        },
        Err(e @ (SolveError::InvalidOptions(_) | SolveError::Cost(_))) => return Err(CliError::Options(e.to_string())),
    })
}

fn status_for(code: u8) -> &'static str {
    match code {
        exit::OK => "optimal",
        exit::BEST_EFFORT => "best_effort",
        _ => "not_converged",
    }
}

/// Writes `solution.json` (or a failure report in its place) and `trace.csv`.
fn write_solution(problem: &Problem, outcome: &SolveOutcome, seed: u64, cfg: &RunConfig) -> Result<u8, CliError> {
    match outcome {
        SolveOutcome::Solved(s, code) => {
            let residual = in_power_set(&s.u_star, &problem.system, &problem.system.dynamics(), 0.0).residual();
            json_out(
                cfg,
                SOLUTION_FILE,
                &SolutionReport::new(status_for(*code), &problem.cost, s, residual, seed),
            )?;
            let trace = cfg.path(TRACE_FILE);
            write_trace_csv(&trace, &s.best_objective_trace).map_err(|e| io_err(&trace, e))?;
            Ok(*code)
        }
        SolveOutcome::Failed { status, message, code } => {
            json_out(
                cfg,
                SOLUTION_FILE,
                &FailureReport {
                    status,
                    message: message.clone(),
                    instance_fingerprint: problem.fingerprint(),
                },
            )?;
            Ok(*code)
        }
    }
}

/// `solve`: writes the solution plus any extra artifacts the scenario lists.
pub fn run_solve(scenario: &Scenario, cfg: &RunConfig) -> Result<u8, CliError> {
    let problem = scenario.problem()?;
    if scenario.outputs.contains(&Output::FeasibleSetSamples) {
        check_request(&problem.system, cfg.resolution.unwrap_or(DEFAULT_SET_RESOLUTION))?;
    }
    if scenario.outputs.contains(&Output::OracleComparison) {
        check_oracle_request(&problem, cfg)?;
    }
    prepare(cfg)?;
    let seed = cfg.seed(scenario);
    let outcome = run_solver(&problem, scenario, cfg)?;
    let code = write_solution(&problem, &outcome, seed, cfg)?;

    for output in &scenario.outputs {
        match output {
            Output::Solution => {}
            Output::Certificate => write_certificate(scenario, &problem, cfg)?,
            Output::FeasibleSetSamples => {
                write_sets_at(&problem, cfg.resolution.unwrap_or(DEFAULT_SET_RESOLUTION), seed, cfg)?
            }
            Output::OracleComparison => {
                if let SolveOutcome::Solved(s, _) = &outcome {
                    write_oracle(&problem, s, cfg)?;
                }
            }
        }
    }
    Ok(code)
}

fn write_certificate(scenario: &Scenario, problem: &Problem, cfg: &RunConfig) -> Result<(), CliError> {
    let seed = cfg.seed(scenario);
    let params = problem.system.params();
    let certificate = certify_convexity(&problem.cost, params);
    let probe = midpoint_convexity_probe(&problem.cost, params, CERTIFY_PROBE_SAMPLES, seed);
    let witness =
        find_nonconvexity_witness(&problem.system, &problem.system.dynamics(), WITNESS_ATTEMPTS, seed).map(|w| {
            WitnessReport {
                u_a: w.u_a.to_vec(),
                u_b: w.u_b.to_vec(),
                theta: w.theta,
                mixture: w.mixture.to_vec(),
                violated: format!(
                    "{} in period {}: {} vs limit {}",
                    w.violated.constraint,
                    w.violated.period + 1,
                    w.violated.value,
                    w.violated.limit
                ),
            }
        });
    json_out(
        cfg,
        CERTIFICATE_FILE,
        &CertifyReport {
            certificate: CertificateReport::new(&problem.cost, &certificate),
            probe: ProbeSummary::from(&probe),
            power_set_nonconvexity_witness: witness,
            seed,
        },
    )
}

/// `certify`: certificate, convexity probe and power-set witness search.
pub fn run_certify(scenario: &Scenario, cfg: &RunConfig) -> Result<u8, CliError> {
    let problem = scenario.problem()?;
    prepare(cfg)?;
    write_certificate(scenario, &problem, cfg)?;
    Ok(exit::OK)
}

#[derive(serde::Serialize)]
struct SetSummary {
    resolution: usize,
    power_feasible: usize,
    energy_members: usize,
    power_probe_pairs: usize,
    power_probe_violations: usize,
    energy_probe_pairs: usize,
    energy_probe_violations: usize,
}

fn write_sets_at(problem: &Problem, resolution: usize, seed: u64, cfg: &RunConfig) -> Result<(), CliError> {
    let system = &problem.system;
    let power = sample_power_set(system, resolution)?;
    let energy = sample_energy_set(system, resolution)?;
    let p = cfg.path(POWER_SET_FILE);
    write_set_csv(&p, ["u_1", "u_2", "feasible"], &power).map_err(|e| io_err(&p, e))?;
    let p = cfg.path(ENERGY_SET_FILE);
    write_set_csv(&p, ["x_1", "x_2", "member"], &energy).map_err(|e| io_err(&p, e))?;

    let pp = probe_power_samples(system, &power, SET_PROBE_PAIRS, seed);
    let ep = probe_energy_samples(system, &energy, SET_PROBE_PAIRS, seed);
    json_out(
        cfg,
        SETS_SUMMARY_FILE,
        &SetSummary {
            resolution,
            power_feasible: power.iter().filter(|s| s.1).count(),
            energy_members: energy.iter().filter(|s| s.1).count(),
            power_probe_pairs: pp.pairs,
            power_probe_violations: pp.violations,
            energy_probe_pairs: ep.pairs,
            energy_probe_violations: ep.violations,
        },
    )
}

/// `sample-sets`: power and energy set grids of a two-period scenario.
pub fn run_sample_sets(scenario: &Scenario, cfg: &RunConfig) -> Result<u8, CliError> {
    let problem = scenario.problem()?;
    let resolution = cfg.resolution.unwrap_or(DEFAULT_SET_RESOLUTION);
    check_request(&problem.system, resolution)?;
    prepare(cfg)?;
    write_sets_at(&problem, resolution, cfg.seed(scenario), cfg)?;
    Ok(exit::OK)
}

/// Oracle grid size: 401 points per axis up to two periods, 101 beyond.
pub fn default_oracle_resolution(horizon: usize) -> usize {
    if horizon <= 2 {
        401
    } else {
        101
    }
}

fn oracle_grid(problem: &Problem, cfg: &RunConfig) -> GridSpec {
    GridSpec::new(
        cfg.resolution
            .unwrap_or_else(|| default_oracle_resolution(problem.system.horizon())),
    )
}

/// Rejects instances the oracle cannot handle before any time is spent solving.
fn check_oracle_request(problem: &Problem, cfg: &RunConfig) -> Result<(), CliError> {
    let grid = oracle_grid(problem, cfg);
    let horizon = problem.system.horizon();
    let err = if horizon > grid.horizon_cap {
        OracleError::HorizonTooLarge {
            horizon,
            cap: grid.horizon_cap,
        }
    } else if grid.points_per_axis < 3 || grid.points_per_axis.is_multiple_of(2) {
        OracleError::InvalidResolution(grid.points_per_axis)
    } else {
        return Ok(());
    };
    Err(CliError::Usage(err.to_string()))
}

fn write_oracle(problem: &Problem, solution: &Solution, cfg: &RunConfig) -> Result<GapVerdict, CliError> {
    let grid = oracle_grid(problem, cfg);
    let oracle = match brute_force_solve(problem, &grid) {
        Ok(o) => o,
        Err(
            e @ (OracleError::HorizonTooLarge { .. }
            | OracleError::GridTooLarge { .. }
            | OracleError::InvalidResolution(_)),
        ) => return Err(CliError::Usage(e.to_string())),
        Err(e) => {
            json_out(
                cfg,
                ORACLE_FILE,
                &FailureReport {
                    status: "no_feasible_grid_point",
                    message: e.to_string(),
                    instance_fingerprint: problem.fingerprint(),
                },
            )?;
            return Ok(GapVerdict::Fail);
        }
    };
    let gap = compare(solution, &oracle, ORACLE_TOLERANCE).map_err(|e| CliError::Usage(e.to_string()))?;
    json_out(
        cfg,
        ORACLE_FILE,
        &OracleReport::new(&gap, &oracle, grid.points_per_axis),
    )?;
    Ok(gap.verdict)
}

/// `oracle-check`: solves, brute-forces the same instance on a grid and
/// compares the two objectives.
pub fn run_oracle_check(scenario: &Scenario, cfg: &RunConfig) -> Result<u8, CliError> {
    let problem = scenario.problem()?;
    check_oracle_request(&problem, cfg)?;
    prepare(cfg)?;
    let seed = cfg.seed(scenario);
    let outcome = run_solver(&problem, scenario, cfg)?;
    let code = write_solution(&problem, &outcome, seed, cfg)?;
    let SolveOutcome::Solved(solution, _) = &outcome else {
        return Ok(code);
    };
    let verdict = write_oracle(&problem, solution, cfg)?;
    if code == exit::NOT_CONVERGED {
        return Ok(code);
    }
    Ok(match verdict {
        GapVerdict::Pass => exit::OK,
        GapVerdict::Fail => exit::CHECK_FAILED,
        GapVerdict::NoGuarantee => exit::BEST_EFFORT,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    #[test]
    fn sample_guard_maps_to_usage() {
        let s = parse_scenario(
            r#"{"storage": {"eta_c": 0.5, "eta_d": 0.5, "lambda": 1, "delta": 1, "x0": 0.5, "horizon": 3},
                "bounds": {"u_max": [1,1,1], "u_min": [1,1,1], "x_max": [1,1,1], "x_min": [0,0,0]},
                "cost": {"family": "peak_shaving", "load": [1,1,1]}}"#,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            out: dir.path().join("out"),
            ..Default::default()
        };
        let err = run_sample_sets(&s, &cfg).unwrap_err();
        assert_eq!(err.exit_code(), exit::USAGE);
        assert!(!cfg.out.exists());
    }
}
