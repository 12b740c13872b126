//! Result files.
//!
//! JSON output prints every float with 17 significant digits in scientific
//! notation, which round-trips exactly and keeps repeated runs byte-identical.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use ess_reform::{Certification, ConvexityCertificate, CostSpec, GapReport, OracleSolution, ProbeReport, Solution};
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

/// Pretty JSON with fixed-width float formatting.
pub struct FixedDigits<'a>(PrettyFormatter<'a>);

impl Default for FixedDigits<'_> {
    fn default() -> Self {
        Self(PrettyFormatter::new())
    }
}

impl Formatter for FixedDigits<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}

pub fn to_fixed_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedDigits::default());
    value.serialize(&mut ser).expect("report types serialize infallibly");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    fs::write(path, to_fixed_json(value))
}

#[derive(Debug, Serialize)]
pub struct CertificateReport {
    pub family: String,
    pub verdict: &'static str,
    pub rule: Option<&'static str>,
    pub failing_indices: Vec<usize>,
}

impl CertificateReport {
    pub fn new(cost: &CostSpec, c: &ConvexityCertificate) -> Self {
        Self {
            family: cost.family_name().to_string(),
            verdict: match c.verdict {
                Certification::Certified => "certified",
                Certification::NotCertified => "not_certified",
            },
            rule: c.rule.map(|r| r.as_str()),
            failing_indices: c.failing_indices.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Diagnostics {
    pub converged: bool,
    pub iterations_used: usize,
    /// Largest half-space violation of `x_star`.
    pub feasibility_residual: f64,
    /// Largest power or energy limit violation of `u_star`.
    pub power_set_residual: f64,
    pub seed: u64,
    pub instance_fingerprint: String,
}

#[derive(Debug, Serialize)]
pub struct SolutionReport {
    pub status: &'static str,
    pub objective: f64,
    pub x_star: Vec<f64>,
    pub u_star: Vec<f64>,
    pub certificate: CertificateReport,
    pub guarantee_flag: &'static str,
    pub diagnostics: Diagnostics,
}

impl SolutionReport {
    pub fn new(status: &'static str, cost: &CostSpec, s: &Solution, power_set_residual: f64, seed: u64) -> Self {
        Self {
            status,
            objective: s.objective,
            x_star: s.x_star.to_vec(),
            u_star: s.u_star.to_vec(),
            certificate: CertificateReport::new(cost, &s.certificate),
            guarantee_flag: s.guarantee.as_str(),
            diagnostics: Diagnostics {
                converged: s.converged,
                iterations_used: s.iterations_used,
                feasibility_residual: s.feasibility_residual,
                power_set_residual,
                seed,
                instance_fingerprint: s.instance_fingerprint.clone(),
            },
        }
    }
}

/// Written instead of a solution when the solver produced none.
#[derive(Debug, Serialize)]
pub struct FailureReport {
    pub status: &'static str,
    pub message: String,
    pub instance_fingerprint: String,
}

#[derive(Debug, Serialize)]
pub struct ProbeSummary {
    pub samples: usize,
    pub violations: usize,
    pub worst_excess: Option<f64>,
}

impl From<&ProbeReport> for ProbeSummary {
    fn from(p: &ProbeReport) -> Self {
        Self {
            samples: p.samples,
            violations: p.violations,
            worst_excess: p.worst.as_ref().map(|w| w.excess),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct WitnessReport {
    pub u_a: Vec<f64>,
    pub u_b: Vec<f64>,
    pub theta: f64,
    pub mixture: Vec<f64>,
    pub violated: String,
}

#[derive(Debug, Serialize)]
pub struct CertifyReport {
    pub certificate: CertificateReport,
    pub probe: ProbeSummary,
    /// Two feasible power profiles whose mixture is infeasible, if one was found.
    pub power_set_nonconvexity_witness: Option<WitnessReport>,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct OracleReport {
    pub verdict: &'static str,
    pub gap: f64,
    pub tolerance: f64,
    pub solver_objective: f64,
    pub oracle_objective: f64,
    pub discretization_bound: Option<f64>,
    pub oracle_u_best: Vec<f64>,
    pub points_per_axis: usize,
    pub grid_points: u64,
    pub feasible_grid_points: u64,
    pub instance_fingerprint: String,
}

impl OracleReport {
    pub fn new(gap: &GapReport, oracle: &OracleSolution, points_per_axis: usize) -> Self {
        Self {
            verdict: gap.verdict.as_str(),
            gap: gap.gap,
            tolerance: gap.tolerance,
            solver_objective: gap.solver_objective,
            oracle_objective: gap.oracle_objective,
            discretization_bound: gap.discretization_bound,
            oracle_u_best: oracle.u_best.to_vec(),
            points_per_axis,
            grid_points: oracle.grid_points,
            feasible_grid_points: oracle.feasible_count,
            instance_fingerprint: oracle.instance_fingerprint.clone(),
        }
    }
}

/// `iteration,best_objective`, one row per improvement.
pub fn write_trace_csv(path: &Path, trace: &[(usize, f64)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "best_objective"])?;
    for (k, v) in trace {
        w.write_record([k.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Two coordinates and a 0/1 membership flag per row.
pub fn write_set_csv(path: &Path, header: [&str; 3], rows: &[([f64; 2], bool)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for (p, inside) in rows {
        w.write_record([p[0].to_string(), p[1].to_string(), u8::from(*inside).to_string()])?;
    }
    w.flush()?;
    Ok(())
}
