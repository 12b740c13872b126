//! Grid samples of the power and energy sets of a two-period system, for
//! plotting both sets side by side.

use ess_reform::transform::{in_energy_set_by_definition, MEMBERSHIP_TOL};
use ess_reform::{build_energy_polytope, in_energy_polytope, in_power_set, StorageSystem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const MIN_RESOLUTION: usize = 11;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SampleError {
    #[error("feasible-set samples need a two-period horizon, got T = {0}")]
    HorizonNot2(usize),
    #[error("resolution {0} is too small, minimum {MIN_RESOLUTION}")]
    ResolutionTooSmall(usize),
}

/// One grid point and whether it belongs to the set.
pub type Sample = ([f64; 2], bool);

/// Rejects anything but a two-period system and resolutions below the minimum.
pub fn check_request(system: &StorageSystem, resolution: usize) -> Result<(), SampleError> {
    if system.horizon() != 2 {
        return Err(SampleError::HorizonNot2(system.horizon()));
    }
    if resolution < MIN_RESOLUTION {
        return Err(SampleError::ResolutionTooSmall(resolution));
    }
    Ok(())
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn grid(lo: [f64; 2], hi: [f64; 2], n: usize, inside: impl Fn(&[f64; 2]) -> bool) -> Vec<Sample> {
    let a = axis(lo[0], hi[0], n);
    let b = axis(lo[1], hi[1], n);
    let mut out = Vec::with_capacity(n * n);
    for &p in &a {
        for &q in &b {
            let point = [p, q];
            out.push((point, inside(&point)));
        }
    }
    out
}

/// `resolution x resolution` grid over the power box, flagged by membership in
/// the feasible power set.
pub fn sample_power_set(system: &StorageSystem, resolution: usize) -> Result<Vec<Sample>, SampleError> {
    check_request(system, resolution)?;
    let b = system.bounds();
    let dynamics = system.dynamics();
    Ok(grid(
        [-b.u_min_mag[0], -b.u_min_mag[1]],
        [b.u_max[0], b.u_max[1]],
        resolution,
        |u| in_power_set(u, system, &dynamics, MEMBERSHIP_TOL).is_member(),
    ))
}

/// `resolution x resolution` grid over the energy box, flagged by membership in
/// the energy polytope's half-space description.
pub fn sample_energy_set(system: &StorageSystem, resolution: usize) -> Result<Vec<Sample>, SampleError> {
    check_request(system, resolution)?;
    let b = system.bounds();
    let polytope = build_energy_polytope(system, &system.dynamics());
    Ok(grid(
        [b.x_min[0], b.x_min[1]],
        [b.x_max[0], b.x_max[1]],
        resolution,
        |x| in_energy_polytope(x, &polytope, MEMBERSHIP_TOL).is_member(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MidpointProbe {
    pub pairs: usize,
    pub violations: usize,
}

/// Draws `pairs` random pairs of member samples and counts midpoints that
/// `inside` rejects. Zero pairs are drawn when fewer than two samples are
/// members.
pub fn midpoint_probe(
    samples: &[Sample],
    pairs: usize,
    seed: u64,
    inside: impl Fn(&[f64; 2]) -> bool,
) -> MidpointProbe {
    let members: Vec<[f64; 2]> = samples.iter().filter(|s| s.1).map(|s| s.0).collect();
    if members.len() < 2 {
        return MidpointProbe {
            pairs: 0,
            violations: 0,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..pairs {
        let a = members[rng.random_range(0..members.len())];
        let b = members[rng.random_range(0..members.len())];
        let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        if !inside(&mid) {
            violations += 1;
        }
    }
    MidpointProbe { pairs, violations }
}

/// Midpoint probe of sampled power profiles against the power set.
pub fn probe_power_samples(system: &StorageSystem, samples: &[Sample], pairs: usize, seed: u64) -> MidpointProbe {
    let dynamics = system.dynamics();
    midpoint_probe(samples, pairs, seed, |u| {
        in_power_set(u, system, &dynamics, MEMBERSHIP_TOL).is_member()
    })
}

/// Midpoint probe of sampled energy profiles. Midpoints are checked with the
/// definition (energy box plus power limits on the recovered power profile),
/// not with the half-space description used to flag the samples.
pub fn probe_energy_samples(system: &StorageSystem, samples: &[Sample], pairs: usize, seed: u64) -> MidpointProbe {
    let dynamics = system.dynamics();
    midpoint_probe(samples, pairs, seed, |x| {
        in_energy_set_by_definition(x, system, &dynamics, MEMBERSHIP_TOL).is_member()
    })
}
