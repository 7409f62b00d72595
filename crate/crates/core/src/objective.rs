//! The min-max void objective: `F_s = max_k count(s, k)` and `max_s F_s`.

use std::cmp::Ordering;
use std::hash::{Hash, Hasher};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::LidarPose;
use crate::lattice::{CubeLattice, ShellAssignment};
use crate::segmentation::{build_membership, FleetSpec, SideMode};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectiveReport {
    /// Largest shell count per subspace.
    pub per_subspace: Vec<usize>,
    /// `counts[s][k]`.
    pub counts: Vec<Vec<usize>>,
    pub argmax_subspace: usize,
    pub objective: usize,
    /// `objective * cube_edge / 2`, meters. For reading only; never optimized.
    pub approx_radius: f64,
    pub config: Vec<LidarPose>,
    pub mode: SideMode,
    /// Fingerprint of the lattice and shells the counts were taken on.
    pub provenance: u64,
}

impl ObjectiveReport {
    pub fn subspace_sum(&self) -> usize {
        self.per_subspace.iter().sum()
    }
}

/// Deterministic fingerprint of a lattice/shell pair.
pub fn provenance(lattice: &CubeLattice, shells: &ShellAssignment) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    lattice.cube_edge.to_bits().hash(&mut h);
    lattice.counts.hash(&mut h);
    for c in &lattice.centers {
        for v in c.iter() {
            v.to_bits().hash(&mut h);
        }
    }
    shells.shell_of_cube.hash(&mut h);
    shells.n_shells.hash(&mut h);
    h.finish()
}

/// Evaluate a configuration against a fixed lattice.
pub struct Evaluator<'a> {
    pub fleet: &'a FleetSpec,
    pub lattice: &'a CubeLattice,
    pub shells: &'a ShellAssignment,
    pub mode: SideMode,
    provenance: u64,
}

impl<'a> Evaluator<'a> {
    pub fn new(fleet: &'a FleetSpec, lattice: &'a CubeLattice, shells: &'a ShellAssignment, mode: SideMode) -> Self {
        let provenance = provenance(lattice, shells);
        Self { fleet, lattice, shells, mode, provenance }
    }

    pub fn evaluate(&self, config: &[LidarPose]) -> Result<ObjectiveReport> {
        let m = build_membership(self.fleet, config, self.lattice, self.shells, self.mode)?;
        let per_subspace: Vec<usize> = m.counts.iter().map(|row| row.iter().copied().max().unwrap_or(0)).collect();
        let (argmax_subspace, objective) =
            per_subspace
                .iter()
                .copied()
                .enumerate()
                .fold((0, 0), |best, (s, v)| if v > best.1 { (s, v) } else { best });
        Ok(ObjectiveReport {
            per_subspace,
            counts: m.counts,
            argmax_subspace,
            objective,
            approx_radius: objective as f64 * self.lattice.cube_edge / 2.0,
            config: config.to_vec(),
            mode: self.mode,
            provenance: self.provenance,
        })
    }
}

pub fn evaluate(
    fleet: &FleetSpec,
    config: &[LidarPose],
    lattice: &CubeLattice,
    shells: &ShellAssignment,
    mode: SideMode,
) -> Result<ObjectiveReport> {
    Evaluator::new(fleet, lattice, shells, mode).evaluate(config)
}

fn config_key(config: &[LidarPose]) -> impl Iterator<Item = f64> + '_ {
    config.iter().flat_map(|p| [p.x, p.y, p.z, p.pitch, p.roll])
}

/// Total order: objective, then `Σ_s F_s`, then the configuration lexicographically.
pub fn compare(a: &ObjectiveReport, b: &ObjectiveReport) -> Result<Ordering> {
    if a.provenance != b.provenance {
        return Err(Error::ProvenanceMismatch { left: a.provenance, right: b.provenance });
    }
    Ok(a.objective.cmp(&b.objective).then(a.subspace_sum().cmp(&b.subspace_sum())).then_with(|| {
        let mut ka = config_key(&a.config);
        let mut kb = config_key(&b.config);
        loop {
            match (ka.next(), kb.next()) {
                (Some(x), Some(y)) => match x.total_cmp(&y) {
                    Ordering::Equal => continue,
                    o => return o,
                },
                (x, y) => return x.is_some().cmp(&y.is_some()),
            }
        }
    }))
}
