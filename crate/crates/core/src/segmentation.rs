//! Subspace enumeration and cube-in-subspace membership.
//!
//! Within one LiDAR the beam angles are kept in descending order. A point lies
//! below the steeper cones and above the shallower ones, so the only
//! realizable side vectors are a run of `-1` followed by a run of `+1`. Such a
//! vector is identified by its number of leading `-1` flags (its "level",
//! `0..=n_lasers`). A subspace is one level per LiDAR.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cone_above, pyramid_above, pyramid_planes, FacePlane, LidarPose, Point3};
use crate::lattice::{CubeLattice, ShellAssignment};

/// Which surface stands in for each laser cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideMode {
    Exact,
    Pyramid,
}

impl std::str::FromStr for SideMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SideMode::Exact),
            "pyramid" => Ok(SideMode::Pyramid),
            other => Err(Error::invalid("mode", format!("unknown mode {other:?} (expected exact|pyramid)"))),
        }
    }
}

/// Beam angles (radians) of every LiDAR, each list sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetSpec {
    lidars: Vec<Vec<f64>>,
    n_faces: usize,
}

impl FleetSpec {
    pub fn new(lidars: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_faces(lidars, 4)
    }

    /// `n_faces` sets the pyramid used in [`SideMode::Pyramid`].
    pub fn with_faces(mut lidars: Vec<Vec<f64>>, n_faces: usize) -> Result<Self> {
        if lidars.is_empty() {
            return Err(Error::invalid("fleet", "needs at least one LiDAR"));
        }
        let n_lasers = lidars[0].len();
        for (l, angles) in lidars.iter_mut().enumerate() {
            if angles.is_empty() {
                return Err(Error::invalid(format!("fleet.lidars[{l}]"), "needs at least one laser"));
            }
            if angles.len() != n_lasers {
                return Err(Error::invalid(
                    format!("fleet.lidars[{l}]"),
                    format!("has {} lasers, expected {n_lasers} like lidars[0]", angles.len()),
                ));
            }
            if let Some(a) = angles.iter().find(|a| a.is_nan() || a.abs() >= std::f64::consts::FRAC_PI_2) {
                return Err(Error::invalid(
                    format!("fleet.lidars[{l}]"),
                    format!("beam angle {a} rad is not in (-pi/2, pi/2)"),
                ));
            }
            angles.sort_by(|a, b| b.total_cmp(a));
            if angles.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!("fleet.lidars[{l}]"), "duplicate beam angle"));
            }
        }
        if n_faces < 3 {
            return Err(Error::invalid("n_faces", format!("{n_faces} < 3")));
        }
        Ok(Self { lidars, n_faces })
    }

    pub fn n_lidars(&self) -> usize {
        self.lidars.len()
    }

    pub fn n_lasers(&self) -> usize {
        self.lidars[0].len()
    }

    pub fn n_faces(&self) -> usize {
        self.n_faces
    }

    pub fn angles(&self, lidar: usize) -> &[f64] {
        &self.lidars[lidar]
    }

    pub fn n_subspaces(&self) -> usize {
        (self.n_lasers() + 1).pow(self.n_lidars() as u32)
    }

    pub(crate) fn planes(&self) -> Vec<Vec<Vec<FacePlane>>> {
        self.lidars
            .iter()
            .map(|a| a.iter().map(|&t| pyramid_planes(t, self.n_faces).expect("n_faces validated")).collect())
            .collect()
    }
}

/// One sign flag per laser per LiDAR; `true` is the upward side (+1).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubspacePattern {
    pub flags: Vec<Vec<bool>>,
}

impl SubspacePattern {
    /// Number of leading downward flags per LiDAR, or `None` if any LiDAR's
    /// vector is not monotone.
    pub fn levels(&self) -> Option<Vec<usize>> {
        self.flags.iter().map(|f| monotone_level(f)).collect()
    }

    pub fn signs(&self) -> Vec<Vec<i8>> {
        self.flags.iter().map(|f| f.iter().map(|&b| if b { 1 } else { -1 }).collect()).collect()
    }
}

pub fn monotone_level(flags: &[bool]) -> Option<usize> {
    let level = flags.iter().take_while(|&&up| !up).count();
    flags[level..].iter().all(|&up| up).then_some(level)
}

pub fn level_flags(level: usize, n_lasers: usize) -> Vec<bool> {
    (0..n_lasers).map(|r| r >= level).collect()
}

/// Subspace index of a per-LiDAR level vector; LiDAR 0 is the most significant digit.
pub fn subspace_index(levels: &[usize], n_lasers: usize) -> usize {
    levels.iter().fold(0, |acc, &p| acc * (n_lasers + 1) + p)
}

pub fn subspace_levels(mut s: usize, n_lidars: usize, n_lasers: usize) -> Vec<usize> {
    let mut levels = vec![0; n_lidars];
    for slot in levels.iter_mut().rev() {
        *slot = s % (n_lasers + 1);
        s /= n_lasers + 1;
    }
    levels
}

/// All `(n_lasers + 1)^n_lidars` patterns, indexed by [`subspace_index`].
pub fn enumerate_patterns(fleet: &FleetSpec) -> Vec<SubspacePattern> {
    let (nl, nr) = (fleet.n_lidars(), fleet.n_lasers());
    (0..fleet.n_subspaces())
        .map(|s| SubspacePattern {
            flags: subspace_levels(s, nl, nr).into_iter().map(|p| level_flags(p, nr)).collect(),
        })
        .collect()
}

pub(crate) fn check_config(fleet: &FleetSpec, config: &[LidarPose]) -> Result<()> {
    if config.len() != fleet.n_lidars() {
        return Err(Error::invalid("poses", format!("{} poses given for {} LiDARs", config.len(), fleet.n_lidars())));
    }
    Ok(())
}

/// Per-LiDAR precomputation for side tests.
pub(crate) struct SideTester<'a> {
    fleet: &'a FleetSpec,
    poses: &'a [LidarPose],
    rotations_t: Vec<nalgebra::Matrix3<f64>>,
    planes: Option<Vec<Vec<Vec<FacePlane>>>>,
}

impl<'a> SideTester<'a> {
    pub(crate) fn new(fleet: &'a FleetSpec, poses: &'a [LidarPose], mode: SideMode) -> Self {
        let rotations_t = poses.iter().map(|p| crate::geometry::build_pose_transform(p).rotation.transpose()).collect();
        let planes = (mode == SideMode::Pyramid).then(|| fleet.planes());
        Self { fleet, poses, rotations_t, planes }
    }

    /// Upward (`true`) / downward side of `center` for laser `r` of LiDAR `l`.
    pub(crate) fn sides(&self, l: usize, center: &Point3) -> impl Iterator<Item = bool> + '_ {
        let local = self.rotations_t[l] * (center - self.poses[l].position());
        self.fleet.angles(l).iter().enumerate().map(move |(r, &theta)| match &self.planes {
            None => cone_above(&local, theta),
            Some(planes) => pyramid_above(&local, theta, &planes[l][r]),
        })
    }
}

/// Whether the cube centred at `cube_center` lies in the subspace `pattern`.
pub fn cube_membership(
    fleet: &FleetSpec,
    config: &[LidarPose],
    pattern: &SubspacePattern,
    cube_center: &Point3,
    mode: SideMode,
) -> Result<bool> {
    check_config(fleet, config)?;
    let tester = SideTester::new(fleet, config, mode);
    Ok((0..fleet.n_lidars()).all(|l| tester.sides(l, cube_center).zip(&pattern.flags[l]).all(|(up, &f)| up == f)))
}

/// `E[s][k][c]` restricted to shell-assigned cubes.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipTensor {
    pub n_subspaces: usize,
    pub n_shells: usize,
    /// `(cube index, shell)` of every shell-assigned cube, in cube order.
    pub cubes: Vec<(usize, usize)>,
    /// `member[s * cubes.len() + i]` for the i-th entry of `cubes`.
    member: Vec<bool>,
    /// `counts[s][k] = Σ_c E[s][k][c]`.
    pub counts: Vec<Vec<usize>>,
}

impl MembershipTensor {
    pub fn get(&self, s: usize, i: usize) -> bool {
        self.member[s * self.cubes.len() + i]
    }

    /// `E[s][k][c]` by global cube index.
    pub fn contains(&self, s: usize, k: usize, c: usize) -> bool {
        match self.cubes.binary_search_by_key(&c, |&(c, _)| c) {
            Ok(i) => self.cubes[i].1 == k && self.get(s, i),
            Err(_) => false,
        }
    }

    /// How many subspaces claim the i-th assigned cube.
    pub fn claims(&self, i: usize) -> usize {
        (0..self.n_subspaces).filter(|&s| self.get(s, i)).count()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

pub fn build_membership(
    fleet: &FleetSpec,
    config: &[LidarPose],
    lattice: &CubeLattice,
    shells: &ShellAssignment,
    mode: SideMode,
) -> Result<MembershipTensor> {
    check_config(fleet, config)?;
    if shells.shell_of_cube.len() != lattice.len() {
        return Err(Error::invalid("shells", "assignment does not belong to this lattice"));
    }
    let patterns = enumerate_patterns(fleet);
    let tester = SideTester::new(fleet, config, mode);
    let cubes: Vec<(usize, usize)> = shells.assigned().collect();
    let n = cubes.len();
    let mut member = vec![false; patterns.len() * n];
    let mut counts = vec![vec![0; shells.n_shells]; patterns.len()];
    let mut sides: Vec<Vec<bool>> = vec![Vec::with_capacity(fleet.n_lasers()); fleet.n_lidars()];
    for (i, &(c, k)) in cubes.iter().enumerate() {
        let center = &lattice.centers[c];
        for (l, buf) in sides.iter_mut().enumerate() {
            buf.clear();
            buf.extend(tester.sides(l, center));
        }
        for (s, pattern) in patterns.iter().enumerate() {
            if pattern.flags == sides {
                member[s * n + i] = true;
                counts[s][k] += 1;
            }
        }
    }
    Ok(MembershipTensor { n_subspaces: patterns.len(), n_shells: shells.n_shells, cubes, member, counts })
}
