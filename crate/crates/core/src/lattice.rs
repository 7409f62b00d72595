//! Cube lattice over the range of interest and the concentric-cylinder
//! shells that select cube subsets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point3;

/// Slack for floor/ceil of ratios that should be integral.
const RATIO_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn len(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, v: f64) -> bool {
        self.min <= v && v <= self.max
    }

    pub fn max_abs(&self) -> f64 {
        self.min.abs().max(self.max.abs())
    }
}

/// Axis-aligned range of interest around the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub x: Interval,
    pub y: Interval,
    pub z: Interval,
    pub cube_edge: f64,
}

impl Roi {
    pub fn new(x: Interval, y: Interval, z: Interval, cube_edge: f64) -> Result<Self> {
        let roi = Self { x, y, z, cube_edge };
        roi.validate()?;
        Ok(roi)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cube_edge.is_finite() && self.cube_edge > 0.0) {
            return Err(Error::invalid("roi.cube_edge", format!("{} must be > 0", self.cube_edge)));
        }
        for (name, r) in self.axes() {
            if !(r.min.is_finite() && r.max.is_finite()) || r.min >= r.max {
                return Err(Error::invalid(format!("roi.{name}"), format!("[{}, {}] is empty", r.min, r.max)));
            }
            if r.len() + RATIO_SLACK < self.cube_edge {
                return Err(Error::invalid(
                    format!("roi.{name}"),
                    format!("length {} is shorter than cube_edge {}", r.len(), self.cube_edge),
                ));
            }
        }
        Ok(())
    }

    fn axes(&self) -> [(&'static str, Interval); 3] {
        [("x", self.x), ("y", self.y), ("z", self.z)]
    }

    /// Largest |x| or |y| reached by the box.
    pub fn max_horizontal_extent(&self) -> f64 {
        self.x.max_abs().max(self.y.max_abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubeLattice {
    pub cube_edge: f64,
    pub counts: [usize; 3],
    /// x fastest, then y, then z.
    pub centers: Vec<Point3>,
}

impl CubeLattice {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

pub fn build_lattice(roi: &Roi) -> Result<CubeLattice> {
    roi.validate()?;
    let edge = roi.cube_edge;
    let n = |r: Interval| ((r.len() / edge) + RATIO_SLACK).floor() as usize;
    let counts = [n(roi.x), n(roi.y), n(roi.z)];
    let axis = |r: Interval, k: usize| -> Vec<f64> { (0..k).map(|i| r.min + (i as f64 + 0.5) * edge).collect() };
    let (xs, ys, zs) = (axis(roi.x, counts[0]), axis(roi.y, counts[1]), axis(roi.z, counts[2]));
    let mut centers = Vec::with_capacity(counts.iter().product());
    for &z in &zs {
        for &y in &ys {
            for &x in &xs {
                centers.push(Point3::new(x, y, z));
            }
        }
    }
    Ok(CubeLattice { cube_edge: edge, counts, centers })
}

/// Vertical cylinders about the car-frame z axis, spanning the full ROI height.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderFamily {
    pub radius_gap: f64,
    pub radii: Vec<f64>,
}

impl CylinderFamily {
    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }
}

pub fn build_cylinders(roi: &Roi, radius_gap: f64) -> Result<CylinderFamily> {
    if !(radius_gap.is_finite() && radius_gap > 0.0) {
        return Err(Error::invalid("cylinders.radius_gap", format!("{radius_gap} must be > 0")));
    }
    let n = ((roi.max_horizontal_extent() / radius_gap) - RATIO_SLACK).ceil().max(1.0) as usize;
    let radii = (1..=n).map(|k| k as f64 * radius_gap).collect();
    Ok(CylinderFamily { radius_gap, radii })
}

/// Smallest and largest horizontal distance to the z axis over a cube's square footprint.
pub fn footprint_radial_span(center: &Point3, edge: f64) -> (f64, f64) {
    let h = edge / 2.0;
    let (ax, ay) = (center.x.abs(), center.y.abs());
    let near = (ax - h).max(0.0).hypot((ay - h).max(0.0));
    let far = (ax + h).hypot(ay + h);
    (near, far)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShellAssignment {
    pub shell_of_cube: Vec<Option<usize>>,
    pub n_shells: usize,
}

impl ShellAssignment {
    /// `(cube index, shell)` for every assigned cube, in cube order.
    pub fn assigned(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.shell_of_cube.iter().enumerate().filter_map(|(c, k)| k.map(|k| (c, k)))
    }

    pub fn assigned_count(&self) -> usize {
        self.shell_of_cube.iter().filter(|k| k.is_some()).count()
    }

    pub fn shell_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_shells];
        for (_, k) in self.assigned() {
            sizes[k] += 1;
        }
        sizes
    }
}

/// Assign each cube to the first cylinder whose circle crosses its footprint.
pub fn assign_shells(lattice: &CubeLattice, cylinders: &CylinderFamily) -> ShellAssignment {
    let shell_of_cube = lattice
        .centers
        .iter()
        .map(|c| {
            let (near, far) = footprint_radial_span(c, lattice.cube_edge);
            cylinders.radii.iter().position(|&r| near <= r && r <= far)
        })
        .collect();
    ShellAssignment { shell_of_cube, n_shells: cylinders.len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn iv(a: f64, b: f64) -> Interval {
        Interval::new(a, b)
    }

    fn case_roi(edge: f64) -> Roi {
        Roi::new(iv(-8.5, 8.5), iv(-2.5, 2.5), iv(0.0, 5.0), edge).unwrap()
    }

    #[test]
    fn unit_cube() {
        let l = build_lattice(&Roi::new(iv(0.0, 1.0), iv(0.0, 1.0), iv(0.0, 1.0), 1.0).unwrap()).unwrap();
        assert_eq!(l.centers, vec![Point3::new(0.5, 0.5, 0.5)]);
    }

    #[test]
    fn case_lattice_size() {
        let l = build_lattice(&case_roi(0.5)).unwrap();
        assert_eq!(l.counts, [34, 10, 10]);
        assert_eq!(l.len(), 3400);
        let roi = case_roi(0.5);
        assert!(l.centers.iter().all(|c| roi.x.min < c.x
            && c.x < roi.x.max
            && roi.y.min < c.y
            && c.y < roi.y.max
            && roi.z.min < c.z
            && c.z < roi.z.max));
    }

    #[test]
    fn single_cell_axis() {
        let l = build_lattice(&Roi::new(iv(-8.5, 8.5), iv(-8.5, 8.5), iv(0.0, 17.0), 17.0).unwrap()).unwrap();
        assert_eq!(l.counts[0], 1);
        assert_eq!(l.centers[0].x, 0.0);
    }

    #[test]
    fn roi_validation() {
        assert!(Roi::new(iv(0.0, 1.0), iv(0.0, 1.0), iv(0.0, 1.0), 0.0).is_err());
        assert!(Roi::new(iv(1.0, 1.0), iv(0.0, 1.0), iv(0.0, 1.0), 0.5).is_err());
        assert!(Roi::new(iv(0.0, 1.0), iv(0.0, 0.4), iv(0.0, 1.0), 0.5).is_err());
    }

    #[test]
    fn cylinder_radii() {
        let roi = case_roi(0.5);
        assert_eq!(build_cylinders(&roi, 8.5).unwrap().radii, vec![8.5]);
        assert_eq!(build_cylinders(&roi, 2.0).unwrap().radii, vec![2.0, 4.0, 6.0, 8.0, 10.0]);
        assert!(build_cylinders(&roi, 0.0).is_err());
        assert!(build_cylinders(&roi, -1.0).is_err());
    }

    #[test]
    fn increasing_gap_never_adds_shells() {
        let roi = case_roi(0.5);
        let mut prev = usize::MAX;
        for i in 1..200 {
            let n = build_cylinders(&roi, i as f64 * 0.05).unwrap().len();
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn center_on_shell_and_miss() {
        let cyl = CylinderFamily { radius_gap: 2.0, radii: vec![2.0, 4.0, 6.0] };
        let l = CubeLattice { cube_edge: 0.1, counts: [1, 1, 1], centers: vec![Point3::new(4.0, 0.0, 1.0)] };
        assert_eq!(assign_shells(&l, &cyl).shell_of_cube, vec![Some(1)]);

        let cyl = CylinderFamily { radius_gap: 10.0, radii: vec![10.0, 20.0] };
        let l = CubeLattice { cube_edge: 1.0, counts: [1, 1, 1], centers: vec![Point3::zeros()] };
        assert_eq!(assign_shells(&l, &cyl).shell_of_cube, vec![None]);
    }

    #[test]
    fn ties_go_to_the_smaller_shell() {
        let cyl = CylinderFamily { radius_gap: 0.5, radii: vec![0.5, 1.0, 1.5] };
        let l = CubeLattice { cube_edge: 1.0, counts: [1, 1, 1], centers: vec![Point3::new(1.0, 0.0, 0.0)] };
        assert_eq!(assign_shells(&l, &cyl).shell_of_cube, vec![Some(0)]);
    }

    /// Dense sampling of the footprint: the circle crosses it iff some samples
    /// fall on each side (or exactly on) the radius.
    fn sampled_shell(center: &Point3, edge: f64, radii: &[f64]) -> Option<usize> {
        const N: usize = 32;
        let h = edge / 2.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..N {
            for j in 0..N {
                let x = center.x - h + edge * i as f64 / (N - 1) as f64;
                let y = center.y - h + edge * j as f64 / (N - 1) as f64;
                let d = x.hypot(y);
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
        radii.iter().position(|&r| lo <= r && r <= hi)
    }

    #[test]
    fn assignment_matches_sampling_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        for _ in 0..20 {
            let edge = rng.gen_range(0.2..1.0);
            let x0 = rng.gen_range(-6.0..-1.0);
            let y0 = rng.gen_range(-4.0..-1.0);
            let roi = Roi::new(iv(x0, -x0 + 0.3), iv(y0, 2.0), iv(0.0, 1.0), edge).unwrap();
            let lattice = build_lattice(&roi).unwrap();
            let cyl = build_cylinders(&roi, rng.gen_range(0.7..2.5)).unwrap();
            let shells = assign_shells(&lattice, &cyl);
            for (c, center) in lattice.centers.iter().enumerate() {
                let (near, far) = footprint_radial_span(center, edge);
                // Skip cubes whose span endpoints sit within sampling error of a radius.
                let grid_err = edge / 31.0 * 1.5;
                if cyl.radii.iter().any(|&r| (r - near).abs() < grid_err || (r - far).abs() < grid_err) {
                    continue;
                }
                assert_eq!(shells.shell_of_cube[c], sampled_shell(center, edge, &cyl.radii));
                checked += 1;
            }
        }
        assert!(checked > 500, "{checked}");
    }

    #[test]
    fn mirror_preserves_shells() {
        let roi = case_roi(0.5);
        let lattice = build_lattice(&roi).unwrap();
        let shells = assign_shells(&lattice, &build_cylinders(&roi, 1.0).unwrap());
        let [nx, ny, _] = lattice.counts;
        for (c, center) in lattice.centers.iter().enumerate() {
            let (ix, iy, iz) = (c % nx, (c / nx) % ny, c / (nx * ny));
            let m = ix + nx * ((ny - 1 - iy) + ny * iz);
            assert_eq!(lattice.centers[m].y, -center.y);
            assert_eq!(shells.shell_of_cube[m], shells.shell_of_cube[c]);
        }
    }

    #[test]
    fn deterministic() {
        let roi = case_roi(0.5);
        let a = build_lattice(&roi).unwrap();
        let b = build_lattice(&roi).unwrap();
        assert_eq!(a, b);
        let cyl = build_cylinders(&roi, 1.3).unwrap();
        assert_eq!(assign_shells(&a, &cyl), assign_shells(&b, &cyl));
    }
}
