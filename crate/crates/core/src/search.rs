//! Derivative-free search over the full mount configuration.
//!
//! Multistart simulated annealing on the void objective, each start followed
//! by a coordinate-descent polish. Starts run in parallel; each owns the
//! ChaCha stream `(seed, start index)` and the winner is picked with
//! [`objective::compare`], so results do not depend on scheduling.

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::LidarPose;
use crate::lattice::{CubeLattice, Interval, Roi, ShellAssignment};
use crate::objective::{compare, Evaluator, ObjectiveReport};
use crate::segmentation::{FleetSpec, SideMode};

/// Decision variables per LiDAR: x, y, z, pitch, roll.
pub const DIMS_PER_LIDAR: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub iterations: usize,
    /// In units of the objective (cube counts).
    pub initial_temperature: f64,
    /// Initial move half-width as a fraction of each dimension's range.
    pub initial_step: f64,
    /// Per-iteration factor applied to both temperature and step.
    pub decay: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self { iterations: 2000, initial_temperature: 4.0, initial_step: 0.3, decay: 0.998 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// `DIMS_PER_LIDAR` intervals per LiDAR; a zero-width interval fixes that variable.
    pub bounds: Vec<Interval>,
    pub multistarts: usize,
    pub schedule: AnnealSchedule,
    /// Halvings of the polish step; 0 disables the polish.
    pub refine_levels: usize,
    pub seed: u64,
    /// Start 0 begins here (clamped into bounds) when given.
    pub initial: Option<Vec<LidarPose>>,
}

/// Default pitch/roll search interval, radians (±20°).
pub fn default_angle_bounds() -> Interval {
    let a = 20f64.to_radians();
    Interval::new(-a, a)
}

impl SearchConfig {
    /// Positions bounded by the ROI box, angles by `angles` (or fixed at 0 when `None`).
    pub fn over_roi(roi: &Roi, n_lidars: usize, angles: Option<Interval>) -> Self {
        let angle = angles.unwrap_or(Interval::new(0.0, 0.0));
        let one = [roi.x, roi.y, roi.z, angle, angle];
        Self {
            bounds: (0..n_lidars).flat_map(|_| one).collect(),
            multistarts: 8,
            schedule: AnnealSchedule::default(),
            refine_levels: 3,
            seed: 0,
            initial: None,
        }
    }

    pub fn validate(&self, n_lidars: usize) -> Result<()> {
        if self.bounds.len() != DIMS_PER_LIDAR * n_lidars {
            return Err(Error::invalid(
                "search.bounds",
                format!("{} intervals for {n_lidars} LiDARs (need {})", self.bounds.len(), DIMS_PER_LIDAR * n_lidars),
            ));
        }
        for (i, b) in self.bounds.iter().enumerate() {
            if !(b.min.is_finite() && b.max.is_finite()) || b.min > b.max {
                return Err(Error::invalid(format!("search.bounds[{i}]"), format!("[{}, {}] is empty", b.min, b.max)));
            }
            if i % DIMS_PER_LIDAR >= 3 && b.max_abs() > std::f64::consts::FRAC_PI_2 {
                return Err(Error::invalid(format!("search.bounds[{i}]"), "angle bounds exceed ±90°"));
            }
        }
        if self.multistarts == 0 {
            return Err(Error::invalid("search.multistarts", "must be >= 1"));
        }
        let s = &self.schedule;
        if s.iterations == 0 {
            return Err(Error::invalid("search.iterations", "must be >= 1"));
        }
        if !(s.decay > 0.0 && s.decay < 1.0) {
            return Err(Error::invalid("search.decay", format!("{} is not in (0, 1)", s.decay)));
        }
        if !(s.initial_temperature > 0.0 && s.initial_step > 0.0) {
            return Err(Error::invalid("search.schedule", "temperature and step must be > 0"));
        }
        if let Some(init) = &self.initial {
            if init.len() != n_lidars {
                return Err(Error::invalid("search.initial", format!("{} poses for {n_lidars} LiDARs", init.len())));
            }
        }
        Ok(())
    }

    pub fn free_dims(&self) -> Vec<usize> {
        (0..self.bounds.len()).filter(|&i| self.bounds[i].len() > 0.0).collect()
    }
}

pub fn flatten(config: &[LidarPose]) -> Vec<f64> {
    config.iter().flat_map(|p| [p.x, p.y, p.z, p.pitch, p.roll]).collect()
}

pub fn unflatten(v: &[f64]) -> Vec<LidarPose> {
    v.chunks_exact(DIMS_PER_LIDAR).map(|c| LidarPose::new(c[0], c[1], c[2], c[3], c[4])).collect()
}

fn clamp_into(v: &mut [f64], bounds: &[Interval]) {
    for (x, b) in v.iter_mut().zip(bounds) {
        *x = x.clamp(b.min, b.max);
    }
}

/// Strict improvement in (objective, Σ F_s); ignores the configuration tie-break.
fn improves(a: &ObjectiveReport, b: &ObjectiveReport) -> bool {
    (a.objective, a.subspace_sum()) < (b.objective, b.subspace_sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartTrace {
    pub start: usize,
    pub initial: Vec<LidarPose>,
    /// Best objective after each iteration; entry 0 is the starting point and
    /// the last entry follows the polish.
    pub best_objective: Vec<usize>,
    /// `(iteration, objective)` of every accepted move.
    pub accepted: Vec<(usize, usize)>,
    pub best: Vec<LidarPose>,
}

#[derive(Debug, Clone)]
pub struct SearchTrace {
    pub starts: Vec<StartTrace>,
    pub report: ObjectiveReport,
    pub wall_time: Duration,
}

fn energy(r: &ObjectiveReport, scale: f64) -> f64 {
    r.objective as f64 + r.subspace_sum() as f64 / scale
}

fn run_start(eval: &Evaluator, cfg: &SearchConfig, start: usize) -> Result<(StartTrace, ObjectiveReport)> {
    let bounds = &cfg.bounds;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(start as u64);
    let mut x: Vec<f64> = match (&cfg.initial, start) {
        (Some(init), 0) => flatten(init),
        (None, 0) => bounds.iter().map(|b| 0.5 * (b.min + b.max)).collect(),
        _ => bounds.iter().map(|b| if b.len() > 0.0 { rng.gen_range(b.min..=b.max) } else { b.min }).collect(),
    };
    clamp_into(&mut x, bounds);
    let initial = unflatten(&x);
    let mut current = eval.evaluate(&initial)?;
    let mut best = current.clone();
    let mut trace =
        StartTrace { start, initial, best_objective: vec![best.objective], accepted: Vec::new(), best: Vec::new() };
    // Keeps the Σ F_s tie-break strictly below one objective unit.
    let scale = (eval.fleet.n_subspaces() * eval.shells.assigned_count() + 1) as f64;
    let free = cfg.free_dims();
    let s = &cfg.schedule;
    let (mut temp, mut step) = (s.initial_temperature, s.initial_step);
    if !free.is_empty() {
        for it in 1..=s.iterations {
            let d = free[rng.gen_range(0..free.len())];
            let b = bounds[d];
            let mut cand = x.clone();
            cand[d] = (x[d] + rng.gen_range(-1.0..=1.0) * step * b.len()).clamp(b.min, b.max);
            let report = eval.evaluate(&unflatten(&cand))?;
            let delta = energy(&report, scale) - energy(&current, scale);
            let u: f64 = rng.gen();
            if delta <= 0.0 || u < (-delta / temp).exp() {
                if improves(&report, &best) {
                    best = report.clone();
                }
                trace.accepted.push((it, report.objective));
                x = cand;
                current = report;
            }
            trace.best_objective.push(best.objective);
            temp *= s.decay;
            step *= s.decay;
        }
    }
    if cfg.refine_levels > 0 && !free.is_empty() {
        let radius: Vec<f64> = bounds.iter().map(|b| step.max(0.02) * b.len()).collect();
        let polished = grid_refine(eval, bounds, &best.config, &radius, cfg.refine_levels)?;
        best = eval.evaluate(&polished)?;
        trace.best_objective.push(best.objective);
    }
    trace.best = best.config.clone();
    Ok((trace, best))
}

/// Multistart annealing plus polish. Returns the best configuration and the trace.
pub fn optimize(
    fleet: &FleetSpec,
    lattice: &CubeLattice,
    shells: &ShellAssignment,
    cfg: &SearchConfig,
    mode: SideMode,
) -> Result<(Vec<LidarPose>, SearchTrace)> {
    cfg.validate(fleet.n_lidars())?;
    let clock = Instant::now();
    let eval = Evaluator::new(fleet, lattice, shells, mode);
    let runs: Vec<(StartTrace, ObjectiveReport)> =
        (0..cfg.multistarts).into_par_iter().map(|s| run_start(&eval, cfg, s)).collect::<Result<_>>()?;
    let mut winner = runs[0].1.clone();
    for (_, r) in &runs[1..] {
        if compare(r, &winner)? == Ordering::Less {
            winner = r.clone();
        }
    }
    let starts = runs.into_iter().map(|(t, _)| t).collect();
    Ok((winner.config.clone(), SearchTrace { starts, report: winner, wall_time: clock.elapsed() }))
}

/// Coordinate descent: try ±step on each variable, keep strict improvements,
/// sweep until nothing improves, then halve the step (`levels` times in all).
pub fn grid_refine(
    eval: &Evaluator,
    bounds: &[Interval],
    best: &[LidarPose],
    radius: &[f64],
    levels: usize,
) -> Result<Vec<LidarPose>> {
    if levels == 0 {
        return Err(Error::invalid("levels", "must be >= 1"));
    }
    if radius.len() != bounds.len() || bounds.len() != best.len() * DIMS_PER_LIDAR {
        return Err(Error::invalid("radius", "one step and one interval per decision variable"));
    }
    const MAX_SWEEPS: usize = 200;
    let mut x = flatten(best);
    let mut current = eval.evaluate(best)?;
    for level in 0..levels {
        let scale = 0.5f64.powi(level as i32);
        for _ in 0..MAX_SWEEPS {
            let mut improved = false;
            for d in 0..x.len() {
                let step = radius[d] * scale;
                if step <= 0.0 {
                    continue;
                }
                for dir in [1.0, -1.0] {
                    let mut cand = x.clone();
                    cand[d] = (x[d] + dir * step).clamp(bounds[d].min, bounds[d].max);
                    if cand[d] == x[d] {
                        continue;
                    }
                    let report = eval.evaluate(&unflatten(&cand))?;
                    if improves(&report, &current) {
                        x = cand;
                        current = report;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                break;
            }
        }
    }
    Ok(unflatten(&x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{assign_shells, build_cylinders, build_lattice};
    use crate::objective::evaluate;

    fn iv(a: f64, b: f64) -> Interval {
        Interval::new(a, b)
    }

    /// Four stacked unit cubes in one shell, one flat laser.
    fn column() -> (FleetSpec, CubeLattice, ShellAssignment, Vec<Interval>) {
        let roi = Roi::new(iv(0.0, 1.0), iv(0.0, 1.0), iv(0.0, 4.0), 1.0).unwrap();
        let lattice = build_lattice(&roi).unwrap();
        let shells = assign_shells(&lattice, &build_cylinders(&roi, 1.0).unwrap());
        assert_eq!(shells.assigned_count(), 4);
        let fleet = FleetSpec::new(vec![vec![0.0]]).unwrap();
        let bounds = vec![iv(0.0, 1.0), iv(0.0, 1.0), iv(0.0, 4.0), iv(0.0, 0.0), iv(0.0, 0.0)];
        (fleet, lattice, shells, bounds)
    }

    #[test]
    fn refine_with_zero_radius_is_identity() {
        let (fleet, lattice, shells, bounds) = column();
        let eval = Evaluator::new(&fleet, &lattice, &shells, SideMode::Exact);
        let start = vec![LidarPose::at(0.3, 0.3, 0.9)];
        assert_eq!(grid_refine(&eval, &bounds, &start, &[0.0; 5], 2).unwrap(), start);
        assert!(grid_refine(&eval, &bounds, &start, &[0.0; 5], 0).is_err());
    }

    #[test]
    fn refine_takes_an_improving_step() {
        let (fleet, lattice, shells, bounds) = column();
        let eval = Evaluator::new(&fleet, &lattice, &shells, SideMode::Exact);
        let start = vec![LidarPose::at(0.3, 0.3, 0.9)];
        assert_eq!(eval.evaluate(&start).unwrap().objective, 3);
        let out = grid_refine(&eval, &bounds, &start, &[0.0, 0.0, 1.0, 0.0, 0.0], 1).unwrap();
        assert_eq!(out[0].z, 1.9);
        assert_eq!(eval.evaluate(&out).unwrap().objective, 2);
        // Converged: another sweep changes nothing.
        assert_eq!(grid_refine(&eval, &bounds, &out, &[0.0, 0.0, 1.0, 0.0, 0.0], 1).unwrap(), out);
    }

    #[test]
    fn optimizer_reaches_grid_minimum() {
        let (fleet, lattice, shells, bounds) = column();
        // Exhaustive 10x10x10 grid over the position box.
        let mut grid_best = usize::MAX;
        for i in 0..10 {
            for j in 0..10 {
                for k in 0..10 {
                    let p = LidarPose::at(0.05 + 0.1 * i as f64, 0.05 + 0.1 * j as f64, 0.2 + 0.4 * k as f64);
                    grid_best =
                        grid_best.min(evaluate(&fleet, &[p], &lattice, &shells, SideMode::Exact).unwrap().objective);
                }
            }
        }
        assert_eq!(grid_best, 2);
        let cfg = SearchConfig {
            bounds,
            multistarts: 3,
            schedule: AnnealSchedule { iterations: 200, ..Default::default() },
            refine_levels: 2,
            seed: 11,
            initial: None,
        };
        let (_, trace) = optimize(&fleet, &lattice, &shells, &cfg, SideMode::Exact).unwrap();
        assert!(trace.report.objective <= grid_best);
    }

    #[test]
    fn single_cube_objective_is_one() {
        let roi = Roi::new(iv(0.0, 1.0), iv(0.0, 1.0), iv(0.0, 1.0), 1.0).unwrap();
        let lattice = build_lattice(&roi).unwrap();
        let shells = assign_shells(&lattice, &build_cylinders(&roi, 1.0).unwrap());
        let fleet = FleetSpec::new(vec![vec![0.1]]).unwrap();
        let mut cfg = SearchConfig::over_roi(&roi, 1, Some(default_angle_bounds()));
        cfg.schedule.iterations = 50;
        cfg.multistarts = 2;
        let (_, trace) = optimize(&fleet, &lattice, &shells, &cfg, SideMode::Exact).unwrap();
        assert_eq!(trace.report.objective, 1);
    }

    #[test]
    fn seeded_runs_repeat_and_respect_bounds() {
        let roi = Roi::new(iv(-3.0, 3.0), iv(-1.5, 1.5), iv(0.0, 2.0), 0.5).unwrap();
        let lattice = build_lattice(&roi).unwrap();
        let shells = assign_shells(&lattice, &build_cylinders(&roi, 1.0).unwrap());
        let t = 10f64.to_radians();
        let fleet = FleetSpec::new(vec![vec![t, -t]; 2]).unwrap();
        let mut cfg = SearchConfig::over_roi(&roi, 2, Some(default_angle_bounds()));
        cfg.schedule.iterations = 150;
        cfg.multistarts = 4;
        cfg.seed = 99;
        let (a, ta) = optimize(&fleet, &lattice, &shells, &cfg, SideMode::Exact).unwrap();
        let (b, tb) = optimize(&fleet, &lattice, &shells, &cfg, SideMode::Exact).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta.starts, tb.starts);
        for st in &ta.starts {
            assert!(st.best_objective.windows(2).all(|w| w[1] <= w[0]));
            assert!(st.best_objective.last() <= st.best_objective.first());
            for (v, bd) in flatten(&st.best).iter().zip(&cfg.bounds) {
                assert!(bd.contains(*v));
            }
        }
        let eval = Evaluator::new(&fleet, &lattice, &shells, SideMode::Exact);
        for st in &ta.starts {
            assert!(ta.report.objective <= eval.evaluate(&st.initial).unwrap().objective);
        }
        // Mirror image of the winner scores the same.
        let mirrored: Vec<_> = a.iter().map(LidarPose::mirrored_y).collect();
        assert_eq!(eval.evaluate(&mirrored).unwrap().objective, ta.report.objective);
    }

    #[test]
    fn config_validation() {
        let roi = Roi::new(iv(-3.0, 3.0), iv(-1.5, 1.5), iv(0.0, 2.0), 0.5).unwrap();
        let cfg = SearchConfig::over_roi(&roi, 2, None);
        assert!(cfg.validate(2).is_ok());
        assert!(cfg.validate(1).is_err());
        let mut bad = cfg.clone();
        bad.schedule.decay = 1.0;
        assert!(bad.validate(2).is_err());
        let mut bad = cfg.clone();
        bad.schedule.iterations = 0;
        assert!(bad.validate(2).is_err());
        let mut bad = cfg;
        bad.bounds[3] = iv(-2.0, 2.0);
        assert!(bad.validate(2).is_err());
    }
}
