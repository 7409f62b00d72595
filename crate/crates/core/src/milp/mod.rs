//! Big-M mixed-integer model of the void objective with fixed mount angles
//! and free LiDAR positions, using the pyramid stand-in for each cone.
//!
//! Indicator cascade for every shell-assigned cube `c`:
//!
//! - `d_face_c{c}_l{l}_r{r}_f{i}`: 1 iff the cube centre is on the upward
//!   side of face `i` of laser `r`'s pyramid (IF-THEN-ELSE on an affine test).
//! - `d_la_c{c}_l{l}_r{r}_{up|dn}`: 1 iff the centre is on that side of the
//!   pyramid (AND/OR over the face indicators, see [`laser_gate`]).
//! - `d_seg_c{c}_l{l}_p{p}`: AND over the lasers of LiDAR `l` matching level `p`.
//! - `d_c_s{s}_c{c}`: AND over LiDARs for subspace `s`.
//!
//! Then `d_ss_s{s}_k{k} = Σ_c d_c_s{s}_c{c}` over shell `k`, each bounded by
//! `t`, and the model minimizes `t`. Positions are `X{l}`, `Y{l}`, `Z{l}`.
//! Face indicators and laser sides are shared by every subspace.

pub mod logic;
pub mod lp;

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{pyramid_planes, pyramid_uses_all_faces, rotation_x, rotation_y};
use crate::lattice::{CubeLattice, Interval, ShellAssignment};
use crate::segmentation::{FleetSpec, SubspacePattern};

pub use logic::{encode_and, encode_if_then_else, encode_or, LinExpr, Literal, MilpParams};
pub use lp::{read_lp, read_lp_file, write_lp, Constraint, LpModel, Sense, VarId, VarKind, Variable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarClass {
    Position,
    Face,
    LaserSide,
    Segment,
    Cube,
    ShellCount,
    Bound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    IfThenElse,
    And,
    Or,
    Sum,
    Max,
}

/// One logical relation and the rows that encode it.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub output: VarId,
    pub inputs: Vec<Literal>,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel {
    pub lp: LpModel,
    pub classes: Vec<VarClass>,
    /// In dependency order.
    pub gates: Vec<Gate>,
    /// `[X, Y, Z]` per LiDAR.
    pub positions: Vec<[VarId; 3]>,
    /// `shell_counts[s][k]`.
    pub shell_counts: Vec<Vec<VarId>>,
    pub bound: VarId,
}

impl MilpModel {
    pub fn count(&self, class: VarClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    pub fn n_variables(&self) -> usize {
        self.lp.variables.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.lp.constraints.len()
    }
}

/// Gate for "cube on side `up` of the pyramid" over the face indicators.
///
/// Upward regions are an intersection of face half-spaces for `theta >= 0` and
/// a union for `theta < 0`; the downward side is the complement.
pub fn laser_gate(theta: f64, up: bool) -> (GateKind, bool) {
    match (pyramid_uses_all_faces(theta), up) {
        (true, true) => (GateKind::And, false),
        (true, false) => (GateKind::Or, true),
        (false, true) => (GateKind::Or, false),
        (false, false) => (GateKind::And, true),
    }
}

struct Builder<'p> {
    lp: LpModel,
    classes: Vec<VarClass>,
    gates: Vec<Gate>,
    params: &'p MilpParams,
}

impl Builder<'_> {
    fn var(&mut self, name: String, class: VarClass, kind: VarKind, lo: f64, hi: f64) -> VarId {
        self.classes.push(class);
        self.lp.add_var(name, kind, lo, hi)
    }

    fn binary(&mut self, name: String, class: VarClass) -> VarId {
        self.var(name, class, VarKind::Binary, 0.0, 1.0)
    }

    fn push(
        &mut self,
        kind: GateKind,
        output: VarId,
        inputs: Vec<Literal>,
        rows: impl IntoIterator<Item = Constraint>,
    ) {
        let rows = rows.into_iter().map(|c| self.lp.add_constraint(c)).collect();
        self.gates.push(Gate { kind, output, inputs, rows });
    }

    fn logic(&mut self, kind: GateKind, inputs: Vec<Literal>, output: VarId, what: &str) -> Result<()> {
        self.params.check_fan_in(inputs.len(), what)?;
        let name = self.lp.var_name(output).to_string();
        let rows = match kind {
            GateKind::And => encode_and(&inputs, output, self.params, &name),
            GateKind::Or => encode_or(&inputs, output, self.params, &name),
            _ => unreachable!("not a logic gate"),
        };
        self.push(kind, output, inputs, rows);
        Ok(())
    }
}

/// Build the model. `fixed_angles[l] = (pitch, roll)`; `position_bounds[l]` is
/// the `[x, y, z]` box for LiDAR `l`'s position.
pub fn build_model(
    fleet: &FleetSpec,
    fixed_angles: &[(f64, f64)],
    position_bounds: &[[Interval; 3]],
    lattice: &CubeLattice,
    shells: &ShellAssignment,
    patterns: &[SubspacePattern],
    params: &MilpParams,
) -> Result<MilpModel> {
    params.validate()?;
    let (nl, nr) = (fleet.n_lidars(), fleet.n_lasers());
    if fixed_angles.len() != nl || position_bounds.len() != nl {
        return Err(Error::invalid("milp", format!("expected angles and bounds for {nl} LiDARs")));
    }
    if shells.shell_of_cube.len() != lattice.len() {
        return Err(Error::invalid("shells", "assignment does not belong to this lattice"));
    }
    let levels: Vec<Vec<usize>> = patterns
        .iter()
        .map(|p| {
            p.levels()
                .filter(|lv| lv.len() == nl && p.flags.iter().all(|f| f.len() == nr))
                .ok_or_else(|| Error::invalid("patterns", "every pattern must be monotone and sized to the fleet"))
        })
        .collect::<Result<_>>()?;
    // Per LiDAR: which levels occur, and which sides of each laser they need.
    let mut used_levels = vec![vec![false; nr + 1]; nl];
    for lv in &levels {
        for (l, &p) in lv.iter().enumerate() {
            used_levels[l][p] = true;
        }
    }
    let mut used_sides = vec![vec![[false; 2]; nr]; nl];
    for l in 0..nl {
        for p in (0..=nr).filter(|&p| used_levels[l][p]) {
            for r in 0..nr {
                used_sides[l][r][(r >= p) as usize] = true;
            }
        }
    }

    // Car-frame face normals: m = R n. Face value v = m·(p - T); f = -v.
    let normals: Vec<Vec<Vec<nalgebra::Vector3<f64>>>> = (0..nl)
        .map(|l| {
            let (pitch, roll) = fixed_angles[l];
            let rot = rotation_y(pitch) * rotation_x(roll);
            fleet
                .angles(l)
                .iter()
                .map(|&t| Ok(pyramid_planes(t, params.n_faces)?.iter().map(|f| rot * f.normal).collect()))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;

    let mut b = Builder { lp: LpModel::new("lidar_layout"), classes: Vec::new(), gates: Vec::new(), params };
    let positions: Vec<[VarId; 3]> = (0..nl)
        .map(|l| {
            let [bx, by, bz] = position_bounds[l];
            [
                b.var(format!("X{l}"), VarClass::Position, VarKind::Continuous, bx.min, bx.max),
                b.var(format!("Y{l}"), VarClass::Position, VarKind::Continuous, by.min, by.max),
                b.var(format!("Z{l}"), VarClass::Position, VarKind::Continuous, bz.min, bz.max),
            ]
        })
        .collect();

    let n_sub = patterns.len();
    let mut cube_vars: Vec<(usize, Vec<VarId>)> = Vec::new();
    for (c, k) in shells.assigned() {
        let center = lattice.centers[c];
        let mut side_vars = vec![vec![[None; 2]; nr]; nl];
        for l in 0..nl {
            for r in 0..nr {
                let mut faces = Vec::with_capacity(params.n_faces);
                for (i, m) in normals[l][r].iter().enumerate() {
                    let d = b.binary(format!("d_face_c{c}_l{l}_r{r}_f{i}"), VarClass::Face);
                    let f = LinExpr {
                        terms: positions[l].iter().zip(m.iter()).map(|(&v, &a)| (v, a)).collect(),
                        constant: -m.dot(&center),
                    };
                    let (mut lo, mut hi) = (f.constant, f.constant);
                    for (axis, &a) in position_bounds[l].iter().zip(m.iter()) {
                        let (u, w) = (a * axis.min, a * axis.max);
                        lo += u.min(w);
                        hi += u.max(w);
                    }
                    params.check_range(lo, hi, &format!("face test of {}", b.lp.var_name(d)))?;
                    let name = b.lp.var_name(d).to_string();
                    let rows = encode_if_then_else(&f, d, params, &name);
                    b.push(GateKind::IfThenElse, d, Vec::new(), rows);
                    faces.push(d);
                }
                let theta = fleet.angles(l)[r];
                for up in [true, false] {
                    if !used_sides[l][r][up as usize] {
                        continue;
                    }
                    let (kind, negate) = laser_gate(theta, up);
                    let tag = if up { "up" } else { "dn" };
                    let out = b.binary(format!("d_la_c{c}_l{l}_r{r}_{tag}"), VarClass::LaserSide);
                    let lits = faces.iter().map(|&v| Literal { var: v, negated: negate }).collect();
                    b.logic(kind, lits, out, "laser side gate")?;
                    side_vars[l][r][up as usize] = Some(out);
                }
            }
        }
        let mut seg_vars = vec![vec![None; nr + 1]; nl];
        for l in 0..nl {
            for p in (0..=nr).filter(|&p| used_levels[l][p]) {
                let out = b.binary(format!("d_seg_c{c}_l{l}_p{p}"), VarClass::Segment);
                let lits = (0..nr).map(|r| Literal::pos(side_vars[l][r][(r >= p) as usize].unwrap())).collect();
                b.logic(GateKind::And, lits, out, "segment gate")?;
                seg_vars[l][p] = Some(out);
            }
        }
        let mut dc = Vec::with_capacity(n_sub);
        for (s, lv) in levels.iter().enumerate() {
            let out = b.binary(format!("d_c_s{s}_c{c}"), VarClass::Cube);
            let lits = lv.iter().enumerate().map(|(l, &p)| Literal::pos(seg_vars[l][p].unwrap())).collect();
            b.logic(GateKind::And, lits, out, "cube gate")?;
            dc.push(out);
        }
        cube_vars.push((k, dc));
    }

    let mut shell_counts = vec![Vec::with_capacity(shells.n_shells); n_sub];
    for (s, row) in shell_counts.iter_mut().enumerate() {
        for k in 0..shells.n_shells {
            let out = b.var(format!("d_ss_s{s}_k{k}"), VarClass::ShellCount, VarKind::Continuous, 0.0, f64::INFINITY);
            let members: Vec<Literal> =
                cube_vars.iter().filter(|(kk, _)| *kk == k).map(|(_, dc)| Literal::pos(dc[s])).collect();
            let expr = members.iter().fold(LinExpr::var(out), |e, lit| e.add_term(lit.var, -1.0));
            let row_c = expr.into_constraint(format!("cnt_s{s}_k{k}"), Sense::Eq, 0.0);
            b.push(GateKind::Sum, out, members, [row_c]);
            row.push(out);
        }
    }
    let bound = b.var("t".into(), VarClass::Bound, VarKind::Continuous, 0.0, f64::INFINITY);
    let counts: Vec<Literal> = shell_counts.iter().flatten().map(|&v| Literal::pos(v)).collect();
    let rows: Vec<Constraint> = counts
        .iter()
        .map(|lit| {
            let name = format!("max_{}", &b.lp.var_name(lit.var)[5..]);
            LinExpr::var(lit.var).add_term(bound, -1.0).into_constraint(name, Sense::Le, 0.0)
        })
        .collect();
    b.push(GateKind::Max, bound, counts, rows);
    b.lp.objective = vec![(bound, 1.0)];

    Ok(MilpModel { lp: b.lp, classes: b.classes, gates: b.gates, positions, shell_counts, bound })
}

/// Fix the position variables and derive every other variable gate by gate.
///
/// Each binary gate output is found by testing both values against the gate's
/// own rows; exactly one must fit. The completed assignment is then checked
/// against every row and bound of the model.
pub fn propagate(model: &MilpModel, positions: &[[f64; 3]]) -> Result<Vec<f64>> {
    if positions.len() != model.positions.len() {
        return Err(Error::invalid("positions", format!("expected {} LiDARs", model.positions.len())));
    }
    let mut values = vec![f64::NAN; model.lp.variables.len()];
    for (vars, xyz) in model.positions.iter().zip(positions) {
        for (v, &x) in vars.iter().zip(xyz) {
            values[v.0] = x;
        }
    }
    let fail = |v: VarId, reason: String| Error::Propagation { var: model.lp.var_name(v).to_string(), reason };
    for gate in &model.gates {
        match gate.kind {
            GateKind::IfThenElse | GateKind::And | GateKind::Or => {
                let mut fits = [false; 2];
                for (slot, x) in fits.iter_mut().zip([0.0, 1.0]) {
                    values[gate.output.0] = x;
                    *slot = gate.rows.iter().all(|&i| model.lp.constraints[i].is_satisfied(&values));
                }
                values[gate.output.0] = match fits {
                    [true, false] => 0.0,
                    [false, true] => 1.0,
                    [false, false] => return Err(fail(gate.output, "no feasible value (inside the ε gap)".into())),
                    [true, true] => return Err(fail(gate.output, "both values feasible".into())),
                };
            }
            GateKind::Sum => {
                values[gate.output.0] = gate.inputs.iter().map(|l| values[l.var.0]).sum();
            }
            GateKind::Max => {
                values[gate.output.0] = gate.inputs.iter().map(|l| values[l.var.0]).fold(0.0, f64::max);
            }
        }
        if let Some(&i) = gate.rows.iter().find(|&&i| !model.lp.constraints[i].is_satisfied(&values)) {
            return Err(fail(gate.output, format!("row {} violated", model.lp.constraints[i].name)));
        }
    }
    if let Some(c) = model.lp.constraints.iter().find(|c| !c.is_satisfied(&values)) {
        return Err(Error::Propagation { var: "-".into(), reason: format!("row {} violated", c.name) });
    }
    if !model.lp.within_bounds(&values) {
        return Err(Error::Propagation { var: "-".into(), reason: "a variable is out of bounds".into() });
    }
    Ok(values)
}

/// `counts[s][k]` read from a propagated assignment.
pub fn shell_counts(model: &MilpModel, values: &[f64]) -> Vec<Vec<usize>> {
    model.shell_counts.iter().map(|row| row.iter().map(|v| values[v.0] as usize).collect()).collect()
}

pub fn export_model(model: &MilpModel, path: &Path) -> Result<()> {
    lp::write_lp_file(&model.lp, path)
}
