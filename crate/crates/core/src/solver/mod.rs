//! Levenberg-Marquardt fitting of bones and joints.
//!
//! Each fit is a sequence of parameter blocks, each solved by damped least
//! squares on the signed point residuals with the point-to-bone assignment
//! frozen; the assignment is refreshed between blocks. The projection case
//! of each point is frozen within one linearization.

mod block;
mod simultaneous;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::energy::Assignment;
use crate::error::{Error, Result};
use crate::geometry::{project, residual_gradient, OrientedPoint, ProjectionMode};
use crate::skeleton::Skeleton;

pub use block::{LocalFrame, ParameterBlock};
pub use simultaneous::optimize_simultaneous;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmSettings {
    pub lambda0: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// Linearizations per block.
    pub max_inner_iters: usize,
    /// A block stops once an accepted step lowers its energy by less than this
    /// fraction.
    pub rel_tol: f64,
    /// Damping above which a block gives up looking for a descent step.
    pub lambda_max: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            lambda0: 0.01,
            lambda_up: 10.0,
            lambda_down: 10.0,
            max_inner_iters: 50,
            rel_tol: 1e-6,
            lambda_max: 1e10,
        }
    }
}

/// Damping and energy history of the most recent block.
#[derive(Clone, Debug, PartialEq)]
pub struct LmState {
    pub lambda: f64,
    pub last_energy: f64,
    pub step_count: usize,
    /// Energies after each accepted step, starting with the initial energy.
    pub history: Vec<f64>,
}

impl LmState {
    pub fn new(settings: &LmSettings) -> Self {
        Self {
            lambda: settings.lambda0,
            last_energy: f64::INFINITY,
            step_count: 0,
            history: Vec::new(),
        }
    }
}

/// The data side of a fit: the cloud and the projection mode.
#[derive(Clone, Copy, Debug)]
pub struct Problem<'a> {
    pub points: &'a [OrientedPoint],
    pub mode: ProjectionMode,
    pub settings: LmSettings,
}

impl<'a> Problem<'a> {
    pub fn new(points: &'a [OrientedPoint], mode: ProjectionMode) -> Self {
        Self {
            points,
            mode,
            settings: LmSettings::default(),
        }
    }

    /// The same problem with at most `steps` LM steps per block.
    pub fn with_steps(&self, steps: usize) -> Self {
        let mut out = *self;
        out.settings.max_inner_iters = steps.clamp(1, self.settings.max_inner_iters.max(1));
        out
    }
}

/// `(point, bone)` pairs of the points currently assigned to `bones`.
pub fn members_of(assignment: &Assignment, bones: &[usize]) -> Vec<(usize, usize)> {
    let mut bones = bones.to_vec();
    bones.sort_unstable();
    bones.dedup();
    bones
        .iter()
        .flat_map(|&k| assignment.members(k).iter().map(move |&i| (i, k)))
        .collect()
}

/// Signed residuals of `members` against their bones, freshly projected.
pub fn residuals(problem: &Problem, s: &Skeleton, members: &[(usize, usize)]) -> Vec<f64> {
    let geoms = s.geometries();
    members
        .par_iter()
        .map(|&(i, k)| project(&problem.points[i], &geoms[k], problem.mode).residual)
        .collect()
}

fn energy(problem: &Problem, s: &Skeleton, members: &[(usize, usize)]) -> f64 {
    residuals(problem, s, members).iter().map(|r| r * r).sum()
}

/// Residuals and analytic Jacobian of `members` with respect to `block`,
/// evaluated at the current skeleton.
pub fn linearize(
    problem: &Problem,
    s: &Skeleton,
    block: &ParameterBlock,
    members: &[(usize, usize)],
) -> (DVector<f64>, DMatrix<f64>) {
    let geoms = s.geometries();
    let dim = block.dim();
    let mut deltas: Vec<Option<Vec<crate::geometry::BoneDelta>>> = vec![None; geoms.len()];
    for &(_, k) in members {
        if deltas[k].is_none() {
            deltas[k] = Some(block.bone_deltas(s, k));
        }
    }
    let rows: Vec<(f64, Vec<f64>)> = members
        .par_iter()
        .map(|&(i, k)| {
            let p = &problem.points[i];
            let proj = project(p, &geoms[k], problem.mode);
            let grad = residual_gradient(&p.position, &geoms[k], proj.formula);
            let d = deltas[k]
                .as_ref()
                .expect("deltas computed for every member bone");
            (
                proj.residual,
                d.iter().map(|delta| grad.apply(delta)).collect(),
            )
        })
        .collect();
    let mut r = DVector::zeros(rows.len());
    let mut j = DMatrix::zeros(rows.len(), dim);
    for (row, (res, grads)) in rows.into_iter().enumerate() {
        r[row] = res;
        for (col, g) in grads.into_iter().enumerate() {
            j[(row, col)] = g;
        }
    }
    (r, j)
}

/// Runs LM on one block with a frozen assignment. Only steps that strictly
/// lower the energy of `members` are applied.
pub fn run_block(
    problem: &Problem,
    s: &mut Skeleton,
    block: &ParameterBlock,
    members: &[(usize, usize)],
    state: &mut LmState,
) -> f64 {
    let settings = &problem.settings;
    let mut current = energy(problem, s, members);
    state.lambda = settings.lambda0;
    state.history.clear();
    state.history.push(current);
    state.last_energy = current;
    if members.is_empty() || block.is_degenerate(s) {
        return current;
    }
    let dim = block.dim();
    for _ in 0..settings.max_inner_iters {
        if current <= 0.0 {
            break;
        }
        let (r, j) = linearize(problem, s, block, members);
        let limits = block.step_limits(s);
        let g = j.tr_mul(&r);
        if g.iter().all(|v| *v == 0.0) {
            break;
        }
        let a = j.tr_mul(&j);
        let max_diag = (0..dim).map(|i| a[(i, i)]).fold(0.0, f64::max);
        let mut accepted = None;
        while state.lambda <= settings.lambda_max {
            let mut damped = a.clone();
            for i in 0..dim {
                damped[(i, i)] += state.lambda * a[(i, i)].max(1e-12 * max_diag).max(1e-300);
            }
            let step = damped.cholesky().map(|c| c.solve(&(-&g)));
            let step = step.filter(|d| d.iter().zip(&limits).all(|(x, m)| x.abs() <= *m));
            if let Some(step) = step {
                if let Some(candidate) = block.apply(s, step.as_slice()) {
                    let e = energy(problem, &candidate, members);
                    if e < current {
                        accepted = Some((candidate, e));
                        break;
                    }
                }
            }
            state.lambda *= settings.lambda_up;
        }
        let Some((candidate, e)) = accepted else {
            break;
        };
        let decrease = (current - e) / current;
        *s = candidate;
        current = e;
        state.lambda /= settings.lambda_down;
        state.step_count += 1;
        state.history.push(current);
        if decrease < settings.rel_tol {
            break;
        }
    }
    state.last_energy = current;
    current
}

/// Bones whose geometry differs between two states of the same skeleton.
pub fn changed_bones(before: &Skeleton, after: &Skeleton) -> Vec<usize> {
    let moved: Vec<bool> = before
        .joints()
        .iter()
        .zip(after.joints())
        .map(|(a, b)| a.position != b.position || a.radius != b.radius)
        .collect();
    before
        .bones()
        .iter()
        .enumerate()
        .filter(|(_, b)| moved[b.joint_a] || moved[b.joint_b])
        .map(|(k, _)| k)
        .collect()
}

/// Runs one block on the current assignment of `targets`, then refreshes
/// the assignment. Returns the block energy after the step.
pub fn step_block(
    problem: &Problem,
    s: &mut Skeleton,
    assignment: &mut Assignment,
    block: &ParameterBlock,
    targets: &[usize],
    state: &mut LmState,
) -> f64 {
    let members = members_of(assignment, targets);
    let before = s.clone();
    let e = run_block(problem, s, block, &members, state);
    let changed = changed_bones(&before, s);
    assignment.update(problem.points, s, &changed);
    e
}

/// Default rounds of a one-bone fit.
const ONE_BONE_ROUNDS: usize = 4;
/// Default LM steps per one-bone block.
const ONE_BONE_STEPS: usize = 50;

/// What a one-bone fit optimizes besides the two rotation angles.
#[derive(Clone, Debug, PartialEq)]
pub struct OneBoneOptions {
    pub rotate: bool,
    pub length: bool,
    /// Joints whose radius is free.
    pub radii: Vec<usize>,
    /// Maximum rounds of (angles, length, radii).
    pub rounds: usize,
    /// LM steps per block before the points are reassigned.
    pub steps: usize,
}

impl OneBoneOptions {
    /// Angles, length and the radius of the free joint.
    pub fn full(s: &Skeleton, bone: usize, fixed: usize) -> Self {
        Self {
            rotate: true,
            length: true,
            radii: vec![s.bones()[bone].other_end(fixed)],
            rounds: ONE_BONE_ROUNDS,
            steps: ONE_BONE_STEPS,
        }
    }

    /// Angles only: the rough placement of a bone whose neighbours are not
    /// fitted yet, where a free length or radius would swallow their points.
    pub fn rough() -> Self {
        Self {
            rotate: true,
            length: false,
            radii: Vec::new(),
            rounds: ONE_BONE_ROUNDS,
            steps: ONE_BONE_STEPS,
        }
    }
}

/// Fits one bone about its `fixed` joint: angles, then length, then radii,
/// reassigning points between blocks. Returns the bone energy.
pub fn optimize_one_bone(
    problem: &Problem,
    s: &mut Skeleton,
    assignment: &mut Assignment,
    bone: usize,
    fixed: usize,
    options: &OneBoneOptions,
    state: &mut LmState,
) -> Result<f64> {
    if assignment.members(bone).is_empty() {
        return Err(Error::EmptyAssignment {
            bone: s.bones()[bone].id.clone(),
        });
    }
    let mut blocks = Vec::new();
    if options.rotate {
        blocks.push(ParameterBlock::Rotate { bone, fixed });
    }
    if options.length {
        blocks.push(ParameterBlock::Length { bone, fixed });
    }
    if !options.radii.is_empty() {
        blocks.push(ParameterBlock::Radii {
            joints: options.radii.clone(),
        });
    }
    let problem = &problem.with_steps(options.steps);
    let mut last = assignment.one_bone_energy(bone);
    for _ in 0..options.rounds.max(1) {
        for block in &blocks {
            if assignment.members(bone).is_empty() {
                return Ok(0.0);
            }
            step_block(problem, s, assignment, block, &[bone], state);
        }
        let now = assignment.one_bone_energy(bone);
        let settled = (last - now).abs() <= 1e-6 * last.max(f64::MIN_POSITIVE);
        last = now;
        if settled {
            break;
        }
    }
    Ok(last)
}

/// Upper bound on two-bone solve/reassign rounds in one call.
const TWO_BONE_ROUNDS: usize = 30;
/// LM steps per two-bone round before the points are reassigned.
const TWO_BONE_STEPS: usize = 50;

/// Refines the joint shared by two adjacent bones with their far joints held
/// fixed. Pair rotation, both lengths and the shared radius are solved as one
/// block, since coordinate descent stalls in the length/radius valley. The
/// rotation is dropped when the bones are collinear. Returns the two-bone
/// energy.
pub fn optimize_two_bone(
    problem: &Problem,
    s: &mut Skeleton,
    assignment: &mut Assignment,
    first: usize,
    second: usize,
    state: &mut LmState,
) -> Result<f64> {
    if assignment.members(first).is_empty() && assignment.members(second).is_empty() {
        return Err(Error::EmptyAssignment {
            bone: s.bones()[first].id.clone(),
        });
    }
    let (a, b) = (&s.bones()[first], &s.bones()[second]);
    let mid = if b.has_joint(a.joint_a) {
        a.joint_a
    } else {
        a.joint_b
    };
    let targets = [first, second];
    let mut parts = vec![
        ParameterBlock::PairRotate { first, second },
        ParameterBlock::PairLength {
            bone: first,
            other: second,
        },
        ParameterBlock::PairLength {
            bone: second,
            other: first,
        },
        ParameterBlock::Radii { joints: vec![mid] },
    ];
    if parts[0].is_degenerate(s) {
        parts.remove(0);
    }
    let block = ParameterBlock::Joint(parts);
    let problem = &problem.with_steps(TWO_BONE_STEPS);
    let mut last = assignment.two_bone_energy(first, second);
    for _ in 0..TWO_BONE_ROUNDS {
        step_block(problem, s, assignment, &block, &targets, state);
        let now = assignment.two_bone_energy(first, second);
        let settled = (last - now).abs() <= 1e-6 * last.max(f64::MIN_POSITIVE);
        last = now;
        if settled {
            break;
        }
    }
    Ok(last)
}

/// Rotates and scales the pelvis triplet about the root against the points
/// assigned to it.
pub fn optimize_pelvis(
    problem: &Problem,
    s: &mut Skeleton,
    assignment: &mut Assignment,
    state: &mut LmState,
) -> f64 {
    let targets = s.pelvis_bones();
    if targets.is_empty() {
        return 0.0;
    }
    step_block(
        problem,
        s,
        assignment,
        &ParameterBlock::Pelvis,
        &targets,
        state,
    )
}
