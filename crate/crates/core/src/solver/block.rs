//! Parameter blocks: small sets of skeleton parameters optimized together.
//!
//! Every block is parameterized relative to the current skeleton, so the
//! zero vector is the current state. Derivatives are evaluated at zero, which
//! keeps the local frames trivial; the LM loop re-linearizes after each
//! accepted step.

use nalgebra::{Rotation3, Unit};

use crate::geometry::{perpendicular, BoneDelta, BoneGeometry, Vec3};
use crate::skeleton::Skeleton;

/// Orthonormal frame centered on a fixed joint with its x-axis along a bone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalFrame {
    pub origin: Vec3,
    pub x: Vec3,
    pub y: Vec3,
    pub z: Vec3,
}

impl LocalFrame {
    /// Frame at `origin` whose x-axis points toward `toward`.
    pub fn new(origin: Vec3, toward: Vec3) -> Self {
        let x = (toward - origin).normalize();
        let y = perpendicular(&x);
        Self {
            origin,
            x,
            y,
            z: x.cross(&y),
        }
    }

    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        let d = p - self.origin;
        Vec3::new(d.dot(&self.x), d.dot(&self.y), d.dot(&self.z))
    }

    /// Unit direction after rotating the x-axis by `theta1` about y, then
    /// `theta2` about z.
    pub fn direction(&self, theta1: f64, theta2: f64) -> Vec3 {
        let (s1, c1) = theta1.sin_cos();
        let (s2, c2) = theta2.sin_cos();
        self.x * (c2 * c1) + self.y * s2 + self.z * (c2 * s1)
    }
}

/// A set of parameters optimized jointly by one LM run.
#[derive(Clone, Debug, PartialEq)]
pub enum ParameterBlock {
    /// Two angles rotating `bone` about its `fixed` joint. Everything past
    /// the free joint turns with it.
    Rotate { bone: usize, fixed: usize },
    /// Length of `bone`, measured from its `fixed` joint; the free joint and
    /// everything past it translate along the axis.
    Length { bone: usize, fixed: usize },
    /// Radii of the listed joints.
    Radii { joints: Vec<usize> },
    /// Rotation of the joint shared by two adjacent bones about the line
    /// through their far joints.
    PairRotate { first: usize, second: usize },
    /// Length of `bone`, moving the joint it shares with `other` along its
    /// axis; the far joint of `other` stays put.
    PairLength { bone: usize, other: usize },
    /// Rotation vector and log-scale of the pelvis triplet about the root.
    Pelvis,
    /// Several blocks solved jointly; parameters are concatenated in order.
    Joint(Vec<ParameterBlock>),
}

/// First-order motion of one joint along one parameter.
#[derive(Clone, Copy, Debug)]
struct JointRate {
    joint: usize,
    position: Vec3,
    radius: f64,
}

fn shared_joint(s: &Skeleton, first: usize, second: usize) -> usize {
    let (a, b) = (&s.bones()[first], &s.bones()[second]);
    if b.has_joint(a.joint_a) {
        a.joint_a
    } else {
        a.joint_b
    }
}

impl ParameterBlock {
    pub fn dim(&self) -> usize {
        match self {
            ParameterBlock::Rotate { .. } => 2,
            ParameterBlock::Length { .. }
            | ParameterBlock::PairRotate { .. }
            | ParameterBlock::PairLength { .. } => 1,
            ParameterBlock::Radii { joints } => joints.len(),
            ParameterBlock::Pelvis => 4,
            ParameterBlock::Joint(parts) => parts.iter().map(ParameterBlock::dim).sum(),
        }
    }

    /// True when the block has no well-defined effect on `s`, e.g. a pair
    /// rotation about an axis that passes through the shared joint.
    pub fn is_degenerate(&self, s: &Skeleton) -> bool {
        match self {
            ParameterBlock::PairRotate { first, second } => {
                let mid = shared_joint(s, *first, *second);
                let a = s.joints()[s.bones()[*first].other_end(mid)].position;
                let c = s.joints()[s.bones()[*second].other_end(mid)].position;
                let b = s.joints()[mid].position;
                let axis = c - a;
                let scale = (b - a).norm().max(axis.norm());
                axis.norm() <= 1e-12 * scale
                    || axis.normalize().cross(&(b - a)).norm() <= 1e-9 * scale
            }
            ParameterBlock::Radii { joints } => joints.is_empty(),
            ParameterBlock::Pelvis => s.pelvis_bones().is_empty(),
            ParameterBlock::Joint(parts) => {
                parts.is_empty() || parts.iter().any(|b| b.is_degenerate(s))
            }
            _ => false,
        }
    }

    fn rates(&self, s: &Skeleton) -> Vec<Vec<JointRate>> {
        let pos = |j: usize| s.joints()[j].position;
        let moving = |joint, position| JointRate {
            joint,
            position,
            radius: 0.0,
        };
        match self {
            ParameterBlock::Rotate { bone, fixed } => {
                let free = s.bones()[*bone].other_end(*fixed);
                let frame = LocalFrame::new(pos(*fixed), pos(free));
                let l = (pos(free) - pos(*fixed)).norm();
                vec![
                    vec![moving(free, frame.z * l)],
                    vec![moving(free, frame.y * l)],
                ]
            }
            ParameterBlock::Length { bone, fixed } => {
                let free = s.bones()[*bone].other_end(*fixed);
                vec![vec![moving(free, (pos(free) - pos(*fixed)).normalize())]]
            }
            ParameterBlock::Radii { joints } => joints
                .iter()
                .map(|&joint| {
                    vec![JointRate {
                        joint,
                        position: Vec3::zeros(),
                        radius: 1.0,
                    }]
                })
                .collect(),
            ParameterBlock::PairRotate { first, second } => {
                let mid = shared_joint(s, *first, *second);
                let a = pos(s.bones()[*first].other_end(mid));
                let c = pos(s.bones()[*second].other_end(mid));
                let w = (c - a).normalize();
                vec![vec![moving(mid, w.cross(&(pos(mid) - a)))]]
            }
            ParameterBlock::PairLength { bone, other } => {
                let mid = shared_joint(s, *bone, *other);
                let far = s.bones()[*bone].other_end(mid);
                vec![vec![moving(mid, (pos(mid) - pos(far)).normalize())]]
            }
            ParameterBlock::Pelvis => {
                let root = pos(s.root());
                let ends: Vec<usize> = s
                    .pelvis_bones()
                    .iter()
                    .map(|&k| s.bones()[k].joint_b)
                    .collect();
                let mut out: Vec<Vec<JointRate>> = (0..3)
                    .map(|axis| {
                        let mut e = Vec3::zeros();
                        e[axis] = 1.0;
                        ends.iter()
                            .map(|&j| moving(j, e.cross(&(pos(j) - root))))
                            .collect()
                    })
                    .collect();
                out.push(ends.iter().map(|&j| moving(j, pos(j) - root)).collect());
                out
            }
            ParameterBlock::Joint(parts) => parts.iter().flat_map(|b| b.rates(s)).collect(),
        }
    }

    /// Largest magnitude each parameter may take in a single step.
    pub fn step_limits(&self, s: &Skeleton) -> Vec<f64> {
        let length_scale = |bone: usize| {
            let b = &s.bones()[bone];
            let r = s.joints()[b.joint_a]
                .radius
                .max(s.joints()[b.joint_b].radius);
            MAX_LENGTH_STEP * s.bone_length(bone).max(r)
        };
        match self {
            ParameterBlock::Rotate { .. } => vec![MAX_ANGLE_STEP; 2],
            ParameterBlock::PairRotate { .. } => vec![MAX_ANGLE_STEP],
            ParameterBlock::Length { bone, .. } | ParameterBlock::PairLength { bone, .. } => {
                vec![length_scale(*bone)]
            }
            ParameterBlock::Radii { joints } => joints
                .iter()
                .map(|&j| {
                    let longest = s
                        .incident(j)
                        .iter()
                        .map(|&k| s.bone_length(k))
                        .fold(s.joints()[j].radius, f64::max);
                    MAX_LENGTH_STEP * longest
                })
                .collect(),
            ParameterBlock::Pelvis => vec![
                MAX_ANGLE_STEP,
                MAX_ANGLE_STEP,
                MAX_ANGLE_STEP,
                MAX_LENGTH_STEP,
            ],
            ParameterBlock::Joint(parts) => parts.iter().flat_map(|b| b.step_limits(s)).collect(),
        }
    }

    /// Per-parameter first-order change of bone `k`.
    pub fn bone_deltas(&self, s: &Skeleton, k: usize) -> Vec<BoneDelta> {
        let bone = &s.bones()[k];
        self.rates(s)
            .iter()
            .map(|rates| {
                let mut d = BoneDelta::default();
                for r in rates {
                    if r.joint == bone.joint_a {
                        d.c1 += r.position;
                        d.r1 += r.radius;
                    }
                    if r.joint == bone.joint_b {
                        d.c2 += r.position;
                        d.r2 += r.radius;
                    }
                }
                d
            })
            .collect()
    }

    /// The skeleton displaced by `params`, or `None` when the result would
    /// violate a geometric invariant. Lengths are clamped to stay feasible
    /// and radii to stay non-negative.
    pub fn apply(&self, s: &Skeleton, params: &[f64]) -> Option<Skeleton> {
        debug_assert_eq!(params.len(), self.dim());
        if params.iter().any(|p| !p.is_finite()) {
            return None;
        }
        if let ParameterBlock::Joint(parts) = self {
            let mut out = s.clone();
            let mut offset = 0;
            for part in parts {
                let n = part.dim();
                out = part.apply(&out, &params[offset..offset + n])?;
                offset += n;
            }
            return Some(out);
        }
        let pos = |j: usize| s.joints()[j].position;
        let mut out = s.clone();
        let touched: Vec<usize> = match self {
            ParameterBlock::Rotate { bone, fixed } => {
                let free = s.bones()[*bone].other_end(*fixed);
                let frame = LocalFrame::new(pos(*fixed), pos(free));
                let dir = frame.direction(params[0], params[1]);
                // Axis and angle from the cross product stay accurate for tiny
                // steps, where an arccosine of the dot product does not.
                let cross = frame.x.cross(&dir);
                let angle = cross.norm().atan2(frame.x.dot(&dir));
                let rot = Unit::try_new(cross, 0.0).map_or_else(Rotation3::identity, |axis| {
                    Rotation3::from_axis_angle(&axis, angle)
                });
                let part = s.beyond(*bone, free);
                out.rotate_about(&part, &frame.origin, &rot);
                vec![free]
            }
            ParameterBlock::Length { bone, fixed } => {
                let free = s.bones()[*bone].other_end(*fixed);
                let axis = pos(free) - pos(*fixed);
                let l = feasible_length(
                    axis.norm() + params[0],
                    s.joints()[*fixed].radius,
                    s.joints()[free].radius,
                );
                out.move_joint(free, pos(*fixed) + axis.normalize() * l, &[*bone]);
                vec![free]
            }
            ParameterBlock::Radii { joints } => {
                for (&j, &dr) in joints.iter().zip(params) {
                    out.set_radius(j, (s.joints()[j].radius + dr).max(0.0));
                }
                joints.clone()
            }
            ParameterBlock::PairRotate { first, second } => {
                let mid = shared_joint(s, *first, *second);
                let a = pos(s.bones()[*first].other_end(mid));
                let c = pos(s.bones()[*second].other_end(mid));
                let rot = Rotation3::from_axis_angle(&Unit::new_normalize(c - a), params[0]);
                out.move_joint(mid, a + rot * (pos(mid) - a), &[*first, *second]);
                vec![mid]
            }
            ParameterBlock::PairLength { bone, other } => {
                let mid = shared_joint(s, *bone, *other);
                let far = s.bones()[*bone].other_end(mid);
                let axis = pos(mid) - pos(far);
                let l = feasible_length(
                    axis.norm() + params[0],
                    s.joints()[far].radius,
                    s.joints()[mid].radius,
                );
                out.move_joint(mid, pos(far) + axis.normalize() * l, &[*bone, *other]);
                vec![mid]
            }
            ParameterBlock::Pelvis => {
                let omega = Vec3::new(params[0], params[1], params[2]);
                let rot = Rotation3::new(omega);
                out.transform_pelvis(&rot, params[3].exp());
                vec![s.root()]
                    .into_iter()
                    .chain(s.pelvis_bones().iter().map(|&k| s.bones()[k].joint_b))
                    .collect()
            }
            ParameterBlock::Joint(_) => unreachable!("joint blocks are applied part by part"),
        };
        out.update_connectors();
        out.is_valid_around(&touched).then_some(out)
    }

    /// Bones whose points drive this block.
    pub fn default_targets(&self, s: &Skeleton) -> Vec<usize> {
        match self {
            ParameterBlock::Rotate { bone, .. } | ParameterBlock::Length { bone, .. } => {
                vec![*bone]
            }
            ParameterBlock::PairRotate { first, second } => vec![*first, *second],
            ParameterBlock::PairLength { bone, other } => vec![*bone, *other],
            ParameterBlock::Radii { joints } => {
                let mut out: Vec<usize> = joints
                    .iter()
                    .flat_map(|&j| s.incident(j).iter().copied())
                    .collect();
                out.sort_unstable();
                out.dedup();
                out
            }
            ParameterBlock::Pelvis => s.pelvis_bones(),
            ParameterBlock::Joint(parts) => {
                let mut out: Vec<usize> = parts.iter().flat_map(|b| b.default_targets(s)).collect();
                out.sort_unstable();
                out.dedup();
                out
            }
        }
    }
}

/// Largest rotation, in radians, of a single step.
const MAX_ANGLE_STEP: f64 = 0.5;
/// Largest length or radius change of a single step, relative to the bone.
const MAX_LENGTH_STEP: f64 = 0.5;

/// Shortest admissible bone, as a fraction of its larger radius.
const MIN_LENGTH_FRACTION: f64 = 1e-3;

/// Pushes `length` just above the smallest value keeping the bone a
/// non-degenerate cone.
fn feasible_length(length: f64, r1: f64, r2: f64) -> f64 {
    let floor = ((r2 - r1).abs() * (1.0 + 1e-6)).max(MIN_LENGTH_FRACTION * r1.max(r2)) + 1e-9;
    if BoneGeometry::is_feasible(length, r1, r2) && length >= floor {
        length
    } else {
        floor
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn frame_is_right_handed() {
        let f = LocalFrame::new(Vec3::new(1.0, 2.0, 3.0), Vec3::new(2.0, 5.0, -1.0));
        assert_relative_eq!(f.x.cross(&f.y), f.z, epsilon = 1e-12);
        assert_relative_eq!(f.x.dot(&f.y), 0.0, epsilon = 1e-12);
        assert_relative_eq!(f.direction(0.0, 0.0), f.x, epsilon = 1e-15);
        assert_relative_eq!(
            f.to_local(&(f.origin + f.x * 2.0)),
            Vec3::new(2.0, 0.0, 0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn zero_step_is_identity() {
        let s = crate::skeleton::builtin("chain4").unwrap();
        let blocks = [
            ParameterBlock::Rotate { bone: 0, fixed: 0 },
            ParameterBlock::Length { bone: 1, fixed: 1 },
            ParameterBlock::PairRotate {
                first: 0,
                second: 1,
            },
            ParameterBlock::PairLength { bone: 1, other: 2 },
            ParameterBlock::Radii { joints: vec![2] },
        ];
        for b in blocks {
            let out = b.apply(&s, &vec![0.0; b.dim()]).unwrap();
            for (x, y) in s.joints().iter().zip(out.joints()) {
                assert!((x.position - y.position).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn pair_length_keeps_far_joints() {
        let s = crate::skeleton::builtin("chain4").unwrap();
        let out = ParameterBlock::PairLength { bone: 1, other: 2 }
            .apply(&s, &[5.0])
            .unwrap();
        assert_eq!(out.joints()[1].position, s.joints()[1].position);
        assert_eq!(out.joints()[3].position, s.joints()[3].position);
        assert_relative_eq!(out.bone_length(1), 35.0, epsilon = 1e-12);
        assert_relative_eq!(out.bone_length(2), 25.0, epsilon = 1e-12);
    }
}
