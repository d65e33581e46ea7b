//! Builtin templates and the ground-truth poses used by the synthetic benchmarks.

use nalgebra::{Rotation3, Unit};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

use super::Skeleton;

const TEMPLATES: &[(&str, &str)] = &[
    ("chain4", include_str!("../../templates/chain4.txt")),
    ("human22", include_str!("../../templates/human22.txt")),
    ("quadruped", include_str!("../../templates/quadruped.txt")),
    ("centaur", include_str!("../../templates/centaur.txt")),
    ("mermaid", include_str!("../../templates/mermaid.txt")),
];

pub fn builtin_names() -> Vec<&'static str> {
    TEMPLATES.iter().map(|(name, _)| *name).collect()
}

pub fn builtin(name: &str) -> Result<Skeleton> {
    let (_, text) = TEMPLATES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown builtin template `{name}`")))?;
    Skeleton::parse(text)
}

/// Ground-truth pose of a builtin template, used to synthesize benchmark
/// clouds. Templates without a documented pose return the rest pose.
pub fn builtin_pose(name: &str) -> Result<Skeleton> {
    let rest = builtin(name)?;
    match name {
        "chain4" => Ok(chain4_pose(rest)),
        "human22" => human22_pose(rest),
        _ => Ok(rest),
    }
}

/// The 4-bone benchmark: lengths 40, 35, 35, 30 (total 140), radii tapering
/// from 6 to 3, first bone 40 degrees off the template axis in the xy-plane,
/// then three 30 degree elbows: in-plane, out of plane, and in-plane back.
fn chain4_pose(mut s: Skeleton) -> Skeleton {
    let lengths = [40.0, 35.0, 35.0, 30.0];
    let radii = [6.0, 5.0, 4.5, 4.0, 3.0];
    let z = Vec3::z();
    let mut dir = Rotation3::from_axis_angle(&Vec3::z_axis(), 40f64.to_radians()) * Vec3::x();
    let joints = s.chains()[0].joints.clone();
    let mut at = s.joints()[joints[0]].position;
    s.set_joint(joints[0], at, radii[0]);
    for (i, &length) in lengths.iter().enumerate() {
        if i > 0 {
            let axis = match i {
                1 => z,
                2 => dir.cross(&z).normalize(),
                _ => -z,
            };
            dir = Rotation3::from_axis_angle(&Unit::new_normalize(axis), 30f64.to_radians()) * dir;
        }
        at += dir * length;
        s.set_joint(joints[i + 1], at, radii[i + 1]);
    }
    s
}

/// A moderate human pose: mild changes of proportions, raised left arm,
/// bent right elbow and left knee, forward-leaning torso, turned head.
fn human22_pose(rest: Skeleton) -> Result<Skeleton> {
    let bone = |s: &Skeleton, id: &str| {
        s.bone_index(id)
            .ok_or_else(|| Error::InvalidArgument(format!("human22 lacks bone `{id}`")))
    };
    let mut s = rest.scale_pelvis(1.06)?;
    s = s.pose_transform(bone(&s, "pelvis_s")?, &Vec3::y(), 8f64.to_radians())?;
    for (id, factor) in [
        ("spine_lower", 1.05),
        ("spine_upper", 0.95),
        ("thigh_l", 1.06),
        ("thigh_r", 1.06),
        ("shin_l", 0.96),
        ("shin_r", 0.96),
        ("upper_arm_l", 1.08),
        ("upper_arm_r", 1.08),
        ("forearm_l", 0.94),
        ("forearm_r", 0.94),
    ] {
        let k = bone(&s, id)?;
        s = s.set_length(k, s.bone_length(k) * factor)?;
    }
    for (id, scale) in [
        ("waist", 0.92),
        ("chest", 1.08),
        ("knee_l", 1.1),
        ("knee_r", 1.1),
        ("elbow_l", 0.9),
        ("elbow_r", 0.9),
        ("crown", 1.05),
    ] {
        let j = s
            .joint_index(id)
            .ok_or_else(|| Error::InvalidArgument(format!("human22 lacks joint `{id}`")))?;
        let r = s.joints()[j].radius * scale;
        let p = s.joints()[j].position;
        s.set_joint(j, p, r);
    }
    let x = Vec3::x();
    let z = Vec3::z();
    for (id, axis, degrees) in [
        ("spine_upper", x, 10.0),
        ("head", Vec3::new(1.0, 0.0, 0.3), -15.0),
        ("upper_arm_l", z, 45.0),
        ("forearm_r", x, -50.0),
        ("thigh_l", x, -20.0),
        ("shin_l", x, 35.0),
        ("upper_arm_r", x, -15.0),
    ] {
        s = s.pose_transform(bone(&s, id)?, &axis, f64::to_radians(degrees))?;
    }
    for k in 0..s.bones().len() {
        s.try_geometry(k)?;
    }
    Ok(s)
}
