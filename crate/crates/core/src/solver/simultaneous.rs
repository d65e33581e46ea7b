//! Baseline that updates every joint at once.
//!
//! Each joint is fitted against a frozen snapshot as if its neighbours stayed
//! put: interior joints by the two-bone fit, free extremities by the one-bone
//! fit. All updates are then applied together and the points reassigned.

use crate::energy::{assign, Assignment};
use crate::error::Result;
use crate::skeleton::Skeleton;

use super::{
    members_of, optimize_one_bone, optimize_two_bone, run_block, LmState, OneBoneOptions,
    ParameterBlock, Problem,
};

/// Free radii of a one-bone fit at a chain extremity: the free joint, plus
/// the fixed joint when nothing else hangs off it.
pub fn extremity_radii(s: &Skeleton, bone: usize, fixed: usize) -> Vec<usize> {
    let mut radii = vec![s.bones()[bone].other_end(fixed)];
    if s.is_leaf(fixed) {
        radii.push(fixed);
    }
    radii
}

struct JointUpdate {
    joint: usize,
    position: crate::geometry::Vec3,
    radius: f64,
}

/// One sweep of simultaneous joint updates followed by a full reassignment.
/// Returns the total energy afterwards.
pub fn optimize_simultaneous(
    problem: &Problem,
    s: &mut Skeleton,
    assignment: &mut Assignment,
    state: &mut LmState,
) -> Result<f64> {
    let snapshot = s.clone();
    let mut updates: Vec<(Vec<usize>, JointUpdate)> = Vec::new();
    for chain in snapshot.chains() {
        let bones = &chain.bones;
        let joints = &chain.joints;
        if bones.len() == 1 {
            // Nothing to couple: this is exactly the one-bone fit.
            let fixed = joints[0];
            let options = OneBoneOptions {
                radii: extremity_radii(&snapshot, bones[0], fixed),
                ..OneBoneOptions::full(&snapshot, bones[0], fixed)
            };
            let mut copy = snapshot.clone();
            let mut a = assignment.clone();
            if optimize_one_bone(problem, &mut copy, &mut a, bones[0], fixed, &options, state)
                .is_ok()
            {
                for &j in joints {
                    let joint = &copy.joints()[j];
                    updates.push((
                        bones.clone(),
                        JointUpdate {
                            joint: j,
                            position: joint.position,
                            radius: joint.radius,
                        },
                    ));
                }
            }
            continue;
        }
        let mut record = |copy: &Skeleton, j: usize| {
            let joint = &copy.joints()[j];
            updates.push((
                bones.clone(),
                JointUpdate {
                    joint: j,
                    position: joint.position,
                    radius: joint.radius,
                },
            ));
        };
        for i in 1..bones.len() {
            let mut copy = snapshot.clone();
            let mut a = assignment.clone();
            if optimize_two_bone(problem, &mut copy, &mut a, bones[i - 1], bones[i], state).is_ok()
            {
                record(&copy, joints[i]);
            }
        }
        let ends = [
            (
                bones[bones.len() - 1],
                joints[bones.len()],
                joints[bones.len() - 1],
            ),
            (bones[0], joints[0], joints[1]),
        ];
        for (bone, end, inner) in ends {
            if !snapshot.is_leaf(end) {
                continue;
            }
            let mut copy = snapshot.clone();
            let mut a = assignment.clone();
            if end == snapshot.root() {
                let members = members_of(&a, &[bone]);
                let block = ParameterBlock::Radii { joints: vec![end] };
                run_block(problem, &mut copy, &block, &members, state);
                record(&copy, end);
            } else {
                let options = OneBoneOptions {
                    radii: vec![end],
                    ..OneBoneOptions::full(&snapshot, bone, inner)
                };
                if optimize_one_bone(problem, &mut copy, &mut a, bone, inner, &options, state)
                    .is_ok()
                {
                    record(&copy, end);
                }
            }
        }
    }

    for (keep, update) in updates {
        let mut candidate = s.clone();
        candidate.move_joint(update.joint, update.position, &keep);
        candidate.set_radius(update.joint, update.radius);
        candidate.update_connectors();
        if candidate.is_valid_around(&[update.joint]) {
            *s = candidate;
        }
    }
    *assignment = assign(problem.points, s, problem.mode);
    Ok(assignment.total_energy())
}
