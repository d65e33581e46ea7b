//! Articulated sphere-mesh skeletons.
//!
//! A [`Skeleton`] is a tree of joints (sphere centers with a radius shared by
//! every incident bone) connected by bones. Bones are grouped into ordered
//! chains; two kinds of bones live outside chains: the pelvis triplet, rigid
//! up to a common scale, and connector bones whose pose is derived from the
//! spine bone they extend.
//!
//! Joints and bones are stored sorted by id, so indices are stable for a
//! given template. Chains keep their declaration order, which is also the
//! registration order.

mod builtin;
mod template;

use std::collections::HashMap;

use nalgebra::{Rotation3, Unit};

use crate::error::{Error, Result};
use crate::geometry::{BoneGeometry, Vec3};

pub use builtin::{builtin, builtin_names, builtin_pose};
pub use template::format_float;

/// Ratio bound used when a template enables proportion bounds without a value.
pub const DEFAULT_PROPORTION_BOUND: f64 = 4.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    pub id: String,
    pub position: Vec3,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bone {
    pub id: String,
    /// Parent-side joint.
    pub joint_a: usize,
    pub joint_b: usize,
    pub pelvis: bool,
    /// Length fraction of the spine bone this connector extends.
    pub connector: Option<f64>,
}

impl Bone {
    /// A bone whose parameters are optimized directly.
    pub fn is_regular(&self) -> bool {
        !self.pelvis && self.connector.is_none()
    }

    pub fn other_end(&self, joint: usize) -> usize {
        if joint == self.joint_a {
            self.joint_b
        } else {
            self.joint_a
        }
    }

    pub fn has_joint(&self, joint: usize) -> bool {
        self.joint_a == joint || self.joint_b == joint
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    pub id: String,
    /// Bone indices in forward order.
    pub bones: Vec<usize>,
    /// Joint indices along the chain, `bones.len() + 1` entries.
    pub joints: Vec<usize>,
    /// Joint held fixed when the chain is first registered.
    pub anchor: usize,
    pub reversible: bool,
}

/// Bone and joint declarations by id, before validation.
#[derive(Clone, Debug, Default)]
pub struct SkeletonSpec {
    pub joints: Vec<Joint>,
    pub bones: Vec<BoneSpec>,
    pub chains: Vec<(String, Vec<String>)>,
    pub root: Option<String>,
    pub bound: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct BoneSpec {
    pub id: String,
    pub joint_a: String,
    pub joint_b: String,
    pub pelvis: bool,
    pub connector: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    joints: Vec<Joint>,
    bones: Vec<Bone>,
    chains: Vec<Chain>,
    root: usize,
    bound: Option<f64>,
    incident: Vec<Vec<usize>>,
    parent: Vec<Option<usize>>,
}

impl Skeleton {
    /// Validates a declaration and builds the skeleton.
    pub fn from_spec(spec: SkeletonSpec) -> Result<Self> {
        let mut joints = spec.joints;
        joints.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in joints.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::Validation(format!(
                    "duplicate joint id `{}`",
                    pair[0].id
                )));
            }
        }
        for j in &joints {
            if !j.position.iter().all(|v| v.is_finite()) {
                return Err(Error::Validation(format!(
                    "joint `{}` has a non-finite position",
                    j.id
                )));
            }
            if !j.radius.is_finite() || j.radius < 0.0 {
                return Err(Error::Validation(format!(
                    "joint `{}` has an invalid radius",
                    j.id
                )));
            }
        }
        let joint_idx: HashMap<&str, usize> = joints
            .iter()
            .enumerate()
            .map(|(i, j)| (j.id.as_str(), i))
            .collect();
        let lookup_joint = |id: &str, bone: &str| {
            joint_idx.get(id).copied().ok_or_else(|| {
                Error::Validation(format!("bone `{bone}` references undefined joint `{id}`"))
            })
        };

        let mut bone_specs = spec.bones;
        bone_specs.sort_by(|a, b| a.id.cmp(&b.id));
        let mut bones = Vec::with_capacity(bone_specs.len());
        for (i, b) in bone_specs.iter().enumerate() {
            if i > 0 && bone_specs[i - 1].id == b.id {
                return Err(Error::Validation(format!("duplicate bone id `{}`", b.id)));
            }
            let joint_a = lookup_joint(&b.joint_a, &b.id)?;
            let joint_b = lookup_joint(&b.joint_b, &b.id)?;
            if joint_a == joint_b {
                return Err(Error::Validation(format!(
                    "bone `{}` joins a joint to itself",
                    b.id
                )));
            }
            if b.pelvis && b.connector.is_some() {
                return Err(Error::Validation(format!(
                    "bone `{}` cannot be both pelvis and connector",
                    b.id
                )));
            }
            if let Some(frac) = b.connector {
                if !(frac.is_finite() && frac > 0.0) {
                    return Err(Error::Validation(format!(
                        "connector `{}` needs a positive fraction",
                        b.id
                    )));
                }
            }
            bones.push(Bone {
                id: b.id.clone(),
                joint_a,
                joint_b,
                pelvis: b.pelvis,
                connector: b.connector,
            });
        }

        let root_id = spec
            .root
            .ok_or_else(|| Error::Validation("missing ROOT declaration".into()))?;
        let root = *joint_idx
            .get(root_id.as_str())
            .ok_or_else(|| Error::Validation(format!("root `{root_id}` is not a joint")))?;

        // Tree rooted at `root`, bones oriented away from it.
        let mut parent: Vec<Option<usize>> = vec![None; joints.len()];
        for (k, b) in bones.iter().enumerate() {
            if b.joint_b == root {
                return Err(Error::Validation(format!(
                    "bone `{}` points into the root",
                    b.id
                )));
            }
            if let Some(other) = parent[b.joint_b] {
                return Err(Error::Validation(format!(
                    "joint `{}` has two parent bones (`{}` and `{}`)",
                    joints[b.joint_b].id, bones[other].id, b.id
                )));
            }
            parent[b.joint_b] = Some(k);
        }
        let mut incident = vec![Vec::new(); joints.len()];
        for (k, b) in bones.iter().enumerate() {
            incident[b.joint_a].push(k);
            incident[b.joint_b].push(k);
        }
        for (j, joint) in joints.iter().enumerate() {
            if j != root && parent[j].is_none() {
                return Err(Error::Validation(format!(
                    "joint `{}` is not attached",
                    joint.id
                )));
            }
        }
        // Walk up from every joint; a cycle never reaches the root.
        for (start, joint) in joints.iter().enumerate() {
            let mut j = start;
            let mut steps = 0;
            while let Some(k) = parent[j] {
                j = bones[k].joint_a;
                steps += 1;
                if steps > bones.len() {
                    return Err(Error::Validation(format!(
                        "cycle through joint `{}`",
                        joint.id
                    )));
                }
            }
        }

        let pelvis: Vec<usize> = (0..bones.len()).filter(|&k| bones[k].pelvis).collect();
        if !(pelvis.is_empty() || pelvis.len() == 3) {
            return Err(Error::Validation(format!(
                "pelvis group has {} bones, expected 3",
                pelvis.len()
            )));
        }
        for &k in &pelvis {
            if bones[k].joint_a != root {
                return Err(Error::Validation(format!(
                    "pelvis bone `{}` does not start at the root",
                    bones[k].id
                )));
            }
        }
        for b in bones.iter().filter(|b| b.connector.is_some()) {
            let ok = parent[b.joint_a].is_some_and(|p| bones[p].is_regular());
            if !ok {
                return Err(Error::Validation(format!(
                    "connector `{}` has no spine bone to follow",
                    b.id
                )));
            }
        }

        let bone_idx: HashMap<&str, usize> = bones
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.as_str(), i))
            .collect();
        let mut owner: Vec<Option<usize>> = vec![None; bones.len()];
        let mut chains = Vec::with_capacity(spec.chains.len());
        for (c, (id, ids)) in spec.chains.iter().enumerate() {
            if spec.chains[..c].iter().any(|(other, _)| other == id) {
                return Err(Error::Validation(format!("duplicate chain id `{id}`")));
            }
            if ids.is_empty() {
                return Err(Error::Validation(format!("chain `{id}` is empty")));
            }
            let mut chain_bones = Vec::with_capacity(ids.len());
            for bid in ids {
                let k = *bone_idx.get(bid.as_str()).ok_or_else(|| {
                    Error::Validation(format!("chain `{id}` references undefined bone `{bid}`"))
                })?;
                if !bones[k].is_regular() {
                    return Err(Error::Validation(format!(
                        "chain `{id}` contains constrained bone `{bid}`"
                    )));
                }
                if owner[k].is_some() {
                    return Err(Error::Validation(format!(
                        "bone `{bid}` belongs to two chains"
                    )));
                }
                owner[k] = Some(c);
                chain_bones.push(k);
            }
            let mut chain_joints = vec![bones[chain_bones[0]].joint_a];
            for (i, &k) in chain_bones.iter().enumerate() {
                if i > 0 && bones[chain_bones[i - 1]].joint_b != bones[k].joint_a {
                    return Err(Error::Validation(format!(
                        "chain `{id}`: bones `{}` and `{}` are not consecutive",
                        bones[chain_bones[i - 1]].id,
                        bones[k].id
                    )));
                }
                chain_joints.push(bones[k].joint_b);
            }
            chains.push(Chain {
                id: id.clone(),
                anchor: chain_joints[0],
                bones: chain_bones,
                joints: chain_joints,
                reversible: true,
            });
        }
        if let Some(k) = (0..bones.len()).find(|&k| bones[k].is_regular() && owner[k].is_none()) {
            return Err(Error::Validation(format!(
                "bone `{}` is in no chain",
                bones[k].id
            )));
        }
        if let Some(rho) = spec.bound {
            if !(rho.is_finite() && rho >= 1.0) {
                return Err(Error::Validation(format!(
                    "proportion bound {rho} must be >= 1"
                )));
            }
        }

        let mut skeleton = Skeleton {
            joints,
            bones,
            chains,
            root,
            bound: spec.bound,
            incident,
            parent,
        };
        skeleton.update_connectors();
        for k in 0..skeleton.bones.len() {
            skeleton.try_geometry(k)?;
        }
        Ok(skeleton)
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }
    pub fn bones(&self) -> &[Bone] {
        &self.bones
    }
    pub fn chains(&self) -> &[Chain] {
        &self.chains
    }
    pub fn root(&self) -> usize {
        self.root
    }
    /// Proportion bound between consecutive chain bones, when enabled.
    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn set_bound(&mut self, bound: Option<f64>) {
        self.bound = bound;
    }

    pub fn joint_index(&self, id: &str) -> Option<usize> {
        self.joints.binary_search_by(|j| j.id.as_str().cmp(id)).ok()
    }

    pub fn bone_index(&self, id: &str) -> Option<usize> {
        self.bones.binary_search_by(|b| b.id.as_str().cmp(id)).ok()
    }

    pub fn chain_index(&self, id: &str) -> Option<usize> {
        self.chains.iter().position(|c| c.id == id)
    }

    /// Bones incident to a joint.
    pub fn incident(&self, joint: usize) -> &[usize] {
        &self.incident[joint]
    }

    /// The bone whose `joint_b` is `joint`; `None` for the root.
    pub fn parent_bone(&self, joint: usize) -> Option<usize> {
        self.parent[joint]
    }

    pub fn is_leaf(&self, joint: usize) -> bool {
        self.incident[joint].len() == 1
    }

    pub fn pelvis_bones(&self) -> Vec<usize> {
        (0..self.bones.len())
            .filter(|&k| self.bones[k].pelvis)
            .collect()
    }

    /// Chain containing a regular bone.
    pub fn chain_of(&self, bone: usize) -> Option<usize> {
        self.chains.iter().position(|c| c.bones.contains(&bone))
    }

    pub fn bone_length(&self, k: usize) -> f64 {
        let b = &self.bones[k];
        (self.joints[b.joint_b].position - self.joints[b.joint_a].position).norm()
    }

    fn try_geometry(&self, k: usize) -> Result<BoneGeometry> {
        let b = &self.bones[k];
        let (ja, jb) = (&self.joints[b.joint_a], &self.joints[b.joint_b]);
        BoneGeometry::new(ja.position, ja.radius, jb.position, jb.radius)
            .map_err(|e| Error::Validation(format!("bone `{}`: {e}", b.id)))
    }

    /// Geometry of bone `k`. Every reachable skeleton state keeps bones valid.
    pub fn bone_geometry(&self, k: usize) -> BoneGeometry {
        self.try_geometry(k)
            .expect("skeleton operations preserve bone validity")
    }

    pub fn geometries(&self) -> Vec<BoneGeometry> {
        (0..self.bones.len())
            .map(|k| self.bone_geometry(k))
            .collect()
    }

    /// True when every bone incident to one of `joints` is a valid cone and
    /// proportion bounds, if any, hold.
    pub(crate) fn is_valid_around(&self, joints: &[usize]) -> bool {
        let mut seen = Vec::new();
        for &j in joints {
            for &k in &self.incident[j] {
                if seen.contains(&k) {
                    continue;
                }
                seen.push(k);
                if self.try_geometry(k).is_err() {
                    return false;
                }
            }
        }
        self.bounds_hold()
    }

    /// Checks the proportion bound on every pair of consecutive chain bones.
    pub fn bounds_hold(&self) -> bool {
        let Some(rho) = self.bound else {
            return true;
        };
        self.chains.iter().all(|c| {
            c.bones.windows(2).all(|w| {
                let ratio = self.bone_length(w[0]) / self.bone_length(w[1]);
                ratio <= rho && ratio >= 1.0 / rho
            })
        })
    }

    /// Joints reachable from `start` without traversing bone `cut`.
    pub fn component_from(&self, start: usize, cut: Option<usize>) -> Vec<usize> {
        let mut seen = vec![false; self.joints.len()];
        let mut stack = vec![start];
        let mut out = Vec::new();
        seen[start] = true;
        while let Some(j) = stack.pop() {
            out.push(j);
            for &k in &self.incident[j] {
                if Some(k) == cut {
                    continue;
                }
                let next = self.bones[k].other_end(j);
                if !seen[next] {
                    seen[next] = true;
                    stack.push(next);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Joints beyond `joint` when looking along `bone` away from its other end.
    pub fn beyond(&self, bone: usize, joint: usize) -> Vec<usize> {
        self.component_from(joint, Some(bone))
    }

    pub(crate) fn set_radius(&mut self, joint: usize, radius: f64) {
        self.joints[joint].radius = radius;
    }

    pub(crate) fn translate(&mut self, joints: &[usize], delta: &Vec3) {
        for &j in joints {
            self.joints[j].position += delta;
        }
    }

    pub(crate) fn rotate_about(&mut self, joints: &[usize], pivot: &Vec3, rot: &Rotation3<f64>) {
        for &j in joints {
            let p = self.joints[j].position;
            self.joints[j].position = pivot + rot * (p - pivot);
        }
    }

    /// Moves one joint. Subtrees hanging off it through bones not listed in
    /// `keep` translate with it; bones in `keep` only stretch.
    pub(crate) fn move_joint(&mut self, joint: usize, target: Vec3, keep: &[usize]) {
        let delta = target - self.joints[joint].position;
        self.joints[joint].position = target;
        for &k in &self.incident[joint].clone() {
            if keep.contains(&k) {
                continue;
            }
            let far = self.bones[k].other_end(joint);
            let part = self.component_from(far, Some(k));
            if part.contains(&self.root) {
                continue;
            }
            self.translate(&part, &delta);
        }
    }

    /// Connector far joints implied by the spine bones they extend.
    fn connector_target(&self, k: usize) -> Option<Vec3> {
        let b = &self.bones[k];
        let frac = b.connector?;
        let spine = self.parent[b.joint_a]?;
        let s = &self.bones[spine];
        let from = self.joints[s.joint_a].position;
        let to = self.joints[s.joint_b].position;
        Some(to + (to - from) * frac)
    }

    /// Recomputes every connector from its spine bone, translating what hangs
    /// off the connector's far joint. Discrepancies at the level of float
    /// formatting are left alone, so untouched connectors never drift and a
    /// serialized skeleton parses back to the same text.
    pub(crate) fn update_connectors(&mut self) {
        for k in 0..self.bones.len() {
            if let Some(target) = self.connector_target(k) {
                let jb = self.bones[k].joint_b;
                let spine = self.parent[self.bones[k].joint_a].unwrap_or(k);
                let tol = 1e-7 * (target.norm() + self.bone_length(spine));
                if (self.joints[jb].position - target).norm() > tol {
                    let part = self.beyond(k, jb);
                    let delta = target - self.joints[jb].position;
                    self.translate(&part, &delta);
                }
            }
        }
    }

    /// Rigidly rotates `bone` and everything downstream of it about its
    /// `joint_a`. Rotating a pelvis bone turns the whole triplet.
    pub fn pose_transform(&self, bone: usize, axis: &Vec3, angle: f64) -> Result<Skeleton> {
        if bone >= self.bones.len() {
            return Err(Error::InvalidArgument(format!("no bone with index {bone}")));
        }
        let norm = axis.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidArgument(
                "rotation axis must be non-zero".into(),
            ));
        }
        let mut out = self.clone();
        if angle == 0.0 {
            return Ok(out);
        }
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        let b = &self.bones[bone];
        let pivot = self.joints[b.joint_a].position;
        let group = if b.pelvis {
            self.pelvis_bones()
        } else {
            vec![bone]
        };
        for k in group {
            let part = self.beyond(k, self.bones[k].joint_b);
            out.rotate_about(&part, &pivot, &rot);
        }
        out.update_connectors();
        Ok(out)
    }

    /// Changes the length of a regular bone by moving its `joint_b` along the
    /// axis. The next bone of the chain keeps its far joint, so its length
    /// changes too; other subtrees at `joint_b` translate.
    pub fn set_length(&self, bone: usize, new_length: f64) -> Result<Skeleton> {
        let b = &self.bones[bone];
        let infeasible = |reason: &str| Error::InfeasibleLength {
            bone: b.id.clone(),
            length: new_length,
            reason: reason.into(),
        };
        if !b.is_regular() {
            return Err(infeasible("length is constrained"));
        }
        let (ra, rb) = (self.joints[b.joint_a].radius, self.joints[b.joint_b].radius);
        if !(new_length.is_finite() && BoneGeometry::is_feasible(new_length, ra, rb)) {
            return Err(infeasible("end spheres would swallow each other"));
        }
        let current = self.bone_length(bone);
        if new_length == current {
            return Ok(self.clone());
        }
        let from = self.joints[b.joint_a].position;
        let dir = (self.joints[b.joint_b].position - from) / current;
        let mut keep = vec![bone];
        if let Some(next) = self.successor(bone) {
            keep.push(next);
        }
        let mut out = self.clone();
        out.move_joint(b.joint_b, from + dir * new_length, &keep);
        out.update_connectors();
        if !out.is_valid_around(&[b.joint_b]) {
            return Err(infeasible("violates bone validity or proportion bounds"));
        }
        Ok(out)
    }

    /// The bone following `bone` in its chain.
    pub fn successor(&self, bone: usize) -> Option<usize> {
        let c = &self.chains[self.chain_of(bone)?];
        let i = c.bones.iter().position(|&k| k == bone)?;
        c.bones.get(i + 1).copied()
    }

    /// Uniformly scales the pelvis triplet about the root; attached subtrees
    /// translate with the pelvis ends.
    pub fn scale_pelvis(&self, factor: f64) -> Result<Skeleton> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "pelvis scale {factor} must be positive"
            )));
        }
        let mut out = self.clone();
        out.transform_pelvis(&Rotation3::identity(), factor);
        if !out.is_valid_around(&[out.root]) {
            return Err(Error::InvalidGeometry("scaled pelvis is degenerate".into()));
        }
        Ok(out)
    }

    /// Rotates and scales the pelvis ends about the root.
    pub(crate) fn transform_pelvis(&mut self, rot: &Rotation3<f64>, scale: f64) {
        let root = self.joints[self.root].position;
        for k in self.pelvis_bones() {
            let jb = self.bones[k].joint_b;
            let p = self.joints[jb].position;
            let target = root + rot * (p - root) * scale;
            self.move_joint(jb, target, &[k]);
        }
        self.update_connectors();
    }

    /// Translates the whole skeleton so the root joint sits at `anchor`.
    pub fn place_root(&self, anchor: &Vec3) -> Skeleton {
        let delta = anchor - self.joints[self.root].position;
        let mut out = self.clone();
        let all: Vec<usize> = (0..self.joints.len()).collect();
        out.translate(&all, &delta);
        out
    }

    /// Axis-aligned bounds of the sphere envelope.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for j in &self.joints {
            lo = lo.inf(&(j.position - Vec3::repeat(j.radius)));
            hi = hi.sup(&(j.position + Vec3::repeat(j.radius)));
        }
        (lo, hi)
    }

    /// Sum of the lengths of all bones.
    pub fn total_length(&self) -> f64 {
        (0..self.bones.len()).map(|k| self.bone_length(k)).sum()
    }

    /// Serializes to the template format.
    pub fn to_template(&self) -> String {
        template::serialize(self)
    }

    pub fn parse(source: &str) -> Result<Skeleton> {
        template::parse(source)
    }

    /// Loads a template file, or a builtin when `source` reads `builtin:NAME`.
    pub fn load(source: &str) -> Result<Skeleton> {
        match source.strip_prefix("builtin:") {
            Some(name) => builtin(name),
            None => {
                let text = std::fs::read_to_string(source).map_err(|e| Error::io(source, e))?;
                Skeleton::parse(&text)
            }
        }
    }

    pub(crate) fn set_joint(&mut self, joint: usize, position: Vec3, radius: f64) {
        self.joints[joint].position = position;
        self.joints[joint].radius = radius;
    }
}
