//! Point-to-bone assignment and the one-bone, two-bone and total energies.
//!
//! Every point goes to the bone with the smallest projection distance; ties
//! go to the lowest bone index. Projections are computed in parallel and all
//! reductions run serially in point order, so results do not depend on the
//! number of threads.

use rayon::prelude::*;

use crate::geometry::{project, BoneGeometry, OrientedPoint, Projection, ProjectionMode};
use crate::skeleton::Skeleton;

/// Partition of a cloud into per-bone subsets, with the cached projection of
/// every point on its bone.
#[derive(Clone, Debug)]
pub struct Assignment {
    mode: ProjectionMode,
    bone_of: Vec<usize>,
    projections: Vec<Projection>,
    members: Vec<Vec<usize>>,
}

fn nearest(p: &OrientedPoint, bones: &[BoneGeometry], mode: ProjectionMode) -> (usize, Projection) {
    let mut best = (0, project(p, &bones[0], mode));
    for (k, bone) in bones.iter().enumerate().skip(1) {
        let candidate = project(p, bone, mode);
        if candidate.distance < best.1.distance {
            best = (k, candidate);
        }
    }
    best
}

/// Assigns every point to its nearest bone.
pub fn assign(points: &[OrientedPoint], skeleton: &Skeleton, mode: ProjectionMode) -> Assignment {
    assign_geometries(points, &skeleton.geometries(), mode)
}

pub fn assign_geometries(
    points: &[OrientedPoint],
    bones: &[BoneGeometry],
    mode: ProjectionMode,
) -> Assignment {
    assert!(!bones.is_empty(), "assignment needs at least one bone");
    let found: Vec<(usize, Projection)> =
        points.par_iter().map(|p| nearest(p, bones, mode)).collect();
    let mut a = Assignment {
        mode,
        bone_of: Vec::with_capacity(points.len()),
        projections: Vec::with_capacity(points.len()),
        members: Vec::new(),
    };
    for (k, proj) in found {
        a.bone_of.push(k);
        a.projections.push(proj);
    }
    a.rebuild_members(bones.len());
    a
}

impl Assignment {
    fn rebuild_members(&mut self, bone_count: usize) {
        let mut members = vec![Vec::new(); bone_count];
        for (i, &k) in self.bone_of.iter().enumerate() {
            members[k].push(i);
        }
        self.members = members;
    }

    pub fn mode(&self) -> ProjectionMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.bone_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bone_of.is_empty()
    }

    pub fn bone_count(&self) -> usize {
        self.members.len()
    }

    pub fn bone_of(&self, point: usize) -> usize {
        self.bone_of[point]
    }

    pub fn bones(&self) -> &[usize] {
        &self.bone_of
    }

    pub fn projection(&self, point: usize) -> &Projection {
        &self.projections[point]
    }

    /// Indices of the points assigned to bone `k`, ascending.
    pub fn members(&self, k: usize) -> &[usize] {
        &self.members[k]
    }

    /// Updates the assignment after the bones in `changed` moved; all other
    /// bones must be unchanged since the last update. The result equals a full
    /// reassignment. Returns how many points switched bone.
    pub fn update(
        &mut self,
        points: &[OrientedPoint],
        skeleton: &Skeleton,
        changed: &[usize],
    ) -> usize {
        let bones = skeleton.geometries();
        self.update_geometries(points, &bones, changed)
    }

    pub fn update_geometries(
        &mut self,
        points: &[OrientedPoint],
        bones: &[BoneGeometry],
        changed: &[usize],
    ) -> usize {
        if changed.is_empty() {
            return 0;
        }
        let mut changed = changed.to_vec();
        changed.sort_unstable();
        changed.dedup();
        let mode = self.mode;
        let updates: Vec<Option<(usize, Projection)>> = points
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let current = self.bone_of[i];
                if changed.binary_search(&current).is_ok() {
                    return Some(nearest(p, bones, mode));
                }
                let mut best: Option<(usize, Projection)> = None;
                let mut best_d = self.projections[i].distance;
                let mut best_k = current;
                for &k in &changed {
                    let candidate = project(p, &bones[k], mode);
                    if candidate.distance < best_d || (candidate.distance == best_d && k < best_k) {
                        best_d = candidate.distance;
                        best_k = k;
                        best = Some((k, candidate));
                    }
                }
                best
            })
            .collect();
        let mut switched = 0;
        for (i, update) in updates.into_iter().enumerate() {
            if let Some((k, proj)) = update {
                if k != self.bone_of[i] {
                    switched += 1;
                }
                self.bone_of[i] = k;
                self.projections[i] = proj;
            }
        }
        self.rebuild_members(bones.len());
        switched
    }

    /// `E_k`: sum of squared distances of the points assigned to bone `k`.
    pub fn one_bone_energy(&self, k: usize) -> f64 {
        self.members[k]
            .iter()
            .map(|&i| self.projections[i].distance.powi(2))
            .sum()
    }

    /// `E_{k,j}` over the union of the two subsets.
    pub fn two_bone_energy(&self, k: usize, j: usize) -> f64 {
        if k == j {
            return self.one_bone_energy(k);
        }
        self.one_bone_energy(k) + self.one_bone_energy(j)
    }

    pub fn energy_of(&self, bones: &[usize]) -> f64 {
        bones.iter().map(|&k| self.one_bone_energy(k)).sum()
    }

    /// Total energy: the sum of all cached squared distances.
    pub fn total_energy(&self) -> f64 {
        self.projections.iter().map(|p| p.distance.powi(2)).sum()
    }

    /// Arithmetic mean of the cached distances.
    pub fn mean_distance(&self) -> f64 {
        if self.projections.is_empty() {
            return 0.0;
        }
        self.projections.iter().map(|p| p.distance).sum::<f64>() / self.projections.len() as f64
    }
}
