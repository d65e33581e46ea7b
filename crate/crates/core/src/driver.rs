//! Forward-and-backward chain registration and full-skeleton scheduling.
//!
//! A chain is first fitted bone by bone from its anchor: each bone gets a
//! one-bone fit with its predecessor fixed, and each new joint is refined by
//! a two-bone fit. Later passes run two-bone refinements along the chain in
//! alternating directions, finishing with a one-bone fit of the extremity
//! the pass ends on. A full skeleton registers its chains in template order
//! and revisits earlier chains when a later one takes their points.

use std::time::Instant;

use nalgebra::{Rotation3, Unit};

use crate::energy::{assign, Assignment};
use crate::error::{Error, Result};
use crate::geometry::{project, OrientedPoint, ProjectionMode, Vec3};
use crate::skeleton::Skeleton;
use crate::solver::{
    optimize_one_bone, optimize_pelvis, optimize_simultaneous, optimize_two_bone, step_block,
    LmSettings, LmState, OneBoneOptions, ParameterBlock, Problem,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

/// Rotation grid swept around a bone's fixed joint when it owns no points.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BootstrapGrid {
    pub azimuths: usize,
    pub elevations: usize,
}

impl Default for BootstrapGrid {
    fn default() -> Self {
        Self {
            azimuths: 16,
            elevations: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegistrationConfig {
    /// Maximum passes per chain, the initial forward pass included.
    pub max_outer_iters: usize,
    /// Relative change of the total energy across a forward and a backward
    /// pass below which a chain has converged.
    pub convergence_tol: f64,
    /// Mean point distance, as a fraction of the cloud's bounding-box
    /// diagonal, below which the fit counts as converged outright.
    pub distance_floor: f64,
    pub mode: ProjectionMode,
    pub auto_init: bool,
    pub anchor: Option<Vec3>,
    pub rng_seed: u64,
    pub lm: LmSettings,
    pub record_history: bool,
    pub bootstrap: BootstrapGrid,
    /// Whole-skeleton sweeps over all chains.
    pub max_sweeps: usize,
    /// Passes granted to a chain when it is revisited.
    pub revisit_passes: usize,
    /// Fraction of a chain's points that must change chain before the chain
    /// is registered again.
    pub backtrack_fraction: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            max_outer_iters: 20,
            convergence_tol: 1e-5,
            distance_floor: 1e-5,
            mode: ProjectionMode::NormalConstrained,
            auto_init: false,
            anchor: None,
            rng_seed: 0,
            lm: LmSettings::default(),
            record_history: true,
            bootstrap: BootstrapGrid::default(),
            max_sweeps: 3,
            revisit_passes: 4,
            backtrack_fraction: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PassRecord {
    /// 1-based pass counter across the whole registration.
    pub pass: usize,
    pub direction: Direction,
    pub chain: String,
    pub energy: f64,
    pub mean_distance: f64,
    pub millis: f64,
}

#[derive(Clone, Debug)]
pub struct RegistrationReport {
    pub history: Vec<PassRecord>,
    pub converged: bool,
    pub skeleton: Skeleton,
    pub assignment: Assignment,
    /// Regular bones left without points at the end.
    pub empty_bones: Vec<String>,
    /// Chains abandoned by a full-skeleton run, with the reason.
    pub failures: Vec<String>,
}

impl RegistrationReport {
    pub fn passes(&self) -> usize {
        self.history.len()
    }

    pub fn final_energy(&self) -> f64 {
        self.assignment.total_energy()
    }

    pub fn final_mean_distance(&self) -> f64 {
        self.assignment.mean_distance()
    }

    /// `pass,direction,energy,mean_distance,millis` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pass,direction,energy,mean_distance,millis\n");
        for r in &self.history {
            out.push_str(&format!(
                "{},{},{:e},{:e},{:.3}\n",
                r.pass,
                r.direction.as_str(),
                r.energy,
                r.mean_distance,
                r.millis
            ));
        }
        out
    }
}

/// Center of the axis-aligned bounding box of the cloud.
pub fn auto_anchor(points: &[OrientedPoint]) -> Result<Vec3> {
    let (lo, hi) = bounds(points)?;
    Ok((lo + hi) / 2.0)
}

fn bounds(points: &[OrientedPoint]) -> Result<(Vec3, Vec3)> {
    let first = points
        .first()
        .ok_or_else(|| Error::InvalidArgument("point cloud is empty".into()))?;
    Ok(points
        .iter()
        .fold((first.position, first.position), |(lo, hi), p| {
            (lo.inf(&p.position), hi.sup(&p.position))
        }))
}

struct Session<'a> {
    problem: Problem<'a>,
    config: &'a RegistrationConfig,
    skeleton: Skeleton,
    assignment: Assignment,
    state: LmState,
    history: Vec<PassRecord>,
    failures: Vec<String>,
    clock: Instant,
    floor: f64,
}

impl<'a> Session<'a> {
    fn new(
        points: &'a [OrientedPoint],
        skeleton: Skeleton,
        config: &'a RegistrationConfig,
    ) -> Result<Self> {
        let (lo, hi) = bounds(points)?;
        let mut problem = Problem::new(points, config.mode);
        problem.settings = config.lm;
        let assignment = assign(points, &skeleton, config.mode);
        Ok(Self {
            problem,
            config,
            skeleton,
            assignment,
            state: LmState::new(&config.lm),
            history: Vec::new(),
            failures: Vec::new(),
            clock: Instant::now(),
            floor: config.distance_floor * (hi - lo).norm(),
        })
    }

    fn record(&mut self, direction: Direction, chain: &str) {
        let millis = self.clock.elapsed().as_secs_f64() * 1e3;
        self.clock = Instant::now();
        let energy = self.assignment.total_energy();
        let mean_distance = self.assignment.mean_distance();
        log::debug!(
            "pass {} {} {chain}: energy {energy:.6e}, mean distance {mean_distance:.6e}",
            self.history.len() + 1,
            direction.as_str()
        );
        self.history.push(PassRecord {
            pass: self.history.len() + 1,
            direction,
            chain: chain.to_string(),
            energy,
            mean_distance,
            millis,
        });
    }

    fn converged(&self, energies: &[f64]) -> bool {
        if self.assignment.mean_distance() <= self.floor {
            return true;
        }
        let n = energies.len();
        if n < 3 {
            return false;
        }
        let (old, new) = (energies[n - 3], energies[n - 1]);
        (old - new).abs() <= self.config.convergence_tol * old.max(f64::MIN_POSITIVE)
    }

    fn bootstrap(&mut self, bone: usize, fixed: usize) -> Result<()> {
        bootstrap_empty_bone_in(
            &self.problem,
            &mut self.skeleton,
            &mut self.assignment,
            bone,
            fixed,
            self.config.bootstrap,
        )
    }

    fn fit_bone(&mut self, bone: usize, fixed: usize, options: &OneBoneOptions) -> Result<()> {
        if self.assignment.members(bone).is_empty() {
            self.bootstrap(bone, fixed)?;
        }
        optimize_one_bone(
            &self.problem,
            &mut self.skeleton,
            &mut self.assignment,
            bone,
            fixed,
            options,
            &mut self.state,
        )
        .map(|_| ())
    }

    fn pair(&mut self, first: usize, second: usize) {
        // A pair without points has nothing to refine.
        let _ = optimize_two_bone(
            &self.problem,
            &mut self.skeleton,
            &mut self.assignment,
            first,
            second,
            &mut self.state,
        );
    }

    /// One-bone refinement of the extremity `end` of a chain. Joints that
    /// carry other bones stay pinned; the pinned root may still adjust its
    /// radius.
    fn extremity(&mut self, bone: usize, end: usize, inner: usize) -> Result<()> {
        if !self.skeleton.is_leaf(end) {
            return Ok(());
        }
        if end == self.skeleton.root() {
            let block = ParameterBlock::Radii { joints: vec![end] };
            step_block(
                &self.problem,
                &mut self.skeleton,
                &mut self.assignment,
                &block,
                &[bone],
                &mut self.state,
            );
            return Ok(());
        }
        if self.assignment.members(bone).is_empty() {
            return Ok(());
        }
        let options = OneBoneOptions {
            radii: vec![end],
            ..OneBoneOptions::full(&self.skeleton, bone, inner)
        };
        self.fit_bone(bone, inner, &options)
    }

    fn pelvis(&mut self, chain: usize) {
        if chain == 0 && !self.skeleton.pelvis_bones().is_empty() {
            optimize_pelvis(
                &self.problem,
                &mut self.skeleton,
                &mut self.assignment,
                &mut self.state,
            );
        }
    }

    fn init_pass(&mut self, chain: usize) -> Result<()> {
        let c = self.skeleton.chains()[chain].clone();
        let (bones, joints) = (&c.bones, &c.joints);
        self.fit_bone(bones[0], joints[0], &OneBoneOptions::rough())?;
        for k in 1..bones.len() {
            self.fit_bone(bones[k], joints[k], &OneBoneOptions::rough())?;
            self.pair(bones[k - 1], bones[k]);
        }
        let last = bones.len() - 1;
        if !self.assignment.members(bones[last]).is_empty() {
            let options = OneBoneOptions {
                rotate: false,
                ..OneBoneOptions::full(&self.skeleton, bones[last], joints[last])
            };
            self.fit_bone(bones[last], joints[last], &options)?;
        }
        Ok(())
    }

    fn refine_pass(&mut self, chain: usize, direction: Direction) -> Result<()> {
        let c = self.skeleton.chains()[chain].clone();
        let (mut bones, mut joints) = (c.bones, c.joints);
        if direction == Direction::Backward {
            bones.reverse();
            joints.reverse();
        }
        self.extremity(bones[0], joints[0], joints[1])?;
        for k in 1..bones.len() {
            self.pair(bones[k - 1], bones[k]);
        }
        let n = bones.len();
        self.extremity(bones[n - 1], joints[n], joints[n - 1])
    }

    /// Registers one chain; returns whether it converged.
    fn run_chain(&mut self, chain: usize, init: bool, max_passes: usize) -> Result<bool> {
        let name = self.skeleton.chains()[chain].id.clone();
        let mut energies = Vec::new();
        let mut direction = Direction::Backward;
        if init {
            self.pelvis(chain);
            self.init_pass(chain)?;
            self.record(Direction::Forward, &name);
            energies.push(self.assignment.total_energy());
            if self.converged(&energies) {
                return Ok(true);
            }
        }
        while energies.len() < max_passes.max(1) {
            self.pelvis(chain);
            self.refine_pass(chain, direction)?;
            self.record(direction, &name);
            energies.push(self.assignment.total_energy());
            if self.converged(&energies) {
                return Ok(true);
            }
            direction = direction.flip();
        }
        Ok(false)
    }

    /// Like `run_chain`, but a failing chain is logged and recorded so the
    /// rest of the skeleton can still be registered.
    fn try_chain(&mut self, chain: usize, init: bool, max_passes: usize) -> bool {
        match self.run_chain(chain, init, max_passes) {
            Ok(converged) => converged,
            Err(e) => {
                let name = &self.skeleton.chains()[chain].id;
                log::warn!("chain {name}: {e}");
                self.failures.push(format!("{name}: {e}"));
                false
            }
        }
    }

    fn chain_membership(&self) -> Vec<Option<usize>> {
        let owner: Vec<Option<usize>> = (0..self.skeleton.bones().len())
            .map(|k| self.skeleton.chain_of(k))
            .collect();
        self.assignment.bones().iter().map(|&k| owner[k]).collect()
    }

    fn empty_bones(&self) -> Vec<String> {
        self.skeleton
            .bones()
            .iter()
            .enumerate()
            .filter(|(k, b)| b.is_regular() && self.assignment.members(*k).is_empty())
            .map(|(_, b)| b.id.clone())
            .collect()
    }

    fn finish(self, converged: bool) -> RegistrationReport {
        let empty_bones = self.empty_bones();
        let history = if self.config.record_history {
            self.history
        } else {
            self.history.into_iter().last().into_iter().collect()
        };
        RegistrationReport {
            history,
            converged,
            skeleton: self.skeleton,
            assignment: self.assignment,
            empty_bones,
            failures: self.failures,
        }
    }
}

fn place(
    points: &[OrientedPoint],
    skeleton: &Skeleton,
    config: &RegistrationConfig,
) -> Result<Skeleton> {
    let anchor = match (config.anchor, config.auto_init) {
        (Some(a), _) => a,
        (None, true) => auto_anchor(points)?,
        (None, false) => {
            return Err(Error::InvalidArgument(
                "an anchor or automatic initialization is required".into(),
            ))
        }
    };
    Ok(skeleton.place_root(&anchor))
}

/// Registers one chain of an already placed skeleton.
pub fn register_chain(
    points: &[OrientedPoint],
    skeleton: &Skeleton,
    chain: usize,
    config: &RegistrationConfig,
) -> Result<RegistrationReport> {
    if chain >= skeleton.chains().len() {
        return Err(Error::InvalidArgument(format!(
            "no chain with index {chain}"
        )));
    }
    let mut session = Session::new(points, skeleton.clone(), config)?;
    let converged = session.run_chain(chain, true, config.max_outer_iters)?;
    Ok(session.finish(converged))
}

/// Continues a registration with refinement passes only, as after an
/// initial forward pass.
pub fn refine_chain(
    points: &[OrientedPoint],
    skeleton: &Skeleton,
    chain: usize,
    config: &RegistrationConfig,
) -> Result<RegistrationReport> {
    let mut session = Session::new(points, skeleton.clone(), config)?;
    let converged = session.run_chain(chain, false, config.max_outer_iters)?;
    Ok(session.finish(converged))
}

/// Runs only the initial forward pass of a chain.
pub fn forward_pass(
    points: &[OrientedPoint],
    skeleton: &Skeleton,
    chain: usize,
    config: &RegistrationConfig,
) -> Result<RegistrationReport> {
    let mut session = Session::new(points, skeleton.clone(), config)?;
    session.pelvis(chain);
    session.init_pass(chain)?;
    session.record(Direction::Forward, &skeleton.chains()[chain].id.clone());
    Ok(session.finish(false))
}

/// Places the root at the anchor and registers every chain.
pub fn register_skeleton(
    points: &[OrientedPoint],
    skeleton: &Skeleton,
    config: &RegistrationConfig,
) -> Result<RegistrationReport> {
    let placed = place(points, skeleton, config)?;
    let mut session = Session::new(points, placed, config)?;
    let chains = session.skeleton.chains().len();
    let mut converged = false;
    let mut last_energy = session.assignment.total_energy();
    for sweep in 0..config.max_sweeps.max(1) {
        let mut all_converged = true;
        for c in 0..chains {
            let before = session.chain_membership();
            let passes = if sweep == 0 {
                config.max_outer_iters
            } else {
                config.revisit_passes
            };
            all_converged &= session.try_chain(c, sweep == 0, passes);
            let after = session.chain_membership();
            for d in 0..c {
                let owned = before.iter().filter(|&&o| o == Some(d)).count();
                let moved = before
                    .iter()
                    .zip(&after)
                    .filter(|(b, a)| (**b == Some(d)) != (**a == Some(d)))
                    .count();
                if moved as f64 > config.backtrack_fraction * owned.max(1) as f64 {
                    log::debug!("chain {} took {moved} points from chain {d}; revisiting", c);
                    all_converged &= session.try_chain(d, false, config.revisit_passes);
                }
            }
        }
        let energy = session.assignment.total_energy();
        let settled = (last_energy - energy).abs()
            <= config.convergence_tol * last_energy.max(f64::MIN_POSITIVE);
        last_energy = energy;
        if !session.failures.is_empty() {
            break;
        }
        if session.assignment.mean_distance() <= session.floor
            || (all_converged && (chains == 1 || sweep > 0))
            || (sweep > 0 && settled)
        {
            converged = true;
            break;
        }
    }
    Ok(session.finish(converged))
}

/// The simultaneous baseline: repeated sweeps of independent joint updates.
/// Stops when the total energy changes by less than the tolerance between
/// sweeps, or after `max_outer_iters` sweeps. Settling while some bone owns
/// no points counts as a failure to converge.
pub fn register_simultaneous(
    points: &[OrientedPoint],
    skeleton: &Skeleton,
    config: &RegistrationConfig,
) -> Result<RegistrationReport> {
    let mut session = Session::new(points, skeleton.clone(), config)?;
    let mut energies = vec![session.assignment.total_energy()];
    let mut converged = false;
    for _ in 0..config.max_outer_iters.max(1) {
        optimize_simultaneous(
            &session.problem,
            &mut session.skeleton,
            &mut session.assignment,
            &mut session.state,
        )?;
        session.record(Direction::Forward, "simultaneous");
        let e = session.assignment.total_energy();
        let prev = *energies.last().expect("initial energy recorded");
        energies.push(e);
        if session.assignment.mean_distance() <= session.floor {
            converged = true;
            break;
        }
        if (prev - e).abs() <= config.convergence_tol * prev.max(f64::MIN_POSITIVE) {
            // Without a bootstrap, a bone that lost its points never gets
            // them back: a settled energy with empty bones is a stall.
            converged = session.empty_bones().is_empty();
            break;
        }
    }
    Ok(session.finish(converged))
}

/// Sweeps `bone` through a grid of directions about its `fixed` joint and
/// keeps the pose capturing the most points (ties: lower energy, then grid
/// order). No-op when the bone already owns points.
pub fn bootstrap_empty_bone(
    points: &[OrientedPoint],
    skeleton: &Skeleton,
    bone: usize,
    fixed: usize,
    mode: ProjectionMode,
    grid: BootstrapGrid,
) -> Result<Skeleton> {
    let problem = Problem::new(points, mode);
    let mut s = skeleton.clone();
    if points.is_empty() {
        return Err(Error::NoPointsCaptured {
            bone: s.bones()[bone].id.clone(),
        });
    }
    let mut a = assign(points, &s, mode);
    bootstrap_empty_bone_in(&problem, &mut s, &mut a, bone, fixed, grid)?;
    Ok(s)
}

fn bootstrap_empty_bone_in(
    problem: &Problem,
    s: &mut Skeleton,
    assignment: &mut Assignment,
    bone: usize,
    fixed: usize,
    grid: BootstrapGrid,
) -> Result<()> {
    if !assignment.members(bone).is_empty() {
        return Ok(());
    }
    let free = s.bones()[bone].other_end(fixed);
    let pivot = s.joints()[fixed].position;
    let frame = crate::solver::LocalFrame::new(pivot, s.joints()[free].position);
    let part = s.beyond(bone, free);
    let mut best: Option<(usize, f64, Skeleton)> = None;
    for i in 1..=grid.elevations {
        let polar = std::f64::consts::PI * i as f64 / grid.elevations as f64;
        for j in 0..grid.azimuths {
            let azimuth = 2.0 * std::f64::consts::PI * j as f64 / grid.azimuths as f64;
            let tilt = frame.z * azimuth.cos() - frame.y * azimuth.sin();
            let rot = Rotation3::from_axis_angle(&Unit::new_normalize(tilt), polar);
            let mut candidate = s.clone();
            candidate.rotate_about(&part, &pivot, &rot);
            candidate.update_connectors();
            let geom = candidate.bone_geometry(bone);
            let (count, energy) = problem
                .points
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let d = project(p, &geom, problem.mode).distance;
                    let cached = assignment.projection(i).distance;
                    let wins = d < cached || (d == cached && bone < assignment.bone_of(i));
                    if wins {
                        (1, d * d)
                    } else {
                        (0, 0.0)
                    }
                })
                .fold((0usize, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
            if count == 0 {
                continue;
            }
            let better = match &best {
                None => true,
                Some((c, e, _)) => count > *c || (count == *c && energy < *e),
            };
            if better {
                best = Some((count, energy, candidate));
            }
        }
    }
    let Some((_, _, chosen)) = best else {
        return Err(Error::NoPointsCaptured {
            bone: s.bones()[bone].id.clone(),
        });
    };
    let changed = crate::solver::changed_bones(s, &chosen);
    *s = chosen;
    assignment.update(problem.points, s, &changed);
    if assignment.members(bone).is_empty() {
        return Err(Error::NoPointsCaptured {
            bone: s.bones()[bone].id.clone(),
        });
    }
    Ok(())
}
