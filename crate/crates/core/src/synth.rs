//! Synthetic oriented clouds sampled from a posed skeleton.
//!
//! Samples are drawn uniformly over the union of the bone surfaces: a bone is
//! picked with probability proportional to its surface area, a point is drawn
//! on it, and the point is rejected when it lies inside another bone. All
//! randomness comes from one ChaCha8 stream consumed in a fixed order, so a
//! seed reproduces the cloud exactly.

use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Poisson};

use crate::energy::assign;
use crate::error::{Error, Result};
use crate::geometry::{sample_point, OrientedPoint, ProjectionMode, Vec3};
use crate::skeleton::Skeleton;

/// Depth below another bone's surface at which a sample counts as hidden.
const INSIDE_EPS: f64 = 1e-6;

/// Rejected draws allowed per requested point before giving up.
const MAX_ATTEMPTS_PER_POINT: usize = 1000;

/// Displacement of each sample along its normal.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum NoiseModel {
    #[default]
    None,
    /// Zero-mean Gaussian with standard deviation `sigma`.
    Gaussian { sigma: f64 },
    /// `k - lambda` with `k` drawn from a Poisson law of mean `lambda`.
    Poisson { lambda: f64 },
}

impl FromStr for NoiseModel {
    type Err = Error;

    /// Parses `none`, `gaussian:SIGMA` or `poisson:LAMBDA`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("invalid noise model '{s}'"));
        let param = |v: &str| -> Result<f64> {
            let x: f64 = v.trim().parse().map_err(|_| bad())?;
            if x.is_finite() && x >= 0.0 {
                Ok(x)
            } else {
                Err(bad())
            }
        };
        match s.trim().split_once(':') {
            None if s.trim() == "none" => Ok(NoiseModel::None),
            Some(("gaussian", v)) => Ok(NoiseModel::Gaussian { sigma: param(v)? }),
            Some(("poisson", v)) => {
                let lambda = param(v)?;
                if lambda == 0.0 {
                    return Err(bad());
                }
                Ok(NoiseModel::Poisson { lambda })
            }
            _ => Err(bad()),
        }
    }
}

/// Spherical region whose samples are removed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hole {
    pub center: Vec3,
    pub radius: f64,
}

impl Hole {
    pub fn contains(&self, p: &Vec3) -> bool {
        (p - self.center).norm() < self.radius
    }

    /// Parses `x,y,z,r;x,y,z,r;...`.
    pub fn parse_list(s: &str) -> Result<Vec<Hole>> {
        s.split(';')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                let v: Vec<f64> = t
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::InvalidArgument(format!("invalid hole '{t}'")))?;
                if v.len() != 4 || v.iter().any(|x| !x.is_finite()) || v[3] <= 0.0 {
                    return Err(Error::InvalidArgument(format!("invalid hole '{t}'")));
                }
                Ok(Hole {
                    center: Vec3::new(v[0], v[1], v[2]),
                    radius: v[3],
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub skeleton: Skeleton,
    /// Samples drawn before holes are cut.
    pub points: usize,
    pub noise: NoiseModel,
    pub holes: Vec<Hole>,
    pub seed: u64,
}

/// A generated cloud. Normals are those of the clean surface.
#[derive(Clone, Debug)]
pub struct SynthCloud {
    pub points: Vec<OrientedPoint>,
    /// Points removed by holes.
    pub removed: usize,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthCloud> {
    if spec.points == 0 {
        return Err(Error::InvalidArgument(
            "point count must be positive".into(),
        ));
    }
    let geoms = spec.skeleton.geometries();
    let weights: Vec<f64> = geoms.iter().map(|g| g.surface_area()).collect();
    let pick = WeightedIndex::new(&weights)
        .map_err(|e| Error::InvalidGeometry(format!("cannot weight bones by area: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut surface = Vec::with_capacity(spec.points);
    let mut attempts = 0usize;
    while surface.len() < spec.points {
        attempts += 1;
        if attempts > MAX_ATTEMPTS_PER_POINT * spec.points {
            return Err(Error::InvalidGeometry(
                "skeleton surface is almost entirely hidden".into(),
            ));
        }
        let k = pick.sample(&mut rng);
        let p = sample_point(&geoms[k], &mut rng);
        let hidden = geoms
            .iter()
            .enumerate()
            .any(|(j, g)| j != k && g.signed_distance(&p.position) < -INSIDE_EPS);
        if !hidden {
            surface.push(p);
        }
    }
    let before = surface.len();
    surface.retain(|p| !spec.holes.iter().any(|h| h.contains(&p.position)));
    let removed = before - surface.len();
    let points = match spec.noise {
        NoiseModel::None => surface,
        NoiseModel::Gaussian { sigma } => {
            let law = Normal::new(0.0, sigma)
                .map_err(|e| Error::InvalidArgument(format!("gaussian noise: {e}")))?;
            displace(surface, || law.sample(&mut rng))
        }
        NoiseModel::Poisson { lambda } => {
            let law = Poisson::new(lambda)
                .map_err(|e| Error::InvalidArgument(format!("poisson noise: {e}")))?;
            displace(surface, || law.sample(&mut rng) - lambda)
        }
    };
    Ok(SynthCloud { points, removed })
}

fn displace(points: Vec<OrientedPoint>, mut offset: impl FnMut() -> f64) -> Vec<OrientedPoint> {
    points
        .into_iter()
        .map(|p| OrientedPoint {
            position: p.position + p.normal * offset(),
            normal: p.normal,
        })
        .collect()
}

/// Mean distance from the points to their nearest bone.
pub fn mean_distance(points: &[OrientedPoint], skeleton: &Skeleton, mode: ProjectionMode) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    assign(points, skeleton, mode).mean_distance()
}
