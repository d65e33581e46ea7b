//! The sphere-mesh bone primitive.
//!
//! A bone is the envelope of the spheres centered on the segment `[c1, c2]`
//! whose radius varies linearly from `r1` to `r2`: a truncated cone closed by
//! two spherical caps. This module provides the normal-constrained projection
//! of oriented points onto that envelope, the distance formulas for every
//! projection case, their derivatives with respect to the bone parameters,
//! and surface sampling / tessellation helpers.
//!
//! All tolerances used by this module are collected in the constants below.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Relative slack of the feasibility test `l > |r2 - r1| + GEOM_EPS * l`.
pub const GEOM_EPS: f64 = 1e-9;
/// Maximum deviation from unit length accepted for a stored normal.
pub const UNIT_TOL: f64 = 1e-6;
/// Surface membership tolerance, relative to the bone length.
pub const SURFACE_TOL: f64 = 1e-6;
/// Radial distances below `AXIS_EPS * l` are treated as lying on the axis.
pub const AXIS_EPS: f64 = 1e-12;

/// A sample position with its oriented unit normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedPoint {
    pub position: Vec3,
    pub normal: Vec3,
}

impl OrientedPoint {
    /// Builds a point, normalizing `normal`. Rejects non-finite input and
    /// zero-length normals.
    pub fn new(position: Vec3, normal: Vec3) -> Result<Self> {
        if !position.iter().chain(normal.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(
                "point coordinates must be finite".into(),
            ));
        }
        let norm = normal.norm();
        if norm <= f64::MIN_POSITIVE {
            return Err(Error::InvalidArgument("normal has zero length".into()));
        }
        Ok(Self {
            position,
            normal: normal / norm,
        })
    }
}

/// Deterministic unit vector orthogonal to `u`: Gram-Schmidt on the
/// coordinate axis where `u` has its smallest-magnitude component.
pub fn perpendicular(u: &Vec3) -> Vec3 {
    let mut idx = 0;
    for i in 1..3 {
        if u[i].abs() < u[idx].abs() {
            idx = i;
        }
    }
    let mut axis = Vec3::zeros();
    axis[idx] = 1.0;
    (axis - u * axis.dot(u)).normalize()
}

/// Which end sphere of a bone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum End {
    First,
    Second,
}

/// Two end spheres `(c1, r1)` and `(c2, r2)` with a valid cone between them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoneGeometry {
    c1: Vec3,
    c2: Vec3,
    r1: f64,
    r2: f64,
    length: f64,
    axis: Vec3,
    /// Signed `(r2 - r1) / l`; `alpha = asin(|sin_alpha|)`.
    sin_alpha: f64,
    cos_alpha: f64,
}

impl BoneGeometry {
    pub fn new(c1: Vec3, r1: f64, c2: Vec3, r2: f64) -> Result<Self> {
        if !(r1.is_finite() && r2.is_finite()) || r1 < 0.0 || r2 < 0.0 {
            return Err(Error::InvalidGeometry(format!(
                "radii must be finite and non-negative (r1={r1}, r2={r2})"
            )));
        }
        let delta = c2 - c1;
        let length = delta.norm();
        if !length.is_finite() || length <= 0.0 {
            return Err(Error::InvalidGeometry("end spheres are coincident".into()));
        }
        let dr = r2 - r1;
        if length <= dr.abs() + GEOM_EPS * length {
            return Err(Error::InvalidGeometry(format!(
                "length {length} does not exceed radius difference {}",
                dr.abs()
            )));
        }
        let sin_alpha = dr / length;
        Ok(Self {
            c1,
            c2,
            r1,
            r2,
            length,
            axis: delta / length,
            sin_alpha,
            cos_alpha: (1.0 - sin_alpha * sin_alpha).sqrt(),
        })
    }

    /// True when a bone with these lengths and radii would be constructible.
    pub fn is_feasible(length: f64, r1: f64, r2: f64) -> bool {
        r1 >= 0.0 && r2 >= 0.0 && length > (r2 - r1).abs() + GEOM_EPS * length
    }

    pub fn c1(&self) -> Vec3 {
        self.c1
    }
    pub fn c2(&self) -> Vec3 {
        self.c2
    }
    pub fn r1(&self) -> f64 {
        self.r1
    }
    pub fn r2(&self) -> f64 {
        self.r2
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    /// Unit vector from `c1` to `c2`.
    pub fn axis(&self) -> Vec3 {
        self.axis
    }
    pub fn sin_alpha(&self) -> f64 {
        self.sin_alpha
    }
    pub fn cos_alpha(&self) -> f64 {
        self.cos_alpha
    }
    /// Cone half-angle in `[0, pi/2)`.
    pub fn alpha(&self) -> f64 {
        let dr = (self.r2 - self.r1).abs();
        (dr / (self.length * self.length - dr * dr).sqrt()).atan()
    }

    pub fn center(&self, end: End) -> Vec3 {
        match end {
            End::First => self.c1,
            End::Second => self.c2,
        }
    }

    pub fn radius(&self, end: End) -> f64 {
        match end {
            End::First => self.r1,
            End::Second => self.r2,
        }
    }

    /// Linearly interpolated (or extrapolated) radius at barycentric `tau`.
    pub fn radius_at(&self, tau: f64) -> f64 {
        (1.0 - tau) * self.r1 + tau * self.r2
    }

    pub fn lateral_area(&self) -> f64 {
        PI * self.cos_alpha * self.cos_alpha * (self.r1 + self.r2) * self.length
    }

    /// Area of the exposed part of the sphere at `end`.
    pub fn cap_area(&self, end: End) -> f64 {
        match end {
            End::First => 2.0 * PI * self.r1 * self.r1 * (1.0 - self.sin_alpha),
            End::Second => 2.0 * PI * self.r2 * self.r2 * (1.0 + self.sin_alpha),
        }
    }

    pub fn surface_area(&self) -> f64 {
        self.lateral_area() + self.cap_area(End::First) + self.cap_area(End::Second)
    }

    /// Unit direction `w` from the center of `end` lies on the exposed cap.
    fn cap_exposes(&self, end: End, w: &Vec3) -> bool {
        let along = w.dot(&self.axis);
        match end {
            End::First => along <= -self.sin_alpha,
            End::Second => along >= -self.sin_alpha,
        }
    }

    /// Axial coordinate, radial distance and radial unit direction of `p`.
    fn cylindrical(&self, p: &Vec3) -> (f64, f64, Vec3) {
        let w = p - self.c1;
        let axial = w.dot(&self.axis);
        let radial_vec = w - self.axis * axial;
        let radial = radial_vec.norm();
        let dir = if radial > AXIS_EPS * self.length {
            radial_vec / radial
        } else {
            perpendicular(&self.axis)
        };
        (axial, radial, dir)
    }

    /// Signed distance of `p` to the envelope, negative inside.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        // Orthogonal projection ignores the normal entirely.
        let probe = OrientedPoint {
            position: *p,
            normal: self.axis,
        };
        project(&probe, self, ProjectionMode::Orthogonal).residual
    }

    pub fn translated(&self, offset: &Vec3) -> Self {
        Self {
            c1: self.c1 + offset,
            c2: self.c2 + offset,
            ..*self
        }
    }
}

/// Projection of a point on the axis line of a bone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisProjection {
    pub p_star: Vec3,
    /// Signed distance from `c1` along the unit axis.
    pub axial: f64,
    /// Distance from the point to the axis line.
    pub radial: f64,
}

pub fn project_axis(p: &Vec3, bone: &BoneGeometry) -> AxisProjection {
    let axial = (p - bone.c1).dot(&bone.axis);
    let p_star = bone.c1 + bone.axis * axial;
    AxisProjection {
        p_star,
        axial,
        radial: (p - p_star).norm(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum ProjectionMode {
    /// Prefer the surface point whose outward normal agrees with the sample normal.
    #[default]
    NormalConstrained,
    /// Plain closest-point projection; normals are ignored.
    Orthogonal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CaseTag {
    ConeSameSide,
    ConeOppositeSide,
    Cap1,
    Cap2,
    Cap1OppositeSide,
    Cap2OppositeSide,
}

impl CaseTag {
    pub fn is_cone(self) -> bool {
        matches!(self, CaseTag::ConeSameSide | CaseTag::ConeOppositeSide)
    }
    pub fn is_cap1(self) -> bool {
        matches!(self, CaseTag::Cap1 | CaseTag::Cap1OppositeSide)
    }
    pub fn is_cap2(self) -> bool {
        matches!(self, CaseTag::Cap2 | CaseTag::Cap2OppositeSide)
    }
    pub fn is_opposite(self) -> bool {
        matches!(
            self,
            CaseTag::ConeOppositeSide | CaseTag::Cap1OppositeSide | CaseTag::Cap2OppositeSide
        )
    }
}

/// The closed-form expression that produced a residual. Freezing it lets the
/// solvers differentiate a residual without re-running the case analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DistanceFormula {
    /// `|p p*_a| - r_a(p)` on the near side of the cone.
    Cone,
    /// `|p p*_-a| + r_-a(p)` on the far side of the untruncated cone. When the
    /// extrapolated radius would be negative it is clamped to zero.
    OppositeCone { apex_clamped: bool },
    /// `|c_i p| - r_i`, used for every point beyond an end of the bone.
    Sphere(End),
}

/// Result of projecting one oriented point on one bone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub foot: Vec3,
    /// Outward surface normal of the (possibly untruncated) envelope at `foot`.
    pub normal: Vec3,
    /// Unsigned distance `|p - foot|`.
    pub distance: f64,
    /// Signed residual: negative when the point lies inside the envelope on
    /// the same side as its foot.
    pub residual: f64,
    /// Axial parameter of the sphere center carrying `foot` (unclamped).
    pub tau: f64,
    /// The near-side parameter `tau_alpha` that selects the case.
    pub tau_alpha: f64,
    pub case_tag: CaseTag,
    pub formula: DistanceFormula,
    /// False when the opposite-side construction leaves the truncated bone.
    pub on_surface: bool,
}

pub fn project_normal_constrained(p: &OrientedPoint, bone: &BoneGeometry) -> Projection {
    project(p, bone, ProjectionMode::NormalConstrained)
}

pub fn project(p: &OrientedPoint, bone: &BoneGeometry, mode: ProjectionMode) -> Projection {
    let constrained = mode == ProjectionMode::NormalConstrained;
    let (axial, radial, e) = bone.cylindrical(&p.position);
    let (s, c, l, u) = (bone.sin_alpha, bone.cos_alpha, bone.length, bone.axis);
    let tan = s / c;
    let tau_alpha = (axial + radial * tan) / l;

    if (0.0..=1.0).contains(&tau_alpha) {
        let outward = e * c - u * s;
        if !constrained || outward.dot(&p.normal) >= 0.0 {
            let r = bone.radius_at(tau_alpha);
            let center = bone.c1 + u * (tau_alpha * l);
            let residual = radial / c - r;
            return Projection {
                foot: center + outward * r,
                normal: outward,
                distance: residual.abs(),
                residual,
                tau: tau_alpha,
                tau_alpha,
                case_tag: CaseTag::ConeSameSide,
                formula: DistanceFormula::Cone,
                on_surface: true,
            };
        }
        return opposite_cone(
            bone,
            axial,
            radial,
            &e,
            tau_alpha,
            CaseTag::ConeOppositeSide,
        );
    }

    let end = if tau_alpha < 0.0 {
        End::First
    } else {
        End::Second
    };
    let center = bone.center(end);
    let r = bone.radius(end);
    let tau_end = match end {
        End::First => 0.0,
        End::Second => 1.0,
    };
    let to_p = p.position - center;
    let dist = to_p.norm();
    let dir = if dist > AXIS_EPS * l {
        to_p / dist
    } else {
        match end {
            End::First => -u,
            End::Second => u,
        }
    };
    let (near_tag, far_tag) = match end {
        End::First => (CaseTag::Cap1, CaseTag::Cap1OppositeSide),
        End::Second => (CaseTag::Cap2, CaseTag::Cap2OppositeSide),
    };
    let residual = dist - r;
    if !constrained || dir.dot(&p.normal) >= 0.0 {
        return Projection {
            foot: center + dir * r,
            normal: dir,
            distance: residual.abs(),
            residual,
            tau: tau_end,
            tau_alpha,
            case_tag: near_tag,
            formula: DistanceFormula::Sphere(end),
            on_surface: true,
        };
    }
    // The foot is the normal-consistent point: the antipode on the end sphere
    // when it is part of the envelope, else the far side of the cone. The
    // distance beyond an end stays the end-sphere distance.
    let far = if bone.cap_exposes(end, &-dir) {
        Projection {
            foot: center - dir * r,
            normal: -dir,
            distance: 0.0,
            residual: 0.0,
            tau: tau_end,
            tau_alpha,
            case_tag: far_tag,
            formula: DistanceFormula::Sphere(end),
            on_surface: true,
        }
    } else {
        opposite_cone(bone, axial, radial, &e, tau_alpha, far_tag)
    };
    Projection {
        distance: residual.abs(),
        residual,
        formula: DistanceFormula::Sphere(end),
        ..far
    }
}

fn opposite_cone(
    bone: &BoneGeometry,
    axial: f64,
    radial: f64,
    e: &Vec3,
    tau_alpha: f64,
    case_tag: CaseTag,
) -> Projection {
    let (s, c, l, u) = (bone.sin_alpha, bone.cos_alpha, bone.length, bone.axis);
    let axial_m = axial - radial * s / c;
    let tau = axial_m / l;
    let r_lin = bone.radius_at(tau);
    let apex_clamped = r_lin < 0.0;
    let r = r_lin.max(0.0);
    let center = bone.c1 + u * axial_m;
    let dir = -(u * s + e * c);
    let residual = radial / c + r;
    Projection {
        foot: center + dir * r,
        normal: dir,
        distance: residual,
        residual,
        tau,
        tau_alpha,
        case_tag,
        formula: DistanceFormula::OppositeCone { apex_clamped },
        on_surface: (0.0..=1.0).contains(&tau),
    }
}

/// Derivatives of a signed residual with respect to the bone parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BoneGradient {
    pub c1: Vec3,
    pub c2: Vec3,
    pub r1: f64,
    pub r2: f64,
}

impl BoneGradient {
    /// Directional derivative along a first-order change of the bone.
    pub fn apply(&self, delta: &BoneDelta) -> f64 {
        self.c1.dot(&delta.c1) + self.c2.dot(&delta.c2) + self.r1 * delta.r1 + self.r2 * delta.r2
    }
}

/// First-order change of the bone parameters along one optimization variable.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BoneDelta {
    pub c1: Vec3,
    pub c2: Vec3,
    pub r1: f64,
    pub r2: f64,
}

/// Gradient of the residual of `p` for a frozen `formula`.
///
/// The cone formulas are written in cylindrical coordinates around the axis,
/// `d = f(axial, radial, l, r1, r2)`, and pushed through the derivatives of
/// the axial/radial coordinates with respect to the end centers.
pub fn residual_gradient(p: &Vec3, bone: &BoneGeometry, formula: DistanceFormula) -> BoneGradient {
    let (s, c, l, u) = (bone.sin_alpha, bone.cos_alpha, bone.length, bone.axis);
    match formula {
        DistanceFormula::Cone | DistanceFormula::OppositeCone { .. } => {
            let (a, rho, e) = bone.cylindrical(p);
            let (d_rho, d_a, d_l, d_r1, d_r2) = match formula {
                DistanceFormula::Cone => (
                    c,
                    -s,
                    rho * s * s / (c * l) + a * s / l,
                    rho * s / (c * l) + a / l - 1.0,
                    -rho * s / (c * l) - a / l,
                ),
                DistanceFormula::OppositeCone {
                    apex_clamped: false,
                } => (
                    c,
                    s,
                    rho * s * s / (c * l) - a * s / l,
                    rho * s / (c * l) - a / l + 1.0,
                    -rho * s / (c * l) + a / l,
                ),
                _ => {
                    let c3 = c * c * c;
                    (
                        1.0 / c,
                        0.0,
                        -rho * s * s / (c3 * l),
                        -rho * s / (c3 * l),
                        rho * s / (c3 * l),
                    )
                }
            };
            let grad_c1 = e * (-(1.0 - a / l) * d_rho) + (u + e * (rho / l)) * (-d_a) - u * d_l;
            let grad_c2 = e * (-(a / l) * d_rho) + e * (rho / l * d_a) + u * d_l;
            BoneGradient {
                c1: grad_c1,
                c2: grad_c2,
                r1: d_r1,
                r2: d_r2,
            }
        }
        DistanceFormula::Sphere(end) => {
            let center = bone.center(end);
            let to_p = p - center;
            let dist = to_p.norm();
            let dir = if dist > AXIS_EPS * l {
                to_p / dist
            } else {
                Vec3::zeros()
            };
            let mut g = BoneGradient::default();
            match end {
                End::First => {
                    g.c1 = -dir;
                    g.r1 = -1.0;
                }
                End::Second => {
                    g.c2 = -dir;
                    g.r2 = -1.0;
                }
            }
            g
        }
    }
}

/// Area-weighted uniform samples over the lateral cone and both exposed caps,
/// each with its outward normal. Deterministic for a fixed seed.
pub fn sample_surface(bone: &BoneGeometry, count: usize, seed: u64) -> Result<Vec<OrientedPoint>> {
    if count == 0 {
        return Err(Error::InvalidArgument(
            "sample count must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| sample_point(bone, &mut rng)).collect())
}

/// One area-uniform sample on the envelope of `bone`.
pub fn sample_point<R: Rng + ?Sized>(bone: &BoneGeometry, rng: &mut R) -> OrientedPoint {
    let lateral = bone.lateral_area();
    let cap1 = bone.cap_area(End::First);
    let total = lateral + cap1 + bone.cap_area(End::Second);
    let pick = rng.random::<f64>() * total;
    let (s, c, u) = (bone.sin_alpha, bone.cos_alpha, bone.axis);
    let v = perpendicular(&u);
    let w = u.cross(&v);
    let phi = rng.random::<f64>() * 2.0 * PI;
    let radial = v * phi.cos() + w * phi.sin();

    if pick < lateral {
        // Slant parameter with density proportional to the ring radius.
        let (big1, big2) = (bone.r1 * c, bone.r2 * c);
        let x: f64 = rng.random();
        let t = if (big2 - big1).abs() < 1e-12 * (big1 + big2).max(1e-300) {
            x
        } else {
            ((big1 * big1 + x * (big2 * big2 - big1 * big1)).sqrt() - big1) / (big2 - big1)
        };
        let outward = radial * c - u * s;
        let t1 = bone.c1 + outward * bone.r1;
        let t2 = bone.c2 + outward * bone.r2;
        OrientedPoint {
            position: t1 + (t2 - t1) * t,
            normal: outward,
        }
    } else {
        // Uniform height on a sphere zone is uniform in area.
        let (center, r, lo, hi) = if pick < lateral + cap1 {
            (bone.c1, bone.r1, -1.0, -s)
        } else {
            (bone.c2, bone.r2, -s, 1.0)
        };
        let z = lo + (hi - lo) * rng.random::<f64>();
        let dir = u * z + radial * (1.0 - z * z).max(0.0).sqrt();
        OrientedPoint {
            position: center + dir * r,
            normal: dir,
        }
    }
}

/// Indexed triangle mesh.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub positions: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn append(&mut self, other: &TriMesh) {
        let offset = self.positions.len();
        self.positions.extend_from_slice(&other.positions);
        self.faces.extend(
            other
                .faces
                .iter()
                .map(|f| [f[0] + offset, f[1] + offset, f[2] + offset]),
        );
    }
}

/// Number of profile rings per cap used by [`tessellate`].
pub fn rings_per_cap(segments: usize) -> usize {
    segments.div_ceil(4).max(1)
}

/// Surface-of-revolution tessellation of the bone envelope.
///
/// The profile angle `phi` is measured from `-axis`; the first cap covers
/// `phi in [0, acos(sin_alpha)]`, the second cap the rest up to `pi`, and the
/// cone is the band between the two tangent rings. With `n = segments` and
/// `m = rings_per_cap(n)` the mesh has `2 + 2*m*n` vertices (two poles plus
/// `2*m` rings) and `2*n + 2*(2*m - 1)*n` triangles, oriented outward.
pub fn tessellate(bone: &BoneGeometry, segments: usize) -> Result<TriMesh> {
    if segments < 3 {
        return Err(Error::InvalidArgument(
            "tessellation needs at least 3 segments".into(),
        ));
    }
    let n = segments;
    let m = rings_per_cap(n);
    let u = bone.axis;
    let v = perpendicular(&u);
    let w = u.cross(&v);
    let split = bone.sin_alpha.clamp(-1.0, 1.0).acos();

    let mut profile: Vec<(Vec3, f64, f64)> = Vec::with_capacity(2 * m);
    for i in 1..=m {
        profile.push((bone.c1, bone.r1, split * i as f64 / m as f64));
    }
    for i in 0..m {
        profile.push((bone.c2, bone.r2, split + (PI - split) * i as f64 / m as f64));
    }

    let mut mesh = TriMesh::default();
    mesh.positions.push(bone.c1 - u * bone.r1);
    for &(center, r, phi) in &profile {
        for j in 0..n {
            let theta = 2.0 * PI * j as f64 / n as f64;
            let radial = v * theta.cos() + w * theta.sin();
            let dir = -u * phi.cos() + radial * phi.sin();
            mesh.positions.push(center + dir * r);
        }
    }
    let north = mesh.positions.len();
    mesh.positions.push(bone.c2 + u * bone.r2);

    let ring = |k: usize, j: usize| 1 + k * n + (j % n);
    for j in 0..n {
        mesh.faces.push([0, ring(0, j + 1), ring(0, j)]);
    }
    for k in 0..(2 * m - 1) {
        for j in 0..n {
            let (a, b) = (ring(k, j), ring(k, j + 1));
            let (c, d) = (ring(k + 1, j), ring(k + 1, j + 1));
            mesh.faces.push([a, b, d]);
            mesh.faces.push([a, d, c]);
        }
    }
    let last = 2 * m - 1;
    for j in 0..n {
        mesh.faces.push([north, ring(last, j), ring(last, j + 1)]);
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pt(p: [f64; 3], n: [f64; 3]) -> OrientedPoint {
        OrientedPoint::new(Vec3::from(p), Vec3::from(n)).unwrap()
    }

    fn cylinder() -> BoneGeometry {
        BoneGeometry::new(Vec3::zeros(), 1.0, Vec3::new(10.0, 0.0, 0.0), 1.0).unwrap()
    }

    fn cone() -> BoneGeometry {
        BoneGeometry::new(Vec3::zeros(), 1.0, Vec3::new(4.0, 0.0, 0.0), 3.0).unwrap()
    }

    #[test]
    fn axis_projection_examples() {
        let bone = cylinder();
        let a = project_axis(&Vec3::new(5.0, 3.0, 0.0), &bone);
        assert_eq!(a.p_star, Vec3::new(5.0, 0.0, 0.0));
        assert_eq!((a.axial, a.radial), (5.0, 3.0));

        let a = project_axis(&Vec3::zeros(), &bone);
        assert_eq!(a.p_star, Vec3::zeros());
        assert_eq!((a.axial, a.radial), (0.0, 0.0));

        let short = BoneGeometry::new(Vec3::zeros(), 0.5, Vec3::new(4.0, 0.0, 0.0), 0.5).unwrap();
        let a = project_axis(&Vec3::new(1.0, 4.0, 0.0), &short);
        assert_eq!(a.p_star, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!((a.axial, a.radial), (1.0, 4.0));
    }

    #[test]
    fn cylinder_same_side() {
        let p = project_normal_constrained(&pt([5.0, 3.0, 0.0], [0.0, 1.0, 0.0]), &cylinder());
        assert_relative_eq!(p.foot, Vec3::new(5.0, 1.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(p.distance, 2.0, epsilon = 1e-12);
        assert_eq!(p.case_tag, CaseTag::ConeSameSide);
        assert!(p.on_surface);
    }

    #[test]
    fn cylinder_opposite_side() {
        let p = project_normal_constrained(&pt([5.0, 3.0, 0.0], [0.0, -1.0, 0.0]), &cylinder());
        assert_relative_eq!(p.foot, Vec3::new(5.0, -1.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(p.distance, 4.0, epsilon = 1e-12);
        assert_eq!(p.case_tag, CaseTag::ConeOppositeSide);
    }

    #[test]
    fn cylinder_cap() {
        let q = Vec3::new(-2.0, 0.5, 0.0);
        let p = project_normal_constrained(&pt([-2.0, 0.5, 0.0], [-1.0, 0.25, 0.0]), &cylinder());
        assert_eq!(p.case_tag, CaseTag::Cap1);
        assert_relative_eq!(p.distance, q.norm() - 1.0, epsilon = 1e-12);
        assert_relative_eq!((p.foot - q).norm(), p.distance, epsilon = 1e-12);
    }

    #[test]
    fn cone_reference_values() {
        let p = project_normal_constrained(&pt([1.0, 4.0, 0.0], [0.0, 1.0, 0.0]), &cone());
        // d = rho*cos(a) - axial*sin(a) - r1 with sin(a) = 1/2.
        let expected = 4.0 * 0.75f64.sqrt() - 0.5 - 1.0;
        assert_relative_eq!(p.distance, expected, epsilon = 1e-12);
        assert_relative_eq!(p.distance, 1.9641, epsilon = 1e-4);
        assert_relative_eq!(p.tau_alpha, 0.8274, epsilon = 1e-4);
        assert_eq!(p.case_tag, CaseTag::ConeSameSide);
    }

    #[test]
    fn on_axis_point_is_deterministic() {
        let bone = cylinder();
        let a = project_normal_constrained(&pt([5.0, 0.0, 0.0], [0.0, 0.0, 1.0]), &bone);
        let b = project_normal_constrained(&pt([5.0, 0.0, 0.0], [0.0, 0.0, 1.0]), &bone);
        assert_eq!(a, b);
        assert_relative_eq!(a.distance, 1.0, epsilon = 1e-12);
        assert!(a.distance.is_finite());
    }

    #[test]
    fn orthogonal_mode_ignores_normals() {
        let bone = cylinder();
        let a = project(
            &pt([5.0, 3.0, 0.0], [0.0, -1.0, 0.0]),
            &bone,
            ProjectionMode::Orthogonal,
        );
        assert_eq!(a.case_tag, CaseTag::ConeSameSide);
        assert_relative_eq!(a.distance, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn perpendicular_normal_counts_as_consistent() {
        let bone = cylinder();
        let p = project_normal_constrained(&pt([5.0, 3.0, 0.0], [1.0, 0.0, 0.0]), &bone);
        assert_eq!(p.case_tag, CaseTag::ConeSameSide);
    }

    #[test]
    fn rejects_swallowed_spheres() {
        assert!(BoneGeometry::new(Vec3::zeros(), 1.0, Vec3::new(1.0, 0.0, 0.0), 2.0).is_err());
        assert!(BoneGeometry::new(Vec3::zeros(), 1.0, Vec3::zeros(), 1.0).is_err());
        assert!(BoneGeometry::new(Vec3::zeros(), -1.0, Vec3::new(3.0, 0.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn alpha_matches_definition() {
        let bone = cone();
        assert_relative_eq!(bone.alpha(), (0.5f64).asin(), epsilon = 1e-12);
        assert_eq!(cylinder().alpha(), 0.0);
    }

    #[test]
    fn samples_lie_on_lateral_surface() {
        let bone = cylinder();
        let pts = sample_surface(&bone, 4, 7).unwrap();
        assert_eq!(pts.len(), 4);
        for p in pts {
            let a = project_axis(&p.position, &bone);
            if a.axial > 0.0 && a.axial < 10.0 {
                assert!((a.radial - 1.0).abs() < 1e-9);
            }
            assert!(bone.signed_distance(&p.position).abs() < 1e-9);
        }
        assert!(sample_surface(&bone, 0, 7).is_err());
    }

    #[test]
    fn sample_area_ratio() {
        let bone = cone();
        let pts = sample_surface(&bone, 100_000, 11).unwrap();
        let on_caps = pts
            .iter()
            .filter(|p| {
                let c = project(p, &bone, ProjectionMode::Orthogonal);
                !c.case_tag.is_cone()
            })
            .count() as f64;
        let lateral = pts.len() as f64 - on_caps;
        let analytic =
            (bone.cap_area(End::First) + bone.cap_area(End::Second)) / bone.lateral_area();
        assert!(((on_caps / lateral) / analytic - 1.0).abs() < 0.02);
    }

    #[test]
    fn tessellation_schema() {
        let mesh = tessellate(&cylinder(), 3).unwrap();
        assert_eq!(mesh.positions.len(), 2 + 2 * 3);
        assert_eq!(mesh.faces.len(), 2 * 3 + 2 * 3);
        assert!(tessellate(&cylinder(), 2).is_err());
    }

    #[test]
    fn tessellation_vertices_on_surface() {
        let bone = cone();
        let mesh = tessellate(&bone, 64).unwrap();
        for v in &mesh.positions {
            assert!(bone.signed_distance(v).abs() < 1e-6 * bone.length());
        }
    }
}
