//! Normal estimation against clouds whose true normals are known.

use skelreg::geometry::Vec3;
use skelreg::io::{estimate_normals, DEFAULT_NEIGHBORS};

fn fibonacci_sphere(n: usize, radius: f64, center: Vec3) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let theta = golden * i as f64;
            center + Vec3::new(r * theta.cos(), y, r * theta.sin()) * radius
        })
        .collect()
}

#[test]
fn plane_normals_are_consistent() {
    // A jittered grid on a tilted plane.
    let normal = Vec3::new(1.0, 2.0, 2.0) / 3.0;
    let u = Vec3::new(2.0, -1.0, 0.0).normalize();
    let v = normal.cross(&u);
    let mut pts = Vec::new();
    for i in 0..40 {
        for j in 0..40 {
            let jitter = ((i * 7 + j * 13) % 10) as f64 * 0.01;
            pts.push(u * (i as f64 + jitter) + v * (j as f64 - jitter));
        }
    }
    let out = estimate_normals(&pts, DEFAULT_NEIGHBORS).unwrap();
    let sign = out[0].normal.dot(&normal).signum();
    let limit = 1f64.to_radians().cos();
    for p in &out {
        assert!((p.normal.norm() - 1.0).abs() < 1e-12);
        assert!(p.normal.dot(&normal) * sign > limit, "{:?}", p.normal);
    }
}

#[test]
fn sphere_normals_point_outward() {
    let center = Vec3::new(3.0, -2.0, 5.0);
    let pts = fibonacci_sphere(4000, 10.0, center);
    let out = estimate_normals(&pts, DEFAULT_NEIGHBORS).unwrap();
    let limit = 5f64.to_radians().cos();
    let good = out
        .iter()
        .filter(|p| p.normal.dot(&(p.position - center).normalize()) > limit)
        .count();
    assert!(good as f64 > 0.99 * out.len() as f64, "{good}");
}

#[test]
fn two_separate_spheres_are_each_outward() {
    let a = Vec3::new(-50.0, 0.0, 0.0);
    let b = Vec3::new(50.0, 0.0, 0.0);
    let mut pts = fibonacci_sphere(1500, 5.0, a);
    pts.extend(fibonacci_sphere(1500, 5.0, b));
    let out = estimate_normals(&pts, 12).unwrap();
    let good = out
        .iter()
        .enumerate()
        .filter(|(i, p)| {
            let c = if *i < 1500 { a } else { b };
            p.normal.dot(&(p.position - c).normalize()) > 0.9
        })
        .count();
    assert!(good as f64 > 0.99 * out.len() as f64, "{good}");
}
