//! Point-cloud files, normal estimation and mesh export.
//!
//! Clouds are read from whitespace-separated `x y z [nx ny nz]` text files or
//! ASCII PLY. Floats are written in Rust's shortest round-trip form, so a
//! write followed by a read reproduces every coordinate exactly.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::num::NonZero;
use std::path::Path;
use std::str::FromStr;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::{Matrix3, SymmetricEigen};
use petgraph::algo::min_spanning_tree;
use petgraph::data::FromElements;
use petgraph::graph::{NodeIndex, UnGraph};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{tessellate, OrientedPoint, TriMesh, Vec3};
use crate::skeleton::Skeleton;

/// Default neighbourhood size for normal estimation.
pub const DEFAULT_NEIGHBORS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CloudFormat {
    /// One point per line, `x y z nx ny nz`, `#` comments.
    XyzNormals,
    /// ASCII PLY with a `vertex` element.
    PlyAscii,
}

impl CloudFormat {
    /// Guesses the format from the file extension; anything but `.ply` is
    /// read as plain text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("ply") => CloudFormat::PlyAscii,
            _ => CloudFormat::XyzNormals,
        }
    }
}

impl FromStr for CloudFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xyz" | "xyz_normals" => Ok(CloudFormat::XyzNormals),
            "ply" | "ply_ascii" => Ok(CloudFormat::PlyAscii),
            _ => Err(Error::InvalidArgument(format!(
                "unknown cloud format '{s}'"
            ))),
        }
    }
}

/// Positions with optional per-point normals, as stored in a file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawCloud {
    pub positions: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
}

impl RawCloud {
    /// Oriented points with renormalized normals. `None` when the cloud
    /// carries no normals.
    pub fn oriented(&self) -> Option<Result<Vec<OrientedPoint>>> {
        let normals = self.normals.as_ref()?;
        Some(
            self.positions
                .iter()
                .zip(normals)
                .map(|(p, n)| OrientedPoint::new(*p, *n))
                .collect(),
        )
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads positions and whatever normals the file carries.
pub fn read_raw(path: &Path, format: CloudFormat) -> Result<RawCloud> {
    let text = read_text(path)?;
    match format {
        CloudFormat::XyzNormals => parse_xyz(&text),
        CloudFormat::PlyAscii => parse_ply(&text),
    }
}

/// Reads an oriented cloud, preserving file order. Normals are renormalized.
pub fn read_cloud(path: &Path, format: CloudFormat) -> Result<Vec<OrientedPoint>> {
    let raw = read_raw(path, format)?;
    raw.oriented().unwrap_or_else(|| {
        Err(Error::MissingNormals {
            path: path.to_path_buf(),
        })
    })
}

/// Reads a cloud and estimates normals with `k` neighbours when it carries
/// none, or always when `force` is set.
pub fn read_cloud_estimating(
    path: &Path,
    format: CloudFormat,
    k: usize,
    force: bool,
) -> Result<Vec<OrientedPoint>> {
    let raw = read_raw(path, format)?;
    match raw.oriented() {
        Some(points) if !force => points,
        _ => estimate_normals(&raw.positions, k),
    }
}

fn parse_float(tok: &str, line: usize, column: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(line, column, format!("invalid number '{tok}'")))?;
    if !v.is_finite() {
        return Err(Error::parse(
            line,
            column,
            format!("non-finite value '{tok}'"),
        ));
    }
    Ok(v)
}

/// Splits a line into tokens with their 1-based columns.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s + 1, &line[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

/// Parses the plain-text format. Every data line must carry either three or
/// six values, consistently across the file.
pub fn parse_xyz(text: &str) -> Result<RawCloud> {
    let mut cloud = RawCloud::default();
    let mut normals = Vec::new();
    let mut width = None;
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let content = raw.split('#').next().unwrap_or("");
        let toks = tokens(content);
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 3 && toks.len() != 6 {
            return Err(Error::parse(
                line,
                toks[0].0,
                format!("expected 3 or 6 values, found {}", toks.len()),
            ));
        }
        if *width.get_or_insert(toks.len()) != toks.len() {
            return Err(Error::parse(
                line,
                toks[0].0,
                "inconsistent number of values",
            ));
        }
        let v = toks
            .iter()
            .map(|&(col, t)| parse_float(t, line, col))
            .collect::<Result<Vec<f64>>>()?;
        cloud.positions.push(Vec3::new(v[0], v[1], v[2]));
        if v.len() == 6 {
            normals.push(Vec3::new(v[3], v[4], v[5]));
        }
    }
    if width == Some(6) {
        cloud.normals = Some(normals);
    }
    Ok(cloud)
}

struct PlyElement {
    name: String,
    count: usize,
    /// Scalar property names; `None` marks a list property.
    properties: Vec<Option<String>>,
}

/// Parses ASCII PLY. Only the `vertex` element is kept; `x y z` are
/// required, `nx ny nz` optional.
pub fn parse_ply(text: &str) -> Result<RawCloud> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(Error::parse(1, 1, "missing 'ply' magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut ended = false;
    for (line, raw) in lines.by_ref() {
        let toks = tokens(raw);
        let Some(&(col, key)) = toks.first() else {
            continue;
        };
        match key {
            "format" => {
                if toks.get(1).map(|t| t.1) != Some("ascii") {
                    return Err(Error::parse(line, col, "only ascii PLY is supported"));
                }
            }
            "comment" | "obj_info" => {}
            "element" => {
                if toks.len() != 3 {
                    return Err(Error::parse(line, col, "element needs a name and a count"));
                }
                let count = toks[2]
                    .1
                    .parse()
                    .map_err(|_| Error::parse(line, toks[2].0, "invalid element count"))?;
                elements.push(PlyElement {
                    name: toks[1].1.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(line, col, "property before any element"))?;
                match toks.get(1).map(|t| t.1) {
                    Some("list") if toks.len() == 5 => element.properties.push(None),
                    Some(_) if toks.len() == 3 => {
                        element.properties.push(Some(toks[2].1.to_string()))
                    }
                    _ => return Err(Error::parse(line, col, "malformed property")),
                }
            }
            "end_header" => {
                ended = true;
                break;
            }
            other => {
                return Err(Error::parse(
                    line,
                    col,
                    format!("unexpected header keyword '{other}'"),
                ))
            }
        }
    }
    if !ended {
        return Err(Error::parse(
            text.lines().count().max(1),
            1,
            "missing end_header",
        ));
    }
    let vertex = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::parse(1, 1, "no vertex element"))?;
    let column = |name: &str| {
        elements[vertex]
            .properties
            .iter()
            .position(|p| p.as_deref() == Some(name))
    };
    let xyz = ["x", "y", "z"].map(column);
    let nxyz = ["nx", "ny", "nz"].map(column);
    let [Some(x), Some(y), Some(z)] = xyz else {
        return Err(Error::parse(1, 1, "vertex element lacks x, y or z"));
    };
    let normal_columns = match nxyz {
        [Some(a), Some(b), Some(c)] => Some([a, b, c]),
        _ => None,
    };

    let mut data = lines.filter(|(_, l)| !l.trim().is_empty());
    let mut cloud = RawCloud::default();
    let mut normals = Vec::new();
    for (e, element) in elements.iter().enumerate() {
        for _ in 0..element.count {
            let (line, raw) = data
                .next()
                .ok_or_else(|| Error::parse(text.lines().count(), 1, "unexpected end of data"))?;
            if e != vertex {
                continue;
            }
            let toks = tokens(raw);
            if element.properties.iter().any(Option::is_none)
                || toks.len() != element.properties.len()
            {
                return Err(Error::parse(
                    line,
                    1,
                    format!(
                        "expected {} vertex values, found {}",
                        element.properties.len(),
                        toks.len()
                    ),
                ));
            }
            let v = toks
                .iter()
                .map(|&(col, t)| parse_float(t, line, col))
                .collect::<Result<Vec<f64>>>()?;
            cloud.positions.push(Vec3::new(v[x], v[y], v[z]));
            if let Some([a, b, c]) = normal_columns {
                normals.push(Vec3::new(v[a], v[b], v[c]));
            }
        }
    }
    if normal_columns.is_some() {
        cloud.normals = Some(normals);
    }
    Ok(cloud)
}

/// Plain-text cloud, one `x y z nx ny nz` line per point.
pub fn format_xyz(points: &[OrientedPoint]) -> String {
    let mut out = String::new();
    for p in points {
        let (q, n) = (&p.position, &p.normal);
        let _ = writeln!(out, "{} {} {} {} {} {}", q.x, q.y, q.z, n.x, n.y, n.z);
    }
    out
}

/// ASCII PLY with double-precision `x y z nx ny nz` vertices.
pub fn format_ply(points: &[OrientedPoint]) -> String {
    let mut out = String::from("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", points.len());
    for name in ["x", "y", "z", "nx", "ny", "nz"] {
        let _ = writeln!(out, "property double {name}");
    }
    out.push_str("end_header\n");
    out.push_str(&format_xyz(points));
    out
}

pub fn write_cloud(path: &Path, points: &[OrientedPoint], format: CloudFormat) -> Result<()> {
    let text = match format {
        CloudFormat::XyzNormals => format_xyz(points),
        CloudFormat::PlyAscii => format_ply(points),
    };
    write_text(path, &text)
}

/// Estimates unit normals by a plane fit over the `k` nearest neighbours of
/// each point, then orients them consistently by propagation along a
/// minimum spanning tree of the neighbourhood graph, where an edge costs
/// `1 - |n_i . n_j|`. Each connected component is flipped as a whole so that
/// most of its normals point away from its centroid.
pub fn estimate_normals(positions: &[Vec3], k: usize) -> Result<Vec<OrientedPoint>> {
    if k < 3 {
        return Err(Error::InvalidArgument(format!(
            "normal estimation needs k >= 3, got {k}"
        )));
    }
    if positions.len() < k + 1 {
        return Err(Error::InvalidArgument(format!(
            "normal estimation with k = {k} needs at least {} points, got {}",
            k + 1,
            positions.len()
        )));
    }
    if positions.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(Error::InvalidArgument(
            "point coordinates must be finite".into(),
        ));
    }
    let coords: Vec<[f64; 3]> = positions.iter().map(|p| [p.x, p.y, p.z]).collect();
    let tree: ImmutableKdTree<f64, 3> = ImmutableKdTree::new_from_slice(&coords);
    let count = NonZero::new(k + 1).expect("k + 1 is positive");
    let neighbors: Vec<Vec<usize>> = coords
        .par_iter()
        .enumerate()
        .map(|(i, q)| {
            let mut found: Vec<(f64, usize)> = tree
                .nearest_n::<SquaredEuclidean>(q, count)
                .into_iter()
                .map(|n| (n.distance, n.item as usize))
                .filter(|&(_, j)| j != i)
                .collect();
            found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            found.truncate(k);
            found.into_iter().map(|(_, j)| j).collect()
        })
        .collect();
    let mut normals: Vec<Vec3> = neighbors
        .par_iter()
        .enumerate()
        .map(|(i, nb)| plane_normal(positions, i, nb))
        .collect();
    orient(positions, &neighbors, &mut normals);
    Ok(positions
        .iter()
        .zip(normals)
        .map(|(p, n)| OrientedPoint {
            position: *p,
            normal: n,
        })
        .collect())
}

/// Eigenvector of the smallest eigenvalue of the neighbourhood covariance.
fn plane_normal(positions: &[Vec3], i: usize, neighbors: &[usize]) -> Vec3 {
    let members = || std::iter::once(i).chain(neighbors.iter().copied());
    let n = (neighbors.len() + 1) as f64;
    let centroid = members().map(|j| positions[j]).sum::<Vec3>() / n;
    let cov = members().fold(Matrix3::zeros(), |acc, j| {
        let d = positions[j] - centroid;
        acc + d * d.transpose()
    });
    let eig = SymmetricEigen::new(cov);
    let smallest = eig.eigenvalues.imin();
    let v: Vec3 = eig.eigenvectors.column(smallest).into_owned();
    let norm = v.norm();
    if norm > 0.0 {
        v / norm
    } else {
        Vec3::z()
    }
}

fn orient(positions: &[Vec3], neighbors: &[Vec<usize>], normals: &mut [Vec3]) {
    let n = positions.len();
    let mut graph = UnGraph::<(), f64>::with_capacity(n, n * neighbors[0].len());
    for _ in 0..n {
        graph.add_node(());
    }
    for (i, nb) in neighbors.iter().enumerate() {
        for &j in nb {
            // Each undirected edge once, even when the relation is mutual.
            if i < j || !neighbors[j].contains(&i) {
                let w = 1.0 - normals[i].dot(&normals[j]).abs();
                graph.add_edge(NodeIndex::new(i), NodeIndex::new(j), w);
            }
        }
    }
    let tree = UnGraph::<(), f64>::from_elements(min_spanning_tree(&graph));
    let mut component = vec![usize::MAX; n];
    let mut components = 0;
    for seed in 0..n {
        if component[seed] != usize::MAX {
            continue;
        }
        let mut members = vec![seed];
        component[seed] = components;
        let mut queue = VecDeque::from([seed]);
        while let Some(i) = queue.pop_front() {
            for j in tree.neighbors(NodeIndex::new(i)).map(|x| x.index()) {
                if component[j] == usize::MAX {
                    component[j] = components;
                    if normals[j].dot(&normals[i]) < 0.0 {
                        normals[j] = -normals[j];
                    }
                    members.push(j);
                    queue.push_back(j);
                }
            }
        }
        let centroid = members.iter().map(|&i| positions[i]).sum::<Vec3>() / members.len() as f64;
        let outward = members
            .iter()
            .filter(|&&i| normals[i].dot(&(positions[i] - centroid)) > 0.0)
            .count();
        if 2 * outward < members.len() {
            for &i in &members {
                normals[i] = -normals[i];
            }
        }
        components += 1;
    }
    if components > 1 {
        log::warn!("neighbourhood graph has {components} components; oriented each separately");
    }
}

/// Concatenated tessellations of every bone.
pub fn skeleton_mesh(skeleton: &Skeleton, segments: usize) -> Result<TriMesh> {
    let mut mesh = TriMesh::default();
    for k in 0..skeleton.bones().len() {
        mesh.append(&tessellate(&skeleton.bone_geometry(k), segments)?);
    }
    Ok(mesh)
}

/// OBJ text with `v` and `f` records only (1-based indices).
pub fn format_obj(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for v in &mesh.positions {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn export_mesh(skeleton: &Skeleton, segments: usize, path: &Path) -> Result<()> {
    write_text(path, &format_obj(&skeleton_mesh(skeleton, segments)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_surface;
    use crate::skeleton::builtin;

    #[test]
    fn reads_handcrafted_xyz() {
        let text = "# three points\n0 0 0 0 0 2\n1 2 3 1 0 0 # trailing\n\n-1 -1 -1 0 3 4\n";
        let raw = parse_xyz(text).unwrap();
        assert_eq!(raw.positions.len(), 3);
        let pts = raw.oriented().unwrap().unwrap();
        assert_eq!(pts[0].normal, Vec3::z());
        assert!((pts[2].normal - Vec3::new(0.0, 0.6, 0.8)).norm() < 1e-15);
        assert_eq!(pts[1].position, Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn xyz_errors_name_the_line() {
        match parse_xyz("0 0 0 0 0 1\n1 2 x 0 0 1\n") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 5)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_xyz("0 0 0 0 0 1\n1 2 3\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_xyz("0 0 nan 0 0 1\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(parse_xyz("1 2 3\n").unwrap().normals.is_none());
    }

    #[test]
    fn reads_ply_with_normals_and_faces() {
        let text = "ply\nformat ascii 1.0\ncomment test\nelement vertex 2\nproperty float x\n\
                    property float y\nproperty float z\nproperty float nz\nproperty float ny\n\
                    property float nx\nelement face 1\nproperty list uchar int vertex_indices\n\
                    end_header\n1 2 3 0 0 5\n4 5 6 2 0 0\n3 0 1 1\n";
        let raw = parse_ply(text).unwrap();
        let pts = raw.oriented().unwrap().unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].normal, Vec3::x());
        assert_eq!(pts[1].normal, Vec3::z());
        assert_eq!(pts[1].position, Vec3::new(4.0, 5.0, 6.0));
    }

    #[test]
    fn ply_without_normals_or_binary() {
        let text =
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\n\
                    property double z\nend_header\n1 2 3\n";
        assert!(parse_ply(text).unwrap().normals.is_none());
        let binary = "ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n";
        assert!(matches!(
            parse_ply(binary),
            Err(Error::Parse { line: 2, .. })
        ));
        let bad = "ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\n\
                   property double z\nend_header\n1 2.5.1 3\n";
        assert!(matches!(parse_ply(bad), Err(Error::Parse { line: 8, .. })));
    }

    #[test]
    fn write_read_round_trip_is_exact() {
        let s = builtin("chain4").unwrap();
        let pts = sample_surface(&s.bone_geometry(1), 200, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for (name, format) in [
            ("a.xyz", CloudFormat::XyzNormals),
            ("a.ply", CloudFormat::PlyAscii),
        ] {
            let path = dir.path().join(name);
            write_cloud(&path, &pts, format).unwrap();
            assert_eq!(CloudFormat::from_path(&path), format);
            let back = read_cloud(&path, format).unwrap();
            for (a, b) in pts.iter().zip(&back) {
                assert_eq!(a.position, b.position);
                assert!((a.normal - b.normal).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn missing_normals_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.xyz");
        fs::write(&path, "0 0 0\n1 0 0\n").unwrap();
        assert!(matches!(
            read_cloud(&path, CloudFormat::XyzNormals),
            Err(Error::MissingNormals { .. })
        ));
        let gone = dir.path().join("gone.xyz");
        let err = read_cloud(&gone, CloudFormat::XyzNormals).unwrap_err();
        assert!(err.to_string().contains("gone.xyz"));
    }

    #[test]
    fn rejects_small_k() {
        let pts: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        assert!(estimate_normals(&pts, 2).is_err());
        assert!(estimate_normals(&pts[..3], 3).is_err());
    }

    #[test]
    fn obj_has_one_component_per_bone() {
        let s = builtin("human22").unwrap();
        let a = format_obj(&skeleton_mesh(&s, 8).unwrap());
        let b = format_obj(&skeleton_mesh(&s, 8).unwrap());
        assert_eq!(a, b);
        let per_bone = 2 + 2 * crate::geometry::rings_per_cap(8) * 8;
        let vertices = a.lines().filter(|l| l.starts_with("v ")).count();
        assert_eq!(vertices, 22 * per_bone);
        assert!(a
            .lines()
            .all(|l| l.starts_with("v ") || l.starts_with("f ")));
    }
}
