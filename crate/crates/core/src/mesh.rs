//! Conforming triangulations of the unit square.
//!
//! Structured meshes split every grid cell along the lower-left to
//! upper-right diagonal. Arbitrary triangulations enter through the text
//! reader ([`read_mesh`]) and go through the same validation.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

/// Tolerance for the coverage check `sum of areas = 1`.
pub const AREA_TOL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("structured mesh needs n >= 1")]
    ZeroResolution,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("triangle {tri} references vertex {vertex}, but only {n_vertices} vertices exist")]
    VertexOutOfRange {
        tri: usize,
        vertex: usize,
        n_vertices: usize,
    },
    #[error("triangle {tri} has non-positive signed area {area:e} (vertices must be counter-clockwise)")]
    Orientation { tri: usize, area: f64 },
    #[error("edge ({a}, {b}) is shared by {count} triangles {tris:?}; a conforming mesh allows 1 or 2")]
    NonConforming {
        a: usize,
        b: usize,
        count: usize,
        tris: Vec<usize>,
    },
    #[error("triangle areas sum to {total}, expected 1 (unit square)")]
    Coverage { total: f64 },
    #[error("boundary flag mismatch at vertex {vertex}")]
    BoundaryFlag { vertex: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An undirected edge stored with `a < b`.
pub type Edge = [usize; 2];

fn edge_key(a: usize, b: usize) -> Edge {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Immutable conforming triangulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_vertex: Vec<bool>,
    /// All edges, sorted; `edges[e]` has `a < b`.
    edges: Vec<Edge>,
    /// For each triangle the global edge index of local edges (0,1), (1,2), (2,0).
    tri_edges: Vec<[usize; 3]>,
    boundary_edges: Vec<Edge>,
    used_vertex: Vec<bool>,
    h: f64,
    quasi_uniformity: f64,
}

/// Summary reported by [`Mesh::metrics`].
#[derive(Debug, Clone, PartialEq)]
pub struct MeshMetrics {
    pub h: f64,
    /// Smallest interior angle over all triangles, in degrees.
    pub min_angle: f64,
    pub quasi_uniformity: f64,
    pub n_vertices: usize,
    pub n_triangles: usize,
    pub n_edges: usize,
    pub total_area: f64,
    /// Vertices not referenced by any triangle.
    pub unused_vertices: Vec<usize>,
}

fn signed_area(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

fn on_unit_square_boundary(p: [f64; 2]) -> bool {
    p.iter().any(|&c| c == 0.0 || c == 1.0)
}

impl Mesh {
    /// Build and validate a mesh. When `boundary` is `None` the boundary
    /// flags are inferred from coordinates lying on the unit-square sides.
    ///
    /// `require_unit_square` enables the coverage check (areas sum to 1).
    pub fn new(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary: Option<Vec<usize>>,
        require_unit_square: bool,
    ) -> Result<Self, MeshError> {
        let nv = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(MeshError::VertexOutOfRange {
                        tri: t,
                        vertex: v,
                        n_vertices: nv,
                    });
                }
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(area > 0.0) {
                return Err(MeshError::Orientation { tri: t, area });
            }
        }

        let mut edge_tris: HashMap<Edge, Vec<usize>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for l in 0..3 {
                edge_tris
                    .entry(edge_key(tri[l], tri[(l + 1) % 3]))
                    .or_default()
                    .push(t);
            }
        }
        let mut edges: Vec<Edge> = edge_tris.keys().copied().collect();
        edges.sort_unstable();
        for e in &edges {
            let tris = &edge_tris[e];
            if tris.len() > 2 {
                return Err(MeshError::NonConforming {
                    a: e[0],
                    b: e[1],
                    count: tris.len(),
                    tris: tris.clone(),
                });
            }
        }
        let edge_index: HashMap<Edge, usize> =
            edges.iter().enumerate().map(|(i, e)| (*e, i)).collect();
        let tri_edges = triangles
            .iter()
            .map(|tri| {
                [0, 1, 2].map(|l| edge_index[&edge_key(tri[l], tri[(l + 1) % 3])])
            })
            .collect();
        let boundary_edges: Vec<Edge> = edges
            .iter()
            .filter(|e| edge_tris[*e].len() == 1)
            .copied()
            .collect();

        let mut used_vertex = vec![false; nv];
        for tri in &triangles {
            for &v in tri {
                used_vertex[v] = true;
            }
        }

        let boundary_vertex = match boundary {
            Some(list) => {
                let mut flags = vec![false; nv];
                for v in list {
                    if v >= nv {
                        return Err(MeshError::BoundaryFlag { vertex: v });
                    }
                    flags[v] = true;
                }
                flags
            }
            None => vertices.iter().map(|&p| on_unit_square_boundary(p)).collect(),
        };
        // Topological boundary must be flagged.
        for e in &boundary_edges {
            for &v in e {
                if !boundary_vertex[v] {
                    return Err(MeshError::BoundaryFlag { vertex: v });
                }
            }
        }

        let mut h: f64 = 0.0;
        let mut min_inscribed = f64::INFINITY;
        let mut total_area = 0.0;
        for tri in &triangles {
            let [a, b, c] = tri.map(|v| vertices[v]);
            let (la, lb, lc) = (dist(b, c), dist(c, a), dist(a, b));
            let area = signed_area(a, b, c);
            total_area += area;
            h = h.max(la.max(lb).max(lc));
            // inscribed-circle diameter = 4 * area / perimeter
            min_inscribed = min_inscribed.min(4.0 * area / (la + lb + lc));
        }
        if require_unit_square && (total_area - 1.0).abs() > AREA_TOL {
            return Err(MeshError::Coverage { total: total_area });
        }

        Ok(Self {
            vertices,
            triangles,
            boundary_vertex,
            edges,
            tri_edges,
            boundary_edges,
            used_vertex,
            h,
            quasi_uniformity: h / min_inscribed,
        })
    }

    /// `n x n` grid of the unit square, each cell split along the
    /// lower-left to upper-right diagonal.
    pub fn structured_unit_square(n: usize) -> Result<Self, MeshError> {
        if n == 0 {
            return Err(MeshError::ZeroResolution);
        }
        let np = n + 1;
        let mut vertices = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                // exact 0 and 1 at the sides
                vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let v00 = j * np + i;
                let v10 = v00 + 1;
                let v01 = v00 + np;
                let v11 = v01 + 1;
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        Self::new(vertices, triangles, None, true)
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    pub fn boundary_edges(&self) -> &[Edge] {
        &self.boundary_edges
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn boundary_vertex_flags(&self) -> &[bool] {
        &self.boundary_vertex
    }

    /// An edge lies on the boundary when it belongs to exactly one triangle.
    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.boundary_edges.binary_search(&self.edges[e]).is_ok()
    }

    pub fn is_used_vertex(&self, v: usize) -> bool {
        self.used_vertex[v]
    }

    /// Maximum element diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn quasi_uniformity(&self) -> f64 {
        self.quasi_uniformity
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_coords(t);
        signed_area(a, b, c)
    }

    pub fn metrics(&self) -> MeshMetrics {
        let mut min_angle = f64::INFINITY;
        let mut total_area = 0.0;
        for t in 0..self.triangles.len() {
            let p = self.triangle_coords(t);
            total_area += signed_area(p[0], p[1], p[2]);
            for l in 0..3 {
                let o = p[l];
                let a = p[(l + 1) % 3];
                let b = p[(l + 2) % 3];
                let u = [a[0] - o[0], a[1] - o[1]];
                let w = [b[0] - o[0], b[1] - o[1]];
                let cos = (u[0] * w[0] + u[1] * w[1]) / (u[0].hypot(u[1]) * w[0].hypot(w[1]));
                min_angle = min_angle.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        MeshMetrics {
            h: self.h,
            min_angle,
            quasi_uniformity: self.quasi_uniformity,
            n_vertices: self.vertices.len(),
            n_triangles: self.triangles.len(),
            n_edges: self.edges.len(),
            total_area,
            unused_vertices: (0..self.vertices.len())
                .filter(|&v| !self.used_vertex[v])
                .collect(),
        }
    }

    /// Serialize in the text mesh format accepted by [`read_mesh`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "vertices {}", self.vertices.len()).unwrap();
        for p in &self.vertices {
            // {:?} prints the shortest repr that round-trips exactly
            writeln!(s, "{:?} {:?}", p[0], p[1]).unwrap();
        }
        writeln!(s, "triangles {}", self.triangles.len()).unwrap();
        for t in &self.triangles {
            writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
        }
        let bnd: Vec<usize> = (0..self.vertices.len())
            .filter(|&v| self.boundary_vertex[v])
            .collect();
        writeln!(s, "boundary {}", bnd.len()).unwrap();
        for v in bnd {
            writeln!(s, "{v}").unwrap();
        }
        s
    }
}

pub fn generate_structured_unit_square(n: usize) -> Result<Mesh, MeshError> {
    Mesh::structured_unit_square(n)
}

pub fn write_mesh(mesh: &Mesh, path: &Path) -> Result<(), MeshError> {
    std::fs::write(path, mesh.to_text())?;
    Ok(())
}

pub fn read_mesh(path: &Path) -> Result<Mesh, MeshError> {
    parse_mesh(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    /// Next non-blank line with its 1-based number.
    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (i, l) in self.inner.by_ref() {
            let l = l.trim();
            self.last = i + 1;
            if !l.is_empty() && !l.starts_with('#') {
                return Some((i + 1, l));
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str), MeshError> {
        self.next().ok_or_else(|| MeshError::Parse {
            line: self.last + 1,
            msg: format!("unexpected end of file, expected {what}"),
        })
    }
}

fn parse_header(line: usize, text: &str, keyword: &str) -> Result<usize, MeshError> {
    let mut it = text.split_whitespace();
    match (it.next(), it.next(), it.next()) {
        (Some(k), Some(n), None) if k == keyword => n.parse().map_err(|_| MeshError::Parse {
            line,
            msg: format!("invalid count '{n}' after '{keyword}'"),
        }),
        _ => Err(MeshError::Parse {
            line,
            msg: format!("expected '{keyword} <count>', found '{text}'"),
        }),
    }
}

fn parse_fields<T: std::str::FromStr, const N: usize>(
    line: usize,
    text: &str,
) -> Result<[T; N], MeshError> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() != N {
        return Err(MeshError::Parse {
            line,
            msg: format!("expected {N} fields, found {}", parts.len()),
        });
    }
    let mut out = Vec::with_capacity(N);
    for p in parts {
        out.push(p.parse::<T>().map_err(|_| MeshError::Parse {
            line,
            msg: format!("cannot parse '{p}'"),
        })?);
    }
    out.try_into().map_err(|_| unreachable!())
}

/// Parse the text mesh format: `vertices N` + N lines `x y`,
/// `triangles M` + M lines `i j k`, optional `boundary B` + B indices.
pub fn parse_mesh(text: &str) -> Result<Mesh, MeshError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (ln, l) = lines.expect("'vertices <N>'")?;
    let nv = parse_header(ln, l, "vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.expect("vertex coordinates")?;
        vertices.push(parse_fields::<f64, 2>(ln, l)?);
    }
    let (ln, l) = lines.expect("'triangles <M>'")?;
    let nt = parse_header(ln, l, "triangles")?;
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, l) = lines.expect("triangle indices")?;
        triangles.push(parse_fields::<usize, 3>(ln, l)?);
    }
    let boundary = match lines.next() {
        None => None,
        Some((ln, l)) => {
            let nb = parse_header(ln, l, "boundary")?;
            let mut b = Vec::with_capacity(nb);
            for _ in 0..nb {
                let (ln, l) = lines.expect("boundary vertex index")?;
                let [v] = parse_fields::<usize, 1>(ln, l)?;
                b.push(v);
            }
            if let Some((ln, l)) = lines.next() {
                return Err(MeshError::Parse {
                    line: ln,
                    msg: format!("trailing content '{l}'"),
                });
            }
            Some(b)
        }
    };
    let explicit_boundary = boundary.is_some();
    Mesh::new(vertices, triangles, boundary, !explicit_boundary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_grid() {
        let m = Mesh::structured_unit_square(1).unwrap();
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_triangles(), 2);
        assert!((m.metrics().total_area - 1.0).abs() < AREA_TOL);
        assert!((m.h() - 2f64.sqrt()).abs() < 1e-15);
        assert!((m.metrics().min_angle - 45.0).abs() < 1e-12);
    }

    #[test]
    fn counts_n2() {
        let m = Mesh::structured_unit_square(2).unwrap();
        assert_eq!(m.n_vertices(), 9);
        assert_eq!(m.n_triangles(), 8);
        assert_eq!(m.boundary_vertex_flags().iter().filter(|&&b| b).count(), 8);
        assert_eq!(m.boundary_edges().len(), 8);
    }

    #[test]
    fn zero_rejected() {
        assert!(matches!(
            Mesh::structured_unit_square(0),
            Err(MeshError::ZeroResolution)
        ));
    }

    #[test]
    fn uniform_mesh_elements_share_shape() {
        let m = Mesh::structured_unit_square(4).unwrap();
        assert!((m.h() - 2f64.sqrt() / 4.0).abs() < 1e-15);
        // brute force per-element diameter / inscribed diameter
        let ratios: Vec<f64> = (0..m.n_triangles())
            .map(|t| {
                let p = m.triangle_coords(t);
                let l = [dist(p[1], p[2]), dist(p[2], p[0]), dist(p[0], p[1])];
                let diam = l.iter().cloned().fold(0.0, f64::max);
                diam / (4.0 * m.triangle_area(t) / l.iter().sum::<f64>())
            })
            .collect();
        for r in &ratios {
            assert!((r - ratios[0]).abs() < 1e-12);
        }
        assert!((m.quasi_uniformity() - ratios[0]).abs() < 1e-12);
    }

    #[test]
    fn refinement_preserves_shape_and_halves_h() {
        let m1 = Mesh::structured_unit_square(1).unwrap();
        let m8 = Mesh::structured_unit_square(8).unwrap();
        assert!((m1.quasi_uniformity() - m8.quasi_uniformity()).abs() < 1e-12);
        for n in [1, 2, 3, 5, 8] {
            let a = Mesh::structured_unit_square(n).unwrap();
            let b = Mesh::structured_unit_square(2 * n).unwrap();
            assert!((b.h() - a.h() / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn euler_formula() {
        for n in 1..7 {
            let m = Mesh::structured_unit_square(n).unwrap();
            let v = m.n_vertices() as i64;
            let e = m.edges().len() as i64;
            let f = m.n_triangles() as i64;
            assert_eq!(v - e + f, 1);
            assert!((m.metrics().total_area - 1.0).abs() <= AREA_TOL);
        }
    }

    #[test]
    fn boundary_flags_match_coordinates() {
        let m = Mesh::structured_unit_square(5).unwrap();
        for (v, p) in m.vertices().iter().enumerate() {
            let expect = p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0;
            assert_eq!(m.is_boundary_vertex(v), expect);
        }
    }

    #[test]
    fn text_round_trip() {
        let m = Mesh::structured_unit_square(1).unwrap();
        let back = parse_mesh(&m.to_text()).unwrap();
        assert_eq!(m, back);
        let m3 = Mesh::structured_unit_square(3).unwrap();
        assert_eq!(m3, parse_mesh(&m3.to_text()).unwrap());
    }

    #[test]
    fn flipped_triangle_named() {
        let ok = "vertices 4\n0 0\n1 0\n0 1\n1 1\ntriangles 2\n0 1 3\n0 3 2\n";
        assert!(parse_mesh(ok).is_ok());
        let flipped = "vertices 4\n0 0\n1 0\n0 1\n1 1\ntriangles 2\n0 1 3\n0 2 3\n";
        match parse_mesh(flipped) {
            Err(MeshError::Orientation { tri, .. }) => assert_eq!(tri, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dangling_vertex_reported() {
        let text = "vertices 5\n0 0\n1 0\n0 1\n1 1\n0.5 0.5\ntriangles 2\n0 1 3\n0 3 2\n";
        let m = parse_mesh(text).unwrap();
        assert_eq!(m.metrics().unused_vertices, vec![4]);
        assert!(!m.is_boundary_vertex(4));
    }

    #[test]
    fn parse_error_has_line() {
        let text = "vertices 2\n0 0\n1 x\n";
        match parse_mesh(text) {
            Err(MeshError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_conforming_rejected() {
        // three triangles on the same edge (0,1)
        let text = "vertices 5\n0 0\n1 0\n0 1\n1 1\n0.5 0.8\ntriangles 3\n0 1 2\n0 1 3\n0 1 4\nboundary 5\n0\n1\n2\n3\n4\n";
        assert!(matches!(
            parse_mesh(text),
            Err(MeshError::NonConforming { count: 3, .. })
        ));
    }

    #[test]
    fn gap_rejected_without_explicit_boundary() {
        let text = "vertices 4\n0 0\n1 0\n0 1\n1 1\ntriangles 1\n0 1 3\n";
        assert!(matches!(parse_mesh(text), Err(MeshError::Coverage { .. })));
    }
}
