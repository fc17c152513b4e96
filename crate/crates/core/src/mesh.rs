//! Structured triangulations of axis-aligned rectangles.

use std::collections::HashMap;

use thiserror::Error;

use crate::real::Real;

/// Distance below which a vertex counts as lying on a rectangle side.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("cell counts must be positive, got nx={nx}, ny={ny}")]
    ZeroCells { nx: usize, ny: usize },
    #[error("degenerate rectangle [{x0}, {x1}] x [{y0}, {y1}]")]
    DegenerateRect { x0: f64, x1: f64, y0: f64, y1: f64 },
    #[error("triangle index {index} out of range ({count} triangles)")]
    TriangleOutOfRange { index: usize, count: usize },
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect<T> {
    pub x0: T,
    pub x1: T,
    pub y0: T,
    pub y1: T,
}

impl<T: Real> Rect<T> {
    pub fn new(x0: T, x1: T, y0: T, y1: T) -> Result<Self, MeshError> {
        let r = Rect { x0, x1, y0, y1 };
        r.validate()?;
        Ok(r)
    }

    pub fn unit() -> Self {
        Rect {
            x0: T::zero(),
            x1: T::one(),
            y0: T::zero(),
            y1: T::one(),
        }
    }

    /// Square `[-half, half]^2`.
    pub fn centered_square(half: T) -> Self {
        Rect {
            x0: -half,
            x1: half,
            y0: -half,
            y1: half,
        }
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let ok = self.x0.is_finite()
            && self.x1.is_finite()
            && self.y0.is_finite()
            && self.y1.is_finite()
            && self.x0 < self.x1
            && self.y0 < self.y1;
        if ok {
            Ok(())
        } else {
            Err(MeshError::DegenerateRect {
                x0: self.x0.as_f64(),
                x1: self.x1.as_f64(),
                y0: self.y0.as_f64(),
                y1: self.y1.as_f64(),
            })
        }
    }

    pub fn area(&self) -> T {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn on_boundary(&self, p: [T; 2]) -> bool {
        let tol = T::lit(BOUNDARY_TOL);
        (p[0] - self.x0).abs() <= tol
            || (p[0] - self.x1).abs() <= tol
            || (p[1] - self.y0).abs() <= tol
            || (p[1] - self.y1).abs() <= tol
    }
}

/// Affine map from the reference triangle `{(0,0), (1,0), (0,1)}` onto a mesh triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleGeometry<T> {
    pub area: T,
    /// Columns are the edge vectors `p1 - p0` and `p2 - p0`.
    pub jacobian: [[T; 2]; 2],
    /// `J^{-T}`: maps reference gradients to physical gradients.
    pub inv_transpose: [[T; 2]; 2],
    pub origin: [T; 2],
}

impl<T: Real> TriangleGeometry<T> {
    pub fn from_points(p: [[T; 2]; 3]) -> Self {
        let j = [
            [p[1][0] - p[0][0], p[2][0] - p[0][0]],
            [p[1][1] - p[0][1], p[2][1] - p[0][1]],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let inv_det = T::one() / det;
        // (J^{-1})^T
        let inv_transpose = [
            [j[1][1] * inv_det, -j[1][0] * inv_det],
            [-j[0][1] * inv_det, j[0][0] * inv_det],
        ];
        TriangleGeometry {
            area: det * T::lit(0.5),
            jacobian: j,
            inv_transpose,
            origin: p[0],
        }
    }

    /// Determinant of the jacobian, i.e. twice the signed area.
    pub fn det(&self) -> T {
        self.area + self.area
    }

    pub fn map_point(&self, xi: [T; 2]) -> [T; 2] {
        let j = &self.jacobian;
        [
            self.origin[0] + j[0][0] * xi[0] + j[0][1] * xi[1],
            self.origin[1] + j[1][0] * xi[0] + j[1][1] * xi[1],
        ]
    }

    pub fn map_gradient(&self, g: [T; 2]) -> [T; 2] {
        let k = &self.inv_transpose;
        [k[0][0] * g[0] + k[0][1] * g[1], k[1][0] * g[0] + k[1][1] * g[1]]
    }
}

/// Uniform triangulation of a rectangle.
///
/// Vertices are numbered row-major, every cell is split along its
/// lower-left to upper-right diagonal, and triangles are counter-clockwise.
/// Local edge `k` of a triangle joins its local vertices `k` and `(k + 1) % 3`.
#[derive(Debug, Clone)]
pub struct Mesh<T> {
    pub domain: Rect<T>,
    pub nx: usize,
    pub ny: usize,
    pub vertices: Vec<[T; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<[usize; 2]>,
    pub triangle_edges: Vec<[usize; 3]>,
    pub boundary_vertex_flags: Vec<bool>,
    pub boundary_edge_flags: Vec<bool>,
    pub h: T,
}

pub fn build_rect_mesh<T: Real>(domain: Rect<T>, nx: usize, ny: usize) -> Result<Mesh<T>, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::ZeroCells { nx, ny });
    }
    domain.validate()?;

    let dx = (domain.x1 - domain.x0) / T::from_usize_lossy(nx);
    let dy = (domain.y1 - domain.y0) / T::from_usize_lossy(ny);
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        // snap the last row/column onto the sides exactly
        let y = if j == ny {
            domain.y1
        } else {
            domain.y0 + dy * T::from_usize_lossy(j)
        };
        for i in 0..=nx {
            let x = if i == nx {
                domain.x1
            } else {
                domain.x0 + dx * T::from_usize_lossy(i)
            };
            vertices.push([x, y]);
        }
    }

    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let v00 = vid(i, j);
            let v10 = vid(i + 1, j);
            let v01 = vid(i, j + 1);
            let v11 = vid(i + 1, j + 1);
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }

    let mut edge_index: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * nx * ny + nx + ny);
    let mut edges = Vec::new();
    let mut edge_triangle_count: Vec<u8> = Vec::new();
    let mut triangle_edges = Vec::with_capacity(triangles.len());
    for tri in &triangles {
        let mut te = [0usize; 3];
        for (k, slot) in te.iter_mut().enumerate() {
            let a = tri[k];
            let b = tri[(k + 1) % 3];
            let key = (a.min(b), a.max(b));
            let e = *edge_index.entry(key).or_insert_with(|| {
                edges.push([key.0, key.1]);
                edge_triangle_count.push(0);
                edges.len() - 1
            });
            edge_triangle_count[e] += 1;
            *slot = e;
        }
        triangle_edges.push(te);
    }

    let boundary_vertex_flags: Vec<bool> = vertices.iter().map(|p| domain.on_boundary(*p)).collect();
    let boundary_edge_flags: Vec<bool> = edge_triangle_count.iter().map(|&c| c == 1).collect();
    let h = (dx * dx + dy * dy).sqrt();

    Ok(Mesh {
        domain,
        nx,
        ny,
        vertices,
        triangles,
        edges,
        triangle_edges,
        boundary_vertex_flags,
        boundary_edge_flags,
        h,
    })
}

impl<T: Real> Mesh<T> {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn triangle_points(&self, t: usize) -> [[T; 2]; 3] {
        let tri = self.triangles[t];
        [self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]]
    }

    pub fn triangle_geometry(&self, t: usize) -> Result<TriangleGeometry<T>, MeshError> {
        if t >= self.triangles.len() {
            return Err(MeshError::TriangleOutOfRange {
                index: t,
                count: self.triangles.len(),
            });
        }
        Ok(TriangleGeometry::from_points(self.triangle_points(t)))
    }

    /// Unchecked variant used inside element loops.
    pub(crate) fn geometry(&self, t: usize) -> TriangleGeometry<T> {
        TriangleGeometry::from_points(self.triangle_points(t))
    }

    pub fn edge_midpoint(&self, e: usize) -> [T; 2] {
        let [a, b] = self.edges[e];
        let half = T::lit(0.5);
        [
            (self.vertices[a][0] + self.vertices[b][0]) * half,
            (self.vertices[a][1] + self.vertices[b][1]) * half,
        ]
    }

    /// Locates the triangle containing `p` together with its reference coordinates.
    pub fn locate(&self, p: [T; 2]) -> Option<(usize, [T; 2])> {
        let d = &self.domain;
        let tol = T::lit(1e-12);
        if p[0] < d.x0 - tol || p[0] > d.x1 + tol || p[1] < d.y0 - tol || p[1] > d.y1 + tol {
            return None;
        }
        let fx = ((p[0] - d.x0) / (d.x1 - d.x0) * T::from_usize_lossy(self.nx)).to_f64()?;
        let fy = ((p[1] - d.y0) / (d.y1 - d.y0) * T::from_usize_lossy(self.ny)).to_f64()?;
        let i = (fx.floor().max(0.0) as usize).min(self.nx - 1);
        let j = (fy.floor().max(0.0) as usize).min(self.ny - 1);
        let cell = j * self.nx + i;
        for t in [2 * cell, 2 * cell + 1] {
            let g = self.geometry(t);
            let xi = inverse_map(&g, p);
            if xi[0] >= -tol && xi[1] >= -tol && xi[0] + xi[1] <= T::one() + tol {
                return Some((t, xi));
            }
        }
        None
    }
}

fn inverse_map<T: Real>(g: &TriangleGeometry<T>, p: [T; 2]) -> [T; 2] {
    let r = [p[0] - g.origin[0], p[1] - g.origin[1]];
    // J^{-1} = (J^{-T})^T
    let k = &g.inv_transpose;
    [k[0][0] * r[0] + k[1][0] * r[1], k[0][1] * r[0] + k[1][1] * r[1]]
}
