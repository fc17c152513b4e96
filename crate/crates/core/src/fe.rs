//! Lagrange shape functions on the reference triangle, quadrature rules and
//! global degree-of-freedom maps.
//!
//! Reference triangle: `{(0,0), (1,0), (0,1)}`. P2 local nodes are the three
//! vertices followed by the midpoints of edges (0,1), (1,2), (2,0), matching
//! the local edge order of [`Mesh`].

use thiserror::Error;

use crate::mesh::Mesh;
use crate::real::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeError {
    #[error("reference point ({0}, {1}) lies outside the reference triangle")]
    OutsideReference(f64, f64),
    #[error("no quadrature rule of degree {0}; supported degrees are 4, 5 and 6")]
    UnsupportedDegree(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    P1Scalar,
    P2Scalar,
    /// Two-component P2 field; dofs are numbered component-major.
    P2Vector2,
}

impl ElementKind {
    /// Number of interpolation nodes per triangle.
    pub fn local_nodes(self) -> usize {
        match self {
            ElementKind::P1Scalar => 3,
            ElementKind::P2Scalar | ElementKind::P2Vector2 => 6,
        }
    }

    pub fn components(self) -> usize {
        match self {
            ElementKind::P2Vector2 => 2,
            _ => 1,
        }
    }

    pub fn local_dofs(self) -> usize {
        self.local_nodes() * self.components()
    }

    /// The scalar element each component uses.
    pub fn scalar(self) -> ElementKind {
        match self {
            ElementKind::P2Vector2 => ElementKind::P2Scalar,
            k => k,
        }
    }
}

/// Values and reference gradients of the scalar shape functions of `kind`
/// at `xi`. Vector kinds return their per-component scalar basis.
pub fn eval_basis<T: Real>(kind: ElementKind, xi: [T; 2]) -> Result<(Vec<T>, Vec<[T; 2]>), FeError> {
    let tol = T::lit(1e-12);
    if xi[0] < -tol || xi[1] < -tol || xi[0] + xi[1] > T::one() + tol {
        return Err(FeError::OutsideReference(xi[0].as_f64(), xi[1].as_f64()));
    }
    let n = kind.local_nodes();
    let mut v = vec![T::zero(); n];
    let mut g = vec![[T::zero(); 2]; n];
    basis_unchecked(kind.scalar(), xi, &mut v, &mut g);
    Ok((v, g))
}

pub(crate) fn basis_unchecked<T: Real>(kind: ElementKind, xi: [T; 2], v: &mut [T], g: &mut [[T; 2]]) {
    let (x, y) = (xi[0], xi[1]);
    let one = T::one();
    let l = [one - x - y, x, y];
    let dl = [[-one, -one], [one, T::zero()], [T::zero(), one]];
    match kind {
        ElementKind::P1Scalar => {
            v[..3].copy_from_slice(&l);
            g[..3].copy_from_slice(&dl);
        }
        _ => {
            let two = T::lit(2.0);
            let four = T::lit(4.0);
            for k in 0..3 {
                v[k] = l[k] * (two * l[k] - one);
                let c = four * l[k] - one;
                g[k] = [c * dl[k][0], c * dl[k][1]];
            }
            for k in 0..3 {
                let (a, b) = (k, (k + 1) % 3);
                v[3 + k] = four * l[a] * l[b];
                g[3 + k] = [
                    four * (dl[a][0] * l[b] + l[a] * dl[b][0]),
                    four * (dl[a][1] * l[b] + l[a] * dl[b][1]),
                ];
            }
        }
    }
}

/// Reference coordinates of the local nodes.
pub fn reference_nodes<T: Real>(kind: ElementKind) -> Vec<[T; 2]> {
    let (z, h, o) = (T::zero(), T::lit(0.5), T::one());
    let mut nodes = vec![[z, z], [o, z], [z, o]];
    if kind.local_nodes() == 6 {
        nodes.extend([[h, z], [h, h], [z, h]]);
    }
    nodes
}

/// Quadrature rule on the reference triangle; weights sum to its area `1/2`.
#[derive(Debug, Clone)]
pub struct QuadratureRule<T> {
    pub degree: usize,
    pub points: Vec<[T; 2]>,
    pub weights: Vec<T>,
}

pub const DEFAULT_QUADRATURE_DEGREE: usize = 5;

/// Symmetric Gauss rules (Strang–Fix / Dunavant) of degree 4, 5 and 6.
pub fn quadrature<T: Real>(degree: usize) -> Result<QuadratureRule<T>, FeError> {
    // (barycentric orbit generator, weight normalised to unit area)
    let mut pts: Vec<[f64; 3]> = Vec::new();
    let mut wts: Vec<f64> = Vec::new();
    let mut orbit3 = |a: f64, b: f64, w: f64| {
        for p in [[a, b, b], [b, a, b], [b, b, a]] {
            pts.push(p);
            wts.push(w);
        }
    };
    match degree {
        4 => {
            orbit3(0.108_103_018_168_070, 0.445_948_490_915_965, 0.223_381_589_678_011);
            orbit3(0.816_847_572_980_459, 0.091_576_213_509_771, 0.109_951_743_655_322);
        }
        5 => {
            let s15 = 15f64.sqrt();
            orbit3((9.0 - 2.0 * s15) / 21.0, (6.0 + s15) / 21.0, (155.0 + s15) / 1200.0);
            orbit3((9.0 + 2.0 * s15) / 21.0, (6.0 - s15) / 21.0, (155.0 - s15) / 1200.0);
            pts.push([1.0 / 3.0; 3]);
            wts.push(9.0 / 40.0);
        }
        6 => {
            orbit3(0.501_426_509_658_179, 0.249_286_745_170_910, 0.116_786_275_726_379);
            orbit3(0.873_821_971_016_996, 0.063_089_014_491_502, 0.050_844_906_370_207);
            let (a, b, c) = (0.053_145_049_844_817, 0.310_352_451_033_784, 0.636_502_499_121_399);
            for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
                pts.push(p);
                wts.push(0.082_851_075_618_374);
            }
        }
        d => return Err(FeError::UnsupportedDegree(d)),
    }
    // the tabulated degree-4/6 weights carry 15 digits; renormalise their sum exactly
    let total: f64 = wts.iter().sum();
    Ok(QuadratureRule {
        degree,
        points: pts.iter().map(|p| [T::lit(p[1]), T::lit(p[2])]).collect(),
        weights: wts.iter().map(|w| T::lit(0.5 * w / total)).collect(),
    })
}

impl<T: Real> QuadratureRule<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn([T; 2]) -> T) -> T {
        self.points.iter().zip(&self.weights).map(|(p, w)| *w * f(*p)).sum()
    }
}

/// Global numbering of the degrees of freedom of one finite element space.
#[derive(Debug, Clone)]
pub struct DofMap<T> {
    pub kind: ElementKind,
    pub n_dofs: usize,
    /// Number of scalar nodes; equals `n_dofs / components`.
    pub n_nodes: usize,
    /// Per triangle, `kind.local_dofs()` global indices; vector kinds list
    /// all first-component dofs before second-component dofs.
    pub cell_dofs: Vec<Vec<usize>>,
    pub boundary_dofs: Vec<usize>,
    pub dof_coords: Vec<[T; 2]>,
    pub n_triangles: usize,
}

pub fn build_dofmap<T: Real>(mesh: &Mesh<T>, kind: ElementKind) -> DofMap<T> {
    let nv = mesh.n_vertices();
    let (n_nodes, mut node_coords, node_boundary): (usize, Vec<[T; 2]>, Vec<bool>) = match kind {
        ElementKind::P1Scalar => (nv, mesh.vertices.clone(), mesh.boundary_vertex_flags.clone()),
        _ => {
            let mut coords = mesh.vertices.clone();
            coords.extend((0..mesh.n_edges()).map(|e| mesh.edge_midpoint(e)));
            let mut flags = mesh.boundary_vertex_flags.clone();
            flags.extend_from_slice(&mesh.boundary_edge_flags);
            (nv + mesh.n_edges(), coords, flags)
        }
    };

    let ncomp = kind.components();
    let cell_dofs = mesh
        .triangles
        .iter()
        .zip(&mesh.triangle_edges)
        .map(|(tri, te)| {
            let nodes: Vec<usize> = match kind {
                ElementKind::P1Scalar => tri.to_vec(),
                _ => tri.iter().copied().chain(te.iter().map(|e| nv + e)).collect(),
            };
            (0..ncomp)
                .flat_map(|c| nodes.iter().map(move |n| c * n_nodes + n))
                .collect()
        })
        .collect();

    let boundary_dofs = (0..ncomp)
        .flat_map(|c| {
            node_boundary
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(move |(n, _)| c * n_nodes + n)
        })
        .collect();

    if ncomp == 2 {
        let copy = node_coords.clone();
        node_coords.extend(copy);
    }

    DofMap {
        kind,
        n_dofs: n_nodes * ncomp,
        n_nodes,
        cell_dofs,
        boundary_dofs,
        dof_coords: node_coords,
        n_triangles: mesh.n_triangles(),
    }
}

impl<T: Real> DofMap<T> {
    pub fn is_boundary_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_dofs];
        for &d in &self.boundary_dofs {
            mask[d] = true;
        }
        mask
    }

    pub fn matches(&self, mesh: &Mesh<T>) -> bool {
        self.n_triangles == mesh.n_triangles()
            && self.n_nodes
                == match self.kind {
                    ElementKind::P1Scalar => mesh.n_vertices(),
                    _ => mesh.n_vertices() + mesh.n_edges(),
                }
    }
}

/// Basis values and reference gradients tabulated at the points of a rule.
#[derive(Debug, Clone)]
pub(crate) struct Tabulation<T> {
    pub values: Vec<Vec<T>>,
    pub grads: Vec<Vec<[T; 2]>>,
}

impl<T: Real> Tabulation<T> {
    pub fn new(kind: ElementKind, quad: &QuadratureRule<T>) -> Self {
        let n = kind.local_nodes();
        let mut values = Vec::with_capacity(quad.len());
        let mut grads = Vec::with_capacity(quad.len());
        for p in &quad.points {
            let mut v = vec![T::zero(); n];
            let mut g = vec![[T::zero(); 2]; n];
            basis_unchecked(kind.scalar(), *p, &mut v, &mut g);
            values.push(v);
            grads.push(g);
        }
        Tabulation { values, grads }
    }
}
