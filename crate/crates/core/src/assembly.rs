//! Bilinear forms and load vectors of the fully discrete scheme.
//!
//! Scalar unknowns (phase, chemical potential, pressure) live in P1; the
//! velocity lives in the component-major P2 vector space.

use std::sync::Arc;

use thiserror::Error;

use crate::fe::{build_dofmap, DofMap, ElementKind, QuadratureRule, Tabulation};
use crate::linalg::{to_sparse, SparseMatrix, TripletBuffer};
use crate::mesh::{Mesh, MeshError, TriangleGeometry};
use crate::real::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("dof map does not belong to this mesh")]
    MeshMismatch,
    #[error("expected a {expected:?} field, got {got:?}")]
    WrongSpace { expected: ElementKind, got: ElementKind },
    #[error("field has {got} coefficients but its dof map has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Coefficient vector of a finite element function.
#[derive(Debug, Clone)]
pub struct Field<T> {
    pub dofmap: Arc<DofMap<T>>,
    pub values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn new(dofmap: Arc<DofMap<T>>, values: Vec<T>) -> Result<Self, AssemblyError> {
        if values.len() != dofmap.n_dofs {
            return Err(AssemblyError::LengthMismatch {
                expected: dofmap.n_dofs,
                got: values.len(),
            });
        }
        Ok(Field { dofmap, values })
    }

    pub fn zeros(dofmap: Arc<DofMap<T>>) -> Self {
        let n = dofmap.n_dofs;
        Field {
            dofmap,
            values: vec![T::zero(); n],
        }
    }

    pub fn constant(dofmap: Arc<DofMap<T>>, c: T) -> Self {
        let n = dofmap.n_dofs;
        Field {
            dofmap,
            values: vec![c; n],
        }
    }

    pub fn kind(&self) -> ElementKind {
        self.dofmap.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same space, new coefficients.
    pub fn with_values(&self, values: Vec<T>) -> Result<Self, AssemblyError> {
        Field::new(self.dofmap.clone(), values)
    }
}

/// The two spaces used by the scheme on one mesh.
#[derive(Debug, Clone)]
pub struct Spaces<T> {
    pub scalar: Arc<DofMap<T>>,
    pub vector: Arc<DofMap<T>>,
}

impl<T: Real> Spaces<T> {
    pub fn new(mesh: &Mesh<T>) -> Self {
        Spaces {
            scalar: Arc::new(build_dofmap(mesh, ElementKind::P1Scalar)),
            vector: Arc::new(build_dofmap(mesh, ElementKind::P2Vector2)),
        }
    }

    fn check(&self, mesh: &Mesh<T>) -> Result<(), AssemblyError> {
        if self.scalar.kind != ElementKind::P1Scalar {
            return Err(AssemblyError::WrongSpace {
                expected: ElementKind::P1Scalar,
                got: self.scalar.kind,
            });
        }
        if self.vector.kind != ElementKind::P2Vector2 {
            return Err(AssemblyError::WrongSpace {
                expected: ElementKind::P2Vector2,
                got: self.vector.kind,
            });
        }
        if !self.scalar.matches(mesh) || !self.vector.matches(mesh) {
            return Err(AssemblyError::MeshMismatch);
        }
        Ok(())
    }
}

/// Bilinear forms. Each fixes its trial and test spaces.
#[derive(Debug, Clone, Copy)]
pub enum OperatorKind<'a, T> {
    /// `(χ_j, χ_i)` on P1.
    MassScalar,
    /// `(∇χ_j, ∇χ_i)` on P1.
    StiffnessScalar,
    /// `(v_j, v_i)` on P2 vector.
    MassVector,
    /// `(∇v_j, ∇v_i)` on P2 vector.
    StiffnessVector,
    /// `(w·∇χ_j, χ_i)` on P1 with a P2 vector coefficient `w`.
    ConvectionPhi(&'a Field<T>),
    /// `(∇χ_j, v_i)`: trial P1, test P2 vector.
    PressureGrad,
    /// `B(w, v_j, v_i)` on P2 vector; antisymmetric.
    SkewConvection(&'a Field<T>),
    /// The coupled phase / chemical-potential operator
    /// `[[M/τ + C(w), mobility·K], [-λK, M]]` over `(φ, μ)`.
    ChCoupling {
        velocity: &'a Field<T>,
        tau: T,
        mobility: T,
        lambda: T,
    },
}

/// Load functionals tested against the basis of the matching space.
pub enum LoadKind<'a, T> {
    /// `(f, χ_i)` on P1.
    ScalarSource(&'a dyn Fn([T; 2]) -> T),
    /// `(f, v_i)` on P2 vector.
    VectorSource(&'a dyn Fn([T; 2]) -> [T; 2]),
    /// `(F'(φ), χ_i)` with `F'(φ) = (φ³ - φ)/ε²`, evaluated at quadrature points.
    NonlinearFprime { phi: &'a Field<T>, epsilon: T },
    /// `(μ∇φ, v_i)`.
    Capillary { phi: &'a Field<T>, mu: &'a Field<T> },
    /// `B(u, u, v_i) = ½[((u·∇)u, v_i) - ((u·∇)v_i, u)]`.
    SkewConvection(&'a Field<T>),
}

fn require<T: Real>(field: &Field<T>, kind: ElementKind) -> Result<(), AssemblyError> {
    if field.kind() != kind {
        return Err(AssemblyError::WrongSpace {
            expected: kind,
            got: field.kind(),
        });
    }
    if field.values.len() != field.dofmap.n_dofs {
        return Err(AssemblyError::LengthMismatch {
            expected: field.dofmap.n_dofs,
            got: field.values.len(),
        });
    }
    Ok(())
}

fn require_on<T: Real>(field: &Field<T>, kind: ElementKind, mesh: &Mesh<T>) -> Result<(), AssemblyError> {
    require(field, kind)?;
    if !field.dofmap.matches(mesh) {
        return Err(AssemblyError::MeshMismatch);
    }
    Ok(())
}

/// Per-triangle quadrature data: physical weights and basis gradients.
pub(crate) struct ElementData<T> {
    pub geom: TriangleGeometry<T>,
    /// `w_q |det J|`
    pub jw: Vec<T>,
    pub p1_grad: Vec<[[T; 2]; 3]>,
    pub p2_grad: Vec<[[T; 2]; 6]>,
}

/// Tabulated P1 and P2 bases for one quadrature rule.
pub(crate) struct Integrator<'q, T> {
    pub quad: &'q QuadratureRule<T>,
    pub p1: Tabulation<T>,
    pub p2: Tabulation<T>,
}

impl<'q, T: Real> Integrator<'q, T> {
    pub fn new(quad: &'q QuadratureRule<T>) -> Self {
        Integrator {
            quad,
            p1: Tabulation::new(ElementKind::P1Scalar, quad),
            p2: Tabulation::new(ElementKind::P2Scalar, quad),
        }
    }

    pub fn element(&self, mesh: &Mesh<T>, t: usize) -> ElementData<T> {
        let geom = mesh.geometry(t);
        let det = geom.det().abs();
        let nq = self.quad.len();
        let mut jw = Vec::with_capacity(nq);
        let mut p1_grad = Vec::with_capacity(nq);
        let mut p2_grad = Vec::with_capacity(nq);
        for q in 0..nq {
            jw.push(self.quad.weights[q] * det);
            let mut g1 = [[T::zero(); 2]; 3];
            for (a, g) in g1.iter_mut().enumerate() {
                *g = geom.map_gradient(self.p1.grads[q][a]);
            }
            let mut g2 = [[T::zero(); 2]; 6];
            for (a, g) in g2.iter_mut().enumerate() {
                *g = geom.map_gradient(self.p2.grads[q][a]);
            }
            p1_grad.push(g1);
            p2_grad.push(g2);
        }
        ElementData {
            geom,
            jw,
            p1_grad,
            p2_grad,
        }
    }

    /// Value and gradient of a P1 field at quadrature point `q`.
    pub fn p1_at(&self, e: &ElementData<T>, local: &[T], q: usize) -> (T, [T; 2]) {
        let mut v = T::zero();
        let mut g = [T::zero(); 2];
        for a in 0..3 {
            v += local[a] * self.p1.values[q][a];
            g[0] += local[a] * e.p1_grad[q][a][0];
            g[1] += local[a] * e.p1_grad[q][a][1];
        }
        (v, g)
    }

    /// Value and gradient (`grad[c] = ∇u_c`) of a P2 vector field at point `q`.
    pub fn p2v_at(&self, e: &ElementData<T>, local: &[T], q: usize) -> ([T; 2], [[T; 2]; 2]) {
        let mut v = [T::zero(); 2];
        let mut g = [[T::zero(); 2]; 2];
        for c in 0..2 {
            for a in 0..6 {
                let coef = local[c * 6 + a];
                v[c] += coef * self.p2.values[q][a];
                g[c][0] += coef * e.p2_grad[q][a][0];
                g[c][1] += coef * e.p2_grad[q][a][1];
            }
        }
        (v, g)
    }
}

fn gather<T: Real>(field: &Field<T>, t: usize) -> Vec<T> {
    field.dofmap.cell_dofs[t].iter().map(|&d| field.values[d]).collect()
}

pub fn assemble_operator<T: Real>(
    mesh: &Mesh<T>,
    kind: &OperatorKind<T>,
    spaces: &Spaces<T>,
    quad: &QuadratureRule<T>,
) -> Result<SparseMatrix<T>, AssemblyError> {
    spaces.check(mesh)?;
    let ig = Integrator::new(quad);
    let (ns, nv) = (spaces.scalar.n_dofs, spaces.vector.n_dofs);
    let nq = quad.len();
    let p1 = &spaces.scalar.cell_dofs;
    let p2 = &spaces.vector.cell_dofs;

    match *kind {
        OperatorKind::MassScalar | OperatorKind::StiffnessScalar => {
            let stiff = matches!(kind, OperatorKind::StiffnessScalar);
            let mut buf = TripletBuffer::with_capacity(9 * mesh.n_triangles());
            for t in 0..mesh.n_triangles() {
                let e = ig.element(mesh, t);
                for i in 0..3 {
                    for j in 0..3 {
                        let mut s = T::zero();
                        for q in 0..nq {
                            s += e.jw[q]
                                * if stiff {
                                    dot2(e.p1_grad[q][i], e.p1_grad[q][j])
                                } else {
                                    ig.p1.values[q][i] * ig.p1.values[q][j]
                                };
                        }
                        buf.push(p1[t][i], p1[t][j], s);
                    }
                }
            }
            Ok(to_sparse(&buf, ns, ns).expect("dofs in range"))
        }
        OperatorKind::MassVector | OperatorKind::StiffnessVector => {
            let stiff = matches!(kind, OperatorKind::StiffnessVector);
            let mut buf = TripletBuffer::with_capacity(72 * mesh.n_triangles());
            for t in 0..mesh.n_triangles() {
                let e = ig.element(mesh, t);
                let mut local = [[T::zero(); 6]; 6];
                for (i, row) in local.iter_mut().enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        for q in 0..nq {
                            *v += e.jw[q]
                                * if stiff {
                                    dot2(e.p2_grad[q][i], e.p2_grad[q][j])
                                } else {
                                    ig.p2.values[q][i] * ig.p2.values[q][j]
                                };
                        }
                    }
                }
                for c in 0..2 {
                    for i in 0..6 {
                        for j in 0..6 {
                            buf.push(p2[t][c * 6 + i], p2[t][c * 6 + j], local[i][j]);
                        }
                    }
                }
            }
            Ok(to_sparse(&buf, nv, nv).expect("dofs in range"))
        }
        OperatorKind::ConvectionPhi(w) => {
            require_on(w, ElementKind::P2Vector2, mesh)?;
            let mut buf = TripletBuffer::with_capacity(9 * mesh.n_triangles());
            convection_triplets(mesh, &ig, w, p1, &mut buf, T::one(), 0);
            Ok(to_sparse(&buf, ns, ns).expect("dofs in range"))
        }
        OperatorKind::PressureGrad => {
            let mut buf = TripletBuffer::with_capacity(36 * mesh.n_triangles());
            for t in 0..mesh.n_triangles() {
                let e = ig.element(mesh, t);
                for c in 0..2 {
                    for i in 0..6 {
                        for j in 0..3 {
                            let mut s = T::zero();
                            for q in 0..nq {
                                s += e.jw[q] * e.p1_grad[q][j][c] * ig.p2.values[q][i];
                            }
                            buf.push(p2[t][c * 6 + i], p1[t][j], s);
                        }
                    }
                }
            }
            Ok(to_sparse(&buf, nv, ns).expect("dofs in range"))
        }
        OperatorKind::SkewConvection(w) => {
            require_on(w, ElementKind::P2Vector2, mesh)?;
            let mut buf = TripletBuffer::with_capacity(72 * mesh.n_triangles());
            let half = T::lit(0.5);
            for t in 0..mesh.n_triangles() {
                let e = ig.element(mesh, t);
                let wl = gather(w, t);
                // local[i][j] = ½[(w·∇φ_j) φ_i - (w·∇φ_i) φ_j], shared by both components
                let mut local = [[T::zero(); 6]; 6];
                for q in 0..nq {
                    let (wq, _) = ig.p2v_at(&e, &wl, q);
                    let mut adv = [T::zero(); 6];
                    for (a, d) in adv.iter_mut().enumerate() {
                        *d = dot2(wq, e.p2_grad[q][a]);
                    }
                    for i in 0..6 {
                        for j in 0..6 {
                            local[i][j] += e.jw[q] * half * (adv[j] * ig.p2.values[q][i] - adv[i] * ig.p2.values[q][j]);
                        }
                    }
                }
                for c in 0..2 {
                    for i in 0..6 {
                        for j in 0..6 {
                            buf.push(p2[t][c * 6 + i], p2[t][c * 6 + j], local[i][j]);
                        }
                    }
                }
            }
            Ok(to_sparse(&buf, nv, nv).expect("dofs in range"))
        }
        OperatorKind::ChCoupling {
            velocity,
            tau,
            mobility,
            lambda,
        } => {
            require_on(velocity, ElementKind::P2Vector2, mesh)?;
            let mut buf = TripletBuffer::with_capacity(45 * mesh.n_triangles());
            convection_triplets(mesh, &ig, velocity, p1, &mut buf, T::one(), 0);
            let inv_tau = T::one() / tau;
            for t in 0..mesh.n_triangles() {
                let e = ig.element(mesh, t);
                for i in 0..3 {
                    for j in 0..3 {
                        let (mut m, mut k) = (T::zero(), T::zero());
                        for q in 0..nq {
                            m += e.jw[q] * ig.p1.values[q][i] * ig.p1.values[q][j];
                            k += e.jw[q] * dot2(e.p1_grad[q][i], e.p1_grad[q][j]);
                        }
                        let (r, c) = (p1[t][i], p1[t][j]);
                        buf.push(r, c, m * inv_tau);
                        buf.push(r, ns + c, mobility * k);
                        buf.push(ns + r, c, -lambda * k);
                        buf.push(ns + r, ns + c, m);
                    }
                }
            }
            Ok(to_sparse(&buf, 2 * ns, 2 * ns).expect("dofs in range"))
        }
    }
}

fn convection_triplets<T: Real>(
    mesh: &Mesh<T>,
    ig: &Integrator<T>,
    w: &Field<T>,
    p1: &[Vec<usize>],
    buf: &mut TripletBuffer<T>,
    scale: T,
    offset: usize,
) {
    for t in 0..mesh.n_triangles() {
        let e = ig.element(mesh, t);
        let wl = gather(w, t);
        let mut local = [[T::zero(); 3]; 3];
        for q in 0..ig.quad.len() {
            let (wq, _) = ig.p2v_at(&e, &wl, q);
            for (i, row) in local.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v += e.jw[q] * dot2(wq, e.p1_grad[q][j]) * ig.p1.values[q][i];
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                buf.push(offset + p1[t][i], offset + p1[t][j], scale * local[i][j]);
            }
        }
    }
}

pub fn assemble_load<T: Real>(
    mesh: &Mesh<T>,
    kind: &LoadKind<T>,
    spaces: &Spaces<T>,
    quad: &QuadratureRule<T>,
) -> Result<Vec<T>, AssemblyError> {
    spaces.check(mesh)?;
    let ig = Integrator::new(quad);
    let nq = quad.len();
    let p1 = &spaces.scalar.cell_dofs;
    let p2 = &spaces.vector.cell_dofs;

    match kind {
        LoadKind::ScalarSource(f) => {
            let mut b = vec![T::zero(); spaces.scalar.n_dofs];
            for t in 0..mesh.n_triangles() {
                let e = ig.element(mesh, t);
                for q in 0..nq {
                    let fq = f(e.geom.map_point(quad.points[q])) * e.jw[q];
                    for i in 0..3 {
                        b[p1[t][i]] += fq * ig.p1.values[q][i];
                    }
                }
            }
            Ok(b)
        }
        LoadKind::VectorSource(f) => {
            let mut b = vec![T::zero(); spaces.vector.n_dofs];
            for t in 0..mesh.n_triangles() {
                let e = ig.element(mesh, t);
                for q in 0..nq {
                    let fq = f(e.geom.map_point(quad.points[q]));
                    for c in 0..2 {
                        for i in 0..6 {
                            b[p2[t][c * 6 + i]] += e.jw[q] * fq[c] * ig.p2.values[q][i];
                        }
                    }
                }
            }
            Ok(b)
        }
        LoadKind::NonlinearFprime { phi, epsilon } => {
            require_on(phi, ElementKind::P1Scalar, mesh)?;
            let inv_eps2 = T::one() / (*epsilon * *epsilon);
            let mut b = vec![T::zero(); spaces.scalar.n_dofs];
            for t in 0..mesh.n_triangles() {
                let e = ig.element(mesh, t);
                let pl = gather(phi, t);
                for q in 0..nq {
                    let (v, _) = ig.p1_at(&e, &pl, q);
                    let fp = (v * v * v - v) * inv_eps2 * e.jw[q];
                    for i in 0..3 {
                        b[p1[t][i]] += fp * ig.p1.values[q][i];
                    }
                }
            }
            Ok(b)
        }
        LoadKind::Capillary { phi, mu } => {
            require_on(phi, ElementKind::P1Scalar, mesh)?;
            require_on(mu, ElementKind::P1Scalar, mesh)?;
            let mut b = vec![T::zero(); spaces.vector.n_dofs];
            for t in 0..mesh.n_triangles() {
                let e = ig.element(mesh, t);
                let (pl, ml) = (gather(phi, t), gather(mu, t));
                for q in 0..nq {
                    let (_, gphi) = ig.p1_at(&e, &pl, q);
                    let (m, _) = ig.p1_at(&e, &ml, q);
                    for c in 0..2 {
                        let s = e.jw[q] * m * gphi[c];
                        for i in 0..6 {
                            b[p2[t][c * 6 + i]] += s * ig.p2.values[q][i];
                        }
                    }
                }
            }
            Ok(b)
        }
        LoadKind::SkewConvection(u) => {
            require_on(u, ElementKind::P2Vector2, mesh)?;
            let half = T::lit(0.5);
            let mut b = vec![T::zero(); spaces.vector.n_dofs];
            for t in 0..mesh.n_triangles() {
                let e = ig.element(mesh, t);
                let ul = gather(u, t);
                for q in 0..nq {
                    let (uq, gu) = ig.p2v_at(&e, &ul, q);
                    // (u·∇)u
                    let conv = [dot2(uq, gu[0]), dot2(uq, gu[1])];
                    for i in 0..6 {
                        let adv_i = dot2(uq, e.p2_grad[q][i]);
                        let vi = ig.p2.values[q][i];
                        for c in 0..2 {
                            b[p2[t][c * 6 + i]] += e.jw[q] * half * (conv[c] * vi - adv_i * uq[c]);
                        }
                    }
                }
            }
            Ok(b)
        }
    }
}

/// The trilinear form `B(u, v, w) = ½[((u·∇)v, w) - ((u·∇)w, v)]` evaluated
/// directly by quadrature.
pub fn skew_trilinear<T: Real>(
    mesh: &Mesh<T>,
    u: &Field<T>,
    v: &Field<T>,
    w: &Field<T>,
    quad: &QuadratureRule<T>,
) -> Result<T, AssemblyError> {
    for f in [u, v, w] {
        require_on(f, ElementKind::P2Vector2, mesh)?;
    }
    let ig = Integrator::new(quad);
    let half = T::lit(0.5);
    let mut total = T::zero();
    for t in 0..mesh.n_triangles() {
        let e = ig.element(mesh, t);
        let (ul, vl, wl) = (gather(u, t), gather(v, t), gather(w, t));
        for q in 0..quad.len() {
            let (uq, _) = ig.p2v_at(&e, &ul, q);
            let (vq, gv) = ig.p2v_at(&e, &vl, q);
            let (wq, gw) = ig.p2v_at(&e, &wl, q);
            let mut s = T::zero();
            for c in 0..2 {
                s += dot2(uq, gv[c]) * wq[c] - dot2(uq, gw[c]) * vq[c];
            }
            total += e.jw[q] * half * s;
        }
    }
    Ok(total)
}

/// Nodal interpolant of a scalar function.
pub fn interpolate<T: Real>(dofmap: &Arc<DofMap<T>>, f: impl Fn([T; 2]) -> T) -> Field<T> {
    let values = dofmap.dof_coords.iter().map(|&p| f(p)).collect();
    Field {
        dofmap: dofmap.clone(),
        values,
    }
}

/// Nodal interpolant of a vector function on a two-component space.
pub fn interpolate_vector<T: Real>(dofmap: &Arc<DofMap<T>>, f: impl Fn([T; 2]) -> [T; 2]) -> Field<T> {
    let n = dofmap.n_nodes;
    let mut values = vec![T::zero(); dofmap.n_dofs];
    for node in 0..n {
        let v = f(dofmap.dof_coords[node]);
        values[node] = v[0];
        if dofmap.kind.components() == 2 {
            values[n + node] = v[1];
        }
    }
    Field {
        dofmap: dofmap.clone(),
        values,
    }
}

/// Value of a field at a reference point of a triangle: one entry per
/// component, each with its physical gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct PointValue<T> {
    pub value: Vec<T>,
    pub grad: Vec<[T; 2]>,
}

pub fn eval_field<T: Real>(
    mesh: &Mesh<T>,
    field: &Field<T>,
    triangle: usize,
    xi: [T; 2],
) -> Result<PointValue<T>, AssemblyError> {
    require_on(field, field.kind(), mesh)?;
    let geom = mesh.triangle_geometry(triangle)?;
    let kind = field.kind();
    let n = kind.local_nodes();
    let mut bv = vec![T::zero(); n];
    let mut bg = vec![[T::zero(); 2]; n];
    crate::fe::basis_unchecked(kind.scalar(), xi, &mut bv, &mut bg);
    let local = gather(field, triangle);
    let mut value = Vec::with_capacity(kind.components());
    let mut grad = Vec::with_capacity(kind.components());
    for c in 0..kind.components() {
        let mut v = T::zero();
        let mut g = [T::zero(); 2];
        for a in 0..n {
            let coef = local[c * n + a];
            v += coef * bv[a];
            let pg = geom.map_gradient(bg[a]);
            g[0] += coef * pg[0];
            g[1] += coef * pg[1];
        }
        value.push(v);
        grad.push(g);
    }
    Ok(PointValue { value, grad })
}

/// Quadrature of `f(x, values, grads)` over the mesh for a single field.
pub fn integrate_field<T: Real>(
    mesh: &Mesh<T>,
    field: &Field<T>,
    quad: &QuadratureRule<T>,
    f: impl Fn([T; 2], &[T], &[[T; 2]]) -> T,
) -> Result<T, AssemblyError> {
    require_on(field, field.kind(), mesh)?;
    let ig = Integrator::new(quad);
    let mut total = T::zero();
    let scalar = field.kind() == ElementKind::P1Scalar;
    if !scalar && field.kind() != ElementKind::P2Vector2 {
        return Err(AssemblyError::WrongSpace {
            expected: ElementKind::P2Vector2,
            got: field.kind(),
        });
    }
    for t in 0..mesh.n_triangles() {
        let e = ig.element(mesh, t);
        let local = gather(field, t);
        for q in 0..quad.len() {
            let x = e.geom.map_point(quad.points[q]);
            let s = if scalar {
                let (v, g) = ig.p1_at(&e, &local, q);
                f(x, &[v], &[g])
            } else {
                let (v, g) = ig.p2v_at(&e, &local, q);
                f(x, &v, &g)
            };
            total += e.jw[q] * s;
        }
    }
    Ok(total)
}

#[inline]
pub(crate) fn dot2<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    a[0] * b[0] + a[1] * b[1]
}
