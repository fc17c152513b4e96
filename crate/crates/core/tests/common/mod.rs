//! Dense oracles for the assembled operators and the four scheme steps, built
//! from barycentric basis formulas, a collapsed Gauss rule and direct solves.

#![allow(dead_code)]

use chns_core::assembly::{assemble_load, assemble_operator, Field, LoadKind, OperatorKind, Spaces};
use chns_core::fe::{quadrature, DEFAULT_QUADRATURE_DEGREE};
use chns_core::mesh::build_rect_mesh;
use chns_core::{Mesh, Rect, Scheme, SchemeParams, SparseMatrix, State};
use nalgebra::{DMatrix, DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const OP_TOL: f64 = 1e-13;
pub const STEP_TOL: f64 = 1e-9;

/// Measured deviations with their bounds.
#[derive(Debug, Default)]
pub struct Checks {
    pub items: Vec<(String, f64, f64)>,
}

impl Checks {
    pub fn check(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        self.items.push((name.into(), value, bound));
    }

    pub fn failures(&self) -> Vec<String> {
        self.items
            .iter()
            .filter(|(_, v, b)| !(v <= b))
            .map(|(n, v, b)| format!("{n}: {v:e} > {b:e}"))
            .collect()
    }

    /// Largest `value / bound`.
    pub fn worst(&self) -> f64 {
        self.items.iter().map(|(_, v, b)| v / b).fold(0.0, f64::max)
    }

    pub fn assert_ok(&self) {
        let f = self.failures();
        assert!(f.is_empty(), "{}", f.join("\n"));
    }
}

/// Gauss-Legendre points and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            (0.5 * (x + 1.0), 0.5 * w)
        })
        .collect()
}

#[derive(Clone, Copy)]
enum Local {
    Vertex(usize),
    Edge(usize, usize),
}

pub struct ScalarBasis {
    pub dof: usize,
    pub val: f64,
    pub grad: [f64; 2],
}

pub struct VectorBasis {
    pub dof: usize,
    pub comp: usize,
    pub val: f64,
    pub grad: [f64; 2],
}

pub struct Qp {
    pub x: [f64; 2],
    pub w: f64,
    pub s: Vec<ScalarBasis>,
    pub v: Vec<VectorBasis>,
}

pub struct Oracle {
    pub ns: usize,
    pub nv: usize,
    pub points: Vec<Qp>,
}

fn same(a: [f64; 2], b: [f64; 2]) -> bool {
    (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12
}

impl Oracle {
    pub fn new(mesh: &Mesh, sp: &Spaces<f64>) -> Self {
        let gl = gauss_legendre(8);
        let mut points = Vec::new();
        let sn = sp.scalar.n_nodes;
        let vn = sp.vector.n_nodes;
        for t in 0..mesh.n_triangles() {
            let p = mesh.triangle_points(t);
            let j = Matrix2::new(
                p[1][0] - p[0][0],
                p[2][0] - p[0][0],
                p[1][1] - p[0][1],
                p[2][1] - p[0][1],
            );
            let det = j.determinant().abs();
            let jinv = j.try_inverse().unwrap();
            let g1 = [jinv[(0, 0)], jinv[(0, 1)]];
            let g2 = [jinv[(1, 0)], jinv[(1, 1)]];
            let dl = [[-g1[0] - g2[0], -g1[1] - g2[1]], g1, g2];
            let mid = |a: usize, b: usize| [0.5 * (p[a][0] + p[b][0]), 0.5 * (p[a][1] + p[b][1])];
            let locate = |x: [f64; 2], quadratic: bool| -> Option<Local> {
                if let Some(i) = (0..3).find(|&i| same(x, p[i])) {
                    return Some(Local::Vertex(i));
                }
                if quadratic {
                    for (a, b) in [(0, 1), (1, 2), (0, 2)] {
                        if same(x, mid(a, b)) {
                            return Some(Local::Edge(a, b));
                        }
                    }
                }
                None
            };
            let s_local: Vec<(usize, Local)> = (0..sn)
                .filter_map(|d| locate(sp.scalar.dof_coords[d], false).map(|l| (d, l)))
                .collect();
            let v_local: Vec<(usize, Local)> = (0..sp.vector.n_dofs)
                .filter_map(|d| locate(sp.vector.dof_coords[d], true).map(|l| (d, l)))
                .collect();
            assert_eq!(s_local.len(), 3);
            assert_eq!(v_local.len(), 12);
            for &(xa, wa) in &gl {
                for &(xb, wb) in &gl {
                    let (r, s) = (xa, xb * (1.0 - xa));
                    let lam = [1.0 - r - s, r, s];
                    let x = [
                        p[0][0] + r * (p[1][0] - p[0][0]) + s * (p[2][0] - p[0][0]),
                        p[0][1] + r * (p[1][1] - p[0][1]) + s * (p[2][1] - p[0][1]),
                    ];
                    let sb = s_local
                        .iter()
                        .map(|&(dof, l)| {
                            let Local::Vertex(i) = l else { unreachable!() };
                            ScalarBasis {
                                dof,
                                val: lam[i],
                                grad: dl[i],
                            }
                        })
                        .collect();
                    let vb = v_local
                        .iter()
                        .map(|&(dof, l)| {
                            let (val, grad) = match l {
                                Local::Vertex(i) => {
                                    let f = 4.0 * lam[i] - 1.0;
                                    (lam[i] * (2.0 * lam[i] - 1.0), [f * dl[i][0], f * dl[i][1]])
                                }
                                Local::Edge(a, b) => (
                                    4.0 * lam[a] * lam[b],
                                    [
                                        4.0 * (lam[a] * dl[b][0] + lam[b] * dl[a][0]),
                                        4.0 * (lam[a] * dl[b][1] + lam[b] * dl[a][1]),
                                    ],
                                ),
                            };
                            VectorBasis {
                                dof,
                                comp: dof / vn,
                                val,
                                grad,
                            }
                        })
                        .collect();
                    points.push(Qp {
                        x,
                        w: wa * wb * (1.0 - xa) * det,
                        s: sb,
                        v: vb,
                    });
                }
            }
        }
        Oracle {
            ns: sp.scalar.n_dofs,
            nv: sp.vector.n_dofs,
            points,
        }
    }

    pub fn scalar_at(q: &Qp, c: &[f64]) -> (f64, [f64; 2]) {
        let mut v = 0.0;
        let mut g = [0.0; 2];
        for b in &q.s {
            v += c[b.dof] * b.val;
            g[0] += c[b.dof] * b.grad[0];
            g[1] += c[b.dof] * b.grad[1];
        }
        (v, g)
    }

    pub fn vector_at(q: &Qp, c: &[f64]) -> ([f64; 2], [[f64; 2]; 2]) {
        let mut v = [0.0; 2];
        let mut g = [[0.0; 2]; 2];
        for b in &q.v {
            v[b.comp] += c[b.dof] * b.val;
            g[b.comp][0] += c[b.dof] * b.grad[0];
            g[b.comp][1] += c[b.dof] * b.grad[1];
        }
        (v, g)
    }

    pub fn integrate(&self, f: impl Fn(&Qp) -> f64) -> f64 {
        self.points.iter().map(|q| q.w * f(q)).sum()
    }

    pub fn mass_s(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.ns, self.ns);
        for q in &self.points {
            for a in &q.s {
                for b in &q.s {
                    m[(a.dof, b.dof)] += q.w * a.val * b.val;
                }
            }
        }
        m
    }

    pub fn stiff_s(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.ns, self.ns);
        for q in &self.points {
            for a in &q.s {
                for b in &q.s {
                    m[(a.dof, b.dof)] += q.w * (a.grad[0] * b.grad[0] + a.grad[1] * b.grad[1]);
                }
            }
        }
        m
    }

    pub fn mass_v(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nv, self.nv);
        for q in &self.points {
            for a in &q.v {
                for b in q.v.iter().filter(|b| b.comp == a.comp) {
                    m[(a.dof, b.dof)] += q.w * a.val * b.val;
                }
            }
        }
        m
    }

    pub fn stiff_v(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nv, self.nv);
        for q in &self.points {
            for a in &q.v {
                for b in q.v.iter().filter(|b| b.comp == a.comp) {
                    m[(a.dof, b.dof)] += q.w * (a.grad[0] * b.grad[0] + a.grad[1] * b.grad[1]);
                }
            }
        }
        m
    }

    pub fn convection(&self, w: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.ns, self.ns);
        for q in &self.points {
            let (wq, _) = Self::vector_at(q, w);
            for a in &q.s {
                for b in &q.s {
                    m[(a.dof, b.dof)] += q.w * (wq[0] * b.grad[0] + wq[1] * b.grad[1]) * a.val;
                }
            }
        }
        m
    }

    pub fn pressure_grad(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nv, self.ns);
        for q in &self.points {
            for a in &q.v {
                for b in &q.s {
                    m[(a.dof, b.dof)] += q.w * b.grad[a.comp] * a.val;
                }
            }
        }
        m
    }

    pub fn skew(&self, w: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nv, self.nv);
        for q in &self.points {
            let (wq, _) = Self::vector_at(q, w);
            let adv = |g: [f64; 2]| wq[0] * g[0] + wq[1] * g[1];
            for a in &q.v {
                for b in q.v.iter().filter(|b| b.comp == a.comp) {
                    m[(a.dof, b.dof)] += q.w * 0.5 * (adv(b.grad) * a.val - adv(a.grad) * b.val);
                }
            }
        }
        m
    }

    pub fn ch_block(&self, w: &[f64], tau: f64, mobility: f64, lambda: f64) -> DMatrix<f64> {
        let n = self.ns;
        let (m, k, c) = (self.mass_s(), self.stiff_s(), self.convection(w));
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        a.view_mut((0, 0), (n, n)).copy_from(&(&m / tau + c));
        a.view_mut((0, n), (n, n)).copy_from(&(&k * mobility));
        a.view_mut((n, 0), (n, n)).copy_from(&(&k * -lambda));
        a.view_mut((n, n), (n, n)).copy_from(&m);
        a
    }

    pub fn scalar_load(&self, f: impl Fn(&Qp) -> f64) -> DVector<f64> {
        let mut b = DVector::zeros(self.ns);
        for q in &self.points {
            let fq = f(q);
            for a in &q.s {
                b[a.dof] += q.w * fq * a.val;
            }
        }
        b
    }

    pub fn vector_load(&self, f: impl Fn(&Qp, &VectorBasis) -> f64) -> DVector<f64> {
        let mut b = DVector::zeros(self.nv);
        for q in &self.points {
            for a in &q.v {
                b[a.dof] += q.w * f(q, a);
            }
        }
        b
    }

    pub fn fprime_load(&self, phi: &[f64], eps: f64) -> DVector<f64> {
        self.scalar_load(|q| {
            let (v, _) = Self::scalar_at(q, phi);
            (v * v * v - v) / (eps * eps)
        })
    }

    pub fn capillary_load(&self, phi: &[f64], mu: &[f64]) -> DVector<f64> {
        self.vector_load(|q, a| {
            let (_, g) = Self::scalar_at(q, phi);
            let (m, _) = Self::scalar_at(q, mu);
            m * g[a.comp] * a.val
        })
    }

    pub fn skew_load(&self, u: &[f64]) -> DVector<f64> {
        self.vector_load(|q, a| {
            let (uq, gu) = Self::vector_at(q, u);
            let conv = uq[0] * gu[a.comp][0] + uq[1] * gu[a.comp][1];
            let adv = uq[0] * a.grad[0] + uq[1] * a.grad[1];
            0.5 * (conv * a.val - adv * uq[a.comp])
        })
    }
}

pub fn max_diff_matrix(a: &DMatrix<f64>, b: &SparseMatrix) -> f64 {
    let d = b.to_dense();
    assert_eq!((a.nrows(), a.ncols()), (b.n_rows, b.n_cols));
    let mut m: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            m = m.max((a[(i, j)] - d[i][j]).abs());
        }
    }
    m
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-amp..amp)).collect()
}

pub fn interior_velocity(sp: &Spaces<f64>, rng: &mut ChaCha8Rng, amp: f64) -> Vec<f64> {
    let mask = sp.vector.is_boundary_mask();
    (0..sp.vector.n_dofs)
        .map(|d| if mask[d] { 0.0 } else { rng.gen_range(-amp..amp) })
        .collect()
}

pub fn check_operators(domain: Rect, nx: usize, ny: usize, seed: u64) -> Checks {
    let mut checks = Checks::default();
    let mesh = build_rect_mesh(domain, nx, ny).unwrap();
    let sp = Spaces::new(&mesh);
    let quad = quadrature(DEFAULT_QUADRATURE_DEGREE).unwrap();
    let oracle = Oracle::new(&mesh, &sp);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Field::new(sp.vector.clone(), random_vec(&mut rng, sp.vector.n_dofs, 1.0)).unwrap();
    let op = |k: OperatorKind<f64>| assemble_operator(&mesh, &k, &sp, &quad).unwrap();

    let cases = [
        ("mass scalar", oracle.mass_s(), op(OperatorKind::MassScalar)),
        ("stiffness scalar", oracle.stiff_s(), op(OperatorKind::StiffnessScalar)),
        ("mass vector", oracle.mass_v(), op(OperatorKind::MassVector)),
        ("stiffness vector", oracle.stiff_v(), op(OperatorKind::StiffnessVector)),
        (
            "convection",
            oracle.convection(&w.values),
            op(OperatorKind::ConvectionPhi(&w)),
        ),
        (
            "pressure gradient",
            oracle.pressure_grad(),
            op(OperatorKind::PressureGrad),
        ),
        (
            "skew convection",
            oracle.skew(&w.values),
            op(OperatorKind::SkewConvection(&w)),
        ),
        (
            "coupled block",
            oracle.ch_block(&w.values, 0.01, 0.1, 0.04),
            op(OperatorKind::ChCoupling {
                velocity: &w,
                tau: 0.01,
                mobility: 0.1,
                lambda: 0.04,
            }),
        ),
    ];
    for (name, dense, sparse) in &cases {
        let scale = dense.amax().max(1.0);
        let d = max_diff_matrix(dense, sparse);
        checks.check(*name, d, OP_TOL * scale);
    }

    let phi = Field::new(sp.scalar.clone(), random_vec(&mut rng, sp.scalar.n_dofs, 1.2)).unwrap();
    let mu = Field::new(sp.scalar.clone(), random_vec(&mut rng, sp.scalar.n_dofs, 1.0)).unwrap();
    let load = |k: LoadKind<f64>| assemble_load(&mesh, &k, &sp, &quad).unwrap();
    let f = |x: [f64; 2]| 1.0 + x[0] - 2.0 * x[1] * x[1] + x[0] * x[1] * x[1];
    let g = |x: [f64; 2]| [x[1] * x[1] * x[1], 2.0 - x[0] * x[1]];
    let eps = 0.2;
    let loads = [
        (
            "fprime",
            oracle.fprime_load(&phi.values, eps),
            load(LoadKind::NonlinearFprime {
                phi: &phi,
                epsilon: eps,
            }),
        ),
        (
            "capillary",
            oracle.capillary_load(&phi.values, &mu.values),
            load(LoadKind::Capillary { phi: &phi, mu: &mu }),
        ),
        ("skew", oracle.skew_load(&w.values), load(LoadKind::SkewConvection(&w))),
        (
            "scalar source",
            oracle.scalar_load(|q| f(q.x)),
            load(LoadKind::ScalarSource(&f)),
        ),
        (
            "vector source",
            oracle.vector_load(|q, a| g(q.x)[a.comp] * a.val),
            load(LoadKind::VectorSource(&g)),
        ),
    ];
    for (name, dense, sparse) in &loads {
        let scale = dense.amax().max(1.0);
        let d = max_diff(dense.as_slice(), sparse);
        checks.check(*name, d, OP_TOL * scale);
    }
    checks
}

pub struct StepFixture {
    pub scheme: Scheme,
    pub oracle: Oracle,
    pub state: State,
}

pub fn fixture(nx: usize, ny: usize, seed: u64) -> StepFixture {
    let mesh = build_rect_mesh(Rect::unit(), nx, ny).unwrap();
    let mut params = SchemeParams::new(0.1, 0.04, 0.01, 0.2, 0.01);
    params.solver.rel_tol = 1e-14;
    let scheme = Scheme::new(mesh, params).unwrap();
    let oracle = Oracle::new(&scheme.mesh, &scheme.spaces);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sp = &scheme.spaces;
    let phi = Field::new(sp.scalar.clone(), random_vec(&mut rng, sp.scalar.n_dofs, 1.0)).unwrap();
    let mu = Field::new(sp.scalar.clone(), random_vec(&mut rng, sp.scalar.n_dofs, 1.0)).unwrap();
    let p = Field::new(sp.scalar.clone(), random_vec(&mut rng, sp.scalar.n_dofs, 1.0)).unwrap();
    let u = Field::new(sp.vector.clone(), interior_velocity(sp, &mut rng, 1.0)).unwrap();
    let rho = scheme.compute_e1(&phi).unwrap().sqrt() * 1.01;
    let state = State {
        phi,
        mu,
        p,
        u_tilde: u.clone(),
        u,
        rho,
        t: 0.0,
        step: 0,
    };
    StepFixture { scheme, oracle, state }
}

pub fn interior_dofs(sp: &Spaces<f64>) -> Vec<usize> {
    let mask = sp.vector.is_boundary_mask();
    (0..sp.vector.n_dofs).filter(|d| !mask[*d]).collect()
}

pub fn check_steps(nx: usize, ny: usize, seed: u64, unique_pressure: bool) -> Checks {
    let mut checks = Checks::default();
    let StepFixture { scheme, oracle, state } = fixture(nx, ny, seed);
    let prm = scheme.params.clone();
    let n = oracle.ns;

    // step 1
    let ch = scheme.step_cahn_hilliard(&state, None).unwrap();
    let a = oracle.ch_block(&state.u.values, prm.tau, prm.mobility, prm.lambda);
    let m = oracle.mass_s();
    let mphi = &m * DVector::from_column_slice(&state.phi.values) / prm.tau;
    let fl = oracle.fprime_load(&state.phi.values, prm.epsilon) * prm.lambda;
    let rhs = DVector::from_iterator(2 * n, mphi.iter().chain(fl.iter()).copied());
    let x = a.lu().solve(&rhs).unwrap();
    let (phi1, mu1) = (x.rows(0, n).clone_owned(), x.rows(n, n).clone_owned());
    checks.check("step 1 phase", max_diff(phi1.as_slice(), &ch.phi.values), STEP_TOL);
    checks.check(
        "step 1 chemical potential",
        max_diff(mu1.as_slice(), &ch.mu.values),
        STEP_TOL,
    );

    // step 2
    let vel = scheme.step_velocity(&state, &ch.phi, &ch.mu, None).unwrap();
    let e1 = oracle.integrate(|q| {
        let (v, _) = Oracle::scalar_at(q, phi1.as_slice());
        (v * v - 1.0).powi(2) / (4.0 * prm.epsilon * prm.epsilon)
    }) + prm.c0;
    checks.check("step 2 E1", (e1 - vel.e1_next).abs(), 1e-12 * e1);
    let scale = state.rho / e1.sqrt();
    let (mv, kv, g) = (oracle.mass_v(), oracle.stiff_v(), oracle.pressure_grad());
    let av = &mv / prm.tau + &kv * prm.nu;
    let un = DVector::from_column_slice(&state.u.values);
    let bv = &mv * &un / prm.tau
        - oracle.skew_load(&state.u.values) * scale
        - &g * DVector::from_column_slice(&state.p.values)
        + oracle.capillary_load(phi1.as_slice(), mu1.as_slice());
    let free = interior_dofs(&scheme.spaces);
    let a_ii = DMatrix::from_fn(free.len(), free.len(), |i, j| av[(free[i], free[j])]);
    let b_i = DVector::from_fn(free.len(), |i, _| bv[free[i]]);
    let ut_i = a_ii.lu().solve(&b_i).unwrap();
    let mut ut = vec![0.0; oracle.nv];
    for (k, &d) in free.iter().enumerate() {
        ut[d] = ut_i[k];
    }
    checks.check(
        "step 2 intermediate velocity",
        max_diff(&ut, &vel.u_tilde.values),
        STEP_TOL,
    );

    // step 3: every term integrated directly
    let fterm = oracle.integrate(|q| {
        let (v0, _) = Oracle::scalar_at(q, &state.phi.values);
        let (v1, _) = Oracle::scalar_at(q, phi1.as_slice());
        (v0 * v0 * v0 - v0) / (prm.epsilon * prm.epsilon) * (v1 - v0)
    });
    let b_term = oracle.integrate(|q| {
        let (u, gu) = Oracle::vector_at(q, &state.u.values);
        let (w, gw) = Oracle::vector_at(q, &ut);
        (0..2)
            .map(|c| 0.5 * ((u[0] * gu[c][0] + u[1] * gu[c][1]) * w[c] - (u[0] * gw[c][0] + u[1] * gw[c][1]) * u[c]))
            .sum()
    });
    let conv = oracle.integrate(|q| {
        let (u, _) = Oracle::vector_at(q, &state.u.values);
        let (_, gphi) = Oracle::scalar_at(q, phi1.as_slice());
        let (m, _) = Oracle::scalar_at(q, mu1.as_slice());
        (u[0] * gphi[0] + u[1] * gphi[1]) * m
    });
    let cap = oracle.integrate(|q| {
        let (w, _) = Oracle::vector_at(q, &ut);
        let (_, gphi) = Oracle::scalar_at(q, phi1.as_slice());
        let (m, _) = Oracle::scalar_at(q, mu1.as_slice());
        m * (gphi[0] * w[0] + gphi[1] * w[1])
    });
    let c = -(fterm + prm.tau / prm.lambda * (scale * b_term + conv - cap));
    let disc = state.rho * state.rho - 2.0 * c;
    assert!(disc >= 0.0);
    let roots = [(state.rho + disc.sqrt()) / 2.0, (state.rho - disc.sqrt()) / 2.0];
    let want = roots
        .into_iter()
        .filter(|r| *r > 0.0)
        .min_by(|a, b| ((a / e1.sqrt() - 1.0).abs()).total_cmp(&(b / e1.sqrt() - 1.0).abs()))
        .unwrap();
    let rho = scheme.step_sav(&state, &ch, &vel).unwrap();
    checks.check("step 3 auxiliary variable", (rho - want).abs(), STEP_TOL);

    // step 4: saddle point system on interior velocity dofs
    let (p_next, u_next, _) = scheme.step_projection(&state, &vel.u_tilde).unwrap();
    let nf = free.len();
    let mut kkt = DMatrix::zeros(nf + n, nf + n);
    for i in 0..nf {
        for j in 0..nf {
            kkt[(i, j)] = mv[(free[i], free[j])];
        }
        for j in 0..n {
            kkt[(i, nf + j)] = prm.tau * g[(free[i], j)];
            kkt[(nf + j, i)] = g[(free[i], j)];
        }
    }
    let mut rhs = DVector::zeros(nf + n);
    for i in 0..nf {
        rhs[i] = (0..nf).map(|j| mv[(free[i], free[j])] * ut[free[j]]).sum();
    }
    let sol = kkt.svd(true, true).solve(&rhs, 1e-12).unwrap();
    let mut u_want = vec![0.0; oracle.nv];
    for (k, &d) in free.iter().enumerate() {
        u_want[d] = sol[k];
    }
    checks.check("step 4 velocity", max_diff(&u_want, &u_next.values), STEP_TOL);

    let psi: Vec<f64> = p_next.values.iter().zip(&state.p.values).map(|(a, b)| a - b).collect();
    let gpsi = &g * DVector::from_column_slice(&psi);
    let mut row_err: f64 = 0.0;
    for &d in &free {
        let lhs: f64 = (0..nf)
            .map(|j| mv[(d, free[j])] * (ut[free[j]] - u_want[free[j]]))
            .sum();
        row_err = row_err.max((prm.tau * gpsi[d] - lhs).abs());
    }
    checks.check("step 4 increment equation", row_err, STEP_TOL);
    let lumped: Vec<f64> = m.row_sum().iter().copied().collect();
    let mean: f64 = psi.iter().zip(&lumped).map(|(a, b)| a * b).sum();
    checks.check("step 4 increment mean", mean.abs(), 1e-12);
    if unique_pressure {
        // minimum-norm increment shifted to zero lumped mean
        let mut pw: Vec<f64> = sol.rows(nf, n).iter().copied().collect();
        let total: f64 = lumped.iter().sum();
        let m0 = pw.iter().zip(&lumped).map(|(a, b)| a * b).sum::<f64>() / total;
        pw.iter_mut().for_each(|v| *v -= m0);
        checks.check("step 4 pressure increment", max_diff(&pw, &psi), STEP_TOL);
    }
    checks
}
