//! The decoupled four-step time integrator.
//!
//! Each step advances `(φ, μ, ũ, u, p, ρ)` by
//!
//! 1. a coupled linear Cahn–Hilliard solve with the old velocity as advection,
//! 2. a momentum solve for the intermediate velocity `ũ` with the old pressure,
//!    the explicit skew convection scaled by `ρⁿ/√E₁(φⁿ⁺¹)` and the capillary force,
//! 3. a scalar quadratic for the auxiliary variable `ρ`,
//! 4. a discrete projection of `ũ` that also updates the pressure.

mod projection;

pub use projection::{Projection, ProjectionMethod, ProjectionStats, DENSE_SCHUR_LIMIT};

use thiserror::Error;

use crate::assembly::{assemble_load, assemble_operator, AssemblyError, Field, LoadKind, OperatorKind, Spaces};
use crate::fe::{quadrature, QuadratureRule, DEFAULT_QUADRATURE_DEGREE};
use crate::linalg::{
    bicgstab_preconditioned, solve, solve_from, to_sparse, BandCholesky, DirichletBc, LinalgError, SolverConfig,
    SolverMethod, SparseMatrix, TripletBuffer,
};
use crate::mesh::Mesh;
use crate::real::{dot, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("step {step}, {stage}: {source}")]
    Solver {
        step: usize,
        stage: &'static str,
        #[source]
        source: LinalgError,
    },
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("auxiliary variable breakdown: rho^n = {rho_n:e}, c = {c:e}, discriminant = {discriminant:e}")]
    SavBreakdown { rho_n: f64, c: f64, discriminant: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

fn stage(step: usize, stage: &'static str) -> impl Fn(LinalgError) -> SchemeError {
    move |source| SchemeError::Solver { step, stage, source }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeParams<T> {
    /// Mobility `M`.
    pub mobility: T,
    pub lambda: T,
    pub nu: T,
    pub epsilon: T,
    /// Shift `C₀` in `ρ = √(E₁ + C₀)`.
    pub c0: T,
    pub tau: T,
    /// Whether `F'` carries the mixing coefficient in the chemical potential,
    /// `μ = -λΔφ + λF'(φ)`, or not, `μ = -λΔφ + F'(φ)`.
    pub lambda_on_fprime: bool,
    pub solver: SolverConfig<T>,
}

impl<T: Real> SchemeParams<T> {
    pub fn new(mobility: T, lambda: T, nu: T, epsilon: T, tau: T) -> Self {
        SchemeParams {
            mobility,
            lambda,
            nu,
            epsilon,
            c0: T::one(),
            tau,
            lambda_on_fprime: true,
            solver: SolverConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SchemeError> {
        for (name, v) in [
            ("M", self.mobility),
            ("lambda", self.lambda),
            ("nu", self.nu),
            ("epsilon", self.epsilon),
            ("C0", self.c0),
            ("tau", self.tau),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(SchemeError::InvalidParams(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.epsilon > T::one() {
            return Err(SchemeError::InvalidParams(format!(
                "epsilon must not exceed 1, got {}",
                self.epsilon
            )));
        }
        self.solver
            .validate()
            .map_err(|e| SchemeError::InvalidParams(e.to_string()))
    }

    /// Coefficient of `F'` in the chemical potential.
    pub fn fprime_weight(&self) -> T {
        if self.lambda_on_fprime {
            self.lambda
        } else {
            T::one()
        }
    }
}

/// Discrete solution at one time level.
#[derive(Debug, Clone)]
pub struct State<T> {
    pub phi: Field<T>,
    pub mu: Field<T>,
    pub p: Field<T>,
    pub u: Field<T>,
    pub u_tilde: Field<T>,
    pub rho: T,
    pub t: T,
    pub step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport<T> {
    /// `½Ẽ`: `(λ/2)‖∇φ‖² + ½‖u‖² + (τ²/2)‖∇p‖² + λρ²`.
    pub e_modified: T,
    /// `Ẽ = λ‖∇φ‖² + ‖u‖² + τ²‖∇p‖² + 2λρ²`.
    pub e_theorem: T,
    /// `2Mτ‖∇μ‖² + 2ντ‖∇ũ‖²`.
    pub dissipation_bound: T,
    /// `(φ, 1)`.
    pub mass: T,
    pub rho: T,
    /// `ρ / √(E₁(φ) + C₀)`.
    pub sav_ratio: T,
}

impl<T: Real> EnergyReport<T> {
    pub fn is_finite(&self) -> bool {
        [
            self.e_modified,
            self.e_theorem,
            self.dissipation_bound,
            self.mass,
            self.rho,
            self.sav_ratio,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    /// `Ẽⁿ⁺¹ - Ẽⁿ + dissipation`; the discrete energy law says this is `≤ 0`.
    pub fn energy_law_defect(prev: &EnergyReport<T>, next: &EnergyReport<T>) -> T {
        next.e_theorem - prev.e_theorem + next.dissipation_bound
    }
}

/// Source terms added to the phase and momentum equations, evaluated at
/// the new time level.
pub trait Forcing<T> {
    fn phi(&self, t: T, x: [T; 2]) -> T;
    fn velocity(&self, t: T, x: [T; 2]) -> [T; 2];
    /// Whether [`phi`](Self::phi) is identically zero.
    fn phi_is_zero(&self) -> bool {
        false
    }
    /// Whether both sources are independent of `t`.
    fn is_steady(&self) -> bool {
        false
    }
}

/// A constant body force on the momentum equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyForce<T>(pub [T; 2]);

impl<T: Real> Forcing<T> for BodyForce<T> {
    fn phi(&self, _t: T, _x: [T; 2]) -> T {
        T::zero()
    }

    fn velocity(&self, _t: T, _x: [T; 2]) -> [T; 2] {
        self.0
    }

    fn phi_is_zero(&self) -> bool {
        true
    }

    fn is_steady(&self) -> bool {
        true
    }
}

/// Load vectors produced by one [`Forcing`] at one time.
#[derive(Debug, Clone, Default)]
pub struct SourceLoads<T> {
    pub phi: Option<Vec<T>>,
    pub velocity: Option<Vec<T>>,
}

/// Intermediate quantities shared between steps 1–3 of one time step.
#[derive(Debug, Clone)]
pub struct ChStep<T> {
    pub phi: Field<T>,
    pub mu: Field<T>,
    /// `(F'(φⁿ), χ_i)`
    pub fprime_load: Vec<T>,
    /// `(uⁿ·∇χ_j, χ_i)`
    pub convection: SparseMatrix<T>,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct VelocityStep<T> {
    pub u_tilde: Field<T>,
    /// `B(uⁿ, uⁿ, v_i)`
    pub skew_load: Vec<T>,
    /// `(μⁿ⁺¹∇φⁿ⁺¹, v_i)`
    pub capillary_load: Vec<T>,
    /// `E₁(φⁿ⁺¹) + C₀`
    pub e1_next: T,
    pub iterations: usize,
}

/// Mesh, spaces and time-independent operators for one parameter set.
#[derive(Debug, Clone)]
pub struct Scheme<T> {
    pub mesh: Mesh<T>,
    pub spaces: Spaces<T>,
    pub quad: QuadratureRule<T>,
    pub params: SchemeParams<T>,
    pub mass_s: SparseMatrix<T>,
    pub stiff_s: SparseMatrix<T>,
    pub mass_v: SparseMatrix<T>,
    pub stiff_v: SparseMatrix<T>,
    /// `(∇q_j, v_i)`
    pub grad: SparseMatrix<T>,
    velocity_bc: DirichletBc<T>,
    /// `M_v/τ + νK_v` with boundary rows eliminated
    velocity_op: SparseMatrix<T>,
    pub projection: Projection<T>,
    /// Row sums of the P1 mass matrix.
    pub lumped_mass: Vec<T>,
    ch_precond: ChPreconditioner<T>,
    /// step-1 block operator at zero velocity
    ch_static: SparseMatrix<T>,
    /// CSR slot in `ch_static` of each convection matrix entry
    ch_conv_slots: Vec<usize>,
}

/// Right preconditioner for the step-1 block system: the same system with
/// the mass matrix lumped and advection dropped, solved exactly through its
/// sparse Schur complement `M_L/τ + M_obl λ K M_L⁻¹ K`.
#[derive(Debug, Clone)]
struct ChPreconditioner<T> {
    schur: BandCholesky<T>,
    stiff: SparseMatrix<T>,
    lumped_inv: Vec<T>,
    mobility: T,
    lambda: T,
}

impl<T: Real> ChPreconditioner<T> {
    fn new(stiff: &SparseMatrix<T>, lumped: &[T], params: &SchemeParams<T>) -> Result<Self, LinalgError> {
        let n = stiff.n_rows;
        let lumped_inv: Vec<T> = lumped.iter().map(|m| T::one() / *m).collect();
        let coef = params.mobility * params.lambda;
        let mut buf = TripletBuffer::new();
        for i in 0..n {
            buf.push(i, i, lumped[i] / params.tau);
            for (k, v) in stiff.row(i) {
                let vk = coef * v * lumped_inv[k];
                for (j, w) in stiff.row(k) {
                    buf.push(i, j, vk * w);
                }
            }
        }
        Ok(ChPreconditioner {
            schur: BandCholesky::new(&to_sparse(&buf, n, n)?)?,
            stiff: stiff.clone(),
            lumped_inv,
            mobility: params.mobility,
            lambda: params.lambda,
        })
    }

    fn apply(&self, r: &[T], z: &mut [T]) {
        let n = self.lumped_inv.len();
        let (r1, r2) = r.split_at(n);
        let m2: Vec<T> = r2.iter().zip(&self.lumped_inv).map(|(a, b)| *a * *b).collect();
        let km2 = self.stiff.mul_vec(&m2);
        let mut phi: Vec<T> = r1.iter().zip(&km2).map(|(a, b)| *a - self.mobility * *b).collect();
        self.schur.solve_in_place(&mut phi);
        let kphi = self.stiff.mul_vec(&phi);
        for i in 0..n {
            z[n + i] = (r2[i] + self.lambda * kphi[i]) * self.lumped_inv[i];
        }
        z[..n].copy_from_slice(&phi);
    }
}

impl<T: Real> Scheme<T> {
    pub fn new(mesh: Mesh<T>, params: SchemeParams<T>) -> Result<Self, SchemeError> {
        Self::with_projection(mesh, params, ProjectionMethod::Auto)
    }

    pub fn with_projection(
        mesh: Mesh<T>,
        params: SchemeParams<T>,
        method: ProjectionMethod,
    ) -> Result<Self, SchemeError> {
        params.validate()?;
        let spaces = Spaces::new(&mesh);
        let quad = quadrature(DEFAULT_QUADRATURE_DEGREE).expect("default rule exists");
        let op = |k: OperatorKind<T>| assemble_operator(&mesh, &k, &spaces, &quad);
        let mass_s = op(OperatorKind::MassScalar)?;
        let stiff_s = op(OperatorKind::StiffnessScalar)?;
        let mass_v = op(OperatorKind::MassVector)?;
        let stiff_v = op(OperatorKind::StiffnessVector)?;
        let grad = op(OperatorKind::PressureGrad)?;

        let velocity_bc =
            DirichletBc::homogeneous(spaces.vector.n_dofs, &spaces.vector.boundary_dofs).map_err(stage(0, "setup"))?;
        let a = mass_v
            .add(T::one() / params.tau, &stiff_v, params.nu)
            .map_err(stage(0, "setup"))?;
        let velocity_op = velocity_bc.apply_matrix(&a);
        let lumped_mass = mass_s.mul_vec(&vec![T::one(); mass_s.n_cols]);
        let projection = Projection::new(
            &mass_v,
            &grad,
            &stiff_s,
            &spaces.vector.is_boundary_mask(),
            lumped_mass.clone(),
            method,
            params.solver.rel_tol,
        )
        .map_err(stage(0, "setup"))?;
        let ch_precond = ChPreconditioner::new(&stiff_s, &lumped_mass, &params).map_err(stage(0, "setup"))?;
        let u0 = Field::zeros(spaces.vector.clone());
        let ch_static = op(OperatorKind::ChCoupling {
            velocity: &u0,
            tau: params.tau,
            mobility: params.mobility,
            lambda: params.lambda,
        })?;
        let conv_pattern = op(OperatorKind::ConvectionPhi(&u0))?;
        let ch_conv_slots = csr_slots(&ch_static, &conv_pattern);
        Ok(Scheme {
            mesh,
            spaces,
            quad,
            params,
            mass_s,
            stiff_s,
            mass_v,
            stiff_v,
            grad,
            velocity_bc,
            velocity_op,
            projection,
            lumped_mass,
            ch_precond,
            ch_static,
            ch_conv_slots,
        })
    }

    /// `E₁(φ) + C₀` with `E₁(φ) = ∫ (φ² - 1)² / (4ε²)`.
    pub fn compute_e1(&self, phi: &Field<T>) -> Result<T, SchemeError> {
        compute_e1(&self.mesh, phi, &self.params, &self.quad)
    }

    fn fprime_load(&self, phi: &Field<T>) -> Result<Vec<T>, SchemeError> {
        Ok(assemble_load(
            &self.mesh,
            &LoadKind::NonlinearFprime {
                phi,
                epsilon: self.params.epsilon,
            },
            &self.spaces,
            &self.quad,
        )?)
    }

    /// Initial state from nodal data: `μ⁰` is the L² projection of
    /// `-λΔφ⁰ + λ_F F'(φ⁰)`, `p⁰ = 0`, `ũ⁰ = u⁰` and `ρ⁰ = √(E₁(φ⁰) + C₀)`.
    /// Boundary velocity values are overwritten with zero.
    pub fn initial_state(&self, phi: Field<T>, u: Field<T>, t0: T) -> Result<State<T>, SchemeError> {
        let mut u = u;
        self.velocity_bc.impose(&mut u.values);
        let fl = self.fprime_load(&phi)?;
        let kphi = self.stiff_s.mul_vec(&phi.values);
        let w = self.params.fprime_weight();
        let rhs: Vec<T> = kphi
            .iter()
            .zip(&fl)
            .map(|(k, f)| self.params.lambda * *k + w * *f)
            .collect();
        let cfg = self.params.solver.clone().with_method(SolverMethod::Cg);
        let (mu, _) = solve(&self.mass_s, &rhs, &cfg, None).map_err(stage(0, "initial chemical potential"))?;
        let rho = self.compute_e1(&phi)?.sqrt();
        Ok(State {
            mu: phi.with_values(mu)?,
            p: Field::zeros(self.spaces.scalar.clone()),
            u_tilde: u.clone(),
            u,
            phi,
            rho,
            t: t0,
            step: 0,
        })
    }

    pub fn source_loads(&self, forcing: &dyn Forcing<T>, t: T) -> Result<SourceLoads<T>, SchemeError> {
        let phi = if forcing.phi_is_zero() {
            None
        } else {
            let f = |x: [T; 2]| forcing.phi(t, x);
            Some(assemble_load(
                &self.mesh,
                &LoadKind::ScalarSource(&f),
                &self.spaces,
                &self.quad,
            )?)
        };
        let g = |x: [T; 2]| forcing.velocity(t, x);
        let velocity = Some(assemble_load(
            &self.mesh,
            &LoadKind::VectorSource(&g),
            &self.spaces,
            &self.quad,
        )?);
        Ok(SourceLoads { phi, velocity })
    }

    /// Step 1: solves
    ///
    /// ```text
    /// (M/τ + C(uⁿ)) φ + M_obl K μ = M φⁿ/τ + f_φ
    ///          -λ K φ +     M μ = λ_F (F'(φⁿ), χ)
    /// ```
    ///
    /// Reads only `φⁿ`, `μⁿ` (as the initial guess) and `uⁿ`.
    pub fn step_cahn_hilliard(&self, state: &State<T>, f_phi: Option<&[T]>) -> Result<ChStep<T>, SchemeError> {
        let prm = &self.params;
        let n = self.spaces.scalar.n_dofs;
        let convection = assemble_operator(
            &self.mesh,
            &OperatorKind::ConvectionPhi(&state.u),
            &self.spaces,
            &self.quad,
        )?;
        let mut a = self.ch_static.clone();
        if convection.col_idx.len() == self.ch_conv_slots.len() {
            for (slot, v) in self.ch_conv_slots.iter().zip(&convection.values) {
                a.values[*slot] += *v;
            }
        } else {
            let mut buf = TripletBuffer::with_capacity(a.nnz() + convection.nnz());
            buf.push_block(&a, 0, 0, T::one());
            buf.push_block(&convection, 0, 0, T::one());
            a = to_sparse(&buf, a.n_rows, a.n_cols).map_err(stage(state.step, "cahn-hilliard"))?;
        }
        let fprime_load = self.fprime_load(&state.phi)?;
        let mphi = self.mass_s.mul_vec(&state.phi.values);
        let w = prm.fprime_weight();
        let mut rhs = Vec::with_capacity(2 * n);
        rhs.extend(mphi.iter().map(|v| *v / prm.tau));
        if let Some(f) = f_phi {
            for (r, fi) in rhs.iter_mut().zip(f) {
                *r += *fi;
            }
        }
        rhs.extend(fprime_load.iter().map(|v| w * *v));
        let mut x0 = state.phi.values.clone();
        x0.extend_from_slice(&state.mu.values);
        let mut x = x0;
        let stats = bicgstab_preconditioned(&a, &rhs, &mut x, &prm.solver, |r, z| self.ch_precond.apply(r, z))
            .map_err(stage(state.step, "cahn-hilliard"))?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SchemeError::NonFinite("phase field"));
        }
        Ok(ChStep {
            phi: state.phi.with_values(x[..n].to_vec())?,
            mu: state.mu.with_values(x[n..].to_vec())?,
            fprime_load,
            convection,
            iterations: stats.iterations,
        })
    }

    /// Step 2: the intermediate velocity from
    ///
    /// ```text
    /// (M_v/τ + νK_v) ũ = M_v uⁿ/τ - (ρⁿ/√E₁ⁿ⁺¹) B(uⁿ, uⁿ, ·) - G pⁿ + (μⁿ⁺¹∇φⁿ⁺¹, ·) + f_u
    /// ```
    ///
    /// with homogeneous Dirichlet conditions. Never reads `φⁿ` or `μⁿ`.
    pub fn step_velocity(
        &self,
        state: &State<T>,
        phi_next: &Field<T>,
        mu_next: &Field<T>,
        f_u: Option<&[T]>,
    ) -> Result<VelocityStep<T>, SchemeError> {
        let prm = &self.params;
        let e1_next = self.compute_e1(phi_next)?;
        let scale = state.rho / e1_next.sqrt();
        let skew_load = assemble_load(
            &self.mesh,
            &LoadKind::SkewConvection(&state.u),
            &self.spaces,
            &self.quad,
        )?;
        let capillary_load = assemble_load(
            &self.mesh,
            &LoadKind::Capillary {
                phi: phi_next,
                mu: mu_next,
            },
            &self.spaces,
            &self.quad,
        )?;
        let mu_old = self.mass_v.mul_vec(&state.u.values);
        let gp = self.grad.mul_vec(&state.p.values);
        let mut rhs: Vec<T> = (0..mu_old.len())
            .map(|i| mu_old[i] / prm.tau - scale * skew_load[i] - gp[i] + capillary_load[i])
            .collect();
        if let Some(f) = f_u {
            for (r, fi) in rhs.iter_mut().zip(f) {
                *r += *fi;
            }
        }
        for &d in &self.velocity_bc.dofs {
            rhs[d] = T::zero();
        }
        let (x, stats) = solve_from(&self.velocity_op, &rhs, state.u.values.clone(), &prm.solver, None)
            .map_err(stage(state.step, "velocity"))?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SchemeError::NonFinite("intermediate velocity"));
        }
        Ok(VelocityStep {
            u_tilde: state.u.with_values(x)?,
            skew_load,
            capillary_load,
            e1_next,
            iterations: stats.iterations,
        })
    }

    /// The constant `c` of the auxiliary-variable quadratic `2ρ² - 2ρⁿρ + c = 0`.
    pub fn sav_constant(&self, state: &State<T>, ch: &ChStep<T>, vel: &VelocityStep<T>) -> T {
        let prm = &self.params;
        let w = prm.fprime_weight();
        let dphi: Vec<T> = ch
            .phi
            .values
            .iter()
            .zip(&state.phi.values)
            .map(|(a, b)| *a - *b)
            .collect();
        let fterm = dot(&ch.fprime_load, &dphi);
        let b_term = dot(&vel.skew_load, &vel.u_tilde.values);
        let conv = dot(&ch.mu.values, &ch.convection.mul_vec(&ch.phi.values));
        let cap = dot(&vel.capillary_load, &vel.u_tilde.values);
        let coupling = state.rho / vel.e1_next.sqrt() * b_term + conv - cap;
        -(fterm + prm.tau / w * coupling)
    }

    /// Step 3: the new auxiliary variable.
    pub fn step_sav(&self, state: &State<T>, ch: &ChStep<T>, vel: &VelocityStep<T>) -> Result<T, SchemeError> {
        let c = self.sav_constant(state, ch, vel);
        solve_sav_quadratic(state.rho, c, vel.e1_next.sqrt())
    }

    /// Step 4: projects `ũ` and corrects the pressure.
    pub fn step_projection(
        &self,
        state: &State<T>,
        u_tilde: &Field<T>,
    ) -> Result<(Field<T>, Field<T>, ProjectionStats<T>), SchemeError> {
        let (psi, u, stats) = self
            .projection
            .project(&u_tilde.values, self.params.tau)
            .map_err(stage(state.step, "projection"))?;
        let p: Vec<T> = state.p.values.iter().zip(&psi).map(|(a, b)| *a + *b).collect();
        Ok((state.p.with_values(p)?, u_tilde.with_values(u)?, stats))
    }

    /// One full time step. Sources are evaluated at `tⁿ⁺¹`.
    pub fn advance(
        &self,
        state: &State<T>,
        forcing: Option<&dyn Forcing<T>>,
    ) -> Result<(State<T>, EnergyReport<T>, StepInfo<T>), SchemeError> {
        let t_next = state.t + self.params.tau;
        let loads = match forcing {
            Some(f) => self.source_loads(f, t_next)?,
            None => SourceLoads::default(),
        };
        self.advance_with_loads(state, &loads)
    }

    /// [`advance`](Self::advance) with source loads already assembled at
    /// the new time level.
    pub fn advance_with_loads(
        &self,
        state: &State<T>,
        loads: &SourceLoads<T>,
    ) -> Result<(State<T>, EnergyReport<T>, StepInfo<T>), SchemeError> {
        let t_next = state.t + self.params.tau;
        let ch = self.step_cahn_hilliard(state, loads.phi.as_deref())?;
        let vel = self.step_velocity(state, &ch.phi, &ch.mu, loads.velocity.as_deref())?;
        let rho = self.step_sav(state, &ch, &vel)?;
        let (p, u, proj) = self.step_projection(state, &vel.u_tilde)?;
        let info = StepInfo {
            ch_iterations: ch.iterations,
            velocity_iterations: vel.iterations,
            projection: proj,
        };
        let next = State {
            phi: ch.phi,
            mu: ch.mu,
            p,
            u,
            u_tilde: vel.u_tilde,
            rho,
            t: t_next,
            step: state.step + 1,
        };
        let report = self.report_with_e1(&next, vel.e1_next);
        Ok((next, report, info))
    }

    /// Energies of a state from the assembled mass and stiffness matrices.
    pub fn energy_report(&self, state: &State<T>) -> Result<EnergyReport<T>, SchemeError> {
        Ok(self.report_with_e1(state, self.compute_e1(&state.phi)?))
    }

    fn report_with_e1(&self, state: &State<T>, e1: T) -> EnergyReport<T> {
        let prm = &self.params;
        let grad_phi = dot(&state.phi.values, &self.stiff_s.mul_vec(&state.phi.values));
        let u2 = dot(&state.u.values, &self.mass_v.mul_vec(&state.u.values));
        let grad_p = dot(&state.p.values, &self.stiff_s.mul_vec(&state.p.values));
        let rho2 = state.rho * state.rho;
        let two = T::lit(2.0);
        let w = prm.fprime_weight();
        let e_theorem = prm.lambda * grad_phi + u2 + prm.tau * prm.tau * grad_p + two * w * rho2;
        let grad_mu = dot(&state.mu.values, &self.stiff_s.mul_vec(&state.mu.values));
        let grad_ut = dot(&state.u_tilde.values, &self.stiff_v.mul_vec(&state.u_tilde.values));
        let dissipation_bound = two * prm.mobility * prm.tau * grad_mu + two * prm.nu * prm.tau * grad_ut;
        let mass = dot(&self.lumped_mass, &state.phi.values);
        let sav_ratio = state.rho / e1.sqrt();
        EnergyReport {
            e_modified: e_theorem / two,
            e_theorem,
            dissipation_bound,
            mass,
            rho: state.rho,
            sav_ratio,
        }
    }

    /// `‖Gᵀu‖`: the discrete divergence of `u` tested against every pressure basis function.
    pub fn divergence_residual(&self, u: &Field<T>) -> T {
        crate::real::norm2(&self.projection.divergence(&u.values))
    }
}

/// Solver diagnostics of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo<T> {
    pub ch_iterations: usize,
    pub velocity_iterations: usize,
    pub projection: ProjectionStats<T>,
}

/// Position in `outer.values` of every entry of `inner`, which must be a
/// sub-pattern of `outer`.
fn csr_slots<T: Real>(outer: &SparseMatrix<T>, inner: &SparseMatrix<T>) -> Vec<usize> {
    let mut slots = Vec::with_capacity(inner.col_idx.len());
    for i in 0..inner.n_rows {
        let cols = &outer.col_idx[outer.row_ptr[i]..outer.row_ptr[i + 1]];
        for &j in &inner.col_idx[inner.row_ptr[i]..inner.row_ptr[i + 1]] {
            let k = cols
                .binary_search(&j)
                .expect("convection pattern inside the block pattern");
            slots.push(outer.row_ptr[i] + k);
        }
    }
    slots
}

/// `E₁(φ) + C₀` by quadrature of `F(φ_h)`.
pub fn compute_e1<T: Real>(
    mesh: &Mesh<T>,
    phi: &Field<T>,
    params: &SchemeParams<T>,
    quad: &QuadratureRule<T>,
) -> Result<T, SchemeError> {
    let k = T::one() / (T::lit(4.0) * params.epsilon * params.epsilon);
    let e1 = crate::assembly::integrate_field(mesh, phi, quad, |_, v, _| {
        let s = v[0] * v[0] - T::one();
        k * s * s
    })?;
    Ok(e1 + params.c0)
}

/// Root of `2ρ² - 2ρⁿρ + c = 0` whose ratio to `sqrt_e1` is closest to one.
///
/// A negative discriminant is clamped to zero only when it is within
/// roundoff, `|b² - 4ac| ≤ 1e-12 (b² + |4ac|)`; otherwise, or when no root is
/// positive, the step has broken down.
pub fn solve_sav_quadratic<T: Real>(rho_n: T, c: T, sqrt_e1: T) -> Result<T, SchemeError> {
    let (a, b) = (T::lit(2.0), -T::lit(2.0) * rho_n);
    let four_ac = T::lit(4.0) * a * c;
    let mut disc = b * b - four_ac;
    let breakdown = || SchemeError::SavBreakdown {
        rho_n: rho_n.as_f64(),
        c: c.as_f64(),
        discriminant: (b * b - four_ac).as_f64(),
    };
    if !disc.is_finite() {
        return Err(breakdown());
    }
    if disc < T::zero() {
        if -disc <= T::lit(1e-12) * (b * b + four_ac.abs()) {
            disc = T::zero();
        } else {
            return Err(breakdown());
        }
    }
    let sq = disc.sqrt();
    let roots = [(-b + sq) / (a + a), (-b - sq) / (a + a)];
    roots
        .iter()
        .copied()
        .filter(|r| *r > T::zero())
        .min_by(|x, y| {
            let dx = (*x / sqrt_e1 - T::one()).abs();
            let dy = (*y / sqrt_e1 - T::one()).abs();
            dx.partial_cmp(&dy).expect("finite ratios")
        })
        .ok_or_else(breakdown)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_examples() {
        assert_eq!(solve_sav_quadratic(0.7, 0.0, 0.7).unwrap(), 0.7);
        assert_eq!(solve_sav_quadratic(2.0, -6.0, 3.0).unwrap(), 3.0);
        assert!(matches!(
            solve_sav_quadratic(1.0, 10.0, 1.0),
            Err(SchemeError::SavBreakdown { .. })
        ));
        // double root after clamping roundoff
        let r: f64 = solve_sav_quadratic(1.0, 0.5 * (1.0 + 1e-14), 1.0).unwrap();
        assert!((r - 0.5).abs() < 1e-6);
    }

    #[test]
    fn params_validation() {
        let mut p = SchemeParams::new(0.1, 0.04, 0.01, 0.2, 1e-3);
        assert!(p.validate().is_ok());
        p.tau = -1.0;
        assert!(p.validate().is_err());
        p.tau = 1e-3;
        p.epsilon = 1.5;
        assert!(p.validate().is_err());
    }
}
