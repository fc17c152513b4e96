//! Manufactured solutions on the unit square, discrete error norms and
//! convergence-rate studies.
//!
//! The exact fields are
//!
//! ```text
//! φ = 2 + sin t cos πx cos πy
//! u = sin t (π sin²πx sin 2πy, -π sin²πy sin 2πx)
//! p = sin t cos πx sin πy
//! μ = -λΔφ + λ_F F'(φ)
//! ```
//!
//! and the sources that make them solve the continuous system are supplied
//! through [`Forcing`].

use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

use crate::assembly::{interpolate, interpolate_vector, AssemblyError, Field};
use crate::fe::QuadratureRule;
use crate::mesh::{build_rect_mesh, Mesh, MeshError, Rect};
use crate::real::Real;
use crate::scheme::{Forcing, Scheme, SchemeError, SchemeParams, State};

/// Pointwise value and gradient of an exact field; scalars use component 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<T> {
    pub value: [T; 2],
    pub grad: [[T; 2]; 2],
}

impl<T: Real> Sample<T> {
    pub fn scalar(value: T, grad: [T; 2]) -> Self {
        Sample {
            value: [value, T::zero()],
            grad: [grad, [T::zero(); 2]],
        }
    }
}

/// The manufactured solution for one parameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactSolution<T> {
    pub mobility: T,
    pub lambda: T,
    pub nu: T,
    pub epsilon: T,
    pub c0: T,
    /// Coefficient of `F'` in `μ`.
    pub fprime_weight: T,
}

impl<T: Real> ExactSolution<T> {
    pub fn new(params: &SchemeParams<T>) -> Self {
        ExactSolution {
            mobility: params.mobility,
            lambda: params.lambda,
            nu: params.nu,
            epsilon: params.epsilon,
            c0: params.c0,
            fprime_weight: params.fprime_weight(),
        }
    }

    fn pi() -> T {
        T::lit(PI)
    }

    fn trig(x: [T; 2]) -> ([T; 2], [T; 2]) {
        let pi = Self::pi();
        let (sx, cx) = (pi * x[0]).sin_cos();
        let (sy, cy) = (pi * x[1]).sin_cos();
        ([sx, sy], [cx, cy])
    }

    pub fn phi(&self, t: T, x: [T; 2]) -> T {
        let (_, c) = Self::trig(x);
        T::lit(2.0) + t.sin() * c[0] * c[1]
    }

    pub fn grad_phi(&self, t: T, x: [T; 2]) -> [T; 2] {
        let (s, c) = Self::trig(x);
        let k = -Self::pi() * t.sin();
        [k * s[0] * c[1], k * c[0] * s[1]]
    }

    pub fn lap_phi(&self, t: T, x: [T; 2]) -> T {
        let (_, c) = Self::trig(x);
        let pi = Self::pi();
        -T::lit(2.0) * pi * pi * t.sin() * c[0] * c[1]
    }

    pub fn phi_t(&self, t: T, x: [T; 2]) -> T {
        let (_, c) = Self::trig(x);
        t.cos() * c[0] * c[1]
    }

    fn fprime(&self, phi: T) -> (T, T, T) {
        let e2 = self.epsilon * self.epsilon;
        (
            (phi * phi * phi - phi) / e2,
            (T::lit(3.0) * phi * phi - T::one()) / e2,
            T::lit(6.0) * phi / e2,
        )
    }

    pub fn mu(&self, t: T, x: [T; 2]) -> T {
        let (f1, _, _) = self.fprime(self.phi(t, x));
        -self.lambda * self.lap_phi(t, x) + self.fprime_weight * f1
    }

    pub fn grad_mu(&self, t: T, x: [T; 2]) -> [T; 2] {
        // ∇(-λΔφ) = 2π²λ∇φ for this φ
        let pi = Self::pi();
        let (_, f2, _) = self.fprime(self.phi(t, x));
        let k = T::lit(2.0) * pi * pi * self.lambda + self.fprime_weight * f2;
        let g = self.grad_phi(t, x);
        [k * g[0], k * g[1]]
    }

    pub fn lap_mu(&self, t: T, x: [T; 2]) -> T {
        let pi = Self::pi();
        let (_, f2, f3) = self.fprime(self.phi(t, x));
        let lap = self.lap_phi(t, x);
        let g = self.grad_phi(t, x);
        let g2 = g[0] * g[0] + g[1] * g[1];
        T::lit(2.0) * pi * pi * self.lambda * lap + self.fprime_weight * (f2 * lap + f3 * g2)
    }

    fn u_shape(x: [T; 2]) -> [T; 2] {
        let pi = Self::pi();
        let (s, _) = Self::trig(x);
        let two = T::lit(2.0);
        [
            pi * s[0] * s[0] * (two * pi * x[1]).sin(),
            -pi * s[1] * s[1] * (two * pi * x[0]).sin(),
        ]
    }

    pub fn u(&self, t: T, x: [T; 2]) -> [T; 2] {
        let v = Self::u_shape(x);
        [t.sin() * v[0], t.sin() * v[1]]
    }

    pub fn u_t(&self, t: T, x: [T; 2]) -> [T; 2] {
        let v = Self::u_shape(x);
        [t.cos() * v[0], t.cos() * v[1]]
    }

    /// `grad[c] = ∇u_c`.
    pub fn grad_u(&self, t: T, x: [T; 2]) -> [[T; 2]; 2] {
        let pi = Self::pi();
        let two = T::lit(2.0);
        let (s, _) = Self::trig(x);
        let (s2x, c2x) = (two * pi * x[0]).sin_cos();
        let (s2y, c2y) = (two * pi * x[1]).sin_cos();
        let k = pi * pi * t.sin();
        [
            [k * s2x * s2y, two * k * s[0] * s[0] * c2y],
            [-two * k * s[1] * s[1] * c2x, -k * s2x * s2y],
        ]
    }

    pub fn lap_u(&self, t: T, x: [T; 2]) -> [T; 2] {
        let pi = Self::pi();
        let two = T::lit(2.0);
        let four = T::lit(4.0);
        let (s, _) = Self::trig(x);
        let s2x = (two * pi * x[0]).sin();
        let s2y = (two * pi * x[1]).sin();
        let k = two * pi * pi * pi * t.sin();
        [
            k * s2y * (T::one() - four * s[0] * s[0]),
            -k * s2x * (T::one() - four * s[1] * s[1]),
        ]
    }

    pub fn div_u(&self, t: T, x: [T; 2]) -> T {
        let g = self.grad_u(t, x);
        g[0][0] + g[1][1]
    }

    pub fn p(&self, t: T, x: [T; 2]) -> T {
        let (s, c) = Self::trig(x);
        t.sin() * c[0] * s[1]
    }

    pub fn grad_p(&self, t: T, x: [T; 2]) -> [T; 2] {
        let (s, c) = Self::trig(x);
        let k = Self::pi() * t.sin();
        [-k * s[0] * s[1], k * c[0] * c[1]]
    }

    /// `E₁(φ(t))` on the unit square in closed form.
    pub fn e1(&self, t: T) -> T {
        let s2 = t.sin() * t.sin();
        let v = T::lit(9.0) + T::lit(22.0) * s2 / T::lit(4.0) + T::lit(9.0) * s2 * s2 / T::lit(64.0);
        v / (T::lit(4.0) * self.epsilon * self.epsilon)
    }

    /// `√(E₁(φ(t)) + C₀)`.
    pub fn rho(&self, t: T) -> T {
        (self.e1(t) + self.c0).sqrt()
    }

    /// `φ_t + u·∇φ - MΔμ`.
    pub fn forcing_phi(&self, t: T, x: [T; 2]) -> T {
        let u = self.u(t, x);
        let g = self.grad_phi(t, x);
        self.phi_t(t, x) + u[0] * g[0] + u[1] * g[1] - self.mobility * self.lap_mu(t, x)
    }

    /// `u_t + (u·∇)u - νΔu + ∇p - μ∇φ`.
    pub fn forcing_u(&self, t: T, x: [T; 2]) -> [T; 2] {
        let u = self.u(t, x);
        let ut = self.u_t(t, x);
        let gu = self.grad_u(t, x);
        let lu = self.lap_u(t, x);
        let gp = self.grad_p(t, x);
        let gphi = self.grad_phi(t, x);
        let mu = self.mu(t, x);
        let mut f = [T::zero(); 2];
        for c in 0..2 {
            let adv = u[0] * gu[c][0] + u[1] * gu[c][1];
            f[c] = ut[c] + adv - self.nu * lu[c] + gp[c] - mu * gphi[c];
        }
        f
    }

    pub fn phi_sample(&self, t: T, x: [T; 2]) -> Sample<T> {
        Sample::scalar(self.phi(t, x), self.grad_phi(t, x))
    }

    pub fn mu_sample(&self, t: T, x: [T; 2]) -> Sample<T> {
        Sample::scalar(self.mu(t, x), self.grad_mu(t, x))
    }

    pub fn p_sample(&self, t: T, x: [T; 2]) -> Sample<T> {
        Sample::scalar(self.p(t, x), self.grad_p(t, x))
    }

    pub fn u_sample(&self, t: T, x: [T; 2]) -> Sample<T> {
        Sample {
            value: self.u(t, x),
            grad: self.grad_u(t, x),
        }
    }
}

impl<T: Real> Forcing<T> for ExactSolution<T> {
    fn phi(&self, t: T, x: [T; 2]) -> T {
        self.forcing_phi(t, x)
    }

    fn velocity(&self, t: T, x: [T; 2]) -> [T; 2] {
        self.forcing_u(t, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L2,
    H1Semi,
}

/// `‖field - exact‖` in the chosen norm by quadrature.
pub fn error_norm<T: Real>(
    mesh: &Mesh<T>,
    field: &Field<T>,
    quad: &QuadratureRule<T>,
    norm: Norm,
    exact: impl Fn([T; 2]) -> Sample<T>,
) -> Result<T, AssemblyError> {
    Ok(error_integral(mesh, field, quad, norm, exact, false)?.sqrt())
}

/// As [`error_norm`] in `L²`, after removing the mean of the difference.
pub fn error_norm_mean_free<T: Real>(
    mesh: &Mesh<T>,
    field: &Field<T>,
    quad: &QuadratureRule<T>,
    exact: impl Fn([T; 2]) -> Sample<T>,
) -> Result<T, AssemblyError> {
    Ok(error_integral(mesh, field, quad, Norm::L2, exact, true)?.sqrt())
}

fn error_integral<T: Real>(
    mesh: &Mesh<T>,
    field: &Field<T>,
    quad: &QuadratureRule<T>,
    norm: Norm,
    exact: impl Fn([T; 2]) -> Sample<T>,
    mean_free: bool,
) -> Result<T, AssemblyError> {
    let comps = field.kind().components();
    let shift = if mean_free {
        let diff = crate::assembly::integrate_field(mesh, field, quad, |x, v, _| v[0] - exact(x).value[0])?;
        diff / mesh.domain.area()
    } else {
        T::zero()
    };
    crate::assembly::integrate_field(mesh, field, quad, |x, v, g| {
        let e = exact(x);
        let mut s = T::zero();
        for c in 0..comps {
            match norm {
                Norm::L2 => {
                    let d = v[c] - e.value[c] - shift;
                    s += d * d;
                }
                Norm::H1Semi => {
                    for k in 0..2 {
                        let d = g[c][k] - e.grad[c][k];
                        s += d * d;
                    }
                }
            }
        }
        s
    })
}

/// The quantities tracked by a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrackedNorm {
    /// `max_n ‖φ - φ_h‖`
    PhiL2,
    /// `max_n ‖u - u_h‖`
    VelocityL2,
    /// `(τ Σ ‖μ - μ_h‖²)^½`
    MuL2,
    /// `(τ Σ ‖p - p_h‖²)^½`, mean removed
    PressureL2,
    /// `max_n ‖∇(u - u_h)‖`
    VelocityH1,
    /// `max_n |ρ(tⁿ) - ρⁿ|`
    Rho,
}

impl TrackedNorm {
    pub const ALL: [TrackedNorm; 6] = [
        TrackedNorm::PhiL2,
        TrackedNorm::VelocityL2,
        TrackedNorm::MuL2,
        TrackedNorm::PressureL2,
        TrackedNorm::VelocityH1,
        TrackedNorm::Rho,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TrackedNorm::PhiL2 => "phi_linf_l2",
            TrackedNorm::VelocityL2 => "u_linf_l2",
            TrackedNorm::MuL2 => "mu_l2_l2",
            TrackedNorm::PressureL2 => "p_l2_l2",
            TrackedNorm::VelocityH1 => "grad_u_linf_l2",
            TrackedNorm::Rho => "rho_linf",
        }
    }
}

impl fmt::Display for TrackedNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Accumulated errors of one manufactured run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunErrors<T> {
    pub phi_l2: T,
    pub u_l2: T,
    pub mu_l2: T,
    pub p_l2: T,
    pub u_h1: T,
    pub rho: T,
    /// `max_n |ρⁿ / √(E₁(φⁿ) + C₀) - 1|`
    pub sav_deviation: T,
    pub steps: usize,
    pub tau: T,
}

impl<T: Real> RunErrors<T> {
    pub fn get(&self, norm: TrackedNorm) -> T {
        match norm {
            TrackedNorm::PhiL2 => self.phi_l2,
            TrackedNorm::VelocityL2 => self.u_l2,
            TrackedNorm::MuL2 => self.mu_l2,
            TrackedNorm::PressureL2 => self.p_l2,
            TrackedNorm::VelocityH1 => self.u_h1,
            TrackedNorm::Rho => self.rho,
        }
    }
}

#[derive(Debug, Error)]
pub enum VerificationError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error("resolutions must double at every level, got {0:?}")]
    BadResolutions(Vec<usize>),
}

/// Runs the manufactured problem on an `n x n` unit-square mesh with `steps`
/// steps of size `tau`, starting from the interpolated exact data at `t = 0`.
pub fn manufactured_run<T: Real>(
    n: usize,
    params: &SchemeParams<T>,
    tau: T,
    steps: usize,
) -> Result<RunErrors<T>, VerificationError> {
    let mut params = params.clone();
    params.tau = tau;
    let exact = ExactSolution::new(&params);
    let mesh = build_rect_mesh(Rect::unit(), n, n)?;
    let scheme = Scheme::new(mesh, params)?;
    let phi0 = interpolate(&scheme.spaces.scalar, |x| exact.phi(T::zero(), x));
    let u0 = interpolate_vector(&scheme.spaces.vector, |x| exact.u(T::zero(), x));
    let mut state = scheme.initial_state(phi0, u0, T::zero())?;

    let mut out = RunErrors {
        phi_l2: T::zero(),
        u_l2: T::zero(),
        mu_l2: T::zero(),
        p_l2: T::zero(),
        u_h1: T::zero(),
        rho: T::zero(),
        sav_deviation: T::zero(),
        steps,
        tau,
    };
    let (mut mu_sum, mut p_sum) = (T::zero(), T::zero());
    let mut record = |scheme: &Scheme<T>, state: &State<T>, sav_ratio: T| -> Result<(), VerificationError> {
        let (mesh, quad, t) = (&scheme.mesh, &scheme.quad, state.t);
        let e_phi = error_norm(mesh, &state.phi, quad, Norm::L2, |x| exact.phi_sample(t, x))?;
        let e_u = error_norm(mesh, &state.u, quad, Norm::L2, |x| exact.u_sample(t, x))?;
        let e_gu = error_norm(mesh, &state.u, quad, Norm::H1Semi, |x| exact.u_sample(t, x))?;
        out.phi_l2 = out.phi_l2.max(e_phi);
        out.u_l2 = out.u_l2.max(e_u);
        out.u_h1 = out.u_h1.max(e_gu);
        out.rho = out.rho.max((state.rho - exact.rho(t)).abs());
        out.sav_deviation = out.sav_deviation.max((sav_ratio - T::one()).abs());
        if state.step > 0 {
            let e_mu = error_norm(mesh, &state.mu, quad, Norm::L2, |x| exact.mu_sample(t, x))?;
            let e_p = error_norm_mean_free(mesh, &state.p, quad, |x| exact.p_sample(t, x))?;
            mu_sum += e_mu * e_mu;
            p_sum += e_p * e_p;
        }
        Ok(())
    };
    let report = scheme.energy_report(&state)?;
    record(&scheme, &state, report.sav_ratio)?;
    for _ in 0..steps {
        let (next, report, _) = scheme.advance(&state, Some(&exact))?;
        state = next;
        record(&scheme, &state, report.sav_ratio)?;
    }
    out.mu_l2 = (tau * mu_sum).sqrt();
    out.p_l2 = (tau * p_sum).sqrt();
    Ok(out)
}

/// Errors and observed orders for a sequence of halving mesh sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable<T> {
    /// Cells per side of each level; `h = 1/n`.
    pub resolutions: Vec<usize>,
    pub runs: Vec<RunErrors<T>>,
}

impl<T: Real> RateTable<T> {
    pub fn h(&self, level: usize) -> T {
        T::one() / T::from_usize_lossy(self.resolutions[level])
    }

    pub fn error(&self, norm: TrackedNorm, level: usize) -> T {
        self.runs[level].get(norm)
    }

    /// `log(e_{k-1}/e_k) / log(h_{k-1}/h_k)`; `None` on the first level.
    pub fn rate(&self, norm: TrackedNorm, level: usize) -> Option<T> {
        if level == 0 || level >= self.runs.len() {
            return None;
        }
        let ratio = self.error(norm, level - 1) / self.error(norm, level);
        Some(ratio.ln() / (self.h(level - 1) / self.h(level)).ln())
    }

    /// Rate between the two finest completed levels.
    pub fn finest_rate(&self, norm: TrackedNorm) -> Option<T> {
        self.runs.len().checked_sub(1).and_then(|k| self.rate(norm, k))
    }
}

/// A study that stopped early keeps the levels it finished.
#[derive(Debug, Error)]
#[error("convergence study stopped at n = {failed_at}: {source}")]
pub struct StudyError<T: fmt::Debug> {
    pub partial: RateTable<T>,
    pub failed_at: usize,
    #[source]
    pub source: VerificationError,
}

/// Number of steps of size `τ ≈ h³` that reach `t_final` exactly.
pub fn steps_for(n: usize, t_final: f64) -> usize {
    let h = 1.0 / n as f64;
    (t_final / (h * h * h)).ceil().max(1.0) as usize
}

/// Runs [`manufactured_run`] at each resolution with `τ = T/⌈T/h³⌉`.
pub fn convergence_study<T: Real>(
    resolutions: &[usize],
    params: &SchemeParams<T>,
    t_final: T,
) -> Result<RateTable<T>, StudyError<T>> {
    convergence_study_with(resolutions, params, t_final, |_, _| {})
}

/// [`convergence_study`] with a callback after each finished level.
pub fn convergence_study_with<T: Real>(
    resolutions: &[usize],
    params: &SchemeParams<T>,
    t_final: T,
    mut on_level: impl FnMut(usize, &RunErrors<T>),
) -> Result<RateTable<T>, StudyError<T>> {
    let mut table = RateTable {
        resolutions: Vec::new(),
        runs: Vec::new(),
    };
    let doubling = !resolutions.is_empty() && resolutions.windows(2).all(|w| w[1] == 2 * w[0]) && resolutions[0] > 0;
    if !doubling {
        return Err(StudyError {
            partial: table,
            failed_at: resolutions.first().copied().unwrap_or(0),
            source: VerificationError::BadResolutions(resolutions.to_vec()),
        });
    }
    for &n in resolutions {
        let steps = steps_for(n, t_final.as_f64());
        let tau = t_final / T::from_usize_lossy(steps);
        match manufactured_run(n, params, tau, steps) {
            Ok(run) => {
                on_level(n, &run);
                table.resolutions.push(n);
                table.runs.push(run);
            }
            Err(source) => {
                return Err(StudyError {
                    partial: table,
                    failed_at: n,
                    source,
                })
            }
        }
    }
    Ok(table)
}

/// Area, first and second moments of the region `{φ_h < 0}`, with the
/// zero level set of the piecewise-linear `φ_h` resolved exactly per triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionMoments<T> {
    pub area: T,
    pub centroid: [T; 2],
    /// `∫ (x - x̄)²` and `∫ (y - ȳ)²`.
    pub central: [T; 2],
}

impl<T: Real> RegionMoments<T> {
    /// `∫ (x - x̄)² / ∫ (y - ȳ)²`; `1` for a disc.
    pub fn anisotropy(&self) -> T {
        self.central[0] / self.central[1]
    }
}

pub fn negative_region_moments<T: Real>(mesh: &Mesh<T>, phi: &Field<T>) -> Result<RegionMoments<T>, AssemblyError> {
    if phi.kind() != crate::fe::ElementKind::P1Scalar || !phi.dofmap.matches(mesh) {
        return Err(AssemblyError::WrongSpace {
            expected: crate::fe::ElementKind::P1Scalar,
            got: phi.kind(),
        });
    }
    // ∫1, ∫x, ∫y, ∫x², ∫y²
    let mut m = [T::zero(); 5];
    let mut poly: Vec<[T; 2]> = Vec::with_capacity(4);
    for tri in &mesh.triangles {
        let p = tri.map(|v| mesh.vertices[v]);
        let f = tri.map(|v| phi.values[v]);
        poly.clear();
        for i in 0..3 {
            let j = (i + 1) % 3;
            if f[i] < T::zero() {
                poly.push(p[i]);
            }
            if (f[i] < T::zero()) != (f[j] < T::zero()) {
                let s = f[i] / (f[i] - f[j]);
                poly.push([p[i][0] + s * (p[j][0] - p[i][0]), p[i][1] + s * (p[j][1] - p[i][1])]);
            }
        }
        for k in 1..poly.len().saturating_sub(1) {
            let (a, b, c) = (poly[0], poly[k], poly[k + 1]);
            let area = ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs() / T::lit(2.0);
            // edge midpoints integrate quadratics exactly
            let mids = [
                [(a[0] + b[0]) / T::lit(2.0), (a[1] + b[1]) / T::lit(2.0)],
                [(b[0] + c[0]) / T::lit(2.0), (b[1] + c[1]) / T::lit(2.0)],
                [(c[0] + a[0]) / T::lit(2.0), (c[1] + a[1]) / T::lit(2.0)],
            ];
            let w = area / T::lit(3.0);
            m[0] += area;
            for q in mids {
                m[1] += w * q[0];
                m[2] += w * q[1];
                m[3] += w * q[0] * q[0];
                m[4] += w * q[1] * q[1];
            }
        }
    }
    let area = m[0];
    let centroid = [m[1] / area, m[2] / area];
    Ok(RegionMoments {
        area,
        centroid,
        central: [
            m[3] - area * centroid[0] * centroid[0],
            m[4] - area * centroid[1] * centroid[1],
        ],
    })
}

/// Parameters of the manufactured test: `M = 0.1`, `λ = 0.04`, `ε = 0.2`,
/// `ν = 0.01`, with `τ` set per level.
pub fn manufactured_params<T: Real>() -> SchemeParams<T> {
    SchemeParams::new(T::lit(0.1), T::lit(0.04), T::lit(0.01), T::lit(0.2), T::lit(1e-3))
}
