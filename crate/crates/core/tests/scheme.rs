use chns_core::assembly::{interpolate, Field};
use chns_core::mesh::build_rect_mesh;
use chns_core::scheme::{EnergyReport as Report, SchemeError};
use chns_core::{Rect, Scheme, SchemeParams, State};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scheme(n: usize, params: SchemeParams) -> Scheme {
    Scheme::new(build_rect_mesh(Rect::unit(), n, n).unwrap(), params).unwrap()
}

fn square_params(tau: f64) -> SchemeParams {
    SchemeParams::new(0.002, 0.1, 1.0, 0.01, tau)
}

fn square_bubble(s: &Scheme) -> State {
    let phi = interpolate(&s.spaces.scalar, |[x, y]| {
        if (0.25..=0.75).contains(&x) && (0.25..=0.75).contains(&y) {
            1.0
        } else {
            -1.0
        }
    });
    s.initial_state(phi, Field::zeros(s.spaces.vector.clone()), 0.0)
        .unwrap()
}

fn random_state(s: &Scheme, seed: u64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sp = &s.spaces;
    let mut scalar = || {
        Field::new(
            sp.scalar.clone(),
            (0..sp.scalar.n_dofs).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    };
    let (phi, mu, p) = (scalar(), scalar(), scalar());
    let mask = sp.vector.is_boundary_mask();
    let u_raw: Vec<f64> = (0..sp.vector.n_dofs)
        .map(|d| if mask[d] { 0.0 } else { rng.gen_range(-1.0..1.0) })
        .collect();
    let (_, u, _) = s.projection.project(&u_raw, s.params.tau).unwrap();
    let u = Field::new(sp.vector.clone(), u).unwrap();
    let rho = s.compute_e1(&phi).unwrap().sqrt();
    State {
        phi,
        mu,
        p,
        u_tilde: u.clone(),
        u,
        rho,
        t: 0.0,
        step: 0,
    }
}

#[test]
fn pure_phase_is_stationary() {
    let s = scheme(4, square_params(1e-3));
    let phi = Field::constant(s.spaces.scalar.clone(), 1.0);
    let state = s
        .initial_state(phi, Field::zeros(s.spaces.vector.clone()), 0.0)
        .unwrap();
    assert!(state.mu.values.iter().all(|v| v.abs() <= 1e-12));
    let ch = s.step_cahn_hilliard(&state, None).unwrap();
    assert!(ch.phi.values.iter().all(|v| (v - 1.0).abs() <= 1e-12));
    assert!(ch.mu.values.iter().all(|v| v.abs() <= 1e-12));
    let (next, _, _) = s.advance(&state, None).unwrap();
    assert!(next.phi.values.iter().all(|v| (v - 1.0).abs() <= 1e-12));
    assert!(next.u.values.iter().all(|v| v.abs() <= 1e-12));
    assert!(next.p.values.iter().all(|v| v.abs() <= 1e-12));
    assert!((next.rho - state.rho).abs() <= 1e-12);
}

#[test]
fn velocity_without_forcing_stays_zero() {
    let s = scheme(4, square_params(1e-3));
    let phi = Field::constant(s.spaces.scalar.clone(), 0.3);
    let mut state = s
        .initial_state(phi.clone(), Field::zeros(s.spaces.vector.clone()), 0.0)
        .unwrap();
    state.p = Field::zeros(s.spaces.scalar.clone());
    let mu = Field::constant(s.spaces.scalar.clone(), -2.0);
    let vel = s.step_velocity(&state, &phi, &mu, None).unwrap();
    assert!(vel.u_tilde.values.iter().all(|v| v.abs() <= 1e-14));
}

#[test]
fn projection_examples() {
    let s = scheme(4, square_params(1e-3));
    let state = random_state(&s, 3);
    let zero = Field::zeros(s.spaces.vector.clone());
    let (p, u, _) = s.step_projection(&state, &zero).unwrap();
    assert!(u.values.iter().all(|v| *v == 0.0));
    assert!(p
        .values
        .iter()
        .zip(&state.p.values)
        .all(|(a, b)| (a - b).abs() <= 1e-14));

    // an already solenoidal field is left alone
    let (p, u, stats) = s.step_projection(&state, &state.u).unwrap();
    assert!(stats.divergence_before <= 1e-12);
    assert!(u
        .values
        .iter()
        .zip(&state.u.values)
        .all(|(a, b)| (a - b).abs() <= 1e-12));
    assert!(p.values.iter().zip(&state.p.values).all(|(a, b)| (a - b).abs() <= 1e-9));
}

#[test]
fn step_one_ignores_pressure_and_auxiliary_variable() {
    let s = scheme(5, square_params(1e-3));
    let state = random_state(&s, 4);
    let base = s.step_cahn_hilliard(&state, None).unwrap();
    let mut other = state.clone();
    other.p.values.iter_mut().for_each(|v| *v += 3.0 * *v + 1.0);
    other.rho *= 7.0;
    other.u_tilde.values.iter_mut().for_each(|v| *v = -*v);
    let moved = s.step_cahn_hilliard(&other, None).unwrap();
    assert_eq!(base.phi.values, moved.phi.values);
    assert_eq!(base.mu.values, moved.mu.values);
}

#[test]
fn step_two_ignores_old_phase_and_potential() {
    let s = scheme(5, square_params(1e-3));
    let state = random_state(&s, 5);
    let ch = s.step_cahn_hilliard(&state, None).unwrap();
    let base = s.step_velocity(&state, &ch.phi, &ch.mu, None).unwrap();
    let mut other = state.clone();
    other.phi.values.iter_mut().for_each(|v| *v = 0.5 - *v);
    other.mu.values.iter_mut().for_each(|v| *v *= -4.0);
    let moved = s.step_velocity(&other, &ch.phi, &ch.mu, None).unwrap();
    assert_eq!(base.u_tilde.values, moved.u_tilde.values);
}

#[test]
fn phase_step_conserves_mass() {
    let mut params = square_params(1e-3);
    params.solver.rel_tol = 1e-12;
    let s = scheme(8, params);
    let state = random_state(&s, 6);
    assert!(s.divergence_residual(&state.u) <= 1e-12);
    let ch = s.step_cahn_hilliard(&state, None).unwrap();
    let before: f64 = s.lumped_mass.iter().zip(&state.phi.values).map(|(a, b)| a * b).sum();
    let after: f64 = s.lumped_mass.iter().zip(&ch.phi.values).map(|(a, b)| a * b).sum();
    assert!((after - before).abs() <= 1e-9, "{:e}", after - before);
}

#[test]
fn energy_report_examples() {
    let mut params = SchemeParams::new(0.1, 1.0, 0.01, 0.2, 1e-3);
    params.c0 = 0.7;
    let s = scheme(3, params);
    let mut state = s
        .initial_state(
            Field::constant(s.spaces.scalar.clone(), 1.0),
            Field::zeros(s.spaces.vector.clone()),
            0.0,
        )
        .unwrap();
    assert!((state.rho - 0.7f64.sqrt()).abs() <= 1e-14);
    let r = s.energy_report(&state).unwrap();
    assert!((r.e_theorem - 1.4).abs() <= 1e-13);
    assert!((r.e_modified - 0.7).abs() <= 1e-13);
    assert!((r.sav_ratio - 1.0).abs() <= 1e-13);

    state.phi = Field::zeros(s.spaces.scalar.clone());
    state.mu = Field::zeros(s.spaces.scalar.clone());
    state.rho = 0.0;
    let r = s.energy_report(&state).unwrap();
    for v in [
        r.e_modified,
        r.e_theorem,
        r.dissipation_bound,
        r.mass,
        r.rho,
        r.sav_ratio,
    ] {
        assert_eq!(v, 0.0);
    }
}

fn check_energy_law(s: &Scheme, state: State, steps: usize) -> Result<(), SchemeError> {
    let mut prev: Report<f64> = s.energy_report(&state)?;
    let e0 = prev.e_theorem;
    let m0 = prev.mass;
    let mut state = state;
    for _ in 0..steps {
        let (next, rep, info) = s.advance(&state, None)?;
        let defect = Report::energy_law_defect(&prev, &rep);
        assert!(defect <= 1e-9 * e0, "step {}: defect {defect:e}", next.step);
        assert!((rep.mass - m0).abs() <= 1e-8);
        assert!(info.projection.divergence <= 10.0 * s.params.solver.rel_tol);
        prev = rep;
        state = next;
    }
    Ok(())
}

#[test]
fn square_bubble_obeys_energy_law() {
    let s = scheme(16, square_params(1e-5));
    let state = square_bubble(&s);
    check_energy_law(&s, state, 30).unwrap();
}

#[test]
fn ellipse_without_force_obeys_energy_law() {
    let mesh = build_rect_mesh(Rect::centered_square(0.4), 16, 16).unwrap();
    let s = Scheme::new(mesh, SchemeParams::new(0.1, 0.1, 1.0, 0.01, 1e-6)).unwrap();
    let phi = interpolate(&s.spaces.scalar, |[x, y]| (x * x / 0.01 + y * y / 0.0225 - 1.0).tanh());
    let state = s
        .initial_state(phi, Field::zeros(s.spaces.vector.clone()), 0.0)
        .unwrap();
    check_energy_law(&s, state, 30).unwrap();
}
