//! Closed-form and refinement oracles for the time stepper and the control runs.

use cbf_core::control::{self, ControlParams};
use cbf_core::evolution::{self, estimate_quantities, Forcing, Scheme, StepperConfig};
use cbf_core::random::FieldSampler;
use cbf_core::spectral::{enstrophy, stokes_symbol};
use cbf_core::standard::{shear_mode, taylor_green};
use cbf_core::tolerances::Tolerances;
use cbf_core::{FluidParams, PotentialSpec, SpectralField, TorusGrid};

fn grid(n: usize) -> TorusGrid {
    TorusGrid::new(2, n).unwrap()
}

#[test]
fn global_error_is_first_order_for_both_schemes() {
    let g = grid(8);
    let p = FluidParams::new(0.5, 1.0, 3.0, 2).unwrap();
    let y0 = FieldSampler::new(4).smooth(&g, 1.0, 1.0);
    let phi = PotentialSpec::EnstrophyIndicator { varpi: enstrophy(&y0) * 0.9 };
    let y0 = cbf_core::potential::project_enstrophy_ball(&y0, enstrophy(&y0) * 0.9).unwrap();
    let t_end = 0.01;
    for scheme in [Scheme::ExplicitPhi, Scheme::SemiImplicitPhi] {
        let run = |dt: f64| {
            let cfg = StepperConfig::new(dt, t_end, 0.1, scheme).unwrap();
            evolution::simulate(&y0, &Forcing::None, &p, &phi, &cfg).unwrap().final_state().unwrap().clone()
        };
        let reference = run(1e-5);
        let e1 = (&run(1e-3) - &reference).norm_h();
        let e2 = (&run(5e-4) - &reference).norm_h();
        let order = (e1 / e2).log2();
        assert!(order >= 0.9, "{scheme:?}: order {order} ({e1:e}, {e2:e})");
    }
}

#[test]
fn forced_norm_stays_under_growth_envelope() {
    let g = grid(16);
    let p = FluidParams::new(0.05, 0.5, 2.0, 2).unwrap();
    let y0 = taylor_green(&g, 0.5);
    let f = taylor_green(&g, 5.0);
    let cfg = StepperConfig::new(1e-3, 0.5, 1.0, Scheme::SemiImplicitPhi).unwrap();
    let traj = evolution::simulate(&y0, &Forcing::Constant(f.clone()), &p, &PotentialSpec::None, &cfg).unwrap();
    // d/dt ||y|| <= ||f|| gives ||y(t)|| <= ||y0|| + t ||f||.
    for (t, n) in traj.times.iter().zip(&traj.norm_series) {
        assert!(n.h_norm <= y0.norm_h() + t * f.norm_h() + 1e-3, "t = {t}");
    }
}

#[test]
fn strong_forcing_activates_the_indicator() {
    let g = grid(16);
    let p = FluidParams::new(0.05, 1.0, 3.0, 2).unwrap();
    let y0 = shear_mode(&g, 0.1, 1);
    let phi = PotentialSpec::EnstrophyIndicator { varpi: enstrophy(&y0) };
    let f = Forcing::Constant(shear_mode(&g, 20.0, 1));
    let cfg = StepperConfig::new(1e-4, 0.01, 1e-2, Scheme::SemiImplicitPhi).unwrap();
    let traj = evolution::simulate(&y0, &f, &p, &phi, &cfg).unwrap();
    assert!(traj.potential_series.iter().any(|v| *v > 0.0));
}

#[test]
fn continuation_without_potential_has_zero_cauchy_differences() {
    let g = grid(8);
    let p = FluidParams::new(0.1, 1.0, 2.0, 2).unwrap();
    let y0 = taylor_green(&g, 1.0);
    let cfg = StepperConfig::new(1e-3, 0.02, 1e-1, Scheme::SemiImplicitPhi).unwrap();
    let rep = evolution::yosida_continuation(&y0, &Forcing::None, &p, &PotentialSpec::None, &cfg, &[1e-1, 1e-2, 1e-3]).unwrap();
    assert!(rep.cauchy.iter().all(|c| *c == 0.0), "{:?}", rep.cauchy);
}

#[test]
fn decay_dissipation_integral_matches_closed_form() {
    let g = grid(16);
    let p = FluidParams::new(0.1, 0.5, 1.0, 2).unwrap();
    let a = 1.0;
    let cfg = StepperConfig::new(1e-4, 0.1, 1.0, Scheme::ExplicitPhi).unwrap();
    let traj = evolution::simulate(&shear_mode(&g, a, 1), &Forcing::None, &p, &PotentialSpec::None, &cfg).unwrap();
    let q = estimate_quantities(&traj, &p);
    let c = p.mu * stokes_symbol(1.0) + p.beta;
    let exact = a * a * stokes_symbol(1.0) / 2.0 * (1.0 - (-2.0 * c * 0.1f64).exp()) / (2.0 * c);
    let got = q.int_dissipation / p.mu;
    assert!((got - exact).abs() / exact <= 1e-3, "{got} vs {exact}");
}

#[test]
fn doubling_horizon_keeps_sup_quantities() {
    let g = grid(8);
    let p = FluidParams::new(0.1, 0.5, 1.0, 2).unwrap();
    let y0 = shear_mode(&g, 1.0, 1);
    let run = |t_end: f64| {
        let cfg = StepperConfig::new(1e-3, t_end, 1.0, Scheme::ExplicitPhi).unwrap();
        estimate_quantities(&evolution::simulate(&y0, &Forcing::None, &p, &PotentialSpec::None, &cfg).unwrap(), &p)
    };
    let (a, b) = (run(0.1), run(0.2));
    assert_eq!(a.sup_kinetic_sq, b.sup_kinetic_sq);
    assert_eq!(a.sup_enstrophy_sq, b.sup_enstrophy_sq);
}

#[test]
fn unforced_interior_run_never_engages_feedback() {
    let g = grid(8);
    let p = FluidParams::new(0.1, 1.0, 3.0, 2).unwrap();
    let y0 = taylor_green(&g, 0.5);
    let ctrl = ControlParams {
        varpi: enstrophy(&y0) * 1.01,
        ..Default::default()
    };
    let cfg = StepperConfig::new(1e-3, 0.05, 1.0, Scheme::ExplicitPhi).unwrap();
    let rep = control::run_invariance(&y0, &Forcing::None, &p, &ctrl, &cfg, &Tolerances::default()).unwrap();
    assert_eq!(rep.active_steps, 0);
    let free = evolution::simulate(&y0, &Forcing::None, &p, &PotentialSpec::None, &cfg).unwrap();
    assert_eq!(rep.trajectory.final_state().unwrap().coeffs(), free.final_state().unwrap().coeffs());
}

#[test]
fn time_optimal_from_the_target_hits_immediately() {
    let g = grid(8);
    let p = FluidParams::new(1.0, 1.0, 5.0, 2).unwrap();
    let y1 = shear_mode(&g, 0.01, 1);
    let cfg = StepperConfig::new(1e-3, 0.1, 1e-6, Scheme::SemiImplicitPhi).unwrap();
    let rep = control::run_time_optimal(&y1, &y1, &p, &ControlParams::default(), &cfg, &Tolerances::default(), 10.0).unwrap();
    assert_eq!(rep.hit_time, Some(0.0));
}

#[test]
fn time_optimal_to_zero_obeys_the_comparison_rate() {
    let g = grid(8);
    let p = FluidParams::new(1.0, 1.0, 5.0, 2).unwrap();
    let y0 = shear_mode(&g, 0.3, 1);
    let zero = SpectralField::zeros(&g);
    let cfg = StepperConfig::new(1e-3, 2.0, 1e-6, Scheme::SemiImplicitPhi).unwrap();
    let rep = control::run_time_optimal(&y0, &zero, &p, &ControlParams::default(), &cfg, &Tolerances::default(), 10.0).unwrap();
    let hit = rep.hit_time.unwrap();
    assert!(hit <= rep.extinction_bound.unwrap() * 1.1);
    let cmp = rep.checks.iter().find(|c| c.check_id == "control.comparison_inequality").unwrap();
    assert!(cmp.passed, "{}", cmp.to_json_line());
}

#[test]
fn stabilizing_the_equilibrium_itself_gives_zero() {
    let g = grid(8);
    let p = FluidParams::new(0.5, 1.0, 3.0, 2).unwrap();
    let f_e = FieldSampler::new(3).smooth_band(&g, 2.0, 1.0, 1.0);
    let y_e = control::solve_steady_state(&f_e, &p, 1e-10).unwrap().solution().clone();
    let cfg = StepperConfig::new(1e-3, 0.02, 1e-6, Scheme::SemiImplicitPhi).unwrap();
    let rep = control::run_stabilization(&y_e, &y_e, &p, &ControlParams::default(), &cfg, &Tolerances::default()).unwrap();
    assert!(rep.trajectory.states.iter().all(|z| z.max_abs() == 0.0));
}

#[test]
fn linear_steady_state_matches_predictor_to_second_order() {
    let g = grid(8);
    let p = FluidParams::new(0.5, 1.0, 1.0, 2).unwrap();
    let dir = FieldSampler::new(8).smooth_band(&g, 2.0, 1.0, 1.0);
    for eps in [1e-2, 1e-3] {
        let f = dir.scale(eps);
        let y = control::solve_steady_state(&f, &p, 1e-14).unwrap().solution().clone();
        let linear = f.map_modes(|k2| 1.0 / (p.mu * stokes_symbol(k2) + p.beta));
        let defect = (&y - &linear).norm_h() / linear.norm_h();
        assert!(defect <= 10.0 * eps, "eps {eps}: defect {defect}");
    }
}
