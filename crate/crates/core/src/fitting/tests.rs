use super::*;
use crate::grid::{Ensemble, GridSpec};
use crate::spectral::average_periodogram;
use crate::synthesis::{simulate_ensemble, SynthesisPlan};
use crate::window::WindowKind;

fn exact(model: &PsdModel, spec: GridSpec, demean: bool) -> Periodogram {
    let fx = crate::spectral::centered_frequencies(spec.nx, spec.dx);
    let fy = crate::spectral::centered_frequencies(spec.ny, spec.dy);
    Periodogram::new(spec, model.psd_grid(&fx, &fy), WindowKind::Blackman, 1, demean).unwrap()
}

fn exp_model(sigma: f64, lx: f64, ly: f64) -> PsdModel {
    PsdModel::single(Family::Exponential, Component::new(sigma, lx, ly)).unwrap()
}

fn simulated(model: PsdModel, spec: GridSpec, count: usize, seed: u64) -> Periodogram {
    let plan = SynthesisPlan::new(model, spec).with_seed(seed);
    let ens: Ensemble = simulate_ensemble(&plan, count).unwrap();
    average_periodogram(&ens, WindowKind::Blackman, true).unwrap()
}

#[test]
fn epsilon_of_exact_model_is_zero() {
    let spec = GridSpec::new(16, 12, 2.0, 3.0).unwrap();
    let m = exp_model(2.0, 5.0, 7.0);
    assert_eq!(residual_epsilon(&exact(&m, spec, false), &m).unwrap(), 0.0);
}

#[test]
fn epsilon_of_constant_offset() {
    let spec = GridSpec::new(16, 16, 1.0, 1.0).unwrap();
    let m = exp_model(1.0, 3.0, 3.0);
    let p = exact(&m, spec, false);
    let delta = 0.125;
    let shifted = Periodogram::new(
        spec,
        p.values().iter().map(|v| v + delta).collect(),
        WindowKind::Blackman,
        1,
        false,
    )
    .unwrap();
    let peak = shifted.values().iter().cloned().fold(0.0, f64::max);
    let eps = residual_epsilon(&shifted, &m).unwrap();
    assert!((eps - delta / peak).abs() < 1e-15, "{eps}");
}

#[test]
fn epsilon_skips_zero_bin_when_demeaned() {
    let spec = GridSpec::new(8, 8, 1.0, 1.0).unwrap();
    let m = exp_model(1.0, 2.0, 2.0);
    let mut v = exact(&m, spec, true).values().to_vec();
    v[spec.index(4, 4)] = 0.0;
    let p = Periodogram::new(spec, v.clone(), WindowKind::Hann, 3, true).unwrap();
    assert_eq!(residual_epsilon(&p, &m).unwrap(), 0.0);
    let q = Periodogram::new(spec, v, WindowKind::Hann, 3, false).unwrap();
    assert!(residual_epsilon(&q, &m).unwrap() > 0.0);
}

#[test]
fn epsilon_of_zero_periodogram_fails() {
    let spec = GridSpec::new(4, 4, 1.0, 1.0).unwrap();
    let p = Periodogram::new(spec, vec![0.0; 16], WindowKind::Hann, 1, false).unwrap();
    let m = exp_model(1.0, 1.0, 1.0);
    assert!(matches!(residual_epsilon(&p, &m), Err(Error::DegeneratePeriodogram)));
    assert!(matches!(initial_guess(&p, Family::Gaussian), Err(Error::DegeneratePeriodogram)));
    assert!(fit_psd(&p, Family::Gaussian, &FitOptions::default()).is_err());
}

#[test]
fn guess_from_noiseless_exponential() {
    let spec = GridSpec::new(128, 128, 1.0, 1.0).unwrap();
    let p = exact(&exp_model(1.0, 20.0, 20.0), spec, false);
    let g = initial_guess(&p, Family::Exponential).unwrap().parameters();
    assert!(g[0] > 0.5 && g[0] < 2.0, "{g:?}");
    assert!(g[1] > 20.0 / 3.0 && g[1] < 60.0, "{g:?}");
    assert!(g[2] > 20.0 / 3.0 && g[2] < 60.0, "{g:?}");
    assert_eq!((g[3], g[4]), (0.0, 0.0));
}

#[test]
fn guess_from_simulated_exponential() {
    let spec = GridSpec::new(128, 128, 1.0, 1.0).unwrap();
    let p = simulated(exp_model(1.0, 20.0, 20.0), spec, 10, 3);
    let g = initial_guess(&p, Family::Exponential).unwrap().parameters();
    assert!(g[0] > 0.5 && g[0] < 2.0, "{g:?}");
    assert!(g[1] > 20.0 / 3.0 && g[1] < 60.0, "{g:?}");
    assert!(g[2] > 20.0 / 3.0 && g[2] < 60.0, "{g:?}");
}

#[test]
fn guess_locates_shifted_peak() {
    let spec = GridSpec::new(64, 64, 1.0, 1.0).unwrap();
    let m = PsdModel::single(
        Family::Gaussian,
        Component::new(1.0, 20.0, 20.0).shifted(8.0 / 64.0, 4.0 / 64.0),
    )
    .unwrap();
    let g = initial_guess(&exact(&m, spec, false), Family::Gaussian).unwrap();
    let p = g.parameters();
    assert_eq!(p[3], 8.0 / 64.0);
    assert_eq!(p[4], 4.0 / 64.0);
    let mixed = initial_guess(&exact(&m, spec, false), Family::Mixed).unwrap().parameters();
    assert_eq!(mixed.len(), 10);
    assert!((mixed[0] * mixed[0] + mixed[5] * mixed[5] - p[0] * p[0]).abs() < 1e-12);
}

#[test]
fn flat_periodogram_uses_fallback() {
    let spec = GridSpec::new(10, 20, 2.0, 1.0).unwrap();
    let p = Periodogram::new(spec, vec![3.0; 200], WindowKind::Hann, 1, false).unwrap();
    let g = initial_guess(&p, Family::Triangle).unwrap().parameters();
    assert_eq!(g[1], 2.0);
    assert_eq!(g[2], 2.0);
    assert_eq!((g[3], g[4]), (0.0, 0.0));
    // mass = 3 · 200 / (20 · 20)
    assert!((g[0] - 1.5f64.sqrt()).abs() < 1e-12);
}

#[test]
fn noiseless_exponential_is_recovered() {
    let spec = GridSpec::new(64, 64, 10.0, 10.0).unwrap();
    let truth = exp_model(50.0, 60.0, 80.0);
    let p = exact(&truth, spec, false);
    let r = fit_psd(&p, Family::Exponential, &FitOptions::default()).unwrap();
    let got = r.model.parameters();
    for (g, t) in got.iter().zip(truth.parameters()).take(3) {
        assert!((g - t).abs() <= 1e-3 * t, "{got:?}");
    }
    assert!(got[3].abs() < 1e-6 && got[4].abs() < 1e-6, "{got:?}");
    assert!(r.epsilon < 1e-8, "{}", r.epsilon);
    assert!(!r.zero_bin_excluded);
}

#[test]
fn zero_budget_returns_guess() {
    let spec = GridSpec::new(32, 32, 1.0, 1.0).unwrap();
    let p = exact(&exp_model(1.0, 4.0, 4.0), spec, false);
    let opts = FitOptions {
        max_iterations: 0,
        ..FitOptions::default()
    };
    let r = fit_psd(&p, Family::Gaussian, &opts).unwrap();
    assert!(!r.converged);
    assert_eq!(r.iterations, 0);
    assert_eq!(r.start_index, 0);
    assert_eq!(r.model, initial_guess(&p, Family::Gaussian).unwrap());
}

#[test]
fn accepted_costs_never_increase() {
    let spec = GridSpec::new(32, 32, 10.0, 10.0).unwrap();
    let truth = PsdModel::mixed(
        Component::new(3.0, 40.0, 50.0).shifted(0.01, 0.0),
        Component::new(2.0, 20.0, 25.0).shifted(0.02, 0.01),
    )
    .unwrap();
    let p = simulated(truth, spec, 6, 11);
    let bounds = default_bounds(&p, Family::Mixed);
    let guess = initial_guess(&p, Family::Mixed).unwrap().parameters();
    let objective = Objective {
        family: Family::Mixed,
        fx: p.fx(),
        fy: p.fy(),
        target: p.values(),
        skip: excluded_bin(&p),
    };
    let settings = FitOptions::default().lm_settings();
    for s in 0..4 {
        let p0 = perturbed_start(&guess, &bounds, 5, s);
        let out = minimize(|q, r| objective.residuals(q, r), p.values().len(), &p0, &bounds, &settings);
        assert!(out.cost_history.len() >= 2);
        for w in out.cost_history.windows(2) {
            assert!(w[1] <= w[0], "start {s}: {} > {}", w[1], w[0]);
        }
        for (v, &(lo, hi)) in out.params.iter().zip(&bounds) {
            assert!(*v >= lo && *v <= hi);
        }
    }
}

#[test]
fn scale_equivariance() {
    let spec = GridSpec::new(32, 32, 5.0, 5.0).unwrap();
    let p = simulated(exp_model(2.0, 15.0, 25.0), spec, 5, 2);
    let c = 4.0;
    let q = p.scaled(c).unwrap();
    let opts = FitOptions::default();
    let a = fit_psd(&p, Family::Exponential, &opts).unwrap();
    let b = fit_psd(&q, Family::Exponential, &opts).unwrap();
    let (pa, pb) = (a.model.parameters(), b.model.parameters());
    let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(1e-12);
    assert!(rel(pa[0] * pa[0] * c, pb[0] * pb[0]) < 1e-6, "{pa:?} {pb:?}");
    for k in 1..5 {
        assert!(rel(pa[k], pb[k]) < 1e-6 || (pa[k] - pb[k]).abs() < 1e-12, "{pa:?} {pb:?}");
    }
    assert!(rel(a.epsilon, b.epsilon) < 1e-6);
}

#[test]
fn fits_are_deterministic() {
    let spec = GridSpec::new(24, 24, 1.0, 1.0).unwrap();
    let p = simulated(exp_model(1.0, 3.0, 4.0), spec, 4, 9);
    let opts = FitOptions {
        seed: 77,
        ..FitOptions::default()
    };
    let a = fit_psd(&p, Family::Mixed, &opts).unwrap();
    let b = fit_psd(&p, Family::Mixed, &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.model.parameters(), b.model.parameters());
    assert!(a.zero_bin_excluded);
}

#[test]
fn selection_prefers_fewer_parameters_on_ties() {
    let spec = GridSpec::new(48, 48, 10.0, 10.0).unwrap();
    let p = exact(&exp_model(50.0, 60.0, 80.0), spec, false);
    let opts = FitOptions::default();
    let best = select_model(&p, &[Family::Gaussian, Family::Exponential, Family::Mixed], &opts)
        .unwrap();
    assert_eq!(best.family(), Family::Exponential);
    assert!(best.epsilon < 1e-6);

    let single = select_model(&p, &[Family::Wave], &opts).unwrap();
    assert_eq!(single, fit_psd(&p, Family::Wave, &opts).unwrap());
    assert!(select_model(&p, &[], &opts).is_err());
}

#[test]
fn tie_rules() {
    let spec = GridSpec::new(8, 8, 1.0, 1.0).unwrap();
    let p = exact(&exp_model(1.0, 2.0, 2.0), spec, false);
    let mk = |family: Family, epsilon: f64| FitResult {
        model: initial_guess(&p, family).unwrap(),
        epsilon,
        cost: 0.0,
        iterations: 1,
        converged: true,
        start_index: 0,
        zero_bin_excluded: false,
    };
    let a = mk(Family::Mixed, 0.001);
    let b = mk(Family::Gaussian, 0.001 + 0.5 * EPSILON_TIE);
    let c = mk(Family::Wave, 0.001);
    assert_eq!(pick_best([&a, &b, &c]).unwrap().family(), Family::Gaussian);
    let d = mk(Family::Mixed, 0.0005);
    assert_eq!(pick_best([&b, &d]).unwrap().family(), Family::Mixed);
    assert_eq!(pick_best([&c, &b]).unwrap().family(), Family::Wave);
}

#[test]
fn option_and_bound_checks() {
    let spec = GridSpec::new(8, 8, 1.0, 1.0).unwrap();
    let p = exact(&exp_model(1.0, 2.0, 2.0), spec, false);
    let bad = [
        FitOptions { n_multistarts: 0, ..FitOptions::default() },
        FitOptions { parameter_tolerance: 0.0, ..FitOptions::default() },
        FitOptions { residual_tolerance: -1.0, ..FitOptions::default() },
        FitOptions { bounds: Some(vec![(0.0, 1.0); 3]), ..FitOptions::default() },
        FitOptions {
            bounds: Some(vec![(0.0, 1.0), (0.0, 1.0), (0.5, 1.0), (0.0, 1.0), (0.0, 1.0)]),
            ..FitOptions::default()
        },
    ];
    for o in &bad {
        assert!(fit_psd(&p, Family::Exponential, o).is_err(), "{o:?}");
    }
    let b = default_bounds(&p, Family::Mixed);
    assert_eq!(b.len(), 10);
    assert_eq!(b[1], (0.5, 80.0));
    assert_eq!(b[3], (0.0, 0.5));
}

#[test]
fn report_round_trip() {
    let spec = GridSpec::new(16, 16, 1.0, 1.0).unwrap();
    let p = exact(&exp_model(1.0, 2.0, 3.0), spec, false);
    let opts = FitOptions { n_multistarts: 2, ..FitOptions::default() };
    let fits = fit_families(&p, &[Family::Exponential, Family::Gaussian], &opts);
    let best = pick_best(fits.iter().filter_map(|(_, r)| r.as_ref().ok())).unwrap();
    let report = FitReport::new(best, &opts, Some("MPa"))
        .with_candidates(fits.iter().map(|(f, r)| CandidateSummary::from_fit(*f, r)).collect());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fit.json");
    save_fit_report(&report, &path).unwrap();
    let back = load_fit_report(&path).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.model().unwrap(), best.model);
    assert_eq!(back.candidates.len(), 2);
    let text = std::fs::read_to_string(&path).unwrap();
    for key in ["family", "parameters", "epsilon", "iterations", "converged", "start_index", "options"] {
        assert!(text.contains(&format!("\"{key}\"")), "{key}");
    }
}
