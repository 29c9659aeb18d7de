//! Least-squares fitting of PSD models to an averaged periodogram.
//!
//! The objective is the plain sum of squared deviations between the
//! empirical values and the model PSD over the full centered frequency
//! grid. When the periodogram was computed from demeaned fields the
//! zero-frequency bin only reflects the centering and is left out, both of
//! the objective and of the residual measure ε.

mod lm;

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use lm::{minimize, LmOutcome, LmSettings, FD_STEP};

use crate::error::{Error, Result};
use crate::models::{Component, Family, ModelRecord, ParamRole, PsdModel, Shape};
use crate::rng;
use crate::spectral::Periodogram;

/// Absolute ε difference under which two fits count as tied.
pub const EPSILON_TIE: f64 = 1e-6;

/// Half-width constants: a peak with half width at half maximum `w` along
/// an axis suggests length `c / w` for the given shape.
fn half_width_constant(shape: Shape) -> f64 {
    use std::f64::consts::PI;
    match shape {
        Shape::Exponential | Shape::Wave => 1.0 / (2.0 * PI),
        Shape::Gaussian => 2f64.ln().sqrt() / PI,
        // sinc²(x) = 1/2 at x ≈ 1.391557
        Shape::Triangle => 1.391_557_377 / PI,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub damping_init: f64,
    pub parameter_tolerance: f64,
    pub residual_tolerance: f64,
    pub n_multistarts: usize,
    pub seed: u64,
    /// Per-parameter `(lower, upper)`; `None` selects data-scaled defaults.
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            damping_init: 1e-3,
            parameter_tolerance: 1e-8,
            residual_tolerance: 1e-10,
            n_multistarts: 8,
            seed: 0,
            bounds: None,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
            }
        };
        positive(self.damping_init, "damping_init")?;
        positive(self.parameter_tolerance, "parameter_tolerance")?;
        positive(self.residual_tolerance, "residual_tolerance")?;
        if self.n_multistarts == 0 {
            return Err(Error::InvalidArgument("n_multistarts must be at least 1".into()));
        }
        Ok(())
    }

    fn lm_settings(&self) -> LmSettings {
        LmSettings {
            max_iterations: self.max_iterations,
            damping_init: self.damping_init,
            parameter_tolerance: self.parameter_tolerance,
            residual_tolerance: self.residual_tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: PsdModel,
    pub epsilon: f64,
    /// Sum of squared deviations over the fitted bins.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub start_index: usize,
    pub zero_bin_excluded: bool,
}

impl FitResult {
    pub fn family(&self) -> Family {
        self.model.family()
    }
}

/// Flat index of the bin left out of the objective, if any.
fn excluded_bin(empirical: &Periodogram) -> Option<usize> {
    empirical.demean().then(|| {
        let (i, j) = empirical.zero_index();
        empirical.spec().index(i, j)
    })
}

/// Non-dimensional residual: RMS deviation over the included bins divided
/// by the largest included empirical value.
pub fn residual_epsilon(empirical: &Periodogram, model: &PsdModel) -> Result<f64> {
    let theory = model.psd_grid(&empirical.fx(), &empirical.fy());
    epsilon_from(empirical, &theory)
}

fn epsilon_from(empirical: &Periodogram, theory: &[f64]) -> Result<f64> {
    let skip = excluded_bin(empirical);
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut peak = 0.0f64;
    for (k, (&e, &t)) in empirical.values().iter().zip(theory).enumerate() {
        if Some(k) == skip {
            continue;
        }
        sum += (e - t) * (e - t);
        count += 1;
        peak = peak.max(e);
    }
    if peak <= 0.0 || count == 0 {
        return Err(Error::DegeneratePeriodogram);
    }
    Ok((sum / count as f64).sqrt() / peak)
}

/// Periodogram values with the excluded zero bin replaced by the mean of
/// its axis neighbours, so that peak search and mass are not biased by it.
fn filled_values(empirical: &Periodogram) -> Vec<f64> {
    let mut v = empirical.values().to_vec();
    if empirical.demean() {
        let spec = empirical.spec();
        let (i0, j0) = empirical.zero_index();
        let mut acc = 0.0;
        let mut n = 0;
        let mut add = |i: usize, j: usize| {
            acc += empirical.get(i, j);
            n += 1;
        };
        if i0 > 0 {
            add(i0 - 1, j0);
        }
        if i0 + 1 < spec.nx {
            add(i0 + 1, j0);
        }
        if j0 > 0 {
            add(i0, j0 - 1);
        }
        if j0 + 1 < spec.ny {
            add(i0, j0 + 1);
        }
        if n > 0 {
            v[spec.index(i0, j0)] = acc / n as f64;
        }
    }
    v
}

/// Data-scaled box for each parameter of `family`.
pub fn default_bounds(empirical: &Periodogram, family: Family) -> Vec<(f64, f64)> {
    let spec = empirical.spec();
    let (d1, d2) = spec.extent();
    let mass = empirical.total_mass().max(0.0);
    let sigma_max = 10.0 * mass.sqrt();
    family
        .parameter_roles()
        .into_iter()
        .map(|role| match role {
            ParamRole::Sigma => (0.0, sigma_max),
            ParamRole::LengthX => (spec.dx / 2.0, 10.0 * d1),
            ParamRole::LengthY => (spec.dy / 2.0, 10.0 * d2),
            ParamRole::ShiftX => (0.0, 0.5 / spec.dx),
            ParamRole::ShiftY => (0.0, 0.5 / spec.dy),
        })
        .collect()
}

fn check_bounds(bounds: &[(f64, f64)], family: Family) -> Result<()> {
    if bounds.len() != family.parameter_count() {
        return Err(Error::InvalidArgument(format!(
            "{family} takes {} bounds, got {}",
            family.parameter_count(),
            bounds.len()
        )));
    }
    for ((&(lo, hi), role), name) in bounds
        .iter()
        .zip(family.parameter_roles())
        .zip(family.parameter_names())
    {
        let floor_ok = match role {
            ParamRole::LengthX | ParamRole::LengthY => lo > 0.0,
            _ => lo >= 0.0,
        };
        if !(lo.is_finite() && hi.is_finite() && lo <= hi && floor_ok) {
            return Err(Error::InvalidArgument(format!(
                "bad bounds for {name}: ({lo}, {hi})"
            )));
        }
    }
    Ok(())
}

/// Half width at half maximum walking outward from index `start` along one
/// axis; `None` when the values never drop to half the peak.
fn half_width(values: impl Iterator<Item = f64>, peak: f64, step: f64) -> Option<f64> {
    let half = 0.5 * peak;
    let mut prev = peak;
    for (n, v) in values.enumerate() {
        if v <= half {
            let t = if prev > v { (prev - half) / (prev - v) } else { 1.0 };
            return Some((n as f64 + t) * step);
        }
        prev = v;
    }
    None
}

/// Starting model from the mass, peak location and peak width of the
/// empirical periodogram.
pub fn initial_guess(empirical: &Periodogram, family: Family) -> Result<PsdModel> {
    let spec = *empirical.spec();
    let values = filled_values(empirical);
    let (r1, r2) = empirical.resolution();
    let mass = values.iter().sum::<f64>() * r1 * r2;
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::DegeneratePeriodogram);
    }
    let (d1, d2) = spec.extent();
    let fallback = (d1 / 10.0, d2 / 10.0);
    let bounds = default_bounds(empirical, family);

    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    let min = values.iter().cloned().fold(f64::MAX, f64::min);
    let (fx, fy) = (empirical.fx(), empirical.fy());
    let (i0, j0) = empirical.zero_index();

    // peak in the quadrant fx >= 0, fy >= 0
    let (mut ip, mut jp, mut peak) = (i0, j0, f64::MIN);
    if max > min {
        for j in j0..spec.ny {
            for i in i0..spec.nx {
                let v = values[spec.index(i, j)];
                if v > peak {
                    (ip, jp, peak) = (i, j, v);
                }
            }
        }
    }
    let (wx, wy) = if max > min {
        let row = |i: usize| values[spec.index(i, jp)];
        let col = |j: usize| values[spec.index(ip, j)];
        (
            half_width((ip + 1..spec.nx).map(row), peak, r1),
            half_width((jp + 1..spec.ny).map(col), peak, r2),
        )
    } else {
        (None, None)
    };
    let (fx0, fy0) = if max > min { (fx[ip], fy[jp]) } else { (0.0, 0.0) };

    let component = |shape: Shape, sigma: f64| {
        let c = half_width_constant(shape);
        Component {
            sigma,
            lx: wx.map_or(fallback.0, |w| c / w),
            ly: wy.map_or(fallback.1, |w| c / w),
            fx0,
            fy0,
        }
    };
    let model = match family {
        Family::Mixed => PsdModel::mixed(
            component(Shape::Gaussian, (mass / 2.0).sqrt()),
            component(Shape::Exponential, (mass / 2.0).sqrt()),
        )?,
        _ => {
            let shape = match family {
                Family::Gaussian => Shape::Gaussian,
                Family::Wave => Shape::Wave,
                Family::Triangle => Shape::Triangle,
                _ => Shape::Exponential,
            };
            PsdModel::single(family, component(shape, mass.sqrt()))?
        }
    };
    let mut p = model.parameters();
    for (v, &(lo, hi)) in p.iter_mut().zip(&bounds) {
        *v = v.clamp(lo, hi);
    }
    PsdModel::from_parameters(family, &p)
}

/// Start `s` of the multistart: start 0 is the guess itself, later starts
/// scale every nonzero parameter by a log-uniform factor in [1/4, 4].
fn perturbed_start(guess: &[f64], bounds: &[(f64, f64)], seed: u64, s: usize) -> Vec<f64> {
    if s == 0 {
        return guess.to_vec();
    }
    let mut rng = rng::stream(seed, s as u64);
    let span = 4f64.ln();
    guess
        .iter()
        .zip(bounds)
        .map(|(&v, &(lo, hi))| {
            let u: f64 = rng.random_range(-1.0..=1.0);
            if v > 0.0 {
                (v * (span * u).exp()).clamp(lo, hi)
            } else {
                v
            }
        })
        .collect()
}

struct Objective<'a> {
    family: Family,
    fx: Vec<f64>,
    fy: Vec<f64>,
    target: &'a [f64],
    skip: Option<usize>,
}

impl Objective<'_> {
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        match PsdModel::from_parameters(self.family, p) {
            Ok(model) => {
                let theory = model.psd_grid(&self.fx, &self.fy);
                for ((o, t), e) in out.iter_mut().zip(theory).zip(self.target) {
                    *o = t - e;
                }
                if let Some(k) = self.skip {
                    out[k] = 0.0;
                }
            }
            Err(_) => out.fill(f64::INFINITY),
        }
    }
}

/// Fits `family` to the periodogram by bounded Levenberg–Marquardt with
/// multistarts and returns the start with the smallest ε.
pub fn fit_psd(empirical: &Periodogram, family: Family, options: &FitOptions) -> Result<FitResult> {
    options.validate()?;
    let bounds = match &options.bounds {
        Some(b) => b.clone(),
        None => default_bounds(empirical, family),
    };
    check_bounds(&bounds, family)?;
    let guess = initial_guess(empirical, family)?.parameters();
    let guess: Vec<f64> = guess
        .iter()
        .zip(&bounds)
        .map(|(&v, &(lo, hi))| v.clamp(lo, hi))
        .collect();
    let objective = Objective {
        family,
        fx: empirical.fx(),
        fy: empirical.fy(),
        target: empirical.values(),
        skip: excluded_bin(empirical),
    };
    let zero_bin_excluded = objective.skip.is_some();
    let n_res = empirical.values().len();
    let settings = options.lm_settings();

    let starts = if options.max_iterations == 0 { 1 } else { options.n_multistarts };
    let runs: Vec<Result<FitResult>> = (0..starts)
        .into_par_iter()
        .map(|s| {
            let p0 = perturbed_start(&guess, &bounds, options.seed, s);
            let out = minimize(|p, r| objective.residuals(p, r), n_res, &p0, &bounds, &settings);
            let model = PsdModel::from_parameters(family, &out.params)?;
            let theory = model.psd_grid(&objective.fx, &objective.fy);
            Ok(FitResult {
                epsilon: epsilon_from(empirical, &theory)?,
                cost: out.cost,
                iterations: out.iterations,
                converged: out.converged,
                start_index: s,
                zero_bin_excluded,
                model,
            })
        })
        .collect();

    let mut best: Option<FitResult> = None;
    let mut first_err = None;
    for run in runs {
        match run {
            Ok(r) => {
                let better = match &best {
                    None => true,
                    Some(b) => r.epsilon.total_cmp(&b.epsilon).is_lt(),
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or(Error::DegeneratePeriodogram))
}

/// Fits every family in `families`, in order.
pub fn fit_families(
    empirical: &Periodogram,
    families: &[Family],
    options: &FitOptions,
) -> Vec<(Family, Result<FitResult>)> {
    families
        .iter()
        .map(|&f| (f, fit_psd(empirical, f, options)))
        .collect()
}

/// Picks the smallest ε; fits within [`EPSILON_TIE`] of each other go to
/// the family with fewer parameters, then to the earlier one in the list.
pub fn pick_best<'a>(candidates: impl IntoIterator<Item = &'a FitResult>) -> Option<&'a FitResult> {
    let mut best: Option<&FitResult> = None;
    for r in candidates {
        best = Some(match best {
            None => r,
            Some(b) => {
                let tied = (r.epsilon - b.epsilon).abs() <= EPSILON_TIE;
                let fewer = r.family().parameter_count() < b.family().parameter_count();
                if (tied && fewer) || (!tied && r.epsilon < b.epsilon) {
                    r
                } else {
                    b
                }
            }
        });
    }
    best
}

/// Fits each family and returns the best one by residual.
pub fn select_model(
    empirical: &Periodogram,
    families: &[Family],
    options: &FitOptions,
) -> Result<FitResult> {
    if families.is_empty() {
        return Err(Error::InvalidArgument("no model families to select from".into()));
    }
    let fits = fit_families(empirical, families, options);
    let ok: Vec<&FitResult> = fits.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
    if let Some(best) = pick_best(ok) {
        return Ok(best.clone());
    }
    let (_, first) = fits.into_iter().next().expect("families is nonempty");
    first
}

/// One line of a multi-family comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSummary {
    pub family: Family,
    pub epsilon: Option<f64>,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CandidateSummary {
    pub fn from_fit(family: Family, fit: &Result<FitResult>) -> Self {
        match fit {
            Ok(r) => CandidateSummary {
                family,
                epsilon: Some(r.epsilon),
                converged: r.converged,
                error: None,
            },
            Err(e) => CandidateSummary {
                family,
                epsilon: None,
                converged: false,
                error: Some(e.to_string()),
            },
        }
    }
}

/// Fit report file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitReport {
    pub family: Family,
    pub parameters: ModelRecord,
    pub epsilon: f64,
    pub iterations: usize,
    pub converged: bool,
    pub start_index: usize,
    /// Frequency bins entering the objective and ε.
    pub residual_grid: String,
    pub zero_bin_excluded: bool,
    pub options: FitOptions,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<CandidateSummary>,
}

impl FitReport {
    pub fn new(result: &FitResult, options: &FitOptions, units: Option<&str>) -> Self {
        FitReport {
            family: result.family(),
            parameters: ModelRecord::from_model(&result.model, units.map(str::to_string)),
            epsilon: result.epsilon,
            iterations: result.iterations,
            converged: result.converged,
            start_index: result.start_index,
            residual_grid: if result.zero_bin_excluded {
                "full centered grid without zero bin".into()
            } else {
                "full centered grid".into()
            },
            zero_bin_excluded: result.zero_bin_excluded,
            options: options.clone(),
            candidates: Vec::new(),
        }
    }

    pub fn with_candidates(mut self, candidates: Vec<CandidateSummary>) -> Self {
        self.candidates = candidates;
        self
    }

    pub fn model(&self) -> Result<PsdModel> {
        self.parameters.to_model()
    }
}

pub fn save_fit_report(report: &FitReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(report).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_fit_report(path: impl AsRef<Path>) -> Result<FitReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })
}

#[cfg(test)]
mod tests;
