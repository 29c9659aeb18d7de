//! Gaussian field synthesis with a prescribed covariance model.
//!
//! Two independent generators share the target model:
//!
//! * circulant embedding: the covariance is wrapped onto a torus
//!   `factor`× larger than the grid, its DFT gives the eigenvalues of the
//!   embedding, and complex white noise scaled by `√(λ/M)` is transformed
//!   back; the real part restricted to the grid is exact in law.
//! * spectral representation: a sum of cosines over the torus frequency grid
//!   with amplitudes `√(2·S(f)·Δf1·Δf2)` and independent uniform phases,
//!   where `S` is the PSD folded into the Nyquist band so that the sampled
//!   field keeps the full variance.
//!
//! Realization `i` draws from counter stream `i` of the plan seed, one cell
//! at a time in row-major torus order (see [`crate::rng`]).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Ensemble, GridField, GridSpec};
use crate::models::PsdModel;
use crate::rng;
use crate::spectral::fft2;

/// Largest admissible embedding factor.
pub const MAX_EMBEDDING_FACTOR: usize = 8;

/// Largest tolerated share of negative eigenvalue mass.
pub const CLIP_BUDGET: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthesisMethod {
    CirculantEmbedding,
    Spectral,
}

impl fmt::Display for SynthesisMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthesisMethod::CirculantEmbedding => "circulant-embedding",
            SynthesisMethod::Spectral => "spectral",
        })
    }
}

impl FromStr for SynthesisMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circulant" | "circulant-embedding" => Ok(SynthesisMethod::CirculantEmbedding),
            "spectral" => Ok(SynthesisMethod::Spectral),
            other => Err(Error::InvalidArgument(format!(
                "unknown synthesis method `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisPlan {
    pub model: PsdModel,
    pub spec: GridSpec,
    pub method: SynthesisMethod,
    /// Offset added to every sample.
    pub mean: f64,
    pub seed: u64,
    /// Torus size per axis as a multiple of the grid size.
    pub embedding_factor: usize,
}

impl SynthesisPlan {
    /// Circulant embedding at factor 2, zero mean, seed 0.
    pub fn new(model: PsdModel, spec: GridSpec) -> Self {
        SynthesisPlan {
            model,
            spec,
            method: SynthesisMethod::CirculantEmbedding,
            mean: 0.0,
            seed: 0,
            embedding_factor: 2,
        }
    }

    pub fn with_method(mut self, method: SynthesisMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_mean(mut self, mean: f64) -> Self {
        self.mean = mean;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_embedding_factor(mut self, factor: usize) -> Self {
        self.embedding_factor = factor;
        self
    }

    fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.spec.validate()?;
        if !self.mean.is_finite() {
            return Err(Error::InvalidArgument("mean must be finite".into()));
        }
        if !(1..=MAX_EMBEDDING_FACTOR).contains(&self.embedding_factor) {
            return Err(Error::InvalidArgument(format!(
                "embedding factor must lie in 1..={MAX_EMBEDDING_FACTOR}, got {}",
                self.embedding_factor
            )));
        }
        Ok(())
    }
}

/// Alias images folded into the band on each side of the spectral sum.
const ALIAS_IMAGES: i32 = 8;

/// Spectrum of the sampled field: the continuous PSD folded back into the
/// Nyquist band.
fn aliased_psd(model: &PsdModel, fx: f64, fy: f64, dx: f64, dy: f64) -> f64 {
    let mut s = 0.0;
    for b in -ALIAS_IMAGES..=ALIAS_IMAGES {
        for a in -ALIAS_IMAGES..=ALIAS_IMAGES {
            s += model.psd(fx + a as f64 / dx, fy + b as f64 / dy);
        }
    }
    s
}

/// Precomputed spectral amplitudes for one plan.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    plan: SynthesisPlan,
    mx: usize,
    my: usize,
    amplitudes: Vec<f64>,
    clipped_fraction: f64,
}

fn torus_offset(j: usize, m: usize) -> f64 {
    if j <= m / 2 {
        j as f64
    } else {
        j as f64 - m as f64
    }
}

impl Synthesizer {
    pub fn new(plan: SynthesisPlan) -> Result<Self> {
        plan.validate()?;
        let mx = plan.embedding_factor * plan.spec.nx;
        let my = plan.embedding_factor * plan.spec.ny;
        let (dx, dy) = (plan.spec.dx, plan.spec.dy);
        let (amplitudes, clipped_fraction) = match plan.method {
            SynthesisMethod::CirculantEmbedding => {
                let mut c: Vec<Complex64> = (0..my)
                    .flat_map(|j| (0..mx).map(move |i| (i, j)))
                    .map(|(i, j)| {
                        let h = plan
                            .model
                            .cov(torus_offset(i, mx) * dx, torus_offset(j, my) * dy);
                        Complex64::new(h, 0.0)
                    })
                    .collect();
                fft2(&mut c, mx, my, false);
                let negative: f64 = c.iter().map(|z| (-z.re).max(0.0)).sum();
                let total: f64 = c.iter().map(|z| z.re.abs()).sum();
                let fraction = if total > 0.0 { negative / total } else { 0.0 };
                if fraction > CLIP_BUDGET {
                    return Err(Error::Embedding {
                        clipped_fraction: fraction,
                        factor: plan.embedding_factor,
                    });
                }
                let scale = 1.0 / (mx * my) as f64;
                let amps = c.iter().map(|z| (z.re.max(0.0) * scale).sqrt()).collect();
                (amps, fraction)
            }
            SynthesisMethod::Spectral => {
                let (dfx, dfy) = (1.0 / (mx as f64 * dx), 1.0 / (my as f64 * dy));
                let amps = (0..my)
                    .flat_map(|j| (0..mx).map(move |i| (i, j)))
                    .map(|(i, j)| {
                        let s = aliased_psd(
                            &plan.model,
                            torus_offset(i, mx) * dfx,
                            torus_offset(j, my) * dfy,
                            dx,
                            dy,
                        );
                        (2.0 * s * dfx * dfy).sqrt()
                    })
                    .collect();
                (amps, 0.0)
            }
        };
        Ok(Synthesizer {
            plan,
            mx,
            my,
            amplitudes,
            clipped_fraction,
        })
    }

    pub fn plan(&self) -> &SynthesisPlan {
        &self.plan
    }

    /// Share of eigenvalue mass removed by clipping (0 for the spectral method).
    pub fn clipped_fraction(&self) -> f64 {
        self.clipped_fraction
    }

    /// Realization `index`, drawn from counter stream `index`.
    pub fn realization(&self, index: u64) -> GridField {
        let mut rng = rng::stream(self.plan.seed, index);
        let mut data: Vec<Complex64> = match self.plan.method {
            SynthesisMethod::CirculantEmbedding => self
                .amplitudes
                .iter()
                .map(|&a| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(a * re, a * im)
                })
                .collect(),
            SynthesisMethod::Spectral => self
                .amplitudes
                .iter()
                .map(|&a| {
                    let phase = 2.0 * PI * rng.random::<f64>();
                    Complex64::from_polar(a, phase)
                })
                .collect(),
        };
        let inverse = self.plan.method == SynthesisMethod::Spectral;
        fft2(&mut data, self.mx, self.my, inverse);
        let spec = self.plan.spec;
        let mut values = Vec::with_capacity(spec.len());
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                values.push(data[j * self.mx + i].re + self.plan.mean);
            }
        }
        GridField::new(spec, values).expect("synthesized values are finite")
    }
}

/// One realization (stream 0).
pub fn simulate_field(plan: &SynthesisPlan) -> Result<GridField> {
    Ok(Synthesizer::new(plan.clone())?.realization(0))
}

/// `count` realizations; member `i` comes from stream `i`.
pub fn simulate_ensemble(plan: &SynthesisPlan, count: usize) -> Result<Ensemble> {
    if count == 0 {
        return Err(Error::InvalidArgument("ensemble size must be >= 1".into()));
    }
    let synth = Synthesizer::new(plan.clone())?;
    let fields: Vec<GridField> = (0..count as u64)
        .into_par_iter()
        .map(|i| synth.realization(i))
        .collect();
    Ensemble::new(fields)
}
