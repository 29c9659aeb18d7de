//! Parametric covariance / PSD pairs.
//!
//! Every family is separable: `C(hx, hy) = σ² ρ(hx; lx) ρ(hy; ly)` with a
//! matching per-axis spectral density `s(f; l)`, so that
//! `S(fx, fy) = σ² s(fx; lx) s(fy; ly)` is the exact 2D Fourier transform of
//! `C` under the `e^{-i2πfh}` convention.
//!
//! | shape       | ρ(h; l)              | s(f; l)                        |
//! |-------------|----------------------|--------------------------------|
//! | exponential | e^{-\|h\|/l}         | 2l / (1 + 4π²l²f²)             |
//! | gaussian    | e^{-h²/l²}           | √π l e^{-π²l²f²}               |
//! | wave        | sin(h/l) / (h/l)     | π l if \|f\| ≤ 1/(2πl), else 0 |
//! | triangle    | max(1 - \|h\|/l, 0)  | l sinc²(π f l), sinc x = sin x / x |
//!
//! A shift frequency `f0` multiplies ρ by `cos(2π f0 h)`, which on the
//! spectral side is the symmetrized shift `(s(f - f0) + s(f + f0)) / 2`.
//! The mixed model is a shifted Gaussian component plus a shifted
//! exponential component.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Exponential,
    Gaussian,
    Wave,
    Triangle,
    Mixed,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Exponential,
        Family::Gaussian,
        Family::Wave,
        Family::Triangle,
        Family::Mixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Exponential => "exponential",
            Family::Gaussian => "gaussian",
            Family::Wave => "wave",
            Family::Triangle => "triangle",
            Family::Mixed => "mixed",
        }
    }

    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            Family::Mixed => &[
                "sigma1", "lx1", "ly1", "fx0_1", "fy0_1", "sigma2", "lx2", "ly2", "fx0_2",
                "fy0_2",
            ],
            _ => &["sigma", "lx", "ly", "fx0", "fy0"],
        }
    }

    pub fn parameter_count(self) -> usize {
        self.parameter_names().len()
    }

    /// What each slot of the parameter vector means.
    pub fn parameter_roles(self) -> Vec<ParamRole> {
        use ParamRole::*;
        let one = [Sigma, LengthX, LengthY, ShiftX, ShiftY];
        match self {
            Family::Mixed => one.iter().chain(one.iter()).copied().collect(),
            _ => one.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Sigma,
    LengthX,
    LengthY,
    ShiftX,
    ShiftY,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model family `{s}`")))
    }
}

/// Per-axis correlation shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Exponential,
    Gaussian,
    Wave,
    Triangle,
}

impl Shape {
    pub fn correlation(self, h: f64, l: f64) -> f64 {
        let u = h.abs() / l;
        match self {
            Shape::Exponential => (-u).exp(),
            Shape::Gaussian => (-u * u).exp(),
            Shape::Wave => sinc(u),
            Shape::Triangle => (1.0 - u).max(0.0),
        }
    }

    pub fn density(self, f: f64, l: f64) -> f64 {
        match self {
            Shape::Exponential => 2.0 * l / (1.0 + 4.0 * PI * PI * l * l * f * f),
            Shape::Gaussian => PI.sqrt() * l * (-PI * PI * l * l * f * f).exp(),
            Shape::Wave => {
                if (PI * l * f).abs() <= 0.5 {
                    PI * l
                } else {
                    0.0
                }
            }
            Shape::Triangle => {
                let s = sinc(PI * f * l);
                l * s * s
            }
        }
    }

    fn shifted_density(self, f: f64, l: f64, f0: f64) -> f64 {
        if f0 == 0.0 {
            self.density(f, l)
        } else {
            0.5 * (self.density(f - f0, l) + self.density(f + f0, l))
        }
    }

    fn shifted_correlation(self, h: f64, l: f64, f0: f64) -> f64 {
        let rho = self.correlation(h, l);
        if f0 == 0.0 {
            rho
        } else {
            rho * (2.0 * PI * f0 * h).cos()
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// One separable component: standard deviation, correlation lengths and
/// shift frequencies along X and Y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub sigma: f64,
    pub lx: f64,
    pub ly: f64,
    pub fx0: f64,
    pub fy0: f64,
}

impl Component {
    pub fn new(sigma: f64, lx: f64, ly: f64) -> Self {
        Component {
            sigma,
            lx,
            ly,
            fx0: 0.0,
            fy0: 0.0,
        }
    }

    pub fn shifted(self, fx0: f64, fy0: f64) -> Self {
        Component { fx0, fy0, ..self }
    }

    fn validate(&self, label: &str) -> Result<()> {
        let ok = self.sigma >= 0.0
            && self.sigma.is_finite()
            && self.lx > 0.0
            && self.ly > 0.0
            && self.lx.is_finite()
            && self.ly.is_finite()
            && self.fx0 >= 0.0
            && self.fy0 >= 0.0
            && self.fx0.is_finite()
            && self.fy0.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!(
                "{label}: need sigma >= 0, lengths > 0, shifts >= 0, got {self:?}"
            )))
        }
    }

    fn cov(&self, shape: Shape, hx: f64, hy: f64) -> f64 {
        self.sigma
            * self.sigma
            * shape.shifted_correlation(hx, self.lx, self.fx0)
            * shape.shifted_correlation(hy, self.ly, self.fy0)
    }

    fn psd(&self, shape: Shape, fx: f64, fy: f64) -> f64 {
        self.sigma
            * self.sigma
            * shape.shifted_density(fx, self.lx, self.fx0)
            * shape.shifted_density(fy, self.ly, self.fy0)
    }

    fn to_params(self) -> [f64; 5] {
        [self.sigma, self.lx, self.ly, self.fx0, self.fy0]
    }

    fn from_params(p: &[f64]) -> Self {
        Component {
            sigma: p[0].abs(),
            lx: p[1],
            ly: p[2],
            fx0: p[3],
            fy0: p[4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsdModel {
    Exponential(Component),
    Gaussian(Component),
    Wave(Component),
    Triangle(Component),
    Mixed {
        gaussian: Component,
        exponential: Component,
    },
}

impl PsdModel {
    pub fn single(family: Family, c: Component) -> Result<Self> {
        let model = match family {
            Family::Exponential => PsdModel::Exponential(c),
            Family::Gaussian => PsdModel::Gaussian(c),
            Family::Wave => PsdModel::Wave(c),
            Family::Triangle => PsdModel::Triangle(c),
            Family::Mixed => {
                return Err(Error::InvalidModel(
                    "mixed model needs two components".into(),
                ))
            }
        };
        model.validate()?;
        Ok(model)
    }

    pub fn mixed(gaussian: Component, exponential: Component) -> Result<Self> {
        let model = PsdModel::Mixed {
            gaussian,
            exponential,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn family(&self) -> Family {
        match self {
            PsdModel::Exponential(_) => Family::Exponential,
            PsdModel::Gaussian(_) => Family::Gaussian,
            PsdModel::Wave(_) => Family::Wave,
            PsdModel::Triangle(_) => Family::Triangle,
            PsdModel::Mixed { .. } => Family::Mixed,
        }
    }

    /// `(shape, component)` pairs whose sum is the model.
    pub fn components(&self) -> Vec<(Shape, Component)> {
        match *self {
            PsdModel::Exponential(c) => vec![(Shape::Exponential, c)],
            PsdModel::Gaussian(c) => vec![(Shape::Gaussian, c)],
            PsdModel::Wave(c) => vec![(Shape::Wave, c)],
            PsdModel::Triangle(c) => vec![(Shape::Triangle, c)],
            PsdModel::Mixed {
                gaussian,
                exponential,
            } => vec![(Shape::Gaussian, gaussian), (Shape::Exponential, exponential)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PsdModel::Mixed {
                gaussian,
                exponential,
            } => {
                gaussian.validate("gaussian component")?;
                exponential.validate("exponential component")
            }
            PsdModel::Exponential(c)
            | PsdModel::Gaussian(c)
            | PsdModel::Wave(c)
            | PsdModel::Triangle(c) => c.validate(self.family().name()),
        }
    }

    pub fn cov(&self, hx: f64, hy: f64) -> f64 {
        self.components()
            .iter()
            .map(|(shape, c)| c.cov(*shape, hx, hy))
            .sum()
    }

    pub fn psd(&self, fx: f64, fy: f64) -> f64 {
        self.components()
            .iter()
            .map(|(shape, c)| c.psd(*shape, fx, fy))
            .sum()
    }

    pub fn variance(&self) -> f64 {
        self.components()
            .iter()
            .map(|(_, c)| c.sigma * c.sigma)
            .sum()
    }

    /// PSD on the tensor grid `fx × fy`, row-major with `fy` as the slow
    /// index. Uses separability: one axis evaluation per distinct frequency.
    pub fn psd_grid(&self, fx: &[f64], fy: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; fx.len() * fy.len()];
        let mut ax = vec![0.0; fx.len()];
        let mut ay = vec![0.0; fy.len()];
        for (shape, c) in self.components() {
            for (a, &f) in ax.iter_mut().zip(fx) {
                *a = shape.shifted_density(f, c.lx, c.fx0);
            }
            let s2 = c.sigma * c.sigma;
            for (a, &f) in ay.iter_mut().zip(fy) {
                *a = s2 * shape.shifted_density(f, c.ly, c.fy0);
            }
            for (row, &b) in out.chunks_mut(fx.len()).zip(&ay) {
                for (o, &a) in row.iter_mut().zip(&ax) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Parameters in the order of [`Family::parameter_names`].
    pub fn parameters(&self) -> Vec<f64> {
        self.components()
            .iter()
            .flat_map(|(_, c)| c.to_params())
            .collect()
    }

    /// Inverse of [`PsdModel::parameters`]; negative sigmas are replaced by
    /// their absolute value.
    pub fn from_parameters(family: Family, params: &[f64]) -> Result<Self> {
        if params.len() != family.parameter_count() {
            return Err(Error::InvalidModel(format!(
                "{family} takes {} parameters, got {}",
                family.parameter_count(),
                params.len()
            )));
        }
        match family {
            Family::Mixed => Self::mixed(
                Component::from_params(&params[..5]),
                Component::from_params(&params[5..]),
            ),
            _ => Self::single(family, Component::from_params(params)),
        }
    }
}

pub fn cov_eval(model: &PsdModel, hx: f64, hy: f64) -> f64 {
    model.cov(hx, hy)
}

pub fn psd_eval(model: &PsdModel, fx: f64, fy: f64) -> f64 {
    model.psd(fx, fy)
}

pub fn model_variance(model: &PsdModel) -> f64 {
    model.variance()
}

/// Half the integral of the 1D autocorrelation: `l` for the exponential,
/// `(√π/2)·l` for the Gaussian.
pub fn scale_of_fluctuation(family: Family, l: f64) -> Result<f64> {
    if l.is_nan() || l <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "correlation length must be positive, got {l}"
        )));
    }
    match family {
        Family::Exponential => Ok(l),
        Family::Gaussian => Ok(0.5 * PI.sqrt() * l),
        other => Err(Error::InvalidArgument(format!(
            "scale of fluctuation is defined here for exponential and gaussian only, not {other}"
        ))),
    }
}

/// Flat JSON layout of a model file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRecord {
    pub family: Option<Family>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lx: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ly: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fx0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fy0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lx1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ly1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fx0_1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fy0_1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lx2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ly2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fx0_2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fy0_2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
}

impl ModelRecord {
    pub fn from_model(model: &PsdModel, units: Option<String>) -> Self {
        let mut r = ModelRecord {
            family: Some(model.family()),
            units,
            ..Default::default()
        };
        match *model {
            PsdModel::Mixed {
                gaussian: g,
                exponential: e,
            } => {
                r.sigma1 = Some(g.sigma);
                r.lx1 = Some(g.lx);
                r.ly1 = Some(g.ly);
                r.fx0_1 = Some(g.fx0);
                r.fy0_1 = Some(g.fy0);
                r.sigma2 = Some(e.sigma);
                r.lx2 = Some(e.lx);
                r.ly2 = Some(e.ly);
                r.fx0_2 = Some(e.fx0);
                r.fy0_2 = Some(e.fy0);
            }
            PsdModel::Exponential(c)
            | PsdModel::Gaussian(c)
            | PsdModel::Wave(c)
            | PsdModel::Triangle(c) => {
                r.sigma = Some(c.sigma);
                r.lx = Some(c.lx);
                r.ly = Some(c.ly);
                r.fx0 = Some(c.fx0);
                r.fy0 = Some(c.fy0);
            }
        }
        r
    }

    pub fn to_model(&self) -> Result<PsdModel> {
        let family = self
            .family
            .ok_or_else(|| Error::InvalidModel("missing `family`".into()))?;
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::InvalidModel(format!("{family} model is missing `{name}`")))
        };
        let shift = |v: Option<f64>| v.unwrap_or(0.0);
        if family == Family::Mixed {
            if self.sigma.is_some() || self.lx.is_some() || self.ly.is_some() {
                return Err(Error::InvalidModel(
                    "mixed model takes sigma1/sigma2 style parameters".into(),
                ));
            }
            let g = Component {
                sigma: need(self.sigma1, "sigma1")?,
                lx: need(self.lx1, "lx1")?,
                ly: need(self.ly1, "ly1")?,
                fx0: shift(self.fx0_1),
                fy0: shift(self.fy0_1),
            };
            let e = Component {
                sigma: need(self.sigma2, "sigma2")?,
                lx: need(self.lx2, "lx2")?,
                ly: need(self.ly2, "ly2")?,
                fx0: shift(self.fx0_2),
                fy0: shift(self.fy0_2),
            };
            PsdModel::mixed(g, e)
        } else {
            if self.sigma1.is_some() || self.sigma2.is_some() {
                return Err(Error::InvalidModel(format!(
                    "{family} model takes `sigma`, not sigma1/sigma2"
                )));
            }
            let c = Component {
                sigma: need(self.sigma, "sigma")?,
                lx: need(self.lx, "lx")?,
                ly: need(self.ly, "ly")?,
                fx0: shift(self.fx0),
                fy0: shift(self.fy0),
            };
            PsdModel::single(family, c)
        }
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<PsdModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let record: ModelRecord = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })?;
    record.to_model()
}

pub fn save_model(model: &PsdModel, units: Option<&str>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let record = ModelRecord::from_model(model, units.map(str::to_string));
    let text = serde_json::to_string_pretty(&record).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
