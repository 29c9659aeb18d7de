//! Separable tapering windows and the window energy normalizer.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    #[serde(rename = "rect")]
    Rectangular,
    Bartlett,
    Hann,
    Hamming,
    #[default]
    Blackman,
}

impl WindowKind {
    pub const ALL: [WindowKind; 5] = [
        WindowKind::Rectangular,
        WindowKind::Bartlett,
        WindowKind::Hann,
        WindowKind::Hamming,
        WindowKind::Blackman,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WindowKind::Rectangular => "rect",
            WindowKind::Bartlett => "bartlett",
            WindowKind::Hann => "hann",
            WindowKind::Hamming => "hamming",
            WindowKind::Blackman => "blackman",
        }
    }

    /// One-axis factor at offset `k` from the center with half-width `n`.
    pub fn factor(self, k: f64, n: f64) -> f64 {
        if k.abs() > n {
            return 0.0;
        }
        let a = PI * k / n;
        match self {
            WindowKind::Rectangular => 1.0,
            WindowKind::Bartlett => (n - k.abs()) / n,
            WindowKind::Hann => 0.5 + 0.5 * a.cos(),
            WindowKind::Hamming => 0.54 + 0.46 * a.cos(),
            WindowKind::Blackman => 0.42 + 0.5 * a.cos() + 0.08 * (2.0 * a).cos(),
        }
    }
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rect" | "rectangular" => Ok(WindowKind::Rectangular),
            "bartlett" => Ok(WindowKind::Bartlett),
            "hann" => Ok(WindowKind::Hann),
            "hamming" => Ok(WindowKind::Hamming),
            "blackman" => Ok(WindowKind::Blackman),
            other => Err(Error::InvalidArgument(format!("unknown window `{other}`"))),
        }
    }
}

/// Separable window value at offsets `(k, l)` for half-widths `(n, m)`.
pub fn window_value(kind: WindowKind, k: f64, l: f64, n: f64, m: f64) -> Result<f64> {
    if !(n > 0.0 && m > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "window half-widths must be positive, got N={n} M={m}"
        )));
    }
    Ok(kind.factor(k, n) * kind.factor(l, m))
}

/// A window sampled on a grid and centered on its midpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowGrid {
    kind: WindowKind,
    spec: GridSpec,
    wx: Vec<f64>,
    wy: Vec<f64>,
    weights: Vec<f64>,
    energy: f64,
}

impl WindowGrid {
    pub fn kind(&self) -> WindowKind {
        self.kind
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// X and Y factors; `weights[j·nx + i] = wx[i]·wy[j]`.
    pub fn factors(&self) -> (&[f64], &[f64]) {
        (&self.wx, &self.wy)
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }
}

fn axis_factors(kind: WindowKind, count: usize) -> Vec<f64> {
    let half = (count as f64 - 1.0) / 2.0;
    (0..count)
        .map(|i| kind.factor(i as f64 - half, half))
        .collect()
}

pub fn window_grid(kind: WindowKind, spec: &GridSpec) -> Result<WindowGrid> {
    spec.validate()?;
    let wx = axis_factors(kind, spec.nx);
    let wy = axis_factors(kind, spec.ny);
    let weights = wy
        .iter()
        .flat_map(|&b| wx.iter().map(move |&a| a * b))
        .collect();
    let mut grid = WindowGrid {
        kind,
        spec: *spec,
        wx,
        wy,
        weights,
        energy: 0.0,
    };
    grid.energy = window_energy(&grid)?;
    Ok(grid)
}

/// `U = Σ w² / (D1·D2)` with `D1 = nx·dx`, `D2 = ny·dy`.
pub fn window_energy(w: &WindowGrid) -> Result<f64> {
    let sum_sq: f64 = w.weights.iter().map(|v| v * v).sum();
    if sum_sq == 0.0 {
        return Err(Error::DegenerateWindow);
    }
    let (d1, d2) = w.spec.extent();
    Ok(sum_sq / (d1 * d2))
}
