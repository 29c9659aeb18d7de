//! Modified periodograms, their ensemble average, the direct covariance
//! estimator and the Bartlett bias taper.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::{self, Ensemble, GridField, GridSpec};
use crate::window::{window_grid, WindowGrid, WindowKind};

/// PSD estimate on the centered DFT frequency grid
/// `f_k = k / (nx·dx)`, `k = -⌊nx/2⌋ .. ⌈nx/2⌉ - 1` (same along Y), stored
/// row-major with zero frequency at index `(⌊nx/2⌋, ⌊ny/2⌋)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Periodogram {
    spec: GridSpec,
    values: Vec<f64>,
    window: WindowKind,
    n_averaged: usize,
    demean: bool,
}

impl Periodogram {
    /// `spec` is the geometry of the field(s) the estimate came from.
    pub fn new(
        spec: GridSpec,
        values: Vec<f64>,
        window: WindowKind,
        n_averaged: usize,
        demean: bool,
    ) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(Error::InvalidArgument(format!(
                "periodogram needs {} values, got {}",
                spec.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument(
                "periodogram values must be finite and nonnegative".into(),
            ));
        }
        if n_averaged == 0 {
            return Err(Error::InvalidArgument("n_averaged must be >= 1".into()));
        }
        Ok(Periodogram {
            spec,
            values,
            window,
            n_averaged,
            demean,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn window(&self) -> WindowKind {
        self.window
    }

    pub fn n_averaged(&self) -> usize {
        self.n_averaged
    }

    pub fn demean(&self) -> bool {
        self.demean
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.spec.index(i, j)]
    }

    pub fn fx(&self) -> Vec<f64> {
        centered_frequencies(self.spec.nx, self.spec.dx)
    }

    pub fn fy(&self) -> Vec<f64> {
        centered_frequencies(self.spec.ny, self.spec.dy)
    }

    /// Frequency resolution `(1/(nx·dx), 1/(ny·dy))`.
    pub fn resolution(&self) -> (f64, f64) {
        let (d1, d2) = self.spec.extent();
        (1.0 / d1, 1.0 / d2)
    }

    /// Grid index of the zero-frequency bin.
    pub fn zero_index(&self) -> (usize, usize) {
        (self.spec.nx / 2, self.spec.ny / 2)
    }

    /// Discrete integral `Σ S Δf1 Δf2`.
    pub fn total_mass(&self) -> f64 {
        let (a, b) = self.resolution();
        self.values.iter().sum::<f64>() * a * b
    }

    /// Copy with every value multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.spec,
            self.values.iter().map(|v| v * c).collect(),
            self.window,
            self.n_averaged,
            self.demean,
        )
    }
}

/// Centered DFT frequencies for `n` samples at spacing `d`.
pub fn centered_frequencies(n: usize, d: f64) -> Vec<f64> {
    let half = (n / 2) as f64;
    (0..n).map(|i| (i as f64 - half) / (n as f64 * d)).collect()
}

/// Centered index of the frequency opposite to index `i`.
pub fn mirror_index(i: usize, n: usize) -> usize {
    (2 * (n / 2) + n - i) % n
}

/// In-place forward 2D DFT of a row-major `nx × ny` array.
pub(crate) fn fft2(data: &mut [Complex64], nx: usize, ny: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(nx), planner.plan_fft_inverse(ny))
    } else {
        (planner.plan_fft_forward(nx), planner.plan_fft_forward(ny))
    };
    row_fft.process(data);
    let mut column = vec![Complex64::new(0.0, 0.0); ny];
    for i in 0..nx {
        for (j, c) in column.iter_mut().enumerate() {
            *c = data[j * nx + i];
        }
        col_fft.process(&mut column);
        for (j, c) in column.iter().enumerate() {
            data[j * nx + i] = *c;
        }
    }
}

fn periodogram_values(field: &GridField, window: &WindowGrid, demean: bool) -> Vec<f64> {
    let spec = field.spec();
    let (nx, ny) = (spec.nx, spec.ny);
    let mean = if demean {
        field.values().iter().sum::<f64>() / field.values().len() as f64
    } else {
        0.0
    };
    let mut data: Vec<Complex64> = field
        .values()
        .iter()
        .zip(window.weights())
        .map(|(z, w)| Complex64::new((z - mean) * w, 0.0))
        .collect();
    fft2(&mut data, nx, ny, false);
    let norm = 1.0 / (nx as f64 * ny as f64 * window.energy());
    let (hx, hy) = (nx / 2, ny / 2);
    let mut out = vec![0.0; nx * ny];
    for j in 0..ny {
        let src_j = (j + ny - hy) % ny;
        for i in 0..nx {
            let src_i = (i + nx - hx) % nx;
            out[j * nx + i] = data[src_j * nx + src_i].norm_sqr() * norm;
        }
    }
    out
}

/// `Ŝ = |DFT{z·w}|² / (N·M·U)` on the centered frequency grid.
pub fn modified_periodogram(
    field: &GridField,
    window: WindowKind,
    demean: bool,
) -> Result<Periodogram> {
    let w = window_grid(window, field.spec())?;
    let values = periodogram_values(field, &w, demean);
    Periodogram::new(*field.spec(), values, window, 1, demean)
}

/// Pointwise mean of the members' modified periodograms. Members are
/// transformed in parallel; the sum runs in ascending member order.
pub fn average_periodogram(
    ens: &Ensemble,
    window: WindowKind,
    demean: bool,
) -> Result<Periodogram> {
    let spec = *ens.spec();
    let w = window_grid(window, &spec)?;
    let each: Vec<Vec<f64>> = ens
        .fields()
        .par_iter()
        .map(|f| periodogram_values(f, &w, demean))
        .collect();
    let mut sum = vec![0.0; spec.len()];
    for p in &each {
        for (s, v) in sum.iter_mut().zip(p) {
            *s += v;
        }
    }
    let l = each.len() as f64;
    sum.iter_mut().for_each(|s| *s /= l);
    Periodogram::new(spec, sum, window, each.len(), demean)
}

/// Values on the nonnegative lag grid `(k·dx, l·dy)`,
/// `k ∈ [0, max_lag_x]`, `l ∈ [0, max_lag_y]`, row-major in `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagGrid {
    pub max_lag_x: usize,
    pub max_lag_y: usize,
    pub dx: f64,
    pub dy: f64,
    pub values: Vec<f64>,
}

impl LagGrid {
    #[inline]
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.values[l * (self.max_lag_x + 1) + k]
    }
}

pub type CovarianceGrid = LagGrid;

/// Biased direct estimator
/// `Ĉ(k, l) = (1/NM) Σ_{n<N-k} Σ_{m<M-l} Z(n+k, m+l)·Z(n, m)`.
pub fn covariance_estimate(
    field: &GridField,
    max_lag_x: usize,
    max_lag_y: usize,
) -> Result<CovarianceGrid> {
    let spec = field.spec();
    if max_lag_x >= spec.nx || max_lag_y >= spec.ny {
        return Err(Error::InvalidArgument(format!(
            "lags ({max_lag_x}, {max_lag_y}) must stay below the grid extent {}x{}",
            spec.nx, spec.ny
        )));
    }
    let norm = 1.0 / (spec.nx * spec.ny) as f64;
    let mut values = Vec::with_capacity((max_lag_x + 1) * (max_lag_y + 1));
    for l in 0..=max_lag_y {
        for k in 0..=max_lag_x {
            let mut acc = 0.0;
            for m in 0..spec.ny - l {
                for n in 0..spec.nx - k {
                    acc += field.get(n + k, m + l) * field.get(n, m);
                }
            }
            values.push(acc * norm);
        }
    }
    Ok(LagGrid {
        max_lag_x,
        max_lag_y,
        dx: spec.dx,
        dy: spec.dy,
        values,
    })
}

/// `w_B(k, l) = ((N-|k|)/N)·((M-|l|)/M)` inside the support, else 0.
pub fn bartlett_bias_weight(n: usize, m: usize, k: i64, l: i64) -> f64 {
    let (nf, mf) = (n as f64, m as f64);
    if k.unsigned_abs() as usize > n || l.unsigned_abs() as usize > m {
        return 0.0;
    }
    ((nf - k.abs() as f64) / nf) * ((mf - l.abs() as f64) / mf)
}

/// `w_B` on lags `k ∈ [0, N]`, `l ∈ [0, M]` (unit spacing); the weight is
/// even in both lags.
pub fn bartlett_bias_weights(n: usize, m: usize) -> Result<LagGrid> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument("N and M must be >= 1".into()));
    }
    let mut values = Vec::with_capacity((n + 1) * (m + 1));
    for l in 0..=m {
        for k in 0..=n {
            values.push(bartlett_bias_weight(n, m, k as i64, l as i64));
        }
    }
    Ok(LagGrid {
        max_lag_x: n,
        max_lag_y: m,
        dx: 1.0,
        dy: 1.0,
        values,
    })
}

fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Writes the values as an RFGRID file whose axes are frequencies, plus a
/// `<path>.meta` sidecar with `window`, `n_averaged`, `demean`, `dx`, `dy`.
pub fn save_periodogram(p: &Periodogram, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (dfx, dfy) = p.resolution();
    let (fx, fy) = (p.fx(), p.fy());
    let freq_spec = GridSpec::with_origin(p.spec.nx, p.spec.ny, dfx, dfy, fx[0], fy[0])?;
    grid::save_grid(&GridField::new(freq_spec, p.values.clone())?, path)?;
    let meta = format!(
        "window={}\nn_averaged={}\ndemean={}\ndx={}\ndy={}\n",
        p.window,
        p.n_averaged,
        p.demean,
        grid::format_value(p.spec.dx),
        grid::format_value(p.spec.dy)
    );
    let mpath = meta_path(path);
    fs::write(&mpath, meta).map_err(|e| Error::io(&mpath, e))
}

pub fn load_periodogram(path: impl AsRef<Path>) -> Result<Periodogram> {
    let path = path.as_ref();
    let values = grid::load_grid(path)?;
    let mpath = meta_path(path);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let (mut window, mut n_averaged, mut demean, mut dx, mut dy) = (None, None, None, None, None);
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::parse(&mpath, k + 1, msg);
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "window" => window = Some(value.parse::<WindowKind>().map_err(|e| bad(e.to_string()))?),
            "n_averaged" => {
                n_averaged = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?)
            }
            "demean" => demean = Some(value.parse::<bool>().map_err(|e| bad(e.to_string()))?),
            "dx" => dx = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "dy" => dy = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            other => return Err(bad(format!("unknown key `{other}`"))),
        }
    }
    let missing = |name: &str| Error::parse(&mpath, 0, format!("missing `{name}`"));
    let fspec = values.spec();
    let spec = GridSpec::new(
        fspec.nx,
        fspec.ny,
        dx.ok_or_else(|| missing("dx"))?,
        dy.ok_or_else(|| missing("dy"))?,
    )?;
    Periodogram::new(
        spec,
        values.into_values(),
        window.ok_or_else(|| missing("window"))?,
        n_averaged.ok_or_else(|| missing("n_averaged"))?,
        demean.ok_or_else(|| missing("demean"))?,
    )
}
