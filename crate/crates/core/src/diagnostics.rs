//! Empirical homogeneity check.
//!
//! For growing ensemble sizes K the point-wise ensemble mean and variance
//! fields are formed, and the spatial coefficient of variation of each is
//! recorded. For a homogeneous field both curves decay towards zero as K
//! grows; a deterministic trend makes the mean curve level off instead.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{format_value, spatial_stats, Ensemble, GridField};
use crate::rng;

/// Point-wise mean and unbiased (1/(K−1)) variance over the first `k`
/// members.
pub fn ensemble_moments(ens: &Ensemble, k: usize) -> Result<(GridField, GridField)> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "ensemble moments need K >= 2, got {k}"
        )));
    }
    if k > ens.len() {
        return Err(Error::InvalidArgument(format!(
            "K = {k} exceeds ensemble size {}",
            ens.len()
        )));
    }
    let spec = *ens.spec();
    let members = &ens.fields()[..k];
    let n = spec.len();
    let mut mean = vec![0.0; n];
    for f in members {
        for (m, v) in mean.iter_mut().zip(f.values()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= k as f64);
    let mut var = vec![0.0; n];
    for f in members {
        for ((s, v), m) in var.iter_mut().zip(f.values()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= (k - 1) as f64);
    Ok((GridField::new(spec, mean)?, GridField::new(spec, var)?))
}

/// Order in which members enter the running moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MemberOrder {
    /// First K members as stored.
    #[default]
    Prefix,
    /// A seeded random permutation, for sensitivity checks.
    Shuffled { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneityReport {
    pub k_values: Vec<usize>,
    /// Spatial CV of the mean field per K; `None` when its mean is zero.
    pub cv_mean: Vec<Option<f64>>,
    pub cv_var: Vec<Option<f64>>,
    pub final_mean_field: GridField,
    pub final_var_field: GridField,
}

impl HomogeneityReport {
    /// Fraction of consecutive defined pairs in which the mean curve drops.
    pub fn decreasing_fraction_mean(&self) -> Option<f64> {
        decreasing_fraction(&self.cv_mean)
    }

    pub fn decreasing_fraction_var(&self) -> Option<f64> {
        decreasing_fraction(&self.cv_var)
    }
}

fn decreasing_fraction(curve: &[Option<f64>]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = curve
        .windows(2)
        .filter_map(|w| Some((w[0]?, w[1]?)))
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let down = pairs.iter().filter(|(a, b)| b < a).count();
    Some(down as f64 / pairs.len() as f64)
}

/// True when `curve` ends below where it starts and never rises by more
/// than `tolerance` times its first value between consecutive steps.
pub fn overall_decreasing(curve: &[Option<f64>], tolerance: f64) -> bool {
    let defined: Vec<f64> = curve.iter().flatten().copied().collect();
    let (Some(&first), Some(&last)) = (defined.first(), defined.last()) else {
        return false;
    };
    last < first && defined.windows(2).all(|w| w[1] - w[0] <= tolerance * first)
}

pub fn homogeneity_curves(ens: &Ensemble) -> Result<HomogeneityReport> {
    homogeneity_curves_with(ens, MemberOrder::Prefix)
}

/// CV curves of the ensemble moments for K = 2..L.
pub fn homogeneity_curves_with(ens: &Ensemble, order: MemberOrder) -> Result<HomogeneityReport> {
    let l = ens.len();
    if l < 3 {
        return Err(Error::InvalidArgument(format!(
            "homogeneity curves need at least 3 realizations, got {l}"
        )));
    }
    let ordered;
    let ens = match order {
        MemberOrder::Prefix => ens,
        MemberOrder::Shuffled { seed } => {
            let mut fields = ens.fields().to_vec();
            fields.shuffle(&mut rng::stream(seed, 0));
            ordered = Ensemble::new(fields)?;
            &ordered
        }
    };
    let k_values: Vec<usize> = (2..=l).collect();
    let cvs: Vec<(Option<f64>, Option<f64>)> = k_values
        .par_iter()
        .map(|&k| {
            let (m, v) = ensemble_moments(ens, k)?;
            Ok((spatial_stats(&m).cv, spatial_stats(&v).cv))
        })
        .collect::<Result<_>>()?;
    let (final_mean_field, final_var_field) = ensemble_moments(ens, l)?;
    Ok(HomogeneityReport {
        k_values,
        cv_mean: cvs.iter().map(|c| c.0).collect(),
        cv_var: cvs.iter().map(|c| c.1).collect(),
        final_mean_field,
        final_var_field,
    })
}

fn label(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), format_value)
}

/// Writes `K,cv_mean,cv_var`, one row per ensemble size.
pub fn save_homogeneity_csv(report: &HomogeneityReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        writeln!(w, "K,cv_mean,cv_var")?;
        for ((k, m), v) in report.k_values.iter().zip(&report.cv_mean).zip(&report.cv_var) {
            writeln!(w, "{k},{},{}", label(*m), label(*v))?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}
