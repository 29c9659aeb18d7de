//! Axis and diagonal cuts through an empirical periodogram and a model.

use std::fmt;
use std::str::FromStr;

use rfid_core::{Periodogram, PsdModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutKind {
    /// Along fx, at a fixed fy row.
    X,
    /// Along fy, at a fixed fx column.
    Y,
    /// Along the index diagonal through the zero bin, shifted in fy.
    Diag,
}

impl fmt::Display for CutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CutKind::X => "x",
            CutKind::Y => "y",
            CutKind::Diag => "diag",
        })
    }
}

impl FromStr for CutKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "x" => Ok(CutKind::X),
            "y" => Ok(CutKind::Y),
            "diag" => Ok(CutKind::Diag),
            other => Err(format!("unknown cut `{other}` (expected x, y or diag)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutRow {
    pub cut: CutKind,
    /// fy of an x cut, fx of a y cut, fy at fx = 0 of a diagonal cut.
    pub fixed_frequency: f64,
    /// fx for x and diagonal cuts, fy for y cuts.
    pub frequency: f64,
    pub empirical: f64,
    pub fitted: f64,
}

fn shifted(base: usize, offset: i64, n: usize) -> Option<usize> {
    let k = base as i64 + offset;
    (0..n as i64).contains(&k).then_some(k as usize)
}

/// Rows for every cut and offset, in the given order. Offsets are in bins
/// from the zero-frequency line.
pub fn cut_rows(
    p: &Periodogram,
    model: &PsdModel,
    cuts: &[CutKind],
    offsets: &[i64],
) -> Result<Vec<CutRow>, String> {
    let spec = p.spec();
    let (fx, fy) = (p.fx(), p.fy());
    let (i0, j0) = p.zero_index();
    let row = |cut, i: usize, j: usize, fixed: f64, freq: f64| CutRow {
        cut,
        fixed_frequency: fixed,
        frequency: freq,
        empirical: p.get(i, j),
        fitted: model.psd(fx[i], fy[j]),
    };
    let mut out = Vec::new();
    for &cut in cuts {
        for &o in offsets {
            match cut {
                CutKind::X => {
                    let j = shifted(j0, o, spec.ny).ok_or(format!("offset {o} leaves the fy range"))?;
                    out.extend((0..spec.nx).map(|i| row(cut, i, j, fy[j], fx[i])));
                }
                CutKind::Y => {
                    let i = shifted(i0, o, spec.nx).ok_or(format!("offset {o} leaves the fx range"))?;
                    out.extend((0..spec.ny).map(|j| row(cut, i, j, fx[i], fy[j])));
                }
                CutKind::Diag => {
                    let jo = shifted(j0, o, spec.ny).ok_or(format!("offset {o} leaves the fy range"))?;
                    let fixed = fy[jo];
                    for (i, &f) in fx.iter().enumerate() {
                        let t = i as i64 - i0 as i64;
                        if let Some(j) = shifted(jo, t, spec.ny) {
                            out.push(row(cut, i, j, fixed, f));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
