//! Grid data model, edge trimming, spatial statistics and grid file I/O.

mod io;
mod project;

pub use io::{format_value, load_grid, load_scattered, save_grid, save_scattered};
pub use project::{project_scattered, Projection};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of a regular 2D grid. Sample `(i, j)` sits at
/// `(origin_x + i·dx, origin_y + j·dy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub origin_x: f64,
    pub origin_y: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Self> {
        Self::with_origin(nx, ny, dx, dy, 0.0, 0.0)
    }

    pub fn with_origin(
        nx: usize,
        ny: usize,
        dx: f64,
        dy: f64,
        origin_x: f64,
        origin_y: f64,
    ) -> Result<Self> {
        let spec = GridSpec {
            nx,
            ny,
            dx,
            dy,
            origin_x,
            origin_y,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2x2 samples, got {}x{}",
                self.nx, self.ny
            )));
        }
        if !(self.dx > 0.0 && self.dy > 0.0 && self.dx.is_finite() && self.dy.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "spacing must be positive, got dx={} dy={}",
                self.dx, self.dy
            )));
        }
        if !(self.origin_x.is_finite() && self.origin_y.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.origin_x + i as f64 * self.dx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.origin_y + j as f64 * self.dy
    }

    /// Physical extent `(D1, D2) = (nx·dx, ny·dy)`.
    pub fn extent(&self) -> (f64, f64) {
        (self.nx as f64 * self.dx, self.ny as f64 * self.dy)
    }

    /// Same sample counts and spacing; origin is ignored.
    pub fn same_shape(&self, other: &GridSpec) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.dx == other.dx && self.dy == other.dy
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values for a {}x{} grid, got {}",
                spec.len(),
                spec.nx,
                spec.ny,
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "non-finite value at index {k}"
            )));
        }
        Ok(GridField { spec, values })
    }

    pub fn constant(spec: GridSpec, value: f64) -> Result<Self> {
        Self::new(spec, vec![value; spec.len()])
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(spec.len());
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                values.push(f(spec.x(i), spec.y(j)));
            }
        }
        Self::new(spec, values)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.spec.index(i, j)]
    }

    /// Applies `f` to every value, keeping the spec.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.spec, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn demeaned(&self) -> Self {
        let mean = self.values.iter().sum::<f64>() / self.values.len() as f64;
        GridField {
            spec: self.spec,
            values: self.values.iter().map(|v| v - mean).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteredPoint {
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScatteredField {
    pub points: Vec<ScatteredPoint>,
}

impl ScatteredField {
    pub fn new(points: Vec<ScatteredPoint>) -> Result<Self> {
        if let Some(k) = points
            .iter()
            .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.value.is_finite()))
        {
            return Err(Error::InvalidArgument(format!("non-finite scattered point {k}")));
        }
        Ok(ScatteredField { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Realizations sharing one grid geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    fields: Vec<GridField>,
    labels: Option<Vec<String>>,
}

impl Ensemble {
    pub fn new(fields: Vec<GridField>) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty ensemble".into()))?;
        if let Some(index) = fields
            .iter()
            .position(|f| !f.spec().same_shape(first.spec()))
        {
            return Err(Error::SpecMismatch { index });
        }
        Ok(Ensemble {
            fields,
            labels: None,
        })
    }

    pub fn with_labels(fields: Vec<GridField>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != fields.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} fields",
                labels.len(),
                fields.len()
            )));
        }
        let mut ens = Self::new(fields)?;
        ens.labels = Some(labels);
        Ok(ens)
    }

    pub fn spec(&self) -> &GridSpec {
        self.fields[0].spec()
    }

    pub fn fields(&self) -> &[GridField] {
        &self.fields
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// The first `k` members, labels included.
    pub fn prefix(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.len() {
            return Err(Error::InvalidArgument(format!(
                "prefix of {k} members from an ensemble of {}",
                self.len()
            )));
        }
        Ok(Ensemble {
            fields: self.fields[..k].to_vec(),
            labels: self.labels.as_ref().map(|l| l[..k].to_vec()),
        })
    }

    pub fn map(&self, f: impl Fn(&GridField) -> Result<GridField>) -> Result<Self> {
        let fields = self.fields.iter().map(f).collect::<Result<Vec<_>>>()?;
        let mut ens = Self::new(fields)?;
        ens.labels = self.labels.clone();
        Ok(ens)
    }
}

/// Removes `floor(fraction·nx)` columns from each X edge and
/// `floor(fraction·ny)` rows from each Y edge.
pub fn trim_margin(field: &GridField, fraction: f64) -> Result<GridField> {
    if !(0.0..0.5).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "trim fraction must lie in [0, 0.5), got {fraction}"
        )));
    }
    let spec = field.spec();
    let cx = (fraction * spec.nx as f64).floor() as usize;
    let cy = (fraction * spec.ny as f64).floor() as usize;
    let nx = spec.nx.saturating_sub(2 * cx);
    let ny = spec.ny.saturating_sub(2 * cy);
    if nx < 2 || ny < 2 {
        return Err(Error::OverTrimmed { nx, ny });
    }
    let mut values = Vec::with_capacity(nx * ny);
    for j in cy..cy + ny {
        let row = spec.index(cx, j);
        values.extend_from_slice(&field.values()[row..row + nx]);
    }
    let trimmed = GridSpec {
        nx,
        ny,
        origin_x: spec.x(cx),
        origin_y: spec.y(cy),
        ..*spec
    };
    GridField::new(trimmed, values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialStats {
    pub mean: f64,
    pub variance: f64,
    /// `None` when the spatial mean is zero.
    pub cv: Option<f64>,
}

impl SpatialStats {
    /// CV rendered for reports: the number, or `n/a`.
    pub fn cv_label(&self) -> String {
        match self.cv {
            Some(cv) => format_value(cv),
            None => "n/a".to_string(),
        }
    }
}

/// Spatial mean, population variance and coefficient of variation
/// `std / |mean|`.
pub fn spatial_stats(field: &GridField) -> SpatialStats {
    let n = field.values().len() as f64;
    let mean = field.values().iter().sum::<f64>() / n;
    let variance = field
        .values()
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    let cv = (mean != 0.0).then(|| variance.sqrt() / mean.abs());
    SpatialStats { mean, variance, cv }
}
