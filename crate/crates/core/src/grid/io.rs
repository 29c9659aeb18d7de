//! `RFGRID 1` text grids and `x,y,value` scattered CSV files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{GridField, GridSpec, ScatteredField, ScatteredPoint};
use crate::error::{Error, Result};

const MAGIC: &str = "RFGRID";
const VERSION: &str = "1";

/// Shortest representation that parses back to the same `f64`; integral
/// values print without exponent or fraction.
pub fn format_value(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else if (1e-4..1e15).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn save_grid(field: &GridField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let spec = field.spec();
    let write = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        writeln!(
            w,
            "{MAGIC} {VERSION} {} {} {} {} {} {}",
            spec.nx,
            spec.ny,
            format_value(spec.dx),
            format_value(spec.dy),
            format_value(spec.origin_x),
            format_value(spec.origin_y)
        )?;
        for row in field.values().chunks(spec.nx) {
            let line: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<GridField> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_grid(&text, path)
}

fn parse_grid(text: &str, path: &Path) -> Result<GridField> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 8 || tokens[0] != MAGIC || tokens[1] != VERSION {
        return Err(Error::parse(
            path,
            1,
            format!("expected header `{MAGIC} {VERSION} nx ny dx dy origin_x origin_y`"),
        ));
    }
    let count = |k: usize, name: &str| -> Result<usize> {
        tokens[k]
            .parse()
            .map_err(|_| Error::parse(path, 1, format!("bad {name} `{}`", tokens[k])))
    };
    let real = |k: usize, name: &str| -> Result<f64> {
        tokens[k]
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::parse(path, 1, format!("bad {name} `{}`", tokens[k])))
    };
    let spec = GridSpec {
        nx: count(2, "nx")?,
        ny: count(3, "ny")?,
        dx: real(4, "dx")?,
        dy: real(5, "dy")?,
        origin_x: real(6, "origin_x")?,
        origin_y: real(7, "origin_y")?,
    };
    spec.validate()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?;

    let expected = spec.len();
    let mut values = Vec::with_capacity(expected);
    let mut last_line = 1;
    for (idx, line) in lines {
        let line_no = idx + 1;
        for token in line.split_whitespace() {
            let v: f64 = token.parse().map_err(|_| {
                Error::parse(path, line_no, format!("invalid number `{token}`"))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("non-finite value `{token}`"),
                ));
            }
            if values.len() == expected {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("more than the {expected} values declared by the header"),
                ));
            }
            values.push(v);
            last_line = line_no;
        }
    }
    if values.len() < expected {
        return Err(Error::parse(
            path,
            last_line,
            format!(
                "header declares {}x{} = {expected} values but only {} present ({} missing)",
                spec.nx,
                spec.ny,
                values.len(),
                expected - values.len()
            ),
        ));
    }
    GridField::new(spec, values)
}

pub fn load_scattered(path: impl AsRef<Path>) -> Result<ScatteredField> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv {
            path: path.into(),
            source: e,
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Csv {
            path: path.into(),
            source: e,
        })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["x", "y", "value"] {
        return Err(Error::parse(path, 1, "expected header `x,y,value`"));
    }
    let mut points = Vec::new();
    for (k, record) in reader.deserialize::<ScatteredPoint>().enumerate() {
        let p = record.map_err(|e| Error::parse(path, k + 2, e.to_string()))?;
        if !(p.x.is_finite() && p.y.is_finite() && p.value.is_finite()) {
            return Err(Error::parse(path, k + 2, "non-finite value"));
        }
        points.push(p);
    }
    ScatteredField::new(points)
}

pub fn save_scattered(data: &ScatteredField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e| Error::Csv {
        path: path.into(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for p in &data.points {
        w.serialize(p).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
