//! Text dump format for fields.
//!
//! A header of `# axis <kind> <min> <max> <count>` lines (one per axis),
//! an optional `# samples <n>` line for batches, then `# data row-major`
//! followed by whitespace-separated values. Values are written with 17
//! significant digits so round-trips are bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::grid::{Axis, AxisKind, FieldTensor, Grid};

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_header<W: Write>(w: &mut W, grid: &Grid, samples: Option<usize>) -> Result<()> {
    for a in grid.axes() {
        writeln!(w, "# axis {} {} {} {}", a.kind.label(), fmt(a.min), fmt(a.max), a.count)?;
    }
    if let Some(n) = samples {
        writeln!(w, "# samples {n}")?;
    }
    writeln!(w, "# data row-major")?;
    Ok(())
}

fn write_values<W: Write>(w: &mut W, values: &ArrayD<f64>) -> Result<()> {
    let mut col = 0;
    for v in values.iter() {
        if col > 0 {
            write!(w, " ")?;
        }
        write!(w, "{}", fmt(*v))?;
        col += 1;
        if col == 8 {
            writeln!(w)?;
            col = 0;
        }
    }
    if col > 0 {
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_field<W: Write>(w: &mut W, field: &FieldTensor) -> Result<()> {
    write_header(w, field.grid(), None)?;
    write_values(w, field.values())
}

pub fn save_field(path: &Path, field: &FieldTensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_field(&mut w, field)
}

/// Dump a batch of fields over a common grid, leading sample axis.
pub fn write_batch<W: Write>(w: &mut W, fields: &[FieldTensor]) -> Result<()> {
    let first = fields
        .first()
        .ok_or_else(|| Error::Size("cannot dump an empty batch".into()))?;
    write_header(w, first.grid(), Some(fields.len()))?;
    for f in fields {
        first.check_same_grid(f)?;
        write_values(w, f.values())?;
    }
    Ok(())
}

pub fn save_batch(path: &Path, fields: &[FieldTensor]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_batch(&mut w, fields)
}

struct Parsed {
    grid: Grid,
    samples: Option<usize>,
    values: Vec<f64>,
}

fn parse<R: Read>(r: R) -> Result<Parsed> {
    let reader = BufReader::new(r);
    let mut axes = Vec::new();
    let mut samples = None;
    let mut in_data = false;
    let mut values = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if !in_data {
            let tokens: Vec<&str> = line.split_whitespace().collect();
            match tokens.as_slice() {
                ["#", "axis", kind, min, max, count] => {
                    axes.push(Axis::new(
                        AxisKind::from_label(kind)?,
                        parse_f64(min)?,
                        parse_f64(max)?,
                        count
                            .parse()
                            .map_err(|_| Error::Parse(format!("bad axis count '{count}'")))?,
                    ));
                }
                ["#", "samples", n] => {
                    samples = Some(
                        n.parse()
                            .map_err(|_| Error::Parse(format!("bad sample count '{n}'")))?,
                    );
                }
                ["#", "data", "row-major"] => in_data = true,
                _ => return Err(Error::Parse(format!("unexpected header line '{line}'"))),
            }
        } else {
            for tok in line.split_whitespace() {
                values.push(parse_f64(tok)?);
            }
        }
    }
    if !in_data {
        return Err(Error::Parse("missing '# data row-major' marker".into()));
    }
    Ok(Parsed {
        grid: Grid::new(axes)?,
        samples,
        values,
    })
}

fn parse_f64(tok: &str) -> Result<f64> {
    tok.parse()
        .map_err(|_| Error::Parse(format!("bad value '{tok}'")))
}

pub fn read_field<R: Read>(r: R) -> Result<FieldTensor> {
    let parsed = parse(r)?;
    if parsed.samples.is_some() {
        return Err(Error::Parse("expected a single field, found a batch dump".into()));
    }
    values_to_field(&parsed.grid, parsed.values)
}

pub fn load_field(path: &Path) -> Result<FieldTensor> {
    read_field(File::open(path)?)
}

pub fn read_batch<R: Read>(r: R) -> Result<Vec<FieldTensor>> {
    let parsed = parse(r)?;
    let n = parsed
        .samples
        .ok_or_else(|| Error::Parse("expected a batch dump with '# samples'".into()))?;
    let per = parsed.grid.num_points();
    if parsed.values.len() != n * per {
        return Err(Error::Parse(format!(
            "expected {} values ({n} samples x {per}), found {}",
            n * per,
            parsed.values.len()
        )));
    }
    parsed
        .values
        .chunks(per)
        .map(|chunk| values_to_field(&parsed.grid, chunk.to_vec()))
        .collect()
}

pub fn load_batch(path: &Path) -> Result<Vec<FieldTensor>> {
    read_batch(File::open(path)?)
}

fn values_to_field(grid: &Grid, values: Vec<f64>) -> Result<FieldTensor> {
    let shape = grid.shape();
    let expected: usize = shape.iter().product();
    if values.len() != expected {
        return Err(Error::Parse(format!(
            "expected {expected} values for grid shape {shape:?}, found {}",
            values.len()
        )));
    }
    let arr = ArrayD::from_shape_vec(IxDyn(&shape), values)
        .map_err(|e| Error::Parse(e.to_string()))?;
    FieldTensor::new(grid.clone(), arr)
}
