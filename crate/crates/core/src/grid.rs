//! Regular space-time grids and dense field tensors over them.
//!
//! A [`Grid`] is an ordered list of axes (at most one time axis, always
//! leading) with inclusive endpoints at uniform spacing. A [`FieldTensor`]
//! is a dense real array whose shape matches the grid point counts.

use ndarray::{ArrayD, Dimension, IxDyn};

use crate::error::{Error, Result};

/// Role of a grid axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisKind {
    Time,
    SpaceX,
    SpaceY,
}

impl AxisKind {
    pub fn label(&self) -> &'static str {
        match self {
            AxisKind::Time => "time",
            AxisKind::SpaceX => "space-x",
            AxisKind::SpaceY => "space-y",
        }
    }

    pub fn from_label(s: &str) -> Result<Self> {
        match s {
            "time" => Ok(AxisKind::Time),
            "space-x" => Ok(AxisKind::SpaceX),
            "space-y" => Ok(AxisKind::SpaceY),
            other => Err(Error::Parse(format!("unknown axis kind '{other}'"))),
        }
    }
}

/// One axis of a regular grid: inclusive endpoints, uniform spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub kind: AxisKind,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(kind: AxisKind, min: f64, max: f64, count: usize) -> Axis {
        Axis { kind, min, max, count }
    }

    /// Spacing between adjacent points (linspace convention).
    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }

    pub fn coords(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.count).map(|i| self.min + h * i as f64).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.count < 3 {
            return Err(Error::Config(format!(
                "axis {} needs at least 3 points, got {}",
                self.kind.label(),
                self.count
            )));
        }
        let h = self.spacing();
        if !h.is_finite() || h <= 0.0 {
            return Err(Error::Config(format!(
                "axis {} has non-positive or non-finite spacing {h}",
                self.kind.label()
            )));
        }
        Ok(())
    }
}

/// Regular space-time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Grid> {
        if axes.is_empty() {
            return Err(Error::Config("grid needs at least one axis".into()));
        }
        for a in &axes {
            a.validate()?;
        }
        let time_count = axes.iter().filter(|a| a.kind == AxisKind::Time).count();
        if time_count > 1 {
            return Err(Error::Config("grid admits at most one time axis".into()));
        }
        if time_count == 1 && axes[0].kind != AxisKind::Time {
            return Err(Error::Config("time axis must be the leading axis".into()));
        }
        Ok(Grid { axes })
    }

    /// 1D spatial grid.
    pub fn space_1d(min: f64, max: f64, count: usize) -> Result<Grid> {
        Grid::new(vec![Axis::new(AxisKind::SpaceX, min, max, count)])
    }

    /// 2D spatial grid.
    pub fn space_2d(x: (f64, f64, usize), y: (f64, f64, usize)) -> Result<Grid> {
        Grid::new(vec![
            Axis::new(AxisKind::SpaceX, x.0, x.1, x.2),
            Axis::new(AxisKind::SpaceY, y.0, y.1, y.2),
        ])
    }

    /// Prepend a time axis to a spatial grid.
    pub fn with_time(&self, t_min: f64, t_max: f64, count: usize) -> Result<Grid> {
        let mut axes = vec![Axis::new(AxisKind::Time, t_min, t_max, count)];
        axes.extend(self.axes.iter().cloned());
        Grid::new(axes)
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn ndim(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.count).collect()
    }

    pub fn num_points(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn axis_index(&self, kind: AxisKind) -> Option<usize> {
        self.axes.iter().position(|a| a.kind == kind)
    }

    pub fn spacing(&self, kind: AxisKind) -> Option<f64> {
        self.axis_index(kind).map(|i| self.axes[i].spacing())
    }

    pub fn has_time(&self) -> bool {
        self.axis_index(AxisKind::Time).is_some()
    }

    /// Grid without the time axis.
    pub fn spatial(&self) -> Result<Grid> {
        Grid::new(
            self.axes
                .iter()
                .filter(|a| a.kind != AxisKind::Time)
                .cloned()
                .collect(),
        )
    }

    /// Shrink every axis by `lo[i]` points at the start and `hi[i]` at the
    /// end, adjusting extents to keep point coordinates fixed.
    pub fn crop(&self, lo: &[usize], hi: &[usize]) -> Result<Grid> {
        if lo.len() != self.ndim() || hi.len() != self.ndim() {
            return Err(Error::Size("crop amounts must match grid dimensionality".into()));
        }
        let mut axes = Vec::with_capacity(self.ndim());
        for (i, a) in self.axes.iter().enumerate() {
            if lo[i] + hi[i] + 3 > a.count {
                return Err(Error::Size(format!(
                    "cannot crop {}+{} points from axis {} of extent {}",
                    lo[i],
                    hi[i],
                    a.kind.label(),
                    a.count
                )));
            }
            let h = a.spacing();
            axes.push(Axis::new(
                a.kind,
                a.min + h * lo[i] as f64,
                a.max - h * hi[i] as f64,
                a.count - lo[i] - hi[i],
            ));
        }
        Grid::new(axes)
    }

    /// Grid with one axis removed (for wall slices).
    pub fn without_axis(&self, index: usize) -> Result<Grid> {
        let mut axes = self.axes.clone();
        axes.remove(index);
        Grid::new(axes)
    }
}

/// Dense real-valued field over a [`Grid`]. Shape is immutable after
/// construction; elementwise operations require identical grids.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTensor {
    grid: Grid,
    values: ArrayD<f64>,
}

impl FieldTensor {
    pub fn new(grid: Grid, values: ArrayD<f64>) -> Result<FieldTensor> {
        if values.shape() != grid.shape().as_slice() {
            return Err(Error::GridMismatch(format!(
                "value shape {:?} does not match grid shape {:?}",
                values.shape(),
                grid.shape()
            )));
        }
        Ok(FieldTensor { grid, values })
    }

    pub fn zeros(grid: Grid) -> FieldTensor {
        let shape = grid.shape();
        FieldTensor {
            grid,
            values: ArrayD::zeros(IxDyn(&shape)),
        }
    }

    pub fn constant(grid: Grid, value: f64) -> FieldTensor {
        let shape = grid.shape();
        FieldTensor {
            grid,
            values: ArrayD::from_elem(IxDyn(&shape), value),
        }
    }

    /// Evaluate `f` at every grid point coordinate.
    pub fn from_fn<F: FnMut(&[f64]) -> f64>(grid: Grid, mut f: F) -> FieldTensor {
        let coords: Vec<Vec<f64>> = grid.axes().iter().map(|a| a.coords()).collect();
        let shape = grid.shape();
        let mut values = ArrayD::zeros(IxDyn(&shape));
        let mut point = vec![0.0; shape.len()];
        for (idx, v) in values.indexed_iter_mut() {
            for (d, &i) in idx.slice().iter().enumerate() {
                point[d] = coords[d][i];
            }
            *v = f(&point);
        }
        FieldTensor { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &ArrayD<f64> {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut ArrayD<f64> {
        &mut self.values
    }

    pub fn check_same_grid(&self, other: &FieldTensor) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(
                "elementwise operation on fields over different grids".into(),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &FieldTensor) -> Result<FieldTensor> {
        self.check_same_grid(other)?;
        Ok(FieldTensor {
            grid: self.grid.clone(),
            values: &self.values + &other.values,
        })
    }

    pub fn sub(&self, other: &FieldTensor) -> Result<FieldTensor> {
        self.check_same_grid(other)?;
        Ok(FieldTensor {
            grid: self.grid.clone(),
            values: &self.values - &other.values,
        })
    }

    pub fn mul(&self, other: &FieldTensor) -> Result<FieldTensor> {
        self.check_same_grid(other)?;
        Ok(FieldTensor {
            grid: self.grid.clone(),
            values: &self.values * &other.values,
        })
    }

    pub fn scale(&self, s: f64) -> FieldTensor {
        FieldTensor {
            grid: self.grid.clone(),
            values: &self.values * s,
        }
    }

    pub fn abs(&self) -> FieldTensor {
        FieldTensor {
            grid: self.grid.clone(),
            values: self.values.mapv(f64::abs),
        }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> FieldTensor {
        FieldTensor {
            grid: self.grid.clone(),
            values: self.values.mapv(f),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn assert_finite(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("field contains non-finite values".into()));
        }
        Ok(())
    }

    /// Crop `lo[i]` / `hi[i]` points per axis, with grid metadata adjusted.
    pub fn crop(&self, lo: &[usize], hi: &[usize]) -> Result<FieldTensor> {
        let grid = self.grid.crop(lo, hi)?;
        let slices: Vec<ndarray::SliceInfoElem> = (0..self.grid.ndim())
            .map(|i| ndarray::SliceInfoElem::Slice {
                start: lo[i] as isize,
                end: Some((self.grid.shape()[i] - hi[i]) as isize),
                step: 1,
            })
            .collect();
        let values = self.values.slice(slices.as_slice()).to_owned();
        FieldTensor::new(grid, values)
    }
}
