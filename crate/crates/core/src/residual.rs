//! Residual programs: sums of coefficient-weighted products of
//! kernel-differentiated fields, encoding D(u) - b for each testbed PDE.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grid::{AxisKind, FieldTensor, Grid};
use crate::stencil::{one_sided_weights, ApplyMode, Kernel};

/// One multiplicative factor: a named input field under a kernel.
#[derive(Debug, Clone)]
pub struct Factor {
    pub field: String,
    pub kernel: Kernel,
}

/// coefficient * product of factors.
#[derive(Debug, Clone)]
pub struct Term {
    pub coefficient: f64,
    pub factors: Vec<Factor>,
}

impl Term {
    pub fn linear(coefficient: f64, field: &str, kernel: Kernel) -> Term {
        Term {
            coefficient,
            factors: vec![Factor {
                field: field.to_string(),
                kernel,
            }],
        }
    }

    pub fn product(coefficient: f64, factors: Vec<(&str, Kernel)>) -> Term {
        Term {
            coefficient,
            factors: factors
                .into_iter()
                .map(|(f, k)| Factor {
                    field: f.to_string(),
                    kernel: k,
                })
                .collect(),
        }
    }
}

/// D(u) - b as an evaluatable array pipeline. All factor kernels share one
/// grid signature; evaluation crops every factor to the common interior
/// before multiplying.
#[derive(Debug, Clone)]
pub struct ResidualProgram {
    grid: Grid,
    terms: Vec<Term>,
    field_names: Vec<String>,
}

impl ResidualProgram {
    pub fn new(grid: Grid, terms: Vec<Term>) -> Result<ResidualProgram> {
        if terms.is_empty() {
            return Err(Error::Config("residual program needs at least one term".into()));
        }
        let mut field_names: Vec<String> = Vec::new();
        for t in &terms {
            if t.factors.is_empty() {
                return Err(Error::Config("every term needs at least one factor".into()));
            }
            for f in &t.factors {
                if *f.kernel.grid() != grid {
                    return Err(Error::GridMismatch(
                        "factor kernel built on a different grid signature".into(),
                    ));
                }
                if !field_names.contains(&f.field) {
                    field_names.push(f.field.clone());
                }
            }
        }
        Ok(ResidualProgram {
            grid,
            terms,
            field_names,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn field_names(&self) -> &[String] {
        &self.field_names
    }

    /// Largest kernel half-width per axis across all terms.
    pub fn half_widths(&self) -> Vec<usize> {
        let mut hw = vec![0usize; self.grid.ndim()];
        for t in &self.terms {
            for f in &t.factors {
                for (d, w) in f.kernel.half_widths().into_iter().enumerate() {
                    hw[d] = hw[d].max(w);
                }
            }
        }
        hw
    }

    /// Grid the evaluated residual lives on (interior crop).
    pub fn interior_grid(&self) -> Result<Grid> {
        let hw = self.half_widths();
        self.grid.crop(&hw, &hw)
    }

    /// Evaluate the program on named fields with interior-crop handling.
    pub fn evaluate(&self, fields: &HashMap<String, &FieldTensor>) -> Result<FieldTensor> {
        for name in &self.field_names {
            let f = fields
                .get(name)
                .ok_or_else(|| Error::MissingField(name.clone()))?;
            if *f.grid() != self.grid {
                return Err(Error::GridMismatch(format!(
                    "field '{name}' is not on the program grid"
                )));
            }
        }
        let hw = self.half_widths();
        let shape: Vec<usize> = hw.iter().map(|&w| 2 * w + 1).collect();
        let out_grid = self.grid.crop(&hw, &hw)?;
        let mut acc = FieldTensor::zeros(out_grid);
        for t in &self.terms {
            let mut prod: Option<FieldTensor> = None;
            for f in &t.factors {
                // pad every kernel to the program-wide shape so all factor
                // outputs land on the common interior grid
                let k = f.kernel.pad_to(&shape)?;
                let applied = k.apply(fields[&f.field], ApplyMode::InteriorCrop)?;
                prod = Some(match prod {
                    None => applied,
                    Some(p) => p.mul(&applied)?,
                });
            }
            acc = acc.add(&prod.unwrap().scale(t.coefficient))?;
        }
        acc.assert_finite()?;
        Ok(acc)
    }

    /// Evaluate a single-field program.
    pub fn evaluate_single(&self, field: &FieldTensor) -> Result<FieldTensor> {
        if self.field_names.len() != 1 {
            return Err(Error::Config(format!(
                "program needs fields {:?}, got one unnamed field",
                self.field_names
            )));
        }
        let mut m = HashMap::new();
        m.insert(self.field_names[0].clone(), field);
        self.evaluate(&m)
    }

    /// Program with only the i-th term retained (for ablation checks).
    /// Kernels are padded to the full program's common shape so the
    /// per-term residuals live on the same interior grid and sum to the
    /// full residual.
    pub fn single_term(&self, i: usize) -> Result<ResidualProgram> {
        let t = self
            .terms
            .get(i)
            .ok_or_else(|| Error::Config(format!("no term {i}")))?;
        let shape: Vec<usize> = self.half_widths().iter().map(|&w| 2 * w + 1).collect();
        let mut t = t.clone();
        for f in &mut t.factors {
            f.kernel = f.kernel.pad_to(&shape)?;
        }
        ResidualProgram::new(self.grid.clone(), vec![t])
    }

    /// Term list with coefficients and kernel shapes, for docs and the CLI.
    pub fn describe(&self) -> String {
        let mut s = format!(
            "residual program on {:?} grid, fields {:?}\n",
            self.grid.shape(),
            self.field_names
        );
        for (i, t) in self.terms.iter().enumerate() {
            let factors: Vec<String> = t
                .factors
                .iter()
                .map(|f| format!("{}*K{:?}", f.field, f.kernel.coeffs().shape()))
                .collect();
            s.push_str(&format!(
                "  term {i}: {:+e} * {}\n",
                t.coefficient,
                factors.join(" . ")
            ));
        }
        for t in &self.terms {
            for f in &t.factors {
                s.push_str(&f.kernel.render());
            }
        }
        s
    }
}

const ACCURACY: usize = 2;

/// du/dt + v du/dx = 0 on a (time, x) grid.
pub fn advection_program(grid: &Grid, v: f64) -> Result<ResidualProgram> {
    let dt = Kernel::derivative(grid, AxisKind::Time, 1, ACCURACY)?;
    let dx = Kernel::derivative(grid, AxisKind::SpaceX, 1, ACCURACY)?;
    ResidualProgram::new(
        grid.clone(),
        vec![Term::linear(1.0, "u", dt), Term::linear(v, "u", dx)],
    )
}

/// du/dt + u du/dx - nu d2u/dx2 = 0 on a (time, x) grid.
pub fn burgers_program(grid: &Grid, nu: f64) -> Result<ResidualProgram> {
    let dt = Kernel::derivative(grid, AxisKind::Time, 1, ACCURACY)?;
    let dx = Kernel::derivative(grid, AxisKind::SpaceX, 1, ACCURACY)?;
    let dxx = Kernel::derivative(grid, AxisKind::SpaceX, 2, ACCURACY)?;
    let id = Kernel::identity(grid);
    ResidualProgram::new(
        grid.clone(),
        vec![
            Term::linear(1.0, "u", dt),
            Term::product(1.0, vec![("u", id), ("u", dx)]),
            Term::linear(-nu, "u", dxx),
        ],
    )
}

/// d2u/dt2 - c^2 (d2u/dx2 + d2u/dy2) = 0 on a (time, x, y) grid.
pub fn wave_program(grid: &Grid, c: f64) -> Result<ResidualProgram> {
    let dtt = Kernel::derivative(grid, AxisKind::Time, 2, ACCURACY)?;
    let dxx = Kernel::derivative(grid, AxisKind::SpaceX, 2, ACCURACY)?;
    let dyy = Kernel::derivative(grid, AxisKind::SpaceY, 2, ACCURACY)?;
    let c2 = c * c;
    ResidualProgram::new(
        grid.clone(),
        vec![
            Term::linear(1.0, "u", dtt),
            Term::linear(-c2, "u", dxx),
            Term::linear(-c2, "u", dyy),
        ],
    )
}

/// Incompressible Navier-Stokes residuals over fields u, v, P.
pub struct NavierStokesPrograms {
    pub continuity: ResidualProgram,
    pub momentum_x: ResidualProgram,
    pub momentum_y: ResidualProgram,
}

pub fn navier_stokes_programs(grid: &Grid, nu: f64) -> Result<NavierStokesPrograms> {
    let dt = Kernel::derivative(grid, AxisKind::Time, 1, ACCURACY)?;
    let dx = Kernel::derivative(grid, AxisKind::SpaceX, 1, ACCURACY)?;
    let dy = Kernel::derivative(grid, AxisKind::SpaceY, 1, ACCURACY)?;
    let dxx = Kernel::derivative(grid, AxisKind::SpaceX, 2, ACCURACY)?;
    let dyy = Kernel::derivative(grid, AxisKind::SpaceY, 2, ACCURACY)?;
    let id = Kernel::identity(grid);

    let continuity = ResidualProgram::new(
        grid.clone(),
        vec![
            Term::linear(1.0, "u", dx.clone()),
            Term::linear(1.0, "v", dy.clone()),
        ],
    )?;

    let momentum = |a: &str, dp: Kernel| -> Result<ResidualProgram> {
        ResidualProgram::new(
            grid.clone(),
            vec![
                Term::linear(1.0, a, dt.clone()),
                Term::product(1.0, vec![("u", id.clone()), (a, dx.clone())]),
                Term::product(1.0, vec![("v", id.clone()), (a, dy.clone())]),
                Term::linear(-nu, a, Kernel::add(&dxx, &dyy, 1.0, 1.0)?),
                Term::linear(1.0, "P", dp),
            ],
        )
    };
    let momentum_x = momentum("u", dx.clone())?;
    let momentum_y = momentum("v", dy.clone())?;
    Ok(NavierStokesPrograms {
        continuity,
        momentum_x,
        momentum_y,
    })
}

/// Which end of an axis a wall sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WallSide {
    Low,
    High,
}

/// Normal-gradient residual on one wall slice: a one-sided first-derivative
/// stencil (offsets shifted inward) evaluated only at the wall, producing a
/// lower-dimensional field over the wall.
#[derive(Debug, Clone)]
pub struct BoundaryResidual {
    grid: Grid,
    axis: usize,
    side: WallSide,
    weights: Vec<f64>,
}

pub fn boundary_residual_program(
    grid: &Grid,
    axis: AxisKind,
    side: WallSide,
) -> Result<BoundaryResidual> {
    let ax = grid
        .axis_index(axis)
        .ok_or_else(|| Error::Config(format!("grid has no {} axis", axis.label())))?;
    let w = one_sided_weights(1, ACCURACY, 1)?;
    let h = grid.axes()[ax].spacing();
    let sign = match side {
        WallSide::Low => 1.0,
        WallSide::High => -1.0,
    };
    let weights = w.coefficients.iter().map(|c| c * sign / h).collect();
    Ok(BoundaryResidual {
        grid: grid.clone(),
        axis: ax,
        side,
        weights,
    })
}

impl BoundaryResidual {
    pub fn evaluate(&self, field: &FieldTensor) -> Result<FieldTensor> {
        if *field.grid() != self.grid {
            return Err(Error::GridMismatch("field is not on the boundary program's grid".into()));
        }
        let count = self.grid.axes()[self.axis].count;
        if self.weights.len() > count {
            return Err(Error::Size("one-sided stencil exceeds axis extent".into()));
        }
        let wall_grid = self.grid.without_axis(self.axis)?;
        let mut out = FieldTensor::zeros(wall_grid);
        for (j, &c) in self.weights.iter().enumerate() {
            let idx = match self.side {
                WallSide::Low => j,
                WallSide::High => count - 1 - j,
            };
            let slice = field.values().index_axis(ndarray::Axis(self.axis), idx);
            out.values_mut().scaled_add(c, &slice);
        }
        out.assert_finite()?;
        Ok(out)
    }
}
