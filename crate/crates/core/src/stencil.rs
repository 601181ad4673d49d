//! Finite-difference stencil weights and anchored convolution kernels.
//!
//! Weights are generated by solving the Vandermonde moment system, so any
//! derivative order `m` and even accuracy order `p` are supported. A
//! [`Kernel`] embeds scaled weights in an n-dimensional array over a grid
//! signature; kernels over the same grid are additive. Application is
//! cross-correlation with kernels stored in application-ready orientation
//! (for the symmetric central stencils here this coincides with true
//! convolution; asymmetric kernels are orientation-tested).

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::grid::{AxisKind, FieldTensor, Grid};

/// Unscaled central-difference weights for d^m/dx^m at accuracy order p.
#[derive(Debug, Clone)]
pub struct StencilWeights {
    pub derivative_order: usize,
    pub accuracy_order: usize,
    pub offsets: Vec<i64>,
    pub coefficients: Vec<f64>,
}

/// Solve sum_j c_j off_j^k = m! [k == m] for k = 0..len-1.
fn solve_moment_system(offsets: &[i64], m: usize) -> Result<Vec<f64>> {
    let n = offsets.len();
    let mut a = vec![vec![0.0f64; n + 1]; n];
    for (k, row) in a.iter_mut().enumerate() {
        for (j, &off) in offsets.iter().enumerate() {
            row[j] = (off as f64).powi(k as i32);
        }
        row[n] = if k == m { factorial(m) } else { 0.0 };
    }
    // Gaussian elimination with partial pivoting
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::Numerical("singular moment system".into()));
        }
        a.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..=n {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = a[col][n];
        for k in col + 1..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Ok(x)
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|i| i as f64).product()
}

/// Symmetric central-difference weights. `m = 0` returns the identity stencil.
pub fn central_difference_weights(m: usize, p: usize) -> Result<StencilWeights> {
    if p < 2 || p % 2 != 0 {
        return Err(Error::Config(format!("accuracy order must be a positive even integer, got {p}")));
    }
    if m == 0 {
        return Ok(StencilWeights {
            derivative_order: 0,
            accuracy_order: p,
            offsets: vec![0],
            coefficients: vec![1.0],
        });
    }
    // points needed: 2*floor((m+1)/2) - 1 + p, always odd
    let size = 2 * ((m + 1) / 2) - 1 + p;
    let w = (size - 1) as i64 / 2;
    let offsets: Vec<i64> = (-w..=w).collect();
    let coefficients = solve_moment_system(&offsets, m)?;
    Ok(StencilWeights {
        derivative_order: m,
        accuracy_order: p,
        offsets,
        coefficients,
    })
}

/// One-sided weights on offsets `0..m+p` pointing into the domain.
/// `inward` +1 uses points at increasing index, -1 at decreasing index.
pub fn one_sided_weights(m: usize, p: usize, inward: i64) -> Result<StencilWeights> {
    if m == 0 {
        return Err(Error::Config("one-sided identity stencil is not meaningful".into()));
    }
    let size = m + p;
    let offsets: Vec<i64> = (0..size as i64).map(|j| j * inward.signum()).collect();
    let coefficients = solve_moment_system(&offsets, m)?;
    Ok(StencilWeights {
        derivative_order: m,
        accuracy_order: p,
        offsets,
        coefficients,
    })
}

/// How convolution treats the field boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyMode {
    /// Return only the fully-covered interior, grid metadata adjusted.
    InteriorCrop,
    /// Wrap indices; output keeps the input shape.
    Periodic,
}

/// Anchored n-dimensional convolution kernel over a grid signature.
///
/// Every axis has odd extent with the anchor at its centre; spacing scales
/// (1/h^m) are folded into the coefficients at build time.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    grid: Grid,
    coeffs: ArrayD<f64>,
}

impl Kernel {
    fn from_coeffs(grid: Grid, coeffs: ArrayD<f64>) -> Result<Kernel> {
        if coeffs.ndim() != grid.ndim() {
            return Err(Error::Composition("kernel rank must match grid rank".into()));
        }
        if coeffs.shape().iter().any(|&s| s % 2 == 0) {
            return Err(Error::Composition("kernel extents must be odd".into()));
        }
        Ok(Kernel { grid, coeffs })
    }

    /// Single-entry kernel with coefficient 1.
    pub fn identity(grid: &Grid) -> Kernel {
        let shape = vec![1usize; grid.ndim()];
        let mut coeffs = ArrayD::zeros(IxDyn(&shape));
        coeffs[IxDyn(&vec![0; grid.ndim()])] = 1.0;
        Kernel {
            grid: grid.clone(),
            coeffs,
        }
    }

    /// d^m along one axis at accuracy p, scaled by 1/h^m.
    pub fn derivative(grid: &Grid, axis: AxisKind, m: usize, p: usize) -> Result<Kernel> {
        let ax = grid
            .axis_index(axis)
            .ok_or_else(|| Error::Config(format!("grid has no {} axis", axis.label())))?;
        let w = central_difference_weights(m, p)?;
        let h = grid.axes()[ax].spacing();
        let scale = h.powi(m as i32).recip();
        let mut shape = vec![1usize; grid.ndim()];
        shape[ax] = w.offsets.len();
        let mut coeffs = ArrayD::zeros(IxDyn(&shape));
        for (j, &c) in w.coefficients.iter().enumerate() {
            let mut idx = vec![0usize; grid.ndim()];
            idx[ax] = j;
            coeffs[IxDyn(&idx)] = c * scale;
        }
        Kernel::from_coeffs(grid.clone(), coeffs)
    }

    /// Sum of per-axis derivative kernels; the empty spec is the identity.
    pub fn build(grid: &Grid, spec: &[(AxisKind, usize)], p: usize) -> Result<Kernel> {
        if spec.is_empty() {
            return Ok(Kernel::identity(grid));
        }
        let mut acc: Option<Kernel> = None;
        for &(axis, m) in spec {
            let k = Kernel::derivative(grid, axis, m, p)?;
            acc = Some(match acc {
                None => k,
                Some(a) => Kernel::add(&a, &k, 1.0, 1.0)?,
            });
        }
        Ok(acc.unwrap())
    }

    /// Mixed derivative (e.g. d^2/dxdy) as the outer product of per-axis stencils.
    pub fn mixed(grid: &Grid, spec: &[(AxisKind, usize)], p: usize) -> Result<Kernel> {
        let mut acc = Kernel::identity(grid);
        for &(axis, m) in spec {
            let k = Kernel::derivative(grid, axis, m, p)?;
            acc = acc.outer_product(&k)?;
        }
        Ok(acc)
    }

    fn outer_product(&self, other: &Kernel) -> Result<Kernel> {
        if self.grid != other.grid {
            return Err(Error::Composition("outer product needs a common grid signature".into()));
        }
        // offsets add under composition, so extents combine as a + b - 1
        let shape: Vec<usize> = self
            .coeffs
            .shape()
            .iter()
            .zip(other.coeffs.shape())
            .map(|(&a, &b)| a + b - 1)
            .collect();
        let mut out = ArrayD::zeros(IxDyn(&shape));
        let centre: Vec<usize> = shape.iter().map(|&s| s / 2).collect();
        for (ia, va) in self.coeffs.indexed_iter() {
            if *va == 0.0 {
                continue;
            }
            for (ib, vb) in other.coeffs.indexed_iter() {
                if *vb == 0.0 {
                    continue;
                }
                let mut idx = vec![0usize; shape.len()];
                let mut ok = true;
                for d in 0..shape.len() {
                    let oa = ia[d] as i64 - (self.coeffs.shape()[d] / 2) as i64;
                    let ob = ib[d] as i64 - (other.coeffs.shape()[d] / 2) as i64;
                    let o = oa + ob;
                    let pos = centre[d] as i64 + o;
                    if pos < 0 || pos >= shape[d] as i64 {
                        ok = false;
                        break;
                    }
                    idx[d] = pos as usize;
                }
                if ok {
                    out[IxDyn(&idx)] += va * vb;
                }
            }
        }
        Kernel::from_coeffs(self.grid.clone(), out)
    }

    fn padded_coeffs(&self, shape: &[usize]) -> ArrayD<f64> {
        let mut out = ArrayD::zeros(IxDyn(shape));
        let off: Vec<usize> = shape
            .iter()
            .zip(self.coeffs.shape())
            .map(|(&s, &k)| (s - k) / 2)
            .collect();
        for (idx, v) in self.coeffs.indexed_iter() {
            let mut j = vec![0usize; shape.len()];
            for d in 0..shape.len() {
                j[d] = idx[d] + off[d];
            }
            out[IxDyn(&j)] = *v;
        }
        out
    }

    /// alpha * a + beta * b after zero-padding to the common odd shape.
    pub fn add(a: &Kernel, b: &Kernel, alpha: f64, beta: f64) -> Result<Kernel> {
        if a.grid != b.grid {
            return Err(Error::Composition("kernels over different grid signatures are not addable".into()));
        }
        let shape: Vec<usize> = a
            .coeffs
            .shape()
            .iter()
            .zip(b.coeffs.shape())
            .map(|(&x, &y)| x.max(y))
            .collect();
        let coeffs = a.padded_coeffs(&shape) * alpha + b.padded_coeffs(&shape) * beta;
        Kernel::from_coeffs(a.grid.clone(), coeffs)
    }

    pub fn scale(&self, s: f64) -> Kernel {
        Kernel {
            grid: self.grid.clone(),
            coeffs: &self.coeffs * s,
        }
    }

    /// Zero-pad to an explicit common odd shape.
    pub fn pad_to(&self, shape: &[usize]) -> Result<Kernel> {
        if shape
            .iter()
            .zip(self.coeffs.shape())
            .any(|(&s, &k)| s < k || s % 2 == 0)
        {
            return Err(Error::Composition("pad target must be odd and no smaller".into()));
        }
        Kernel::from_coeffs(self.grid.clone(), self.padded_coeffs(shape))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &ArrayD<f64> {
        &self.coeffs
    }

    /// Half-width per axis.
    pub fn half_widths(&self) -> Vec<usize> {
        self.coeffs.shape().iter().map(|&s| s / 2).collect()
    }

    /// Correlate the kernel with a field over the same grid.
    pub fn apply(&self, field: &FieldTensor, mode: ApplyMode) -> Result<FieldTensor> {
        if *field.grid() != self.grid {
            return Err(Error::GridMismatch("kernel and field grids differ".into()));
        }
        let shape = self.grid.shape();
        let kshape = self.coeffs.shape();
        if shape.iter().zip(kshape).any(|(&f, &k)| f < k) {
            return Err(Error::Size(format!(
                "kernel shape {kshape:?} exceeds field shape {shape:?}"
            )));
        }
        match mode {
            ApplyMode::InteriorCrop => {
                let hw = self.half_widths();
                let out_grid = self.grid.crop(&hw, &hw)?;
                let out_shape = out_grid.shape();
                let values = self.correlate_valid(field.values(), &out_shape);
                FieldTensor::new(out_grid, values)
            }
            ApplyMode::Periodic => {
                let hw = self.half_widths();
                let padded = circular_pad(field.values(), &hw);
                let values = self.correlate_valid(&padded, &shape);
                FieldTensor::new(self.grid.clone(), values)
            }
        }
    }

    /// out[j] = sum_k c[k] * input[j + k], for all j with the kernel inside.
    fn correlate_valid(&self, input: &ArrayD<f64>, out_shape: &[usize]) -> ArrayD<f64> {
        let mut out = ArrayD::zeros(IxDyn(out_shape));
        for (kidx, &c) in self.coeffs.indexed_iter() {
            if c == 0.0 {
                continue;
            }
            let slices: Vec<ndarray::SliceInfoElem> = (0..out_shape.len())
                .map(|d| ndarray::SliceInfoElem::Slice {
                    start: kidx[d] as isize,
                    end: Some((kidx[d] + out_shape[d]) as isize),
                    step: 1,
                })
                .collect();
            out.scaled_add(c, &input.slice(slices.as_slice()));
        }
        out
    }

    /// Coefficient array in matrix layout, innermost axis across a row.
    pub fn render(&self) -> String {
        let shape = self.coeffs.shape().to_vec();
        let mut s = format!("kernel over {:?}, shape {shape:?}\n", axis_labels(&self.grid));
        let cells: Vec<String> = self.coeffs.iter().map(|v| format!("{v:>10.4}")).collect();
        let row = *shape.last().unwrap();
        let rows_per_block: usize = if shape.len() >= 2 {
            shape[shape.len() - 2]
        } else {
            1
        };
        for (i, chunk) in cells.chunks(row).enumerate() {
            if shape.len() >= 3 && i % rows_per_block == 0 {
                s.push_str(&format!("[slice {}]\n", i / rows_per_block));
            }
            s.push_str("[ ");
            s.push_str(&chunk.join(" "));
            s.push_str(" ]\n");
        }
        s
    }
}

fn axis_labels(grid: &Grid) -> Vec<&'static str> {
    grid.axes().iter().map(|a| a.kind.label()).collect()
}

fn circular_pad(input: &ArrayD<f64>, hw: &[usize]) -> ArrayD<f64> {
    let shape: Vec<usize> = input
        .shape()
        .iter()
        .zip(hw)
        .map(|(&s, &w)| s + 2 * w)
        .collect();
    let mut out = ArrayD::zeros(IxDyn(&shape));
    let in_shape = input.shape().to_vec();
    for (idx, v) in out.indexed_iter_mut() {
        let mut j = vec![0usize; in_shape.len()];
        for d in 0..in_shape.len() {
            let n = in_shape[d] as i64;
            j[d] = (((idx[d] as i64 - hw[d] as i64) % n + n) % n) as usize;
        }
        *v = input[IxDyn(&j)];
    }
    out
}
