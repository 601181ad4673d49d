//! Initial-condition generators for the testbed PDEs.

use crate::error::{Error, Result};
use crate::grid::{FieldTensor, Grid};

fn check_finite(params: &[f64]) -> Result<()> {
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Config("non-finite initial-condition parameter".into()));
    }
    Ok(())
}

/// Gaussian bump at t=0 on a purely spatial grid.
///
/// In 1D the amplitude is a prefactor: `A exp(-(x-X)^2 k)`. In 2D the
/// amplitude sets the exponent sharpness instead: `exp(-A ((x-X)^2 + (y-Y)^2))`.
/// The two conventions are intentionally different.
pub fn gaussian_bump_ic(
    grid: &Grid,
    amplitude: f64,
    center: &[f64],
    width: f64,
) -> Result<FieldTensor> {
    check_finite(&[amplitude, width])?;
    check_finite(center)?;
    if grid.has_time() {
        return Err(Error::Config("initial condition wants a spatial grid".into()));
    }
    let ndim = grid.ndim();
    if center.len() != ndim {
        return Err(Error::Config(format!(
            "center has {} coordinates for a {ndim}-axis grid",
            center.len()
        )));
    }
    for (c, a) in center.iter().zip(grid.axes()) {
        if *c < a.min || *c > a.max {
            return Err(Error::Config(format!(
                "center {c} outside axis extent [{}, {}]",
                a.min, a.max
            )));
        }
    }
    match ndim {
        1 => {
            let x0 = center[0];
            Ok(FieldTensor::from_fn(grid.clone(), |p| {
                amplitude * (-(p[0] - x0).powi(2) * width).exp()
            }))
        }
        2 => {
            let (x0, y0) = (center[0], center[1]);
            Ok(FieldTensor::from_fn(grid.clone(), |p| {
                (-amplitude * ((p[0] - x0).powi(2) + (p[1] - y0).powi(2))).exp()
            }))
        }
        _ => Err(Error::Config("gaussian bump supports 1 or 2 spatial axes".into())),
    }
}

/// Three-term initial condition `sin(a pi x) + cos(-b pi x) + sech(c pi x)`.
pub fn burgers_ic(grid: &Grid, alpha: f64, beta: f64, gamma: f64) -> Result<FieldTensor> {
    check_finite(&[alpha, beta, gamma])?;
    if grid.has_time() || grid.ndim() != 1 {
        return Err(Error::Config("burgers initial condition wants a 1D spatial grid".into()));
    }
    let pi = std::f64::consts::PI;
    Ok(FieldTensor::from_fn(grid.clone(), |p| {
        let x = p[0];
        (alpha * pi * x).sin() + (-beta * pi * x).cos() + 1.0 / (gamma * pi * x).cosh()
    }))
}
