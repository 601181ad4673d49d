//! Surrogate predictors standing in for a learned rollout model.
//!
//! The calibration guarantee downstream holds for any predictor, so the
//! concrete models here are chosen for controllability rather than power:
//! a perturbed oracle whose error level is a knob, and a linear
//! autoregressive model acting on Fourier modes.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AxisKind, FieldTensor, Grid};
use crate::solvers::SolverConfig;
use crate::spectral::{Fft1d, Fft2d};

/// Rollout predictor contract: fixed output grid and horizon, deterministic
/// given construction-time state.
pub trait Predictor {
    /// Space-time grid every prediction lives on.
    fn output_grid(&self) -> &Grid;
    /// Map an initial state on the spatial grid to a full rollout.
    fn predict(&self, initial_state: &FieldTensor) -> Result<FieldTensor>;
}

/// Mean/spread pair from an ensemble of predictors.
pub struct ProbabilisticPrediction {
    pub mean: FieldTensor,
    /// Pointwise population standard deviation, strictly positive.
    pub spread: FieldTensor,
}

fn fnv1a_hash(field: &FieldTensor) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for v in field.values().iter() {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

/// Reference solver plus seeded smooth noise of amplitude `epsilon` and
/// spatial correlation length `smoothness` (physical units). The noise seed
/// mixes the construction seed with a hash of the input, so repeated calls
/// on the same input are identical while different inputs decorrelate.
pub struct PerturbedOracle {
    config: SolverConfig,
    epsilon: f64,
    smoothness: f64,
    seed: u64,
    output: Grid,
}

pub fn perturbed_oracle(
    config: SolverConfig,
    epsilon: f64,
    smoothness: f64,
    seed: u64,
) -> Result<PerturbedOracle> {
    if !(epsilon >= 0.0) {
        return Err(Error::Config(format!(
            "noise amplitude must be non-negative, got {epsilon}"
        )));
    }
    if !(smoothness >= 0.0) {
        return Err(Error::Config(format!(
            "noise smoothness must be non-negative, got {smoothness}"
        )));
    }
    let output = config.output_grid()?;
    Ok(PerturbedOracle {
        config,
        epsilon,
        smoothness,
        seed,
        output,
    })
}

/// Smooth a field along its spatial axes with a periodic discrete Gaussian
/// of standard deviation `ell` in physical units.
fn smooth_spatial(field: &mut FieldTensor, ell: f64) {
    if ell <= 0.0 {
        return;
    }
    let grid = field.grid().clone();
    for (d, axis) in grid.axes().iter().enumerate() {
        if axis.kind == AxisKind::Time {
            continue;
        }
        let h = axis.spacing();
        let radius = (3.0 * ell / h).ceil() as i64;
        if radius == 0 {
            continue;
        }
        let mut w: Vec<f64> = (-radius..=radius)
            .map(|j| (-(j as f64 * h).powi(2) / (2.0 * ell * ell)).exp())
            .collect();
        let total: f64 = w.iter().sum();
        for v in &mut w {
            *v /= total;
        }
        let n = axis.count as i64;
        let values = field.values_mut();
        for mut lane in values.lanes_mut(ndarray::Axis(d)) {
            let src: Vec<f64> = lane.iter().cloned().collect();
            for i in 0..n {
                let mut acc = 0.0;
                for (j, &wj) in w.iter().enumerate() {
                    let idx = (i + j as i64 - radius).rem_euclid(n) as usize;
                    acc += wj * src[idx];
                }
                lane[i as usize] = acc;
            }
        }
    }
}

impl Predictor for PerturbedOracle {
    fn output_grid(&self) -> &Grid {
        &self.output
    }

    fn predict(&self, initial_state: &FieldTensor) -> Result<FieldTensor> {
        let mut rollout = self.config.solve(initial_state)?;
        if self.epsilon > 0.0 {
            let mut rng =
                ChaCha20Rng::seed_from_u64(self.seed ^ fnv1a_hash(initial_state));
            let noise_values = ndarray::ArrayD::from_shape_simple_fn(
                ndarray::IxDyn(&self.output.shape()),
                || {
                    // Box-Muller pair, first component
                    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                    let u2: f64 = rng.gen::<f64>();
                    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                },
            );
            let mut noise = FieldTensor::new(self.output.clone(), noise_values)?;
            smooth_spatial(&mut noise, self.smoothness);
            rollout = rollout.add(&noise.scale(self.epsilon))?;
        }
        debug_assert_eq!(*rollout.grid(), self.output);
        rollout.assert_finite()?;
        Ok(rollout)
    }
}

/// Per-Fourier-mode complex scalar propagator, fitted frame-to-frame by
/// least squares and rolled out autoregressively. Modes with index above
/// the retained cutoff are zeroed.
///
/// Spatial transforms act on the unique periodic points (the duplicated
/// grid endpoint is dropped and restored), matching the solver convention.
pub struct SpectralAr {
    space: Grid,
    output: Grid,
    retained: usize,
    /// One propagator per unique-point mode, zero for unretained modes.
    coeffs: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct SpectralArHeader {
    model: String,
    retained: usize,
    space_axes: Vec<(String, f64, f64, usize)>,
    time_axis: (f64, f64, usize),
    modes: usize,
}

/// Unique-point mode index -> is it within the retained band |m| <= k.
fn mode_kept(i: usize, n: usize, k: usize) -> bool {
    let m = if i <= n / 2 { i } else { n - i };
    m <= k
}

enum SpatialFft {
    One(Fft1d, usize),
    Two(Fft2d, usize, usize),
}

impl SpatialFft {
    fn for_space(space: &Grid) -> Result<SpatialFft> {
        let shape = space.shape();
        match shape.len() {
            1 => Ok(SpatialFft::One(Fft1d::new(shape[0] - 1), shape[0] - 1)),
            2 => {
                let (nx, ny) = (shape[0] - 1, shape[1] - 1);
                Ok(SpatialFft::Two(Fft2d::new(nx, ny), nx, ny))
            }
            d => Err(Error::Config(format!("unsupported spatial dimension {d}"))),
        }
    }

    fn modes(&self) -> usize {
        match self {
            SpatialFft::One(_, n) => *n,
            SpatialFft::Two(_, nx, ny) => nx * ny,
        }
    }

    /// Forward transform of one rollout frame (unique points only).
    fn analyse(&self, frame: ndarray::ArrayViewD<f64>) -> Vec<Complex64> {
        match self {
            SpatialFft::One(fft, n) => {
                let x: Vec<f64> = frame.iter().take(*n).cloned().collect();
                fft.forward_real(&x)
            }
            SpatialFft::Two(fft, nx, ny) => {
                let mut buf = vec![Complex64::default(); nx * ny];
                for r in 0..*nx {
                    for s in 0..*ny {
                        buf[r * ny + s] = Complex64::new(frame[[r, s]], 0.0);
                    }
                }
                fft.forward(&mut buf);
                buf
            }
        }
    }

    /// Inverse transform into a closed frame with duplicated endpoints.
    fn synthesise(&self, spec: &[Complex64], out: &mut ndarray::ArrayViewMutD<f64>) {
        match self {
            SpatialFft::One(fft, n) => {
                let x = fft.inverse_real(spec);
                for i in 0..=*n {
                    out[[i]] = x[i % n];
                }
            }
            SpatialFft::Two(fft, nx, ny) => {
                let mut buf = spec.to_vec();
                fft.inverse(&mut buf);
                for r in 0..=*nx {
                    for s in 0..=*ny {
                        out[[r, s]] = buf[(r % nx) * ny + (s % ny)].re;
                    }
                }
            }
        }
    }

    fn kept(&self, i: usize, k: usize) -> bool {
        match self {
            SpatialFft::One(_, n) => mode_kept(i, *n, k),
            SpatialFft::Two(_, nx, ny) => {
                mode_kept(i / ny, *nx, k) && mode_kept(i % ny, *ny, k)
            }
        }
    }
}

/// Fit the per-mode propagators from a batch of solver rollouts, all on
/// the same space-time grid. Every consecutive frame pair is a training
/// transition.
pub fn train_spectral_ar(rollouts: &[FieldTensor], retained: usize) -> Result<SpectralAr> {
    let first = rollouts
        .first()
        .ok_or_else(|| Error::Config("no training rollouts".into()))?;
    let output = first.grid().clone();
    if !output.has_time() || output.shape()[0] < 2 {
        return Err(Error::Config(
            "training rollouts need a time axis with at least two frames".into(),
        ));
    }
    let space = output.spatial()?;
    let max_k = space.shape().iter().map(|&n| (n - 1) / 2).min().unwrap();
    if retained > max_k {
        return Err(Error::Config(format!(
            "retained mode cutoff {retained} exceeds the Nyquist band {max_k}"
        )));
    }
    let fft = SpatialFft::for_space(&space)?;
    let modes = fft.modes();
    let frames = output.shape()[0];

    let mut num = vec![Complex64::default(); modes];
    let mut den = vec![0.0f64; modes];
    for roll in rollouts {
        if roll.grid() != &output {
            return Err(Error::GridMismatch(
                "training rollouts are on different grids".into(),
            ));
        }
        let mut prev = fft.analyse(roll.values().index_axis(ndarray::Axis(0), 0));
        for t in 1..frames {
            let curr = fft.analyse(roll.values().index_axis(ndarray::Axis(0), t));
            for m in 0..modes {
                num[m] += prev[m].conj() * curr[m];
                den[m] += prev[m].norm_sqr();
            }
            prev = curr;
        }
    }

    let mut floored = 0usize;
    let coeffs: Vec<Complex64> = (0..modes)
        .map(|m| {
            if !fft.kept(m, retained) {
                return Complex64::default();
            }
            if den[m] < 1e-8 {
                floored += 1;
            }
            num[m] / den[m].max(1e-8)
        })
        .collect();
    if floored > 0 {
        log::warn!(
            "spectral AR fit: {floored} of {modes} modes had near-zero training energy, ridge floor applied"
        );
    }
    Ok(SpectralAr {
        space,
        output,
        retained,
        coeffs,
    })
}

impl Predictor for SpectralAr {
    fn output_grid(&self) -> &Grid {
        &self.output
    }

    fn predict(&self, initial_state: &FieldTensor) -> Result<FieldTensor> {
        if *initial_state.grid() != self.space {
            return Err(Error::GridMismatch(
                "initial state is not on the model's spatial grid".into(),
            ));
        }
        let fft = SpatialFft::for_space(&self.space)?;
        let mut spec = fft.analyse(initial_state.values().view());
        for (m, s) in spec.iter_mut().enumerate() {
            if !fft.kept(m, self.retained) {
                *s = Complex64::default();
            }
        }
        let frames = self.output.shape()[0];
        let mut out = FieldTensor::zeros(self.output.clone());
        for t in 0..frames {
            if t > 0 {
                for (s, a) in spec.iter_mut().zip(&self.coeffs) {
                    *s *= a;
                }
            }
            let mut frame = out.values_mut().index_axis_mut(ndarray::Axis(0), t);
            fft.synthesise(&spec, &mut frame);
        }
        debug_assert_eq!(*out.grid(), self.output);
        out.assert_finite()?;
        Ok(out)
    }
}

impl SpectralAr {
    pub fn retained(&self) -> usize {
        self.retained
    }

    /// Serialise as a one-line JSON header followed by the propagator
    /// coefficients, real/imag interleaved in the field dump number format.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        let header = SpectralArHeader {
            model: "spectral-ar".into(),
            retained: self.retained,
            space_axes: self
                .space
                .axes()
                .iter()
                .map(|a| (a.kind.label().to_string(), a.min, a.max, a.count))
                .collect(),
            time_axis: {
                let t = &self.output.axes()[0];
                (t.min, t.max, t.count)
            },
            modes: self.coeffs.len(),
        };
        writeln!(
            w,
            "{}",
            serde_json::to_string(&header).map_err(|e| Error::Parse(e.to_string()))?
        )?;
        let flat: Vec<f64> = self
            .coeffs
            .iter()
            .flat_map(|c| [c.re, c.im])
            .collect();
        for chunk in flat.chunks(8) {
            let line: Vec<String> = chunk.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn save_to(&self, path: &std::path::Path) -> Result<()> {
        self.save(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load<R: BufRead>(mut r: R) -> Result<SpectralAr> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: SpectralArHeader =
            serde_json::from_str(line.trim()).map_err(|e| Error::Parse(e.to_string()))?;
        if header.model != "spectral-ar" {
            return Err(Error::Parse(format!("unexpected model kind '{}'", header.model)));
        }
        let mut axes = Vec::new();
        for (label, min, max, count) in &header.space_axes {
            axes.push(crate::grid::Axis::new(
                AxisKind::from_label(label)?,
                *min,
                *max,
                *count,
            ));
        }
        let space = Grid::new(axes)?;
        let (tmin, tmax, tcount) = header.time_axis;
        let output = space.with_time(tmin, tmax, tcount)?;
        let mut values = Vec::with_capacity(2 * header.modes);
        for line in r.lines() {
            for tok in line?.split_whitespace() {
                values.push(
                    tok.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("bad coefficient '{tok}': {e}")))?,
                );
            }
        }
        if values.len() != 2 * header.modes {
            return Err(Error::Parse(format!(
                "expected {} coefficient values, found {}",
                2 * header.modes,
                values.len()
            )));
        }
        let coeffs = values
            .chunks(2)
            .map(|p| Complex64::new(p[0], p[1]))
            .collect();
        Ok(SpectralAr {
            space,
            output,
            retained: header.retained,
            coeffs,
        })
    }

    pub fn load_from(path: &std::path::Path) -> Result<SpectralAr> {
        SpectralAr::load(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Pointwise mean and population standard deviation over member
/// predictions; the spread is floored away from zero so it can divide.
pub fn ensemble_spread(
    predictors: &[&dyn Predictor],
    input: &FieldTensor,
) -> Result<ProbabilisticPrediction> {
    if predictors.is_empty() {
        return Err(Error::Config("empty predictor ensemble".into()));
    }
    let outputs: Vec<FieldTensor> = predictors
        .iter()
        .map(|p| p.predict(input))
        .collect::<Result<_>>()?;
    let grid = outputs[0].grid().clone();
    for o in &outputs[1..] {
        outputs[0].check_same_grid(o)?;
    }
    let n = outputs.len() as f64;
    let mut mean = FieldTensor::zeros(grid.clone());
    for o in &outputs {
        mean = mean.add(o)?;
    }
    let mean = mean.scale(1.0 / n);
    let mut var = FieldTensor::zeros(grid);
    for o in &outputs {
        let d = o.sub(&mean)?;
        var = var.add(&d.mul(&d)?)?;
    }
    let spread = var.scale(1.0 / n).map(|v| v.sqrt().max(1e-12));
    Ok(ProbabilisticPrediction { mean, spread })
}
