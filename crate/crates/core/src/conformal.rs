//! Split conformal calibration over field-valued nonconformity scores.
//!
//! Scores are either residual magnitudes (no target data needed) or
//! error magnitudes against targets. Calibration turns a batch of score
//! fields into per-cell quantile bands (marginal mode) or one scalar
//! quantile modulating a per-cell spread field (joint mode).

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::grid::{FieldTensor, Grid};
use crate::residual::ResidualProgram;
use crate::surrogate::ProbabilisticPrediction;

pub const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    /// Absolute error |prediction - target|.
    Aer,
    /// Spread-normalised error |mean - target| / spread.
    Std,
    /// Absolute PDE residual of the prediction, target-free.
    Pre,
}

impl ScoreKind {
    pub fn label(&self) -> &'static str {
        match self {
            ScoreKind::Aer => "aer",
            ScoreKind::Std => "std",
            ScoreKind::Pre => "pre",
        }
    }
}

/// Batch of per-cell scores: one row per sample, one column per grid cell
/// (row-major cell order). All entries finite and non-negative.
#[derive(Debug, Clone)]
pub struct ScoreBatch {
    kind: ScoreKind,
    grid: Grid,
    scores: Array2<f64>,
}

impl ScoreBatch {
    pub fn from_fields(kind: ScoreKind, fields: &[FieldTensor]) -> Result<ScoreBatch> {
        let first = fields
            .first()
            .ok_or_else(|| Error::Config("empty score batch".into()))?;
        let grid = first.grid().clone();
        let cells = grid.num_points();
        let mut scores = Array2::zeros((fields.len(), cells));
        for (i, f) in fields.iter().enumerate() {
            if *f.grid() != grid {
                return Err(Error::GridMismatch("score fields are on different grids".into()));
            }
            for (j, &v) in f.values().iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Numerical(format!(
                        "score must be finite and non-negative, got {v}"
                    )));
                }
                scores[[i, j]] = v;
            }
        }
        Ok(ScoreBatch { kind, grid, scores })
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.scores.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.nrows() == 0
    }

    pub fn scores(&self) -> &Array2<f64> {
        &self.scores
    }

    /// Sample row as a field on the scoring grid.
    pub fn sample_field(&self, i: usize) -> Result<FieldTensor> {
        let row = self.scores.row(i).to_owned().into_raw_vec();
        let arr = ArrayD::from_shape_vec(IxDyn(&self.grid.shape()), row)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        FieldTensor::new(self.grid.clone(), arr)
    }

    pub fn to_fields(&self) -> Result<Vec<FieldTensor>> {
        (0..self.len()).map(|i| self.sample_field(i)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::dump::save_batch(path, &self.to_fields()?)
    }

    pub fn load(kind: ScoreKind, path: &Path) -> Result<ScoreBatch> {
        ScoreBatch::from_fields(kind, &crate::dump::load_batch(path)?)
    }
}

/// Residual-magnitude scores |D(prediction)| per sample and cell; consumes
/// no target data.
pub fn pre_scores(predictions: &[FieldTensor], program: &ResidualProgram) -> Result<ScoreBatch> {
    let fields: Vec<FieldTensor> = predictions
        .iter()
        .map(|p| Ok(program.evaluate_single(p)?.abs()))
        .collect::<Result<_>>()?;
    ScoreBatch::from_fields(ScoreKind::Pre, &fields)
}

/// Residual-magnitude scores for multi-field predictions, one map of named
/// fields per sample.
pub fn pre_scores_multi(
    predictions: &[HashMap<String, &FieldTensor>],
    program: &ResidualProgram,
) -> Result<ScoreBatch> {
    let fields: Vec<FieldTensor> = predictions
        .iter()
        .map(|p| Ok(program.evaluate(p)?.abs()))
        .collect::<Result<_>>()?;
    ScoreBatch::from_fields(ScoreKind::Pre, &fields)
}

/// Absolute-error scores |prediction - target|.
pub fn aer_scores(predictions: &[FieldTensor], targets: &[FieldTensor]) -> Result<ScoreBatch> {
    if predictions.len() != targets.len() {
        return Err(Error::Size("prediction/target counts differ".into()));
    }
    let fields: Vec<FieldTensor> = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| Ok(p.sub(t)?.abs()))
        .collect::<Result<_>>()?;
    ScoreBatch::from_fields(ScoreKind::Aer, &fields)
}

/// Spread-normalised error scores |mean - target| / spread.
pub fn std_scores(
    predictions: &[ProbabilisticPrediction],
    targets: &[FieldTensor],
) -> Result<ScoreBatch> {
    if predictions.len() != targets.len() {
        return Err(Error::Size("prediction/target counts differ".into()));
    }
    let fields: Vec<FieldTensor> = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| {
            p.spread.assert_finite()?;
            let err = p.mean.sub(t)?.abs();
            let inv = p.spread.map(|s| 1.0 / s.max(SIGMA_FLOOR));
            err.mul(&inv)
        })
        .collect::<Result<_>>()?;
    ScoreBatch::from_fields(ScoreKind::Std, &fields)
}

/// Finite-sample conformal quantile, or the everything-covered sentinel
/// when the calibration set is too small for the requested level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConformalQuantile {
    Finite(f64),
    /// Rank exceeds the sample size: the prediction set is everything.
    Infinite,
}

impl ConformalQuantile {
    /// Numeric value, with the sentinel mapped to +inf.
    pub fn value(&self) -> f64 {
        match self {
            ConformalQuantile::Finite(v) => *v,
            ConformalQuantile::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ConformalQuantile::Finite(_))
    }
}

/// The k-th smallest value with k = ceil((n+1)(1-alpha)): an order
/// statistic, no interpolation.
pub fn conformal_quantile(values: &[f64], alpha: f64) -> Result<ConformalQuantile> {
    if values.is_empty() {
        return Err(Error::Config("empty calibration values".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must be in (0,1), got {alpha}")));
    }
    let n = values.len();
    let k = ((n as f64 + 1.0) * (1.0 - alpha)).ceil() as usize;
    if k > n {
        return Ok(ConformalQuantile::Infinite);
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(ConformalQuantile::Finite(sorted[k - 1]))
}

#[derive(Debug, Clone)]
pub enum CalibrationMode {
    /// Independent per-cell quantile field.
    Marginal { q_hat: FieldTensor },
    /// One scalar quantile over sup-normalised scores, modulated by the
    /// per-cell calibration spread.
    Joint {
        q_hat: ConformalQuantile,
        sigma: FieldTensor,
    },
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub kind: ScoreKind,
    pub alpha: f64,
    pub n: usize,
    pub mode: CalibrationMode,
}

impl CalibrationResult {
    /// Per-cell half-width of the band this calibration produces.
    pub fn half_width_field(&self) -> FieldTensor {
        match &self.mode {
            CalibrationMode::Marginal { q_hat } => q_hat.clone(),
            CalibrationMode::Joint { q_hat, sigma } => sigma.scale(q_hat.value()),
        }
    }

    /// Mean per-cell half-width; infinite if any cell is uncovered.
    pub fn mean_width(&self) -> f64 {
        let f = self.half_width_field();
        let n = f.grid().num_points() as f64;
        f.values().iter().sum::<f64>() / n
    }

    pub fn grid(&self) -> &Grid {
        match &self.mode {
            CalibrationMode::Marginal { q_hat } => q_hat.grid(),
            CalibrationMode::Joint { sigma, .. } => sigma.grid(),
        }
    }
}

/// Cell-wise conformal quantiles across the sample axis.
pub fn calibrate_marginal(scores: &ScoreBatch, alpha: f64) -> Result<CalibrationResult> {
    let cells = scores.grid.num_points();
    let mut q = Vec::with_capacity(cells);
    for j in 0..cells {
        let col: Vec<f64> = scores.scores.column(j).to_vec();
        q.push(conformal_quantile(&col, alpha)?.value());
    }
    let arr = ArrayD::from_shape_vec(IxDyn(&scores.grid.shape()), q)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(CalibrationResult {
        kind: scores.kind,
        alpha,
        n: scores.len(),
        mode: CalibrationMode::Marginal {
            q_hat: FieldTensor::new(scores.grid.clone(), arr)?,
        },
    })
}

/// Per-cell population standard deviation of the calibration scores,
/// floored away from zero.
pub fn score_spread(scores: &ScoreBatch) -> Result<FieldTensor> {
    let n = scores.len() as f64;
    let cells = scores.grid.num_points();
    let mut sigma = Vec::with_capacity(cells);
    for j in 0..cells {
        let col = scores.scores.column(j);
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        sigma.push(var.sqrt().max(SIGMA_FLOOR));
    }
    let arr = ArrayD::from_shape_vec(IxDyn(&scores.grid.shape()), sigma)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    FieldTensor::new(scores.grid.clone(), arr)
}

/// One quantile over the per-sample statistics S_j = max over cells of
/// score / spread; the band is +-q_hat * spread.
pub fn calibrate_joint(scores: &ScoreBatch, alpha: f64) -> Result<CalibrationResult> {
    let sigma = score_spread(scores)?;
    let sup = joint_statistics(scores, &sigma)?;
    let q_hat = conformal_quantile(&sup, alpha)?;
    Ok(CalibrationResult {
        kind: scores.kind,
        alpha,
        n: scores.len(),
        mode: CalibrationMode::Joint { q_hat, sigma },
    })
}

/// Per-sample sup-normalised statistics of a score batch.
pub fn joint_statistics(scores: &ScoreBatch, sigma: &FieldTensor) -> Result<Vec<f64>> {
    if *sigma.grid() != scores.grid {
        return Err(Error::GridMismatch("spread field is not on the scoring grid".into()));
    }
    let flat_sigma: Vec<f64> = sigma.values().iter().cloned().collect();
    Ok((0..scores.len())
        .map(|i| {
            scores
                .scores
                .row(i)
                .iter()
                .zip(&flat_sigma)
                .map(|(&s, &sg)| s / sg)
                .fold(0.0f64, f64::max)
        })
        .collect())
}

/// Lower/upper envelope on the scoring grid.
#[derive(Debug, Clone)]
pub struct PredictionBand {
    pub lower: FieldTensor,
    pub upper: FieldTensor,
}

/// Band from a calibration. Residual-score calibrations produce bands in
/// residual space that ignore the prediction entirely; error-score
/// calibrations centre the band on the supplied prediction (and scale by
/// the supplied spread for normalised scores).
pub fn prediction_band(
    result: &CalibrationResult,
    prediction: Option<&FieldTensor>,
    spread: Option<&FieldTensor>,
) -> Result<PredictionBand> {
    let half = result.half_width_field();
    match result.kind {
        ScoreKind::Pre => Ok(PredictionBand {
            lower: half.scale(-1.0),
            upper: half,
        }),
        ScoreKind::Aer => {
            let p = prediction
                .ok_or_else(|| Error::Config("error-score band needs a prediction".into()))?;
            p.check_same_grid(&half)?;
            Ok(PredictionBand {
                lower: p.sub(&half)?,
                upper: p.add(&half)?,
            })
        }
        ScoreKind::Std => {
            let p = prediction
                .ok_or_else(|| Error::Config("normalised band needs a prediction mean".into()))?;
            let s = spread
                .ok_or_else(|| Error::Config("normalised band needs a spread field".into()))?;
            p.check_same_grid(&half)?;
            let scaled = half.mul(s)?;
            Ok(PredictionBand {
                lower: p.sub(&scaled)?,
                upper: p.add(&scaled)?,
            })
        }
    }
}

/// Accept/reject outcome for one prediction, with the per-cell violation
/// mask (1 where the residual falls outside the band).
#[derive(Debug, Clone)]
pub struct ValidationOutcome {
    pub accepted: bool,
    pub violation_mask: FieldTensor,
    pub violations: usize,
    /// max residual / half-width; <= 1 when accepted.
    pub worst_ratio: f64,
}

/// Residual-space membership check: the prediction's |D(f)| must lie inside
/// the calibrated band cell-wise (marginal) or in sup norm (joint).
/// Boundary values count as inside.
pub fn validate_prediction(
    program: &ResidualProgram,
    result: &CalibrationResult,
    prediction: &FieldTensor,
) -> Result<ValidationOutcome> {
    if result.kind != ScoreKind::Pre {
        return Err(Error::Config(
            "residual validation needs a residual-score calibration".into(),
        ));
    }
    let r = program.evaluate_single(prediction)?.abs();
    if *r.grid() != *result.grid() {
        return Err(Error::GridMismatch(
            "prediction residual is not on the calibration grid".into(),
        ));
    }
    let half = result.half_width_field();
    let mut violations = 0usize;
    let mut worst = 0.0f64;
    let mut mask = FieldTensor::zeros(r.grid().clone());
    {
        let m = mask.values_mut();
        for ((out, &score), &h) in m.iter_mut().zip(r.values().iter()).zip(half.values().iter()) {
            let ratio = if h == 0.0 {
                if score == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                score / h
            };
            worst = worst.max(ratio);
            if score > h {
                *out = 1.0;
                violations += 1;
            }
        }
    }
    Ok(ValidationOutcome {
        accepted: violations == 0,
        violation_mask: mask,
        violations,
        worst_ratio: worst,
    })
}

/// Fraction of validation scores inside the calibrated band: per-cell
/// fractions averaged over cells (marginal) or the fraction of samples
/// whose sup-normalised statistic is covered (joint).
pub fn empirical_coverage(result: &CalibrationResult, validation: &ScoreBatch) -> Result<f64> {
    if *validation.grid() != *result.grid() {
        return Err(Error::GridMismatch(
            "validation scores are not on the calibration grid".into(),
        ));
    }
    match &result.mode {
        CalibrationMode::Marginal { q_hat } => {
            let flat_q: Vec<f64> = q_hat.values().iter().cloned().collect();
            let n = validation.len();
            let mut covered = 0usize;
            for i in 0..n {
                for (&s, &q) in validation.scores.row(i).iter().zip(&flat_q) {
                    if s <= q {
                        covered += 1;
                    }
                }
            }
            Ok(covered as f64 / (n * flat_q.len()) as f64)
        }
        CalibrationMode::Joint { q_hat, sigma } => {
            let sup = joint_statistics(validation, sigma)?;
            let q = q_hat.value();
            let covered = sup.iter().filter(|&&s| s <= q).count();
            Ok(covered as f64 / sup.len() as f64)
        }
    }
}

/// Per-cell coverage fractions for diagnostics (marginal mode).
pub fn per_cell_coverage(result: &CalibrationResult, validation: &ScoreBatch) -> Result<FieldTensor> {
    let q_hat = match &result.mode {
        CalibrationMode::Marginal { q_hat } => q_hat,
        CalibrationMode::Joint { .. } => {
            return Err(Error::Config("per-cell coverage is a marginal-mode diagnostic".into()))
        }
    };
    if *validation.grid() != *q_hat.grid() {
        return Err(Error::GridMismatch(
            "validation scores are not on the calibration grid".into(),
        ));
    }
    let n = validation.len() as f64;
    let cells = q_hat.grid().num_points();
    let flat_q: Vec<f64> = q_hat.values().iter().cloned().collect();
    let mut cov = vec![0.0; cells];
    for (j, cell_cov) in cov.iter_mut().enumerate() {
        let col = validation.scores.column(j);
        *cell_cov = col.iter().filter(|&&s| s <= flat_q[j]).count() as f64 / n;
    }
    let arr = ArrayD::from_shape_vec(IxDyn(&q_hat.grid().shape()), cov)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    FieldTensor::new(q_hat.grid().clone(), arr)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub alpha: f64,
    pub marginal_coverage: f64,
    pub joint_coverage: f64,
    pub n_cal: usize,
    pub n_val: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
}

impl CoverageReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "alpha,marginal_coverage,joint_coverage,n_cal,n_val")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.alpha, r.marginal_coverage, r.joint_coverage, r.n_cal, r.n_val
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)
    }
}

/// Default confidence grid {0.05, 0.10, ..., 0.95}.
pub fn default_alpha_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// Calibrate both modes and measure coverage at each confidence level.
pub fn coverage_curve(
    calibration: &ScoreBatch,
    validation: &ScoreBatch,
    alphas: &[f64],
) -> Result<CoverageReport> {
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let marginal = calibrate_marginal(calibration, alpha)?;
        let joint = calibrate_joint(calibration, alpha)?;
        rows.push(CoverageRow {
            alpha,
            marginal_coverage: empirical_coverage(&marginal, validation)?,
            joint_coverage: empirical_coverage(&joint, validation)?,
            n_cal: calibration.len(),
            n_val: validation.len(),
        });
    }
    Ok(CoverageReport { rows })
}
