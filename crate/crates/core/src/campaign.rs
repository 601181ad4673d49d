//! End-to-end calibration campaigns: sample initial conditions, roll out
//! a predictor, score the rollouts by PDE residual, calibrate, and report
//! empirical coverage. Also hosts the resolution and model-quality
//! studies and single-prediction validation against saved artifacts.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::conformal::{
    calibrate_joint, calibrate_marginal, coverage_curve, default_alpha_grid, empirical_coverage,
    pre_scores, validate_prediction, CalibrationMode, CalibrationResult, CoverageReport,
    ScoreBatch, ScoreKind, ValidationOutcome,
};
use crate::error::{Error, Result};
use crate::grid::{FieldTensor, Grid};
use crate::ic::{burgers_ic, gaussian_bump_ic};
use crate::residual::{advection_program, burgers_program, wave_program, ResidualProgram};
use crate::sampling::{latin_hypercube_sample, ParamBox, ParamRange};
use crate::solvers::{PdeKind, SolverConfig};
use crate::surrogate::{perturbed_oracle, train_spectral_ar, Predictor};

/// Monte Carlo slack applied to coverage assertions in the studies.
pub const MC_TOLERANCE: f64 = 0.03;

/// Fixed width of the 1D campaign bump (exponent prefactor); the sampled
/// parameters are amplitude and centre.
const BUMP_WIDTH_1D: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub enum PredictorSpec {
    PerturbedOracle { epsilon: f64, smoothness: f64 },
    SpectralAr { retained: usize, training_size: usize },
}

/// Everything a campaign run needs, parseable from the sectioned text
/// config format (see [`parse_config`]).
#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub solver: SolverConfig,
    pub predictor: PredictorSpec,
    /// Inclusive ranges of the testbed's IC parameters, in testbed order.
    pub ic_ranges: Vec<ParamRange>,
    pub n_cal: usize,
    pub n_val: usize,
    pub alphas: Vec<f64>,
    pub seed: u64,
    /// Verbatim config text, echoed into the run manifest.
    pub source: String,
}

/// IC parameter names for a testbed, in the order `ic_ranges` uses.
pub fn ic_param_names(kind: PdeKind) -> &'static [&'static str] {
    match kind {
        PdeKind::Advection => &["amplitude", "center"],
        PdeKind::Burgers => &["alpha", "beta", "gamma"],
        PdeKind::Wave2d => &["sharpness", "center-x", "center-y"],
    }
}

/// Initial condition of a testbed from one sampled parameter vector.
pub fn build_ic(solver: &SolverConfig, params: &[f64]) -> Result<FieldTensor> {
    let expected = ic_param_names(solver.kind).len();
    if params.len() != expected {
        return Err(Error::Config(format!(
            "{} wants {expected} IC parameters, got {}",
            solver.kind.label(),
            params.len()
        )));
    }
    match solver.kind {
        PdeKind::Advection => {
            gaussian_bump_ic(&solver.space, params[0], &params[1..2], BUMP_WIDTH_1D)
        }
        PdeKind::Burgers => burgers_ic(&solver.space, params[0], params[1], params[2]),
        PdeKind::Wave2d => gaussian_bump_ic(&solver.space, params[0], &params[1..3], 1.0),
    }
}

/// Residual program of a testbed on the rollout grid.
pub fn build_program(solver: &SolverConfig) -> Result<ResidualProgram> {
    let grid = solver.output_grid()?;
    match solver.kind {
        PdeKind::Advection => advection_program(&grid, solver.param),
        PdeKind::Burgers => burgers_program(&grid, solver.param),
        PdeKind::Wave2d => wave_program(&grid, solver.param),
    }
}

/// Instantiate the configured predictor, training it if necessary.
pub fn build_predictor(config: &CampaignConfig) -> Result<Box<dyn Predictor>> {
    match &config.predictor {
        PredictorSpec::PerturbedOracle { epsilon, smoothness } => Ok(Box::new(perturbed_oracle(
            config.solver.clone(),
            *epsilon,
            *smoothness,
            config.seed ^ 0x9e3779b97f4a7c15,
        )?)),
        PredictorSpec::SpectralAr { retained, training_size } => {
            let samples = latin_hypercube_sample(&ParamBox {
                ranges: config.ic_ranges.clone(),
                sample_count: *training_size,
                seed: config.seed.wrapping_add(1),
            })?;
            let mut rollouts = Vec::with_capacity(samples.len());
            for p in &samples {
                rollouts.push(config.solver.solve(&build_ic(&config.solver, p)?)?);
            }
            Ok(Box::new(train_spectral_ar(&rollouts, *retained)?))
        }
    }
}

fn section_value<'a>(
    sections: &'a HashMap<String, HashMap<String, String>>,
    section: &str,
    key: &str,
) -> Result<&'a str> {
    sections
        .get(section)
        .and_then(|s| s.get(key))
        .map(|s| s.as_str())
        .ok_or_else(|| Error::Parse(format!("missing config key [{section}] {key}")))
}

fn parse_num<T: std::str::FromStr>(section: &str, key: &str, raw: &str) -> Result<T> {
    raw.parse::<T>()
        .map_err(|_| Error::Parse(format!("bad value '{raw}' for [{section}] {key}")))
}

fn get_num<T: std::str::FromStr>(
    sections: &HashMap<String, HashMap<String, String>>,
    section: &str,
    key: &str,
) -> Result<T> {
    parse_num(section, key, section_value(sections, section, key)?)
}

/// Parse the sectioned plain-text campaign config:
///
/// ```text
/// [testbed]
/// pde = advection        # advection | burgers | wave2d
/// param = 1.0            # speed / viscosity / wave speed
/// x-min = 0.0
/// x-max = 2.0
/// x-cells = 200          # wave2d also wants y-min / y-max / y-cells
/// dt = 0.01
/// steps = 50
/// stride = 1
///
/// [ic]                   # one min/max pair per testbed parameter
/// amplitude-min = 50
/// amplitude-max = 200
/// center-min = 0.5
/// center-max = 1.0
///
/// [predictor]
/// kind = perturbed-oracle    # or spectral-ar
/// epsilon = 0.01             # perturbed-oracle
/// smoothness = 0.05          # perturbed-oracle
/// retained = 32              # spectral-ar
/// training-size = 16         # spectral-ar
///
/// [campaign]
/// n-cal = 200
/// n-val = 200
/// alphas = 0.05 0.1 0.25     # or "default" for 0.05..0.95
/// seed = 7
/// ```
///
/// `#` starts a comment; keys are `key = value` lines under a `[section]`.
pub fn parse_config(text: &str) -> Result<CampaignConfig> {
    let mut sections: HashMap<String, HashMap<String, String>> = HashMap::new();
    let mut current: Option<String> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            let name = line[1..line.len() - 1].trim().to_string();
            sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Parse(format!("line {}: expected 'key = value', got '{line}'", lineno + 1))
        })?;
        let section = current
            .clone()
            .ok_or_else(|| Error::Parse(format!("line {}: key outside any [section]", lineno + 1)))?;
        sections
            .get_mut(&section)
            .unwrap()
            .insert(key.trim().to_string(), value.trim().to_string());
    }

    let kind = PdeKind::from_label(section_value(&sections, "testbed", "pde")?)?;
    let space = match kind {
        PdeKind::Wave2d => Grid::space_2d(
            (
                get_num(&sections, "testbed", "x-min")?,
                get_num(&sections, "testbed", "x-max")?,
                get_num(&sections, "testbed", "x-cells")?,
            ),
            (
                get_num(&sections, "testbed", "y-min")?,
                get_num(&sections, "testbed", "y-max")?,
                get_num(&sections, "testbed", "y-cells")?,
            ),
        )?,
        _ => Grid::space_1d(
            get_num(&sections, "testbed", "x-min")?,
            get_num(&sections, "testbed", "x-max")?,
            get_num(&sections, "testbed", "x-cells")?,
        )?,
    };
    let solver = SolverConfig::new(
        kind,
        get_num(&sections, "testbed", "param")?,
        space,
        get_num(&sections, "testbed", "dt")?,
        get_num(&sections, "testbed", "steps")?,
        get_num(&sections, "testbed", "stride")?,
    )?;

    let mut ic_ranges = Vec::new();
    for name in ic_param_names(kind) {
        ic_ranges.push(ParamRange {
            name: name.to_string(),
            lower: get_num(&sections, "ic", &format!("{name}-min"))?,
            upper: get_num(&sections, "ic", &format!("{name}-max"))?,
        });
    }

    let predictor = match section_value(&sections, "predictor", "kind")? {
        "perturbed-oracle" => PredictorSpec::PerturbedOracle {
            epsilon: get_num(&sections, "predictor", "epsilon")?,
            smoothness: get_num(&sections, "predictor", "smoothness")?,
        },
        "spectral-ar" => PredictorSpec::SpectralAr {
            retained: get_num(&sections, "predictor", "retained")?,
            training_size: get_num(&sections, "predictor", "training-size")?,
        },
        other => return Err(Error::Parse(format!("unknown predictor kind '{other}'"))),
    };

    let alphas_raw = section_value(&sections, "campaign", "alphas")?;
    let alphas = if alphas_raw == "default" {
        default_alpha_grid()
    } else {
        alphas_raw
            .split_whitespace()
            .map(|t| parse_num::<f64>("campaign", "alphas", t))
            .collect::<Result<Vec<f64>>>()?
    };
    for &a in &alphas {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Config(format!("alpha {a} outside (0,1)")));
        }
    }
    let n_cal: usize = get_num(&sections, "campaign", "n-cal")?;
    if n_cal == 0 {
        return Err(Error::Config("n-cal must be at least 1".into()));
    }

    Ok(CampaignConfig {
        solver,
        predictor,
        ic_ranges,
        n_cal,
        n_val: get_num(&sections, "campaign", "n-val")?,
        alphas,
        seed: get_num(&sections, "campaign", "seed")?,
        source: text.to_string(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestAlphaEntry {
    pub alpha: f64,
    /// Scalar joint quantile; absent when calibration was insufficient.
    pub joint_q_hat: Option<f64>,
    pub marginal_artifact: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub config: String,
    pub seed: u64,
    pub n_cal: usize,
    pub n_val: usize,
    pub alphas: Vec<ManifestAlphaEntry>,
    pub scores_cal: String,
    pub scores_val: String,
    pub sigma: String,
    pub coverage_csv: String,
    pub wall_times_s: HashMap<String, f64>,
}

pub struct CampaignOutcome {
    pub report: CoverageReport,
    /// Mean marginal band half-width per confidence level.
    pub mean_marginal_width: Vec<(f64, f64)>,
    pub out_dir: PathBuf,
}

fn alpha_tag(alpha: f64) -> String {
    format!("{:04.0}", alpha * 1000.0)
}

/// Run the full pipeline and write the artifact set into `out_dir`.
/// Outputs appear only after every stage has succeeded.
pub fn run_campaign(config: &CampaignConfig, out_dir: &Path) -> Result<CampaignOutcome> {
    let program = build_program(&config.solver)?;
    let predictor = build_predictor(config)?;

    let t0 = Instant::now();
    let samples = latin_hypercube_sample(&ParamBox {
        ranges: config.ic_ranges.clone(),
        sample_count: config.n_cal + config.n_val,
        seed: config.seed,
    })?;
    let mut predictions = Vec::with_capacity(samples.len());
    for p in &samples {
        predictions.push(predictor.predict(&build_ic(&config.solver, p)?)?);
    }
    let predict_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let all_scores = pre_scores(&predictions, &program)?;
    let fields = all_scores.to_fields()?;
    let cal = ScoreBatch::from_fields(ScoreKind::Pre, &fields[..config.n_cal])?;
    let val = ScoreBatch::from_fields(ScoreKind::Pre, &fields[config.n_cal..])?;
    let score_s = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let report = coverage_curve(&cal, &val, &config.alphas)?;
    let mut calibrations = Vec::with_capacity(config.alphas.len());
    let mut mean_marginal_width = Vec::with_capacity(config.alphas.len());
    for &alpha in &config.alphas {
        let marginal = calibrate_marginal(&cal, alpha)?;
        let joint = calibrate_joint(&cal, alpha)?;
        mean_marginal_width.push((alpha, marginal.mean_width()));
        calibrations.push((alpha, marginal, joint));
    }
    let sigma = crate::conformal::score_spread(&cal)?;
    let calibrate_s = t2.elapsed().as_secs_f64();

    log::info!(
        "campaign timings: predict {predict_s:.3}s score {score_s:.3}s calibrate {calibrate_s:.3}s"
    );

    // all computation done; now write artifacts, removing them on failure
    std::fs::create_dir_all(out_dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<()> {
        let track = |p: PathBuf, written: &mut Vec<PathBuf>| -> PathBuf {
            written.push(p.clone());
            p
        };
        let csv_path = track(out_dir.join("coverage.csv"), &mut written);
        report.save_csv(&csv_path)?;
        let cal_path = track(out_dir.join("scores-cal.dump"), &mut written);
        cal.save(&cal_path)?;
        let val_path = track(out_dir.join("scores-val.dump"), &mut written);
        val.save(&val_path)?;
        let sigma_path = track(out_dir.join("sigma.dump"), &mut written);
        crate::dump::save_field(&sigma_path, &sigma)?;
        let mut entries = Vec::new();
        for (alpha, marginal, joint) in &calibrations {
            let name = format!("qhat-marginal-{}.dump", alpha_tag(*alpha));
            let path = track(out_dir.join(&name), &mut written);
            if let CalibrationMode::Marginal { q_hat } = &marginal.mode {
                crate::dump::save_field(&path, q_hat)?;
            }
            let joint_q = match &joint.mode {
                CalibrationMode::Joint { q_hat, .. } if q_hat.is_finite() => Some(q_hat.value()),
                _ => None,
            };
            entries.push(ManifestAlphaEntry {
                alpha: *alpha,
                joint_q_hat: joint_q,
                marginal_artifact: name,
            });
        }
        let manifest = Manifest {
            config: config.source.clone(),
            seed: config.seed,
            n_cal: config.n_cal,
            n_val: config.n_val,
            alphas: entries,
            scores_cal: "scores-cal.dump".into(),
            scores_val: "scores-val.dump".into(),
            sigma: "sigma.dump".into(),
            coverage_csv: "coverage.csv".into(),
            wall_times_s: HashMap::from([
                ("predict".into(), predict_s),
                ("score".into(), score_s),
                ("calibrate".into(), calibrate_s),
            ]),
        };
        let manifest_path = track(out_dir.join("manifest.json"), &mut written);
        std::fs::write(
            &manifest_path,
            serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse(e.to_string()))?,
        )?;
        Ok(())
    })();
    if let Err(e) = result {
        for p in &written {
            let _ = std::fs::remove_file(p);
        }
        return Err(e);
    }

    Ok(CampaignOutcome {
        report,
        mean_marginal_width,
        out_dir: out_dir.to_path_buf(),
    })
}

/// Re-derive the coverage CSV from the dumped score artifacts of a
/// previous run. Byte-identical to the original for the same alphas.
pub fn rederive_coverage(artifact_dir: &Path, alphas: &[f64]) -> Result<CoverageReport> {
    let cal = ScoreBatch::load(ScoreKind::Pre, &artifact_dir.join("scores-cal.dump"))?;
    let val = ScoreBatch::load(ScoreKind::Pre, &artifact_dir.join("scores-val.dump"))?;
    coverage_curve(&cal, &val, alphas)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub label: String,
    pub mean_width: f64,
    pub marginal_coverage: f64,
    pub joint_coverage: f64,
}

fn study_alpha(config: &CampaignConfig) -> f64 {
    config
        .alphas
        .iter()
        .cloned()
        .find(|a| (a - 0.1).abs() < 1e-12)
        .unwrap_or(config.alphas[0])
}

fn write_study_csv(path: &Path, alpha: f64, rows: &[StudyRow]) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "label,alpha,mean_width,marginal_coverage,joint_coverage")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{}",
            r.label, alpha, r.mean_width, r.marginal_coverage, r.joint_coverage
        )?;
    }
    Ok(())
}

fn campaign_study_row(config: &CampaignConfig, label: String, alpha: f64) -> Result<StudyRow> {
    let program = build_program(&config.solver)?;
    let predictor = build_predictor(config)?;
    let samples = latin_hypercube_sample(&ParamBox {
        ranges: config.ic_ranges.clone(),
        sample_count: config.n_cal + config.n_val,
        seed: config.seed,
    })?;
    let mut predictions = Vec::with_capacity(samples.len());
    for p in &samples {
        predictions.push(predictor.predict(&build_ic(&config.solver, p)?)?);
    }
    let all = pre_scores(&predictions, &program)?;
    let fields = all.to_fields()?;
    let cal = ScoreBatch::from_fields(ScoreKind::Pre, &fields[..config.n_cal])?;
    let val = ScoreBatch::from_fields(ScoreKind::Pre, &fields[config.n_cal..])?;
    let marginal = calibrate_marginal(&cal, alpha)?;
    let joint = calibrate_joint(&cal, alpha)?;
    Ok(StudyRow {
        label,
        mean_width: marginal.mean_width(),
        marginal_coverage: empirical_coverage(&marginal, &val)?,
        joint_coverage: empirical_coverage(&joint, &val)?,
    })
}

/// Repeat the campaign at several spatial resolutions. Every level must
/// keep its marginal coverage above the guarantee minus MC slack; the
/// table shows how bands widen as the grid coarsens.
pub fn run_discretisation_study(
    config: &CampaignConfig,
    levels: &[usize],
    out_dir: &Path,
) -> Result<Vec<StudyRow>> {
    if levels.is_empty() {
        return Err(Error::Config("no refinement levels given".into()));
    }
    let alpha = study_alpha(config);
    let mut rows = Vec::with_capacity(levels.len());
    for &cells in levels {
        let mut axes = Vec::new();
        for a in config.solver.space.axes() {
            axes.push(crate::grid::Axis::new(a.kind, a.min, a.max, cells));
        }
        let space = Grid::new(axes)?;
        let solver = SolverConfig::new(
            config.solver.kind,
            config.solver.param,
            space,
            config.solver.dt,
            config.solver.steps,
            config.solver.stride,
        )?;
        let level_config = CampaignConfig {
            solver,
            ..config.clone()
        };
        let row = campaign_study_row(&level_config, format!("cells-{cells}"), alpha)?;
        if row.marginal_coverage < 1.0 - alpha - MC_TOLERANCE {
            return Err(Error::Numerical(format!(
                "coverage {} at {} cells fell below the guarantee",
                row.marginal_coverage, cells
            )));
        }
        rows.push(row);
    }
    std::fs::create_dir_all(out_dir)?;
    write_study_csv(&out_dir.join("study-discretisation.csv"), alpha, &rows)?;
    Ok(rows)
}

/// Campaigns for a good and a bad perturbed oracle. Both must keep the
/// coverage guarantee; the bad model must pay for it with wider bands.
pub fn run_model_quality_study(
    config: &CampaignConfig,
    eps_good: f64,
    eps_bad: f64,
    out_dir: &Path,
) -> Result<Vec<StudyRow>> {
    if eps_bad < eps_good {
        return Err(Error::Config("bad-model epsilon must be >= good-model epsilon".into()));
    }
    let smoothness = match &config.predictor {
        PredictorSpec::PerturbedOracle { smoothness, .. } => *smoothness,
        _ => 0.05,
    };
    let alpha = study_alpha(config);
    let mut rows = Vec::with_capacity(2);
    for (label, eps) in [("good", eps_good), ("bad", eps_bad)] {
        let level_config = CampaignConfig {
            predictor: PredictorSpec::PerturbedOracle {
                epsilon: eps,
                smoothness,
            },
            ..config.clone()
        };
        let row = campaign_study_row(&level_config, format!("{label}-eps-{eps}"), alpha)?;
        if row.marginal_coverage < 1.0 - alpha - MC_TOLERANCE {
            return Err(Error::Numerical(format!(
                "coverage {} for epsilon {eps} fell below the guarantee",
                row.marginal_coverage
            )));
        }
        rows.push(row);
    }
    if eps_bad > eps_good && rows[1].mean_width <= rows[0].mean_width {
        return Err(Error::Numerical(format!(
            "bad-model width {} not larger than good-model width {}",
            rows[1].mean_width, rows[0].mean_width
        )));
    }
    std::fs::create_dir_all(out_dir)?;
    write_study_csv(&out_dir.join("study-model-quality.csv"), alpha, &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandMode {
    Marginal,
    Joint,
}

/// Validate one saved prediction against the artifacts of a previous
/// campaign run. The residual program is rebuilt from the manifest's
/// config echo.
pub fn validate_single(
    artifact_dir: &Path,
    prediction_path: &Path,
    alpha: f64,
    mode: BandMode,
) -> Result<ValidationOutcome> {
    let manifest_raw = std::fs::read_to_string(artifact_dir.join("manifest.json"))?;
    let manifest: Manifest =
        serde_json::from_str(&manifest_raw).map_err(|e| Error::Parse(e.to_string()))?;
    let config = parse_config(&manifest.config)?;
    let program = build_program(&config.solver)?;
    let prediction = crate::dump::load_field(prediction_path)?;
    let entry = manifest
        .alphas
        .iter()
        .find(|e| (e.alpha - alpha).abs() < 1e-9)
        .ok_or_else(|| {
            Error::Config(format!("alpha {alpha} has no artifacts in this campaign run"))
        })?;
    let result = match mode {
        BandMode::Marginal => {
            let q_hat = crate::dump::load_field(&artifact_dir.join(&entry.marginal_artifact))?;
            CalibrationResult {
                kind: ScoreKind::Pre,
                alpha,
                n: manifest.n_cal,
                mode: CalibrationMode::Marginal { q_hat },
            }
        }
        BandMode::Joint => {
            let sigma = crate::dump::load_field(&artifact_dir.join(&manifest.sigma))?;
            let q_hat = match entry.joint_q_hat {
                Some(v) => crate::conformal::ConformalQuantile::Finite(v),
                None => crate::conformal::ConformalQuantile::Infinite,
            };
            CalibrationResult {
                kind: ScoreKind::Pre,
                alpha,
                n: manifest.n_cal,
                mode: CalibrationMode::Joint { q_hat, sigma },
            }
        }
    };
    validate_prediction(&program, &result, &prediction)
}
