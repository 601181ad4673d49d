//! C ABI over the calibration library: opaque handles, integer error
//! codes, and a thread-local last-error message.
//!
//! Every function returns `PDECAL_OK` (0) on success or a nonzero error
//! code; `pdecal_last_error` describes the most recent failure on the
//! calling thread. Handles are created and destroyed by this library
//! only; passing a handle to the wrong `_free` is undefined behaviour.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::io::{BufRead, Write};
use std::path::Path;

use libc::{c_char, c_double, c_int, size_t};

use pdecal::conformal::{
    calibrate_joint, calibrate_marginal, pre_scores, validate_prediction, CalibrationMode,
    CalibrationResult, ConformalQuantile, ScoreKind,
};
use pdecal::error::Error;
use pdecal::grid::FieldTensor;
use pdecal::residual::{advection_program, burgers_program, wave_program, ResidualProgram};

pub const PDECAL_OK: c_int = 0;
pub const PDECAL_ERR_NULL_ARGUMENT: c_int = 1;
pub const PDECAL_ERR_INVALID_STRING: c_int = 2;
pub const PDECAL_ERR_IO: c_int = 3;
pub const PDECAL_ERR_CONFIG: c_int = 4;
pub const PDECAL_ERR_NUMERIC: c_int = 5;
pub const PDECAL_ERR_GRID_MISMATCH: c_int = 6;
pub const PDECAL_ERR_BUFFER_TOO_SMALL: c_int = 7;

/// Dense field over a space or space-time grid.
pub struct PdecalField(FieldTensor);

/// Compiled PDE residual program.
pub struct PdecalProgram(ResidualProgram);

/// Calibrated residual band (per-cell or whole-domain).
pub struct PdecalCalibration(CalibrationResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitised = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitised).unwrap());
}

fn code_for(err: &Error) -> c_int {
    match err {
        Error::Io(_) => PDECAL_ERR_IO,
        Error::Parse(_) | Error::Config(_) | Error::MissingField(_) => PDECAL_ERR_CONFIG,
        Error::GridMismatch(_) | Error::Size(_) => PDECAL_ERR_GRID_MISMATCH,
        _ => PDECAL_ERR_NUMERIC,
    }
}

fn fail(err: Error) -> c_int {
    set_error(&err.to_string());
    code_for(&err)
}

fn null_arg(what: &str) -> c_int {
    set_error(&format!("null argument: {what}"));
    PDECAL_ERR_NULL_ARGUMENT
}

unsafe fn path_arg<'a>(raw: *const c_char, what: &str) -> Result<&'a Path, c_int> {
    if raw.is_null() {
        return Err(null_arg(what));
    }
    match CStr::from_ptr(raw).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error(&format!("{what} is not valid UTF-8"));
            Err(PDECAL_ERR_INVALID_STRING)
        }
    }
}

/// Message describing the most recent error on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pdecal_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Load a field from a dump file written by this library.
#[no_mangle]
pub unsafe extern "C" fn pdecal_field_load(
    path: *const c_char,
    out: *mut *mut PdecalField,
) -> c_int {
    if out.is_null() {
        return null_arg("out");
    }
    let path = match path_arg(path, "path") {
        Ok(p) => p,
        Err(c) => return c,
    };
    match pdecal::dump::load_field(path) {
        Ok(f) => {
            *out = Box::into_raw(Box::new(PdecalField(f)));
            PDECAL_OK
        }
        Err(e) => fail(e),
    }
}

#[no_mangle]
pub unsafe extern "C" fn pdecal_field_save(
    field: *const PdecalField,
    path: *const c_char,
) -> c_int {
    if field.is_null() {
        return null_arg("field");
    }
    let path = match path_arg(path, "path") {
        Ok(p) => p,
        Err(c) => return c,
    };
    match pdecal::dump::save_field(path, &(*field).0) {
        Ok(()) => PDECAL_OK,
        Err(e) => fail(e),
    }
}

#[no_mangle]
pub unsafe extern "C" fn pdecal_field_free(field: *mut PdecalField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Number of grid axes.
#[no_mangle]
pub unsafe extern "C" fn pdecal_field_ndim(field: *const PdecalField, out: *mut size_t) -> c_int {
    if field.is_null() || out.is_null() {
        return null_arg("field/out");
    }
    *out = (*field).0.grid().ndim();
    PDECAL_OK
}

/// Grid extents; `shape` must hold at least `ndim` entries.
#[no_mangle]
pub unsafe extern "C" fn pdecal_field_shape(
    field: *const PdecalField,
    shape: *mut size_t,
    len: size_t,
) -> c_int {
    if field.is_null() || shape.is_null() {
        return null_arg("field/shape");
    }
    let dims = (*field).0.grid().shape();
    if len < dims.len() {
        set_error("shape buffer too small");
        return PDECAL_ERR_BUFFER_TOO_SMALL;
    }
    for (i, d) in dims.iter().enumerate() {
        *shape.add(i) = *d;
    }
    PDECAL_OK
}

/// Copy the row-major field values; `buf` must hold the product of the
/// grid extents.
#[no_mangle]
pub unsafe extern "C" fn pdecal_field_values(
    field: *const PdecalField,
    buf: *mut c_double,
    len: size_t,
) -> c_int {
    if field.is_null() || buf.is_null() {
        return null_arg("field/buf");
    }
    let values = (*field).0.values();
    if len < values.len() {
        set_error("value buffer too small");
        return PDECAL_ERR_BUFFER_TOO_SMALL;
    }
    for (i, v) in values.iter().enumerate() {
        *buf.add(i) = *v;
    }
    PDECAL_OK
}

unsafe fn build_program_handle(
    grid_source: *const PdecalField,
    out: *mut *mut PdecalProgram,
    build: impl FnOnce(&pdecal::grid::Grid) -> pdecal::error::Result<ResidualProgram>,
) -> c_int {
    if grid_source.is_null() || out.is_null() {
        return null_arg("grid_source/out");
    }
    match build((*grid_source).0.grid()) {
        Ok(p) => {
            *out = Box::into_raw(Box::new(PdecalProgram(p)));
            PDECAL_OK
        }
        Err(e) => fail(e),
    }
}

/// Advection residual u_t + speed * u_x on the grid of `grid_source`
/// (typically a rollout field).
#[no_mangle]
pub unsafe extern "C" fn pdecal_program_advection(
    grid_source: *const PdecalField,
    speed: c_double,
    out: *mut *mut PdecalProgram,
) -> c_int {
    build_program_handle(grid_source, out, |g| advection_program(g, speed))
}

/// Viscous Burgers residual u_t + u u_x - viscosity * u_xx.
#[no_mangle]
pub unsafe extern "C" fn pdecal_program_burgers(
    grid_source: *const PdecalField,
    viscosity: c_double,
    out: *mut *mut PdecalProgram,
) -> c_int {
    build_program_handle(grid_source, out, |g| burgers_program(g, viscosity))
}

/// 2D wave residual u_tt - speed^2 (u_xx + u_yy).
#[no_mangle]
pub unsafe extern "C" fn pdecal_program_wave(
    grid_source: *const PdecalField,
    speed: c_double,
    out: *mut *mut PdecalProgram,
) -> c_int {
    build_program_handle(grid_source, out, |g| wave_program(g, speed))
}

#[no_mangle]
pub unsafe extern "C" fn pdecal_program_free(program: *mut PdecalProgram) {
    if !program.is_null() {
        drop(Box::from_raw(program));
    }
}

/// Evaluate the signed residual of a prediction; the result lives on the
/// interior-cropped grid.
#[no_mangle]
pub unsafe extern "C" fn pdecal_residual_evaluate(
    program: *const PdecalProgram,
    prediction: *const PdecalField,
    out: *mut *mut PdecalField,
) -> c_int {
    if program.is_null() || prediction.is_null() || out.is_null() {
        return null_arg("program/prediction/out");
    }
    match (*program).0.evaluate_single(&(*prediction).0) {
        Ok(f) => {
            *out = Box::into_raw(Box::new(PdecalField(f)));
            PDECAL_OK
        }
        Err(e) => fail(e),
    }
}

unsafe fn collect_predictions<'a>(
    predictions: *const *const PdecalField,
    count: size_t,
) -> Result<Vec<FieldTensor>, c_int> {
    if predictions.is_null() || count == 0 {
        return Err(null_arg("predictions"));
    }
    let mut fields = Vec::with_capacity(count);
    for i in 0..count {
        let p = *predictions.add(i);
        if p.is_null() {
            return Err(null_arg("predictions[i]"));
        }
        fields.push((*p).0.clone());
    }
    Ok(fields)
}

unsafe fn calibrate_common(
    program: *const PdecalProgram,
    predictions: *const *const PdecalField,
    count: size_t,
    alpha: c_double,
    out: *mut *mut PdecalCalibration,
    joint: bool,
) -> c_int {
    if program.is_null() || out.is_null() {
        return null_arg("program/out");
    }
    let fields = match collect_predictions(predictions, count) {
        Ok(f) => f,
        Err(c) => return c,
    };
    let result = pre_scores(&fields, &(*program).0).and_then(|scores| {
        if joint {
            calibrate_joint(&scores, alpha)
        } else {
            calibrate_marginal(&scores, alpha)
        }
    });
    match result {
        Ok(c) => {
            *out = Box::into_raw(Box::new(PdecalCalibration(c)));
            PDECAL_OK
        }
        Err(e) => fail(e),
    }
}

/// Per-cell residual quantile band from calibration rollouts.
#[no_mangle]
pub unsafe extern "C" fn pdecal_calibrate_marginal(
    program: *const PdecalProgram,
    predictions: *const *const PdecalField,
    count: size_t,
    alpha: c_double,
    out: *mut *mut PdecalCalibration,
) -> c_int {
    calibrate_common(program, predictions, count, alpha, out, false)
}

/// Whole-domain sup-statistic band from calibration rollouts.
#[no_mangle]
pub unsafe extern "C" fn pdecal_calibrate_joint(
    program: *const PdecalProgram,
    predictions: *const *const PdecalField,
    count: size_t,
    alpha: c_double,
    out: *mut *mut PdecalCalibration,
) -> c_int {
    calibrate_common(program, predictions, count, alpha, out, true)
}

#[no_mangle]
pub unsafe extern "C" fn pdecal_calibration_free(calibration: *mut PdecalCalibration) {
    if !calibration.is_null() {
        drop(Box::from_raw(calibration));
    }
}

/// Check a prediction against the calibrated band. On success `accepted`
/// is 1 or 0 and `violations` counts cells outside the band.
#[no_mangle]
pub unsafe extern "C" fn pdecal_validate(
    program: *const PdecalProgram,
    calibration: *const PdecalCalibration,
    prediction: *const PdecalField,
    accepted: *mut c_int,
    violations: *mut size_t,
) -> c_int {
    if program.is_null() || calibration.is_null() || prediction.is_null() || accepted.is_null() {
        return null_arg("program/calibration/prediction/accepted");
    }
    match validate_prediction(&(*program).0, &(*calibration).0, &(*prediction).0) {
        Ok(outcome) => {
            *accepted = outcome.accepted as c_int;
            if !violations.is_null() {
                *violations = outcome.violations;
            }
            PDECAL_OK
        }
        Err(e) => fail(e),
    }
}

const CALIBRATION_MAGIC: &str = "pdecal-calibration-v1";

/// Persist a calibration: a one-line header followed by the band field in
/// the dump format.
#[no_mangle]
pub unsafe extern "C" fn pdecal_calibration_save(
    calibration: *const PdecalCalibration,
    path: *const c_char,
) -> c_int {
    if calibration.is_null() {
        return null_arg("calibration");
    }
    let path = match path_arg(path, "path") {
        Ok(p) => p,
        Err(c) => return c,
    };
    let result = (|| -> pdecal::error::Result<()> {
        let c = &(*calibration).0;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        match &c.mode {
            CalibrationMode::Marginal { q_hat } => {
                writeln!(
                    w,
                    "{CALIBRATION_MAGIC} marginal {} {} {}",
                    c.kind.label(),
                    c.alpha,
                    c.n
                )?;
                pdecal::dump::write_field(&mut w, q_hat)?;
            }
            CalibrationMode::Joint { q_hat, sigma } => {
                writeln!(
                    w,
                    "{CALIBRATION_MAGIC} joint {} {} {} {}",
                    c.kind.label(),
                    c.alpha,
                    c.n,
                    match q_hat {
                        ConformalQuantile::Finite(v) => format!("{v:.16e}"),
                        ConformalQuantile::Infinite => "inf".into(),
                    }
                )?;
                pdecal::dump::write_field(&mut w, sigma)?;
            }
        }
        Ok(())
    })();
    match result {
        Ok(()) => PDECAL_OK,
        Err(e) => fail(e),
    }
}

#[no_mangle]
pub unsafe extern "C" fn pdecal_calibration_load(
    path: *const c_char,
    out: *mut *mut PdecalCalibration,
) -> c_int {
    if out.is_null() {
        return null_arg("out");
    }
    let path = match path_arg(path, "path") {
        Ok(p) => p,
        Err(c) => return c,
    };
    let result = (|| -> pdecal::error::Result<CalibrationResult> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut header = String::new();
        r.read_line(&mut header)?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.first() != Some(&CALIBRATION_MAGIC) {
            return Err(Error::Parse("not a calibration file".into()));
        }
        let kind = match parts.get(2) {
            Some(&"pre") => ScoreKind::Pre,
            Some(&"aer") => ScoreKind::Aer,
            Some(&"std") => ScoreKind::Std,
            other => return Err(Error::Parse(format!("bad score kind {other:?}"))),
        };
        let alpha: f64 = parts
            .get(3)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse("bad alpha in calibration header".into()))?;
        let n: usize = parts
            .get(4)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse("bad sample count in calibration header".into()))?;
        match parts.get(1) {
            Some(&"marginal") => {
                let q_hat = pdecal::dump::read_field(&mut r)?;
                Ok(CalibrationResult {
                    kind,
                    alpha,
                    n,
                    mode: CalibrationMode::Marginal { q_hat },
                })
            }
            Some(&"joint") => {
                let q_raw = parts
                    .get(5)
                    .ok_or_else(|| Error::Parse("missing joint quantile".into()))?;
                let q_hat = if *q_raw == "inf" {
                    ConformalQuantile::Infinite
                } else {
                    ConformalQuantile::Finite(
                        q_raw
                            .parse()
                            .map_err(|_| Error::Parse("bad joint quantile".into()))?,
                    )
                };
                let sigma = pdecal::dump::read_field(&mut r)?;
                Ok(CalibrationResult {
                    kind,
                    alpha,
                    n,
                    mode: CalibrationMode::Joint { q_hat, sigma },
                })
            }
            other => Err(Error::Parse(format!("bad calibration mode {other:?}"))),
        }
    })();
    match result {
        Ok(c) => {
            *out = Box::into_raw(Box::new(PdecalCalibration(c)));
            PDECAL_OK
        }
        Err(e) => fail(e),
    }
}
