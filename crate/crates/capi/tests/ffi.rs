//! Exercises the C ABI end to end from Rust: handle lifecycle, a full
//! calibrate-then-validate cycle, artifact round trips, and the error
//! paths a C caller would hit.

use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use pdecal::grid::{FieldTensor, Grid};
use pdecal::ic::gaussian_bump_ic;
use pdecal::solvers::{PdeKind, SolverConfig};
use pdecal_capi::*;

fn advection_setup() -> (SolverConfig, Vec<FieldTensor>) {
    let space = Grid::space_1d(0.0, 2.0, 65).unwrap();
    let cfg = SolverConfig::new(PdeKind::Advection, 1.0, space, 0.01, 20, 2).unwrap();
    let rollouts: Vec<FieldTensor> = (0..26)
        .map(|i| {
            let amplitude = 0.5 + 0.05 * i as f64;
            let center = 0.6 + 0.02 * i as f64;
            let ic = gaussian_bump_ic(&cfg.space, amplitude, &[center], 50.0).unwrap();
            cfg.solve(&ic).unwrap()
        })
        .collect();
    (cfg, rollouts)
}

fn c_path(path: &Path) -> CString {
    CString::new(path.to_str().unwrap()).unwrap()
}

unsafe fn load(path: &Path) -> *mut PdecalField {
    let mut handle = ptr::null_mut();
    assert_eq!(pdecal_field_load(c_path(path).as_ptr(), &mut handle), PDECAL_OK);
    assert!(!handle.is_null());
    handle
}

#[test]
fn field_round_trip_preserves_shape_and_values() {
    let dir = tempfile::tempdir().unwrap();
    let (_, rollouts) = advection_setup();
    let path = dir.path().join("rollout.dump");
    pdecal::dump::save_field(&path, &rollouts[0]).unwrap();

    unsafe {
        let field = load(&path);

        let mut ndim = 0usize;
        assert_eq!(pdecal_field_ndim(field, &mut ndim), PDECAL_OK);
        assert_eq!(ndim, 2);

        let mut shape = [0usize; 2];
        assert_eq!(pdecal_field_shape(field, shape.as_mut_ptr(), 2), PDECAL_OK);
        assert_eq!(shape, [11, 65]);

        let mut values = vec![0.0f64; 11 * 65];
        assert_eq!(
            pdecal_field_values(field, values.as_mut_ptr(), values.len()),
            PDECAL_OK
        );
        let expected: Vec<f64> = rollouts[0].values().iter().cloned().collect();
        assert_eq!(values, expected);

        // Saving through the ABI and reloading natively closes the loop.
        let copy = dir.path().join("copy.dump");
        assert_eq!(pdecal_field_save(field, c_path(&copy).as_ptr()), PDECAL_OK);
        let reread = pdecal::dump::load_field(&copy).unwrap();
        assert_eq!(reread.values(), rollouts[0].values());

        pdecal_field_free(field);
    }
}

#[test]
fn calibrate_validate_cycle_accepts_solver_output_and_rejects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, rollouts) = advection_setup();

    // Mid-range fresh draw; with n = 26 and alpha = 0.05 the marginal
    // rank is 26, the per-cell max, so an in-distribution sample must be
    // accepted.
    let fresh_ic = gaussian_bump_ic(&cfg.space, 1.1, &[0.85], 50.0).unwrap();
    let fresh = cfg.solve(&fresh_ic).unwrap();
    let fresh_path = dir.path().join("fresh.dump");
    pdecal::dump::save_field(&fresh_path, &fresh).unwrap();

    let mut spiked = fresh.values().clone();
    spiked[[5, 30]] += 10.0;
    let corrupt = FieldTensor::new(fresh.grid().clone(), spiked).unwrap();
    let corrupt_path = dir.path().join("corrupt.dump");
    pdecal::dump::save_field(&corrupt_path, &corrupt).unwrap();

    unsafe {
        let grid_source = {
            let path = dir.path().join("grid-source.dump");
            pdecal::dump::save_field(&path, &rollouts[0]).unwrap();
            load(&path)
        };
        let mut program = ptr::null_mut();
        assert_eq!(
            pdecal_program_advection(grid_source, 1.0, &mut program),
            PDECAL_OK
        );

        let cal_handles: Vec<*mut PdecalField> = rollouts
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let path = dir.path().join(format!("cal-{i}.dump"));
                pdecal::dump::save_field(&path, r).unwrap();
                load(&path)
            })
            .collect();
        let cal_ptrs: Vec<*const PdecalField> =
            cal_handles.iter().map(|h| *h as *const _).collect();

        let mut calibration = ptr::null_mut();
        assert_eq!(
            pdecal_calibrate_marginal(
                program,
                cal_ptrs.as_ptr(),
                cal_ptrs.len(),
                0.05,
                &mut calibration
            ),
            PDECAL_OK
        );

        let fresh_handle = load(&fresh_path);
        let mut accepted = -1;
        let mut violations = usize::MAX;
        assert_eq!(
            pdecal_validate(program, calibration, fresh_handle, &mut accepted, &mut violations),
            PDECAL_OK
        );
        assert_eq!(accepted, 1);
        assert_eq!(violations, 0);

        let corrupt_handle = load(&corrupt_path);
        assert_eq!(
            pdecal_validate(program, calibration, corrupt_handle, &mut accepted, &mut violations),
            PDECAL_OK
        );
        assert_eq!(accepted, 0);
        assert!(violations > 0);

        // Persisted calibration must reproduce both verdicts.
        let cal_path = dir.path().join("calibration.bin");
        assert_eq!(
            pdecal_calibration_save(calibration, c_path(&cal_path).as_ptr()),
            PDECAL_OK
        );
        let mut reloaded = ptr::null_mut();
        assert_eq!(
            pdecal_calibration_load(c_path(&cal_path).as_ptr(), &mut reloaded),
            PDECAL_OK
        );
        assert_eq!(
            pdecal_validate(program, reloaded, fresh_handle, &mut accepted, &mut violations),
            PDECAL_OK
        );
        assert_eq!(accepted, 1);
        assert_eq!(
            pdecal_validate(program, reloaded, corrupt_handle, &mut accepted, &mut violations),
            PDECAL_OK
        );
        assert_eq!(accepted, 0);

        pdecal_calibration_free(reloaded);
        pdecal_calibration_free(calibration);
        pdecal_field_free(fresh_handle);
        pdecal_field_free(corrupt_handle);
        for h in cal_handles {
            pdecal_field_free(h);
        }
        pdecal_program_free(program);
        pdecal_field_free(grid_source);
    }
}

#[test]
fn joint_calibration_through_abi_matches_native() {
    let dir = tempfile::tempdir().unwrap();
    let (_, rollouts) = advection_setup();

    unsafe {
        let grid_source = {
            let path = dir.path().join("grid-source.dump");
            pdecal::dump::save_field(&path, &rollouts[0]).unwrap();
            load(&path)
        };
        let mut program = ptr::null_mut();
        assert_eq!(
            pdecal_program_advection(grid_source, 1.0, &mut program),
            PDECAL_OK
        );

        let handles: Vec<*mut PdecalField> = rollouts
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let path = dir.path().join(format!("cal-{i}.dump"));
                pdecal::dump::save_field(&path, r).unwrap();
                load(&path)
            })
            .collect();
        let ptrs: Vec<*const PdecalField> = handles.iter().map(|h| *h as *const _).collect();

        let mut calibration = ptr::null_mut();
        assert_eq!(
            pdecal_calibrate_joint(program, ptrs.as_ptr(), ptrs.len(), 0.1, &mut calibration),
            PDECAL_OK
        );

        // Round trip keeps the joint quantile and sigma field intact: the
        // reloaded band must give an identical verdict on every rollout.
        let cal_path = dir.path().join("joint.bin");
        assert_eq!(
            pdecal_calibration_save(calibration, c_path(&cal_path).as_ptr()),
            PDECAL_OK
        );
        let mut reloaded = ptr::null_mut();
        assert_eq!(
            pdecal_calibration_load(c_path(&cal_path).as_ptr(), &mut reloaded),
            PDECAL_OK
        );
        for h in &handles {
            let (mut a1, mut v1) = (-1, 0usize);
            let (mut a2, mut v2) = (-1, 0usize);
            assert_eq!(pdecal_validate(program, calibration, *h, &mut a1, &mut v1), PDECAL_OK);
            assert_eq!(pdecal_validate(program, reloaded, *h, &mut a2, &mut v2), PDECAL_OK);
            assert_eq!(a1, a2);
            assert_eq!(v1, v2);
        }

        pdecal_calibration_free(reloaded);
        pdecal_calibration_free(calibration);
        for h in handles {
            pdecal_field_free(h);
        }
        pdecal_program_free(program);
        pdecal_field_free(grid_source);
    }
}

#[test]
fn residual_evaluation_crops_to_interior_frames() {
    let dir = tempfile::tempdir().unwrap();
    let (_, rollouts) = advection_setup();
    let path = dir.path().join("rollout.dump");
    pdecal::dump::save_field(&path, &rollouts[0]).unwrap();

    unsafe {
        let field = load(&path);
        let mut program = ptr::null_mut();
        assert_eq!(pdecal_program_advection(field, 1.0, &mut program), PDECAL_OK);

        let mut residual = ptr::null_mut();
        assert_eq!(pdecal_residual_evaluate(program, field, &mut residual), PDECAL_OK);
        let mut shape = [0usize; 2];
        assert_eq!(pdecal_field_shape(residual, shape.as_mut_ptr(), 2), PDECAL_OK);
        // Centred stencils drop one frame at each end in time and one
        // cell at each side in space.
        assert_eq!(shape, [9, 63]);

        pdecal_field_free(residual);
        pdecal_program_free(program);
        pdecal_field_free(field);
    }
}

#[test]
fn error_paths_report_codes_and_messages() {
    unsafe {
        // Null out-pointer.
        assert_eq!(
            pdecal_field_load(c_path(Path::new("x")).as_ptr(), ptr::null_mut()),
            PDECAL_ERR_NULL_ARGUMENT
        );

        // Missing file surfaces as an I/O error with a usable message.
        let mut handle = ptr::null_mut();
        assert_eq!(
            pdecal_field_load(c_path(Path::new("/nonexistent/rollout.dump")).as_ptr(), &mut handle),
            PDECAL_ERR_IO
        );
        let msg = CStr::from_ptr(pdecal_last_error()).to_str().unwrap();
        assert!(!msg.is_empty());

        // Undersized buffers are rejected before any write.
        let dir = tempfile::tempdir().unwrap();
        let (_, rollouts) = advection_setup();
        let path = dir.path().join("rollout.dump");
        pdecal::dump::save_field(&path, &rollouts[0]).unwrap();
        let field = load(&path);
        let mut shape = [0usize; 1];
        assert_eq!(
            pdecal_field_shape(field, shape.as_mut_ptr(), 1),
            PDECAL_ERR_BUFFER_TOO_SMALL
        );
        let mut one = [0.0f64; 1];
        assert_eq!(
            pdecal_field_values(field, one.as_mut_ptr(), 1),
            PDECAL_ERR_BUFFER_TOO_SMALL
        );

        // Empty calibration set is refused.
        let mut program = ptr::null_mut();
        assert_eq!(pdecal_program_advection(field, 1.0, &mut program), PDECAL_OK);
        let mut calibration = ptr::null_mut();
        assert_eq!(
            pdecal_calibrate_marginal(program, ptr::null(), 0, 0.1, &mut calibration),
            PDECAL_ERR_NULL_ARGUMENT
        );

        // Freeing null handles is a no-op, as C callers expect.
        pdecal_field_free(ptr::null_mut());
        pdecal_program_free(ptr::null_mut());
        pdecal_calibration_free(ptr::null_mut());

        pdecal_program_free(program);
        pdecal_field_free(field);
    }
}
