//! Property-based invariants: sampling stratification, quantile
//! equivariances, kernel linearity, dump round trips, and an exact
//! rational-arithmetic oracle for the stencil weights.

use ndarray::{ArrayD, IxDyn};
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

use pdecal::conformal::{conformal_quantile, ConformalQuantile};
use pdecal::grid::{AxisKind, FieldTensor, Grid};
use pdecal::sampling::{latin_hypercube_sample, ParamBox, ParamRange};
use pdecal::stencil::{central_difference_weights, ApplyMode, Kernel};

proptest! {
    // Latin hypercube: every parameter's n samples land in the n equal
    // strata of its range, one per stratum.
    #[test]
    fn latin_hypercube_stratifies_every_axis(
        seed in any::<u64>(),
        n in 1usize..40,
        lower in -100.0f64..100.0,
        span in 0.1f64..50.0,
    ) {
        let pbox = ParamBox {
            ranges: vec![
                ParamRange { name: "a".into(), lower, upper: lower + span },
                ParamRange { name: "b".into(), lower: 0.0, upper: 1.0 },
            ],
            sample_count: n,
            seed,
        };
        let samples = latin_hypercube_sample(&pbox).unwrap();
        prop_assert_eq!(samples.len(), n);
        for (d, range) in pbox.ranges.iter().enumerate() {
            let mut hit = vec![false; n];
            for s in &samples {
                let u = (s[d] - range.lower) / (range.upper - range.lower);
                prop_assert!((0.0..=1.0).contains(&u));
                let stratum = ((u * n as f64) as usize).min(n - 1);
                prop_assert!(!hit[stratum], "stratum {} hit twice on axis {}", stratum, d);
                hit[stratum] = true;
            }
        }
    }

    // The conformal quantile is an order statistic: permutation-invariant
    // and equivariant under positive scaling.
    #[test]
    fn quantile_permutation_and_scaling(
        mut values in proptest::collection::vec(0.0f64..1e6, 2..60),
        alpha in 0.01f64..0.99,
        scale in 0.001f64..1000.0,
        rot in 0usize..59,
    ) {
        let q = conformal_quantile(&values, alpha).unwrap();
        let shift = rot % values.len();
        values.rotate_left(shift);
        let q_perm = conformal_quantile(&values, alpha).unwrap();
        prop_assert_eq!(&q, &q_perm);

        let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
        let q_scaled = conformal_quantile(&scaled, alpha).unwrap();
        match (q, q_scaled) {
            (ConformalQuantile::Finite(a), ConformalQuantile::Finite(b)) => {
                prop_assert!((b - a * scale).abs() <= 1e-9 * b.abs().max(1.0));
            }
            (ConformalQuantile::Infinite, ConformalQuantile::Infinite) => {}
            other => prop_assert!(false, "finiteness changed under scaling: {:?}", other),
        }
    }

    // The quantile is exactly the ceil((n+1)(1-alpha))-th smallest value,
    // with the infinite sentinel when that rank exceeds n.
    #[test]
    fn quantile_is_the_conformal_order_statistic(
        values in proptest::collection::vec(0.0f64..1e3, 1..50),
        alpha in 0.01f64..0.99,
    ) {
        let n = values.len();
        let rank = ((n as f64 + 1.0) * (1.0 - alpha)).ceil() as usize;
        let q = conformal_quantile(&values, alpha).unwrap();
        if rank > n {
            prop_assert_eq!(q, ConformalQuantile::Infinite);
        } else {
            let mut sorted = values.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            prop_assert_eq!(q, ConformalQuantile::Finite(sorted[rank - 1]));
        }
    }

    // Kernel application is linear in the field.
    #[test]
    fn kernel_application_is_linear(
        seed in any::<u64>(),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        m in 1usize..=2,
        p in prop_oneof![Just(2usize), Just(4usize)],
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let grid = Grid::space_1d(0.0, 1.0, 24).unwrap();
        let mut random_field = || {
            let v = ArrayD::from_shape_simple_fn(IxDyn(&grid.shape()), || rng.gen_range(-1.0..1.0));
            FieldTensor::new(grid.clone(), v).unwrap()
        };
        let f = random_field();
        let g = random_field();
        let k = Kernel::derivative(&grid, AxisKind::SpaceX, m, p).unwrap();

        let combined = k
            .apply(&f.scale(a).add(&g.scale(b)).unwrap(), ApplyMode::Periodic)
            .unwrap();
        let separate = k
            .apply(&f, ApplyMode::Periodic)
            .unwrap()
            .scale(a)
            .add(&k.apply(&g, ApplyMode::Periodic).unwrap().scale(b))
            .unwrap();
        let denom = combined.max_abs().max(separate.max_abs()).max(1e-30);
        prop_assert!(combined.sub(&separate).unwrap().max_abs() / denom <= 1e-12);
    }

    // The text dump format round-trips fields exactly (17 significant
    // digits pin down every f64 bit pattern).
    #[test]
    fn field_dump_round_trip_is_exact(
        seed in any::<u64>(),
        nx in 3usize..20,
        nt in 3usize..8,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let grid = Grid::space_1d(-1.0, 1.0, nx)
            .unwrap()
            .with_time(0.0, 0.5, nt)
            .unwrap();
        let values =
            ArrayD::from_shape_simple_fn(IxDyn(&grid.shape()), || rng.gen_range(-1e6..1e6));
        let field = FieldTensor::new(grid, values).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.dump");
        pdecal::dump::save_field(&path, &field).unwrap();
        let back = pdecal::dump::load_field(&path).unwrap();
        prop_assert_eq!(back.grid(), field.grid());
        for (x, y) in back.values().iter().zip(field.values()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }

        let batch = vec![field.clone(), field.scale(-0.5), FieldTensor::zeros(field.grid().clone())];
        let bpath = dir.path().join("b.dump");
        pdecal::dump::save_batch(&bpath, &batch).unwrap();
        let bback = pdecal::dump::load_batch(&bpath).unwrap();
        prop_assert_eq!(bback.len(), batch.len());
        for (fa, fb) in bback.iter().zip(&batch) {
            for (x, y) in fa.values().iter().zip(fb.values()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}

// ---------------------------------------------------------------------
// Exact-arithmetic oracle: re-derive the central-difference weights over
// the rationals and compare with the f64 solver.

fn big(i: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(i))
}

/// Solve sum_j c_j off_j^k = m! [k == m] exactly by Gaussian elimination
/// over BigRational.
fn rational_weights(offsets: &[i64], m: usize) -> Vec<BigRational> {
    let n = offsets.len();
    let mut a: Vec<Vec<BigRational>> = (0..n)
        .map(|k| {
            let mut row: Vec<BigRational> = offsets
                .iter()
                .map(|&o| {
                    let mut acc = big(1);
                    for _ in 0..k {
                        acc *= big(o);
                    }
                    acc
                })
                .collect();
            row.push(if k == m {
                big((1..=m as i64).product::<i64>().max(1))
            } else {
                big(0)
            });
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .find(|&r| a[r][col] != big(0))
            .expect("nonsingular Vandermonde system");
        a.swap(col, pivot);
        for row in col + 1..n {
            let f = &a[row][col] / &a[col][col];
            for k in col..=n {
                let sub = &f * &a[col][k];
                a[row][k] -= sub;
            }
        }
    }
    let mut x = vec![big(0); n];
    for col in (0..n).rev() {
        let mut s = a[col][n].clone();
        for k in col + 1..n {
            s -= &a[col][k] * &x[k];
        }
        x[col] = s / &a[col][col];
    }
    x
}

#[test]
fn float_weights_match_the_rational_oracle() {
    for m in 1..=4usize {
        for p in [2usize, 4, 6] {
            let w = central_difference_weights(m, p).unwrap();
            let exact = rational_weights(&w.offsets, m);
            for (c, e) in w.coefficients.iter().zip(&exact) {
                let ef = rational_to_f64(e);
                assert!(
                    (c - ef).abs() <= 1e-12 * ef.abs().max(1.0),
                    "m={m} p={p}: {c} vs exact {ef}"
                );
            }
            // exact weights annihilate all lower monomial moments
            for k in 0..w.offsets.len() {
                let moment: BigRational = w
                    .offsets
                    .iter()
                    .zip(&exact)
                    .map(|(&o, c)| {
                        let mut pow = big(1);
                        for _ in 0..k {
                            pow *= big(o);
                        }
                        c * pow
                    })
                    .sum();
                let expect = if k == m {
                    big((1..=m as i64).product::<i64>().max(1))
                } else {
                    big(0)
                };
                assert_eq!(moment, expect, "m={m} p={p} moment {k}");
            }
        }
    }
}

fn rational_to_f64(r: &BigRational) -> f64 {
    // numer/denom stay small enough for (m,p) up to (4,6) to convert via
    // i128 without loss
    let numer: i128 = r.numer().try_into().unwrap();
    let denom: i128 = r.denom().try_into().unwrap();
    numer as f64 / denom as f64
}

// The classic 1/12 fourth-order second-derivative row, pinned exactly.
#[test]
fn fourth_order_second_derivative_is_the_textbook_row() {
    let w = central_difference_weights(2, 4).unwrap();
    let exact = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
    assert_eq!(w.offsets, vec![-2, -1, 0, 1, 2]);
    for (c, e) in w.coefficients.iter().zip(exact) {
        assert!((c - e).abs() < 1e-13);
    }
}
