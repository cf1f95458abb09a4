use dgsp::filters::FilterTaps;
use dgsp::graph::{adjacency_shift, directed_cycle};
use dgsp::inverse::*;
use dgsp::sampling::SamplingSet;
use dgsp::synth::{diffusion_taps, directed_er, normal_mat, normal_vec, rng, sparse_signal};
use dgsp::{DMatrix, DVector};
use proptest::prelude::*;

/// Cyclic coordinate descent for `||b - A x||^2 + alpha sum w_i |x_i|`.
fn cd_lasso(a: &DMatrix<f64>, b: &DVector<f64>, alpha: f64, w: &[f64]) -> DVector<f64> {
    let n = a.ncols();
    let mut x: DVector<f64> = DVector::zeros(n);
    let mut r = b.clone();
    let col_sq: Vec<f64> = (0..n).map(|j| a.column(j).norm_squared()).collect();
    for _ in 0..200_000 {
        let mut delta: f64 = 0.0;
        for j in 0..n {
            if col_sq[j] == 0.0 {
                continue;
            }
            let rho = a.column(j).dot(&r) + col_sq[j] * x[j];
            let t = alpha * w[j] / 2.0;
            let new = if rho > t {
                (rho - t) / col_sq[j]
            } else if rho < -t {
                (rho + t) / col_sq[j]
            } else {
                0.0
            };
            let d = new - x[j];
            if d != 0.0 {
                r.axpy(-d, &a.column(j).into_owned(), 1.0);
                x[j] = new;
                delta = delta.max(d.abs());
            }
        }
        if delta < 1e-14 {
            break;
        }
    }
    x
}

fn objective(a: &DMatrix<f64>, b: &DVector<f64>, alpha: f64, w: &[f64], x: &DVector<f64>) -> f64 {
    (a * x - b).norm_squared() + alpha * x.iter().zip(w).map(|(v, wi)| wi * v.abs()).sum::<f64>()
}

fn diffusion_instance(seed: u64) -> (DMatrix<f64>, DVector<f64>, Vec<usize>) {
    let g = directed_er(10, 0.3, seed).unwrap();
    let s = adjacency_shift(&g);
    let taps = diffusion_taps(3, 0.5);
    let (x, sup) = sparse_signal(&mut rng(seed + 500), 10, 2);
    let h = taps.matrix(&s);
    let y = &h * &x;
    (h, y, sup)
}

#[test]
fn lasso_matches_coordinate_descent() {
    for seed in 0..10 {
        let (h, y, _) = diffusion_instance(seed);
        let alpha = 0.05 * 2.0 * (h.transpose() * &y).amax();
        let w = vec![1.0; 10];
        let ours = weighted_lasso(&h, &y, alpha, &w, &LassoOptions::default()).unwrap();
        let cd = cd_lasso(&h, &y, alpha, &w);
        let (f1, f2) = (ours.objective, objective(&h, &y, alpha, &w, &cd));
        assert!(
            (f1 - f2).abs() <= 1e-6 * f2.max(1.0),
            "seed {seed}: {f1} vs {f2}"
        );
        assert!(lasso_kkt_residual(&h, &y, alpha, &w, &ours.x) <= 1e-6);
    }
}

#[test]
fn lasso_trace_is_monotone() {
    let mut r = rng(4);
    let a = normal_mat(&mut r, 12, 20);
    let b = normal_vec(&mut r, 12);
    let res = weighted_lasso(&a, &b, 0.3, &[1.0; 20], &LassoOptions::default()).unwrap();
    for w in res.trace.windows(2) {
        assert!(w[1] <= w[0]);
    }
    assert!(lasso_kkt_residual(&a, &b, 0.3, &[1.0; 20], &res.x) <= 1e-6);
}

#[test]
fn small_alpha_recovers_two_sparse_support() {
    let mut hits = 0;
    for seed in 0..20 {
        let (h, y, sup) = diffusion_instance(seed);
        let amax = 2.0 * (h.transpose() * &y).amax();
        let found = [1e-4, 1e-3, 1e-2, 0.05].iter().any(|c| {
            let x = weighted_lasso(&h, &y, c * amax, &[1.0; 10], &LassoOptions::default())
                .unwrap()
                .x;
            support_of(&x, 1e-2) == sup
        });
        hits += found as usize;
    }
    assert!(hits >= 19, "{hits}/20");
}

#[test]
fn sampled_deconvolution_uses_observed_rows() {
    let s = adjacency_shift(&directed_cycle(8).unwrap());
    let taps = FilterTaps::new(vec![1.0, 0.5]).unwrap();
    let ms = SamplingSet::new(vec![0, 2, 3, 5, 6, 7], 8).unwrap();
    let mut x = DVector::zeros(8);
    x[2] = 1.0;
    let y = taps.matrix(&s) * &x;
    let p = DeconProblem {
        s,
        taps,
        ms: Some(ms.clone()),
        ybar: y.select_rows(ms.indices()),
        alpha: 1e-6,
    };
    let res = deconvolve_sparse(&p, &LassoOptions::default()).unwrap();
    assert_eq!(support_of(&res.x, 0.1), vec![2]);
}

#[test]
fn system_identification_roundtrip() {
    let g = directed_er(10, 0.3, 3).unwrap();
    let s = adjacency_shift(&g);
    let h = DVector::from_vec(vec![1.0, -0.4, 0.25]);
    let inputs = normal_mat(&mut rng(5), 10, 3);
    let taps = FilterTaps::new(h.iter().copied().collect()).unwrap();
    let outputs = taps.matrix(&s) * &inputs;
    let res = identify_system(
        &s,
        &inputs,
        &outputs,
        None,
        3,
        &[1.0, 2.0, 4.0],
        1e-10,
        &LassoOptions::default(),
    )
    .unwrap();
    assert!((res.x - h).norm() <= 1e-6);
}

#[test]
fn system_identification_role_swap() {
    // With unit weights the tap problem is a plain lasso on the design matrix,
    // so the generic solver on that matrix must reach the same objective.
    let s = adjacency_shift(&directed_er(8, 0.4, 9).unwrap());
    let inputs = normal_mat(&mut rng(1), 8, 2);
    let outputs = normal_mat(&mut rng(2), 8, 2);
    let alpha = 0.7;
    let res = identify_system(
        &s,
        &inputs,
        &outputs,
        None,
        4,
        &[1.0; 4],
        alpha,
        &LassoOptions::default(),
    )
    .unwrap();
    let d = system_design_matrix(&s, &inputs, None, 4).unwrap();
    let y = DVector::from_iterator(16, outputs.iter().copied());
    let generic = weighted_lasso(&d, &y, alpha, &[1.0; 4], &LassoOptions::default()).unwrap();
    assert!((res.objective - generic.objective).abs() <= 1e-8 * generic.objective.max(1.0));
    let cd = cd_lasso(&d, &y, alpha, &[1.0; 4]);
    let f_cd = objective(&d, &y, alpha, &[1.0; 4], &cd);
    assert!((res.objective - f_cd).abs() <= 1e-8 * f_cd.max(1.0));
}

#[test]
fn lifted_adjoint_identity() {
    let mut r = rng(17);
    for seed in 0..10 {
        let s = adjacency_shift(&directed_er(9, 0.3, seed).unwrap());
        let ms = SamplingSet::new(vec![0, 3, 4, 8], 9).unwrap();
        for sampled in [None, Some(&ms)] {
            let op = LiftedOperator::new(&s, 3, sampled).unwrap();
            let z = normal_mat(&mut r, 9, 3);
            let y = normal_vec(&mut r, op.matrix().nrows());
            let lhs = op.apply(&z).dot(&y);
            let rhs = z.dot(&op.adjoint(&y));
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        }
    }
}

#[test]
fn lifted_operator_of_rank_one_is_filter_output() {
    let s = adjacency_shift(&directed_er(7, 0.4, 2).unwrap());
    let x = normal_vec(&mut rng(1), 7);
    let h = vec![0.3, -1.0, 0.5];
    let op = LiftedOperator::new(&s, 3, None).unwrap();
    let y = op.apply(&(&x * DVector::from_vec(h.clone()).transpose()));
    let want = FilterTaps::new(h).unwrap().matrix(&s) * &x;
    assert!((y - &want).norm() <= 1e-12 * want.norm());
}

#[test]
fn blind_null_thresholds_give_zero() {
    let s = adjacency_shift(&directed_cycle(10).unwrap());
    let op = LiftedOperator::new(&s, 3, None).unwrap();
    let y = normal_vec(&mut rng(3), 10);
    let (t1, t2) = blind_null_thresholds(&op, &y);
    let opts = BlindOptions::default();
    for (a1, a2) in [(t1, 0.0), (0.0, t2), (1.01 * t1, 0.5 * t2)] {
        let r = blind_deconvolve(&s, &y, 3, None, a1, a2, &opts).unwrap();
        assert_eq!(r.z, DMatrix::zeros(10, 3));
    }
    // a single active penalty just below its threshold leaves Z nonzero
    for (a1, a2) in [(0.9 * t1, 0.0), (0.0, 0.9 * t2)] {
        let r = blind_deconvolve(&s, &y, 3, None, a1, a2, &opts).unwrap();
        assert!(r.z.norm() > 0.0);
    }
}

#[test]
fn blind_recovers_separated_support_on_cycle() {
    let s = adjacency_shift(&directed_cycle(16).unwrap());
    let mut x = DVector::zeros(16);
    x[2] = 1.0;
    x[9] = -0.8;
    let h = DVector::from_vec(vec![1.0, 0.6, -0.3]);
    let op = LiftedOperator::new(&s, 3, None).unwrap();
    let z = &x * h.transpose();
    let y = op.apply(&z);
    let (_, t2) = blind_null_thresholds(&op, &y);
    let r = blind_deconvolve(&s, &y, 3, None, 0.0, 0.02 * t2, &BlindOptions::default()).unwrap();
    let zh = &r.x * r.h.transpose();
    assert!((zh - &z).norm() <= 1e-2 * z.norm());
    assert_eq!(r.refit_rows, Some(vec![2, 9]));
    let imax = r.h.iamax();
    assert!(r.h[imax] > 0.0);
    for w in r.trace.windows(2) {
        assert!(w[1] <= w[0]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lasso_kkt_holds(rows in 3usize..10, cols in 2usize..12, seed in 0u64..500, alpha in 0.01f64..2.0) {
        let mut r = rng(seed);
        let a = normal_mat(&mut r, rows, cols);
        let b = normal_vec(&mut r, rows);
        let w = vec![1.0; cols];
        let res = weighted_lasso(&a, &b, alpha, &w, &LassoOptions::default()).unwrap();
        prop_assert!(lasso_kkt_residual(&a, &b, alpha, &w, &res.x) <= 1e-6);
    }

    #[test]
    fn lasso_null_threshold(rows in 2usize..8, cols in 2usize..8, seed in 0u64..500, c in 1.0f64..3.0) {
        let mut r = rng(seed);
        let a = normal_mat(&mut r, rows, cols);
        let b = normal_vec(&mut r, rows);
        let alpha = c * 2.0 * (a.transpose() * &b).amax();
        let res = weighted_lasso(&a, &b, alpha, &vec![1.0; cols], &LassoOptions::default()).unwrap();
        prop_assert!(res.x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rank_one_factors_reproduce_rank_one(n in 2usize..12, l in 1usize..5, seed in 0u64..500) {
        let mut r = rng(seed);
        let x = normal_vec(&mut r, n);
        let h = normal_vec(&mut r, l);
        let z = &x * h.transpose();
        let (xe, he) = rank_one_factors(&z);
        prop_assert!((&xe * he.transpose() - &z).norm() <= 1e-10 * z.norm().max(1.0));
        prop_assert!(he[he.iamax()] >= 0.0);
    }
}
