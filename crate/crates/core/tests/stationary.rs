use dgsp::filters::FilterTaps;
use dgsp::graph::{adjacency_shift, Digraph};
use dgsp::stationary::*;
use dgsp::synth::{directed_er, normal_vec, rng, weighted_er};
use dgsp::{DMatrix, ShiftOperator};
use proptest::prelude::*;

fn er_model(seed: u64, h: Vec<f64>) -> StationaryModel {
    let s = adjacency_shift(&directed_er(10, 0.3, seed).unwrap());
    StationaryModel::new(s, FilterTaps::new(h).unwrap(), InputLaw::Gaussian).unwrap()
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn sample_covariance_converges() {
    let m = er_model(1, vec![1.0, 0.5]);
    let c = model_covariance(&m).unwrap().c;
    let x = generate(&m, 100_000, 7).unwrap();
    assert!(rel(&estimate_covariance(&x, false).c, &c) <= 0.05);
}

#[test]
fn more_samples_help() {
    let mut better = 0;
    for seed in 0..20 {
        let m = er_model(seed, vec![1.0, 0.5]);
        let c = model_covariance(&m).unwrap().c;
        let small = rel(
            &estimate_covariance(&generate(&m, 1_000, seed).unwrap(), false).c,
            &c,
        );
        let big = rel(
            &estimate_covariance(&generate(&m, 100_000, seed + 100).unwrap(), false).c,
            &c,
        );
        better += (big < small) as usize;
    }
    assert!(better >= 19, "{better}/20");
}

#[test]
fn symmetric_shift_covariance_shares_eigenvectors() {
    let s = adjacency_shift(&weighted_er(7, 0.5, (0.2, 1.0), 3).unwrap().symmetrized());
    let m = StationaryModel::new(
        s.clone(),
        FilterTaps::new(vec![0.5, 1.0, -0.3]).unwrap(),
        InputLaw::Gaussian,
    )
    .unwrap();
    let c = model_covariance(&m).unwrap().c;
    let v = s.to_dense().symmetric_eigen().eigenvectors;
    let d = v.transpose() * c * &v;
    let off = d.norm_squared() - d.diagonal().norm_squared();
    assert!(off.sqrt() <= 1e-10 * d.norm());
}

#[test]
fn non_normal_chain_covariance_has_other_eigenvectors() {
    // 3-node chain with a back edge of different weight keeps S diagonalizable
    let g = Digraph::new(
        3,
        vec![
            dgsp::Edge {
                src: 0,
                dst: 1,
                weight: 1.0,
            },
            dgsp::Edge {
                src: 1,
                dst: 2,
                weight: 1.0,
            },
            dgsp::Edge {
                src: 2,
                dst: 0,
                weight: 0.3,
            },
        ],
    )
    .unwrap();
    let s = adjacency_shift(&g);
    let m = StationaryModel::new(
        s.clone(),
        FilterTaps::new(vec![1.0, 0.8]).unwrap(),
        InputLaw::Gaussian,
    )
    .unwrap();
    let c = model_covariance(&m).unwrap().c;
    let basis = dgsp::spectral::eigen_gft_basis(&s).unwrap();
    let cv = c.symmetric_eigen().eigenvectors;
    // smallest principal angle between each eigenvector of S and each of C
    let mut min_angle = f64::INFINITY;
    for k in 0..3 {
        let v = basis.v.column(k);
        let vn = v.norm();
        for j in 0..3 {
            let w = dgsp::linalg::to_complex_vec(&cv.column(j).into_owned());
            let cos = (w.adjoint() * v)[(0, 0)].norm() / vn;
            min_angle = min_angle.min(cos.min(1.0).acos());
        }
    }
    assert!(min_angle > 1e-3, "{min_angle}");
}

#[test]
fn tap_fit_roundtrip_on_identifiable_instances() {
    let mut fitted = 0;
    for seed in 0..10 {
        let h = vec![1.0, 0.5, -0.25];
        let m = er_model(seed, h.clone());
        let c = model_covariance(&m).unwrap().c;
        let r = fit_taps_from_covariance(
            &c,
            &m.s,
            3,
            &FitOptions {
                seed,
                ..Default::default()
            },
        )
        .unwrap();
        if r.residual <= 1e-8 * c.norm_squared() {
            fitted += 1;
            let err =
                r.h.iter()
                    .zip(&h)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
            assert!(err <= 1e-4, "seed {seed}: {:?}", r.h);
        }
        for w in r.trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }
    assert!(fitted >= 8, "only {fitted} fits reached the residual floor");
}

#[test]
fn gradient_matches_finite_differences() {
    let mut r = rng(5);
    for seed in 0..10 {
        let s = adjacency_shift(&directed_er(6, 0.4, seed).unwrap());
        let a = dgsp::synth::normal_mat(&mut r, 6, 6);
        let c = &a * a.transpose();
        let h: Vec<f64> = normal_vec(&mut r, 3).iter().copied().collect();
        let g = fit_gradient(&c, &s, &h);
        for l in 0..3 {
            let step = 1e-6;
            let mut hp = h.clone();
            let mut hm = h.clone();
            hp[l] += step;
            hm[l] -= step;
            let fd = (fit_objective(&c, &s, &hp) - fit_objective(&c, &s, &hm)) / (2.0 * step);
            assert!(
                (fd - g[l]).abs() <= 1e-5 * g[l].abs().max(1.0),
                "{fd} vs {}",
                g[l]
            );
        }
    }
}

#[test]
fn size_cap_is_enforced() {
    let s = ShiftOperator::zeros(COVARIANCE_CAP + 1);
    let m =
        StationaryModel::new(s, FilterTaps::new(vec![1.0]).unwrap(), InputLaw::Gaussian).unwrap();
    assert!(matches!(
        model_covariance(&m),
        Err(dgsp::GspError::SizeCap { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn model_covariance_is_symmetric_psd(n in 2usize..9, seed in 0u64..300, l in 1usize..4) {
        let s = adjacency_shift(&directed_er(n, 0.4, seed).unwrap());
        let h: Vec<f64> = normal_vec(&mut rng(seed), l.min(n)).iter().copied().collect();
        let m = StationaryModel::new(s, FilterTaps::new(h).unwrap(), InputLaw::Gaussian).unwrap();
        let c = model_covariance(&m).unwrap().c;
        prop_assert!((&c - c.transpose()).amax() <= 1e-12 * c.amax().max(1.0));
        prop_assert!(c.clone().symmetric_eigen().eigenvalues.min() >= -1e-10 * c.amax().max(1.0));
    }

    #[test]
    fn estimate_is_symmetric_psd(n in 1usize..6, r in 1usize..20, seed in 0u64..300) {
        let x = dgsp::synth::normal_mat(&mut rng(seed), n, r);
        let c = estimate_covariance(&x, seed % 2 == 0).c;
        prop_assert!((&c - c.transpose()).amax() == 0.0);
        prop_assert!(c.clone().symmetric_eigen().eigenvalues.min() >= -1e-10 * c.amax().max(1.0));
    }

    #[test]
    fn objective_sign_ambiguity(seed in 0u64..300) {
        let s = adjacency_shift(&directed_er(5, 0.4, seed).unwrap());
        let c = DMatrix::identity(5, 5);
        let h: Vec<f64> = normal_vec(&mut rng(seed), 3).iter().copied().collect();
        let neg: Vec<f64> = h.iter().map(|v| -v).collect();
        prop_assert_eq!(fit_objective(&c, &s, &h), fit_objective(&c, &s, &neg));
    }
}
