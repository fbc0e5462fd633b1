use ebtd::analysis::{mc_risk_paired, LossConvention};
use ebtd::experiments::{gen_synthetic, GroundTruthModel, SyntheticSpec, WorkerSigmas};
use ebtd::pipeline::{eb_blue, PipelineSpec};
use ebtd::stats::MeanSe;
use ebtd::td::{blue_aggregate, run_td, TdAlgorithm};
use ebtd::{ObservationMatrix, VarianceVector};
use proptest::prelude::*;

fn unequal() -> VarianceVector {
    VarianceVector::new(vec![0.5, 1.0, 4.0, 9.0]).unwrap()
}

#[test]
fn blue_is_unbiased() {
    let spec = SyntheticSpec::new(
        GroundTruthModel::Fixed { values: vec![-1.0, 0.0, 3.5, 10.0] },
        WorkerSigmas::Explicit { variances: unequal() },
        4,
        4,
    );
    let mut errors = vec![Vec::new(); 4];
    for r in 0..20_000 {
        let syn = gen_synthetic(&spec.with_seed(r)).unwrap();
        let (ans, _) = blue_aggregate(&syn.dataset.matrix, &syn.variances).unwrap();
        for (j, (a, mu)) in ans.iter().zip(syn.dataset.truth().unwrap().iter()).enumerate() {
            errors[j].push(a - mu);
        }
    }
    for e in errors {
        let s = MeanSe::of(&e);
        assert!(s.mean.abs() < 4.0 * s.se, "{s:?}");
    }
}

#[test]
fn blue_has_lower_risk_than_other_unbiased_linear_rules() {
    let spec = SyntheticSpec::new(
        GroundTruthModel::Gaussian { mean: 0.0, variance: 4.0 },
        WorkerSigmas::Explicit { variances: unequal() },
        4,
        6,
    );
    let other = VarianceVector::new(vec![1.0, 0.5, 9.0, 4.0]).unwrap();
    let pipes = [
        PipelineSpec::base_only(TdAlgorithm::blue_oracle()),
        PipelineSpec::base_only(TdAlgorithm::mean()),
        PipelineSpec::base_only(TdAlgorithm::blue(other)),
    ];
    let p = mc_risk_paired(&spec, &pipes, 20_000, 3, LossConvention::SumSquared).unwrap();
    // analytic BLUE risk: m / sum(1/s_i)
    let expected = 6.0 * unequal().reduced();
    assert!((p.reports[0].mean_loss - expected).abs() < 3.0 * p.reports[0].std_error);
    for k in [1, 2] {
        let g = p.gap(0, k);
        assert!(g.mean < -3.0 * g.se, "rule {k}: {g:?}");
    }
}

#[test]
fn eb_blue_depends_only_on_the_blue_aggregate() {
    let v = unequal();
    let x = ObservationMatrix::from_rows(&[
        vec![1.0, 4.0, 2.0, 8.0, 5.0],
        vec![0.0, 3.0, 2.5, 7.0, 4.0],
        vec![2.0, 6.0, 1.0, 9.0, 6.0],
        vec![1.5, 2.0, 3.0, 6.0, 2.0],
    ])
    .unwrap();
    // move worker 1 by d and worker 2 by -d w1/w2: the weighted mean is unchanged
    let (w1, w2) = (1.0 / v[0], 1.0 / v[1]);
    let mut rows: Vec<Vec<f64>> = x.rows().map(<[f64]>::to_vec).collect();
    for (j, d) in [0.5, -1.25, 2.0, 0.0, 3.0].into_iter().enumerate() {
        rows[0][j] += d;
        rows[1][j] -= d * w1 / w2;
    }
    let y = ObservationMatrix::from_rows(&rows).unwrap();
    assert_ne!(x, y);
    let (a, _) = blue_aggregate(&x, &v).unwrap();
    let (b, _) = blue_aggregate(&y, &v).unwrap();
    for (p, q) in a.iter().zip(b.iter()) {
        assert!((p - q).abs() < 1e-12);
    }
    let (ea, eb) = (eb_blue(&x, &v).unwrap(), eb_blue(&y, &v).unwrap());
    for (p, q) in ea.iter().zip(eb.iter()) {
        assert!((p - q).abs() < 1e-11);
    }
}

fn matrix_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
    (2usize..6, 4usize..9).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(prop::collection::vec(-20.0f64..20.0, m), n),
            Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
        )
    })
}

proptest! {
    #[test]
    fn pipelines_ignore_worker_order((rows, perm) in matrix_strategy()) {
        let x = ObservationMatrix::from_rows(&rows).unwrap();
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let y = ObservationMatrix::from_rows(&shuffled).unwrap();
        for base in [TdAlgorithm::mean(), TdAlgorithm::median(), TdAlgorithm::crh(), TdAlgorithm::catd(), TdAlgorithm::distance_weighted()] {
            let a = run_td(&base, &x).unwrap();
            let b = run_td(&base, &y).unwrap();
            for (p, q) in a.iter().zip(b.iter()) {
                prop_assert!((p - q).abs() <= 1e-9 * (1.0 + p.abs()), "{}: {} vs {}", base.name(), p, q);
            }
            let spec = PipelineSpec::eb_wrap(base.clone(), ebtd::variance::VarianceEstimator::HeuristicAggregated);
            let a = spec.run(&x, None).unwrap();
            let b = spec.run(&y, None).unwrap();
            for (p, q) in a.iter().zip(b.iter()) {
                prop_assert!((p - q).abs() <= 1e-8 * (1.0 + p.abs()));
            }
        }
    }
}
