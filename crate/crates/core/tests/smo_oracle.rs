mod common;

use oneclass_core::data::{LabelState, Matrix};
use oneclass_core::svm::{fit_bsvm, fit_ocsvm, SvmOptions};
use proptest::prelude::*;

use common::{dataset, dual_objective, qp_reference, signed_gram};

fn points(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 2), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn biased_svm_matches_reference(
        pos in points(1..6),
        neg in points(1..6),
        c_plus in 0.05..20.0f64,
        c_minus in 0.05..20.0f64,
        gamma in 0.05..3.0f64,
    ) {
        let fit = fit_bsvm(
            &dataset(&pos, LabelState::positive()),
            &dataset(&neg, LabelState::background()),
            c_plus, c_minus, gamma, &SvmOptions::default(),
        ).unwrap();
        let y: Vec<f64> = pos.iter().map(|_| 1.0).chain(neg.iter().map(|_| -1.0)).collect();
        let upper: Vec<f64> = y.iter().map(|v| if *v > 0.0 { c_plus } else { c_minus }).collect();
        let rows = [pos, neg].concat();
        let q = signed_gram(&rows, &y, gamma);
        let p = vec![-1.0; y.len()];
        let (_, reference) = qp_reference(&q, &p, &y, &upper, 0.0);
        let got = dual_objective(&q, &p, &fit.alpha);
        prop_assert!((got - reference).abs() <= 1e-4 * reference.abs().max(1e-9), "{} vs {}", got, reference);
        let s: f64 = fit.alpha.iter().zip(&y).map(|(a, t)| a * t).sum();
        prop_assert!(s.abs() < 1e-9);
        prop_assert!(fit.alpha.iter().zip(&upper).all(|(a, u)| *a >= 0.0 && *a <= *u));
        prop_assert!(fit.kkt_residual(&Matrix::from_rows(&rows)).unwrap() <= 1e-3);
    }

    #[test]
    fn one_class_matches_reference(rows in points(2..12), nu in 0.05..0.95f64, gamma in 0.05..3.0f64) {
        let fit = fit_ocsvm(&dataset(&rows, LabelState::positive()), nu, gamma, &SvmOptions::default()).unwrap();
        let n = rows.len();
        let y = vec![1.0; n];
        let q = signed_gram(&rows, &y, gamma);
        let p = vec![0.0; n];
        let (_, reference) = qp_reference(&q, &p, &y, &vec![1.0 / (nu * n as f64); n], 1.0);
        let got = dual_objective(&q, &p, &fit.alpha);
        prop_assert!((got - reference).abs() <= 1e-4 * reference.abs(), "{} vs {}", got, reference);
        prop_assert!((fit.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
