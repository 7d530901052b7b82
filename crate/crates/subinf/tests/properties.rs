//! Property tests for the structural invariants: bracket antisymmetry,
//! projector algebra, horizontal-norm identity, and rescaling of admissible
//! curves.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use subinf::calculus::{self, Jet2};
use subinf::ccgeometry::{curve_time_rescale, is_admissible, AdmissibleCurve};
use subinf::frames;
use subinf::operators;

fn coord() -> impl Strategy<Value = f64> {
    -2.0..2.0f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bracket_antisymmetry(x in coord(), y in coord(), t in coord()) {
        for frame in [frames::heisenberg()] {
            let p = [x, y, t];
            for i in 1..=frame.size() {
                for j in 1..=frame.size() {
                    let bij = frame.lie_bracket(i, j, &p).unwrap().vector;
                    let bji = frame.lie_bracket(j, i, &p).unwrap().vector;
                    prop_assert!((bij + bji).norm() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn projector_algebra_holds_for_arbitrary_gradients(
        entries in proptest::collection::vec(-3.0..3.0f64, 6),
        n_comp in 1..4usize,
    ) {
        let m = 6 / n_comp.max(1);
        let m = m.clamp(1, 3);
        let mat = DMatrix::from_fn(n_comp, m, |r, c| entries[(r * m + c) % entries.len()]);
        let jet = Jet2::new(
            DVector::zeros(n_comp),
            mat,
            vec![DMatrix::zeros(m, m); n_comp],
        )
        .unwrap();
        let h = calculus::horizontal_gradient(&jet, &DMatrix::identity(m, m)).unwrap();
        let p = operators::projectors(&h, 1e-8).unwrap();
        let id = DMatrix::identity(n_comp, n_comp);
        prop_assert!((&p.top + &p.bot - &id).abs().max() < 1e-10);
        prop_assert!((&p.top * &p.top - &p.top).abs().max() < 1e-10);
        prop_assert!((&p.top - p.top.transpose()).abs().max() < 1e-10);
        // bot annihilates Xu up to the rank cutoff scale
        let smax = h.singular_values.max();
        prop_assert!((&p.bot * &h.mat).abs().max() <= 2e-8 * smax + 1e-12);
    }

    #[test]
    fn horizontal_norm_is_frobenius_norm(
        entries in proptest::collection::vec(-2.0..2.0f64, 6),
        fentries in proptest::collection::vec(-1.0..1.0f64, 6),
    ) {
        let egrad = DMatrix::from_fn(2, 3, |r, c| entries[r * 3 + c]);
        let fmat = DMatrix::from_fn(2, 3, |r, c| fentries[r * 3 + c]);
        let jet = Jet2::new(
            DVector::zeros(2),
            egrad.clone(),
            vec![DMatrix::zeros(3, 3); 2],
        )
        .unwrap();
        let h = calculus::horizontal_gradient(&jet, &fmat).unwrap();
        let explicit: f64 = (&egrad * fmat.transpose()).iter().map(|v| v * v).sum();
        prop_assert!((h.normsq - explicit).abs() <= 1e-12 * (1.0 + explicit));
        prop_assert!(h.rank <= 2);
    }

    #[test]
    fn rescaled_curves_stay_admissible(speed in 0.05..1.0f64, steps in 4..20usize) {
        // straight horizontal segment on the Heisenberg group
        let dt = 0.05;
        let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
        let points: Vec<Vec<f64>> = times.iter().map(|&t| vec![t, 0.0, 0.0]).collect();
        let controls: Vec<Vec<f64>> = (0..=steps).map(|_| vec![1.0, 0.0]).collect();
        let curve = AdmissibleCurve::new(times, points, controls).unwrap();

        let frame = frames::heisenberg();
        let rescaled = curve_time_rescale(&curve, speed).unwrap();
        prop_assert!((rescaled.total_time() - curve.total_time() / speed).abs() < 1e-9);
        let report = is_admissible(&rescaled, &frame, 1e-6).unwrap();
        prop_assert!(report.admissible, "{report:?}");
    }
}
