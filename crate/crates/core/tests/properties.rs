use jepa_score_core::eval::{histogram, pearson, rank_by_score};
use jepa_score_core::linalg::{singular_values, Matrix};
use jepa_score_core::score::ScoreReport;
use jepa_score_core::synthdata::{gmm_log_density, sample_generators, Component, Covariance, GeneratorSpec};
use proptest::prelude::*;

fn matrix(max: usize) -> impl Strategy<Value = Matrix> {
    (1..=max, 1..=max).prop_flat_map(|(r, c)| {
        prop::collection::vec(-10.0..10.0f64, r * c).prop_map(move |d| Matrix::new(r, c, d).unwrap())
    })
}

fn mixture(dim: usize) -> impl Strategy<Value = GeneratorSpec> {
    prop::collection::vec(
        (0.1..1.0f64, prop::collection::vec(-3.0..3.0f64, dim), 0.3..2.0f64),
        1..5,
    )
    .prop_map(|raw| {
        let total: f64 = raw.iter().map(|r| r.0).sum();
        let mut components: Vec<Component> = raw
            .into_iter()
            .map(|(w, mean, s)| Component {
                weight: w / total,
                mean,
                covariance: Covariance::Isotropic(s),
            })
            .collect();
        // exact unit sum
        let rest: f64 = components[1..].iter().map(|c| c.weight).sum();
        components[0].weight = 1.0 - rest;
        GeneratorSpec { components }
    })
}

fn scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, 2..60)
}

proptest! {
    #[test]
    fn singular_values_are_sorted_nonnegative_and_transpose_invariant(m in matrix(7)) {
        let s = singular_values(&m).unwrap();
        prop_assert_eq!(s.len(), m.rows().min(m.cols()));
        prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(s.iter().all(|v| *v >= 0.0));
        let t = singular_values(&m.transpose()).unwrap();
        for (a, b) in s.iter().zip(&t) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a));
        }
        let frob: f64 = s.iter().map(|v| v * v).sum();
        prop_assert!((frob - m.frobenius_norm().powi(2)).abs() <= 1e-9 * (1.0 + frob));
    }

    #[test]
    fn pearson_is_affine_invariant(
        pairs in prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 3..50),
        scale in 0.01..100.0f64,
        shift in -1e3..1e3f64,
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        prop_assume!(pearson(&a, &b).is_ok());
        let r = pearson(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&r));
        let moved: Vec<f64> = a.iter().map(|v| scale * v + shift).collect();
        prop_assert!((pearson(&moved, &b).unwrap() - r).abs() < 1e-12);
    }

    #[test]
    fn ranking_ignores_constant_shifts(s in scores(), shift in -1e3..1e3f64, k in 0usize..10) {
        let k = k.min(s.len());
        let a = ScoreReport::new(s.clone(), 1e-6);
        let b = ScoreReport::new(s.iter().map(|v| v + shift).collect(), 1e-6);
        let (lo, hi) = rank_by_score(&a, k).unwrap();
        prop_assert_eq!((lo.clone(), hi.clone()), rank_by_score(&b, k).unwrap());
        prop_assert!(lo.windows(2).all(|w| s[w[0]] <= s[w[1]]));
        prop_assert!(hi.windows(2).all(|w| s[w[0]] >= s[w[1]]));
    }

    #[test]
    fn histogram_conserves_counts(s in scores(), bins in 1usize..40) {
        let h = histogram(&ScoreReport::new(s.clone(), 1e-6), bins).unwrap();
        prop_assert_eq!(h.counts.iter().sum::<usize>(), s.len());
        prop_assert_eq!(h.edges.len(), bins + 1);
        prop_assert!(h.edges.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn mixture_density_is_permutation_invariant(spec in mixture(3), x in prop::collection::vec(-5.0..5.0f64, 3)) {
        let mut rev = spec.clone();
        rev.components.reverse();
        let a = gmm_log_density(&spec, &x).unwrap();
        let b = gmm_log_density(&rev, &x).unwrap();
        prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn mixture_density_is_translation_equivariant(
        spec in mixture(2),
        x in prop::collection::vec(-5.0..5.0f64, 2),
        shift in prop::collection::vec(-10.0..10.0f64, 2),
    ) {
        let mut moved = spec.clone();
        for c in &mut moved.components {
            c.mean.iter_mut().zip(&shift).for_each(|(m, s)| *m += s);
        }
        let y: Vec<f64> = x.iter().zip(&shift).map(|(a, s)| a + s).collect();
        let a = gmm_log_density(&spec, &x).unwrap();
        let b = gmm_log_density(&moved, &y).unwrap();
        prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn sampling_is_deterministic(spec in mixture(2), seed in any::<u64>()) {
        prop_assert_eq!(sample_generators(&spec, 20, seed).unwrap(), sample_generators(&spec, 20, seed).unwrap());
    }
}

#[test]
fn distinct_seeds_decorrelate() {
    let spec = GeneratorSpec {
        components: vec![Component {
            weight: 1.0,
            mean: vec![0.0],
            covariance: Covariance::Isotropic(1.0),
        }],
    };
    let a: Vec<f64> = sample_generators(&spec, 10_000, 1)
        .unwrap()
        .into_iter()
        .map(|x| x[0])
        .collect();
    let b: Vec<f64> = sample_generators(&spec, 10_000, 2)
        .unwrap()
        .into_iter()
        .map(|x| x[0])
        .collect();
    assert!(pearson(&a, &b).unwrap().abs() < 0.1);
}
