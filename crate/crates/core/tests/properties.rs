use proptest::prelude::*;
use rug::Float;

use specpred::asymptotics::weak_variation;
use specpred::integrate::geometric_mean;
use specpred::predict::{prediction_errors, PredictConfig, PredictionErrorSeries};
use specpred::spectra::{PollaczekParams, SpectralDensity, TrigPolynomial};

const N: usize = 12;

fn series(f: &SpectralDensity, n: usize) -> PredictionErrorSeries {
    prediction_errors(f, n, PredictConfig::default()).unwrap()
}

fn rel(a: &Float, b: &Float) -> f64 {
    let d = Float::with_val(a.prec().max(b.prec()), a - b);
    Float::with_val(64, d / b).abs().to_f64()
}

/// Index-driven corpus so that proptest can shrink over it.
fn corpus(i: usize, p: f64) -> SpectralDensity {
    match i % 6 {
        0 => SpectralDensity::white_noise(),
        1 => SpectralDensity::ma1(p - 0.5).unwrap(),
        2 => SpectralDensity::ar1(0.9 * (2.0 * p - 1.0)).unwrap(),
        3 => SpectralDensity::pollaczek(PollaczekParams::new(0.25 + 2.0 * p).unwrap()),
        4 => SpectralDensity::abs_sin(3.0 * p, 0.5 + p).unwrap(),
        _ => SpectralDensity::companion_hat(0.5 + p).unwrap(),
    }
}

/// Corpus indices with `G > 0`.
const NONDETERMINISTIC: [usize; 4] = [0, 1, 2, 4];

fn bump() -> SpectralDensity {
    // 1.25 + 0.25cos 2λ ≥ 1
    SpectralDensity::trig_power(
        TrigPolynomial::new(vec![1.25, 0.0, 0.25], vec![]).unwrap(),
        1.0,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn scaling(i in 0usize..6, p in 0.05f64..0.95, c in 0.01f64..100.0) {
        let f = corpus(i, p);
        let base = series(&f, N);
        let scaled = series(&SpectralDensity::scale(&f, c).unwrap(), N);
        let cf = Float::with_val(256, c);
        for n in 1..=N {
            let want = Float::with_val(256, base.at(n) * &cf);
            prop_assert!(rel(scaled.at(n), &want) < 1e-25);
        }
    }

    #[test]
    fn shift_invariance(i in 0usize..6, p in 0.05f64..0.95, l0 in -3.0f64..3.0) {
        let f = corpus(i, p);
        let base = series(&f, N);
        let moved = series(&SpectralDensity::shift(&f, l0).unwrap(), N);
        for n in 1..=N {
            prop_assert!(rel(moved.at(n), base.at(n)) < 1e-20, "n={} {} vs {}", n, moved.at(n), base.at(n));
        }
    }

    #[test]
    fn monotone_in_density(i in 0usize..6, p in 0.05f64..0.95) {
        let f = corpus(i, p);
        let g = SpectralDensity::product(&f, &bump()).unwrap();
        let (a, b) = (series(&f, N), series(&g, N));
        for n in 1..=N {
            prop_assert!(a.at(n) <= b.at(n));
        }
    }

    #[test]
    fn nonincreasing_in_n(i in 0usize..6, p in 0.05f64..0.95) {
        let s = series(&corpus(i, p), 2 * N);
        prop_assert!(s.r0() >= s.at(1));
        for n in 1..2 * N {
            prop_assert!(s.at(n + 1) <= s.at(n));
        }
    }

    #[test]
    fn geometric_mean_rules(i in 0usize..4, j in 0usize..4, p in 0.05f64..0.95, q in 0.05f64..0.95, alpha in -2.0f64..3.0) {
        let (f, g) = (corpus(NONDETERMINISTIC[i], p), corpus(NONDETERMINISTIC[j], q));
        let gf = geometric_mean(&f, 128).unwrap().value_f64();
        let gg = geometric_mean(&g, 128).unwrap().value_f64();
        let gfg = geometric_mean(&SpectralDensity::product(&f, &g).unwrap(), 128).unwrap().value_f64();
        prop_assert!((gfg / (gf * gg) - 1.0).abs() < 1e-12, "{} vs {}", gfg, gf * gg);
        let gp = geometric_mean(&SpectralDensity::power(&f, alpha).unwrap(), 128).unwrap().value_f64();
        prop_assert!((gp / gf.powf(alpha) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn weak_variation_survives_products_and_powers() {
    let f = SpectralDensity::pollaczek(PollaczekParams::new(1.0).unwrap());
    let built = [
        SpectralDensity::product(&f, &SpectralDensity::abs_sin(0.7, 2.0).unwrap()).unwrap(),
        SpectralDensity::product(&f, &bump()).unwrap(),
        SpectralDensity::power(&f, 1.5).unwrap(),
        SpectralDensity::power(&SpectralDensity::product(&f, &bump()).unwrap(), 0.5).unwrap(),
    ];
    for g in &built {
        let s = series(g, 128);
        let sigma: Vec<f64> = s.sigma2_f64().iter().map(|v| v.sqrt()).collect();
        let v = weak_variation(&sigma, 32, 0.05).unwrap();
        assert!(v.passed_all(), "{g}: {}", v.max_deviation);
    }
}
