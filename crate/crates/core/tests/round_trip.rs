use analog_shards::accuracy::{accuracy_bound, coefficient_mass, FloatModel};
use analog_shards::privacy::{mis_bound_collusion, mis_bound_for_set};
use analog_shards::sharing::{decode_real, decoder_weights, Encoder, Polynomial, ProtocolParams, Shape};
use num_complex::Complex64;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Share, evaluate on every share, decode: the error stays within the
    /// worst-case floating-point bound.
    #[test]
    fn polynomial_round_trip_within_bound(
        degree in 1usize..=3,
        t in 1usize..=3,
        extra in 0usize..3,
        log_sigma in 1.5f64..9.0,
        coeffs in prop::collection::vec(-2.0f64..2.0, 4),
        secret in prop::collection::vec(-255.0f64..255.0, 1..8),
        seed in any::<u64>(),
    ) {
        let n = degree * t + 1 + extra;
        let p = ProtocolParams::new(n, t, degree, 10f64.powf(log_sigma), 10.0, 255.0, seed).unwrap();
        let mut c = coeffs[..=degree].to_vec();
        if c[degree] == 0.0 {
            c[degree] = 1.0;
        }
        let f = Polynomial::new(c).unwrap();
        let set = Encoder::new(p.clone()).share_real(&secret, Shape::Vector { len: secret.len() }).unwrap();
        let w = decoder_weights(&p).unwrap();
        let bound = accuracy_bound(coefficient_mass(&f), &p, FloatModel::default(), None).unwrap().delta_f;
        for (k, &s) in secret.iter().enumerate() {
            let results: Vec<Complex64> = (1..=n).map(|i| f.eval(set.server(i)[k])).collect();
            let got = decode_real(&results, &w).unwrap().value;
            let err = (got - f.eval_real(s)).abs();
            prop_assert!(err <= bound, "error {err:e} > bound {bound:e}");
        }
    }

    /// The numerical information bound for a colluding set shrinks with more
    /// noise and matches the closed form when `N = t + 1`.
    #[test]
    fn collusion_bound_is_monotone_in_noise(t in 1usize..5, extra in 0usize..4, log_sigma in 0.0f64..6.0) {
        let n = t + 1 + extra;
        let sigma = 10f64.powf(log_sigma);
        let p = ProtocolParams::new(n, t, 1, sigma, 10.0, 1.0, 0).unwrap();
        let set: Vec<usize> = (1..=t).collect();
        let quiet = mis_bound_for_set(&p, &set).unwrap();
        let loud = mis_bound_for_set(&p.with_sigma_n(sigma * 10.0).unwrap(), &set).unwrap();
        prop_assert!(loud < quiet);
        prop_assert!(loud > 0.0);
        if extra == 0 {
            let closed = mis_bound_collusion(p.r(), sigma, t).unwrap().value;
            prop_assert!((closed - quiet).abs() <= 1e-9 * closed);
        }
    }
}
