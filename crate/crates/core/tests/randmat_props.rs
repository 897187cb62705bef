use fblrate::randmat::{
    channel_output, gram_eigenvalues, lambda1, random_truncated_unitary, random_unitary,
    sample_cn_matrix, singular_values, wishart_logdet, RngStream,
};
use nalgebra::Complex;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn equal_streams_give_identical_draws(seed in any::<u64>(), stream in 0u64..1000, rows in 1usize..6, cols in 1usize..6) {
        let s = RngStream::new(seed, stream);
        let (mut a, mut b) = (s.rng(), s.rng());
        prop_assert_eq!(sample_cn_matrix(rows, cols, &mut a).unwrap(), sample_cn_matrix(rows, cols, &mut b).unwrap());
        prop_assert_eq!(random_unitary(rows, &mut a).unwrap(), random_unitary(rows, &mut b).unwrap());
        let n_r = rows.max(cols);
        prop_assert_eq!(
            wishart_logdet(cols.min(n_r), n_r, &mut a).unwrap().to_bits(),
            wishart_logdet(cols.min(n_r), n_r, &mut b).unwrap().to_bits()
        );
        prop_assert_eq!(lambda1(rows, cols, &mut a).unwrap().to_bits(), lambda1(rows, cols, &mut b).unwrap().to_bits());
    }

    #[test]
    fn squared_singular_values_sum_to_frobenius(seed in any::<u64>(), rows in 1usize..7, cols in 1usize..7) {
        let m = sample_cn_matrix(rows, cols, &mut RngStream::new(seed, 0).rng()).unwrap();
        let s = singular_values(&m);
        prop_assert_eq!(s.len(), rows.min(cols));
        prop_assert!(s.values().windows(2).all(|w| w[0] >= w[1]));
        let sum: f64 = s.squared().iter().sum();
        prop_assert!((sum - m.norm_squared()).abs() <= 1e-10 * m.norm_squared());
        // squared singular values are the Gram eigenvalues
        for (a, b) in s.squared().iter().zip(gram_eigenvalues(&m)) {
            prop_assert!((a - b).abs() <= 1e-9 * m.norm_squared());
        }
    }

    #[test]
    fn truncated_unitary_has_orthonormal_columns(seed in any::<u64>(), rows in 1usize..8, k in 1usize..8) {
        let cols = k.min(rows);
        let q = random_truncated_unitary(rows, cols, &mut RngStream::new(seed, 3).rng()).unwrap();
        let gram = q.adjoint() * &q;
        for i in 0..cols {
            for j in 0..cols {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((gram[(i, j)] - Complex::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn channel_output_shape(seed in any::<u64>(), t in 1usize..10, n_t in 1usize..4, n_r in 1usize..5) {
        let mut rng = RngStream::new(seed, 1).rng();
        let x = sample_cn_matrix(t, n_t, &mut rng).unwrap();
        let y = channel_output(&x, n_r, &mut rng).unwrap();
        prop_assert_eq!((y.nrows(), y.ncols()), (t, n_r));
    }
}
