//! Finite-difference oracle suite: every layer primitive's analytic
//! backward pass is checked against central differences in double
//! precision. Purely linear maps (convolution, dense, global average pool,
//! ReLU away from its kink, max pool away from ties) must agree to 1e-6;
//! curved ones (batch norm, softmax, whole blocks) to their stated bounds.

use epilnet_core::gradcheck::{
    check_basic_block, check_batchnorm, check_conv1d, check_dense, check_global_avg_pool,
    check_maxpool, check_model_parameter_sample, check_relu, check_softmax_cross_entropy,
    DEFAULT_EPS,
};

const LINEAR_TOL: f64 = 1e-6;
const CURVED_TOL: f64 = 1e-4;

#[test]
fn conv1d_matches_finite_differences() {
    // Pointwise, same-length, and strided/stem-shaped configurations, plus
    // the small random multi-channel case.
    let cases = [
        // (batch, in_c, out_c, kernel, stride, padding, length)
        (1, 1, 1, 1, 1, 0, 6),
        (2, 2, 3, 3, 1, 1, 9),
        (2, 1, 4, 7, 2, 3, 20),
        (1, 3, 2, 3, 2, 1, 11),
    ];
    for (i, &(b, ic, oc, k, s, p, l)) in cases.iter().enumerate() {
        let err = check_conv1d(b, ic, oc, k, s, p, l, 100 + i as u64, DEFAULT_EPS);
        assert!(
            err <= LINEAR_TOL,
            "conv case {i} rel err {err:e} exceeds {LINEAR_TOL:e}"
        );
    }
}

#[test]
fn batchnorm_matches_finite_differences() {
    for (i, &(b, c, l)) in [(2, 3, 7), (4, 1, 5), (2, 8, 3)].iter().enumerate() {
        let err = check_batchnorm(b, c, l, 200 + i as u64, DEFAULT_EPS);
        assert!(
            err <= CURVED_TOL,
            "batchnorm case {i} rel err {err:e} exceeds {CURVED_TOL:e}"
        );
    }
}

#[test]
fn relu_matches_finite_differences_away_from_kink() {
    let err = check_relu(64, 300, DEFAULT_EPS);
    assert!(err <= LINEAR_TOL, "relu rel err {err:e}");
}

#[test]
fn maxpool_matches_finite_differences() {
    let err = check_maxpool(2, 3, 11, 400, DEFAULT_EPS);
    assert!(err <= LINEAR_TOL, "maxpool rel err {err:e}");
}

#[test]
fn global_avg_pool_matches_finite_differences() {
    let err = check_global_avg_pool(3, 4, 6, 500, DEFAULT_EPS);
    assert!(err <= LINEAR_TOL, "global avg pool rel err {err:e}");
}

#[test]
fn dense_matches_finite_differences() {
    // Includes the 4 -> 3 case.
    for (i, &(b, inf, outf)) in [(1, 4, 3), (3, 6, 2)].iter().enumerate() {
        let err = check_dense(b, inf, outf, 600 + i as u64, DEFAULT_EPS);
        assert!(err <= LINEAR_TOL, "dense case {i} rel err {err:e}");
    }
}

#[test]
fn softmax_cross_entropy_matches_finite_differences() {
    for classes in [2usize, 3, 5] {
        for label in 0..classes {
            let err = check_softmax_cross_entropy(classes, label, 700, DEFAULT_EPS);
            assert!(
                err <= CURVED_TOL,
                "softmax {classes} classes label {label} rel err {err:e}"
            );
        }
    }
}

#[test]
fn basic_block_matches_finite_differences() {
    // Identity-skip block.
    let err = check_basic_block(2, 4, 4, 1, 9, 800, DEFAULT_EPS);
    assert!(err <= CURVED_TOL, "identity block rel err {err:e}");
    // Downsampling block with projection.
    let err = check_basic_block(2, 3, 5, 2, 9, 801, DEFAULT_EPS);
    assert!(err <= CURVED_TOL, "projection block rel err {err:e}");
}

#[test]
fn full_model_parameter_sample_matches_finite_differences() {
    // Ten randomly sampled trainable parameters of a narrow full graph,
    // against the mean cross-entropy loss on a small batch.
    let err = check_model_parameter_sample(3, 0.0625, 2, 10, 900, DEFAULT_EPS);
    assert!(err <= 1e-3, "full model sampled rel err {err:e}");
}
