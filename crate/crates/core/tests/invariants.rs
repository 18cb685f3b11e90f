//! Property tests for the layer and data invariants.

use proptest::prelude::*;

use epilnet_core::data::{EegDataset, EegRecord, GroupMapping, GroupMode, SAMPLES_PER_RECORD};
use epilnet_core::layers::{
    batchnorm1d_train, conv1d_output_length, maxpool1d, maxpool1d_backward, softmax,
    BatchNormSpec, PoolSpec,
};
use epilnet_core::tensor::SignalTensor;

/// Oracle for the output-length formula: count the window placements
/// one by one.
fn brute_force_output_length(length: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    let padded = length + 2 * padding;
    let mut count = 0;
    let mut start = 0;
    while start + kernel <= padded {
        count += 1;
        start += stride;
    }
    count
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn output_length_formula_matches_enumeration(
        length in 1usize..400,
        kernel in 1usize..12,
        stride in 1usize..5,
        padding in 0usize..6,
    ) {
        let expected = brute_force_output_length(length, kernel, stride, padding);
        match conv1d_output_length(length, kernel, stride, padding) {
            Some(n) => prop_assert_eq!(n, expected),
            None => prop_assert_eq!(expected, 0),
        }
    }

    #[test]
    fn maxpool_backward_conserves_gradient_mass(
        values in prop::collection::vec(-100.0f64..100.0, 4..64),
        upstream_scale in 0.1f64..5.0,
    ) {
        let x = SignalTensor::from_values(1, 1, values.len(), values).unwrap();
        let spec = PoolSpec::default();
        let out = maxpool1d(&x, spec).unwrap();
        let up_values: Vec<f64> = (0..out.output.len())
            .map(|i| ((i as f64) - 1.5) * upstream_scale)
            .collect();
        let up = SignalTensor::from_values(1, 1, up_values.len(), up_values.clone()).unwrap();
        let grad = maxpool1d_backward(x.shape(), &out.argmax, &up).unwrap();
        let up_sum: f64 = up_values.iter().sum();
        let grad_sum: f64 = grad.values().iter().sum();
        prop_assert!((up_sum - grad_sum).abs() < 1e-9);
    }

    #[test]
    fn softmax_is_a_distribution_even_for_large_logits(
        logits in prop::collection::vec(-1.0e4f64..1.0e4, 2..8),
    ) {
        let p = softmax(&logits);
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-6);
        for &v in &p {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn batchnorm_train_output_statistics(
        batch in 2usize..5,
        length in 2usize..12,
        gamma in -2.0f64..2.0,
        beta in -2.0f64..2.0,
        seed_offset in 0u64..1000,
    ) {
        let n = batch * length;
        let values: Vec<f64> = (0..n)
            .map(|i| ((i as f64 + seed_offset as f64) * 0.83).sin() * 7.0 + 2.0)
            .collect();
        let x = SignalTensor::from_values(batch, 1, length, values).unwrap();
        let mut spec = BatchNormSpec::<f64>::identity(1);
        spec.gamma = vec![gamma];
        spec.beta = vec![beta];
        spec.eps = 1e-12;
        let (y, _) = batchnorm1d_train(&x, &mut spec).unwrap();
        let mean: f64 = y.values().iter().sum::<f64>() / n as f64;
        let var: f64 = y.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        prop_assert!((mean - beta).abs() < 1e-6, "mean {} vs beta {}", mean, beta);
        prop_assert!((var - gamma * gamma).abs() < 1e-4, "var {} vs gamma^2 {}", var, gamma * gamma);
    }

    #[test]
    fn stratified_split_partitions_and_stratifies(
        per_label in prop::collection::vec(6usize..40, 5),
        seed in 0u64..500,
    ) {
        let mut records = Vec::new();
        for (label0, &count) in per_label.iter().enumerate() {
            for _ in 0..count {
                records.push(EegRecord {
                    id: None,
                    samples: [0.0; SAMPLES_PER_RECORD],
                    label: label0 as u8 + 1,
                });
            }
        }
        let targets = records.iter().map(|r| r.label as usize - 1).collect();
        let mut ds = EegDataset {
            records,
            targets,
            mapping: GroupMapping::new(GroupMode::FiveClass),
            splits: None,
            norm: None,
        };
        ds.stratified_split((0.76, 0.12, 0.12), seed).unwrap();

        // Partition: every record in exactly one split.
        let (train, val, test) = ds.split_sizes().unwrap();
        prop_assert_eq!(train + val + test, ds.len());

        // Stratification: per class and split, within one record of the
        // expected proportion.
        for split in [
            epilnet_core::data::Split::Train,
            epilnet_core::data::Split::Val,
            epilnet_core::data::Split::Test,
        ] {
            let ratio = match split {
                epilnet_core::data::Split::Train => 0.76,
                _ => 0.12,
            };
            let idx = ds.indices_of(split).unwrap();
            let mut per_class = [0usize; 5];
            for i in idx {
                per_class[ds.targets[i]] += 1;
            }
            for (class, &observed) in per_class.iter().enumerate() {
                let expected = per_label[class] as f64 * ratio;
                prop_assert!(
                    (observed as f64 - expected).abs() <= 1.0,
                    "class {} split {:?}: observed {}, expected {}",
                    class, split, observed, expected
                );
            }
        }
    }
}
