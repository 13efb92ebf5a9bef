//! Closed-form and round-trip checks for the MLP kernel: forward identities,
//! backward closed forms, AdamW edge cases, clipping, polyak, checkpoints.

use ccge_core::error::CoreError;
use ccge_core::nn::{clip_grad_norm, AdamW, Checkpoint, GradientSet, Mlp};
use ccge_core::rng::{fill_standard_normal, stream_rng, Stream};

fn rand_vec(rng: &mut impl rand::Rng, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    fill_standard_normal(rng, &mut v);
    v
}

/// Zeroes every parameter of the net.
fn zero_params(net: &mut Mlp) {
    for i in 0..net.flat_len() {
        let v = net.get_flat(i);
        net.add_flat(i, -v);
    }
}

#[test]
fn zero_weights_forward_returns_bias() {
    let mut rng = stream_rng(1, Stream::Actor);
    let mut net = Mlp::new(&[3, 2], &mut rng, 1.0).unwrap();
    zero_params(&mut net);
    // single layer [3 -> 2]: flat order is the 6 weights then the 2 biases
    net.add_flat(6, 1.5);
    net.add_flat(7, -2.5);
    assert_eq!(net.forward(&[9.0, -3.0, 4.0]).unwrap(), vec![1.5, -2.5]);
}

#[test]
fn identity_linear_layer_passes_input_through() {
    let mut rng = stream_rng(2, Stream::Actor);
    let mut net = Mlp::new(&[3, 3], &mut rng, 1.0).unwrap();
    zero_params(&mut net);
    for i in 0..3 {
        net.add_flat(i * 3 + i, 1.0); // W = I, row-major
    }
    let x = [0.3, -0.8, 2.0];
    assert_eq!(net.forward(&x).unwrap(), x.to_vec());
}

#[test]
fn dimension_mismatch_is_a_shape_error() {
    let mut rng = stream_rng(3, Stream::Actor);
    let net = Mlp::new(&[3, 2], &mut rng, 1.0).unwrap();
    assert!(matches!(net.forward(&[1.0, 2.0]), Err(CoreError::Shape(_))));
}

#[test]
fn zero_output_gradient_gives_zero_gradient_set() {
    let mut rng = stream_rng(4, Stream::Actor);
    let net = Mlp::new(&[3, 5, 2], &mut rng, 1.0).unwrap();
    let inputs = vec![rand_vec(&mut rng, 3), rand_vec(&mut rng, 3)];
    let out_grads = vec![vec![0.0; 2]; 2];
    let (grads, input_grads) = net.backward_batch(&inputs, &out_grads).unwrap();
    assert_eq!(grads.global_norm(), 0.0);
    assert!(input_grads.iter().all(|g| g.iter().all(|&v| v == 0.0)));
}

#[test]
fn non_finite_upstream_gradient_is_rejected() {
    let mut rng = stream_rng(5, Stream::Actor);
    let net = Mlp::new(&[2, 2], &mut rng, 1.0).unwrap();
    let inputs = vec![vec![1.0, 2.0]];
    let out_grads = vec![vec![f64::NAN, 0.0]];
    assert!(matches!(net.backward_batch(&inputs, &out_grads), Err(CoreError::NonFinite(_))));
}

#[test]
fn single_linear_layer_mse_gradient_closed_form() {
    // dL/dW for L = mean ||Wx + b - y||^2 is mean over the batch of
    // 2 * residual (outer) input
    let mut rng = stream_rng(6, Stream::Actor);
    let net = Mlp::new(&[2, 2], &mut rng, 1.0).unwrap();
    let inputs = vec![rand_vec(&mut rng, 2), rand_vec(&mut rng, 2), rand_vec(&mut rng, 2)];
    let targets = vec![rand_vec(&mut rng, 2), rand_vec(&mut rng, 2), rand_vec(&mut rng, 2)];
    let outs = net.forward_batch(&inputs).unwrap();
    let out_grads: Vec<Vec<f64>> = outs
        .iter()
        .zip(&targets)
        .map(|(o, t)| o.iter().zip(t).map(|(a, b)| 2.0 * (a - b)).collect())
        .collect();
    let (grads, _) = net.backward_batch(&inputs, &out_grads).unwrap();
    for o in 0..2 {
        for i in 0..2 {
            let mut expected = 0.0;
            for (x, g) in inputs.iter().zip(&out_grads) {
                expected += g[o] * x[i];
            }
            expected /= inputs.len() as f64;
            let got = grads.w[0][o * 2 + i];
            assert!((got - expected).abs() < 1e-12, "w[{o}][{i}]: {got} vs {expected}");
        }
        let expected_b = out_grads.iter().map(|g| g[o]).sum::<f64>() / inputs.len() as f64;
        assert!((grads.b[0][o] - expected_b).abs() < 1e-12);
    }
}

#[test]
fn adamw_zero_grad_cases() {
    let mut rng = stream_rng(7, Stream::Actor);
    // zero grad, zero weight decay: parameters unchanged
    let mut net = Mlp::new(&[2, 2], &mut rng, 1.0).unwrap();
    let before: Vec<f64> = (0..net.flat_len()).map(|i| net.get_flat(i)).collect();
    let zeros = GradientSet::zeros_like(&net);
    let opt0 = AdamW { weight_decay: 0.0, ..AdamW::default() };
    net.adamw_step(&zeros, &opt0).unwrap();
    for (i, b) in before.iter().enumerate() {
        assert_eq!(net.get_flat(i), *b);
    }
    assert_eq!(net.step_count(), 1);

    // zero grad with weight decay wd: theta <- theta * (1 - lr * wd)
    let mut net = Mlp::new(&[2, 2], &mut rng, 1.0).unwrap();
    let before: Vec<f64> = (0..net.flat_len()).map(|i| net.get_flat(i)).collect();
    let opt = AdamW::default();
    net.adamw_step(&GradientSet::zeros_like(&net), &opt).unwrap();
    for (i, b) in before.iter().enumerate() {
        let expected = b * (1.0 - opt.lr * opt.weight_decay);
        assert!((net.get_flat(i) - expected).abs() < 1e-15);
    }
}

#[test]
fn adamw_is_bitwise_deterministic_across_runs() {
    let make = || {
        let mut rng = stream_rng(8, Stream::Actor);
        let mut net = Mlp::new(&[3, 8, 1], &mut rng, 1.0).unwrap();
        let opt = AdamW { weight_decay: 0.0, ..AdamW::default() };
        for step in 0..20 {
            let inputs = vec![vec![0.1 * step as f64, -0.2, 0.3]];
            let out_grads = vec![vec![1.0]];
            let (grads, _) = net.backward_batch(&inputs, &out_grads).unwrap();
            net.adamw_step(&grads, &opt).unwrap();
        }
        (0..net.flat_len()).map(|i| net.get_flat(i).to_bits()).collect::<Vec<u64>>()
    };
    assert_eq!(make(), make());
}

#[test]
fn clip_grad_norm_examples() {
    // exact arithmetic case: vector (3, 4), max_norm 1 -> (0.6, 0.8)
    let mut g = GradientSet { w: vec![vec![3.0, 4.0]], b: vec![vec![]] };
    clip_grad_norm(&mut g, 1.0);
    assert!((g.w[0][0] - 0.6).abs() < 1e-15);
    assert!((g.w[0][1] - 0.8).abs() < 1e-15);
    // idempotent
    let again = g.clone();
    clip_grad_norm(&mut g, 1.0);
    assert!((g.w[0][0] - again.w[0][0]).abs() < 1e-15);
    assert!(g.global_norm() <= 1.0 + 1e-12);
    // norm already below max: unchanged
    let mut small = GradientSet { w: vec![vec![0.1, 0.1]], b: vec![vec![]] };
    let before = small.clone();
    clip_grad_norm(&mut small, 1.0);
    assert_eq!(small, before);
    // all-zero stays all-zero
    let mut zero = GradientSet { w: vec![vec![0.0, 0.0]], b: vec![vec![]] };
    clip_grad_norm(&mut zero, 1.0);
    assert_eq!(zero.global_norm(), 0.0);
}

#[test]
fn polyak_edge_cases() {
    let mut rng = stream_rng(9, Stream::Actor);
    let online = Mlp::new(&[2, 3, 1], &mut rng, 1.0).unwrap();
    let fresh = Mlp::new(&[2, 3, 1], &mut rng, 1.0).unwrap();

    // tau = 1: exact copy; forward identical to online
    let mut target = fresh.clone();
    target.polyak_from(&online, 1.0).unwrap();
    let x = [0.5, -0.5];
    assert_eq!(target.forward(&x).unwrap(), online.forward(&x).unwrap());

    // tau = 0: unchanged
    let mut target = fresh.clone();
    target.polyak_from(&online, 0.0).unwrap();
    assert_eq!(target.forward(&x).unwrap(), fresh.forward(&x).unwrap());

    // architecture mismatch rejected
    let other = Mlp::new(&[2, 4, 1], &mut rng, 1.0).unwrap();
    let mut target = fresh.clone();
    assert!(target.polyak_from(&other, 0.5).is_err());
}

#[test]
fn checkpoint_roundtrip_is_bit_identical() {
    let mut rng = stream_rng(10, Stream::Actor);
    let net = Mlp::new(&[4, 8, 2], &mut rng, 1.0).unwrap();
    let mut ckpt = Checkpoint::new();
    ckpt.insert_net("actor", &net);
    ckpt.scalars.insert("log_alpha".to_string(), -0.37);
    let loaded = Checkpoint::from_json(&ckpt.to_json()).unwrap();
    let restored = loaded.net("actor").unwrap();
    for i in 0..net.flat_len() {
        assert_eq!(net.get_flat(i).to_bits(), restored.get_flat(i).to_bits(), "param {i}");
    }
    assert_eq!(loaded.scalars["log_alpha"], -0.37);
    for _ in 0..100 {
        let x = rand_vec(&mut rng, 4);
        assert_eq!(net.forward(&x).unwrap(), restored.forward(&x).unwrap());
    }
}

#[test]
fn checkpoint_error_kinds_are_distinct() {
    let mut rng = stream_rng(11, Stream::Actor);
    let net = Mlp::new(&[4, 8, 2], &mut rng, 1.0).unwrap();
    let mut ckpt = Checkpoint::new();
    ckpt.insert_net("actor", &net);
    let json = ckpt.to_json();

    // truncated file: load error, no partial state
    let truncated = &json[..json.len() / 2];
    assert!(matches!(Checkpoint::from_json(truncated), Err(CoreError::CheckpointCorrupt(_))));

    // version mismatch
    let bumped = json.replacen("\"version\":1", "\"version\":99", 1);
    assert!(matches!(
        Checkpoint::from_json(&bumped),
        Err(CoreError::CheckpointVersion { found: 99, expected: 1 })
    ));

    // wrong architecture: shape error naming the offending tensor
    let loaded = Checkpoint::from_json(&json).unwrap();
    match loaded.net_expecting("actor", &[4, 16, 2]) {
        Err(CoreError::Shape(msg)) => assert!(msg.contains("actor"), "message: {msg}"),
        other => panic!("expected a shape error, got {other:?}"),
    }

    // missing net name
    assert!(matches!(loaded.net("critic"), Err(CoreError::CheckpointCorrupt(_))));
}
