//! Statistical and convergence oracles: reservoir retention, sampling
//! uniformity, policy-density quadrature, uncertainty formalism consistency.

use ccge_core::ccge::{guidance_predicate, select_action};
use ccge_core::nn::{AdamW, Mlp};
use ccge_core::replay::{BufferMode, ReplayBuffer, Transition};
use ccge_core::rng::{fill_standard_normal, stream_rng, Stream};
use ccge_core::sac::{
    critic_head_targets, critic_loss_grads, ActorSample, GaussianActor, SacConfig,
};
use ccge_core::uncertainty::{delta_t, estimate, UncertaintyMode};

fn t(tag: f64) -> Transition {
    Transition { s: vec![tag], a: vec![0.0], r: 0.0, s_next: vec![tag], terminal: false, oracle_a: vec![] }
}

#[test]
fn gdm_reservoir_retention_matches_capacity_over_n_within_3_sigma() {
    let n_stream = 100_000usize;
    let capacity = 1_000usize;
    let trials = 200usize;
    let tracked = [0usize, 777, 12_345, 49_999, 60_000, 88_888, 99_999];
    let p = capacity as f64 / n_stream as f64;
    let mut hits = [0usize; 7];
    for trial in 0..trials {
        let mut rng = stream_rng(5_000 + trial as u64, Stream::Buffer);
        let mut buf = ReplayBuffer::new(capacity, BufferMode::Gdm, 1, 1).unwrap();
        for i in 0..n_stream {
            buf.push(t(i as f64), &mut rng).unwrap();
        }
        for (j, &idx) in tracked.iter().enumerate() {
            let tag = idx as f64;
            if buf.items().iter().any(|item| item.s[0] == tag) {
                hits[j] += 1;
            }
        }
    }
    let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
    let expected = trials as f64 * p;
    for (j, &idx) in tracked.iter().enumerate() {
        let dev = (hits[j] as f64 - expected).abs();
        assert!(
            dev <= 3.0 * sigma,
            "stream index {idx}: retained {} of {trials} trials, expected {expected:.1} +- {:.1}",
            hits[j],
            3.0 * sigma
        );
    }
}

#[test]
fn per_slot_sampling_frequency_is_uniform_chi_squared() {
    let slots = 100usize;
    let draws = 1_000_000usize;
    let mut rng = stream_rng(314, Stream::Buffer);
    let mut buf = ReplayBuffer::new(slots, BufferMode::Fifo, 1, 1).unwrap();
    for i in 0..slots {
        buf.push(t(i as f64), &mut rng).unwrap();
    }
    let mut counts = vec![0usize; slots];
    let per_call = 10_000usize;
    for _ in 0..draws / per_call {
        for item in buf.sample(per_call, &mut rng).unwrap() {
            counts[item.s[0] as usize] += 1;
        }
    }
    let expected = draws as f64 / slots as f64;
    let chi2: f64 =
        counts.iter().map(|&c| (c as f64 - expected) * (c as f64 - expected) / expected).sum();
    // chi-square critical value, 99 dof, p = 0.01
    assert!(chi2 < 134.64, "chi2 = {chi2}");
}

#[test]
fn squashed_gaussian_density_integrates_to_one() {
    let mut rng = stream_rng(271, Stream::Actor);
    let cfg = SacConfig { hidden: vec![16, 16], ..SacConfig::new(2, 1) };
    let actor = GaussianActor::new(&cfg, &mut rng).unwrap();
    let s = [0.4, -0.7];
    // trapezoid quadrature of exp(log pi(a|s)) over the open interval (-1, 1)
    let n = 10_000usize;
    let a0 = -1.0 + 1e-9;
    let a1 = 1.0 - 1e-9;
    let h = (a1 - a0) / n as f64;
    let density = |a: f64| actor.log_prob_of(&s, &[a]).unwrap().exp();
    let mut integral = 0.5 * (density(a0) + density(a1));
    for i in 1..n {
        integral += density(a0 + i as f64 * h);
    }
    integral *= h;
    assert!((integral - 1.0).abs() < 1e-3, "integral = {integral}");
}

#[test]
fn converged_predictor_total_uncertainty_approaches_target_variance() {
    // Defs. 1-5 wiring check: fit y = 0.5 x + eta, eta ~ N(0, 0.3^2); the
    // converged predictor's expected squared residual (total uncertainty of
    // a near-zero-epistemic-uncertainty model) must approach Var(eta).
    let mut rng = stream_rng(999, Stream::Warmup);
    let sigma = 0.3;
    let mut net = Mlp::new(&[1, 16, 1], &mut rng, 1.0).unwrap();
    let opt = AdamW { lr: 1e-2, weight_decay: 0.0, ..AdamW::default() };
    let sample_pair = |rng: &mut rand_chacha::ChaCha8Rng| {
        let x = 2.0 * rand::Rng::gen::<f64>(rng) - 1.0;
        let mut eta = [0.0];
        fill_standard_normal(rng, &mut eta);
        (x, 0.5 * x + sigma * eta[0])
    };
    for _ in 0..3_000 {
        let batch: Vec<(f64, f64)> = (0..128).map(|_| sample_pair(&mut rng)).collect();
        let inputs: Vec<Vec<f64>> = batch.iter().map(|(x, _)| vec![*x]).collect();
        let outs = net.forward_batch(&inputs).unwrap();
        let out_grads: Vec<Vec<f64>> =
            outs.iter().zip(&batch).map(|(o, (_, y))| vec![2.0 * (o[0] - y)]).collect();
        let (grads, _) = net.backward_batch(&inputs, &out_grads).unwrap();
        net.adamw_step(&grads, &opt).unwrap();
    }
    // total uncertainty on fresh data
    let n_eval = 40_000usize;
    let mut acc = 0.0;
    for _ in 0..n_eval {
        let (x, y) = sample_pair(&mut rng);
        let pred = net.forward(&[x]).unwrap()[0];
        acc += (y - pred) * (y - pred);
    }
    let total = acc / n_eval as f64;
    let target = sigma * sigma;
    assert!(
        (total - target).abs() / target < 0.05,
        "total uncertainty {total} vs target variance {target}"
    );
}

#[test]
fn two_state_mdp_uncertainty_vanishes_with_data() {
    // deterministic 2-state 1-action MDP: s0 -> s1 (r = 1), s1 -> s0 (r = 0)
    let gamma = 0.9;
    let mut rng = stream_rng(404, Stream::Actor);
    let cfg = SacConfig {
        hidden: vec![32, 32],
        gamma,
        explicit_uncertainty: true,
        optimizer: AdamW { lr: 3e-3, weight_decay: 0.0, ..AdamW::default() },
        tau: 0.01,
        ..SacConfig::new(1, 1)
    };
    let mut critics = ccge_core::sac::CriticEnsemble::new(&cfg, &mut rng).unwrap();
    let batch = vec![
        Transition { s: vec![0.0], a: vec![0.0], r: 1.0, s_next: vec![1.0], terminal: false, oracle_a: vec![] },
        Transition { s: vec![1.0], a: vec![0.0], r: 0.0, s_next: vec![0.0], terminal: false, oracle_a: vec![] },
    ];
    let next_samples: Vec<ActorSample> = (0..2)
        .map(|_| ActorSample { raw: vec![], xi: vec![], action: vec![0.0], log_prob: 0.0 })
        .collect();
    let inputs: Vec<Vec<f64>> = batch.iter().map(|t| critics.input(&t.s, &t.a)).collect();
    for _ in 0..5_000 {
        // plain Q target from each member's own target network (single action)
        for mi in 0..critics.n() {
            let ys: Vec<f64> = batch
                .iter()
                .map(|t| {
                    let x = critics.input(&t.s_next, &[0.0]);
                    t.r + gamma * critics.targets()[mi].forward(&x).unwrap()[0]
                })
                .collect();
            let eps_targets =
                critic_head_targets(&critics, mi, &batch, &inputs, &next_samples, gamma).unwrap();
            let (_, grads) = critic_loss_grads(&critics, mi, &inputs, &ys, &eps_targets).unwrap();
            critics.members_mut()[mi].adamw_step(&grads, &cfg.optimizer).unwrap();
        }
        critics.polyak(cfg.tau).unwrap();
    }
    // Bellman residuals vanish on every transition...
    for t in &batch {
        let (qs, _) = critics.q_and_eps(&t.s, &t.a).unwrap();
        let (q_nexts, _) = critics.q_and_eps(&t.s_next, &[0.0]).unwrap();
        for (q, q_next) in qs.iter().zip(&q_nexts) {
            let delta = delta_t(*q, t.r, gamma, *q_next, false);
            assert!(delta.abs() <= 1e-3, "delta = {delta}");
        }
        // ...and the trained explicit head approaches its vanishing fixed point
        let est = estimate(UncertaintyMode::Explicit, &critics, &t.s, &t.a).unwrap();
        let bound = (1e-3f64 / (1.0 - gamma)).sqrt();
        assert!(est.epsilon <= bound, "epsilon = {} > {bound}", est.epsilon);
    }
}

#[test]
fn raising_lambda_never_increases_guided_count_on_frozen_snapshot() {
    // fixed states, fixed k values; the guided count must be non-increasing in lambda
    let mut rng = stream_rng(55, Stream::Eval);
    let mut ks = vec![0.0; 200];
    fill_standard_normal(&mut rng, &mut ks);
    let lambdas = [-1.0, -0.1, 0.0, 0.1, 0.5, 1.0, 2.0, f64::INFINITY];
    let mut prev = usize::MAX;
    for lambda in lambdas {
        let guided = ks.iter().filter(|&&k| guidance_predicate(k, lambda)).count();
        assert!(guided <= prev, "lambda {lambda}: guided {guided} > previous {prev}");
        prev = guided;
    }
    // lambda -> infinity guides nothing
    assert_eq!(prev, 0);
}

#[test]
fn evaluation_is_never_overridden() {
    let a = vec![0.2, -0.2];
    let a_oracle = [1.0, 1.0];
    // k far above lambda, but training = false: policy action is kept
    let (chosen, guided) = select_action(a.clone(), &a_oracle, 100.0, 1.0, false, true);
    assert!(!guided);
    assert_eq!(chosen, a);
    // training with guidance disabled also keeps the policy action
    let (chosen, guided) = select_action(a.clone(), &a_oracle, 100.0, 1.0, true, false);
    assert!(!guided);
    assert_eq!(chosen, a);
    // training with guidance enabled hands over
    let (chosen, guided) = select_action(a, &a_oracle, 100.0, 1.0, true, true);
    assert!(guided);
    assert_eq!(chosen, a_oracle.to_vec());
}
