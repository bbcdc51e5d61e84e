use ndarray::{Array1, Array2, Axis};
use pilotnet::channel::{self, ChannelInstance};
use pilotnet::neuralnet::{self, InputTransform, Mode, NetworkArch, NetworkParams, BN_EPSILON, DEFAULT_HIDDEN};
use pilotnet::trainer::{self, DataSource, TrainConfig};
use pilotnet::{msecore, rng, SystemConfig};
use proptest::prelude::*;

fn paper_params(seed: u64, transform: InputTransform) -> (SystemConfig, NetworkParams) {
    let cfg = SystemConfig::paper_scenario();
    let arch = NetworkArch::for_scenario(&cfg, &DEFAULT_HIDDEN).unwrap();
    let params = neuralnet::init_params(&arch, &cfg, transform, &mut rng::seeded(seed)).unwrap();
    (cfg, params)
}

fn sample_std(values: impl Iterator<Item = f64>) -> f64 {
    let v = values.collect::<Vec<_>>();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[test]
fn paper_architecture_sizes() {
    let (_, params) = paper_params(0, InputTransform::Raw);
    assert_eq!(params.arch.layer_sizes, vec![48, 64, 128, 128, 128, 64, 48]);
    assert_eq!(params.hidden.len(), 5);
    assert!(params.hidden[0].bias.iter().all(|b| *b == 0.0));
}

#[test]
fn he_initialization_std() {
    let cfg = SystemConfig::with_dims(12, 40, 2, 4);
    let arch = NetworkArch::for_scenario(&cfg, &[256, 128, 128]).unwrap();
    let params = neuralnet::init_params(&arch, &cfg, InputTransform::Raw, &mut rng::seeded(8)).unwrap();
    let mut checked = 0;
    let weights = params
        .hidden
        .iter()
        .map(|l| &l.weight)
        .chain(std::iter::once(&params.output.weight));
    for w in weights {
        let (fan_out, fan_in) = w.dim();
        if fan_in * fan_out < 10_000 {
            continue;
        }
        let expected = (2.0 / fan_in as f64).sqrt();
        let std = sample_std(w.iter().copied());
        assert!((std / expected - 1.0).abs() < 0.05, "{std} vs {expected}");
        checked += 1;
    }
    assert!(checked >= 3);
}

#[test]
fn saturated_softmax_is_one_hot() {
    let (cfg, params) = paper_params(0, InputTransform::Raw);
    let mut logits = Array2::<f64>::zeros((1, 48));
    for k in 0..12 {
        logits[[0, 4 * k + k % 4]] = 40.0;
    }
    let out = params.grouped_softmax(&logits);
    let tail = (-40f64).exp();
    for k in 0..12 {
        for b in 0..4 {
            let exact = if b == k % 4 {
                6.0 / (1.0 + 3.0 * tail)
            } else {
                6.0 * tail / (1.0 + 3.0 * tail)
            };
            let one_hot = if b == k % 4 { cfg.p_tot(k) } else { 0.0 };
            assert!((out[[0, 4 * k + b]] - exact).abs() < 1e-15);
            assert!((out[[0, 4 * k + b]] - one_hot).abs() < 1e-12);
        }
    }
}

#[test]
fn train_mode_normalization_statistics() {
    for transform in [InputTransform::Raw, InputTransform::Log10] {
        let (cfg, params) = paper_params(1, transform);
        let data = channel::generate_dataset(&cfg, 256).unwrap();
        let trace = params.forward(neuralnet::input_batch(&data).view(), Mode::Train).unwrap();
        for layer in &trace.hidden {
            let mean = layer.normalized.mean_axis(Axis(0)).unwrap();
            let var = layer.normalized.var_axis(Axis(0), 0.0);
            let pre_var = layer.pre_bn.var_axis(Axis(0), 0.0);
            assert!(mean.iter().all(|m| m.abs() < 1e-7));
            // ε keeps the normalized variance at var / (var + ε).
            let expected: Array1<f64> = pre_var.mapv(|v| v / (v + BN_EPSILON));
            for (v, e) in var.iter().zip(expected.iter()) {
                assert!((v - e).abs() < 1e-6, "{v} vs {e}");
            }
        }
    }
}

#[test]
fn infer_mode_is_bit_deterministic_and_per_sample() {
    let (cfg, params) = paper_params(2, InputTransform::Raw);
    let data = channel::generate_dataset(&cfg, 10).unwrap();
    let input = neuralnet::input_batch(&data);
    let a = params.infer(input.view()).unwrap();
    let b = params.infer(input.view()).unwrap();
    assert_eq!(a, b);
    let single = params.infer(input.slice(ndarray::s![3..4, ..])).unwrap();
    assert_eq!(single.row(0), a.row(3));
}

#[test]
fn end_to_end_gradient_matches_finite_differences() {
    let cfg = SystemConfig::with_dims(4, 3, 2, 2);
    let arch = NetworkArch::for_scenario(&cfg, &[8, 6]).unwrap();
    let params = neuralnet::init_params(&arch, &cfg, InputTransform::Log10, &mut rng::seeded(5)).unwrap();
    let batch = channel::generate_dataset(&cfg, 6).unwrap();
    let base = trainer::loss_and_grad(&params, &batch, &cfg).unwrap();
    let scale = base.grads.max_abs();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for idx in 0..params.num_trainable() {
        let mut plus = params.clone();
        *plus.trainable_mut(idx).unwrap() += h;
        let mut minus = params.clone();
        *minus.trainable_mut(idx).unwrap() -= h;
        let fd = (trainer::loss_and_grad(&plus, &batch, &cfg).unwrap().loss
            - trainer::loss_and_grad(&minus, &batch, &cfg).unwrap().loss)
            / (2.0 * h);
        let analytic = base.grads.get(idx).unwrap();
        worst = worst.max((analytic - fd).abs() / (analytic.abs().max(fd.abs()).max(1e-3 * scale)));
    }
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn loss_is_mean_sum_mse_of_emitted_allocations() {
    let (cfg, params) = paper_params(3, InputTransform::Raw);
    let batch = channel::generate_dataset(&cfg, 8).unwrap();
    let result = trainer::loss_and_grad(&params, &batch, &cfg).unwrap();
    let mut total = 0.0;
    for (i, inst) in batch.iter().enumerate() {
        let alloc = result.trace.allocation(i, 12, 4);
        total += msecore::sum_mse(inst, &msecore::PowerAllocation::new(alloc, &cfg).unwrap(), &cfg).unwrap();
    }
    assert!((result.loss / (total / 8.0) - 1.0).abs() < 1e-12);
}

#[test]
fn training_loss_trends_down() {
    let cfg = SystemConfig::paper_scenario();
    let arch = NetworkArch::for_scenario(&cfg, &DEFAULT_HIDDEN).unwrap();
    let tc = TrainConfig {
        iterations: 100,
        eval_every: 100,
        holdout_size: 200,
        ..TrainConfig::default()
    };
    let out = trainer::train(&arch, &tc, &cfg).unwrap();
    let losses = out.log.rows.iter().map(|r| r.loss).collect::<Vec<_>>();
    let median = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        0.5 * (s[(s.len() - 1) / 2] + s[s.len() / 2])
    };
    assert!(median(&losses[50..]) <= median(&losses[..50]));
}

#[test]
fn fixed_dataset_training_cycles_in_order() {
    let mut cfg = SystemConfig::with_dims(4, 3, 2, 2);
    cfg.rng_seed = 77;
    let arch = NetworkArch::for_scenario(&cfg, &[8, 8]).unwrap();
    let data = channel::generate_dataset(&cfg, 10).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.txt");
    channel::write_dataset(&path, &data).unwrap();
    let base = TrainConfig {
        batch_size: 5,
        iterations: 4,
        eval_every: 2,
        holdout_size: 20,
        ..TrainConfig::default()
    };
    let from_file = trainer::train(
        &arch,
        &TrainConfig {
            data_source: DataSource::FixedDataset(path),
            ..base.clone()
        },
        &cfg,
    )
    .unwrap();
    let in_memory = trainer::train(
        &arch,
        &TrainConfig {
            data_source: DataSource::InMemory(data),
            ..base
        },
        &cfg,
    )
    .unwrap();
    assert_eq!(from_file.final_params, in_memory.final_params);
}

#[test]
fn checkpoint_preserves_inference() {
    let (cfg, params) = paper_params(4, InputTransform::Log10);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    neuralnet::save_params(&params, &path).unwrap();
    let back = neuralnet::load_params(&path).unwrap();
    let input = neuralnet::input_batch(&channel::generate_dataset(&cfg, 5).unwrap());
    assert_eq!(back.infer(input.view()).unwrap(), params.infer(input.view()).unwrap());
}

fn random_instance(values: &[f64]) -> ChannelInstance {
    ChannelInstance::new(Array2::from_shape_vec((12, 4), values.to_vec()).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn outputs_are_feasible(seed in 0u64..10_000, gain in 0.1f64..20.0, exps in prop::collection::vec(-12.0f64..-3.0, 96)) {
        let (cfg, mut params) = paper_params(seed, InputTransform::Raw);
        params.output.weight.mapv_inplace(|w| w * gain);
        for layer in &mut params.hidden {
            layer.gamma.mapv_inplace(|g| g * gain);
        }
        let lams = exps.iter().map(|e| 10f64.powf(*e)).collect::<Vec<_>>();
        let batch = [random_instance(&lams[..48]), random_instance(&lams[48..])];
        let input = neuralnet::input_batch(&batch);
        for out in [params.infer(input.view()).unwrap(), params.forward(input.view(), Mode::Train).unwrap().output] {
            prop_assert!(trainer::check_output_feasibility(&out, &cfg).is_ok());
        }
    }

    #[test]
    fn group_shift_invariance(shift in -50.0f64..50.0, group in 0usize..12, seed in 0u64..1000) {
        let (_, params) = paper_params(0, InputTransform::Raw);
        let mut r = rng::seeded(seed);
        let logits = Array2::from_shape_simple_fn((1, 48), || rand::Rng::random_range(&mut r, -5.0..5.0));
        let mut shifted = logits.clone();
        for b in 0..4 {
            shifted[[0, 4 * group + b]] += shift;
        }
        let a = params.grouped_softmax(&logits);
        let b = params.grouped_softmax(&shifted);
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
