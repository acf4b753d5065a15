mod common;

use common::*;
use mpa_core::data::Criterion;
use mpa_core::models::{ModelKind, DIST_CHANNELS};
use mpa_core::tensorcore::{sgd_step, Graph, Mode, Tensor, Var};
use mpa_core::{Model, ModelSpec};

fn eval(model: &Model<f64>, inputs: &[Tensor<f64>]) -> Vec<f64> {
    model.predict(inputs).unwrap()
}

#[test]
fn identical_items_give_identical_outputs() {
    for kind in ModelKind::ALL {
        let spec = small_spec(kind, 3);
        let model = Model::<f64>::build(&spec).unwrap();
        let one = model_inputs(&spec, 1, 5);
        let twice: Vec<Tensor<f64>> = one
            .iter()
            .map(|t| {
                let mut shape = t.shape().to_vec();
                shape[0] = 2;
                Tensor::new(shape, [t.data(), t.data()].concat()).unwrap()
            })
            .collect();
        let y = eval(&model, &twice);
        assert_eq!(y.len(), 2);
        assert_eq!(y[0].to_bits(), y[1].to_bits(), "{kind}");
    }
}

#[test]
fn building_twice_gives_the_same_network() {
    for kind in ModelKind::ALL {
        let spec = small_spec(kind, 11);
        let a = Model::<f64>::build(&spec).unwrap();
        let b = Model::<f64>::build(&spec).unwrap();
        let inputs = model_inputs(&spec, 3, 1);
        assert_eq!(eval(&a, &inputs), eval(&b, &inputs), "{kind}");
        let c = Model::<f64>::build(&small_spec(kind, 12)).unwrap();
        assert_ne!(eval(&a, &inputs), eval(&c, &inputs), "{kind}: seed ignored");
    }
}

#[test]
fn zero_and_unit_inputs_stay_finite() {
    for kind in ModelKind::ALL {
        let spec = small_spec(kind, 2);
        let model = Model::<f64>::build(&spec).unwrap();
        for fill in [0.0, 1.0] {
            let inputs: Vec<Tensor<f64>> = model_inputs(&spec, 2, 0)
                .iter()
                .map(|t| Tensor::full(t.shape().to_vec(), fill))
                .collect();
            assert!(
                eval(&model, &inputs).iter().all(|v| v.is_finite()),
                "{kind} on {fill}"
            );
        }
    }
}

#[test]
fn joint_predictions_are_cosines() {
    for seed in 0..10 {
        let spec = small_spec(ModelKind::JointEmbed, seed);
        let model = Model::<f64>::build(&spec).unwrap();
        for y in eval(&model, &model_inputs(&spec, 4, seed)) {
            assert!((-1.0..=1.0).contains(&y), "{y}");
        }
    }
}

#[test]
fn joint_with_equal_encoders_and_inputs_predicts_one() {
    let spec = small_spec(ModelKind::JointEmbed, 4);
    let mut model = Model::<f64>::build(&spec).unwrap();
    let params = model.store_mut().params_mut();
    let perf: Vec<(String, Tensor<f64>)> = params
        .iter()
        .filter_map(|p| {
            p.name
                .strip_prefix("perf_encoder.")
                .map(|n| (n.to_string(), p.value.clone()))
        })
        .collect();
    assert!(!perf.is_empty());
    for (name, value) in perf {
        let p = params
            .iter_mut()
            .find(|p| p.name == format!("score_encoder.{name}"))
            .unwrap();
        p.value = value;
    }
    let inputs = model_inputs(&spec, 3, 9);
    let same = vec![inputs[0].clone(), inputs[0].clone()];
    for y in eval(&model, &same) {
        assert!((y - 1.0).abs() < 1e-12, "{y}");
    }
}

/// Gradient norm per parameter tensor after one backward in `mode`.
fn grad_norms(model: &Model<f64>, inputs: &[Tensor<f64>], mode: Mode) -> Vec<(String, f64)> {
    let mut m = model.clone();
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let y = m.forward(&mut g, &vars, mode, &mut rng(0)).unwrap();
    let t = g.constant(Tensor::full([inputs[0].shape()[0]], 0.5));
    let loss = g.mse_loss(y, t).unwrap();
    g.backward(loss).unwrap();
    let store = m.store_mut();
    store.zero_grad();
    store.accumulate_grads(&g).unwrap();
    store
        .params()
        .iter()
        .map(|p| p.name.clone())
        .zip(store.grad_norms())
        .collect()
}

#[test]
fn every_parameter_receives_gradient() {
    for kind in ModelKind::ALL {
        let spec = small_spec(kind, 6);
        let model = Model::<f64>::build(&spec).unwrap();
        let inputs = model_inputs(&spec, 4, 6);
        let train = grad_norms(&model, &inputs, Mode::Train);
        let eval = grad_norms(&model, &inputs, Mode::Eval);
        for ((name, norm), (_, eval_norm)) in train.iter().zip(&eval) {
            // a bias feeding train-mode batch norm is cancelled by the batch mean, so
            // its gradient there is zero by construction; it does reach it in eval mode
            if name.ends_with("conv.bias") && kind != ModelKind::DistMat {
                assert!(*norm < 1e-12, "{kind} {name}: {norm}");
                assert!(*eval_norm > 0.0, "{kind} {name} gets no eval-mode gradient");
            } else {
                assert!(*norm > 0.0, "{kind} {name} gets no gradient");
            }
        }
        if kind == ModelKind::JointEmbed {
            assert!(train
                .iter()
                .any(|(n, v)| n.starts_with("score_encoder") && *v > 0.0));
            assert!(train
                .iter()
                .any(|(n, v)| n.starts_with("perf_encoder") && *v > 0.0));
        }
    }
}

#[test]
fn one_sgd_step_lowers_the_batch_loss() {
    for kind in ModelKind::ALL {
        for seed in 0..10 {
            let spec = small_spec(kind, seed);
            let mut model = Model::<f64>::build(&spec).unwrap();
            let inputs = model_inputs(&spec, 4, 100 + seed);
            let targets = Tensor::from_fn(vec![4], |i| 0.2 + 0.2 * i as f64);
            let mask = 7;
            let mut g = Graph::new();
            let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
            let y = model.forward(&mut g, &vars, Mode::Train, &mut rng(mask)).unwrap();
            let t = g.constant(targets.clone());
            let loss = g.mse_loss(y, t).unwrap();
            g.backward(loss).unwrap();
            let before = g.value(loss).data()[0];
            let store = model.store_mut();
            store.zero_grad();
            store.accumulate_grads(&g).unwrap();
            sgd_step(store, 0.05);
            let (after, _) = model_loss(&model, &inputs, &targets, mask);
            assert!(after < before, "{kind} seed {seed}: {before} -> {after}");
        }
    }
}

#[test]
fn dist_mat_tells_perfect_from_hopeless_after_a_step() {
    let spec = small_spec(ModelKind::DistMat, 1);
    let mut model = Model::<f64>::build(&spec).unwrap();
    let s = spec.matrix_resolution.unwrap();
    let zeros = Tensor::zeros([1, 1, s, s]);
    let ones = Tensor::full([1, 1, s, s], 1.0);
    let both = Tensor::new([2, 1, s, s], [zeros.data(), ones.data()].concat()).unwrap();
    let mut g = Graph::new();
    let x = g.constant(both);
    let y = model.forward(&mut g, &[x], Mode::Train, &mut rng(0)).unwrap();
    let t = g.constant(Tensor::new([2], vec![1.0, 0.0]).unwrap());
    let loss = g.mse_loss(y, t).unwrap();
    g.backward(loss).unwrap();
    let store = model.store_mut();
    store.zero_grad();
    store.accumulate_grads(&g).unwrap();
    sgd_step(store, 0.05);
    let a = eval(&model, &[zeros])[0];
    let b = eval(&model, &[ones])[0];
    assert_ne!(a, b);
}

#[test]
fn dist_mat_handles_the_swept_resolutions() {
    for s in [400, 600, 900] {
        let spec = ModelSpec::dist_mat(s, Criterion::NoteAccuracy, 0);
        let model = Model::<f32>::build(&spec).unwrap();
        let x = Tensor::full([1, 1, s, s], 0.5f32);
        let y = model.predict(&[x]).unwrap();
        assert_eq!(y.len(), 1);
        assert!(y[0].is_finite());
    }
}

#[test]
fn wrong_input_shapes_are_rejected() {
    let pc = small_spec(ModelKind::PcBaseline, 0);
    let si = small_spec(ModelKind::SiConvNet, 0);
    let pc_model = Model::<f64>::build(&pc).unwrap();
    // the baseline has no score channel to feed
    assert!(pc_model.predict(&model_inputs(&si, 1, 0)).is_err());
    let dm = Model::<f64>::build(&small_spec(ModelKind::DistMat, 0)).unwrap();
    assert!(dm.predict(&[Tensor::zeros([1, 1, 16, 17])]).is_err());
    let joint = Model::<f64>::build(&small_spec(ModelKind::JointEmbed, 0)).unwrap();
    assert!(joint.predict(&model_inputs(&pc, 1, 0)).is_err());
}

#[test]
fn chunks_shorter_than_the_receptive_field_are_rejected() {
    for kind in [ModelKind::SiConvNet, ModelKind::JointEmbed, ModelKind::PcBaseline] {
        assert!(Model::<f64>::build(&ModelSpec::chunked(kind, 1.0, Criterion::Musicality, 0)).is_err());
    }
}

#[test]
fn parameter_counts_are_ordered() {
    let count = |k| Model::<f32>::build(&small_spec(k, 0)).unwrap().count_parameters();
    assert!(count(ModelKind::PcBaseline) < count(ModelKind::SiConvNet));
    assert_eq!(
        count(ModelKind::JointEmbed),
        2 * count(ModelKind::PcBaseline) - 2 * 17
    );
    let dm = count(ModelKind::DistMat);
    assert!((10_000..100_000).contains(&dm), "{dm}");
    assert!(DIST_CHANNELS == 4);
}

#[test]
fn save_and_load_reproduce_outputs_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ModelKind::ALL {
        let spec = small_spec(kind, 8);
        let mut model = Model::<f64>::build(&spec).unwrap();
        // move the running statistics off their initial values first
        let inputs = model_inputs(&spec, 3, 8);
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        model.forward(&mut g, &vars, Mode::Train, &mut rng(1)).unwrap();
        let path = dir.path().join(format!("{kind}.ckpt"));
        model.save(&path).unwrap();
        let back = Model::<f64>::load(&path).unwrap();
        let a: Vec<u64> = eval(&model, &inputs).iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = eval(&back, &inputs).iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b, "{kind}");
        assert_eq!(back.spec(), model.spec());
    }
}
