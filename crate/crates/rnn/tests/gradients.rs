use insitu_core::dataset::CHANNELS;
use insitu_rnn::{Batch, CellKind, Model, ModelSpec};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely.
const FLOOR: f64 = 1e-6;

fn tiny_batch(seed: u64) -> (Batch, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((20 * 4, CHANNELS), |_| rng.gen_range(-1.5..1.5));
    (Batch::from_array(x, 20, 4).unwrap(), vec![0, 2, 1, 2])
}

/// Perturbs batch-norm scales and shifts away from (1, 0) so their
/// gradients are exercised in a generic position.
fn jitter_norms(model: &mut Model, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = model.params.names();
    for (name, mut t) in names.iter().zip(model.params.tensors_mut()) {
        if name.contains(".bn.") {
            t.mapv_inplace(|v| v + rng.gen_range(-0.3..0.3));
        }
    }
}

/// Largest relative error between analytic and central-difference
/// gradients over every parameter.
fn max_relative_error(spec: &ModelSpec, seed: u64) -> (f64, String) {
    let mut model = Model::new(spec, seed).unwrap();
    jitter_norms(&mut model, seed + 1);
    let (batch, labels) = tiny_batch(seed + 2);
    let analytic = model.loss_and_grads(&batch, &labels, 0).unwrap().grads;
    let analytic: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.iter().copied().collect()).collect();
    let names = model.params.names();
    let mut worst = (0.0, String::new());
    for (k, name) in names.iter().enumerate() {
        let len = analytic[k].len();
        for i in 0..len {
            let original = model.params.tensors()[k].iter().nth(i).copied().unwrap();
            let set = |m: &mut Model, v: f64| {
                *m.params.tensors_mut()[k].iter_mut().nth(i).unwrap() = v;
            };
            set(&mut model, original + STEP);
            let plus = model.loss_and_grads(&batch, &labels, 0).unwrap().loss;
            set(&mut model, original - STEP);
            let minus = model.loss_and_grads(&batch, &labels, 0).unwrap().loss;
            set(&mut model, original);
            let numeric = (plus - minus) / (2.0 * STEP);
            let a = analytic[k][i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            if err > worst.0 {
                worst = (err, format!("{name}[{i}]: analytic {a:e}, numeric {numeric:e}"));
            }
        }
    }
    worst
}

fn tiny(kinds: &[CellKind], input_norm: bool, head_norm: bool) -> ModelSpec {
    ModelSpec {
        name: "tiny".into(),
        cells: kinds.to_vec(),
        hidden: 8,
        input_dim: CHANNELS,
        classes: 3,
        input_norm,
        head_norm,
    }
}

#[test]
fn gru_gradients_match_finite_differences() {
    let (err, at) = max_relative_error(&tiny(&[CellKind::Gru, CellKind::Gru], false, false), 1);
    assert!(err < TOLERANCE, "{err:e} at {at}");
}

#[test]
fn lstm_gradients_match_finite_differences() {
    let (err, at) = max_relative_error(&tiny(&[CellKind::Lstm, CellKind::Lstm], false, false), 2);
    assert!(err < TOLERANCE, "{err:e} at {at}");
}

#[test]
fn stacked_gradients_match_finite_differences() {
    let (err, at) = max_relative_error(&tiny(&[CellKind::Lstm, CellKind::Gru], false, false), 3);
    assert!(err < TOLERANCE, "{err:e} at {at}");
}

#[test]
fn batch_norm_gradients_match_finite_differences() {
    for (seed, kinds) in [(4, [CellKind::Gru, CellKind::Gru]), (5, [CellKind::Lstm, CellKind::Gru])] {
        let (err, at) = max_relative_error(&tiny(&kinds, true, true), seed);
        assert!(err < TOLERANCE, "{kinds:?}: {err:e} at {at}");
    }
}
