//! Forward versus forward+backward time for one default-size mini-batch.

use std::time::Instant;

use insitu_rnn::{Batch, Mode, Model, ModelSpec};
use ndarray::Array2;

fn main() {
    let x = Array2::from_shape_fn((100 * 32, 9), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
    let batch = Batch::from_array(x, 100, 32).unwrap();
    let labels: Vec<usize> = (0..32).map(|i| i % 3).collect();
    for spec in [ModelSpec::gru(), ModelSpec::lstm()] {
        let model = Model::new(&spec, 1).unwrap();
        let reps = 20;
        let t = Instant::now();
        for _ in 0..reps {
            model.forward(&batch, Mode::Train).unwrap();
        }
        let fwd = t.elapsed().as_secs_f64() / reps as f64;
        let t = Instant::now();
        for _ in 0..reps {
            model.loss_and_grads(&batch, &labels, 0).unwrap();
        }
        let both = t.elapsed().as_secs_f64() / reps as f64;
        println!("{}: forward {:.1} ms, forward+backward {:.1} ms", spec.name, fwd * 1e3, both * 1e3);
    }
}
