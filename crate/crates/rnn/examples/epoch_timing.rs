//! Times one cross-validation fold of each preset on a simulated population.
//!
//! `cargo run --release -p insitu-rnn --example epoch_timing [hidden] [epochs]`

use std::time::Instant;

use insitu_core::dataset::{make_windows, stratified_kfold, WindowConfig};
use insitu_core::mechanisms::MechanismId;
use insitu_core::simulator::{population, simulate_session, DEFAULT_USERS};
use insitu_rnn::{fit, ModelSpec, TrainConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let hidden: usize = args.next().map_or(64, |a| a.parse().expect("hidden"));
    let epochs: usize = args.next().map_or(2, |a| a.parse().expect("epochs"));
    let start = Instant::now();
    let mut windows = Vec::new();
    for spec in population(MechanismId::ThreeButton, DEFAULT_USERS, 180.0, 7) {
        let s = simulate_session(&spec).unwrap();
        windows.extend(make_windows(&s.bundle.fused(), &WindowConfig::default(), &spec.user_id, spec.mechanism).unwrap());
    }
    println!("{} windows in {:.2}s", windows.len(), start.elapsed().as_secs_f64());
    let plan = stratified_kfold(&windows, 10, 1).unwrap();
    let train: Vec<_> = plan.train_indices(0).into_iter().map(|i| &windows[i]).collect();
    let config = TrainConfig { epochs, ..TrainConfig::default() };
    for spec in [ModelSpec::gru(), ModelSpec::lstm(), ModelSpec::stacked()] {
        let spec = spec.with_hidden(hidden);
        let (_, hist) = fit(&train, &spec, &config, 1, 0).unwrap();
        let secs: Vec<String> = hist.iter().map(|e| format!("{:.2}s loss {:.3} acc {:.3}", e.seconds, e.loss, e.accuracy)).collect();
        println!("{}: {}", spec.name, secs.join(" | "));
    }
}
