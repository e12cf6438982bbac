//! Acceptance criteria, checked in sequence. Prints one PASS/FAIL line per
//! criterion, then fails if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use clap::Parser;
use insitu_cli::compare::cmd_compare;
use insitu_cli::config::PipelineConfig;
use insitu_cli::pipeline::{cross_validate, fold_plan, randomise_labels, simulated_datasets};
use insitu_core::dataset::{make_windows, Overlap, WindowConfig, CHANNELS};
use insitu_core::golden::bundled;
use insitu_core::mechanisms::{replay, InputEvent, InputKind, MechanismConfig, MechanismId, BUTTON_A, BUTTON_B};
use insitu_core::stream::{ActivityLabel, LabelledSample, SensorFrame};
use insitu_rnn::{fit, Batch, CellKind, Model, ModelSpec, TrainConfig};
use insitu_stats::comparison::mcnemar_counts;
use insitu_stats::report::{mcnemar_grid, omnibus_table, OmnibusRow};
use insitu_stats::{chi2_sf, cochran_q, rm_anova_f, CorrectnessMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- gradients

const FD_STEP: f64 = 1e-5;
const FD_TOLERANCE: f64 = 1e-4;
const FD_FLOOR: f64 = 1e-6;
const GRADIENT_BUDGET_S: f64 = 30.0;

fn fd_spec(cells: &[CellKind], norm: bool) -> ModelSpec {
    ModelSpec {
        name: "fd".into(),
        cells: cells.to_vec(),
        hidden: 8,
        input_dim: CHANNELS,
        classes: 3,
        input_norm: norm,
        head_norm: norm,
    }
}

fn worst_gradient_error(spec: &ModelSpec, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::new(spec, seed).unwrap();
    let names = model.params.names();
    for (name, mut t) in names.iter().zip(model.params.tensors_mut()) {
        if name.contains(".bn.") {
            t.mapv_inplace(|v| v + rng.gen_range(-0.3..0.3));
        }
    }
    let seqs: Vec<Vec<[f64; CHANNELS]>> = (0..4)
        .map(|_| (0..20).map(|_| std::array::from_fn(|_| rng.gen_range(-1.5..1.5))).collect())
        .collect();
    let refs: Vec<&[[f64; CHANNELS]]> = seqs.iter().map(|s| s.as_slice()).collect();
    let batch = Batch::from_sequences(&refs).unwrap();
    let labels = [0, 2, 1, 2];
    let grads = model.loss_and_grads(&batch, &labels, 0).unwrap().grads;
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.iter().copied().collect()).collect();
    let mut worst: f64 = 0.0;
    for (k, a_k) in analytic.iter().enumerate() {
        for (i, &a) in a_k.iter().enumerate() {
            let original = model.params.tensors()[k].iter().nth(i).copied().unwrap();
            let mut loss_at = |v: f64| {
                *model.params.tensors_mut()[k].iter_mut().nth(i).unwrap() = v;
                model.loss_and_grads(&batch, &labels, 0).unwrap().loss
            };
            let numeric = (loss_at(original + FD_STEP) - loss_at(original - FD_STEP)) / (2.0 * FD_STEP);
            loss_at(original);
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR));
        }
    }
    worst
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let cases = [
        ("gru", fd_spec(&[CellKind::Gru, CellKind::Gru], false)),
        ("lstm", fd_spec(&[CellKind::Lstm, CellKind::Lstm], false)),
        ("stacked", fd_spec(&[CellKind::Lstm, CellKind::Gru], false)),
        ("gru+bn", fd_spec(&[CellKind::Gru, CellKind::Gru], true)),
        ("stacked+bn", fd_spec(&[CellKind::Lstm, CellKind::Gru], true)),
    ];
    let mut detail = Vec::new();
    for (seed, (name, spec)) in cases.iter().enumerate() {
        let err = worst_gradient_error(spec, seed as u64 + 1);
        ensure(err < FD_TOLERANCE, || format!("{name}: relative error {err:e}"))?;
        detail.push(format!("{name} {err:.1e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < GRADIENT_BUDGET_S, || format!("took {secs:.1} s"))?;
    Ok(format!("{} in {secs:.1} s", detail.join(", ")))
}

// ---------------------------------------------------------------- statistics

/// Repeated-measures ANOVA from sums of squares about the means.
fn two_pass_anova(x: &[Vec<f64>]) -> f64 {
    let (n, l) = (x.len(), x[0].len());
    let grand = x.iter().flatten().sum::<f64>() / (n * l) as f64;
    let row: Vec<f64> = x.iter().map(|r| r.iter().sum::<f64>() / l as f64).collect();
    let col: Vec<f64> = (0..l).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let ss_cols: f64 = col.iter().map(|m| n as f64 * (m - grand).powi(2)).sum();
    let mut ss_res = 0.0;
    for i in 0..n {
        for j in 0..l {
            ss_res += (x[i][j] - row[i] - col[j] + grand).powi(2);
        }
    }
    (ss_cols / (l - 1) as f64) / (ss_res / ((l - 1) * (n - 1)) as f64)
}

fn statistics_oracles() -> Outcome {
    let fixture = CorrectnessMatrix::from_bits(&[&[1, 1, 0], &[1, 0, 0], &[1, 1, 1], &[0, 0, 0]]).unwrap();
    let q = cochran_q(&fixture).unwrap();
    ensure(q.statistic == 3.0, || format!("Q = {}", q.statistic))?;
    let e = (-1.5f64).exp();
    ensure((q.p_value - e).abs() <= 1e-6, || format!("Q p = {}", q.p_value))?;

    let m = mcnemar_counts(5, 1);
    ensure(m.p_value == 0.21875, || format!("McNemar p = {}", m.p_value))?;

    for i in 0..=2000 {
        let x = i as f64 * 0.01;
        let p = chi2_sf(x, 2.0).unwrap();
        ensure((p - (-x / 2.0).exp()).abs() <= 1e-12, || format!("chi2_sf({x}, 2) = {p}"))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let (n, l) = (rng.gen_range(2..60), rng.gen_range(2..6));
        let rows: Vec<Vec<bool>> = (0..n).map(|_| (0..l).map(|_| rng.gen_bool(0.6)).collect()).collect();
        let cm = CorrectnessMatrix::new((0..l).map(|j| format!("m{j}")).collect(), rows.clone()).unwrap();
        let ours = rm_anova_f(&cm).unwrap();
        if ours.degenerate {
            continue;
        }
        let x: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&b| b as u8 as f64).collect()).collect();
        let oracle = two_pass_anova(&x);
        let err = (ours.statistic - oracle).abs() / oracle.max(1.0);
        worst = worst.max(err);
    }
    ensure(worst <= 1e-10, || format!("ANOVA relative error {worst:e}"))?;
    Ok(format!("Q 3.0, p e^-1.5, McNemar 0.21875, chi2 df 2 on [0,20], ANOVA err {worst:.1e}"))
}

// ---------------------------------------------------------------- windowing

fn constant_stream(n: usize) -> Vec<LabelledSample> {
    (0..n)
        .map(|k| LabelledSample {
            frame: SensorFrame::from_values(k as u64, [0.0; 9]),
            label: Some(ActivityLabel::Walking),
        })
        .collect()
}

fn windowing() -> Outcome {
    let cfg = WindowConfig {
        length: 100,
        overlap: Overlap::Samples(20),
        purity_min: 0.6,
    };
    let w = make_windows(&constant_stream(1000), &cfg, "u", MechanismId::App).unwrap();
    let starts: Vec<u64> = w.iter().map(|w| w.start_ms).collect();
    ensure(starts == (0..12).map(|k| k * 80).collect::<Vec<_>>(), || format!("starts {starts:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let n = rng.gen_range(0..3000);
        let len = rng.gen_range(1..300);
        let overlap = rng.gen_range(0..len);
        let step = len - overlap;
        let expected = if n < len { 0 } else { (n - len) / step + 1 };
        let cfg = WindowConfig {
            length: len,
            overlap: Overlap::Samples(overlap),
            purity_min: 0.6,
        };
        let got = make_windows(&constant_stream(n), &cfg, "u", MechanismId::App).unwrap().len();
        ensure(got == expected, || format!("N {n} T {len} overlap {overlap}: {got} windows, expected {expected}"))?;
    }
    Ok("12 windows at 0..880 step 80; 1000 random (N, T, overlap) match the closed form".into())
}

// ---------------------------------------------------------------- mechanisms

const FUZZ_SEQUENCES: usize = 10_000;

/// Emissions of the touch mechanism derived from level runs: a run entered
/// at `te` emits at `te + hold` once any reading arrives at or after then.
fn touch_oracle(inputs: &[InputEvent], cfg: &MechanismConfig) -> Vec<(u64, ActivityLabel)> {
    let level = |raw: u16| (raw > 0).then(|| cfg.touch.level(raw));
    let mut out = Vec::new();
    let mut run: Option<(u8, u64, bool)> = None;
    for ev in inputs {
        let InputKind::Force(raw) = ev.kind else { continue };
        if let Some((l, te, done)) = run.as_mut() {
            if !*done && ev.t_ms >= *te + cfg.touch.hold_ms {
                *done = true;
                out.push((*te + cfg.touch.hold_ms, insitu_core::mechanisms::TouchConfig::label_of_level(*l)));
            }
        }
        let lv = level(raw);
        if lv != run.map(|r| r.0) {
            run = lv.map(|l| (l, ev.t_ms, false));
        }
    }
    out
}

fn touch_case(rng: &mut ChaCha8Rng, monotone: bool) -> Vec<InputEvent> {
    let mut t = 0;
    let mut raw: u16 = 0;
    let mut inputs = vec![InputEvent::new(0, InputKind::Force(0))];
    for _ in 0..rng.gen_range(1..60) {
        t += rng.gen_range(1..150);
        raw = if monotone {
            (raw + rng.gen_range(0..60)).min(1023)
        } else {
            rng.gen_range(0..=1023)
        };
        inputs.push(InputEvent::new(t, InputKind::Force(raw)));
    }
    inputs
}

fn two_button_case(rng: &mut ChaCha8Rng) -> Vec<InputEvent> {
    let mut t = 0;
    (0..rng.gen_range(1..60))
        .map(|_| {
            t += rng.gen_range(0..400);
            let id = rng.gen_range(0..2u8);
            let kind = if rng.gen_bool(0.6) { InputKind::ButtonDown(id) } else { InputKind::ButtonUp(id) };
            InputEvent::new(t, kind)
        })
        .collect()
}

fn mechanisms() -> Outcome {
    let vectors = bundled();
    for (name, v) in &vectors {
        v.replay().map_err(|e| format!("{name}: {e}"))?;
    }
    let cfg = MechanismConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..FUZZ_SEQUENCES / 2 {
        let monotone = case % 2 == 0;
        let inputs = touch_case(&mut rng, monotone);
        let got: Vec<_> = replay(MechanismId::Touch, cfg, &inputs)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|e| (e.t_ms, e.label))
            .collect();
        ensure(got == touch_oracle(&inputs, &cfg), || format!("touch case {case}: {got:?}"))?;
        if monotone {
            let levels: Vec<u8> = got.iter().map(|e| insitu_core::mechanisms::TouchConfig::level_of_label(e.1)).collect();
            ensure(levels.windows(2).all(|w| w[0] < w[1]), || format!("touch ramp {case} went back: {got:?}"))?;
        }
    }
    let tb = cfg.two_button;
    for case in 0..FUZZ_SEQUENCES / 2 {
        let inputs = two_button_case(&mut rng);
        let id = if case % 2 == 0 { MechanismId::TwoAdjacent } else { MechanismId::TwoOpposite };
        let out = replay(id, cfg, &inputs).map_err(|e| e.to_string())?;
        for w in out.windows(2) {
            ensure(w[1].t_ms - w[0].t_ms >= tb.lockout_ms, || format!("{id} case {case}: lockout broken {w:?}"))?;
        }
        let downs = |b: u8| inputs.iter().filter(move |i| i.kind == InputKind::ButtonDown(b)).map(|i| i.t_ms);
        for e in &out {
            let ok = if e.label == ActivityLabel::Walking {
                downs(BUTTON_A).any(|a| downs(BUTTON_B).any(|b| a.abs_diff(b) <= tb.simultaneity_window_ms && a.max(b) == e.t_ms))
            } else {
                inputs
                    .iter()
                    .any(|i| matches!(i.kind, InputKind::ButtonDown(_)) && i.t_ms + tb.simultaneity_window_ms == e.t_ms)
            };
            ensure(ok, || format!("{id} case {case}: unexplained emission {e:?}"))?;
        }
    }
    Ok(format!("{} golden vectors bit-exact; {FUZZ_SEQUENCES} fuzzed sequences hold", vectors.len()))
}

// ---------------------------------------------------------------- end to end

const E2E_MIN_ACCURACY: f64 = 0.85;
const CHANCE: f64 = 1.0 / 3.0;
const CHANCE_BAND: f64 = 0.08;
const E2E_BUDGET_S: f64 = 600.0;

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let config = PipelineConfig {
        mechanisms: vec![MechanismId::ThreeButton],
        ..PipelineConfig::default()
    };
    let train = config.train_config();
    let spec = ModelSpec::gru();
    let windows = simulated_datasets(&config).map_err(|e| e.to_string())?.remove(0).windows;
    let plan = fold_plan(&windows, &train).map_err(|e| e.to_string())?;
    let (_, real) = cross_validate(&windows, &spec, &train, &plan).map_err(|e| e.to_string())?;
    let shuffled = randomise_labels(&windows, config.seed);
    let plan = fold_plan(&shuffled, &train).map_err(|e| e.to_string())?;
    let (_, control) = cross_validate(&shuffled, &spec, &train, &plan).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let (acc, chance) = (real.mean_accuracy(), control.mean_accuracy());
    let detail = format!(
        "{} windows, accuracy {acc:.3}, control {chance:.3}, {secs:.0} s",
        windows.len()
    );
    ensure(acc >= E2E_MIN_ACCURACY, || detail.clone())?;
    ensure((chance - CHANCE).abs() <= CHANCE_BAND, || detail.clone())?;
    ensure(secs < E2E_BUDGET_S, || detail.clone())?;
    Ok(detail)
}

fn noise_free() -> Outcome {
    let config = PipelineConfig {
        users: 4,
        mechanisms: vec![MechanismId::ThreeButton],
        noise_free: true,
        ..PipelineConfig::default()
    };
    let train = config.train_config();
    let windows = simulated_datasets(&config).map_err(|e| e.to_string())?.remove(0).windows;
    let plan = fold_plan(&windows, &train).map_err(|e| e.to_string())?;
    let (_, h) = cross_validate(&windows, &ModelSpec::gru(), &train, &plan).map_err(|e| e.to_string())?;
    let detail = format!("{} windows, {} epochs, accuracy {:.3}", windows.len(), train.epochs, h.mean_accuracy());
    ensure(h.mean_accuracy() == 1.0, || format!("{detail}, folds {:?}", h.fold_accuracies()))?;
    Ok(detail)
}

// ---------------------------------------------------------------- speed

const SPEED_RUNS: u64 = 5;

fn speed() -> Outcome {
    let config = PipelineConfig {
        users: 1,
        session_s: 120.0,
        mechanisms: vec![MechanismId::ThreeButton],
        ..PipelineConfig::default()
    };
    let windows = simulated_datasets(&config).map_err(|e| e.to_string())?.remove(0).windows;
    let refs: Vec<_> = windows.iter().take(96).collect();
    let train = TrainConfig {
        epochs: 1,
        recalibrate_norm: false,
        ..TrainConfig::default()
    };
    let epoch_s = |spec: &ModelSpec, seed| fit(&refs, spec, &train, seed, 0).map(|r| r.1[0].seconds);
    let (mut gru, mut lstm) = (0.0, 0.0);
    for seed in 0..SPEED_RUNS {
        gru += epoch_s(&ModelSpec::gru(), seed).map_err(|e| e.to_string())? / SPEED_RUNS as f64;
        lstm += epoch_s(&ModelSpec::lstm(), seed).map_err(|e| e.to_string())? / SPEED_RUNS as f64;
    }
    let detail = format!("mean epoch GRU {gru:.3} s, LSTM {lstm:.3} s, hidden {}", ModelSpec::DEFAULT_HIDDEN);
    ensure(gru < lstm, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- reports

fn tiny_config() -> PipelineConfig {
    PipelineConfig {
        seed: 8,
        users: 2,
        session_s: 60.0,
        mechanisms: vec![MechanismId::TwoAdjacent, MechanismId::App],
        hidden: 8,
        train: TrainConfig {
            epochs: 2,
            folds: 2,
            ..TrainConfig::default()
        },
        ..PipelineConfig::default()
    }
}

fn report_shape() -> Outcome {
    let config = tiny_config();
    let data = simulated_datasets(&config).map_err(|e| e.to_string())?;
    let results = cmd_compare(&data, &config.specs().unwrap(), &config.train_config(), config.alpha).map_err(|e| e.to_string())?;
    let r = results.report().map_err(|e| e.to_string())?;
    let (t, m) = (data.len(), 3);
    ensure(r.accuracy.headers == ["technique", "model", "accuracy_mean", "accuracy_std"], || "accuracy headers".into())?;
    ensure(r.accuracy.rows.len() == t * m, || "accuracy rows".into())?;
    ensure(r.curves.headers == ["technique", "model", "epoch", "loss", "accuracy"], || "curve headers".into())?;
    ensure(r.curves.rows.len() == t * m * config.train.epochs, || "curve rows".into())?;
    ensure(r.f1.headers == ["technique", "model", "downstairs", "walking", "upstairs"], || "F1 headers".into())?;
    ensure(r.f1.rows.len() == t * m, || "F1 rows".into())?;
    ensure(r.omnibus.headers == ["technique", "Q", "Q_p", "F", "F_p"], || "omnibus headers".into())?;
    ensure(r.omnibus.rows.len() == t, || "omnibus rows".into())?;
    ensure(r.mcnemar.len() == t, || "one grid per technique".into())?;
    for (_, g) in &r.mcnemar {
        ensure(g.rows.len() == m && (0..m).all(|i| g.rows[i][i + 1] == "NA"), || "grid diagonal".into())?;
        ensure((0..m).all(|i| (0..m).all(|j| g.rows[i][j + 1] == g.rows[j][i + 1])), || "grid symmetry".into())?;
    }

    let row = omnibus_table(
        &[OmnibusRow {
            technique: "app",
            q: 13.241,
            q_p: 0.001,
            f: 6.7,
            f_p: 0.001,
        }],
        6,
    );
    ensure(row.cell(0, "Q") == Some("13.241") && row.cell(0, "Q_p") == Some("0.001"), || format!("{:?}", row.rows))?;
    let grid = mcnemar_grid("pairs", &["GRU", "LSTM", "GRU-LSTM"], |i, j| if (i, j) == (0, 1) { 0.228 } else { 0.5 });
    ensure(
        grid.rows[0][2] == "0.228" && grid.rows[1][1] == "0.228" && grid.rows[0][1] == "NA",
        || format!("{:?}", grid.rows),
    )?;
    Ok(format!("{t} techniques x {m} models: accuracy, curves, F1, Q/F, McNemar; fixtures 13.241/0.001 and 0.228"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("tiny.toml");
    std::fs::write(&config, tiny_config().to_toml()).unwrap();
    let run_all = |tag: &str| -> Result<std::path::PathBuf, String> {
        let data = dir.path().join(format!("data_{tag}"));
        let out = dir.path().join(format!("out_{tag}"));
        for args in [
            vec!["simulate", "--out", data.to_str().unwrap()],
            vec!["compare", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()],
        ] {
            let argv = ["insitu", "--seed", "31", "--config", config.to_str().unwrap()].into_iter().chain(args);
            insitu_cli::run(insitu_cli::Cli::try_parse_from(argv).unwrap()).map_err(|e| format!("{e:#}"))?;
        }
        Ok(out)
    };
    let (a, b) = (run_all("a")?, run_all("b")?);
    let mut files: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    for f in &files {
        let (x, y) = (std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        ensure(x == y, || format!("{} differs", f.to_string_lossy()))?;
    }
    Ok(format!("{} report files identical across re-runs", files.len()))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient oracle", gradient_oracle),
        ("statistics oracles", statistics_oracles),
        ("windowing exactness", windowing),
        ("mechanism golden vectors and fuzzing", mechanisms),
        ("end-to-end sanity", end_to_end),
        ("noise-free sanity", noise_free),
        ("speed property", speed),
        ("report-shape reproduction", report_shape),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                println!("FAIL {name}: {why}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
