use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use insitu_core::dataset::{dump_windows_jsonl, split_by_user, user_ids, Window};
use insitu_core::mechanisms::MechanismId;
use insitu_core::stream::{emit_csv, ActivityLabel, StreamMeta, DEFAULT_SAMPLE_RATE_HZ};
use insitu_rnn::{fit, Checkpoint, ModelSpec, TrainHistory};
use insitu_stats::confusion;
use insitu_stats::report::{fmt3, Table};

use crate::compare::{cmd_compare, CompareResults};
use crate::config::PipelineConfig;
use crate::pipeline::{cross_validate, datasets_from_dir, fold_plan, read_csv, read_dataset_dir, simulate, simulated_datasets, write_sessions, Dataset};
use crate::rates::{bundle_stats, rates_table, stress_stats};
use crate::serve::{bind, serve, SensorSource, ServeOptions};

#[derive(Debug, Parser)]
#[command(name = "insitu", version, about = "Simulate, label, train and compare activity recognition models")]
pub struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML pipeline config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (or file, for `serve`).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset directory of `<mechanism>/<user>.csv`; simulated when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate labelled sessions into `<out>/<mechanism>/<user>.csv`.
    Simulate,
    /// Validate one CSV session and write it back in canonical form.
    Ingest {
        csv: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long)]
        mechanism: MechanismId,
        #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE_HZ)]
        rate: f64,
    },
    /// Cut sessions into labelled windows, one JSON line per window.
    Windows(DataArgs),
    /// Cross-validate one model per mechanism and save fold checkpoints.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "gru")]
        model: String,
        /// Leave-one-user-out accuracy instead of k-fold.
        #[arg(long)]
        per_user: bool,
    },
    /// Score a saved checkpoint on a dataset.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train every model on every mechanism and write the comparison report.
    Compare(DataArgs),
    /// Labelling-rate tables from recorded sessions, or scripted stress input.
    Rates {
        #[command(flatten)]
        data: DataArgs,
        /// Replace sessions by as-fast-as-possible input of this many seconds.
        #[arg(long)]
        stress: Option<f64>,
        #[arg(long, default_value_t = 250)]
        cadence_ms: u64,
    },
    /// Serve the live labelling protocol; stop writes the CSV to `--out`.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "three_button")]
        mechanism: MechanismId,
        #[arg(long, value_enum, default_value_t = SensorSource::Simulated)]
        sensor: SensorSource,
        /// WebSocket text frames instead of raw TCP lines.
        #[arg(long)]
        ws: bool,
    },
    /// Re-render the report of a saved comparison.
    Report { results: PathBuf },
}

impl Cli {
    pub fn pipeline_config(&self) -> anyhow::Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }
}

fn datasets(args: &DataArgs, config: &PipelineConfig) -> anyhow::Result<Vec<Dataset>> {
    match &args.data {
        Some(dir) => datasets_from_dir(dir, config),
        None => simulated_datasets(config),
    }
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let config = cli.pipeline_config()?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Simulate => {
            let mut n = 0;
            for &m in &config.mechanisms {
                n += write_sessions(out, &simulate(&config, m)?)?.len();
            }
            println!("wrote {n} sessions under {}", out.display());
        }
        Command::Ingest {
            csv,
            user,
            mechanism,
            rate,
        } => {
            let meta = StreamMeta {
                user_id: user.clone(),
                mechanism: *mechanism,
                sample_rate_hz: *rate,
            };
            let bundle = read_csv(csv, meta)?;
            bundle.validate()?;
            let path = out.join(mechanism.name()).join(format!("{user}.csv"));
            write(&path, &emit_csv(&bundle))?;
            println!(
                "{}: {} frames, {} label events -> {}",
                csv.display(),
                bundle.frames.len(),
                bundle.events.len(),
                path.display()
            );
        }
        Command::Windows(args) => {
            let mut table = Table::new("Windows", &["mechanism", "windows", "downstairs", "walking", "upstairs"]);
            fs::create_dir_all(out)?;
            for d in datasets(args, &config)? {
                let path = out.join(format!("windows_{}.jsonl", d.mechanism.name()));
                let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                dump_windows_jsonl(&d.windows, BufWriter::new(file))?;
                let mut row = vec![d.mechanism.name().to_string(), d.windows.len().to_string()];
                row.extend(
                    ActivityLabel::ALL
                        .iter()
                        .map(|&l| d.windows.iter().filter(|w| w.label == l).count().to_string()),
                );
                table.push(row);
            }
            print!("{}", table.to_text());
        }
        Command::Train { data, model, per_user } => {
            let spec = ModelSpec::preset(model)?.with_hidden(config.hidden);
            let train_config = config.train_config();
            for d in datasets(data, &config)? {
                if *per_user {
                    let table = per_user_table(&d, &spec, &config)?;
                    write(&out.join(format!("per_user_{}_{}.csv", d.mechanism.name(), spec.name)), &table.to_csv())?;
                    print!("{}", table.to_text());
                    continue;
                }
                let plan = fold_plan(&d.windows, &train_config)?;
                let (models, history) = cross_validate(&d.windows, &spec, &train_config, &plan)?;
                let dir = out.join("checkpoints").join(d.mechanism.name()).join(&spec.name);
                fs::create_dir_all(&dir)?;
                for (k, fm) in models.iter().enumerate() {
                    Checkpoint::new(fm, train_config.fingerprint()).save(&dir.join(format!("fold{k}.ckpt")))?;
                }
                write(&dir.join("history.json"), &serde_json::to_string(&history)?)?;
                println!("{}", summary_line(d.mechanism, &history));
            }
        }
        Command::Evaluate { data, checkpoint } => {
            let fm = Checkpoint::load(checkpoint)?.into_fold_model();
            let mut table = Table::new(
                format!("Evaluation of {}", checkpoint.display()),
                &["mechanism", "windows", "accuracy", "macro_f1"],
            );
            for d in datasets(data, &config)? {
                let (acc, preds) = fm.evaluate(&d.windows)?;
                let truth: Vec<usize> = d.windows.iter().map(|w| w.label.index()).collect();
                let cm = confusion(&preds, &truth, ActivityLabel::COUNT)?;
                table.push(vec![
                    d.mechanism.name().into(),
                    d.windows.len().to_string(),
                    fmt3(acc),
                    fmt3(cm.macro_f1()),
                ]);
            }
            print!("{}", table.to_text());
        }
        Command::Compare(args) => {
            let results = cmd_compare(&datasets(args, &config)?, &config.specs()?, &config.train_config(), config.alpha)?;
            results.save(out)?;
            let report = results.report()?;
            report.write(out)?;
            print!("{}", report.to_text());
        }
        Command::Rates {
            data,
            stress,
            cadence_ms,
        } => {
            let (title, rows) = match (stress, &data.data) {
                (Some(seconds), _) => (
                    format!("Labelling rates under {seconds} s of scripted input every {cadence_ms} ms"),
                    config
                        .mechanisms
                        .iter()
                        .map(|&m| Ok((m, stress_stats(m, *seconds, *cadence_ms)?)))
                        .collect::<anyhow::Result<Vec<_>>>()?,
                ),
                (None, Some(dir)) => (
                    format!("Labelling rates in {}", dir.display()),
                    read_dataset_dir(dir, DEFAULT_SAMPLE_RATE_HZ)?
                        .into_iter()
                        .map(|(m, bundles)| Ok((m, bundle_stats(&bundles)?)))
                        .collect::<anyhow::Result<Vec<_>>>()?,
                ),
                (None, None) => (
                    "Labelling rates in simulated sessions".to_string(),
                    config
                        .mechanisms
                        .iter()
                        .map(|&m| {
                            let bundles: Vec<_> = simulate(&config, m)?.into_iter().map(|s| s.bundle).collect();
                            Ok((m, bundle_stats(&bundles)?))
                        })
                        .collect::<anyhow::Result<Vec<_>>>()?,
                ),
            };
            let table = rates_table(&title, &rows);
            write(&out.join("rates.csv"), &table.to_csv())?;
            print!("{}", table.to_text());
        }
        Command::Serve {
            port,
            mechanism,
            sensor,
            ws,
        } => {
            let output = if out.extension().is_some() {
                out.to_path_buf()
            } else {
                out.join("live.csv")
            };
            let opts = ServeOptions {
                mechanism: *mechanism,
                output,
                sensor: *sensor,
                websocket: *ws,
                seed: config.seed,
                max_sessions: None,
            };
            let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
            rt.block_on(async {
                let listener = bind(*port).await?;
                eprintln!("listening on {}", listener.local_addr()?);
                serve(listener, opts).await
            })?;
        }
        Command::Report { results } => {
            let report = CompareResults::load(results)?.report()?;
            report.write(out)?;
            print!("{}", report.to_text());
        }
    }
    Ok(())
}

fn summary_line(mechanism: MechanismId, h: &TrainHistory) -> String {
    format!(
        "{} {}: accuracy {} ± {} over {} folds",
        mechanism.name(),
        h.spec,
        fmt3(h.mean_accuracy()),
        fmt3(h.std_accuracy()),
        h.folds.len()
    )
}

/// Accuracy on each user's windows of a model trained on everyone else.
pub fn per_user_table(d: &Dataset, spec: &ModelSpec, config: &PipelineConfig) -> anyhow::Result<Table> {
    let train_config = config.train_config();
    let mut table = Table::new(
        format!("Per-user accuracy, {} {}", d.mechanism.name(), spec.name),
        &["user", "windows", "accuracy"],
    );
    for (i, user) in user_ids(&d.windows).iter().enumerate() {
        let (mine, rest) = split_by_user(&d.windows, user)?;
        if rest.is_empty() {
            bail!("leave-one-user-out needs at least two users");
        }
        let refs: Vec<&Window> = rest.iter().collect();
        let (fm, _) = fit(&refs, spec, &train_config, insitu_rnn::fold_seed(train_config.seed, i), i)?;
        let (acc, _) = fm.evaluate(&mine)?;
        table.push(vec![user.clone(), mine.len().to_string(), fmt3(acc)]);
    }
    Ok(table)
}
