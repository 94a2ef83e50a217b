//! `reclaim`: command-line front end over `reclaim-core`.
//!
//! Every subcommand prints a line-oriented `key=value` report on stdout.
//! Exit status: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical or training failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ndarray::Axis;

use reclaim_core::analysis::{delta_w_similarity, diagnose, linear_cka};
use reclaim_core::calibration::{
    apply_gamma, estimate_gamma_alg, estimate_gamma_pcv_with, estimate_gamma_star, PcvConvention, PcvOptions,
};
use reclaim_core::data::{make_greedy_similar_split, make_random_split};
use reclaim_core::io;
use reclaim_core::metrics::{acc_report, ausuc, seen_unseen_curve};
use reclaim_core::ncm::{class_means, ncm_predict, ncm_report};
use reclaim_core::trainer::{fine_tune, random_gradcheck, run_toy_pipeline, toy_train_config, ToySpec};
use reclaim_core::{Error, Group, LabelPartition, LabeledFeatures, LabeledLogits, LinearHead, TrainMode};

#[derive(Parser)]
#[command(name = "reclaim", version, about = "Seen/absent class diagnostics and logit calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Accuracy family Acc_{A/B}, optionally after adding gamma to absent logits.
    Metrics {
        #[arg(long)]
        logits: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        gamma: f64,
    },
    /// Area under the exact seen-unseen curve.
    Ausuc {
        #[arg(long)]
        logits: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        #[arg(long)]
        curve_out: Option<PathBuf>,
    },
    /// Write calibrated predictions for a given gamma.
    Calibrate {
        #[arg(long)]
        logits: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        gamma: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate gamma by the average logit gap on fine-tuning data.
    Alg {
        #[arg(long)]
        train_logits: PathBuf,
        #[arg(long)]
        train_labels: PathBuf,
        #[arg(long)]
        partition: PathBuf,
    },
    /// Estimate gamma by pseudo cross-validation.
    Pcv {
        #[arg(long)]
        train_features: PathBuf,
        #[arg(long)]
        train_labels: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Which pseudo half is fine-tuned.
        #[arg(long, value_enum, default_value_t = ConventionArg::PseudoSeen)]
        convention: ConventionArg,
    },
    /// Gamma maximizing overall accuracy on labeled test data (upper bound).
    GammaStar {
        #[arg(long)]
        logits: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        partition: PathBuf,
    },
    /// Nearest class mean accuracy.
    Ncm {
        #[arg(long)]
        mean_features: PathBuf,
        #[arg(long)]
        mean_labels: PathBuf,
        #[arg(long)]
        eval_features: PathBuf,
        #[arg(long)]
        eval_labels: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        /// Evaluate a single label space on samples of that group.
        #[arg(long, value_enum, ignore_case = true)]
        restrict: Option<GroupArg>,
    },
    /// Linear CKA between the Gram matrices of two weight matrices.
    Cka {
        #[arg(long)]
        weights_a: PathBuf,
        #[arg(long)]
        weights_b: PathBuf,
        /// Rows to compare (default: all).
        #[arg(long, value_delimiter = ',')]
        rows: Option<Vec<usize>>,
    },
    /// Similarity of per-class weight updates within one group.
    DeltaW {
        #[arg(long)]
        pre: PathBuf,
        #[arg(long)]
        ft: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        #[arg(long, value_enum, ignore_case = true)]
        group: PairGroupArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weight norms, logit gaps and absent probability mass.
    Diagnose {
        #[arg(long)]
        logits: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        #[arg(long)]
        head: PathBuf,
    },
    /// Generate a fine-tuning/absent partition.
    Split {
        #[arg(long, value_enum)]
        mode: SplitMode,
        #[arg(long)]
        num_classes: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        class_means: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune a model on fine-tuning-class data.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        model_in: PathBuf,
        #[arg(long)]
        model_out: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Overrides the mode in the config file.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// History CSV path (default: `<model-out>.history.csv`).
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Run the 2-D toy experiment and write every artifact to a directory.
    Toy {
        #[arg(long)]
        outdir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Training config for both phases (default: the toy config).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        pairs: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    PseudoSeen,
    PseudoAbsent,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupArg {
    S,
    U,
    Y,
}

#[derive(Clone, Copy, ValueEnum)]
enum PairGroupArg {
    S,
    U,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitMode {
    Random,
    Greedy,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    FrozenClassifier,
    LinearProbe,
}

enum Failure {
    Usage(String),
    Core(Error),
    /// A check ran to completion and did not pass.
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CmdResult = Result<String, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
        Err(Failure::Numerical(report)) => {
            print!("{report}");
            ExitCode::from(3)
        }
    }
}

fn load_logits(logits: &Path, labels: &Path) -> Result<LabeledLogits, Error> {
    LabeledLogits::new(io::load_matrix(logits)?, io::load_labels(labels)?)
}

fn load_features(features: &Path, labels: &Path) -> Result<LabeledFeatures, Error> {
    LabeledFeatures::new(io::load_matrix(features)?, io::load_labels(labels)?)
}

/// A head from either a bare weight matrix or a full model file.
fn load_head(path: &Path) -> Result<LinearHead, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    if text.trim_start().starts_with('[') {
        Ok(io::parse_model(&text, path)?.head().clone())
    } else {
        LinearHead::new(io::parse_matrix(&text, path, 1)?)
    }
}

fn run(command: Command) -> CmdResult {
    match command {
        Command::Metrics {
            logits,
            labels,
            partition,
            gamma,
        } => {
            let l = load_logits(&logits, &labels)?;
            let p = io::load_partition(&partition)?;
            Ok(acc_report(&l, &p, gamma)?.to_report())
        }
        Command::Ausuc {
            logits,
            labels,
            partition,
            curve_out,
        } => {
            let l = load_logits(&logits, &labels)?;
            let p = io::load_partition(&partition)?;
            let curve = seen_unseen_curve(&l, &p)?;
            if let Some(out) = curve_out {
                io::write_text(&out, &curve.to_csv())?;
            }
            Ok(format!("ausuc={}\n", ausuc(&curve)))
        }
        Command::Calibrate {
            logits,
            labels,
            partition,
            gamma,
            out,
        } => {
            let l = load_logits(&logits, &labels)?;
            let p = io::load_partition(&partition)?;
            let pred = apply_gamma(&l, &p, gamma)?;
            io::save_labels(&pred, &out)?;
            let correct = pred.iter().zip(l.labels()).filter(|(a, b)| a == b).count();
            Ok(format!(
                "gamma={gamma}\nn={}\naccuracy={}\n",
                pred.len(),
                correct as f64 / pred.len() as f64
            ))
        }
        Command::Alg {
            train_logits,
            train_labels,
            partition,
        } => {
            let l = load_logits(&train_logits, &train_labels)?;
            let p = io::load_partition(&partition)?;
            Ok(estimate_gamma_alg(&l, &p)?.to_report())
        }
        Command::Pcv {
            train_features,
            train_labels,
            model,
            partition,
            config,
            repeats,
            seed,
            convention,
        } => {
            let f = load_features(&train_features, &train_labels)?;
            let m = io::load_model(&model)?;
            let p = io::load_partition(&partition)?;
            let cfg = io::load_train_config(&config)?;
            let options = PcvOptions {
                repeats,
                seed,
                convention: match convention {
                    ConventionArg::PseudoSeen => PcvConvention::PseudoSeen,
                    ConventionArg::PseudoAbsent => PcvConvention::PseudoAbsent,
                },
            };
            let est = estimate_gamma_pcv_with(&f, &m, &p, &cfg, &options)?;
            Ok(format!("{}convention={}\n", est.to_report(), options.convention))
        }
        Command::GammaStar {
            logits,
            labels,
            partition,
        } => {
            let l = load_logits(&logits, &labels)?;
            let p = io::load_partition(&partition)?;
            Ok(estimate_gamma_star(&l, &p)?.to_report())
        }
        Command::Ncm {
            mean_features,
            mean_labels,
            eval_features,
            eval_labels,
            partition,
            restrict,
        } => {
            let mf = load_features(&mean_features, &mean_labels)?;
            let ef = load_features(&eval_features, &eval_labels)?;
            let p = io::load_partition(&partition)?;
            let mut present: Vec<usize> = mf.labels().to_vec();
            present.sort_unstable();
            present.dedup();
            let means = class_means(&mf, &present)?;
            match restrict {
                None => Ok(ncm_report(&ef, &means, &p)?.to_report()),
                Some(g) => {
                    let group = match g {
                        GroupArg::S => Group::Seen,
                        GroupArg::U => Group::Absent,
                        GroupArg::Y => Group::All,
                    };
                    let classes = p.classes(group);
                    let keep: Vec<usize> = (0..ef.len()).filter(|&i| p.contains(group, ef.labels()[i])).collect();
                    if keep.is_empty() {
                        return Err(Error::EmptyGroup(format!("no evaluation samples labeled in {group}")).into());
                    }
                    let sub = ef.select(&keep);
                    let pred = ncm_predict(&sub, &means, classes)?;
                    let correct = pred.iter().zip(sub.labels()).filter(|(a, b)| a == b).count();
                    let sym = group.symbol().to_lowercase();
                    Ok(format!(
                        "acc_{sym}_{sym}={}\nn={}\n",
                        correct as f64 / keep.len() as f64,
                        keep.len()
                    ))
                }
            }
        }
        Command::Cka {
            weights_a,
            weights_b,
            rows,
        } => {
            let a = io::load_matrix(&weights_a)?;
            let b = io::load_matrix(&weights_b)?;
            let value = match rows {
                None => linear_cka(a.view(), b.view())?,
                Some(rows) => {
                    if let Some(&r) = rows.iter().find(|&&r| r >= a.nrows() || r >= b.nrows()) {
                        return Err(Failure::Usage(format!("row {r} out of range")));
                    }
                    linear_cka(a.select(Axis(0), &rows).view(), b.select(Axis(0), &rows).view())?
                }
            };
            Ok(format!("cka={value}\n"))
        }
        Command::DeltaW {
            pre,
            ft,
            partition,
            group,
            out,
        } => {
            let w_pre = load_head(&pre)?;
            let w_ft = load_head(&ft)?;
            let p = io::load_partition(&partition)?;
            let subset = match group {
                PairGroupArg::S => p.fine_tuning(),
                PairGroupArg::U => p.absent(),
            };
            let report = delta_w_similarity(&w_pre, &w_ft, subset)?;
            if let Some(out) = out {
                io::save_matrix(&report.matrix, &out)?;
            }
            Ok(report.to_report())
        }
        Command::Diagnose {
            logits,
            labels,
            partition,
            head,
        } => {
            let l = load_logits(&logits, &labels)?;
            let p = io::load_partition(&partition)?;
            let h = load_head(&head)?;
            Ok(diagnose(&l, &p, &h)?.to_report())
        }
        Command::Split {
            mode,
            num_classes,
            k,
            seed,
            class_means,
            out,
        } => {
            let p = match mode {
                SplitMode::Random => make_random_split(num_classes, k, seed)?,
                SplitMode::Greedy => {
                    let path = class_means
                        .ok_or_else(|| Failure::Usage("--mode greedy requires --class-means".into()))?;
                    let means = io::load_matrix(&path)?;
                    if means.nrows() != num_classes {
                        return Err(Error::Shape(format!(
                            "{} class means for --num-classes {num_classes}",
                            means.nrows()
                        ))
                        .into());
                    }
                    make_greedy_similar_split(means.view(), k)?
                }
            };
            io::save_partition(&p, &out)?;
            Ok(io::format_partition(&p))
        }
        Command::Train {
            features,
            labels,
            model_in,
            model_out,
            partition,
            config,
            mode,
            history,
        } => {
            let data = load_features(&features, &labels)?;
            let model = io::load_model(&model_in)?;
            let p: LabelPartition = io::load_partition(&partition)?;
            let mut cfg = io::load_train_config(&config)?;
            if let Some(m) = mode {
                cfg.mode = match m {
                    ModeArg::Full => TrainMode::Full,
                    ModeArg::FrozenClassifier => TrainMode::FrozenClassifier,
                    ModeArg::LinearProbe => TrainMode::LinearProbe,
                };
            }
            let (trained, hist) = fine_tune(&model, &data, p.fine_tuning(), &cfg)?;
            io::save_model(&trained, &model_out)?;
            let history_path = history.unwrap_or_else(|| {
                let mut s = model_out.clone().into_os_string();
                s.push(".history.csv");
                PathBuf::from(s)
            });
            io::write_text(&history_path, &hist.to_csv())?;
            let last = hist.epochs.last().expect("at least one epoch");
            Ok(format!(
                "mode={}\nepochs={}\nfinal_loss={}\nfinal_accuracy={}\n",
                cfg.mode,
                hist.epochs.len(),
                last.loss,
                last.accuracy
            ))
        }
        Command::Toy {
            outdir,
            seed,
            spec,
            config,
        } => {
            let spec = match spec {
                Some(path) => io::load_toy_spec(&path)?,
                None => ToySpec::default(),
            };
            let cfg = match config {
                Some(path) => {
                    let mut c = io::load_train_config(&path)?;
                    c.seed = seed;
                    c
                }
                None => toy_train_config(seed),
            };
            std::fs::create_dir_all(&outdir).map_err(|e| Error::Io {
                path: outdir.clone(),
                source: e,
            })?;
            Ok(run_toy_pipeline(&spec, &cfg, Some(&outdir))?.to_report())
        }
        Command::Gradcheck { seed, pairs } => {
            if pairs == 0 {
                return Err(Failure::Usage("--pairs must be positive".into()));
            }
            let report = random_gradcheck(seed, pairs)?;
            if report.passed() {
                Ok(report.to_report())
            } else {
                Err(Failure::Numerical(report.to_report()))
            }
        }
    }
}
