use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nicest::config::PipelineConfig;
use nicest::error::Result;
use nicest::{io, pipeline, synth};
use nicest_core::nist::{self, TeacherOutputs};
use nicest_core::{metrics, neg_nsd, nsc};

#[derive(Parser)]
#[command(
    name = "nicest",
    version,
    about = "Noisy relation-label cleaning, teacher fusion and OOD splits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline configuration (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus and its noise ledger.
    Gen(Common),
    /// Mine missing annotations among negatives.
    NegNsd {
        #[arg(long)]
        input: PathBuf,
        /// Predictions sidecar replacing the built-in classifier.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Flag low-density positives per predicate.
    PosNsd {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Soft-relabel flagged positives from clean neighbours.
    Nsc {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fuse head and tail teacher outputs into distillation targets.
    NistFuse {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        head: PathBuf,
        #[arg(long)]
        tail: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Build an OOD train/test split and its divergence statistics.
    SplitOod {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// R@K / mR@K of scored triplets against a ground-truth dataset.
    Eval {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run every configured stage end to end.
    Pipeline(Common),
}

fn load_config(c: &Common) -> Result<PipelineConfig> {
    let mut cfg: PipelineConfig = match &c.config {
        Some(p) => io::read_json(p)?,
        None => PipelineConfig::default(),
    };
    if c.seed.is_some() {
        cfg.seed = c.seed;
    }
    cfg.resolved()
}

fn out_file(c: &Common, name: &str) -> PathBuf {
    c.out.join(name)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen(c) => {
            let cfg = load_config(&c)?;
            let (d, ledger) = synth::generate(&cfg.synth)?;
            io::save_dataset(&d, &out_file(&c, "dataset.jsonl"))?;
            io::write_jsonl(&out_file(&c, "ledger.jsonl"), ledger.to_lines(d.vocabulary()))?;
        }
        Command::NegNsd {
            input,
            predictions,
            common,
        } => {
            let cfg = load_config(&common)?;
            let neg = cfg.neg_nsd.to_core(cfg.effective_seed())?;
            let d = io::load_dataset(&input)?;
            let merged = match predictions.or(cfg.neg_nsd.predictions.clone()) {
                Some(p) => pipeline::mine_from_predictions(&d, &io::load_predictions(&p)?, &neg)?.1,
                None => {
                    let o = neg_nsd::run(&d, &neg)?;
                    io::save_predictions(&out_file(&common, "neg_predictions.jsonl"), &o.predictions)?;
                    o.dataset
                }
            };
            io::save_dataset(&merged, &out_file(&common, "neg_nsd.jsonl"))?;
        }
        Command::PosNsd { input, common } => {
            let cfg = load_config(&common)?;
            let d = io::load_dataset(&input)?;
            let pool = pipeline::thread_pool(common.threads)?;
            let o = pipeline::detect_noisy_positives(&d, &cfg.pos_nsd.to_core()?, true, &pool)?;
            io::save_diagnostics(&out_file(&common, "pos_nsd_diagnostics.csv"), &o.categories)?;
            io::save_dataset(&o.dataset, &out_file(&common, "pos_nsd.jsonl"))?;
        }
        Command::Nsc { input, common } => {
            let cfg = load_config(&common)?;
            let d = io::load_dataset(&input)?;
            let o = nsc::correct(&d, &cfg.nsc.to_core()?)?;
            io::save_corrections(&out_file(&common, "corrections.csv"), &o.records, d.vocabulary())?;
            io::save_dataset(&o.dataset, &out_file(&common, "nsc.jsonl"))?;
        }
        Command::NistFuse {
            input,
            head,
            tail,
            common,
        } => {
            let cfg = load_config(&common)?;
            let d = io::load_dataset(&input)?;
            let t = TeacherOutputs::align(&d, io::load_distributions(&head)?, io::load_distributions(&tail)?)?;
            let targets = nist::fuse_dataset(&t, d.vocabulary(), &cfg.nist.fusion()?)?;
            io::save_distributions(&out_file(&common, "nist_targets.jsonl"), &targets)?;
        }
        Command::SplitOod { input, common } => {
            let cfg = load_config(&common)?;
            let d = io::load_dataset(&input)?;
            let (_, train, test, stats) = pipeline::ood(&d, cfg.split.triplet_frac, cfg.split.image_frac)?;
            io::save_dataset(&train, &out_file(&common, "split_train.jsonl"))?;
            io::save_dataset(&test, &out_file(&common, "split_test.jsonl"))?;
            io::write_json(
                &out_file(&common, "split_stats.json"),
                &pipeline::SplitStatsJson::from(&stats),
            )?;
        }
        Command::Eval {
            input,
            predictions,
            common,
        } => {
            let cfg = load_config(&common)?;
            let d = io::load_dataset(&input)?;
            let scored = io::load_scored(&predictions, d.vocabulary())?;
            let r = metrics::evaluate(&scored, &d, &cfg.eval.ks, d.vocabulary())?;
            io::write_json(
                &out_file(&common, "metrics.json"),
                &pipeline::MetricsJson::new(&r, d.vocabulary()),
            )?;
        }
        Command::Pipeline(c) => {
            let cfg = load_config(&c)?;
            let run = pipeline::run_pipeline(cfg, &c.out, c.threads)?;
            print_summary(&c.out, &run);
        }
    }
    Ok(())
}

fn print_summary(out: &Path, run: &pipeline::PipelineRun) {
    println!(
        "wrote {} artifacts to {}",
        run.manifest.outputs.len() + 1,
        out.display()
    );
    let m = &run.metrics;
    for (k, v) in &m.r_at {
        println!("R@{k} {v:.4}  mR@{k} {:.4}", m.mr_at[k]);
    }
    println!("mean {:.4}", m.mean);
    let s = &run.split_stats;
    match s.kl_mean {
        Some(km) => println!("split KL {:.4}  KL-mean {km:.4}", s.kl),
        None => println!("split KL {:.4}  KL-mean n/a", s.kl),
    }
    if let Some(r) = &run.recovery {
        let f = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
        println!(
            "planted flips {}  detection recall {}  correction accuracy {}  clean flagged {}",
            r.planted_flips,
            f(r.detection_recall),
            f(r.correction_accuracy),
            f(r.flagged_clean_rate)
        );
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                if !msg.contains(&s.to_string()) {
                    msg.push_str(&format!(": {s}"));
                }
                src = s.source();
            }
            eprintln!("error: {msg}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
