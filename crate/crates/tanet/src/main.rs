use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tanet::commands::{self, Session};
use tanet::selftest::{self, Fault};
use tanet::{config, Error};
use tanet_core::config::ModelConfig;
use tanet_core::train::TrainConfig;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "tanet", version, about = "RGB-D salient object detection")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Model config file (`key = value` lines). Defaults to the tiny preset.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Weights to load instead of seeded initialisation.
    #[arg(long, global = true, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Replace the fusion modules by plain addition.
    #[arg(long, global = true)]
    no_cmffm: bool,
    /// Feed decoder features straight to the heads.
    #[arg(long, global = true)]
    no_eem: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Predict saliency and edge maps for one RGB/depth pair.
    Infer { rgb: PathBuf, depth: PathBuf },
    /// Score predicted maps against ground-truth masks with matching names.
    Eval { pred_dir: PathBuf, gt_dir: PathBuf },
    /// Print parameter counts per branch.
    Params,
    /// Train on synthetic shapes and write the loss trace and weights.
    TrainToy {
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 8)]
        samples: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
    /// Write 3x3 morphological-gradient edge masks for saliency masks.
    DeriveEdges {
        #[arg(required = true)]
        masks: Vec<PathBuf>,
    },
    /// Run built-in shape, oracle and gradient checks.
    Selftest {
        #[arg(long, hide = true, value_name = "FAULT")]
        inject_fault: Option<String>,
    },
}

fn model_config(c: &Common) -> Result<ModelConfig, Error> {
    let mut cfg = match &c.config {
        Some(path) => config::load(path)?,
        None => ModelConfig::tiny(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.use_cmffm &= !c.no_cmffm;
    cfg.use_eem &= !c.no_eem;
    Ok(cfg)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Model(tanet_core::Error::Config(_)) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    let c = &cli.common;
    match cli.command {
        Command::Infer { rgb, depth } => {
            let session = commands::open(model_config(c)?, c.checkpoint.as_deref())?;
            let out = commands::run_infer(&session, &rgb, &depth, &c.out)?;
            println!("saliency {}", out.saliency.display());
            println!("edge     {}", out.edge.display());
        }
        Command::Eval { pred_dir, gt_dir } => {
            let out = commands::run_eval(&pred_dir, &gt_dir, &c.out)?;
            for p in &out.skipped {
                eprintln!("skipped unmatched {}", p.display());
            }
            let a = &out.aggregate;
            println!("images {}  max F {:.4}  MAE {:.4}  S {:.4}", a.images, a.f_beta_max, a.mae, a.s_measure);
        }
        Command::Params => {
            let model = tanet_core::model::TaNet::new(model_config(c)?)?;
            print!("{}", commands::format_counts(&model.count_params()));
        }
        Command::TrainToy { steps, lr, samples, size } => {
            let mut cfg = model_config(c)?;
            cfg.input_size = size;
            cfg.validate()?;
            let session: Session = commands::open(cfg, c.checkpoint.as_deref())?;
            let train = TrainConfig { steps, lr, ..TrainConfig::default() };
            let run = commands::run_train_toy(session, samples, size, &train, Some(&c.out))?;
            if let (Some(first), Some(last)) = (run.trace.first(), run.trace.last()) {
                println!(
                    "step 1 loss {:.4}, step {} loss {:.4} ({:.1}% of start)",
                    first.total,
                    run.trace.len(),
                    last.total,
                    100.0 * last.total / first.total
                );
            }
            println!("weights {}", c.out.join(commands::CHECKPOINT_FILE).display());
        }
        Command::DeriveEdges { masks } => {
            for p in commands::run_derive_edges(&masks, &c.out)? {
                println!("{}", p.display());
            }
        }
        Command::Selftest { inject_fault } => {
            let fault = match inject_fault.as_deref() {
                None => None,
                Some(s) => match Fault::parse(s) {
                    Some(f) => Some(f),
                    None => {
                        eprintln!("error: unknown fault `{s}`");
                        return Ok(EXIT_USAGE);
                    }
                },
            };
            let results = selftest::run(fault);
            let failed = results.iter().filter(|r| !r.passed).count();
            for r in &results {
                println!("{} {}: {}", if r.passed { "ok  " } else { "FAIL" }, r.name, r.detail);
            }
            println!("{} checks, {failed} failed", results.len());
            if failed > 0 {
                return Ok(EXIT_VERIFY);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
