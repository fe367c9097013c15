//! Command implementations behind the `acdiff` binary.
//!
//! Every command is deterministic given its arguments. Wall-clock timings
//! are the one exception and go to separate `timing` files so the other
//! outputs can be compared byte for byte.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::checkpoint;
use crate::conditioning::{ConditionImage, PromptInput};
use crate::data::{read_pgm, to_pixels, write_pgm};
use crate::diffusion::{generate_batch, Mode, SampleRecord};
use crate::error::{Error, Result};
use crate::eval::{run_benchmark, MetricReport};
use crate::rng::Rng;
use crate::run::{train, DatasetSource, RunConfig, Split};
use crate::schedule::HybridSchedule;

#[derive(Debug, Parser)]
#[command(
    name = "acdiff",
    version,
    about = "Adaptive-length conditional diffusion on toy data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a checkpoint plus `<out>.loss.csv`.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample from a checkpoint for one class and condition image.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "class")]
        class_id: usize,
        #[arg(long)]
        condition: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Benchmark a checkpoint on held-out data.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        mode: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Directory for report.txt, per_class.csv and timing.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the schedule table for the given knobs as CSV.
    Schedule {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "rs")]
        r_s: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        steps: usize,
    },
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Path of the loss log written next to a checkpoint.
pub fn loss_log_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".loss.csv");
    PathBuf::from(s)
}

pub fn cmd_train(config: &Path, out: &Path) -> Result<Vec<f64>> {
    let cfg = RunConfig::from_file(config)?;
    let mut log = String::from("step,loss,aux_loss,mean_t_cond\n");
    let (model, losses) = train(&cfg, |step, s| {
        let _ = writeln!(log, "{step},{},{},{}", s.loss, s.aux_loss, s.mean_t_cond);
    })?;
    checkpoint::save(out, &cfg, &model)?;
    write(&loss_log_path(out), log)?;
    Ok(losses)
}

/// Side length when samples of `cfg` are square images, `None` for vectors.
fn image_side(cfg: &RunConfig) -> Option<usize> {
    let image = match &cfg.dataset {
        DatasetSource::Toy(kind) => kind.is_image(),
        DatasetSource::Cifar10(_) | DatasetSource::Manifest(_) => true,
    };
    let side = (cfg.data_dim as f64).sqrt().round() as usize;
    (image && side * side == cfg.data_dim).then_some(side)
}

#[derive(Debug, Clone)]
pub struct GenerateArgs {
    pub ckpt: PathBuf,
    pub class_id: usize,
    pub condition: PathBuf,
    pub count: usize,
    pub seed: u64,
    pub out: PathBuf,
}

/// Writes `manifest.csv` plus one PGM per sample (images) or `samples.csv`
/// (vectors) into `out`; per-sample wall time goes to `timing.csv`.
pub fn cmd_generate(args: &GenerateArgs) -> Result<Vec<SampleRecord>> {
    let (cfg, model) = checkpoint::load(&args.ckpt)?;
    if args.class_id >= cfg.num_classes {
        return Err(Error::contract(format!(
            "class {} out of range for {} classes",
            args.class_id, cfg.num_classes
        )));
    }
    let condition = read_pgm(&args.condition)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let inputs = vec![(PromptInput::class(args.class_id), condition); args.count];
    let samples = generate_batch(&model, &inputs, cfg.mode, args.seed)?;

    let side = image_side(&cfg);
    let mut manifest = String::from("index,file,class_id,t_cond,lambda,r_s,u,alpha_bar_final\n");
    let mut timing = String::from("index,wall_time_s\n");
    let mut vectors = String::from("index");
    (0..cfg.data_dim).for_each(|k| {
        let _ = write!(vectors, ",x{k}");
    });
    vectors.push('\n');
    for (i, s) in samples.iter().enumerate() {
        let file = match side {
            Some(side) => {
                let name = format!("sample_{i:04}.pgm");
                let img = ConditionImage::new(side, side, to_pixels(&s.x_0))?;
                write_pgm(&args.out.join(&name), &img)?;
                name
            }
            None => {
                let _ = write!(vectors, "{i}");
                s.x_0.iter().for_each(|v| {
                    let _ = write!(vectors, ",{v}");
                });
                vectors.push('\n');
                "samples.csv".to_string()
            }
        };
        let r = &s.record;
        let _ = writeln!(
            manifest,
            "{i},{file},{},{},{},{},{},{}",
            r.class_id, r.t_cond, r.lambda, r.r_s, r.u, r.alpha_bar_final
        );
        let _ = writeln!(timing, "{i},{}", r.wall_time_s);
    }
    write(&args.out.join("manifest.csv"), manifest)?;
    if !samples.is_empty() {
        write(&args.out.join("timing.csv"), timing)?;
        if side.is_none() {
            write(&args.out.join("samples.csv"), vectors)?;
        }
    }
    Ok(samples.into_iter().map(|s| s.record).collect())
}

pub fn cmd_eval(
    ckpt: &Path,
    mode: Mode,
    n: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<MetricReport> {
    let (cfg, model) = checkpoint::load(ckpt)?;
    let held_out = cfg.load_dataset(Split::HeldOut)?;
    let (report, _) = run_benchmark(&model, &held_out, mode, n, &mut Rng::new(seed))?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write(&dir.join("report.txt"), report.to_key_value())?;
        write(&dir.join("per_class.csv"), report.per_class_csv())?;
        write(&dir.join("timing.txt"), report.timing_text())?;
    }
    Ok(report)
}

pub fn cmd_schedule(config: &Path, r_s: f64, lambda: f64, steps: usize) -> Result<String> {
    let cfg = RunConfig::from_file(config)?;
    if !(r_s > 0.0 && r_s.is_finite()) {
        return Err(Error::contract(format!("r_s must be positive, got {r_s}")));
    }
    Ok(
        HybridSchedule::build(&cfg.model.schedule, steps, r_s, lambda)?
            .with_r_s(r_s)
            .to_csv(),
    )
}

fn dispatch(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Train { config, out } => {
            let losses = cmd_train(&config, &out)?;
            let tail = &losses[losses.len().saturating_sub(100)..];
            let mean = if tail.is_empty() {
                f64::NAN
            } else {
                tail.iter().sum::<f64>() / tail.len() as f64
            };
            Ok(format!(
                "trained {} steps, final mean loss {mean}\n",
                losses.len()
            ))
        }
        Command::Generate {
            ckpt,
            class_id,
            condition,
            count,
            seed,
            out,
        } => {
            let records = cmd_generate(&GenerateArgs {
                ckpt,
                class_id,
                condition,
                count,
                seed,
                out: out.clone(),
            })?;
            Ok(format!(
                "wrote {} samples to {}\n",
                records.len(),
                out.display()
            ))
        }
        Command::Eval {
            ckpt,
            mode,
            n,
            seed,
            out,
        } => {
            let report = cmd_eval(&ckpt, mode.parse()?, n, seed, out.as_deref())?;
            Ok(report.to_key_value())
        }
        Command::Schedule {
            config,
            r_s,
            lambda,
            steps,
        } => cmd_schedule(&config, r_s, lambda, steps),
    }
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 on success, 2 for numeric failures, 1 for everything else.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
