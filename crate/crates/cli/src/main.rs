use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use vibefuse::config::PipelineConfig;
use vibefuse::error::Result;
use vibefuse::eval::{point_average, EvalReport, SweepPoint};
use vibefuse::pipeline::{resolve_out_dir, Pipeline};

#[derive(Parser)]
#[command(name = "vibefuse", version, about = "Two-fidelity frequency-response pipeline")]
struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true, default_value = "presets/ci.json")]
    config: PathBuf,
    /// Replaces the global seed and every per-stage seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Artifact directory; falls back to VIBEFUSE_OUT, then the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the model, print its DOF count and compare natural frequencies.
    Mesh,
    /// Draw the uncertain-parameter samples.
    Sample,
    /// Compute the high- and low-fidelity datasets.
    Simulate,
    /// Draw the nested train/test split.
    Split,
    /// Train one emulator.
    Train {
        #[arg(value_enum)]
        emulator: Which,
    },
    /// Predict the HF-test rows with both emulators.
    Predict,
    /// Score both emulators on the HF-test rows.
    Evaluate,
    /// Run a repeated or swept comparison.
    Study {
        #[arg(value_enum)]
        kind: Study,
    },
    /// Every stage end to end.
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    MfdfCnn,
    Mlmrgp,
}

#[derive(Clone, Copy, ValueEnum)]
enum Study {
    Robustness,
    HfFraction,
    Alpha,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = PipelineConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
        config.sampling.seed = None;
        config.split.seed = None;
        config.mfdf_cnn.seed = None;
        config.mlmrgp.seed = None;
        config.eval.seed = None;
    }
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| vibefuse::error::Error::Domain(format!("thread pool: {e}")))?;
    }
    let out = resolve_out_dir(cli.out.as_deref(), &config);
    let p = Pipeline::new(config, out)?;
    match cli.command {
        Command::Mesh => mesh(&p),
        Command::Sample => {
            let rows = p.sample()?;
            println!("samples: {}", rows.len());
            Ok(())
        }
        Command::Simulate => {
            let (hf, lf) = p.simulate()?;
            println!("simulated {} high-fidelity and {} low-fidelity rows", hf.len(), lf.len());
            Ok(())
        }
        Command::Split => {
            let s = p.split()?;
            println!(
                "lf_train {} hf_train {} hf_test {}",
                s.lf_train.len(),
                s.hf_train.len(),
                s.hf_test.len()
            );
            Ok(())
        }
        Command::Train { emulator: Which::MfdfCnn } => {
            let (_, r) = p.train_mfdf()?;
            println!(
                "mfdf-cnn loss {:.6e} -> {:.6e}",
                r.initial_loss,
                r.epoch_losses.last().copied().unwrap_or(r.initial_loss)
            );
            Ok(())
        }
        Command::Train { emulator: Which::Mlmrgp } => {
            let m = p.train_gp()?;
            println!("mlmrgp rho {:.6}", m.rho);
            Ok(())
        }
        Command::Predict => {
            let s = p.predict()?;
            println!("predicted {} test rows", s.split.hf_test.len());
            Ok(())
        }
        Command::Evaluate => evaluate(&p),
        Command::Study { kind } => study(&p, kind),
        Command::All => {
            mesh(&p)?;
            p.sample()?;
            p.datasets()?;
            p.split()?;
            p.train_mfdf()?;
            p.train_gp()?;
            p.predict()?;
            evaluate(&p)?;
            for kind in [Study::Robustness, Study::HfFraction, Study::Alpha] {
                study(&p, kind)?;
            }
            Ok(())
        }
    }
}

fn mesh(p: &Pipeline) -> Result<()> {
    let m = p.mesh()?;
    println!("N = {}", m.dofs);
    if m.full_hz.is_empty() {
        println!("free-free model: modal comparison skipped");
        return Ok(());
    }
    println!("masters = {}", m.masters);
    for (i, (f, g)) in m.full_hz.iter().zip(&m.guyan_hz).enumerate() {
        println!("mode {}: full {f:.4} Hz, guyan {g:.4} Hz", i + 1);
    }
    Ok(())
}

fn print_report(r: &EvalReport) {
    let cells: Vec<String> = r.log_mse.iter().map(|v| format!("{v:.3}")).collect();
    println!("{:>8} ln mse: {}", r.emulator.tag(), cells.join(" "));
}

fn evaluate(p: &Pipeline) -> Result<()> {
    let c = p.evaluate()?;
    print_report(&c.mfdf);
    print_report(&c.gp);
    Ok(())
}

fn print_sweep(name: &str, points: &[SweepPoint]) {
    for pt in points {
        let cells: Vec<String> = pt
            .reports
            .iter()
            .map(|r| format!("{} {:.3}", r.emulator.tag(), point_average(&r.log_mse)))
            .collect();
        println!("{name} {:.2} (hf {}): {}", pt.value, pt.hf_count, cells.join(", "));
    }
}

fn study(p: &Pipeline, kind: Study) -> Result<()> {
    match kind {
        Study::Robustness => {
            for s in p.robustness()? {
                let cells: Vec<String> = s.mean_log_mse.iter().map(|v| format!("{v:.3}")).collect();
                println!("{:>8} mean ln mse: {}", s.emulator.tag(), cells.join(" "));
            }
        }
        Study::HfFraction => print_sweep("hf_fraction", &p.hf_fraction()?),
        Study::Alpha => print_sweep("alpha", &p.alpha()?),
    }
    Ok(())
}
