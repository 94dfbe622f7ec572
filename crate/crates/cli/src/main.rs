use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use epical::ensemble::CheckpointStore;
use epical::experiment::{
    self, EmitInput, ExperimentConfig, PosteriorSummary, Scale, StoreKind, Targets, WindowCloud,
};
use epical::Result;

#[derive(Parser)]
#[command(
    name = "epical",
    version,
    about = "Sequential calibration of a stochastic epidemic simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the ground-truth epidemic and write its observations.
    Truth(Common),
    /// Calibrate window by window and write posterior summaries.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Fit this observations.csv instead of a freshly generated ground truth.
        #[arg(long)]
        observations: Option<PathBuf>,
    },
    /// Rewrite ribbons.csv from trajectories.csv and print per-window posteriors.
    Summarize {
        #[arg(long)]
        out: PathBuf,
    },
    /// Check store checksums and, when ground truth is present, posterior coverage.
    Verify {
        #[arg(long)]
        out: PathBuf,
        /// Central interval level for the coverage report.
        #[arg(long, default_value_t = 0.9)]
        level: f64,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// `cases` or `cases+deaths`.
    #[arg(long)]
    targets: Option<Targets>,
    /// `paper` or `desk` particle budgets.
    #[arg(long)]
    scale: Option<Scale>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(t) = self.targets {
            cfg.targets = t;
        }
        if let Some(s) = self.scale {
            cfg.apply_scale(s);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn truth(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let t = experiment::generate_ground_truth(&cfg)?;
    fs::create_dir_all(&common.out).map_err(|e| epical::Error::Io {
        path: common.out.clone(),
        source: e,
    })?;
    experiment::write_observations(&t.observations, &common.out.join("observations.csv"))?;
    experiment::write_ground_truth(&t, &common.out.join("ground_truth.csv"))?;
    println!(
        "{} days of observations in {}",
        t.observations.cases.len(),
        common.out.display()
    );
    Ok(())
}

fn calibrate(common: &Common, observations: Option<&Path>) -> Result<()> {
    let cfg = common.load()?;
    let out = &common.out;
    let report = match observations {
        None => {
            let r = experiment::run(&cfg, out)?;
            (r.result, r.summary, r.files.len())
        }
        Some(path) => {
            let obs = experiment::read_observations(path)?;
            let mut store = match cfg.store {
                StoreKind::Disk => CheckpointStore::open(out.join("store"))?,
                StoreKind::Memory => CheckpointStore::in_memory(),
            };
            let result = experiment::calibrate(&cfg, &obs, &mut store, Some(out))?;
            let summary =
                experiment::summarize(&result.bundle, &result.windows, cfg.prior.replicates)?;
            let input = EmitInput {
                config: &cfg,
                summary: &summary,
                result: &result,
                truth: None,
            };
            let files = experiment::emit(&input, out)?;
            (result, summary, files.len())
        }
    };
    let (result, summary, files) = report;
    for w in &result.windows {
        println!(
            "window {}: days {}..={}, ESS {:.1}",
            w.window, w.days.0, w.days.1, w.ess
        );
    }
    print_clouds(&summary.clouds);
    println!("{files} files written to {}", out.display());
    Ok(())
}

fn print_clouds(clouds: &[WindowCloud]) {
    for c in clouds {
        let (lo, hi) = c.theta_interval(0.9);
        let mut rho: Vec<f64> = c.posterior.iter().map(|p| p.1).collect();
        rho.sort_by(f64::total_cmp);
        println!(
            "window {}: theta median {:.4}, 90% [{lo:.4}, {hi:.4}]; rho median {:.4}",
            c.window,
            c.theta_interval(0.0).0,
            experiment::quantile(&rho, 0.5)
        );
    }
}

fn window_files(out: &Path) -> Result<Vec<(u32, PathBuf)>> {
    let entries = fs::read_dir(out).map_err(|e| epical::Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    let mut found: Vec<(u32, PathBuf)> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let m = name
                .strip_prefix("posterior_window_")?
                .strip_suffix(".csv")?
                .parse()
                .ok()?;
            Some((m, e.path()))
        })
        .collect();
    found.sort();
    Ok(found)
}

fn summarize(out: &Path) -> Result<()> {
    let bundle = experiment::read_trajectories(&out.join("trajectories.csv"))?;
    let clouds = window_files(out)?
        .into_iter()
        .map(|(m, p)| experiment::read_cloud(&p, m))
        .collect::<Result<Vec<_>>>()?;
    let summary = PosteriorSummary {
        first_day: bundle.first_day,
        ribbons: experiment::ribbons(&bundle)?,
        clouds,
    };
    experiment::write_ribbons(&summary, &out.join("ribbons.csv"))?;
    print_clouds(&summary.clouds);
    for r in &summary.ribbons {
        println!(
            "{}: mean 90% ribbon width {:.2}",
            r.series,
            r.mean_width90()
        );
    }
    Ok(())
}

fn verify(out: &Path, level: f64) -> Result<bool> {
    let mut ok = true;
    let store = out.join("store");
    if store.is_dir() {
        let check = experiment::verify_store(&store)?;
        println!(
            "store: {} entries, {} corrupt",
            check.entries,
            check.corrupt.len()
        );
        for c in &check.corrupt {
            println!("  {c}");
        }
        ok &= check.corrupt.is_empty();
    } else {
        println!("store: none");
    }
    if out.join("ground_truth.csv").is_file() {
        for c in experiment::theta_coverage(out, level)? {
            println!(
                "window {}: days {}..={}, theta interval [{:.4}, {:.4}], truth [{}, {}]: {}",
                c.window,
                c.fit_days.0,
                c.fit_days.1,
                c.interval.0,
                c.interval.1,
                c.truth.0,
                c.truth.1,
                if c.covered() { "covered" } else { "missed" }
            );
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Truth(c) => truth(c).map(|_| true),
        Command::Calibrate {
            common,
            observations,
        } => calibrate(common, observations.as_deref()).map(|_| true),
        Command::Summarize { out } => summarize(out).map(|_| true),
        Command::Verify { out, level } => verify(out, *level),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
