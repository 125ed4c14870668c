use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use geocsi::estimation::EstimateMethod;
use geocsi::harness::{self, ExperimentConfig};
use geocsi::predictor::PredictorMode;

#[derive(Parser)]
#[command(name = "geocsi", version, about = "Channel simulation, estimation and DL CSI prediction sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write UL/DL traces and estimates for every realization.
    Generate(Common),
    /// Train the predictors and write checkpoints.
    Train(Common),
    /// Run the NMSE sweep and write the CSV report.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Use checkpoints from a previous `train` instead of training.
        #[arg(long, env = "GEOCSI_LOAD_CHECKPOINTS")]
        load_checkpoints: bool,
    },
    /// Print a CSV report as a table.
    Report {
        /// Defaults to results.csv in the output directory.
        csv: Option<PathBuf>,
        #[arg(long, env = "GEOCSI_OUT")]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML config file; flags override its values.
    #[arg(long, env = "GEOCSI_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "GEOCSI_SEED")]
    seed: Option<u64>,
    /// Start from the small fast profile instead of the full-size one.
    #[arg(long, env = "GEOCSI_QUICK")]
    quick: bool,
    #[arg(long, env = "GEOCSI_OUT")]
    out: Option<PathBuf>,
    /// Comma-separated: interpolation,open_loop,closed_loop.
    #[arg(long, env = "GEOCSI_MODES", value_delimiter = ',')]
    modes: Option<Vec<PredictorMode>>,
    /// Comma-separated: LS,LSMMSE.
    #[arg(long, env = "GEOCSI_ESTIMATORS", value_delimiter = ',')]
    estimators: Option<Vec<EstimateMethod>>,
    /// Comma-separated SSNR values in dB.
    #[arg(long, env = "GEOCSI_SSNR", value_delimiter = ',', allow_hyphen_values = true)]
    ssnr: Option<Vec<f64>>,
    #[arg(long, env = "GEOCSI_REALIZATIONS")]
    realizations: Option<usize>,
}

impl Common {
    fn resolve(self) -> geocsi::Result<ExperimentConfig> {
        let mut cfg = match (&self.config, self.quick) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, true) => ExperimentConfig::quick(),
            (None, false) => ExperimentConfig::paper(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = self.out {
            cfg.output_dir = o;
        }
        if let Some(m) = self.modes {
            cfg.predictor_modes = m;
        }
        if let Some(e) = self.estimators {
            cfg.estimators = e;
        }
        if let Some(v) = self.ssnr {
            cfg.ssnr_sweep_db = v;
        }
        if let Some(n) = self.realizations {
            cfg.n_realizations = n;
            if cfg.scenario.dataset_size.is_some() {
                cfg.scenario.dataset_size = Some(n * cfg.scenario.csi_size);
            }
        }
        if self.config.is_some() && self.quick {
            eprintln!("note: --quick is ignored when --config is given");
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> geocsi::Result<()> {
    match cli.command {
        Command::Generate(c) => {
            let cfg = c.resolve()?;
            let files = harness::generate_dataset(&cfg)?;
            harness::write_manifest(&cfg, "generate", &files)?;
            println!("wrote {} files to {}", files.len(), cfg.output_dir.display());
        }
        Command::Train(c) => {
            let cfg = c.resolve()?;
            let files = harness::train_and_save(&cfg)?;
            harness::write_manifest(&cfg, "train", &files)?;
            println!("wrote {} checkpoints to {}", files.len(), cfg.output_dir.display());
        }
        Command::Sweep { common, load_checkpoints } => {
            let mut cfg = common.resolve()?;
            cfg.predictor.load_checkpoints |= load_checkpoints;
            let result = harness::run_sweep(&cfg)?;
            let path = cfg.output_dir.join("results.csv");
            harness::emit_csv(&result, &path)?;
            harness::write_manifest(&cfg, "sweep", std::slice::from_ref(&path))?;
            for c in result.failed() {
                eprintln!(
                    "failed: {} {} {} dB realization {}: {}",
                    c.estimator.tag(),
                    c.mode.tag(),
                    c.ssnr_db,
                    c.realization,
                    c.error.as_deref().unwrap_or("")
                );
            }
            print!("{}", report_table(&harness::csv_string(&result)));
            println!("wrote {}", path.display());
        }
        Command::Report { csv, out } => {
            let path = csv.unwrap_or_else(|| out.unwrap_or_else(|| PathBuf::from("out")).join("results.csv"));
            let text = std::fs::read_to_string(&path)?;
            print!("{}", report_table(&text));
        }
    }
    Ok(())
}

fn report_table(csv: &str) -> String {
    let mut out = format!("{:<8} {:<14} {:>8} {:>12} {:>10} {:>4}\n", "est", "mode", "ssnr_db", "nmse_avg", "dB", "n");
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 9 {
            continue;
        }
        let num = |s: &str| s.parse::<f64>().unwrap_or(f64::NAN);
        out.push_str(&format!(
            "{:<8} {:<14} {:>8} {:>12.4e} {:>10.2} {:>4}\n",
            f[0],
            f[1],
            f[2],
            num(f[5]),
            num(f[6]),
            f[7]
        ));
    }
    out
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
