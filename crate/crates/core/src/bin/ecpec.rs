use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use ecpec_core::hyper::HyperParams;
use ecpec_core::pipeline::{run_pipeline, Command, RunConfig};
use ecpec_core::Error;

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "ECPEC_OUT_DIR";
const FALLBACK_OUT_DIR: &str = "ecpec-out";

#[derive(Parser)]
#[command(
    name = "ecpec",
    version,
    about = "Emotion-cause pair extraction over conversation graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build conversation graphs and write graphs.json.
    BuildGraph(Opts),
    /// Run encoders and alignment; write alignments.json.
    Align(Opts),
    /// Score pairs and compute losses; write predictions.json.
    Predict(Opts),
    /// Evaluate against gold pairs; write eval.json.
    Eval(EvalOpts),
    /// Run every stage and write all artifacts.
    Pipeline(Opts),
}

#[derive(Args)]
struct Opts {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    params: Option<PathBuf>,
    /// TOML config file; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: $ECPEC_OUT_DIR or ./ecpec-out]
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = automatic).
    #[arg(long)]
    threads: Option<usize>,
    /// Also write encoder.json with H and induced adjacency per space.
    #[arg(long)]
    dump_encoder: bool,
    #[command(flatten)]
    hp: HyperOverrides,
}

#[derive(Args)]
struct EvalOpts {
    #[command(flatten)]
    opts: Opts,
    /// Score an existing predictions.json instead of running the model.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Also write eval.txt.
    #[arg(long)]
    table: bool,
}

#[derive(Args)]
struct HyperOverrides {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long = "tau-s")]
    tau_s: Option<f64>,
    #[arg(long = "tau-e")]
    tau_e: Option<f64>,
    #[arg(long = "tau-r")]
    tau_r: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
}

impl HyperOverrides {
    fn apply(&self, hp: &mut HyperParams) {
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { hp.$field = v; })*
            };
        }
        set!(alpha => alpha, beta => beta, epsilon => epsilon, window => window,
             tau_s => tau_s, tau_e => tau_e, tau_r => tau_r, threshold => decision_threshold);
    }
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    params: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    threads: Option<usize>,
    #[serde(default)]
    hyperparams: HyperParams,
}

fn load_config_file(path: &Path) -> Result<ConfigFile, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn build_config(command: Command, opts: Opts) -> Result<RunConfig, Error> {
    let file = match &opts.config {
        Some(p) => load_config_file(p)?,
        None => ConfigFile::default(),
    };
    let mut hyperparams = file.hyperparams;
    opts.hp.apply(&mut hyperparams);
    let output_dir = opts
        .out
        .or(file.out)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR));
    let mut config = RunConfig::new(command, opts.corpus, output_dir);
    config.params_path = opts.params.or(file.params);
    config.hyperparams = hyperparams;
    config.seed = opts.seed.or(file.seed).unwrap_or(config.seed);
    config.threads = opts.threads.or(file.threads).unwrap_or(0);
    config.dump_encoder = opts.dump_encoder;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match cli.command {
        Cmd::BuildGraph(o) => build_config(Command::BuildGraph, o),
        Cmd::Align(o) => build_config(Command::Align, o),
        Cmd::Predict(o) => build_config(Command::Predict, o),
        Cmd::Pipeline(o) => build_config(Command::Pipeline, o),
        Cmd::Eval(e) => build_config(Command::Eval, e.opts).map(|mut c| {
            c.predictions_path = e.predictions;
            c.table = e.table;
            c
        }),
    };
    let result = config.and_then(|c| run_pipeline(&c).map(|s| (c, s)));
    match result {
        Ok((config, summary)) => {
            for f in &summary.files {
                println!("{}", config.output_dir.join(f).display());
            }
            if let Some(eval) = &summary.eval {
                let e = &eval.all.ecpec;
                eprintln!(
                    "{} conversations: P={:.4} R={:.4} F1={:.4}",
                    summary.conversations, e.p, e.r, e.f1
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
