use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ssimv_core::dataset::{read_matrix, write_matrix};
use ssimv_core::fuzzy::export_rules;
use ssimv_core::impute::{knn_impute, ImputeSpec, Weighting};
use ssimv_core::solver::{predict_inductive, write_trace_csv};
use ssimv_core::{
    fit, hyperparams_from_toml, load_dataset, predict_transductive, run_experiment, run_stats,
    Ablation, ExperimentConfig, LoadOptions, StatsInput, TrainedModel,
};

#[derive(Parser)]
#[command(
    name = "ssimv",
    version,
    about = "Semi-supervised fuzzy classification of incomplete multi-view data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a repeated-trial experiment from a TOML config.
    Run(RunArgs),
    /// Friedman test with Holm post-hoc comparisons.
    Stats(StatsArgs),
    /// Fill missing views with k-nearest-neighbour averages.
    Impute(ImputeArgs),
    /// Print the trained fuzzy rules of a saved model.
    Rules(RulesArgs),
    /// Train one model on a dataset and save it.
    Fit(FitArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config; without one the built-in synthetic setup is used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Comma-separated list, e.g. `full,no_theta,no_delta`.
    #[arg(long, value_delimiter = ',')]
    ablation: Vec<Ablation>,
    /// Override any config key, e.g. `--set hyperparams.beta1=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct StatsArgs {
    /// CSV with a name column then one accuracy column per dataset, or
    /// `algorithm,average_rank` rows with `--n-datasets`.
    #[arg(long)]
    input: PathBuf,
    /// Treat the input as average ranks over this many datasets.
    #[arg(long)]
    n_datasets: Option<usize>,
    #[arg(long)]
    control: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value = "stats")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// One headerless CSV per view, in order.
    #[arg(long = "view", required = true)]
    views: Vec<PathBuf>,
    /// One class index per line; -1 marks an unlabeled instance.
    #[arg(long)]
    labels: PathBuf,
    /// 0/1 matrix, one column per view.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    classes: Option<usize>,
    /// Skip z-score normalization of the views.
    #[arg(long)]
    raw: bool,
}

impl DataArgs {
    fn load(&self) -> Result<ssimv_core::MultiViewDataset> {
        Ok(load_dataset(
            &self.views,
            &self.labels,
            self.mask.as_deref(),
            &LoadOptions {
                class_count: self.classes,
                raw: self.raw,
            },
        )?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    Uniform,
    InverseDistance,
}

#[derive(Args)]
struct ImputeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 7)]
    k: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    weighting: WeightingArg,
    /// Completed views are written as view_1.csv, view_2.csv, ...
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RulesArgs {
    #[arg(long)]
    model: PathBuf,
    /// 1-based view index; all views when omitted.
    #[arg(long)]
    view: Option<usize>,
    /// Comma-separated feature names of the selected view.
    #[arg(long, value_delimiter = ',')]
    features: Vec<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// TOML file of hyperparameters (missing keys take defaults).
    #[arg(long)]
    hyperparams: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ablation: Option<Ablation>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write `instance,predicted` for every unlabeled instance.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Raw (unnormalized) view files of new instances; without any, the
    /// stored predictions for the training run's unlabeled instances are printed.
    #[arg(long = "view")]
    views: Vec<PathBuf>,
    /// 0/1 matrix marking which views each new instance has.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)
        }
        None => Box::new(std::io::stdout().lock()),
    })
}

fn run(args: RunArgs) -> Result<bool> {
    let mut overrides = args.overrides;
    if let Some(s) = args.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(d) = &args.out_dir {
        overrides.push(format!("out_dir={:?}", d.display().to_string()));
    }
    if !args.ablation.is_empty() {
        let names: Vec<String> = args
            .ablation
            .iter()
            .map(|a| format!("{:?}", a.name()))
            .collect();
        overrides.push(format!("ablations=[{}]", names.join(",")));
    }
    let cfg = match &args.config {
        Some(p) => ExperimentConfig::from_file(p, &overrides)?,
        None => ExperimentConfig::from_toml_str("", &overrides)?,
    };
    let outcome = run_experiment(&cfg)?;
    for s in &outcome.summary {
        println!(
            "missing={} labeled={} ablation={} config={} mean={:.4} std={:.4} n={} failures={}",
            s.missing_rate,
            s.labeled_rate,
            s.ablation,
            s.config
                .map_or_else(|| "selected".to_string(), |c| c.to_string()),
            s.mean_accuracy,
            s.std_accuracy,
            s.n,
            s.failures
        );
    }
    let failures = outcome.failures();
    if failures > 0 {
        eprintln!("{failures} trial(s) failed; see trials.csv");
    }
    eprintln!("results written to {}", cfg.out_dir.display());
    Ok(failures == 0)
}

fn stats(args: StatsArgs) -> Result<()> {
    let layout = match args.n_datasets {
        Some(n) => StatsInput::Ranks { n_datasets: n },
        None => StatsInput::Accuracies,
    };
    let report = run_stats(
        &args.input,
        layout,
        &args.out_dir,
        args.control.as_deref(),
        args.alpha,
    )?;
    print!("{}", report.to_text());
    Ok(())
}

fn impute(args: ImputeArgs) -> Result<()> {
    let ds = args.data.load()?;
    let weighting = match args.weighting {
        WeightingArg::Uniform => Weighting::Uniform,
        WeightingArg::InverseDistance => Weighting::InverseDistance,
    };
    let out = knn_impute(
        &ds,
        &ImputeSpec {
            k: args.k,
            weighting,
        },
    )?;
    std::fs::create_dir_all(&args.out_dir)?;
    for v in 0..out.n_views() {
        write_matrix(
            &args.out_dir.join(format!("view_{}.csv", v + 1)),
            out.view(v),
        )?;
    }
    Ok(())
}

fn rules(args: RulesArgs) -> Result<()> {
    let model = TrainedModel::load(&args.model)?;
    let views: Vec<usize> = match args.view {
        Some(v) if v == 0 || v > model.rules.len() => {
            bail!("view {v} out of range 1..={}", model.rules.len())
        }
        Some(v) => vec![v - 1],
        None => (0..model.rules.len()).collect(),
    };
    for v in views {
        let export = export_rules(
            &model.rules[v],
            model.state.consequents[v].view(),
            &args.features,
        )?;
        if args.json {
            println!("{}", serde_json::to_string_pretty(&export)?);
        } else {
            println!("View {}", v + 1);
            print!("{}", export.to_text());
        }
    }
    Ok(())
}

fn fit_cmd(args: FitArgs) -> Result<()> {
    let text = match &args.hyperparams {
        Some(p) => {
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?
        }
        None => String::new(),
    };
    let mut overrides = args.overrides;
    if let Some(s) = args.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(a) = args.ablation {
        overrides.push(format!("ablation={:?}", a.name()));
    }
    let hp = hyperparams_from_toml(&text, &overrides)?;
    let ds = args.data.load()?;
    let result = fit(&ds, &hp)?;
    result.model.save(&args.model)?;
    if let Some(p) = &args.trace {
        write_trace_csv(p, &result.trace)?;
    }
    if let Some(p) = &args.predictions {
        let mut w = output(Some(p))?;
        writeln!(w, "instance,predicted")?;
        for (i, c) in ds
            .unlabeled_idx()
            .iter()
            .zip(predict_transductive(&result.model.state))
        {
            writeln!(w, "{i},{c}")?;
        }
    }
    let last = result.trace.last().context("empty trace")?;
    eprintln!(
        "iterations={} converged={} objective={:.6e}",
        result.trace.len(),
        result.converged,
        last.objective.total
    );
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let model = TrainedModel::load(&args.model)?;
    let mut w = output(args.out.as_deref())?;
    writeln!(w, "instance,predicted")?;
    if args.views.is_empty() {
        for (i, c) in model
            .unlabeled_idx
            .iter()
            .zip(predict_transductive(&model.state))
        {
            writeln!(w, "{i},{c}")?;
        }
        return Ok(());
    }
    let views = args
        .views
        .iter()
        .map(|p| read_matrix(p))
        .collect::<ssimv_core::Result<Vec<_>>>()?;
    let n = views[0].nrows();
    if views.iter().any(|x| x.nrows() != n) {
        bail!("view files have different row counts");
    }
    let mask = args.mask.as_deref().map(read_matrix).transpose()?;
    if let Some(m) = &mask {
        if m.dim() != (n, views.len()) {
            bail!("mask must be {n} x {}", views.len());
        }
    }
    for i in 0..n {
        let rows: Vec<Vec<f64>> = views.iter().map(|x| x.row(i).to_vec()).collect();
        let present: Vec<Option<&[f64]>> = rows
            .iter()
            .enumerate()
            .map(|(v, r)| match &mask {
                Some(m) if m[[i, v]] == 0.0 => None,
                _ => Some(r.as_slice()),
            })
            .collect();
        writeln!(w, "{i},{}", predict_inductive(&model, &present)?)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Stats(a) => stats(a).map(|_| true),
        Command::Impute(a) => impute(a).map(|_| true),
        Command::Rules(a) => rules(a).map(|_| true),
        Command::Fit(a) => fit_cmd(a).map(|_| true),
        Command::Predict(a) => predict(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
