//! Command-line front end for conditional density prediction of large values.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use condext_core::angular::Family;
use condext_core::baselines::{estimate_moments, simple_krige, IndicatorKriger};
use condext_core::dataio::{load_csv, MultivariateSeries};
use condext_core::margins::{fit_margins, transform_series, MarginModel};
use condext_core::pipeline::{
    gaussian_grid, run_application_to_dir, run_sim_study_to_dir, synthetic_dates, write_manifest, RunConfig,
    METHOD_ANGULAR, METHOD_INDICATOR, METHOD_KRIGING,
};
use condext_core::ppfit::{self, radial_threshold, FitReport};
use condext_core::predict::{back_transform, gated_conditional_density};
use condext_core::records::{
    read_json, read_predictions_csv, write_json, write_predictions_csv, PredictionRecord, PredictionSummary, Scale,
};
use condext_core::scoring::{score_forecasts, write_scores_csv, QuantileWeight};
use condext_core::simulate::sample_logistic;

#[derive(Parser)]
#[command(name = "condext", version, about = "Conditional densities for large observations via angular-measure models")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate symmetric logistic vectors with unit-Fréchet margins.
    Simulate {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit an empirical-body, GPD-tail margin to every column.
    FitMargins {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        quantile: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Map data to the unit-Fréchet scale with fitted margins.
    Transform {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        margins: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit an angular model to the radially largest Fréchet-scale rows.
    FitAngular {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        family: Option<Family>,
        #[arg(long)]
        quantile: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict the hidden column of each row from the other columns.
    Predict {
        /// Original-scale data with `--margins`, Fréchet-scale data otherwise.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        margins: Option<PathBuf>,
        #[arg(long)]
        hidden: Option<String>,
        /// Radius below which rows are skipped; the fit's threshold by default.
        #[arg(long)]
        r0: Option<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Kriging baselines on the original scale.
    Baseline {
        #[command(subcommand)]
        kind: BaselineKind,
    },
    /// Score prediction files against realized values.
    Score {
        /// Prediction CSV files; repeat for several methods.
        #[arg(long, required = true)]
        predictions: Vec<PathBuf>,
        /// Prediction summary JSON files holding the realized values.
        #[arg(long, required = true)]
        realized: Vec<PathBuf>,
        /// Quantile weight for the weighted CRPS: `1`, `p>c` or `p<c`.
        #[arg(long)]
        weights: Option<QuantileWeight>,
        #[arg(long, default_value = "original")]
        scale: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// End-to-end studies.
    Run {
        #[command(subcommand)]
        study: Study,
    },
}

#[derive(Args)]
struct BaselineArgs {
    /// Training rows, original scale.
    #[arg(long)]
    train: PathBuf,
    /// Rows to predict, original scale.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum BaselineKind {
    /// Simple kriging with the empirical covariance.
    Krige(BaselineArgs),
    /// Indicator kriging with a monotone-smoothed exceedance curve.
    Ikrige(BaselineArgs),
}

#[derive(Subcommand)]
enum Study {
    /// Logistic simulation study with PIT histogram and density tables.
    SimStudy {
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Held-out prediction of one station from the others, with scores.
    Application {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn input_path(given: &Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    given
        .clone()
        .or_else(|| cfg.input.clone())
        .context("no input file: pass --input or set `input` in the config")
}

fn hidden_index(name: &Option<String>, cfg: &RunConfig, series: &MultivariateSeries) -> Result<usize> {
    let cfg = RunConfig { hidden_column: name.clone().or_else(|| cfg.hidden_column.clone()), ..cfg.clone() };
    Ok(cfg.hidden_index(&series.column_names)?)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn drop_column(row: &[f64], hidden: usize) -> Vec<f64> {
    row.iter().enumerate().filter(|(j, _)| *j != hidden).map(|(_, v)| *v).collect()
}

fn write_predictions(
    dir: &Path,
    command: &str,
    cfg: &RunConfig,
    inputs: &[PathBuf],
    records: &[PredictionRecord],
    summaries: &[PredictionSummary],
) -> Result<()> {
    create_dir(dir)?;
    write_predictions_csv(dir.join("predictions.csv"), records)?;
    write_json(dir.join("predictions.json"), summaries)?;
    write_manifest(dir, command, cfg, inputs, &["predictions.csv", "predictions.json"])?;
    println!("{} predictions written to {}", summaries.len(), dir.display());
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig, n: Option<usize>, d: Option<usize>, beta: Option<f64>, out: &Path) -> Result<()> {
    let (n, d, beta) = (n.unwrap_or(cfg.sim.n), d.unwrap_or(cfg.sim.d), beta.unwrap_or(cfg.sim.beta));
    let sample = sample_logistic(n, d, beta, cfg.seed)?;
    let names = (1..=d).map(|j| format!("z{j}")).collect();
    let series = MultivariateSeries::new(synthetic_dates(n), names, sample.values)?;
    series.save_csv(out)?;
    println!("{n} draws of dimension {d} (beta = {beta}) written to {}", out.display());
    Ok(())
}

fn cmd_fit_margins(cfg: &RunConfig, input: &Path, quantile: Option<f64>, out: &Path) -> Result<()> {
    let series = load_csv(input)?;
    let margins = fit_margins(&series, quantile.unwrap_or(cfg.margin_quantile))?;
    for m in &margins {
        println!(
            "{}: u = {:.3}, psi = {:.3} ({:.3}), xi = {:.3} ({:.3})",
            m.name, m.gpd.threshold, m.gpd.psi, m.gpd.se_psi, m.gpd.xi, m.gpd.se_xi
        );
    }
    write_json(out, &margins)?;
    Ok(())
}

fn cmd_transform(input: &Path, margins: &Path, out: &Path) -> Result<()> {
    let series = load_csv(input)?;
    let margins: Vec<MarginModel> = read_json(margins)?;
    transform_series(&series, &margins)?.save_csv(out)?;
    Ok(())
}

fn cmd_fit_angular(cfg: &RunConfig, input: &Path, family: Option<Family>, quantile: Option<f64>, out: &Path) -> Result<()> {
    let z = load_csv(input)?;
    let sample = radial_threshold(&z.rows, quantile.unwrap_or(cfg.radial_quantile))?;
    let fitted = ppfit::fit(&sample, family.unwrap_or(cfg.family), &cfg.fit_config())?;
    let report = FitReport::new(&fitted, &sample);
    write_json(out, &report)?;
    println!(
        "{:?} fit on {} rows above r0 = {:.4}: nll {:.4}, params {}",
        report.family, report.n_used, report.r0, report.nll, report.params
    );
    if !fitted.hessian_ok() {
        log::warn!("observed information is not positive definite; standard errors unavailable");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_predict(
    cfg: &RunConfig,
    input: &Path,
    fit: &Path,
    margins: Option<&Path>,
    hidden: &Option<String>,
    r0: Option<f64>,
    out_dir: &Path,
) -> Result<()> {
    let data = load_csv(input)?;
    let report: FitReport = read_json(fit)?;
    let model = report.model()?;
    if model.dim() != data.n_cols() {
        bail!("model dimension {} does not match {} data columns", model.dim(), data.n_cols());
    }
    let h = hidden_index(hidden, cfg, &data)?;
    let margins_path = margins;
    let margins: Option<Vec<MarginModel>> = margins.map(read_json).transpose()?;
    let z = match &margins {
        Some(m) => transform_series(&data, m)?,
        None => data.clone(),
    };
    let r0 = r0.unwrap_or(report.r0);
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    let mut skipped = 0usize;
    for i in 0..data.n_rows() {
        let z_obs = drop_column(&z.rows[i], h);
        if z_obs.iter().sum::<f64>() < r0 {
            skipped += 1;
            continue;
        }
        let Some(cd) = gated_conditional_density(&z_obs, h, &model, r0, &cfg.quad)? else {
            continue;
        };
        let date = data.timestamps[i];
        let mut push = |scale, dist, realized| {
            let rec = PredictionRecord { obs_id: i, date, method: METHOD_ANGULAR.into(), scale, dist };
            summaries.push(PredictionSummary::new(&rec, Some(realized), Some(cd.normalizer)));
            records.push(rec);
        };
        if let Some(m) = &margins {
            let orig = back_transform(&cd, &m[h])?;
            push(Scale::Frechet, cd.dist.clone(), z.rows[i][h]);
            push(Scale::Original, orig.dist, data.rows[i][h]);
        } else {
            push(Scale::Frechet, cd.dist.clone(), z.rows[i][h]);
        }
    }
    if skipped > 0 {
        log::info!("{skipped} rows with observed radius below {r0:.4} skipped");
    }
    let mut inputs = vec![input.to_path_buf(), fit.to_path_buf()];
    inputs.extend(margins_path.map(Path::to_path_buf));
    write_predictions(out_dir, "predict", cfg, &inputs, &records, &summaries)
}

fn cmd_baseline(cfg: &RunConfig, indicator: bool, args: &BaselineArgs) -> Result<()> {
    let train = load_csv(&args.train)?;
    let input = input_path(&args.input, cfg)?;
    let data = load_csv(&input)?;
    if train.column_names != data.column_names {
        bail!("training and prediction files have different columns");
    }
    let h = hidden_index(&args.hidden, cfg, &data)?;
    let (method, dists) = if indicator {
        let kriger = IndicatorKriger::new(&train.rows, h, &cfg.u_grid.values()?)?;
        let dists = data
            .rows
            .iter()
            .map(|r| Ok(kriger.curve(&drop_column(r, h))?.to_distribution(cfg.ik_subdivisions)?))
            .collect::<Result<Vec<_>>>()?;
        (METHOD_INDICATOR, dists)
    } else {
        let moments = estimate_moments(&train.rows)?;
        let dists = data
            .rows
            .iter()
            .map(|r| Ok(gaussian_grid(&simple_krige(&drop_column(r, h), h, &moments)?, cfg.krige_grid_points)?))
            .collect::<Result<Vec<_>>>()?;
        (METHOD_KRIGING, dists)
    };
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for (i, dist) in dists.into_iter().enumerate() {
        let rec = PredictionRecord {
            obs_id: i,
            date: data.timestamps[i],
            method: method.into(),
            scale: Scale::Original,
            dist,
        };
        summaries.push(PredictionSummary::new(&rec, Some(data.rows[i][h]), None));
        records.push(rec);
    }
    let command = if indicator { "baseline ikrige" } else { "baseline krige" };
    write_predictions(&args.out_dir, command, cfg, &[args.train.clone(), input], &records, &summaries)
}

fn cmd_score(
    cfg: &RunConfig,
    predictions: &[PathBuf],
    realized: &[PathBuf],
    weights: Option<QuantileWeight>,
    scale: &str,
    out_dir: &Path,
) -> Result<()> {
    let scale = match scale {
        "original" => Scale::Original,
        "frechet" => Scale::Frechet,
        other => bail!("unknown scale `{other}`; use original or frechet"),
    };
    let mut truth: HashMap<usize, f64> = HashMap::new();
    for p in realized {
        let summaries: Vec<PredictionSummary> = read_json(p)?;
        for s in summaries.into_iter().filter(|s| s.scale == scale) {
            if let Some(y) = s.realized {
                truth.entry(s.obs_id).or_insert(y);
            }
        }
    }
    let mut by_method: Vec<(String, Vec<PredictionRecord>)> = Vec::new();
    for p in predictions {
        let recs: Vec<_> = read_predictions_csv(p)?.into_iter().filter(|r| r.scale == scale).collect();
        if recs.is_empty() {
            log::warn!("{} holds no {scale}-scale predictions", p.display());
        }
        for r in recs {
            match by_method.iter_mut().find(|(m, _)| *m == r.method) {
                Some((_, v)) => v.push(r),
                None => by_method.push((r.method.clone(), vec![r])),
            }
        }
    }
    if by_method.is_empty() {
        bail!("no {scale}-scale predictions found");
    }
    let mut score_cfg = cfg.score_config();
    if let Some(w) = weights {
        score_cfg.weight = w;
    }
    let mut reports = Vec::new();
    for (method, recs) in &by_method {
        let ys = recs
            .iter()
            .map(|r| truth.get(&r.obs_id).copied().with_context(|| format!("no realized value for observation {}", r.obs_id)))
            .collect::<Result<Vec<f64>>>()?;
        let dists: Vec<_> = recs.iter().map(|r| &r.dist).collect();
        let rep = score_forecasts(method, &dists, &ys, &score_cfg)?;
        println!(
            "{method}: n = {}, mean log score {}, mean CRPS {:.4}, weighted CRPS ({}) {:.4}",
            rep.n, rep.mean_log_score, rep.mean_crps, rep.weight, rep.mean_weighted_crps
        );
        reports.push(rep);
    }
    create_dir(out_dir)?;
    write_json(out_dir.join("scores.json"), &reports)?;
    write_scores_csv(out_dir.join("scores.csv"), &reports)?;
    let mut inputs = predictions.to_vec();
    inputs.extend_from_slice(realized);
    write_manifest(out_dir, "score", cfg, &inputs, &["scores.json", "scores.csv"])?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    match &cli.command {
        Command::Simulate { n, d, beta, out } => cmd_simulate(&cfg, *n, *d, *beta, out),
        Command::FitMargins { input, quantile, out } => cmd_fit_margins(&cfg, &input_path(input, &cfg)?, *quantile, out),
        Command::Transform { input, margins, out } => cmd_transform(&input_path(input, &cfg)?, margins, out),
        Command::FitAngular { input, family, quantile, out } => {
            cmd_fit_angular(&cfg, &input_path(input, &cfg)?, *family, *quantile, out)
        }
        Command::Predict { input, fit, margins, hidden, r0, out_dir } => cmd_predict(
            &cfg,
            &input_path(input, &cfg)?,
            fit,
            margins.as_deref(),
            hidden,
            *r0,
            out_dir,
        ),
        Command::Baseline { kind } => match kind {
            BaselineKind::Krige(a) => cmd_baseline(&cfg, false, a),
            BaselineKind::Ikrige(a) => cmd_baseline(&cfg, true, a),
        },
        Command::Score { predictions, realized, weights, scale, out_dir } => {
            cmd_score(&cfg, predictions, realized, *weights, scale, out_dir)
        }
        Command::Run { study } => match study {
            Study::SimStudy { out_dir } => {
                let mut cfg = cfg;
                if let Some(d) = out_dir {
                    cfg.output_dir = d.clone();
                }
                let (out, _) = run_sim_study_to_dir(&cfg)?;
                println!("cutoff: observed sum > {:.4}", out.cutoff);
                println!(
                    "{} predictions; {}/{} PIT bins within the binomial band; chi-square {:.2} (p = {:.3})",
                    out.n_predicted,
                    out.bins_in_band,
                    out.histogram.bin_counts.len(),
                    out.chi_square,
                    out.chi_square_p
                );
                for t in &out.tables {
                    println!(
                        "density table at {:?}: sup-norm {:.3e} (exact peak {:.3e})",
                        t.conditioning, t.sup_norm, t.exact_peak
                    );
                }
                println!("outputs in {}", cfg.output_dir.display());
                Ok(())
            }
            Study::Application { input, out_dir } => {
                let mut cfg = cfg;
                if let Some(i) = input {
                    cfg.input = Some(i.clone());
                }
                if let Some(d) = out_dir {
                    cfg.output_dir = d.clone();
                }
                let (out, _) = run_application_to_dir(&cfg)?;
                println!(
                    "{} training rows, {} test rows, {} predicted (observed radius > {:.4})",
                    out.n_train,
                    out.n_test,
                    out.predicted_rows.len(),
                    out.test_cutoff
                );
                for r in &out.reports {
                    println!(
                        "{}: mean log score {}, mean CRPS {:.3}, weighted CRPS {:.3}",
                        r.method, r.mean_log_score, r.mean_crps, r.mean_weighted_crps
                    );
                }
                println!("outputs in {}", cfg.output_dir.display());
                Ok(())
            }
        },
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
