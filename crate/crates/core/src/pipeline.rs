//! End-to-end runs over a JSON configuration: the trivariate logistic
//! simulation study and the held-out application study.

use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::angular::{AngularModel, Family};
use crate::baselines::{estimate_moments, simple_krige, IndicatorKriger};
use crate::dataio::{jitter, load_csv, split, MultivariateSeries};
use crate::distribution::{GaussianConditional, GridDistribution};
use crate::error::{Error, Result};
use crate::margins::{fit_margins, transform_series, MarginModel};
use crate::optim::NelderMeadConfig;
use crate::ppfit::{self, radial_cutoff, radial_threshold, FitConfig, FitReport};
use crate::predict::{back_transform, conditional_density, conditional_density_at, QuadConfig};
use crate::records::{write_json, write_predictions_csv, PredictionRecord, PredictionSummary, Scale};
use crate::scoring::{
    pit_histogram, score_forecasts, write_scores_csv, PitHistogram, QuantileWeight, ScoreConfig, ScoreReport,
    DEFAULT_TAUS,
};
use crate::simulate::{exact_conditional_density, sample_logistic};

pub const METHOD_ANGULAR: &str = "angular";
pub const METHOD_KRIGING: &str = "kriging";
pub const METHOD_INDICATOR: &str = "indicator_kriging";

/// Evenly spaced thresholds `start, start + step, ..., stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for UGrid {
    fn default() -> Self {
        Self { start: 10.0, stop: 105.0, step: 0.25 }
    }
}

impl UGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0 && self.stop > self.start && self.start.is_finite() && self.stop.is_finite()) {
            return Err(Error::Config("u grid needs start < stop and a positive step".into()));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| self.start + i as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimStudyConfig {
    pub n: usize,
    pub d: usize,
    pub beta: f64,
    /// Number of rows, ranked by the sum of the observed components, to predict.
    pub top: usize,
    pub bins: usize,
    /// Observed components for the exact-versus-approximate density tables.
    pub density_cases: Vec<Vec<f64>>,
}

impl Default for SimStudyConfig {
    fn default() -> Self {
        Self {
            n: 5000,
            d: 3,
            beta: 0.3,
            top: 1000,
            bins: 10,
            density_cases: vec![vec![0.23, 0.24], vec![5.37, 6.66], vec![40.0, 55.0]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub margin_quantile: f64,
    pub radial_quantile: f64,
    pub family: Family,
    /// Expected number of data columns, checked against the input when set.
    pub dim: Option<usize>,
    /// Column to predict; the last column when unset.
    pub hidden_column: Option<String>,
    pub jitter_half_width: f64,
    pub every_kth: usize,
    pub u_grid: UGrid,
    /// Points per u cell in the indicator-kriging predictive grid.
    pub ik_subdivisions: usize,
    /// Grid points for the discretized kriging forecast.
    pub krige_grid_points: usize,
    pub quad: QuadConfig,
    pub quantiles: Vec<f64>,
    pub weight: QuantileWeight,
    pub p_points: usize,
    pub fit_starts: usize,
    pub fit_max_evals: usize,
    pub sim: SimStudyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            output_dir: PathBuf::from("out"),
            seed: 2012,
            margin_quantile: 0.93,
            radial_quantile: 0.93,
            family: Family::PairwiseBeta,
            dim: None,
            hidden_column: None,
            jitter_half_width: 0.5,
            every_kth: 3,
            u_grid: UGrid::default(),
            ik_subdivisions: 4,
            krige_grid_points: 1025,
            quad: QuadConfig::default(),
            quantiles: DEFAULT_TAUS.to_vec(),
            weight: QuantileWeight::Above(0.85),
            p_points: 2000,
            fit_starts: 5,
            fit_max_evals: 10_000,
            sim: SimStudyConfig::default(),
        }
    }
}

fn open_unit(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: RunConfig = crate::records::read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !open_unit(self.margin_quantile) || !open_unit(self.radial_quantile) {
            return bad("margin and radial quantiles must lie in (0, 1)".into());
        }
        if let Some(q) = self.quantiles.iter().find(|q| !open_unit(**q)) {
            return bad(format!("report quantile {q} outside (0, 1)"));
        }
        if self.every_kth < 2 {
            return bad("every_kth must be at least 2".into());
        }
        if !(self.jitter_half_width >= 0.0) {
            return bad("jitter half width must be nonnegative".into());
        }
        self.u_grid.values()?;
        if self.fit_starts == 0 || self.p_points == 0 || self.krige_grid_points < 3 {
            return bad("fit_starts, p_points and krige_grid_points must be positive".into());
        }
        let s = &self.sim;
        if s.d < 2 || s.top == 0 || s.top > s.n || s.bins == 0 {
            return bad("simulation study needs d >= 2 and 1 <= top <= n".into());
        }
        if !(s.beta > 0.0 && s.beta <= 1.0) {
            return bad(format!("simulation beta {} outside (0, 1]", s.beta));
        }
        if let Some(c) = s.density_cases.iter().find(|c| c.len() + 1 != s.d) {
            return bad(format!("density case {c:?} needs {} components", s.d - 1));
        }
        Ok(())
    }

    pub fn fit_config(&self) -> FitConfig {
        let base = FitConfig::default();
        FitConfig {
            starts: self.fit_starts,
            seed: self.seed,
            optimizer: NelderMeadConfig { max_evals: self.fit_max_evals, ..base.optimizer },
            ..base
        }
    }

    pub fn score_config(&self) -> ScoreConfig {
        ScoreConfig { taus: self.quantiles.clone(), p_points: self.p_points, weight: self.weight, bins: 10 }
    }

    /// Index of the hidden column in `columns`.
    pub fn hidden_index(&self, columns: &[String]) -> Result<usize> {
        match &self.hidden_column {
            None => Ok(columns.len() - 1),
            Some(name) => columns
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::Config(format!("hidden column `{name}` is not in the data ({columns:?})"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl ArtifactEntry {
    pub fn of(path: &Path, label: String) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self { path: label, sha256: hex::encode(Sha256::digest(&data)), bytes: data.len() as u64 })
    }
}

/// Provenance for one output directory. Output paths are relative to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    pub inputs: Vec<ArtifactEntry>,
    pub outputs: Vec<ArtifactEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Hashes the listed files and writes `manifest.json` into `dir`.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    cfg: &RunConfig,
    inputs: &[PathBuf],
    outputs: &[&str],
) -> Result<Manifest> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        inputs: inputs
            .iter()
            .map(|p| ArtifactEntry::of(p, p.display().to_string()))
            .collect::<Result<_>>()?,
        outputs: outputs
            .iter()
            .map(|name| ArtifactEntry::of(&dir.join(name), name.to_string()))
            .collect::<Result<_>>()?,
    };
    write_json(dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Consecutive daily dates for synthetic series.
pub fn synthetic_dates(n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
    (0..n).map(|i| start.checked_add_days(Days::new(i as u64)).unwrap()).collect()
}

/// Discretizes a Gaussian forecast over ±8 standard deviations.
pub fn gaussian_grid(g: &GaussianConditional, points: usize) -> Result<GridDistribution> {
    let points = points.max(3);
    if !(g.sd > 0.0) {
        let w = 1e-9 * g.mean.abs().max(1.0);
        return GridDistribution::from_parts(vec![g.mean - w, g.mean], vec![0.0, 0.0], vec![0.0, 1.0]);
    }
    let n = Normal::new(g.mean, g.sd).map_err(|e| Error::invalid(e.to_string()))?;
    let grid: Vec<f64> = (0..points)
        .map(|i| g.mean + g.sd * (-8.0 + 16.0 * i as f64 / (points - 1) as f64))
        .collect();
    let dens = grid.iter().map(|&y| n.pdf(y)).collect();
    let cdf = grid.iter().map(|&y| n.cdf(y)).collect();
    GridDistribution::from_parts(grid, dens, cdf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    pub conditioning: Vec<f64>,
    pub t: Vec<f64>,
    pub approx: Vec<f64>,
    pub exact: Vec<f64>,
    pub sup_norm: f64,
    pub exact_peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPrediction {
    pub row: usize,
    pub z: Vec<f64>,
    pub pit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStudyOutcome {
    /// Largest excluded sum of the observed components (0 when every row is kept).
    pub cutoff: f64,
    pub n_predicted: usize,
    pub histogram: PitHistogram,
    pub chi_square: f64,
    pub chi_square_p: f64,
    pub bins_in_band: usize,
    pub predictions: Vec<SimPrediction>,
    pub tables: Vec<DensityTable>,
}

/// Exact and approximate conditional densities of the last component on the
/// approximation's grid.
pub fn density_table(z_obs: &[f64], beta: f64, quad: &QuadConfig) -> Result<DensityTable> {
    let model = AngularModel::logistic(beta, z_obs.len() + 1)?;
    let cd = conditional_density(z_obs, &model, quad)?;
    let t = cd.grid().to_vec();
    let approx = cd.density().to_vec();
    let exact = t
        .iter()
        .map(|&x| exact_conditional_density(z_obs, x, beta))
        .collect::<Result<Vec<_>>>()?;
    let sup_norm = approx.iter().zip(&exact).map(|(a, e)| (a - e).abs()).fold(0.0, f64::max);
    let exact_peak = exact.iter().cloned().fold(0.0, f64::max);
    Ok(DensityTable { conditioning: z_obs.to_vec(), t, approx, exact, sup_norm, exact_peak })
}

/// Simulates logistic vectors, predicts the last component for the rows with
/// the largest observed sums, and collects PIT values and density tables.
pub fn run_sim_study(cfg: &RunConfig) -> Result<SimStudyOutcome> {
    cfg.validate()?;
    let s = &cfg.sim;
    let sample = sample_logistic(s.n, s.d, s.beta, cfg.seed)?;
    let model = AngularModel::logistic(s.beta, s.d)?;
    let sums: Vec<f64> = sample.values.iter().map(|r| r[..s.d - 1].iter().sum()).collect();
    let mut order: Vec<usize> = (0..s.n).collect();
    order.sort_by(|&a, &b| sums[b].total_cmp(&sums[a]).then(a.cmp(&b)));
    let cutoff = if s.top < s.n { sums[order[s.top]] } else { 0.0 };
    let mut chosen: Vec<usize> = order[..s.top].to_vec();
    chosen.sort_unstable();
    info!("predicting {} rows with observed sum above {cutoff:.4}", chosen.len());

    let predictions: Vec<SimPrediction> = chosen
        .par_iter()
        .map(|&i| {
            let z = &sample.values[i];
            let cd = conditional_density(&z[..s.d - 1], &model, &cfg.quad)?;
            Ok(SimPrediction { row: i, z: z.clone(), pit: cd.cdf(z[s.d - 1]).clamp(0.0, 1.0) })
        })
        .collect::<Result<_>>()?;
    let pits: Vec<f64> = predictions.iter().map(|p| p.pit).collect();
    let histogram = pit_histogram(&pits, s.bins)?;
    let (chi_square, chi_square_p) = histogram.chi_square();
    let bins_in_band = s.bins - histogram.bins_outside_band();
    let tables = if s.d == 3 {
        s.density_cases
            .iter()
            .map(|c| density_table(c, s.beta, &cfg.quad))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    Ok(SimStudyOutcome {
        cutoff,
        n_predicted: predictions.len(),
        histogram,
        chi_square,
        chi_square_p,
        bins_in_band,
        predictions,
        tables,
    })
}

#[derive(Serialize)]
struct TableRow {
    t: f64,
    approx: f64,
    exact: f64,
}

/// Runs the simulation study and writes its artifacts and manifest to `cfg.output_dir`.
pub fn run_sim_study_to_dir(cfg: &RunConfig) -> Result<(SimStudyOutcome, Manifest)> {
    let out = run_sim_study(cfg)?;
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    let mut outputs: Vec<String> = Vec::new();

    let pits_path = dir.join("sim_pits.csv");
    let mut w = csv::Writer::from_path(&pits_path)?;
    let d = cfg.sim.d;
    let mut header = vec!["row".to_string()];
    header.extend((1..=d).map(|j| format!("z{j}")));
    header.push("pit".into());
    w.write_record(&header)?;
    for p in &out.predictions {
        let mut rec = vec![p.row.to_string()];
        rec.extend(p.z.iter().map(|v| v.to_string()));
        rec.push(p.pit.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&pits_path, e))?;
    outputs.push("sim_pits.csv".into());

    for (k, t) in out.tables.iter().enumerate() {
        let name = format!("density_table_{}.csv", k + 1);
        let path = dir.join(&name);
        let mut w = csv::Writer::from_path(&path)?;
        for ((&t, &approx), &exact) in t.t.iter().zip(&t.approx).zip(&t.exact) {
            w.serialize(TableRow { t, approx, exact })?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        outputs.push(name);
    }

    #[derive(Serialize)]
    struct Summary<'a> {
        cutoff: f64,
        n_predicted: usize,
        histogram: &'a PitHistogram,
        chi_square: f64,
        chi_square_p: f64,
        bins_in_band: usize,
        density_tables: Vec<serde_json::Value>,
    }
    let summary = Summary {
        cutoff: out.cutoff,
        n_predicted: out.n_predicted,
        histogram: &out.histogram,
        chi_square: out.chi_square,
        chi_square_p: out.chi_square_p,
        bins_in_band: out.bins_in_band,
        density_tables: out
            .tables
            .iter()
            .enumerate()
            .map(|(k, t)| {
                serde_json::json!({
                    "file": format!("density_table_{}.csv", k + 1),
                    "conditioning": t.conditioning,
                    "sup_norm": t.sup_norm,
                    "exact_peak": t.exact_peak,
                })
            })
            .collect(),
    };
    write_json(dir.join("sim_summary.json"), &summary)?;
    outputs.push("sim_summary.json".into());

    let names: Vec<&str> = outputs.iter().map(String::as_str).collect();
    let manifest = write_manifest(dir, "run sim-study", cfg, &[], &names)?;
    Ok((out, manifest))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApplicationOutcome {
    pub series: MultivariateSeries,
    pub hidden: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub margins: Vec<MarginModel>,
    pub fit: FitReport,
    /// Threshold on the sum of the observed Fréchet-scale test components.
    pub test_cutoff: f64,
    /// Rows of the jittered series that were predicted.
    pub predicted_rows: Vec<usize>,
    pub records: Vec<PredictionRecord>,
    pub summaries: Vec<PredictionSummary>,
    pub reports: Vec<ScoreReport>,
}

fn drop_column(row: &[f64], hidden: usize) -> Vec<f64> {
    row.iter().enumerate().filter(|(j, _)| *j != hidden).map(|(_, v)| *v).collect()
}

/// Validates the configuration against the data's header before any fitting.
pub fn check_application_input(cfg: &RunConfig, series: &MultivariateSeries) -> Result<usize> {
    cfg.validate()?;
    let d = series.n_cols();
    if d < 3 {
        return Err(Error::Config(format!("the application needs at least 3 columns, found {d}")));
    }
    if let Some(want) = cfg.dim {
        if want != d {
            return Err(Error::Config(format!("config expects {want} columns, data has {d}")));
        }
    }
    if cfg.family == Family::Logistic && d > 3 {
        return Err(Error::Config("the logistic angular model is available for d <= 3 only".into()));
    }
    cfg.hidden_index(&series.column_names)
}

/// Jitter, split, fit margins and the angular model on the training rows, then
/// predict the hidden column for test rows with large observed components and
/// score all three methods.
pub fn run_application(cfg: &RunConfig, raw: &MultivariateSeries) -> Result<ApplicationOutcome> {
    let hidden = check_application_input(cfg, raw)?;
    let series = jitter(raw, cfg.jitter_half_width, cfg.seed)?;
    let idx = split(&series, cfg.every_kth)?;
    let train = series.select_rows(&idx.train_rows);
    let test = series.select_rows(&idx.test_rows);
    info!("{} training rows, {} test rows", train.n_rows(), test.n_rows());

    let margins = fit_margins(&train, cfg.margin_quantile)?;
    let z_train = transform_series(&train, &margins)?;
    let z_test = transform_series(&test, &margins)?;
    let sample = radial_threshold(&z_train.rows, cfg.radial_quantile)?;
    let fitted = ppfit::fit(&sample, cfg.family, &cfg.fit_config())?;
    let fit = FitReport::new(&fitted, &sample);
    let model = fitted.model;
    info!("angular fit on {} points: {:?}", fit.n_used, model.params());

    let obs_sums: Vec<f64> = z_test.rows.iter().map(|r| drop_column(r, hidden).iter().sum()).collect();
    let test_cutoff = radial_cutoff(&obs_sums, cfg.radial_quantile)?;
    let chosen: Vec<usize> = (0..test.n_rows()).filter(|&i| obs_sums[i] > test_cutoff).collect();
    if chosen.is_empty() {
        return Err(Error::InsufficientData("no test rows exceed the radial cutoff".into()));
    }
    info!("predicting {} test rows with observed radius above {test_cutoff:.4}", chosen.len());

    let moments = estimate_moments(&train.rows)?;
    let u_grid = cfg.u_grid.values()?;
    let kriger = IndicatorKriger::new(&train.rows, hidden, &u_grid)?;
    let margin = &margins[hidden];

    struct One {
        recs: Vec<PredictionRecord>,
        normalizer: f64,
    }
    let per_obs: Vec<One> = chosen
        .par_iter()
        .map(|&i| {
            let obs_id = idx.test_rows[i];
            let date = test.timestamps[i];
            let z_obs = drop_column(&z_test.rows[i], hidden);
            let y_obs = drop_column(&test.rows[i], hidden);
            let cd = conditional_density_at(&z_obs, hidden, &model, &cfg.quad)?;
            let orig = back_transform(&cd, margin)?;
            let g = simple_krige(&y_obs, hidden, &moments)?;
            let ik = kriger.curve(&y_obs)?.to_distribution(cfg.ik_subdivisions)?;
            let rec = |method: &str, scale, dist| PredictionRecord {
                obs_id,
                date,
                method: method.to_string(),
                scale,
                dist,
            };
            Ok(One {
                normalizer: cd.normalizer,
                recs: vec![
                    rec(METHOD_ANGULAR, Scale::Frechet, cd.dist),
                    rec(METHOD_ANGULAR, Scale::Original, orig.dist),
                    rec(METHOD_KRIGING, Scale::Original, gaussian_grid(&g, cfg.krige_grid_points)?),
                    rec(METHOD_INDICATOR, Scale::Original, ik),
                ],
            })
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for (one, &i) in per_obs.into_iter().zip(&chosen) {
        for r in one.recs {
            let realized = match r.scale {
                Scale::Frechet => z_test.rows[i][hidden],
                Scale::Original => test.rows[i][hidden],
            };
            let normalizer = (r.method == METHOD_ANGULAR).then_some(one.normalizer);
            summaries.push(PredictionSummary::new(&r, Some(realized), normalizer));
            records.push(r);
        }
    }

    let realized: Vec<f64> = chosen.iter().map(|&i| test.rows[i][hidden]).collect();
    let score_cfg = cfg.score_config();
    let reports = [METHOD_ANGULAR, METHOD_KRIGING, METHOD_INDICATOR]
        .iter()
        .map(|&m| {
            let dists: Vec<&GridDistribution> = records
                .iter()
                .filter(|r| r.method == m && r.scale == Scale::Original)
                .map(|r| &r.dist)
                .collect();
            score_forecasts(m, &dists, &realized, &score_cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ApplicationOutcome {
        hidden,
        n_train: idx.train_rows.len(),
        n_test: idx.test_rows.len(),
        margins,
        fit,
        test_cutoff,
        predicted_rows: chosen.iter().map(|&i| idx.test_rows[i]).collect(),
        records,
        summaries,
        reports,
        series,
    })
}

pub const APPLICATION_FILES: [&str; 7] = [
    "margins.json",
    "angular_fit.json",
    "predictions.csv",
    "predictions.json",
    "scores.json",
    "scores.csv",
    "application_summary.json",
];

/// Loads `cfg.input`, runs the application study and writes its artifacts.
pub fn run_application_to_dir(cfg: &RunConfig) -> Result<(ApplicationOutcome, Manifest)> {
    let input = cfg
        .input
        .clone()
        .ok_or_else(|| Error::Config("the application run needs an input CSV".into()))?;
    let raw = load_csv(&input)?;
    // fail on configuration problems before writing anything
    check_application_input(cfg, &raw)?;
    let out = run_application(cfg, &raw)?;
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    write_json(dir.join("margins.json"), &out.margins)?;
    write_json(dir.join("angular_fit.json"), &out.fit)?;
    write_predictions_csv(dir.join("predictions.csv"), &out.records)?;
    write_json(dir.join("predictions.json"), &out.summaries)?;
    write_json(dir.join("scores.json"), &out.reports)?;
    write_scores_csv(dir.join("scores.csv"), &out.reports)?;
    let summary = serde_json::json!({
        "hidden_column": out.series.column_names[out.hidden],
        "n_rows": out.series.n_rows(),
        "n_train": out.n_train,
        "n_test": out.n_test,
        "test_cutoff": out.test_cutoff,
        "n_predicted": out.predicted_rows.len(),
        "methods": out.reports.iter().map(|r| serde_json::json!({
            "method": r.method,
            "mean_log_score": crate::scoring::ExtendedFloat(r.mean_log_score),
            "n_outside_support": r.n_outside_support,
            "mean_crps": r.mean_crps,
            "mean_weighted_crps": r.mean_weighted_crps,
            "coverage": r.quantile_skill.iter().map(|q| serde_json::json!({
                "tau": q.tau, "coverage": q.coverage, "sampling_error": q.sampling_error, "qvs": q.qvs,
            })).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    });
    write_json(dir.join("application_summary.json"), &summary)?;
    let manifest = write_manifest(dir, "run application", cfg, &[input], &APPLICATION_FILES)?;
    Ok((out, manifest))
}
