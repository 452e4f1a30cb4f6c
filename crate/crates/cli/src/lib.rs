//! Front end for `dte estimate` and `dte simulate`.
//!
//! Both commands read a JSON [`RunConfig`], run the pipeline fully in
//! memory and only then write result files, so a failing run leaves no
//! output behind. Failures map to stable exit codes through [`ExitCode`].

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dte_core::bootstrap::{bootstrap_curves_counted, bootstrap_se, draw_multipliers, pointwise_band, uniform_band, BandEstimate, MultiplierDraws};
use dte_core::effects::{cdf_curve, dte, pte, qte, EffectCurve, QuantileGrid};
use dte_core::simulation::{estimate_runtime, run_monte_carlo_with, DgpConfig, MetricsTable, MonteCarloConfig};
use dte_core::{
    adjusted_cdf, assign_folds, crossfit_nuisance, derive_seed, make_threshold_grid, read_csv, validate_dataset, CdfEstimate, Dataset, Error, ErrorClass,
    GridSpec, LearnerSpec, NuisanceTensor, ThresholdGrid,
};

/// Raw estimates further than this outside `[0, 1]` are reported.
const EXCURSION_TOL: f64 = 1e-9;

/// Process exit status of a failed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Config = 2,
    Data = 3,
    Runtime = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: ExitCode::Config,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: ExitCode::Runtime,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e.class() {
            ErrorClass::Config => ExitCode::Config,
            ErrorClass::Data => ExitCode::Data,
            ErrorClass::Runtime => ExitCode::Runtime,
        };
        Self { code, message: e.to_string() }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Estimate,
    Simulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Effect {
    Cdf,
    Dte,
    Pte,
    Qte,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Inference {
    None,
    Pointwise,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Bins for probability effects: explicit edges, or steps of `h` from the first grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PteSpec {
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default)]
    pub edges: Option<Vec<f64>>,
}

fn default_learner() -> String {
    "linear".into()
}
fn default_grid() -> GridSpec {
    GridSpec::Quantiles { count: 9 }
}
fn default_effects() -> Vec<Effect> {
    vec![Effect::Dte]
}
fn default_taus() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}
fn default_inference() -> Inference {
    Inference::Pointwise
}
fn default_format() -> Format {
    Format::Json
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: Option<Mode>,
    /// CSV with columns `y`, `w` and covariates (estimate).
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default = "default_learner")]
    pub learner: String,
    #[serde(default)]
    pub learner_params: Option<serde_json::Value>,
    #[serde(default)]
    pub folds: Option<usize>,
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
    #[serde(default = "default_effects")]
    pub effects: Vec<Effect>,
    /// `(treated, control)` pairs of original arm labels; default: every arm against the first.
    #[serde(default)]
    pub contrasts: Option<Vec<(String, String)>>,
    #[serde(default)]
    pub pte: Option<PteSpec>,
    #[serde(default = "default_taus")]
    pub taus: Vec<f64>,
    /// Confirms the outcome is continuous so quantile effects are meaningful.
    #[serde(default)]
    pub continuous: bool,
    #[serde(default = "default_inference")]
    pub inference: Inference,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub b_draws: Option<usize>,
    /// For simulate, given values of these four replace those in the `mc` block.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Result file; standard output when absent.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_format")]
    pub format: Format,
    /// Optional CSV of the cross-fitted nuisance predictions.
    #[serde(default)]
    pub dump_nuisance: Option<PathBuf>,
    #[serde(default)]
    pub dgp: Option<DgpConfig>,
    #[serde(default)]
    pub mc: Option<MonteCarloConfig>,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub folds: Option<usize>,
    pub learner: Option<String>,
    pub alpha: Option<f64>,
    pub b_draws: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(f) = o.folds {
            self.folds = Some(f);
        }
        if let Some(l) = &o.learner {
            if *l != self.learner {
                self.learner_params = None;
            }
            self.learner = l.clone();
        }
        if let Some(a) = o.alpha {
            self.alpha = Some(a);
        }
        if let Some(b) = o.b_draws {
            self.b_draws = Some(b);
        }
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(p) = &o.out {
            self.output = Some(p.clone());
        }
    }

    pub fn folds(&self) -> usize {
        self.folds.unwrap_or(5)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(0.05)
    }

    pub fn b_draws(&self) -> usize {
        self.b_draws.unwrap_or(dte_core::bootstrap::DEFAULT_DRAWS)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn check_mode(&self, mode: Mode) -> CliResult<()> {
        match self.mode {
            Some(m) if m != mode => Err(CliError::config(format!("config declares mode {m:?} but the {mode:?} command was run"))),
            _ => Ok(()),
        }
    }

    pub fn learner_spec(&self) -> CliResult<LearnerSpec> {
        let spec = LearnerSpec::from_name(&self.learner, self.learner_params.clone(), derive_seed(self.seed(), &[1]))?;
        spec.validate()?;
        Ok(spec)
    }

    fn validate_estimate(&self) -> CliResult<()> {
        self.check_mode(Mode::Estimate)?;
        if self.input.is_none() {
            return Err(CliError::config("`input` is required for estimate"));
        }
        if !(self.alpha() > 0.0 && self.alpha() < 1.0) {
            return Err(Error::AlphaOutOfRange(self.alpha()).into());
        }
        if self.folds() < 2 {
            return Err(CliError::config(format!("`folds` must be at least 2, got {}", self.folds())));
        }
        if self.effects.is_empty() {
            return Err(CliError::config("`effects` must not be empty"));
        }
        if self.inference != Inference::None && self.b_draws() < dte_core::bootstrap::MIN_DRAWS {
            return Err(CliError::config(format!("`b_draws` must be at least {}, got {}", dte_core::bootstrap::MIN_DRAWS, self.b_draws())));
        }
        if self.effects.contains(&Effect::Pte) {
            match &self.pte {
                Some(PteSpec { h: Some(h), edges: None }) if *h > 0.0 && h.is_finite() => {}
                Some(PteSpec { h: None, edges: Some(_) }) => {}
                _ => return Err(CliError::config("`pte` needs exactly one of a positive `h` or `edges`")),
            }
        }
        if self.effects.contains(&Effect::Qte) {
            QuantileGrid::new(self.taus.clone())?;
        }
        self.learner_spec()?;
        Ok(())
    }
}

/// Non-fatal conditions reported alongside results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub kind: String,
    pub message: String,
}

impl Warning {
    fn new(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandOutput {
    pub kind: String,
    pub level: f64,
    pub critical: f64,
    pub draws: Option<usize>,
    /// Index positions left out of the maximal statistic.
    pub excluded: Vec<usize>,
}

/// One estimated curve. `se` is the plug-in standard error (absent for QTE);
/// bands use the bootstrap standard error `boot_se`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveOutput {
    /// Arm label for CDF curves, treated arm label for effects.
    pub arm: String,
    /// Control arm label for effects.
    pub control: Option<String>,
    pub index: Vec<f64>,
    pub estimate: Vec<f64>,
    pub se: Option<Vec<f64>>,
    pub boot_se: Option<Vec<f64>>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub band: Option<BandOutput>,
    pub bin_edges: Option<Vec<f64>>,
    pub h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOutput {
    pub grid: Vec<f64>,
    pub arms: Vec<String>,
    pub arm_counts: Vec<usize>,
    pub learner: LearnerSpec,
    pub folds: usize,
    pub seed: u64,
    pub inference: Inference,
    pub alpha: f64,
    pub b_draws: Option<usize>,
    pub cdf: Option<Vec<CurveOutput>>,
    pub dte: Option<Vec<CurveOutput>>,
    pub pte: Option<Vec<CurveOutput>>,
    pub qte: Option<Vec<CurveOutput>>,
    pub warnings: Vec<Warning>,
}

/// Files a command produced, held in memory until the run has succeeded.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    /// `(path, contents)`; a `None` path means standard output.
    pub files: Vec<(Option<PathBuf>, Vec<u8>)>,
    pub warnings: Vec<Warning>,
}

impl Artifacts {
    /// Writes every file; on failure removes those already written.
    pub fn commit(&self) -> CliResult<()> {
        let mut written: Vec<&Path> = Vec::new();
        for (path, bytes) in &self.files {
            let res = match path {
                Some(p) => std::fs::write(p, bytes).map(|_| written.push(p)),
                None => {
                    use std::io::Write;
                    std::io::stdout().write_all(bytes)
                }
            };
            if let Err(e) = res {
                for p in written {
                    let _ = std::fs::remove_file(p);
                }
                return Err(CliError::runtime(format!("cannot write output: {e}")));
            }
        }
        Ok(())
    }
}

fn load_dataset(cfg: &RunConfig) -> CliResult<Dataset<f64>> {
    let path = cfg.input.as_ref().expect("validated");
    let raw = read_csv::<f64>(path).map_err(|e| match e {
        Error::Io(io) => CliError {
            code: ExitCode::Data,
            message: format!("cannot read input {}: {io}", path.display()),
        },
        other => other.into(),
    })?;
    Ok(validate_dataset(&raw)?)
}

fn contrasts(cfg: &RunConfig, data: &Dataset<f64>) -> CliResult<Vec<(usize, usize)>> {
    let labels = data.arm_labels();
    match &cfg.contrasts {
        None => Ok((1..labels.len()).map(|w| (w, 0)).collect()),
        Some(pairs) => pairs
            .iter()
            .map(|(a, b)| {
                let find = |l: &str| data.arm_index(l).ok_or_else(|| CliError::config(format!("contrast names unknown arm `{l}`; arms are {labels:?}")));
                let (w, v) = (find(a)?, find(b)?);
                if w == v {
                    return Err(CliError::config(format!("contrast compares arm `{a}` with itself")));
                }
                Ok((w, v))
            })
            .collect(),
    }
}

fn pte_edges(spec: &PteSpec, grid: &ThresholdGrid<f64>) -> Vec<f64> {
    match (&spec.edges, spec.h) {
        (Some(e), _) => e.clone(),
        (None, Some(h)) => {
            let (lo, hi) = (grid.values()[0], *grid.values().last().expect("non-empty grid"));
            let steps = ((hi - lo) / h + 1e-9).floor() as usize;
            (0..=steps).map(|k| lo + k as f64 * h).map(|e| snap(e, grid)).collect()
        }
        (None, None) => Vec::new(),
    }
}

/// Replaces a value by the grid point it matches up to rounding.
fn snap(v: f64, grid: &ThresholdGrid<f64>) -> f64 {
    grid.position(v).map_or(v, |p| grid.values()[p])
}

struct Inferred {
    boot_se: Vec<f64>,
    band: BandEstimate<f64>,
}

fn infer(cfg: &RunConfig, est: &CdfEstimate<f64>, curve: &EffectCurve<f64>, draws: &MultiplierDraws<f64>, what: &str, warnings: &mut Vec<Warning>) -> CliResult<Option<Inferred>> {
    if cfg.inference == Inference::None {
        return Ok(None);
    }
    let (boot, censored) = bootstrap_curves_counted(est, curve, draws)?;
    if censored > 0 {
        warnings.push(Warning::new(
            "censored_bootstrap_quantile",
            format!("{what}: {censored} bootstrap quantiles did not reach their level and were set to the top grid point"),
        ));
    }
    let se = bootstrap_se(boot.view())?;
    if !se.degenerate.is_empty() {
        let at: Vec<f64> = se.degenerate.iter().map(|&j| curve.index[j]).collect();
        warnings.push(Warning::new(
            "degenerate_draws",
            format!("{what}: bootstrap draws have zero spread at index {at:?}; these points get zero-width bands"),
        ));
    }
    let band = match cfg.inference {
        Inference::Pointwise => pointwise_band(curve, &se.se, cfg.alpha(), Some(cfg.b_draws()))?,
        Inference::Uniform => uniform_band(curve, boot.view(), &se, cfg.alpha())?,
        Inference::None => unreachable!(),
    };
    Ok(Some(Inferred { boot_se: se.se, band }))
}

fn curve_output(curve: &EffectCurve<f64>, arm: &str, control: Option<&str>, inferred: Option<Inferred>) -> CurveOutput {
    let (boot_se, lower, upper, band) = match inferred {
        Some(i) => (
            Some(i.boot_se),
            Some(i.band.lower.clone()),
            Some(i.band.upper.clone()),
            Some(BandOutput {
                kind: serde_json::to_value(i.band.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                level: i.band.level,
                critical: i.band.critical,
                draws: i.band.draws,
                excluded: i.band.excluded,
            }),
        ),
        None => (None, None, None, None),
    };
    CurveOutput {
        arm: arm.into(),
        control: control.map(String::from),
        index: curve.index.clone(),
        estimate: curve.estimates.clone(),
        se: curve.se.clone(),
        boot_se,
        lower,
        upper,
        band,
        bin_edges: curve.bin_edges.clone(),
        h: curve.h,
    }
}

/// Runs the estimation pipeline and returns the files to write.
pub fn cmd_estimate(cfg: &RunConfig) -> CliResult<Artifacts> {
    cfg.validate_estimate()?;
    let data = load_dataset(cfg)?;
    let grid = make_threshold_grid(&cfg.grid, Some(data.outcomes()))?;
    let spec = cfg.learner_spec()?;
    let pairs = contrasts(cfg, &data)?;
    let folds = assign_folds(data.len(), cfg.folds(), derive_seed(cfg.seed(), &[0]))?;
    let nuisance: NuisanceTensor<f64> = crossfit_nuisance(&data, &grid, &folds, &spec)?;
    let est = adjusted_cdf(&data, &nuisance, &grid)?;
    let labels = data.arm_labels();
    let mut warnings = Vec::new();
    for e in est.excursions(EXCURSION_TOL) {
        warnings.push(Warning::new(
            "cdf_excursion",
            format!("arm {} at y = {}: raw estimate {} lies outside [0, 1] and is clipped in the cdf output", labels[e.arm], grid.values()[e.grid_index], e.value),
        ));
    }
    let draws = match cfg.inference {
        Inference::None => None,
        _ => Some(draw_multipliers::<f64>(data.len(), cfg.b_draws(), derive_seed(cfg.seed(), &[2]))),
    };
    let draws_ref = draws.as_ref();
    let wants = |e: Effect| cfg.effects.contains(&e);

    let mut cdf = None;
    if wants(Effect::Cdf) {
        let mut out = Vec::new();
        for w in 0..data.num_arms() {
            let curve = cdf_curve(&est, w)?;
            let inferred = match draws_ref {
                Some(d) => infer(cfg, &est, &curve, d, &format!("cdf of arm {}", labels[w]), &mut warnings)?,
                None => None,
            };
            let mut o = curve_output(&curve, &labels[w], None, inferred);
            let clip = |v: f64| v.clamp(0.0, 1.0);
            o.estimate = o.estimate.into_iter().map(clip).collect();
            o.lower = o.lower.map(|v| v.into_iter().map(clip).collect());
            o.upper = o.upper.map(|v| v.into_iter().map(clip).collect());
            out.push(o);
        }
        cdf = Some(out);
    }

    let mut run_effect = |effect: Effect, make: &dyn Fn(usize, usize) -> dte_core::Result<EffectCurve<f64>>| -> CliResult<Option<Vec<CurveOutput>>> {
        let mut out = Vec::new();
        for &(w, v) in &pairs {
            let curve = make(w, v)?;
            let what = format!("{effect:?} {} vs {}", labels[w], labels[v]).to_lowercase();
            let inferred = match draws_ref {
                Some(d) => infer(cfg, &est, &curve, d, &what, &mut warnings)?,
                None => None,
            };
            out.push(curve_output(&curve, &labels[w], Some(&labels[v]), inferred));
        }
        Ok(Some(out))
    };

    let dte_out = if wants(Effect::Dte) { run_effect(Effect::Dte, &|w, v| dte(&est, w, v))? } else { None };
    let pte_out = if wants(Effect::Pte) {
        let edges = pte_edges(cfg.pte.as_ref().expect("validated"), &grid);
        run_effect(Effect::Pte, &|w, v| pte(&est, w, v, &edges))?
    } else {
        None
    };
    let mut qte_out = None;
    if wants(Effect::Qte) {
        if cfg.continuous {
            let taus = QuantileGrid::new(cfg.taus.clone())?;
            qte_out = run_effect(Effect::Qte, &|w, v| qte(&est, w, v, &taus, true))?;
        } else {
            warnings.push(Warning::new(
                "discrete_outcome",
                "qte skipped: quantile effects need a continuous outcome; set `continuous: true` to compute them",
            ));
        }
    }

    let output = EstimateOutput {
        grid: grid.values().to_vec(),
        arms: labels.to_vec(),
        arm_counts: data.arm_counts().to_vec(),
        learner: spec,
        folds: cfg.folds(),
        seed: cfg.seed(),
        inference: cfg.inference,
        alpha: cfg.alpha(),
        b_draws: draws.as_ref().map(|d| d.num_draws()),
        cdf,
        dte: dte_out,
        pte: pte_out,
        qte: qte_out,
        warnings: warnings.clone(),
    };
    let body = match cfg.format {
        Format::Json => to_json(&output)?,
        Format::Csv => estimate_csv(&output)?,
    };
    let mut files = vec![(cfg.output.clone(), body)];
    if let Some(path) = &cfg.dump_nuisance {
        let mut buf = Vec::new();
        nuisance.write_csv(&mut buf, &data, &grid)?;
        files.push((Some(path.clone()), buf));
    }
    Ok(Artifacts { files, warnings })
}

fn to_json<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::runtime(format!("serialising output: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_error(e: impl fmt::Display) -> CliError {
    CliError::runtime(format!("writing csv: {e}"))
}

fn estimate_csv(out: &EstimateOutput) -> CliResult<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["effect", "arm", "control", "index", "estimate", "se", "boot_se", "lower", "upper"]).map_err(csv_error)?;
    let opt = |v: &Option<Vec<f64>>, k: usize| v.as_ref().map(|x| x[k].to_string()).unwrap_or_default();
    for (name, curves) in [("cdf", &out.cdf), ("dte", &out.dte), ("pte", &out.pte), ("qte", &out.qte)] {
        for c in curves.iter().flatten() {
            for k in 0..c.index.len() {
                wtr.write_record([
                    name.to_string(),
                    c.arm.clone(),
                    c.control.clone().unwrap_or_default(),
                    c.index[k].to_string(),
                    c.estimate[k].to_string(),
                    opt(&c.se, k),
                    opt(&c.boot_se, k),
                    opt(&c.lower, k),
                    opt(&c.upper, k),
                ])
                .map_err(csv_error)?;
            }
        }
    }
    wtr.into_inner().map_err(csv_error)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateOutput {
    pub dgp: DgpConfig,
    pub mc: MonteCarloConfig,
    pub metrics: MetricsTable,
    /// Pointwise band coverage of the truth per estimator and index point, when bands were requested.
    pub coverage: Option<Vec<CoverageRow>>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub estimator: String,
    pub quantile: f64,
    pub coverage: f64,
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

/// Runs the Monte Carlo study; `progress` receives human-readable lines.
pub fn cmd_simulate(cfg: &RunConfig, threads: usize, progress: &(dyn Fn(&str) + Sync)) -> CliResult<Artifacts> {
    cfg.check_mode(Mode::Simulate)?;
    let dgp = cfg.dgp.clone().ok_or_else(|| CliError::config("`dgp` block is required for simulate"))?;
    let mut mc = cfg.mc.clone().ok_or_else(|| CliError::config("`mc` block is required for simulate"))?;
    dgp.validate()?;
    mc.validate()?;
    // flags shared with estimate
    if let Some(s) = cfg.seed {
        mc.seed = s;
    }
    if let Some(f) = cfg.folds {
        mc.folds = f;
    }
    if let Some(b) = mc.bands.as_mut() {
        b.alpha = cfg.alpha.unwrap_or(b.alpha);
        b.b_draws = cfg.b_draws.unwrap_or(b.b_draws);
    }
    mc.validate()?;
    let forecast = estimate_runtime(&dgp, &mc, threads);
    progress(&format!(
        "simulate: {} replications of n = {} with {} estimators; estimated runtime {:.0} s on {threads} thread(s)",
        mc.replications,
        dgp.n,
        mc.estimators.len(),
        forecast.as_secs_f64()
    ));
    let step = (mc.replications / 20).max(1);
    let run = run_monte_carlo_with(&dgp, &mc, &|done, total| {
        if done % step == 0 || done == total {
            progress(&format!("replication {done}/{total}"));
        }
    })?;
    let metrics = run.metrics(None);
    let mut warnings = Vec::new();
    for r in metrics.rows.iter().filter(|r| r.zero_truth) {
        warnings.push(Warning::new(
            "zero_truth",
            format!("{} at quantile {}: true value is zero, bias reported in absolute terms", r.estimator, r.quantile),
        ));
    }
    let coverage = mc.bands.as_ref().map(|_| {
        mc.estimators
            .iter()
            .flat_map(|&k| {
                let run = &run;
                (0..run.index.len()).filter_map(move |p| {
                    run.pointwise_coverage(k, p).map(|c| CoverageRow {
                        estimator: k.name().into(),
                        quantile: run.mc.quantile_levels[p],
                        coverage: c,
                    })
                })
            })
            .collect()
    });
    let output = SimulateOutput {
        dgp,
        mc,
        metrics: metrics.clone(),
        coverage,
        warnings: warnings.clone(),
    };
    let json = to_json(&output)?;
    let mut csv_bytes = Vec::new();
    metrics.write_csv(&mut csv_bytes)?;
    let files = match (&cfg.output, cfg.format) {
        (Some(p), Format::Json) => vec![(Some(p.clone()), json), (Some(sibling(p, "csv")), csv_bytes)],
        (Some(p), Format::Csv) => vec![(Some(p.clone()), csv_bytes), (Some(sibling(p, "json")), json)],
        (None, Format::Json) => vec![(None, json)],
        (None, Format::Csv) => vec![(None, csv_bytes)],
    };
    Ok(Artifacts { files, warnings })
}
