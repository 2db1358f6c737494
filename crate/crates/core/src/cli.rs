//! Config parsing, experiment dispatch, CSV output and the validation report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::channelbounds::{channel_distance, convergence_bound, minimal_polynomial, power_sup_norm, BoundMode};
use crate::error::Error;
use crate::freefermion::finite_size_identity_residual;
use crate::lrbounds::{group_velocities, lr_constants};
use crate::models::{
    cocycle_experiment, disordered_ssh_experiment, flatband_es, measure_degeneracies, mbl_experiment, mps_quench_experiment,
    predicted_degeneracies, ssh, ssh_analytic_c, ssh_quench_infinite, symmetric_phase_mpu, z2z2_mps, CocycleModel,
    DisorderParams, MblParams, ProjectorNorm, Table,
};
use crate::numerics::{pfaffian, weyl_shift, CMat, RMat};
use crate::rng::{ginibre, random_hermitian, stream, uniform};
use crate::tensornet::{canonicalize, es_segment, transfer_analysis, UniformMPS};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    QuenchSsh,
    LrConstants,
    Flatband,
    MpsQuench,
    Cocycle,
    DisorderSsh,
    Mbl,
    Validate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::QuenchSsh => "quench-ssh",
            Experiment::LrConstants => "lr-constants",
            Experiment::Flatband => "flatband",
            Experiment::MpsQuench => "mps-quench",
            Experiment::Cocycle => "cocycle",
            Experiment::DisorderSsh => "disorder-ssh",
            Experiment::Mbl => "mbl",
            Experiment::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "empty_object")]
    pub parameters: Value,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

/// Failure classes mapped onto exit codes 1 and 2.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] Error),
    #[error("validation failed: {0} of {1} checks")]
    Validation(usize, usize),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Numerical(_) | RunError::Validation(..) => 2,
        }
    }
}

pub type RunResult<T> = std::result::Result<T, RunError>;

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        ExperimentConfig { experiment, parameters: empty_object(), seed: 0, output_path: None, threads: None }
    }

    pub fn from_json(text: &str) -> RunResult<Self> {
        serde_json::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    /// Applies `dotted.key=value`; the value is parsed as JSON, falling back to a string.
    pub fn set(&mut self, assignment: &str) -> RunResult<()> {
        let (key, raw) = assignment.split_once('=').ok_or_else(|| RunError::Config(format!("override `{assignment}` lacks '='")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut whole = serde_json::to_value(&*self).map_err(|e| RunError::Config(e.to_string()))?;
        let mut slot = &mut whole;
        for part in key.split('.') {
            if !slot.is_object() {
                *slot = empty_object();
            }
            slot = slot.as_object_mut().expect("object").entry(part.to_string()).or_insert(Value::Null);
        }
        *slot = value;
        *self = serde_json::from_value(whole).map_err(|e| RunError::Config(format!("override `{assignment}`: {e}")))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).unwrap_or_default();
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn params<T: for<'de> Deserialize<'de>>(&self) -> RunResult<T> {
        serde_json::from_value(self.parameters.clone()).map_err(|e| RunError::Config(format!("{}: {e}", self.experiment.name())))
    }
}

// ---------------------------------------------------------------- parameter schemas

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    linspace(a.log10(), b.log10(), n).into_iter().map(|x| 10f64.powf(x)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuenchSshParams {
    pub initial: (f64, f64),
    pub target: (f64, f64),
    pub l: usize,
    pub nk: usize,
    pub t_max: f64,
    pub points: usize,
}

impl Default for QuenchSshParams {
    fn default() -> Self {
        QuenchSshParams { initial: (0.5, 1.0), target: (1.0, 0.5), l: 40, nk: 2048, t_max: 60.0, points: 121 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrConstantsParams {
    pub initial: (f64, f64),
    pub target: (f64, f64),
    pub phs_j: Option<f64>,
    pub kappas: Vec<f64>,
}

impl Default for LrConstantsParams {
    fn default() -> Self {
        LrConstantsParams { initial: (0.5, 1.0), target: (1.0, 0.5), phs_j: None, kappas: vec![0.6] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlatbandParams {
    pub n_max: usize,
    pub points: usize,
    pub t_max: f64,
}

impl Default for FlatbandParams {
    fn default() -> Self {
        FlatbandParams { n_max: 5, points: 200, t_max: 4.0 * std::f64::consts::PI }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpsQuenchParams {
    pub p: f64,
    pub q: f64,
    pub steps: usize,
    pub l_min: usize,
    pub l_max: usize,
}

impl Default for MpsQuenchParams {
    fn default() -> Self {
        MpsQuenchParams { p: 0.49, q: 0.49, steps: 3, l_min: 10, l_max: 24 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CocycleParams {
    pub order: usize,
    pub nu: usize,
    pub subgroup: usize,
    pub draws: usize,
    pub t_max: f64,
    pub points: usize,
}

impl Default for CocycleParams {
    fn default() -> Self {
        CocycleParams { order: 6, nu: 1, subgroup: 2, draws: 5, t_max: 10.0, points: 101 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisorderSshParams {
    pub l: usize,
    pub initial: DisorderParams,
    pub quench: DisorderParams,
    pub t_max: f64,
    pub points: usize,
    pub realizations: usize,
}

impl Default for DisorderSshParams {
    fn default() -> Self {
        DisorderSshParams {
            l: 10,
            initial: DisorderParams { j: 0.5, jp: 1.0, f: 0.0 },
            quench: DisorderParams { j: 1.0, jp: 0.5, f: 0.6 },
            t_max: 200.0,
            points: 101,
            realizations: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MblRunParams {
    pub model: MblParams,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    pub realizations: usize,
}

impl Default for MblRunParams {
    fn default() -> Self {
        MblRunParams {
            model: MblParams { sites: 6, p: 0.49, q: 0.49, j0: 3.0, kappa: 3.0, cut: 3 },
            t_min: 0.1,
            t_max: 1e4,
            points: 41,
            realizations: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateParams {
    /// Multiplies every tolerance; values below one tighten checks (used to exercise the failure path).
    pub tolerance_scale: f64,
}

impl Default for ValidateParams {
    fn default() -> Self {
        ValidateParams { tolerance_scale: 1.0 }
    }
}

// ---------------------------------------------------------------- output

/// Header comment block plus CSV body.
pub fn render_csv(table: &Table, config: &ExperimentConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# sptq {VERSION}");
    let _ = writeln!(out, "# experiment {}", config.experiment.name());
    let _ = writeln!(out, "# config_sha256 {}", config.hash());
    let _ = writeln!(out, "# seed {}", config.seed);
    out.push_str(&table.columns.join(","));
    out.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Writes next to the destination and renames, so a failed run leaves no partial file.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}

// ---------------------------------------------------------------- dispatch

#[derive(Debug, Clone, Serialize)]
pub struct RunOutput {
    pub table: Table,
    pub report: Option<ValidationReport>,
}

pub fn run(config: &ExperimentConfig) -> RunResult<RunOutput> {
    let table = match config.experiment {
        Experiment::QuenchSsh => run_quench_ssh(&config.params()?)?,
        Experiment::LrConstants => run_lr_constants(&config.params()?)?,
        Experiment::Flatband => run_flatband(&config.params()?)?,
        Experiment::MpsQuench => run_mps_quench(&config.params()?, config.seed)?,
        Experiment::Cocycle => run_cocycle(&config.params()?, config.seed)?,
        Experiment::DisorderSsh => {
            let p: DisorderSshParams = config.params()?;
            let times = linspace(0.0, p.t_max, p.points);
            disordered_ssh_experiment(p.l, p.initial, p.quench, config.seed, &times, p.realizations)?.table
        }
        Experiment::Mbl => {
            let p: MblRunParams = config.params()?;
            mbl_experiment(&p.model, config.seed, &logspace(p.t_min, p.t_max, p.points), p.realizations)?
        }
        Experiment::Validate => {
            let report = validate_suite(&config.params()?);
            let table = report.table();
            return Ok(RunOutput { table, report: Some(report) });
        }
    };
    Ok(RunOutput { table, report: None })
}

fn run_quench_ssh(p: &QuenchSshParams) -> RunResult<Table> {
    let m0 = ssh(p.initial.0, p.initial.1, None)?;
    let m = ssh(p.target.0, p.target.1, None)?;
    let times = linspace(0.0, p.t_max, p.points);
    let reports = ssh_quench_infinite(&m0, &m, p.l, p.nk, &times)?;
    let width = 2 * p.l;
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=width).map(|i| format!("xi_{i}")));
    cols.push("gap".into());
    let mut table = Table { columns: cols, rows: Vec::new() };
    for (t, rep) in times.iter().zip(reports) {
        let mut row = vec![*t];
        row.extend(rep.values.iter().cloned());
        row.resize(width + 1, f64::NAN);
        row.push(rep.gap);
        table.rows.push(row);
    }
    Ok(table)
}

fn run_lr_constants(p: &LrConstantsParams) -> RunResult<Table> {
    let m0 = ssh(p.initial.0, p.initial.1, None)?;
    let m = ssh(p.target.0, p.target.1, p.phs_j)?;
    let vel = group_velocities(&m)?;
    let mut table = Table::new(&["kappa", "c", "v", "nk", "c_closed_operator", "c_closed_quadratic", "v_max", "v_mr"]);
    for &kappa in &p.kappas {
        let k = lr_constants(&m0, &m, kappa)?;
        let closed = |norm| {
            if p.phs_j.is_some() {
                return Ok(f64::NAN);
            }
            ssh_analytic_c(p.initial.0, p.initial.1, p.target.0, p.target.1, kappa, norm)
        };
        table.rows.push(vec![
            k.kappa,
            k.c,
            k.v,
            k.nk as f64,
            closed(ProjectorNorm::Operator)?,
            closed(ProjectorNorm::Quadratic)?,
            vel.v_max,
            vel.v_mr,
        ]);
    }
    Ok(table)
}

fn run_flatband(p: &FlatbandParams) -> RunResult<Table> {
    let mut table = Table::new(&["n", "t", "index", "numeric", "analytic"]);
    for n in 1..=p.n_max {
        for t in linspace(0.0, p.t_max, p.points) {
            let es = flatband_es(n, t)?;
            for (i, (a, b)) in es.numeric.values.iter().zip(&es.analytic).enumerate() {
                table.rows.push(vec![n as f64, t, i as f64, *a, *b]);
            }
        }
    }
    Ok(table)
}

fn run_mps_quench(p: &MpsQuenchParams, seed: u64) -> RunResult<Table> {
    let mps = z2z2_mps(p.p, p.q)?;
    let mpu = symmetric_phase_mpu(seed)?.validated(&[2, 3])?;
    let (k0, _) = mpu.simpleness_k0(4)?;
    let ls: Vec<usize> = (p.l_min..=p.l_max).collect();
    Ok(mps_quench_experiment(&mps, &mpu, k0, p.steps, &ls)?)
}

fn run_cocycle(p: &CocycleParams, seed: u64) -> RunResult<Table> {
    let times = linspace(0.0, p.t_max, p.points);
    let mut out: Option<Table> = None;
    for draw in 0..p.draws as u64 {
        let model = CocycleModel::new(p.order, p.nu, p.subgroup, seed, draw)?;
        let tab = cocycle_experiment(&model, &times)?;
        let t = out.get_or_insert_with(|| {
            let mut cols = vec!["draw".to_string()];
            cols.extend(tab.columns.iter().cloned());
            Table { columns: cols, rows: Vec::new() }
        });
        for row in tab.rows {
            let mut r = vec![draw as f64];
            r.extend(row);
            t.rows.push(r);
        }
    }
    out.ok_or_else(|| RunError::Config("draws must be positive".into()))
}

// ---------------------------------------------------------------- validation suite

#[derive(Debug, Clone, Serialize)]
pub struct ValidationEntry {
    pub name: String,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub entries: Vec<ValidationEntry>,
}

impl ValidationReport {
    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| !e.passed).count()
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&["check", "measured", "expected", "tolerance", "passed"]);
        for (i, e) in self.entries.iter().enumerate() {
            t.rows.push(vec![i as f64, e.measured, e.expected, e.tolerance, if e.passed { 1.0 } else { 0.0 }]);
        }
        t
    }
}

struct Suite {
    scale: f64,
    entries: Vec<ValidationEntry>,
}

impl Suite {
    /// |measured - expected| <= tolerance.
    fn near(&mut self, name: &str, measured: f64, expected: f64, tol: f64) {
        let tolerance = tol * self.scale;
        let passed = (measured - expected).abs() <= tolerance;
        self.entries.push(ValidationEntry { name: name.into(), measured, expected, tolerance, passed });
    }

    /// measured <= bound + tolerance.
    fn below(&mut self, name: &str, measured: f64, bound: f64, tol: f64) {
        let tolerance = tol * self.scale;
        let passed = measured <= bound + tolerance;
        self.entries.push(ValidationEntry { name: name.into(), measured, expected: bound, tolerance, passed });
    }

    fn outcome<T>(&mut self, name: &str, r: crate::Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.entries.push(ValidationEntry { name: format!("{name}: {e}"), measured: f64::NAN, expected: f64::NAN, tolerance: 0.0, passed: false });
                None
            }
        }
    }
}

/// Quick oracle checks across all modules; failures become report entries.
pub fn validate_suite(params: &ValidateParams) -> ValidationReport {
    let mut s = Suite { scale: params.tolerance_scale, entries: Vec::new() };
    let models = (ssh(0.5, 1.0, None), ssh(1.0, 0.5, None));
    if let (Ok(m0), Ok(m)) = models {
        if let Some(k) = s.outcome("lr_constants", lr_constants(&m0, &m, 0.6)) {
            s.near("prefactor C at kappa 0.6 against 12.225", k.c, 12.225, 0.01);
            if let Some(op) = s.outcome("closed-form C", ssh_analytic_c(0.5, 1.0, 1.0, 0.5, 0.6, ProjectorNorm::Operator)) {
                s.near("numeric C against operator-norm closed form", k.c, op, 1e-4);
            }
            if let Some(q) = s.outcome("quadratic C", ssh_analytic_c(0.5, 1.0, 1.0, 0.5, 0.6, ProjectorNorm::Quadratic)) {
                s.near("quadratic-form closed C against 12.225", q, 12.225, 0.01);
            }
        }
        if let Some(v) = s.outcome("group velocities", group_velocities(&m)) {
            s.near("v_max of SSH(1, 0.5)", v.v_max, 0.5, 1e-6);
        }
        if let Some(r) = s.outcome("finite-size identity", finite_size_identity_residual(&m, 24, 6, 4096)) {
            s.below("finite-size projector identity residual", r, 0.0, 1e-6);
        }
    }
    for n in 1..=5 {
        let mut worst: f64 = 0.0;
        for t in linspace(0.0, 4.0 * std::f64::consts::PI, 200) {
            if let Some(es) = s.outcome("flatband", flatband_es(n, t)) {
                for (a, b) in es.numeric.values.iter().zip(&es.analytic) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        s.below(&format!("flat-band closed form N = {n}"), worst, 0.0, 1e-10);
    }
    if let Ok(mps) = z2z2_mps(0.49, 0.49) {
        if let Some(ch) = s.outcome("transfer analysis", transfer_analysis(&mps)) {
            s.near("Z2xZ2 mu at p = q = 0.49", ch.mu, 0.02, 1e-12);
        }
    }
    if let Ok(mps) = z2z2_mps(0.5, 0.5) {
        if let Some(es) = s.outcome("segment ES", es_segment(&mps, 4)) {
            s.near("Z2xZ2 p = q = 0.5 top multiplicity", es.top_multiplicity() as f64, 4.0, 0.0);
        }
    }
    for sub in [2, 3] {
        for nu in 0..6 {
            if let Some(m) = s.outcome("cocycle model", CocycleModel::new(6, nu, sub, 1, 0)) {
                if let Some((r, rt, sp)) = s.outcome("cocycle ES", measure_degeneracies(&m, &[0.73, 1.91, 3.37])) {
                    let want = predicted_degeneracies(6, nu, sub);
                    let mismatch = (r != want.r) as u8 + (rt != want.r_tilde) as u8 + (sp != want.s) as u8;
                    s.near(&format!("cocycle degeneracies nu = {nu}, subgroup Z{sub}"), mismatch as f64, 0.0, 0.0);
                }
            }
        }
    }
    let mut rng = stream(0, "validate", 0);
    let mut weyl_worst = f64::NEG_INFINITY;
    let mut pf_worst: f64 = 0.0;
    for _ in 0..50 {
        let n = 2 + (uniform(&mut rng, 0.0, 7.0) as usize) * 2;
        let a = random_hermitian(&mut rng, n);
        let b = random_hermitian(&mut rng, n);
        if let Ok((shift, norm)) = weyl_shift(&a, &b) {
            weyl_worst = weyl_worst.max(shift - norm);
        }
        let g = ginibre(&mut rng, n, n);
        let r = RMat::from_fn(n, n, |i, j| g[(i, j)].re - g[(j, i)].re);
        if let Ok(pf) = pfaffian(&r) {
            let det = r.determinant();
            pf_worst = pf_worst.max((pf * pf - det).abs() / det.abs().max(1e-300));
        }
    }
    s.below("Weyl shift minus norm", weyl_worst, 0.0, 1e-10);
    s.below("Pfaffian squared against determinant (relative)", pf_worst, 0.0, 1e-8);
    let mut conv_worst = f64::NEG_INFINITY;
    for trial in 0..5 {
        let dim = 2 + trial % 3;
        let a: Vec<CMat> = (0..2).map(|_| ginibre(&mut rng, dim, dim)).collect();
        let Some(mps) = s.outcome("random MPS", UniformMPS::new(a).and_then(|m| canonicalize(&m))) else { continue };
        let Some(ch) = s.outcome("random channel", transfer_analysis(&mps)) else { continue };
        let Some(mp) = s.outcome("minimal polynomial", minimal_polynomial(&(&ch.matrix - ch.infinity()))) else { continue };
        let cc = power_sup_norm(&ch.matrix, 200);
        for l in 1..=50 {
            let d = channel_distance(&ch, l);
            for mode in [BoundMode::Sharp, BoundMode::WorstCase] {
                if let Ok(b) = convergence_bound(l, &mp, cc, mode) {
                    conv_worst = conv_worst.max(d - b);
                }
            }
        }
    }
    s.below("channel distance minus convergence bound", conv_worst, 0.0, 1e-12);
    ValidationReport { entries: s.entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(ExperimentConfig::from_json(r#"{"experiment":"flatband","bogus":1}"#).is_err());
        let cfg = ExperimentConfig::from_json(r#"{"experiment":"flatband","parameters":{"n_max":2,"nope":3}}"#).unwrap();
        assert!(matches!(run(&cfg), Err(RunError::Config(_))));
    }

    #[test]
    fn overrides_and_determinism() {
        let mut cfg = ExperimentConfig::defaults(Experiment::Flatband);
        cfg.set("parameters.n_max=2").unwrap();
        cfg.set("parameters.points=5").unwrap();
        cfg.set("seed=4").unwrap();
        assert_eq!(cfg.seed, 4);
        let a = render_csv(&run(&cfg).unwrap().table, &cfg);
        let b = render_csv(&run(&cfg).unwrap().table, &cfg);
        assert_eq!(a, b);
        assert!(a.starts_with("# sptq"));
        assert!(a.lines().nth(4).unwrap() == "n,t,index,numeric,analytic");
        assert!(cfg.set("nonsense=1").is_err());
    }

    #[test]
    fn tightened_tolerance_fails() {
        let report = validate_suite(&ValidateParams { tolerance_scale: 1e-30 });
        assert!(report.failures() > 0);
    }
}
