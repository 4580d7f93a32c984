//! Command drivers. Work items run on a rayon pool and are aggregated in
//! index order, so outputs do not depend on `--jobs`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use qmetro_core::analytic::{
    outcome_probabilities, sensitivity, ControlFamily, JointFamily, NoiseParams, ProtocolConfig,
    fisher_information,
};
use qmetro_core::estimation::{
    default_model, fit_fringe, operating_point, sensitivity_report, FringeFit, FringeModel, OperatingPoint,
    SensitivityReport,
};
use qmetro_core::experiment::{
    aggregate_contrast, aggregate_full, contrast_repetition, full_repetition, gate_record, large_n_point, ExperimentConfig,
    FringeDataset, GateContrastModel, Mode,
};
use qmetro_core::lindblad::calibrate_amplitude;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{FitChoice, Resolved};
use crate::output::{self, RunManifest, RunStatus, CONFIG_SNAPSHOT_FILE, DATASET_COLUMNS, SCHEMA_VERSION};
use crate::CliError;

/// Everything a command needs besides its section of the config.
#[derive(Debug, Clone)]
pub struct Context {
    pub resolved: Resolved,
    pub config_path: Option<PathBuf>,
    pub out: PathBuf,
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
    /// Stop a sweep after this many newly finished cells (checkpoint testing).
    pub stop_after: Option<usize>,
}

impl Context {
    fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))
    }

    fn manifest(&self, command: &str) -> RunManifest {
        RunManifest::new(command, self.config_path.as_deref(), self.resolved.tree.clone(), self.resolved.config.seed)
    }

    fn prepare_out(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out)?;
        output::write_atomic(&self.out.join(CONFIG_SNAPSHOT_FILE), self.resolved.to_toml().as_bytes())
    }
}

fn finite(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

#[derive(Debug, Serialize)]
struct AnalyticSummary {
    p_r: f64,
    p_c: f64,
    n_r: Option<usize>,
    poisson_mean: Option<f64>,
    t: f64,
    nu: u32,
    /// `[(1 - p_R^2) N + p_R^2 N^2] t^2`, fixed registers only.
    fisher_closed_form: Option<f64>,
    best_phase: f64,
    best_fisher_control: f64,
    /// Grid point with the smallest `S_Q`.
    omega_best_s_q: Option<f64>,
    s_q_best: Option<f64>,
    s_c: Option<f64>,
    ratio: Option<f64>,
}

/// Outcome tables, fringes, Fisher information and sensitivity over the
/// phase grid, one file set per register purity.
pub fn cmd_analytic(ctx: &Context) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let cfg = &ctx.resolved.config;
    cfg.validate_analytic()?;
    let a = &cfg.analytic;
    ctx.prepare_out()?;
    let mut manifest = ctx.manifest("analytic");
    let phases = qmetro_core::experiment::linspace(a.phase_min, a.phase_max, a.points);
    let mut summaries = Vec::new();
    for &p_r in &a.p_r {
        let noise = NoiseParams::new(a.p_c, p_r)?;
        let control = match a.poisson_mean {
            Some(m) => ControlFamily::poisson(m, noise, a.t)?,
            None => ControlFamily::fixed(a.n_r, noise, a.t),
        };
        let joint = a.poisson_mean.is_none().then(|| JointFamily::new(a.n_r, noise, a.t));
        let tag = output::tag_value(p_r);

        let fringe_path = ctx.out.join(format!("fringe_pr{tag}.csv"));
        let mut w = csv::Writer::from_path(&fringe_path)?;
        w.write_record(["phase", "omega", "p0", "p1", "sigma_z", "fisher_control", "fisher_joint", "s_q_control"])?;
        for &phi in &phases {
            let omega = phi / a.t;
            let s = control.sigma_z(omega);
            let f = control.fisher(omega);
            let fj = match &joint {
                Some(j) => fisher_information(j, omega).map(|e| e.analytic.unwrap_or(e.value)).unwrap_or(f64::NAN),
                None => f64::NAN,
            };
            let s_q = sensitivity(f, a.nu, omega).unwrap_or(f64::NAN);
            w.write_record([
                phi.to_string(),
                omega.to_string(),
                ((1.0 + s) / 2.0).to_string(),
                ((1.0 - s) / 2.0).to_string(),
                s.to_string(),
                f.to_string(),
                finite(fj),
                finite(s_q),
            ])?;
        }
        w.flush()?;
        manifest.add_output(&ctx.out, &fringe_path);

        if a.poisson_mean.is_none() {
            let table_path = ctx.out.join(format!("outcomes_pr{tag}.csv"));
            let mut w = csv::Writer::from_path(&table_path)?;
            w.write_record(["phase", "k", "n", "p"])?;
            for &phi in &phases {
                let d = outcome_probabilities(&ProtocolConfig::new(a.n_r, phi / a.t, a.t, a.nu)?, &noise)?;
                for k in 0..2 {
                    for n in 0..=a.n_r {
                        w.write_record([phi.to_string(), k.to_string(), n.to_string(), d.get(k, n).to_string()])?;
                    }
                }
            }
            w.flush()?;
            manifest.add_output(&ctx.out, &table_path);
        }

        let (best_phase, best_f) = control.best_operating_point();
        let mean = a.poisson_mean.unwrap_or(a.n_r as f64);
        // S_Q diverges at w = 0, so report the best grid point instead.
        let report = phases
            .iter()
            .filter_map(|&phi| {
                let omega = phi / a.t;
                sensitivity_report(control.fisher(omega), omega, a.t, mean).ok()
            })
            .filter(|r| r.s_q.is_finite())
            .min_by(|x, y| x.s_q.total_cmp(&y.s_q));
        summaries.push(AnalyticSummary {
            p_r,
            p_c: a.p_c,
            n_r: a.poisson_mean.is_none().then_some(a.n_r),
            poisson_mean: a.poisson_mean,
            t: a.t,
            nu: a.nu,
            fisher_closed_form: a.poisson_mean.is_none().then(|| qmetro_core::analytic::fisher_closed_form(a.n_r, p_r, a.t)),
            best_phase,
            best_fisher_control: best_f,
            omega_best_s_q: report.map(|r| r.omega),
            s_q_best: report.map(|r| r.s_q),
            s_c: report.map(|r| r.s_c),
            ratio: report.map(|r| r.ratio),
        });
        manifest.steps += phases.len() as u64;
    }
    let summary_path = ctx.out.join("summary.json");
    output::write_json(&summary_path, &summaries)?;
    manifest.add_output(&ctx.out, &summary_path);
    manifest.wall_clock_s = started.elapsed().as_secs_f64();
    manifest.save(&ctx.out)?;
    Ok(manifest)
}

/// Dataset, fit and sensitivity of one experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub dataset: FringeDataset,
    pub fit: Option<FringeFit>,
    pub operating_point: Option<OperatingPoint>,
    pub sensitivity: Option<SensitivityReport>,
    pub gate_model: Option<GateContrastModel>,
    /// Failed work items and fit problems; the dataset excludes failed items.
    pub errors: Vec<String>,
    pub partial: bool,
    pub steps: u64,
}

#[derive(Debug, Serialize)]
pub struct ExperimentReport<'a> {
    pub schema_version: u32,
    pub fit: Option<&'a FringeFit>,
    pub operating_point: Option<&'a OperatingPoint>,
    pub sensitivity: Option<&'a SensitivityReport>,
    /// `1 / (w_0 t sqrt(N))` for the configured mean register.
    pub s_c_analytic: f64,
    pub mean_leakage: f64,
    pub partial: bool,
    pub errors: &'a [String],
}

fn fit_model(cfg: &ExperimentConfig, choice: FitChoice, data: &FringeDataset) -> Result<FringeModel, CliError> {
    Ok(match (choice, cfg.mode) {
        (FitChoice::Cosine, _) | (FitChoice::Auto, Mode::FullDynamics) => FringeModel::Cosine { n_eff: cfg.mean_n_r },
        (FitChoice::PoissonEnvelope, _) | (FitChoice::Auto, Mode::LargeNModel) => default_model(data, true)?,
    })
}

/// Run the Monte-Carlo for `cfg` on `pool`, then fit and evaluate it.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    choice: FitChoice,
    pool: &rayon::ThreadPool,
) -> Result<ExperimentOutcome, CliError> {
    cfg.validate()?;
    let mut errors = Vec::new();
    let mut gate_model = None;
    let steps;
    let dataset = match cfg.mode {
        Mode::FullDynamics => {
            let results: Vec<_> = pool.install(|| (0..cfg.nu as u64).into_par_iter().map(|j| full_repetition(cfg, j)).collect());
            steps = results.len() as u64;
            let mut ok = Vec::new();
            for r in results {
                match r {
                    Ok(c) => ok.push(c),
                    Err(e) => errors.push(e.to_string()),
                }
            }
            if ok.is_empty() {
                return Err(CliError::Runtime(format!("every repetition failed: {}", errors.join("; "))));
            }
            let mut used = cfg.clone();
            used.nu = ok.len() as u32;
            // Tallies refer to the surviving repetitions.
            aggregate_full(&used, &ok)?
        }
        Mode::LargeNModel => {
            let max_n = cfg.large_n.contrast_max_n;
            let reps: Vec<_> = pool.install(|| {
                (0..cfg.nu as u64).into_par_iter().map(|j| contrast_repetition(cfg, max_n, j)).collect::<Vec<_>>()
            });
            let records: Vec<_> = pool.install(|| {
                (0..cfg.large_n.bank_size as u64).into_par_iter().map(|i| gate_record(cfg, i)).collect::<Vec<_>>()
            });
            let reps: Vec<_> = reps.into_iter().filter_map(|r| r.map_err(|e| errors.push(e.to_string())).ok()).collect();
            let records: Vec<_> =
                records.into_iter().filter_map(|r| r.map_err(|e| errors.push(e.to_string())).ok()).collect();
            let model = aggregate_contrast(&reps, records)?;
            let points: Vec<_> = pool.install(|| {
                (0..cfg.scan.len()).into_par_iter().map(|i| large_n_point(cfg, &model, i)).collect::<Vec<_>>()
            });
            steps = (cfg.nu as usize + cfg.large_n.bank_size + cfg.scan.len()) as u64;
            let points = points.into_iter().collect::<Result<Vec<_>, _>>()?;
            gate_model = Some(model);
            FringeDataset { points, config: cfg.clone() }
        }
    };
    let partial = !errors.is_empty();

    let (mut fit, mut op, mut report) = (None, None, None);
    match fit_model(cfg, choice, &dataset).and_then(|m| fit_fringe(&dataset, m).map_err(CliError::from)) {
        Ok(f) => {
            match operating_point(&f, cfg.omega0) {
                Ok(o) => {
                    match sensitivity_report(o.fisher, o.omega, cfg.t, cfg.mean_n_r) {
                        Ok(r) => report = Some(r),
                        Err(e) => errors.push(format!("sensitivity: {e}")),
                    }
                    op = Some(o);
                }
                Err(e) => errors.push(format!("operating point: {e}")),
            }
            fit = Some(f);
        }
        Err(e) => errors.push(format!("fit: {e}")),
    }
    Ok(ExperimentOutcome { dataset, fit, operating_point: op, sensitivity: report, gate_model, errors, partial, steps })
}

impl ExperimentOutcome {
    pub fn report(&self) -> ExperimentReport<'_> {
        let cfg = &self.dataset.config;
        let n = self.dataset.points.len().max(1) as f64;
        ExperimentReport {
            schema_version: SCHEMA_VERSION,
            fit: self.fit.as_ref(),
            operating_point: self.operating_point.as_ref(),
            sensitivity: self.sensitivity.as_ref(),
            s_c_analytic: 1.0 / (cfg.omega0 * cfg.t * cfg.mean_n_r.sqrt()),
            mean_leakage: self.dataset.points.iter().map(|p| p.leakage).sum::<f64>() / n,
            partial: self.partial,
            errors: &self.errors,
        }
    }
}

pub fn cmd_experiment(ctx: &Context) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let cfg = ctx.resolved.config.experiment_config()?;
    ctx.prepare_out()?;
    let pool = ctx.pool()?;
    let mut manifest = ctx.manifest("experiment");
    let outcome = run_experiment(&cfg, ctx.resolved.config.experiment.fit_model, &pool)?;

    let data_path = ctx.out.join("dataset.csv");
    output::write_dataset(&data_path, &outcome.dataset)?;
    manifest.add_output(&ctx.out, &data_path);
    let report_path = ctx.out.join("report.json");
    output::write_json(&report_path, &outcome.report())?;
    manifest.add_output(&ctx.out, &report_path);
    if let Some(model) = &outcome.gate_model {
        let path = ctx.out.join("gate_curve.json");
        output::write_json(&path, model)?;
        manifest.add_output(&ctx.out, &path);
    }
    manifest.steps = outcome.steps;
    manifest.errors = outcome.errors.clone();
    manifest.wall_clock_s = started.elapsed().as_secs_f64();
    if outcome.partial {
        manifest.status = RunStatus::Partial;
        manifest.save(&ctx.out)?;
        return Err(CliError::Partial(format!("{} work item(s) failed", outcome.errors.len())));
    }
    manifest.save(&ctx.out)?;
    Ok(manifest)
}

/// Cartesian product of the sweep axes, last axis fastest.
fn sweep_cells(axes: &[crate::config::SweepAxis]) -> Vec<Vec<toml::Value>> {
    let mut cells = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(cells.len() * axis.values.len());
        for c in &cells {
            for v in &axis.values {
                let mut c = c.clone();
                c.push(v.clone());
                next.push(c);
            }
        }
        cells = next;
    }
    cells
}

fn render(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn cell_file(out: &Path, i: usize) -> PathBuf {
    out.join("cells").join(format!("cell_{i:05}.csv"))
}

fn sweep_header(axes: &[crate::config::SweepAxis]) -> Vec<String> {
    let mut h = vec!["cell".to_string()];
    h.extend(axes.iter().map(|a| a.key.clone()));
    h.extend(DATASET_COLUMNS.iter().map(|s| s.to_string()));
    h.push("fit_contrast".into());
    h.push("error".into());
    h
}

fn run_cell(
    ctx: &Context,
    pool: &rayon::ThreadPool,
    axes: &[crate::config::SweepAxis],
    i: usize,
    values: &[toml::Value],
) -> Result<(Vec<Vec<String>>, u64, bool), CliError> {
    let prefix: Vec<String> = std::iter::once(i.to_string()).chain(values.iter().map(render)).collect();
    let mut resolved = ctx.resolved.clone();
    let mut run = || -> Result<ExperimentOutcome, CliError> {
        for (axis, v) in axes.iter().zip(values) {
            resolved = resolved.with(&axis.key, v.clone())?;
        }
        let cfg = resolved.config.experiment_config()?;
        run_experiment(&cfg, resolved.config.experiment.fit_model, pool)
    };
    let mut rows = Vec::new();
    match run() {
        Ok(o) => {
            let contrast = o.fit.as_ref().map(|f| f.contrast.to_string()).unwrap_or_default();
            let err = o.errors.join("; ");
            for p in &o.dataset.points {
                let mut row = prefix.clone();
                row.extend(output::dataset_row(p, o.dataset.config.seed));
                row.push(contrast.clone());
                row.push(err.clone());
                rows.push(row);
            }
            Ok((rows, o.steps, o.partial))
        }
        Err(e) => {
            let mut row = prefix;
            row.extend(std::iter::repeat(String::new()).take(DATASET_COLUMNS.len() + 1));
            row.push(e.to_string());
            rows.push(row);
            Ok((rows, 0, true))
        }
    }
}

/// Long-format sweep over up to three config axes. Each finished cell is
/// written to its own file and recorded in the manifest, so an interrupted
/// sweep resumes where it stopped.
pub fn cmd_sweep(ctx: &Context) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let cfg = &ctx.resolved.config;
    let n_cells = cfg.validate_sweep()?;
    let axes = cfg.sweep.axes.clone();
    ctx.prepare_out()?;
    fs::create_dir_all(ctx.out.join("cells"))?;
    let pool = ctx.pool()?;

    let mut manifest = match RunManifest::load(&ctx.out)? {
        Some(m) if m.command == "sweep" => {
            if serde_json::to_value(&m.config)? != serde_json::to_value(&ctx.resolved.tree)? {
                return Err(CliError::Validation(format!(
                    "{} holds a sweep with a different configuration",
                    ctx.out.display()
                )));
            }
            m
        }
        _ => ctx.manifest("sweep"),
    };
    manifest.completed_cells.retain(|&i| cell_file(&ctx.out, i).exists());
    let cells = sweep_cells(&axes);
    debug_assert_eq!(cells.len(), n_cells);
    let mut fresh = 0usize;
    let mut failed = Vec::new();
    for (i, values) in cells.iter().enumerate() {
        if manifest.completed_cells.contains(&i) {
            continue;
        }
        if ctx.stop_after.is_some_and(|k| fresh >= k) {
            manifest.status = RunStatus::Partial;
            manifest.wall_clock_s += started.elapsed().as_secs_f64();
            manifest.save(&ctx.out)?;
            return Err(CliError::Partial(format!("stopped after {fresh} cell(s); rerun to resume")));
        }
        let (rows, steps, bad) = run_cell(ctx, &pool, &axes, i, values)?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        for r in &rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
        output::write_atomic(&cell_file(&ctx.out, i), &bytes)?;
        if bad {
            failed.push(i);
        }
        manifest.completed_cells.push(i);
        manifest.completed_cells.sort_unstable();
        manifest.steps += steps + 1;
        manifest.save(&ctx.out)?;
        fresh += 1;
    }

    let mut all = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut all);
        w.write_record(sweep_header(&axes))?;
        w.flush()?;
    }
    for i in 0..cells.len() {
        all.extend(fs::read(cell_file(&ctx.out, i))?);
    }
    let sweep_path = ctx.out.join("sweep.csv");
    output::write_atomic(&sweep_path, &all)?;
    manifest.outputs.clear();
    manifest.add_output(&ctx.out, &sweep_path);
    manifest.wall_clock_s += started.elapsed().as_secs_f64();
    // Failures from earlier invocations are in the cell files.
    let text = String::from_utf8_lossy(&all);
    let any_error = csv::Reader::from_reader(text.as_bytes())
        .records()
        .filter_map(|r| r.ok())
        .any(|r| r.get(r.len() - 1).is_some_and(|e| !e.is_empty()));
    manifest.errors = failed.iter().map(|i| format!("cell {i} failed")).collect();
    if any_error {
        manifest.status = RunStatus::Partial;
        manifest.save(&ctx.out)?;
        return Err(CliError::Partial("some cells reported errors; see the error column".into()));
    }
    manifest.status = RunStatus::Complete;
    manifest.save(&ctx.out)?;
    Ok(manifest)
}

/// Pi-pulse amplitude calibration of the configured gate.
pub fn cmd_calibrate(ctx: &Context) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let cfg = ctx.resolved.config.experiment_config()?;
    ctx.prepare_out()?;
    let [lo, hi] = ctx.resolved.config.calibrate.bracket;
    let cal = calibrate_amplitude(&cfg.gate.scheme, &cfg.gate.pulses, (lo, hi))?;
    let path = ctx.out.join("calibration.json");
    output::write_json(&path, &cal)?;
    let mut manifest = ctx.manifest("calibrate");
    manifest.add_output(&ctx.out, &path);
    manifest.steps = 1;
    manifest.wall_clock_s = started.elapsed().as_secs_f64();
    manifest.save(&ctx.out)?;
    println!("experiment.gate.amplitude_scale = {}", cal.amplitude_scale);
    Ok(manifest)
}
