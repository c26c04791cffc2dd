//! The four commands: single-axis characterization, the two-axis protocol,
//! Monte Carlo coverage and the shot-count scaling sweep.

use rayon::prelude::*;

use hamid_core::bloch::wrap_angle;
use hamid_core::estimator::{
    estimate_axis, estimate_phase, reconstruct_first_axis, reconstruct_hamiltonians, AxisEstimate,
    HamiltonianEstimate, PhaseEstimate, ReportRow,
};
use hamid_core::measurement::{
    analytic_phase_record, analytic_record, derive_seed, run_phase_series, run_time_series, SamplingConfig,
};
use hamid_core::uncertainty::{distance_metrics, DistanceReport};
use hamid_core::{HamiltonianCoeffs, MeasurementRecord, PolarHamiltonian};

use crate::config::{ExperimentConfig, Mode};
use crate::report::{histogram, Cell, Report, Table};
use crate::HarnessError;

const TAG_R: u64 = 1;
const TAG_K: u64 = 2;
const TAG_PHASE: u64 = 3;

/// `h` expressed in the frame where the first axis has zero azimuth.
pub fn reference_frame(h_r: HamiltonianCoeffs, h: HamiltonianCoeffs) -> HamiltonianCoeffs {
    let phi_r = h_r.to_polar().phi;
    let (s, c) = (-phi_r).sin_cos();
    HamiltonianCoeffs::new(c * h.x - s * h.y, s * h.x + c * h.y, h.z)
}

fn with_seed(mut cfg: SamplingConfig, seed: u64) -> SamplingConfig {
    cfg.seed = seed;
    cfg
}

fn first_axis_record(
    h: HamiltonianCoeffs,
    cfg: &SamplingConfig,
    analytic: bool,
) -> hamid_core::Result<MeasurementRecord> {
    if analytic {
        analytic_record(h, cfg)
    } else {
        run_time_series(h, cfg)
    }
}

fn distance(truth: HamiltonianCoeffs, est: &HamiltonianEstimate) -> Result<DistanceReport, HarnessError> {
    let d = truth.as_array().map(|x| 2.0 * x);
    Ok(distance_metrics(d, est.rotation_vector(), est.rotation_sigma())?)
}

/// One first-axis characterization.
#[derive(Debug, Clone)]
pub struct SingleRun {
    pub record: MeasurementRecord,
    pub axis: AxisEstimate,
    pub hamiltonian: HamiltonianEstimate,
    pub dist: DistanceReport,
}

pub fn run_single(cfg: &ExperimentConfig, trial_seed: u64) -> Result<SingleRun, HarnessError> {
    run_single_with(cfg, &with_seed(cfg.sampling_r(), derive_seed(trial_seed, TAG_R)))
}

fn run_single_with(cfg: &ExperimentConfig, sampling: &SamplingConfig) -> Result<SingleRun, HarnessError> {
    let h_r = cfg.h_r();
    let record = first_axis_record(h_r, sampling, cfg.analytic)?;
    let axis = estimate_axis(&record, cfg.t_predict_r())?;
    let hamiltonian = reconstruct_first_axis(&axis);
    let dist = distance(reference_frame(h_r, h_r), &hamiltonian)?;
    Ok(SingleRun { record, axis, hamiltonian, dist })
}

/// Which stage of the two-axis protocol a failure came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    First,
    Second,
    Phase,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::First => "r",
            Stage::Second => "k",
            Stage::Phase => "phase",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoAxisRun {
    pub first: SingleRun,
    pub record_k: MeasurementRecord,
    pub record_phase: MeasurementRecord,
    pub axis_k: AxisEstimate,
    pub phase: PhaseEstimate,
    pub h_k: HamiltonianEstimate,
    pub dist_k: DistanceReport,
}

/// Characterizes `h_r`, then `h_k`, then the phase record pulsed about the
/// estimated first axis.
pub fn run_two_axis(cfg: &ExperimentConfig, trial_seed: u64) -> Result<TwoAxisRun, (Stage, HarnessError)> {
    let first = run_single(cfg, trial_seed).map_err(|e| (Stage::First, e))?;
    let h_r = cfg.h_r();
    let h_k = cfg.h_k().map_err(|e| (Stage::Second, e))?;
    let t_k = cfg.t_predict_k().map_err(|e| (Stage::Second, e))?;
    let second = |e: hamid_core::Error| (Stage::Second, HarnessError::from(e));
    let phase_err = |e: hamid_core::Error| (Stage::Phase, HarnessError::from(e));

    let cfg_k = with_seed(cfg.sampling_k(), derive_seed(trial_seed, TAG_K));
    let record_k = first_axis_record(h_k, &cfg_k, cfg.analytic).map_err(second)?;
    let axis_k = estimate_axis(&record_k, t_k).map_err(second)?;

    let est_r = PolarHamiltonian::new(first.axis.omega.value, first.axis.theta.value, 0.0);
    let cfg_p = with_seed(cfg.sampling_k(), derive_seed(trial_seed, TAG_PHASE));
    let record_phase = if cfg.analytic {
        analytic_phase_record(est_r, h_r, h_k, &cfg_p)
    } else {
        run_phase_series(est_r, h_r, h_k, &cfg_p)
    }
    .map_err(phase_err)?;
    let phase = estimate_phase(&record_phase, &first.axis, &axis_k, t_k).map_err(phase_err)?;

    let (_, h_k_est) = reconstruct_hamiltonians(&first.axis, &axis_k, &phase);
    let dist_k = distance(reference_frame(h_r, h_k), &h_k_est).map_err(|e| (Stage::Phase, e))?;
    Ok(TwoAxisRun { first, record_k, record_phase, axis_k, phase, h_k: h_k_est, dist_k })
}

const ESTIMATE_COLUMNS: [&str; 7] = ["parameter", "value", "sigma", "nu_p", "t_p", "delta_f", "branch"];

fn push_estimate_rows(table: &mut Table, rows: Vec<ReportRow>) {
    for r in rows {
        table.push(vec![
            r.parameter.into(),
            r.value.into(),
            r.sigma.into(),
            r.nu_p.into(),
            r.t_p.into(),
            r.delta_f.into(),
            r.branch.into(),
        ]);
    }
}

fn hamiltonian_rows(table: &mut Table, label: &str, truth: HamiltonianCoeffs, est: &HamiltonianEstimate) {
    let names = ["x", "y", "z"];
    let t = truth.as_array();
    let e = est.coeffs.as_array();
    for i in 0..3 {
        let covered = (e[i] - t[i]).abs() <= 3.0 * est.sigma[i];
        table.push(vec![
            label.into(),
            names[i].into(),
            t[i].into(),
            e[i].into(),
            est.sigma[i].into(),
            if covered { "yes" } else { "no" }.into(),
        ]);
    }
}

fn flag_list(flags: &[hamid_core::estimator::Flag]) -> String {
    if flags.is_empty() {
        "-".into()
    } else {
        flags.iter().map(|f| f.name()).collect::<Vec<_>>().join(";")
    }
}

fn single_tables(run: &SingleRun, truth: HamiltonianCoeffs, label: &str) -> (Table, Table, Table) {
    let mut estimates = Table::new("estimates", &ESTIMATE_COLUMNS);
    push_estimate_rows(&mut estimates, run.axis.report_rows(label));
    let mut ham = Table::new("hamiltonian", &["axis", "component", "true", "estimate", "sigma", "within_3_sigma"]);
    hamiltonian_rows(&mut ham, label, truth, &run.hamiltonian);
    let mut dist = Table::new("distance", &["axis", "dist", "delta_dist", "flags"]);
    dist.push(vec![label.into(), run.dist.dist.into(), run.dist.delta_dist.into(), flag_list(&run.axis.flags).into()]);
    (estimates, ham, dist)
}

fn artifacts(label: &str, record: &MeasurementRecord, axis_spectrum: &hamid_core::estimator::SpectralSummary) -> Vec<(String, String)> {
    vec![
        (format!("record_{label}.csv"), record.to_table()),
        (format!("spectrum_{label}.csv"), axis_spectrum.spectrum.to_table()),
        (format!("p_curve_{label}.csv"), axis_spectrum.mpp.p_table()),
    ]
}

pub fn cmd_characterize(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    cfg.validate(Mode::Characterize)?;
    let run = run_single(cfg, derive_seed(cfg.seed, 0))?;
    let h_r = cfg.h_r();
    let (estimates, ham, dist) = single_tables(&run, reference_frame(h_r, h_r), "r");
    Ok(Report {
        command: Mode::Characterize.name(),
        config: cfg.clone(),
        tables: vec![estimates, ham, dist],
        artifacts: artifacts("r", &run.record, &run.axis.summary),
    })
}

pub fn cmd_two_axis(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    cfg.validate(Mode::TwoAxis)?;
    let run = run_two_axis(cfg, derive_seed(cfg.seed, 0)).map_err(|(_, e)| e)?;
    let h_r = cfg.h_r();
    let h_k = cfg.h_k()?;
    let (mut estimates, mut ham, mut dist) = single_tables(&run.first, reference_frame(h_r, h_r), "r");
    push_estimate_rows(&mut estimates, run.axis_k.report_rows("k"));
    push_estimate_rows(&mut estimates, run.phase.report_rows("phase"));
    hamiltonian_rows(&mut ham, "k", reference_frame(h_r, h_k), &run.h_k);
    dist.push(vec!["k".into(), run.dist_k.dist.into(), run.dist_k.delta_dist.into(), flag_list(&run.phase.flags).into()]);
    let mut files = artifacts("r", &run.first.record, &run.first.axis.summary);
    files.extend(artifacts("k", &run.record_k, &run.axis_k.summary));
    files.extend(artifacts("phase", &run.record_phase, &run.phase.summary));
    Ok(Report { command: Mode::TwoAxis.name(), config: cfg.clone(), tables: vec![estimates, ham, dist], artifacts: files })
}

/// Per-trial quantities kept for the Monte Carlo summary.
#[derive(Debug, Clone, Default)]
struct TrialStats {
    eta: Option<(f64, f64)>,
    cos_theta_r: Option<(f64, f64)>,
    dist_r: Option<(f64, f64)>,
    dist_k: Option<(f64, f64)>,
    phi: Option<(f64, f64)>,
    c: Option<(f64, f64)>,
    d: Option<(f64, f64)>,
    status: String,
    branch: &'static str,
    flags: String,
}

fn run_trial(cfg: &ExperimentConfig, trial_seed: u64) -> TrialStats {
    let mut out = TrialStats { branch: "-", flags: "-".into(), ..Default::default() };
    let first_only = |out: &mut TrialStats, first: &SingleRun| {
        out.eta = Some((first.axis.eta.value, first.axis.eta.sigma));
        out.cos_theta_r = Some((first.axis.cos_theta.value, first.axis.cos_theta.sigma));
        out.dist_r = Some((first.dist.dist, first.dist.delta_dist));
    };
    match run_two_axis(cfg, trial_seed) {
        Ok(run) => {
            first_only(&mut out, &run.first);
            out.dist_k = Some((run.dist_k.dist, run.dist_k.delta_dist));
            out.phi = Some((run.phase.phi().value, run.phase.phi().sigma));
            out.c = Some((run.phase.c.value, run.phase.c.sigma));
            out.d = Some((run.phase.d.value, run.phase.d.sigma));
            out.status = "ok".into();
            out.branch = run.phase.angles.branch.name();
            out.flags = flag_list(&run.phase.flags);
        }
        Err((Stage::First, e)) => out.status = format!("r:{}", e.name()),
        Err((stage, e)) => {
            // The first axis succeeded; rerun it alone for its statistics.
            if let Ok(first) = run_single(cfg, trial_seed) {
                first_only(&mut out, &first);
            }
            out.status = format!("{}:{}", stage.name(), e.name());
        }
    }
    out
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0)).sqrt()
}

fn opt_cells(pair: Option<(f64, f64)>) -> [Cell; 2] {
    match pair {
        Some((v, s)) => [v.into(), s.into()],
        None => ["NA".into(), "NA".into()],
    }
}

/// Fraction of `(value, sigma)` pairs accepted by `hit`.
fn fraction<F: Fn(f64, f64) -> bool>(pairs: &[(f64, f64)], hit: F) -> f64 {
    if pairs.is_empty() {
        return f64::NAN;
    }
    pairs.iter().filter(|&&(v, s)| hit(v, s)).count() as f64 / pairs.len() as f64
}

pub fn cmd_montecarlo(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    cfg.validate(Mode::Montecarlo)?;
    let h_r = cfg.h_r();
    let h_k_frame = reference_frame(h_r, cfg.h_k()?);
    let cos_theta_r = h_r.to_polar().theta.cos().abs();
    let eta = cfg.eta;
    let phi_k = h_k_frame.to_polar().phi;

    let seeds: Vec<u64> = (0..cfg.trials as u64).map(|t| derive_seed(cfg.seed, t)).collect();
    let stats: Vec<TrialStats> = seeds.par_iter().map(|&s| run_trial(cfg, s)).collect();

    let mut trials = Table::new(
        "trials",
        &[
            "trial", "seed", "status", "eta", "delta_eta", "cos_theta_r", "delta_cos_theta_r", "dist_r",
            "delta_dist_r", "dist_k", "delta_dist_k", "phi", "delta_phi", "C", "delta_C", "D", "delta_D",
            "branch", "flags",
        ],
    );
    for (i, (s, seed)) in stats.iter().zip(&seeds).enumerate() {
        let mut row: Vec<Cell> = vec![i.into(), (*seed).into(), s.status.clone().into()];
        for pair in [s.eta, s.cos_theta_r, s.dist_r, s.dist_k, s.phi, s.c, s.d] {
            row.extend(opt_cells(pair));
        }
        row.push(s.branch.into());
        row.push(s.flags.clone().into());
        trials.push(row);
    }

    let collect = |f: fn(&TrialStats) -> Option<(f64, f64)>| -> Vec<(f64, f64)> {
        stats.iter().filter_map(f).collect()
    };
    let etas = collect(|s| s.eta);
    let cos_r = collect(|s| s.cos_theta_r);
    let dist_r = collect(|s| s.dist_r);
    let dist_k = collect(|s| s.dist_k);
    let phis = collect(|s| s.phi);
    let cs = collect(|s| s.c);
    let ds = collect(|s| s.d);

    let finite_mean = |pairs: &[(f64, f64)]| {
        let f: Vec<f64> = pairs.iter().map(|p| p.1).filter(|x| x.is_finite()).collect();
        if f.is_empty() { f64::NAN } else { mean(&f) }
    };
    let mean_dd_r = finite_mean(&dist_r);
    let mean_dd_k = finite_mean(&dist_k);
    let coverage_r = fraction(&dist_r, |d, _| d <= 3.0 * mean_dd_r);
    let coverage_k = fraction(&dist_k, |d, _| d <= 3.0 * mean_dd_k);
    let hits_k = (coverage_k * dist_k.len() as f64).round();
    let coverage_k_conservative = hits_k / cfg.trials as f64;
    let coverage_eta = fraction(&etas, |v, s| (v - eta).abs() <= 3.0 * s);
    let coverage_cos = fraction(&cos_r, |v, s| (v - cos_theta_r).abs() <= 3.0 * s);
    let coverage_phi = fraction(&phis, |v, s| wrap_angle(v - phi_k).abs() <= 3.0 * s);
    let spread = |pairs: &[(f64, f64)]| {
        let v: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        if v.len() < 2 { f64::NAN } else { std_dev(&v) / finite_mean(pairs) }
    };

    let mut summary = Table::new("summary", &["metric", "value"]);
    let mut put = |k: &str, v: Cell| summary.push(vec![k.into(), v]);
    put("trials", cfg.trials.into());
    put("completed_r", dist_r.len().into());
    put("completed_k", dist_k.len().into());
    put("degenerate_r", (cfg.trials - dist_r.len()).into());
    put("degenerate_k", (cfg.trials - dist_k.len()).into());
    put("mean_dist_r", mean(&dist_r.iter().map(|p| p.0).collect::<Vec<_>>()).into());
    put("mean_delta_dist_r", mean_dd_r.into());
    put("coverage_r", coverage_r.into());
    put("mean_dist_k", mean(&dist_k.iter().map(|p| p.0).collect::<Vec<_>>()).into());
    put("mean_delta_dist_k", mean_dd_k.into());
    put("coverage_k", coverage_k.into());
    put("coverage_k_conservative", coverage_k_conservative.into());
    put("coverage_eta", coverage_eta.into());
    put("coverage_cos_theta_r", coverage_cos.into());
    put("coverage_phi", coverage_phi.into());
    put("spread_ratio_eta", spread(&etas).into());
    put("spread_ratio_C", spread(&cs).into());
    put("spread_ratio_D", spread(&ds).into());

    let bins = cfg.histogram_bins;
    let tables = vec![
        summary,
        trials,
        histogram("histogram_dist_r", &dist_r.iter().map(|p| p.0).collect::<Vec<_>>(), bins),
        histogram("histogram_dist_k", &dist_k.iter().map(|p| p.0).collect::<Vec<_>>(), bins),
        histogram("histogram_eta", &etas.iter().map(|p| p.0).collect::<Vec<_>>(), bins),
    ];
    Ok(Report { command: Mode::Montecarlo.name(), config: cfg.clone(), tables, artifacts: Vec::new() })
}

/// Least-squares line `y = slope x + intercept`.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<(f64, f64), HarnessError> {
    if points.len() < 3 {
        return Err(HarnessError::FitFailed(format!("{} usable sweep points, need 3", points.len())));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(HarnessError::FitFailed("sweep points share one abscissa".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[derive(Debug, Clone)]
struct SweepPoint {
    eta: f64,
    n_t: u64,
    sampling: SamplingConfig,
    delta_dists: Vec<f64>,
    dists: Vec<f64>,
}

impl SweepPoint {
    fn usable(&self) -> bool {
        self.delta_dists.len() >= 2
    }

    fn mean_delta(&self) -> f64 {
        mean(&self.delta_dists)
    }

    fn stderr_delta(&self) -> f64 {
        std_dev(&self.delta_dists) / (self.delta_dists.len() as f64).sqrt()
    }
}

pub fn cmd_scaling(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    cfg.validate(Mode::Scaling)?;
    let mut jobs = Vec::new();
    for (a, &eta) in cfg.scaling_etas.iter().enumerate() {
        for (b, &n_t) in cfg.sweep_total_measurements.iter().enumerate() {
            let point_seed = derive_seed(derive_seed(cfg.seed, 1000 + a as u64), b as u64);
            let sampling = cfg.sweep_point(n_t, eta)?;
            for t in 0..cfg.trials as u64 {
                jobs.push((a, b, sampling, derive_seed(point_seed, t)));
            }
        }
    }
    let results: Vec<Option<(f64, f64)>> = jobs
        .par_iter()
        .map(|(_, _, sampling, seed)| {
            let s = with_seed(*sampling, derive_seed(*seed, TAG_R));
            run_single_with(cfg, &s).ok().map(|r| (r.dist.dist, r.dist.delta_dist))
        })
        .collect();

    let mut points: Vec<SweepPoint> = Vec::new();
    for (a, &eta) in cfg.scaling_etas.iter().enumerate() {
        for (b, &n_t) in cfg.sweep_total_measurements.iter().enumerate() {
            let mut p = SweepPoint { eta, n_t, sampling: cfg.sweep_point(n_t, eta)?, delta_dists: vec![], dists: vec![] };
            for ((ja, jb, _, _), res) in jobs.iter().zip(&results) {
                if (*ja, *jb) == (a, b) {
                    if let Some((d, dd)) = res {
                        if dd.is_finite() {
                            p.delta_dists.push(*dd);
                            p.dists.push(*d);
                        }
                    }
                }
            }
            points.push(p);
        }
    }

    let mut table = Table::new(
        "scaling_points",
        &["eta", "n_t", "n_e", "n_s", "trials_ok", "mean_delta_dist_r", "stderr_delta_dist_r", "mean_dist_r"],
    );
    for p in &points {
        let usable = p.usable();
        table.push(vec![
            p.eta.into(),
            p.n_t.into(),
            p.sampling.n_e.into(),
            p.sampling.n_s.into(),
            p.delta_dists.len().into(),
            if usable { p.mean_delta().into() } else { "NA".into() },
            if usable { p.stderr_delta().into() } else { "NA".into() },
            if usable { mean(&p.dists).into() } else { "NA".into() },
        ]);
    }

    let mut fit = Table::new("scaling_fit", &["eta", "slope", "intercept", "points"]);
    for &eta in &cfg.scaling_etas {
        let xy: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| p.eta == eta && p.usable())
            .map(|p| ((p.n_t as f64).ln(), p.mean_delta().ln()))
            .collect();
        let (slope, intercept) = linear_fit(&xy)?;
        fit.push(vec![eta.into(), slope.into(), intercept.into(), xy.len().into()]);
    }

    let mut ratio = Table::new("scaling_ratio", &["n_t", "eta", "eta_reference", "ratio", "separation_in_stderr"]);
    let reference = cfg.scaling_etas[0];
    for &eta in &cfg.scaling_etas[1..] {
        for &n_t in &cfg.sweep_total_measurements {
            let find = |e: f64| points.iter().find(|p| p.eta == e && p.n_t == n_t && p.usable());
            if let (Some(hi), Some(lo)) = (find(eta), find(reference)) {
                let se = (hi.stderr_delta().powi(2) + lo.stderr_delta().powi(2)).sqrt();
                ratio.push(vec![
                    n_t.into(),
                    eta.into(),
                    reference.into(),
                    (hi.mean_delta() / lo.mean_delta()).into(),
                    ((hi.mean_delta() - lo.mean_delta()) / se).into(),
                ]);
            }
        }
    }

    Ok(Report { command: Mode::Scaling.name(), config: cfg.clone(), tables: vec![fit, table, ratio], artifacts: Vec::new() })
}

pub fn run_command(mode: Mode, cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    match mode {
        Mode::Characterize => cmd_characterize(cfg),
        Mode::TwoAxis => cmd_two_axis(cfg),
        Mode::Montecarlo => cmd_montecarlo(cfg),
        Mode::Scaling => cmd_scaling(cfg),
    }
}
