//! One function per subcommand: resolve the config, run the core operation,
//! render the outputs.

use lilsde_core::coefficients::{check_condition_c, check_hypothesis_h, McOptions};
use lilsde_core::flow::{solve_flow_ito, FlowPath};
use lilsde_core::lil::{run_seed, triangle_scan, LilReport, ScanRecord};
use lilsde_core::rate::RateResult;
use lilsde_core::{
    dist_to_theta, integrate_skeleton, phi, rate_exact_full_rank, rate_variational, CoefficientSystem, Control,
    FieldSystem, GeometricGrid, SamplePath, WienerPath,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{missing, Config, RateMethodSpec, RescaleMethod, SchemeSpec};
use crate::error::{LabError, Result};
use crate::output::{num, opt_num, Csv, OutputDir};

fn pool(cfg: &Config) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| LabError::Config(format!("threads: {e}")))
}

/// Runs `f` for every seed on the worker pool; results come back in seed order.
fn per_seed<T: Send>(cfg: &Config, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    pool(cfg)?.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&s| f(s))
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    })
}

fn path_csv(header_t: &str, path: &SamplePath, t_scale: f64) -> String {
    let d = path.dim();
    let mut header = vec![header_t.to_string()];
    header.extend((0..d).map(|l| format!("x{l}")));
    let mut csv = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for j in 0..=path.cells() {
        csv.row(std::iter::once(num(path.time(j) * t_scale)).chain(path.point(j).iter().map(|&v| num(v))));
    }
    csv.into_string()
}

fn resample_flow(flow: &FlowPath, horizon: f64, cells: usize) -> SamplePath {
    SamplePath::from_fn(flow.dim(), cells, |t, out| flow.value_at(t * horizon, out))
}

pub fn simulate(cfg: &Config, out: &mut OutputDir) -> Result<()> {
    let spec = cfg.simulate.as_ref().ok_or_else(|| missing("simulate"))?;
    if spec.cells == 0 {
        return Err(LabError::Config("simulate.cells must be positive".into()));
    }
    if let Some(u) = spec.u {
        phi(u)?;
    }
    let sys = cfg.coefficient_system()?;
    let init = cfg.initial_condition();
    let grid = GeometricGrid::new(cfg.grid.ratio, cfg.grid.windows, cfg.grid.resolution)?;
    let paths = per_seed(cfg, |seed| -> Result<SamplePath> {
        let noise = WienerPath::sample(&grid, sys.noise_dim(), seed)?;
        let tag = |e: lilsde_core::Error| LabError::Core(e.in_seed(seed, None));
        match spec.u {
            Some(u) => match spec.method {
                RescaleMethod::Flow => {
                    lilsde_core::flow::rescaled_solution(&sys, &noise, &init, u, spec.cells).map_err(tag)
                }
                RescaleMethod::Direct => {
                    let steps = spec.steps.unwrap_or_else(|| (u / cfg.grid.resolution).ceil() as usize);
                    lilsde_core::flow::rescaled_solution_direct(&sys, &noise, &init, u, spec.cells, steps).map_err(tag)
                }
            },
            None => {
                let horizon = spec.horizon.unwrap_or(grid.horizon());
                let flow = solve(&sys, &noise, &init, horizon, spec.scheme).map_err(tag)?;
                Ok(resample_flow(&flow, horizon, spec.cells))
            }
        }
    })?;
    let t_scale = match spec.u {
        Some(_) => 1.0,
        None => spec.horizon.unwrap_or(grid.horizon()),
    };
    let stem = if spec.u.is_some() { "xi" } else { "solution" };
    for (seed, path) in cfg.seeds.iter().zip(&paths) {
        out.add(format!("{stem}_seed{seed}.csv"), path_csv("t", path, t_scale));
    }
    Ok(())
}

fn solve(
    sys: &CoefficientSystem,
    noise: &WienerPath,
    init: &lilsde_core::InitialCondition,
    horizon: f64,
    scheme: SchemeSpec,
) -> lilsde_core::Result<FlowPath> {
    match scheme {
        SchemeSpec::Heun => lilsde_core::flow::solve_anticipating(sys, noise, init, horizon),
        SchemeSpec::ItoEuler => {
            let x0 = init.realize(noise, sys.dim())?;
            solve_flow_ito(sys, noise, &x0, horizon)
        }
    }
}

#[derive(Serialize)]
struct SkeletonSummary {
    energy: f64,
    cells: usize,
    substeps: usize,
    end: Vec<f64>,
}

pub fn skeleton(cfg: &Config, out: &mut OutputDir) -> Result<()> {
    let spec = cfg.skeleton.as_ref().ok_or_else(|| missing("skeleton"))?;
    let limit = cfg.limit_system()?;
    let control = spec.control.build(limit.noise_dim())?;
    let x0 = spec.x0.clone().unwrap_or_else(|| vec![0.0; limit.dim()]);
    let path = integrate_skeleton(&limit, &control, &x0, spec.substeps)?;
    out.add("skeleton.csv", path_csv("t", &path, 1.0));
    out.add_json(
        "skeleton.json",
        &SkeletonSummary {
            energy: control.energy(),
            cells: control.cells(),
            substeps: spec.substeps,
            end: path.end().to_vec(),
        },
    )
}

fn control_csv(control: &Control) -> String {
    let k = control.noise_dim();
    let mut header = vec!["cell".to_string(), "t_start".to_string()];
    header.extend((0..k).map(|j| format!("rate{j}")));
    let mut csv = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for c in 0..control.cells() {
        let t = c as f64 / control.cells() as f64;
        csv.row(
            [c.to_string(), num(t)]
                .into_iter()
                .chain(control.cell(c).iter().map(|&v| num(v))),
        );
    }
    csv.into_string()
}

#[derive(Serialize)]
struct RateRecord {
    method: &'static str,
    /// `null` when the value is `+∞`.
    value: Option<f64>,
    control_energy: f64,
    residual: f64,
    iterations: usize,
    start_index: usize,
    converged: bool,
}

impl From<&RateResult> for RateRecord {
    fn from(r: &RateResult) -> Self {
        Self {
            method: r.method.as_str(),
            value: r.value.is_finite().then_some(r.value),
            control_energy: r.control.energy(),
            residual: r.residual,
            iterations: r.iterations,
            start_index: r.start_index,
            converged: r.converged,
        }
    }
}

#[derive(Serialize)]
struct RateSummary {
    results: Vec<RateRecord>,
}

pub fn rate(cfg: &Config, out: &mut OutputDir) -> Result<()> {
    let spec = cfg.rate.as_ref().ok_or_else(|| missing("rate"))?;
    let limit = cfg.limit_system()?;
    let g = spec.target.build(&limit)?;
    let mut results = Vec::new();
    if matches!(spec.method, RateMethodSpec::Exact | RateMethodSpec::Both) {
        results.push(rate_exact_full_rank(&limit, &g)?);
    }
    if matches!(spec.method, RateMethodSpec::Variational | RateMethodSpec::Both) {
        results.push(rate_variational(&limit, &g, spec.cells, &spec.options())?);
    }
    for r in &results {
        out.add(
            format!("rate_control_{}.csv", r.method.as_str()),
            control_csv(&r.control),
        );
    }
    out.add_json(
        "rate.json",
        &RateSummary {
            results: results.iter().map(RateRecord::from).collect(),
        },
    )?;
    if let Some(r) = results.iter().find(|r| !r.converged) {
        return Err(LabError::NotConverged(format!(
            "{} route ended with residual {} above tolerance {}",
            r.method.as_str(),
            r.residual,
            spec.tolerance
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct DistSummary {
    distance: f64,
    energy_cap: f64,
    control_energy: f64,
    cells: usize,
    iterations: usize,
    start_index: usize,
    converged: bool,
}

pub fn dist(cfg: &Config, out: &mut OutputDir) -> Result<()> {
    let spec = cfg.dist.as_ref().ok_or_else(|| missing("dist"))?;
    let limit = cfg.limit_system()?;
    let xi = spec.target.build(&limit)?;
    let q = dist_to_theta(&limit, &xi, spec.cells, &spec.optimizer.options())?;
    out.add("dist_target.csv", path_csv("t", &xi, 1.0));
    out.add("dist_skeleton.csv", path_csv("t", &q.path, 1.0));
    out.add("dist_control.csv", control_csv(&q.control));
    out.add_json(
        "dist.json",
        &DistSummary {
            distance: q.distance,
            energy_cap: q.energy_cap,
            control_energy: q.control.energy(),
            cells: spec.cells,
            iterations: q.iterations,
            start_index: q.start_index,
            converged: q.converged,
        },
    )
}

/// The per-(seed, i, target) table of a LIL run.
pub fn lil_csv(report: &LilReport) -> String {
    let mut csv = Csv::new(&[
        "seed",
        "i",
        "u",
        "dist_theta",
        "endpoint_norm",
        "gamma",
        "target_id",
        "dist_target",
    ]);
    for r in &report.records {
        let head = [
            r.seed.to_string(),
            r.i.to_string(),
            num(r.u),
            opt_num(r.dist_theta),
            num(r.endpoint_norm),
            opt_num(r.gamma),
        ];
        if r.target_distances.is_empty() {
            csv.row(head.iter().cloned().chain([String::new(), String::new()]));
        }
        for (t, &d) in r.target_distances.iter().enumerate() {
            csv.row(head.iter().cloned().chain([t.to_string(), num(d)]));
        }
    }
    csv.into_string()
}

#[derive(Serialize)]
struct IndexValue {
    i: usize,
    value: f64,
}

#[derive(Serialize)]
struct IndexCount {
    i: usize,
    count: usize,
}

#[derive(Serialize)]
struct SeedValue {
    seed: u64,
    value: f64,
}

#[derive(Serialize)]
struct RecurrenceRow {
    seed: u64,
    target: usize,
    min_distance: f64,
    hits: usize,
}

#[derive(Serialize)]
struct LilSummary {
    rho: f64,
    seeds: Vec<u64>,
    burn_in: usize,
    windows: usize,
    median_dist_theta: Vec<IndexValue>,
    exceedances: Vec<IndexCount>,
    max_endpoint_norm: Vec<SeedValue>,
    recurrence: Vec<RecurrenceRow>,
}

#[derive(Serialize)]
struct ScanRow {
    seed: u64,
    u: f64,
    i: usize,
    distance: f64,
    beta1: f64,
    beta2: f64,
    beta3: f64,
    phi_ratio: f64,
    window_ratio: Option<f64>,
}

impl ScanRow {
    fn new(seed: u64, s: &ScanRecord) -> Self {
        Self {
            seed,
            u: s.u,
            i: s.i,
            distance: s.distance,
            beta1: s.beta1,
            beta2: s.beta2,
            beta3: s.beta3,
            phi_ratio: s.phi_ratio,
            window_ratio: s.window_ratio,
        }
    }
}

pub fn lil(cfg: &Config, out: &mut OutputDir) -> Result<()> {
    let spec = cfg.lil.as_ref().ok_or_else(|| missing("lil"))?;
    let lc = cfg.lil_config()?;
    let per = per_seed(cfg, |seed| Ok(run_seed(&lc, seed)?))?;
    let report = LilReport::new(per.into_iter().flatten().collect(), lc.rho);

    out.add("lil.csv", lil_csv(&report));
    let mut median = Csv::new(&["i", "median_dist_theta"]);
    for (i, m) in report.median_by_index() {
        median.row([i.to_string(), num(m)]);
    }
    out.add("lil_median.csv", median.into_string());
    let mut running = Csv::new(&["seed", "i", "running_min_dist_theta"]);
    for (s, i, m) in report.running_minima() {
        running.row([s.to_string(), i.to_string(), num(m)]);
    }
    out.add("lil_running_min.csv", running.into_string());
    out.add_json(
        "lil_summary.json",
        &LilSummary {
            rho: lc.rho,
            seeds: lc.seeds.clone(),
            burn_in: lc.burn_in,
            windows: lc.windows,
            median_dist_theta: report
                .median_by_index()
                .into_iter()
                .map(|(i, value)| IndexValue { i, value })
                .collect(),
            exceedances: report
                .exceedances_by_index()
                .into_iter()
                .map(|(i, count)| IndexCount { i, count })
                .collect(),
            max_endpoint_norm: report
                .max_endpoint_norm(lc.burn_in, lc.windows)
                .into_iter()
                .map(|(seed, value)| SeedValue { seed, value })
                .collect(),
            recurrence: report
                .recurrence()
                .into_iter()
                .map(|r| RecurrenceRow {
                    seed: r.seed,
                    target: r.target,
                    min_distance: r.min_distance,
                    hits: r.hits,
                })
                .collect(),
        },
    )?;
    if !spec.u_scan.is_empty() {
        let scans = per_seed(cfg, |seed| Ok(triangle_scan(&lc, seed, &spec.u_scan)?))?;
        let rows: Vec<ScanRow> = cfg
            .seeds
            .iter()
            .zip(&scans)
            .flat_map(|(&seed, s)| s.iter().map(move |r| ScanRow::new(seed, r)))
            .collect();
        out.add_jsonl("lil_scan.jsonl", &rows)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct HRow {
    u: f64,
    j: usize,
    sup_dev: f64,
    sup_dev_jacobian: f64,
    witness_point: Vec<f64>,
    non_finite: bool,
}

#[derive(Serialize)]
struct VerdictSummary {
    verdict: String,
    records: usize,
}

pub fn check_h(cfg: &Config, out: &mut OutputDir) -> Result<()> {
    let spec = cfg.check_h.as_ref().ok_or_else(|| missing("check_h"))?;
    let sys = cfg.coefficient_system()?;
    let limit = cfg.limit_system()?;
    let report = check_hypothesis_h(&sys, &limit, &spec.region()?, &spec.scales, spec.grid_n, spec.tol)?;
    let rows: Vec<HRow> = report
        .records
        .iter()
        .map(|r| HRow {
            u: r.u,
            j: r.j,
            sup_dev: r.sup_dev,
            sup_dev_jacobian: r.sup_dev_jacobian,
            witness_point: r.witness_point.clone(),
            non_finite: r.non_finite,
        })
        .collect();
    out.add_jsonl("check_h.jsonl", &rows)?;
    out.add_json(
        "check_h.json",
        &VerdictSummary {
            verdict: report.verdict.to_string(),
            records: rows.len(),
        },
    )
}

#[derive(Serialize)]
struct CRow {
    u: f64,
    /// `null` when the tail probability is exactly zero.
    estimate: Option<f64>,
    method: &'static str,
}

pub fn check_c(cfg: &Config, out: &mut OutputDir) -> Result<()> {
    let spec = cfg.check_c.as_ref().ok_or_else(|| missing("check_c"))?;
    let mc = McOptions {
        samples: spec.mc_samples,
        seed: spec.mc_seed,
        resolution: spec.mc_resolution,
    };
    let report = check_condition_c(
        &cfg.initial_condition(),
        cfg.system.dim,
        cfg.system.diffusion.len(),
        &spec.scales,
        spec.delta,
        &mc,
    )?;
    let rows: Vec<CRow> = report
        .records
        .iter()
        .map(|r| CRow {
            u: r.u,
            estimate: r.estimate.is_finite().then_some(r.estimate),
            method: r.method.as_str(),
        })
        .collect();
    out.add_jsonl("check_c.jsonl", &rows)?;
    out.add_json(
        "check_c.json",
        &VerdictSummary {
            verdict: report.verdict.to_string(),
            records: rows.len(),
        },
    )
}
