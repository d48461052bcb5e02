//! The harness commands. Each writes CSV artifacts (and an SVG chart drawn
//! from the same data) into the output directory and returns the lines it
//! reports on stdout.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use sdspred::config::NoiseConfig;
use sdspred::designer::{equivalence_check, numeric_design, standard_family};
use sdspred::export;
use sdspred::metrics::{
    batch_log_scores, epsilon_accuracy_from_scores, exponent_approx, noise_exponent_approx,
    report_from_scores, running_rates, simulate_batch, EvalConfig,
};
use sdspred::predictors::mismatched_gaussian_predictor;
use sdspred::rng::{self, tag};
use sdspred::sds::random_initial_state;
use sdspred::{Error, Trajectory};

use crate::config::{Experiment, ExperimentConfig};
use crate::plot::{line_chart, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Evaluate,
    Exponent,
    Design,
    Fig1,
    Fig2,
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub budget: Option<usize>,
}

pub fn apply(mut cfg: ExperimentConfig, o: &Overrides) -> ExperimentConfig {
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(b) = o.budget {
        cfg.budget = Some(b);
    }
    if let Some(out) = &o.out {
        cfg.output_dir = Some(out.clone());
    }
    cfg
}

pub fn run(cfg: &ExperimentConfig, cmd: Command) -> Result<Vec<String>> {
    let exp = cfg.build()?;
    let out = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    match cmd {
        Command::Simulate => simulate(&exp, &out),
        Command::Evaluate => evaluate(&exp, &out),
        Command::Exponent => exponent(&exp, &out),
        Command::Design => design(&exp, &out),
        Command::Fig1 => fig1(&exp, &out),
        Command::Fig2 => fig2(&exp, &out),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn simulate(exp: &Experiment, out: &Path) -> Result<Vec<String>> {
    let trajs = simulate_batch(&exp.system, &exp.config.eval_config())?;
    for (i, t) in trajs.iter().enumerate() {
        export::write_trajectory(create(&out.join(format!("trajectory_{i:03}.csv")))?, t)?;
    }
    let series: Vec<Series> = trajs
        .iter()
        .take(8)
        .enumerate()
        .map(|(i, t)| Series::indexed(format!("trajectory {i}"), &t.states.iter().map(|x| x[0]).collect::<Vec<_>>()))
        .collect();
    line_chart(&out.join("trajectories.svg"), "Simulated trajectories", "k", "x_1", &series)?;
    Ok(vec![format!("wrote {} trajectories to {}", trajs.len(), out.display())])
}

/// Mean over trajectories of the running rate at each `k`.
pub fn mean_running(logs: &[Vec<f64>]) -> Vec<f64> {
    let runs: Vec<Vec<f64>> = logs.iter().map(|l| running_rates(l)).collect();
    let k = runs.first().map_or(0, Vec::len);
    (0..k)
        .map(|j| runs.iter().map(|r| r[j]).sum::<f64>() / runs.len() as f64)
        .collect()
}

fn evaluate(exp: &Experiment, out: &Path) -> Result<Vec<String>> {
    let mut config = exp.config.eval_config();
    if let Some(p) = &exp.partition {
        config = config.with_partition(p.clone());
    }
    let trajs = simulate_batch(&exp.system, &config)?;
    let logs = batch_log_scores(&exp.system, &exp.predictor, &trajs, config.eps, config.budget)?;
    let mut report = report_from_scores(&exp.system, &exp.predictor, &config, &logs)?;
    report.epsilon_accurate_prob =
        epsilon_accuracy_from_scores(&exp.predictor, &config, &logs, &[config.horizon])?.pop();
    export::write_rates(create(&out.join("rates.csv"))?, &report)?;
    export::write_summary(create(&out.join("summary.csv"))?, &report)?;
    let running = mean_running(&logs);
    export::write_running_rate(create(&out.join("running_rate.csv"))?, &running)?;
    line_chart(
        &out.join("running_rate.svg"),
        "Mean running prediction rate",
        "k",
        "rate",
        &[
            Series::indexed(exp.predictor.label.clone(), &running),
            Series::indexed("d ln(2eps) - H(q)", &vec![report.exponent_approx; running.len()]),
        ],
    )?;
    let mut lines = vec![
        format!("mean_rate = {}", report.mean_rate),
        format!("ci_halfwidth = {}", report.ci_halfwidth),
        format!("exponent_approx = {}", report.exponent_approx),
    ];
    if let Some(d) = report.discrete_rate {
        lines.push(format!("discrete_rate = {d}"));
    }
    if report.degenerate() {
        lines.push(format!("degenerate predictor: {} trajectories with zero score", report.poisoned));
    }
    Ok(lines)
}

fn exponent(exp: &Experiment, out: &Path) -> Result<Vec<String>> {
    let eps = exp.config.eps;
    let value = exponent_approx(&exp.system, eps)?;
    let noise = exp.system.noise();
    let mut w = csv_file(&out.join("exponent.csv"), "eps,exponent_approx")?;
    let mut pts = Vec::new();
    for i in 0..=40 {
        let e = eps * 10f64.powf(-1.0 + i as f64 / 20.0);
        let v = noise_exponent_approx(noise, e)?;
        writeln!(w, "{e},{v}")?;
        pts.push((e.ln(), v));
    }
    w.flush()?;
    line_chart(
        &out.join("exponent.svg"),
        "Predictability exponent approximation",
        "ln eps",
        "d ln(2eps) - H(q)",
        &[Series { label: "exponent".into(), points: pts }],
    )?;
    Ok(vec![format!("{value}")])
}

fn csv_file(path: &Path, header: &str) -> Result<BufWriter<File>> {
    let mut w = create(path)?;
    writeln!(w, "{header}")?;
    Ok(w)
}

fn design(exp: &Experiment, out: &Path) -> Result<Vec<String>> {
    let noise = exp.system.noise();
    let variance = (noise.dim() == 1).then(|| noise.covariance()[(0, 0)]);
    let (problem, r) = exp.config.design_problem(variance)?;
    let outcome = numeric_design(&problem)?;
    let sigma = problem.sigma;
    let h = 3f64.sqrt() * sigma;
    export::write_discrete_dist(create(&out.join("design_weights.csv"))?, &outcome.weights)?;
    let block = NoiseConfig::from_model(&outcome.to_noise_model()?).to_toml()?;
    fs::write(out.join("design_noise.toml"), format!("[noise]\n{block}"))?;
    let fit = outcome.kkt_regression()?;
    let sup = outcome.sup_distance_to_uniform(h);
    let mut w = csv_file(
        &out.join("design_summary.csv"),
        "sigma,cap,achieved_entropy,uniform_entropy,sup_distance_to_uniform,mass_outside,lambda_1,lambda_2,fit_c1,fit_c2,iterations",
    )?;
    writeln!(
        w,
        "{sigma},{},{},{},{sup},{},{},{},{},{},{}",
        problem.cap,
        outcome.achieved_entropy,
        (2.0 * h).ln(),
        outcome.mass_outside(h),
        outcome.multipliers[0],
        outcome.multipliers[1],
        fit[1],
        fit[2],
        outcome.iterations
    )?;
    w.flush()?;
    let family = standard_family(sigma, problem.cap, problem.grid_resolution)?;
    let report = equivalence_check(sigma, r, &family)?;
    let mut w = csv_file(&out.join("equivalence.csv"), "candidate,one_step_value,argmax,entropy,variance")?;
    for s in &report.scores {
        writeln!(w, "{},{},{},{},{}", s.name, s.one_step.value, s.one_step.argmax, s.entropy, s.variance)?;
    }
    w.flush()?;
    let xs = outcome.centers();
    let qs = outcome.densities();
    let u = 1.0 / (2.0 * h);
    line_chart(
        &out.join("design.svg"),
        "Entropy-maximizing design",
        "x",
        "density",
        &[
            Series { label: "numeric design".into(), points: xs.iter().copied().zip(qs).collect() },
            Series {
                label: "uniform on [-sqrt3 sigma, sqrt3 sigma]".into(),
                points: xs.iter().map(|x| (*x, if x.abs() <= h { u } else { 0.0 })).collect(),
            },
        ],
    )?;
    Ok(vec![
        format!("achieved_entropy = {}", outcome.achieved_entropy),
        format!("uniform_entropy = {}", (2.0 * h).ln()),
        format!("sup_distance_to_uniform = {sup}"),
        format!("lambda_2 = {}", outcome.multipliers[1]),
        format!("uniform_minimizes_one_step = {}", report.uniform_minimizes_one_step),
        format!("uniform_maximizes_entropy = {}", report.uniform_maximizes_entropy),
    ])
}

/// Data behind `fig1`: running rates of the optimal predictor along
/// `fig_trajectories` trajectories sharing one initial state.
#[derive(Debug, Clone)]
pub struct Fig1Data {
    pub reference: f64,
    pub trajectories: Vec<Trajectory>,
    pub running: Vec<Vec<f64>>,
}

fn figure_config(exp: &Experiment) -> EvalConfig {
    let c = &exp.config;
    let x0 = c.initial_state.clone().unwrap_or_else(|| {
        random_initial_state(exp.system.dim(), rng::derive_seed(c.seed, &[tag::INITIAL_STATE]))
    });
    let mut e = EvalConfig::new(c.eps, c.horizon, c.fig_trajectories, c.seed).with_initial_state(x0);
    if let Some(b) = c.budget {
        e = e.with_budget(b);
    }
    e
}

pub fn fig1_data(exp: &Experiment) -> Result<Fig1Data> {
    let config = figure_config(exp);
    let optimal = sdspred::predictors::optimal_predictor(&exp.system);
    let trajectories = simulate_batch(&exp.system, &config)?;
    let logs = batch_log_scores(&exp.system, &optimal, &trajectories, config.eps, config.budget)?;
    Ok(Fig1Data {
        reference: exponent_approx(&exp.system, config.eps)?,
        running: logs.iter().map(|l| running_rates(l)).collect(),
        trajectories,
    })
}

fn wide_csv(path: &Path, columns: &[String], data: &[Vec<f64>]) -> Result<()> {
    let mut w = csv_file(path, &format!("k,{}", columns.join(",")))?;
    let k = data.first().map_or(0, Vec::len);
    for j in 0..k {
        let row: Vec<String> = data.iter().map(|d| format!("{}", d[j])).collect();
        writeln!(w, "{},{}", j + 1, row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn fig1(exp: &Experiment, out: &Path) -> Result<Vec<String>> {
    let data = fig1_data(exp)?;
    let mut cols = Vec::new();
    let mut series = Vec::new();
    for (i, (t, r)) in data.trajectories.iter().zip(&data.running).enumerate() {
        export::write_trajectory(create(&out.join(format!("fig1_trajectory_{i}.csv")))?, t)?;
        export::write_running_rate(create(&out.join(format!("fig1_running_rate_{i}.csv")))?, r)?;
        cols.push(format!("trajectory_{i}"));
        series.push(Series::indexed(format!("trajectory {i}"), r));
    }
    let k = exp.config.horizon;
    let mut columns = data.running.clone();
    columns.push(vec![data.reference; k]);
    cols.push("reference".into());
    wide_csv(&out.join("fig1_running_rates.csv"), &cols, &columns)?;
    series.push(Series::indexed("d ln(2eps) - H(q)", &vec![data.reference; k]));
    line_chart(&out.join("fig1.svg"), "Running prediction rate, optimal predictor", "k", "rate", &series)?;
    let mut lines = vec![format!("reference = {}", data.reference)];
    for (i, r) in data.running.iter().enumerate() {
        lines.push(format!("trajectory {i}: final running rate = {}", r[k - 1]));
    }
    Ok(lines)
}

/// Data behind `fig2`: mean running rate over common trajectories for each
/// mismatch setting, sweeping τ at η = 0 and η at τ = 0.
#[derive(Debug, Clone)]
pub struct Fig2Data {
    pub tau: Vec<(f64, Vec<f64>)>,
    pub eta: Vec<(f64, Vec<f64>)>,
}

pub fn fig2_data(exp: &Experiment) -> Result<Fig2Data> {
    let config = figure_config(exp);
    let trajectories = simulate_batch(&exp.system, &config)?;
    let curve = |tau: f64, eta: f64| -> Result<Vec<f64>> {
        let p = mismatched_gaussian_predictor(&exp.system, tau, eta)?;
        let logs = batch_log_scores(&exp.system, &p, &trajectories, config.eps, config.budget)?;
        Ok(mean_running(&logs))
    };
    Ok(Fig2Data {
        tau: exp.config.tau_sweep.iter().map(|&t| Ok((t, curve(t, 0.0)?))).collect::<Result<_>>()?,
        eta: exp.config.eta_sweep.iter().map(|&e| Ok((e, curve(0.0, e)?))).collect::<Result<_>>()?,
    })
}

fn fig2(exp: &Experiment, out: &Path) -> Result<Vec<String>> {
    if !matches!(exp.system.noise(), sdspred::NoiseModel::Gaussian(_)) {
        return Err(Error::Unsupported("fig2 needs gaussian system noise".into()).into());
    }
    let data = fig2_data(exp)?;
    let mut lines = Vec::new();
    for (name, sweep) in [("tau", &data.tau), ("eta", &data.eta)] {
        let cols: Vec<String> = sweep.iter().map(|(v, _)| format!("{name}_{v}")).collect();
        let curves: Vec<Vec<f64>> = sweep.iter().map(|(_, c)| c.clone()).collect();
        wide_csv(&out.join(format!("fig2_{name}.csv")), &cols, &curves)?;
        let series: Vec<Series> = sweep.iter().map(|(v, c)| Series::indexed(format!("{name} = {v}"), c)).collect();
        line_chart(
            &out.join(format!("fig2_{name}.svg")),
            &format!("Running prediction rate under mismatch ({name} sweep)"),
            "k",
            "rate",
            &series,
        )?;
        for (v, c) in sweep {
            lines.push(format!("{name} = {v}: final running rate = {}", c.last().copied().unwrap_or(f64::NAN)));
        }
    }
    Ok(lines)
}

/// Final rates of a fig2 sweep, for ordering checks.
pub fn finals(sweep: &[(f64, Vec<f64>)]) -> Vec<f64> {
    sweep.iter().map(|(_, c)| *c.last().unwrap_or(&f64::NAN)).collect()
}
