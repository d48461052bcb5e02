//! CSV writers. Floats use Rust's shortest round-trip formatting, so equal
//! inputs give byte-identical files.

use std::io::Write;

use crate::error::Result;
use crate::metrics::MetricsReport;
use crate::partition::DiscreteDist;
use crate::sds::Trajectory;

fn num(v: f64) -> String {
    format!("{v}")
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(out)
}

/// Columns `k, x_1..x_d, w_1..w_d`; row `k` holds `x_k` and `w_{k−1}`.
pub fn write_trajectory<W: Write>(out: W, traj: &Trajectory) -> Result<()> {
    let d = traj.initial_state.len();
    let mut w = writer(out);
    let mut header = vec!["k".to_string()];
    header.extend((1..=d).map(|i| format!("x_{i}")));
    header.extend((1..=d).map(|i| format!("w_{i}")));
    w.write_record(&header)?;
    for k in 1..=traj.horizon() {
        let mut row = vec![k.to_string()];
        row.extend(traj.state(k).iter().map(|v| num(*v)));
        row.extend(traj.noises[k - 1].iter().map(|v| num(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `cell_index, weight`; the overflow cell is the last index.
pub fn write_discrete_dist<W: Write>(out: W, dist: &DiscreteDist) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["cell_index", "weight"])?;
    for (i, p) in dist.weights().iter().enumerate() {
        w.write_record([i.to_string(), num(*p)])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `trajectory_id, rate`.
pub fn write_rates<W: Write>(out: W, report: &MetricsReport) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["trajectory_id", "rate"])?;
    for (i, r) in report.per_trajectory_rates.iter().enumerate() {
        w.write_record([i.to_string(), num(*r)])?;
    }
    w.flush()?;
    Ok(())
}

/// One-row summary `mean_rate, ci, exponent_approx, gamma_bound`; `ci` is the
/// 95% half-width and `gamma_bound` is `γ^K` (empty when not computed).
pub fn write_summary<W: Write>(out: W, report: &MetricsReport) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["mean_rate", "ci", "exponent_approx", "gamma_bound"])?;
    let gamma = report
        .epsilon_accurate_prob
        .as_ref()
        .map(|e| num(e.gamma_bound))
        .unwrap_or_default();
    w.write_record([num(report.mean_rate), num(report.ci_halfwidth), num(report.exponent_approx), gamma])?;
    w.flush()?;
    Ok(())
}

/// Columns `k, running_rate` for `k = 1..K`.
pub fn write_running_rate<W: Write>(out: W, running: &[f64]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["k", "running_rate"])?;
    for (i, r) in running.iter().enumerate() {
        w.write_record([(i + 1).to_string(), num(*r)])?;
    }
    w.flush()?;
    Ok(())
}
