//! CSV and plot-data output. Numbers use the shortest round-trip decimal form,
//! so re-emitting the same trace gives identical bytes. Wall-clock times are
//! only written on request.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::geomedian::{ExperimentResult, SummaryRow};
use crate::sliding::RunTrace;

pub const TRACE_HEADER: &str = "run_id,algo,topology,seed,k,grad_g_calls,f_calls,psi0_gap,wall_ms";
pub const SUMMARY_HEADER: &str = "topology,algo,median_comm_to_10pct,median_final_gap";
pub const TUNING_HEADER: &str = "topology,algo,step,mean_final_gap,selected,at_endpoint";

/// Identifies a run in the trace CSV.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunLabel {
    pub run_id: String,
    pub algo: String,
    pub topology: String,
    pub seed: u64,
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x}")
    }
}

pub fn trace_csv(label: &RunLabel, trace: &RunTrace, timing: bool) -> String {
    let mut s = String::with_capacity(64 * (trace.records.len() + 1));
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for r in &trace.records {
        let gap = r.psi0_gap.map(num).unwrap_or_default();
        let wall = if timing {
            format!("{:.3}", r.wall_ms)
        } else {
            String::new()
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            label.run_id, label.algo, label.topology, label.seed, r.k, r.grad_g_calls, r.f_calls, gap, wall
        );
    }
    s
}

/// Two whitespace-separated columns `grad_g_calls psi0_gap`, starting at the
/// initial point. Empty when the trace has no gap values.
pub fn plot_data(trace: &RunTrace) -> String {
    let mut s = String::new();
    if let Some(g0) = trace.initial_gap {
        let _ = writeln!(s, "0 {}", num(g0));
    }
    for r in &trace.records {
        if let Some(g) = r.psi0_gap {
            let _ = writeln!(s, "{} {}", r.grad_g_calls, num(g));
        }
    }
    s
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.network,
            r.algo,
            num(r.median_comm_to_10pct),
            num(r.median_final_gap)
        );
    }
    s
}

pub fn tuning_csv(result: &ExperimentResult) -> String {
    let mut s = String::from(TUNING_HEADER);
    s.push('\n');
    for t in &result.tuning {
        if let Ok(o) = &t.outcome {
            for (step, score) in &o.scores {
                let selected = *step == o.step;
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    t.network,
                    t.algo,
                    num(*step),
                    num(*score),
                    selected,
                    selected && o.at_endpoint
                );
            }
        }
    }
    s
}

/// Writes `runs/<run_id>.csv`, `plots/<run_id>.dat`, `summary.csv` and
/// `tuning.csv` under `out_dir`. Returns the files written.
pub fn write_experiment(out_dir: &Path, result: &ExperimentResult, timing: bool) -> Result<Vec<PathBuf>> {
    let runs = out_dir.join("runs");
    let plots = out_dir.join("plots");
    fs::create_dir_all(&runs)?;
    fs::create_dir_all(&plots)?;
    let mut written = Vec::new();
    for cell in &result.cells {
        let Ok(trace) = &cell.outcome else { continue };
        let label = RunLabel {
            run_id: cell.run_id(),
            algo: cell.algo.to_string(),
            topology: cell.network.to_string(),
            seed: cell.seed,
        };
        let csv = runs.join(format!("{}.csv", label.run_id));
        fs::write(&csv, trace_csv(&label, trace, timing))?;
        written.push(csv);
        let dat = plots.join(format!("{}.dat", label.run_id));
        fs::write(&dat, plot_data(trace))?;
        written.push(dat);
    }
    let summary = out_dir.join("summary.csv");
    fs::write(&summary, summary_csv(&result.summary))?;
    written.push(summary);
    let tuning = out_dir.join("tuning.csv");
    fs::write(&tuning, tuning_csv(result))?;
    written.push(tuning);
    Ok(written)
}
