use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::abstraction::Abstraction;
use crate::error::{Error, Result};

use super::{CertifiedResult, PipelineRun, Trace};

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One line per region: id, original and transformed bounds, label,
/// `p_lower`, `p_upper`, action and class.
pub fn regions_csv(result: &CertifiedResult) -> String {
    let n = result.regions.first().map_or(0, |r| r.lo.len());
    let mut out = String::from("id");
    for l in 0..n {
        let _ = write!(out, ",orig_lo_{l},orig_hi_{l}");
    }
    for l in 0..n {
        let _ = write!(out, ",lo_{l},hi_{l}");
    }
    out.push_str(",label,p_lower,p_upper,action,class\n");
    for r in &result.regions {
        let _ = write!(out, "{}", r.id);
        for l in 0..n {
            let _ = write!(out, ",{},{}", r.lo_original[l], r.hi_original[l]);
        }
        for l in 0..n {
            let _ = write!(out, ",{},{}", r.lo[l], r.hi[l]);
        }
        let label: Vec<&str> = r.label.iter().map(String::as_str).collect();
        let _ = writeln!(
            out,
            ",{},{},{},{},{}",
            label.join("|"),
            r.p_lower,
            r.p_upper,
            r.action,
            r.class.as_str()
        );
    }
    out
}

pub fn summary_json(run: &PipelineRun) -> serde_json::Value {
    let (yes, no, unknown) = run.result.counts();
    serde_json::json!({
        "states": {
            "cells": run.abstraction.grid().num_cells(),
            "imdp": run.synthesis.base.num_states(),
            "product": run.synthesis.product.imdp.num_states(),
        },
        "actions": run.abstraction.action_names(),
        "classes": {"yes": yes, "no": no, "unknown": unknown},
        "threshold": run.result.threshold,
        "timing_s": run.times,
        "refinement_rounds": run.log.len(),
        "initial_mean_width": run.initial_mean_width,
        "mean_width": run.result.mean_width(),
        "max_width": run.result.max_width(),
        "value_iteration": {"sweeps": run.synthesis.sweeps, "converged": run.synthesis.converged},
        "validation": run.validation.as_ref().map(|v| serde_json::json!({
            "regions": v.regions.len(),
            "flagged": v.flagged,
        })),
    })
}

/// Writes `regions.csv`, `strategy.json`, `refinement.jsonl`,
/// `summary.json` and, when present, `validation.json`.
pub fn emit_outputs(run: &PipelineRun, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("regions.csv"), &regions_csv(&run.result))?;
    write(&dir.join("strategy.json"), &run.switching.to_json_string())?;
    let mut log = String::new();
    for round in &run.log {
        log.push_str(&serde_json::to_string(round).expect("log serialises"));
        log.push('\n');
    }
    write(&dir.join("refinement.jsonl"), &log)?;
    let summary = serde_json::to_string_pretty(&summary_json(run)).expect("summary serialises");
    write(&dir.join("summary.json"), &summary)?;
    if let Some(v) = &run.validation {
        let text = serde_json::to_string_pretty(v).expect("report serialises");
        write(&dir.join("validation.json"), &text)?;
    }
    Ok(())
}

/// Debug dump of every transition row, one JSON object per line.
pub fn write_rows_jsonl(abstraction: &Abstraction, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for row in abstraction.rows() {
        out.push_str(&row.to_json(abstraction.action_names()).to_string());
        out.push('\n');
    }
    write(path.as_ref(), &out)
}

/// `step,x_0..x_{n-1},action` for a simulated trace; the last state has no action.
pub fn write_trace_csv(trace: &Trace, action_names: &[String], path: impl AsRef<Path>) -> Result<()> {
    let n = trace.states.first().map_or(0, Vec::len);
    let mut out = String::from("step");
    for l in 0..n {
        let _ = write!(out, ",x_{l}");
    }
    out.push_str(",action\n");
    for (k, x) in trace.states.iter().enumerate() {
        let _ = write!(out, "{k}");
        for v in x {
            let _ = write!(out, ",{v}");
        }
        let action = trace.actions.get(k).map_or("", |&a| action_names[a].as_str());
        let _ = writeln!(out, ",{action}");
    }
    write(path.as_ref(), &out)
}
