//! The four workflows. Each returns the `results` object of its document and
//! the long-form table that goes to CSV and the terminal.

use std::fs::File;
use std::io::{BufWriter, Write};

use rayon::prelude::*;
use serde_json::{json, Value};
use tfrc_core::des::{estimate, ks_exponential, replicate, run_traced, SimReport};
use tfrc_core::model::{ConnType, ModelConfig, SystemState, WithdrawalSchedule};
use tfrc_core::system_chain::{analyze, Analysis, MetricsReport, HANDOFF_FAMILIES, HEADLINE_METRICS};
use tfrc_core::user_chain::solve_user_chain;

use crate::config::RunSpec;
use crate::output::{cell, object, Table};
use crate::CliError;

/// Headline metrics followed by per-family dropping.
pub fn metric_names() -> Vec<String> {
    let mut names: Vec<String> = HEADLINE_METRICS.iter().map(|s| s.to_string()).collect();
    names.extend(HANDOFF_FAMILIES.iter().map(|f| format!("dropping_{f}")));
    names
}

fn diagnostics(d: &tfrc_core::ctmc::SteadyStateDistribution) -> Value {
    json!({
        "method": d.solver,
        "dimension": d.probabilities.len(),
        "residual_norm": d.residual_norm,
        "iterations": d.iterations,
    })
}

fn summary(cfg: &ModelConfig, sched: &WithdrawalSchedule, a: &Analysis) -> Value {
    let macro_pi = a.chain.macro_distribution(&a.distribution);
    let mut load = vec![0.0; cfg.channels as usize + 1];
    for (s, p) in a.chain.states.iter().zip(&macro_pi) {
        load[s.cell_load(cfg, sched) as usize] += p;
    }
    let user = object(a.user.states.iter().zip(&a.user.probabilities).map(|(u, p)| (u.to_string(), json!(p))));
    json!({
        "user_distribution": user,
        "load_distribution": load,
        "mean_counts": a.metrics.mean_counts,
        "handoff_rate_total": a.rates.total(),
        "empty_cell": a.chain.macro_index(&SystemState::empty(sched)).map(|i| macro_pi[i]),
    })
}

fn solve_one(spec: &RunSpec, model: &ModelConfig) -> Result<(Value, MetricsReport), CliError> {
    model.validate()?;
    let sched = spec.schedule_for(model)?;
    let a = analyze(model, &sched, &spec.analysis_options())?;
    let value = json!({
        "stairs": model.stairs,
        "metrics": a.metrics,
        "pi": summary(model, &sched, &a),
        "solver": {
            "user_chain": diagnostics(&a.user.solver),
            "cell_chain": diagnostics(&a.distribution),
            "cell_states": a.chain.states.len(),
            "nonzeros": a.chain.generator.nnz(),
        },
    });
    Ok((value, a.metrics))
}

pub fn solve(spec: &RunSpec) -> Result<(Value, Table), CliError> {
    let mut runs = Vec::new();
    let mut table = Table::new(vec!["stairs", "metric", "value"]);
    for m in spec.solve_stairs() {
        let (value, metrics) = solve_one(spec, &spec.model_with_stairs(m))?;
        for name in metric_names() {
            table.rows.push(vec![m.to_string(), name.clone(), cell(metrics.get(&name))]);
        }
        runs.push(value);
    }
    Ok((json!({ "runs": runs }), table))
}

/// Replications with the handoff arrival rates of the user chain at `model.stairs`.
pub fn simulate(spec: &RunSpec, sched: &WithdrawalSchedule) -> Result<(Value, Table), CliError> {
    let cfg = &spec.model;
    let (_, rates) = solve_user_chain(cfg, sched, &spec.solve_options())?;
    let opts = spec.sim_options();
    let stats = replicate(cfg, sched, &rates, &opts, spec.simulation.replications)?;
    if let Some(path) = &spec.output.trace {
        let file = File::create(path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))?;
        let mut w = BufWriter::new(file);
        run_traced(cfg, sched, &rates, &opts, &mut w)?;
        w.flush().map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    }
    let report = estimate(&stats, cfg.channels, spec.metrics_options())?;
    let ks: Vec<Value> = ConnType::ALL
        .iter()
        .map(|&ty| {
            let pooled: Vec<f64> = stats.iter().flat_map(|s| s.samples(ty).iter().copied()).collect();
            match ks_exponential(&pooled, cfg.end_rate(ty)) {
                Ok(r) => json!({ "type": ty, "test": r }),
                Err(e) => json!({ "type": ty, "skipped": e.to_string() }),
            }
        })
        .collect();
    let mut table = Table::new(vec!["metric", "value", "half_width"]);
    for name in metric_names() {
        let i = report.get(&name).unwrap_or_default();
        table.rows.push(vec![name, cell(i.value), cell(i.half_width)]);
    }
    let results = json!({
        "report": report,
        "handoff_rates": rates,
        "recovery_holding_ks": ks,
        "arrivals": stats.iter().map(|s| s.new_offered.iter().sum::<u64>() + s.handoff_offered.iter().sum::<u64>()).sum::<u64>(),
    });
    Ok((results, table))
}

/// Analytic values per stair count against the simulated intervals. A metric is
/// flagged when the value at the largest stair count lies outside a defined CI.
pub fn comparison_table(analytic: &[(u32, MetricsReport)], sim: &SimReport) -> (Value, Table) {
    let top = analytic.iter().max_by_key(|(m, _)| *m).map(|(_, r)| r);
    let mut table = Table::new(vec!["metric", "source", "stairs", "value", "half_width", "flag"]);
    let mut rows = Vec::new();
    for name in metric_names() {
        let interval = sim.get(&name).unwrap_or_default();
        let reference = top.and_then(|r| r.get(&name));
        let flag = match (reference, interval.half_width) {
            (Some(x), Some(_)) => !interval.contains(x),
            _ => false,
        };
        let flag_text = if flag { "outside" } else { "" };
        for (m, r) in analytic {
            table.rows.push(vec![name.clone(), "analytic".into(), m.to_string(), cell(r.get(&name)), String::new(), String::new()]);
        }
        table.rows.push(vec![
            name.clone(),
            "simulated".into(),
            String::new(),
            cell(interval.value),
            cell(interval.half_width),
            flag_text.into(),
        ]);
        let per_m = object(analytic.iter().map(|(m, r)| (m.to_string(), json!(r.get(&name)))));
        rows.push(json!({ "metric": name, "analytic": per_m, "simulated": interval, "flag": flag }));
    }
    let flagged = rows.iter().filter(|r| r["flag"] == json!(true)).count();
    (json!({ "rows": rows, "flagged": flagged }), table)
}

pub fn compare(spec: &RunSpec, sched: &WithdrawalSchedule) -> Result<(Value, Table), CliError> {
    let analytic: Vec<(u32, MetricsReport)> = spec
        .compare
        .stairs
        .iter()
        .map(|&m| solve_one(spec, &spec.model_with_stairs(m)).map(|(_, r)| (m, r)))
        .collect::<Result<_, _>>()?;
    let (sim, _) = simulate(spec, sched)?;
    let report: SimReport = serde_json::from_value(sim["report"].clone()).expect("report round-trips");
    let (mut results, table) = comparison_table(&analytic, &report);
    results["replications"] = json!(report.replications);
    Ok((results, table))
}

/// Builds the comparison from a `solve` and a `simulate` document of the same cell.
pub fn compare_documents(solved: &Value, simulated: &Value) -> Result<(Value, Table), CliError> {
    for (doc, want) in [(solved, "solve"), (simulated, "simulate")] {
        if doc["command"] != json!(want) {
            return Err(CliError::Mismatch(format!("expected a `{want}` document, got {}", doc["command"])));
        }
        if !crate::output::verify(doc) {
            return Err(CliError::Mismatch(format!("`{want}` document fails its content hash")));
        }
    }
    if solved["cell_hash"] != simulated["cell_hash"] {
        return Err(CliError::Mismatch(format!(
            "config hash mismatch: solve {} vs simulate {}",
            solved["cell_hash"], simulated["cell_hash"]
        )));
    }
    let bad = |what: &str| CliError::Output(format!("malformed {what} in result document"));
    let runs = solved["results"]["runs"].as_array().ok_or_else(|| bad("solve runs"))?;
    let analytic = runs
        .iter()
        .map(|r| {
            let m = r["stairs"].as_u64().and_then(|m| u32::try_from(m).ok()).ok_or_else(|| bad("stair count"))?;
            let metrics = serde_json::from_value(r["metrics"].clone()).map_err(|_| bad("metrics"))?;
            Ok((m, metrics))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let report: SimReport =
        serde_json::from_value(simulated["results"]["report"].clone()).map_err(|_| bad("simulation report"))?;
    let (mut results, table) = comparison_table(&analytic, &report);
    results["replications"] = json!(report.replications);
    results["sources"] = json!({ "solve": solved["content_hash"], "simulate": simulated["content_hash"] });
    Ok((results, table))
}

/// One analytic solve per axis value and stair count. Failures are recorded in
/// their row; rows keep axis order.
pub fn sweep(spec: &RunSpec) -> (Value, Table) {
    let field = spec.sweep.field.as_str();
    let jobs: Vec<(usize, f64, u32)> = spec
        .sweep
        .values
        .iter()
        .enumerate()
        .flat_map(|(i, &v)| {
            let stairs = if field == "stairs" { vec![v as u32] } else { spec.solve_stairs() };
            stairs.into_iter().map(move |m| (i, v, m))
        })
        .collect();
    let rows: Vec<(usize, f64, u32, Result<MetricsReport, String>)> = jobs
        .into_par_iter()
        .map(|(i, v, m)| {
            let mut model = spec.model_with_stairs(m);
            let outcome = model
                .set_field(field, v)
                .map_err(CliError::from)
                .and_then(|()| solve_one(spec, &model))
                .map(|(_, r)| r)
                .map_err(|e| e.to_string());
            (i, v, model.stairs, outcome)
        })
        .collect();
    let mut table = Table::new(vec!["index", "field", "value", "stairs", "metric", "result", "error"]);
    let mut out = Vec::new();
    for (i, v, m, outcome) in rows {
        match &outcome {
            Ok(r) => {
                for name in metric_names() {
                    table.rows.push(vec![i.to_string(), field.into(), cell(Some(v)), m.to_string(), name.clone(), cell(r.get(&name)), String::new()]);
                }
                out.push(json!({ "index": i, "value": v, "stairs": m, "metrics": r }));
            }
            Err(e) => {
                table.rows.push(vec![i.to_string(), field.into(), cell(Some(v)), m.to_string(), String::new(), String::new(), e.clone()]);
                out.push(json!({ "index": i, "value": v, "stairs": m, "error": e }));
            }
        }
    }
    (json!({ "field": field, "rows": out }), table)
}

