use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fedbench_core::eval::{
    best_over_modes, rank_methods, run_baselines, CheckpointMode, MetricKind, MetricReport, TieRule,
};
use fedbench_core::fl::{run_replicates, ExperimentConfig, RunResult};
use fedbench_core::par::Execution;
use fedbench_core::strategy::{fedadam_drift_demo, StrategyConfig};
use serde_json::{json, Value};

use crate::config::ConfigFile;
use crate::error::{io_err, CliResult, Failure};
use crate::report::{cell, csv_table, history_csv, markdown_table, stats, write_file, write_json};

pub const DEFAULT_OUT: &str = "fedbench-out";

pub struct Context {
    pub config: ConfigFile,
    pub base: PathBuf,
    pub out: PathBuf,
    pub exec: Execution,
}

impl Context {
    pub fn load(config: &Path, out: Option<PathBuf>, seeds: Option<Vec<u64>>, exec: Execution) -> CliResult<Self> {
        let (mut cfg, base) = ConfigFile::load(config)?;
        if let Some(s) = seeds {
            cfg.experiment.seeds = s;
            cfg.validate()?;
        }
        let root = out
            .or_else(|| cfg.out.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        Ok(Self {
            out: root.join(&cfg.name),
            config: cfg,
            base,
            exec,
        })
    }
}

/// Splits replicate outcomes into finished runs, re-raising non-divergence errors.
fn finished(results: Vec<fedbench_core::Result<RunResult>>) -> CliResult<Vec<RunResult>> {
    results.into_iter().map(|r| r.map_err(Failure::from)).collect()
}

fn metric_block(runs: &[RunResult], mode: CheckpointMode, kind: MetricKind) -> Option<Value> {
    let reps: Vec<(u64, &MetricReport)> = runs
        .iter()
        .filter_map(|r| Some((r.seed, r.metrics.get(&mode)?.iter().find(|m| m.kind == kind)?)))
        .collect();
    if reps.is_empty() {
        return None;
    }
    let means: Vec<f64> = reps.iter().filter_map(|(_, m)| m.mean).collect();
    let s = stats(&means);
    Some(json!({
        "replicates": reps.iter().map(|(seed, m)| json!({
            "seed": seed,
            "per_client": m.per_client,
            "client_mean": m.mean,
        })).collect::<Vec<_>>(),
        "mean": s.map(|s| s.mean),
        "ci_radius": s.map(|s| s.ci_radius),
    }))
}

fn mode_stats(
    runs: &[RunResult],
    mode: CheckpointMode,
    kind: MetricKind,
) -> Option<fedbench_core::eval::RunStatistics> {
    let v: Vec<f64> = runs.iter().filter_map(|r| r.mean_metric(mode, kind)).collect();
    stats(&v)
}

fn diverged_note(runs: &[RunResult]) -> CliResult<()> {
    let bad: Vec<String> = runs
        .iter()
        .filter(|r| r.diverged)
        .map(|r| {
            format!(
                "seed {}: {}",
                r.seed,
                r.diagnostic.as_deref().unwrap_or("non-finite loss")
            )
        })
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::Diverged(bad.join("; ")))
    }
}

pub fn cmd_run(ctx: &Context) -> CliResult<()> {
    let cfg = &ctx.config;
    let data = cfg.dataset(&ctx.base)?;
    let runs = finished(run_replicates(&cfg.experiment, &data, ctx.exec))?;
    let modes = cfg.experiment.modes();

    for r in &runs {
        write_file(&ctx.out.join(format!("run_seed{}.csv", r.seed)), &history_csv(r))?;
    }
    let mut by_mode = serde_json::Map::new();
    for &mode in &modes {
        let mut by_metric = serde_json::Map::new();
        for &kind in &cfg.experiment.metrics {
            if let Some(b) = metric_block(&runs, mode, kind) {
                by_metric.insert(kind.name().into(), b);
            }
        }
        by_mode.insert(mode.name().into(), Value::Object(by_metric));
    }
    let report = json!({
        "name": cfg.name,
        "task": cfg.task(),
        "method": cfg.experiment.strategy.kind.name(),
        "seeds": cfg.experiment.seeds,
        "modes": by_mode,
        "diverged": runs.iter().filter(|r| r.diverged).map(|r| r.seed).collect::<Vec<_>>(),
        "ci": "normal approximation, 1.96 * sample sd / sqrt(n)",
    });
    write_json(&ctx.out.join("metrics.json"), &report)?;

    let header: Vec<String> = std::iter::once("Checkpoint".to_string())
        .chain(cfg.experiment.metrics.iter().map(|k| k.name().to_string()))
        .collect();
    let rows: Vec<Vec<String>> = modes
        .iter()
        .map(|&m| {
            std::iter::once(m.name().to_string())
                .chain(cfg.experiment.metrics.iter().map(|&k| cell(mode_stats(&runs, m, k))))
                .collect()
        })
        .collect();
    let summary = format!(
        "# {} ({} on {})\n\nMean over clients, then over {} replicates; 95% CI radius in parentheses.\n\n{}",
        cfg.name,
        cfg.experiment.strategy.kind,
        cfg.task(),
        runs.len(),
        markdown_table(&header, &rows)
    );
    write_file(&ctx.out.join("summary.md"), &summary)?;
    print!("{summary}");
    diverged_note(&runs)
}

fn sweep_grid(path: &Path) -> CliResult<BTreeMap<String, Vec<Value>>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let grid: BTreeMap<String, Vec<Value>> = serde_json::from_str(&text)
        .map_err(|e| Failure::Config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())))?;
    if grid.is_empty() || grid.values().any(Vec::is_empty) {
        return Err(Failure::Config(format!(
            "{}: every swept parameter needs at least one value",
            path.display()
        )));
    }
    Ok(grid)
}

/// Cartesian product in key order, last key varying fastest.
fn grid_points(grid: &BTreeMap<String, Vec<Value>>) -> Vec<Vec<(String, Value)>> {
    let mut points = vec![Vec::new()];
    for (k, values) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((k.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    points
}

fn apply_point(base: &StrategyConfig, point: &[(String, Value)]) -> CliResult<StrategyConfig> {
    let mut v = serde_json::to_value(base).expect("strategy serializes");
    for (k, x) in point {
        v[k.as_str()] = x.clone();
    }
    let s: StrategyConfig = serde_json::from_value(v).map_err(|e| Failure::Config(format!("sweep point: {e}")))?;
    s.validate()?;
    Ok(s)
}

pub fn cmd_sweep(ctx: &Context, sweep: &Path) -> CliResult<()> {
    let cfg = &ctx.config;
    let grid = sweep_grid(sweep)?;
    // Selection sees validation data only.
    let data = cfg.dataset(&ctx.base)?.without_test();
    let points = grid_points(&grid);
    let mut scored = Vec::with_capacity(points.len());
    for point in &points {
        let mut exp: ExperimentConfig = cfg.experiment.clone();
        exp.strategy = apply_point(&cfg.experiment.strategy, point)?;
        exp.metrics.clear();
        exp.checkpoint_modes = vec![CheckpointMode::Latest];
        let runs = finished(run_replicates(&exp, &data, ctx.exec))?;
        let diverged = runs.iter().any(|r| r.diverged);
        let score = runs.iter().map(RunResult::min_aggregated_val_loss).sum::<f64>() / runs.len() as f64;
        scored.push((point.clone(), score, diverged));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].1.total_cmp(&scored[b].1).then(a.cmp(&b)));

    let keys: Vec<String> = grid.keys().cloned().collect();
    let header: Vec<String> = ["rank".to_string()]
        .into_iter()
        .chain(keys.iter().cloned())
        .chain(["score".to_string(), "diverged".to_string()])
        .collect();
    let rows: Vec<Vec<String>> = order
        .iter()
        .enumerate()
        .map(|(r, &i)| {
            let (p, score, div) = &scored[i];
            std::iter::once((r + 1).to_string())
                .chain(p.iter().map(|(_, v)| v.to_string()))
                .chain([score.to_string(), div.to_string()])
                .collect()
        })
        .collect();
    write_file(&ctx.out.join("sweep.csv"), &csv_table(&header, &rows))?;
    let best = &scored[order[0]];
    let best_params: serde_json::Map<String, Value> = best.0.iter().cloned().collect();
    write_json(
        &ctx.out.join("sweep.json"),
        &json!({
            "score": "mean over replicates of the minimum aggregated validation loss",
            "best": best_params,
            "best_score": if best.1.is_finite() { json!(best.1) } else { Value::Null },
            "grid": order.iter().map(|&i| json!({
                "params": scored[i].0.iter().cloned().collect::<serde_json::Map<_, _>>(),
                "score": if scored[i].1.is_finite() { json!(scored[i].1) } else { Value::Null },
                "diverged": scored[i].2,
            })).collect::<Vec<_>>(),
        }),
    )?;
    print!("{}", markdown_table(&header, &rows));
    if !best.1.is_finite() {
        return Err(Failure::Diverged("every grid point diverged".into()));
    }
    Ok(())
}

pub fn cmd_baselines(ctx: &Context) -> CliResult<()> {
    let cfg = &ctx.config;
    let train = cfg
        .baseline
        .as_ref()
        .ok_or_else(|| Failure::Config("the baselines command needs a `baseline` block".into()))?;
    let data = cfg.dataset(&ctx.base)?;
    let kinds = &cfg.experiment.metrics;
    let seeds = &cfg.experiment.seeds;
    let results = ctx
        .exec
        .map(seeds, |_, &s| run_baselines(&data, train, kinds, s, ctx.exec))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let mut labels = vec!["Silo".to_string(), "Central".to_string()];
    labels.extend((0..data.n_clients()).map(|k| format!("Client {k}")));
    let row_reports = |row: usize, res: &fedbench_core::eval::BaselineResults| -> Vec<MetricReport> {
        match row {
            0 => res.siloed.clone(),
            1 => res.central.clone(),
            k => res.cross_client[k - 2].clone(),
        }
    };
    let header: Vec<String> = std::iter::once("Baseline".to_string())
        .chain(kinds.iter().map(|k| k.name().to_string()))
        .collect();
    let mut rows = Vec::new();
    let mut csv_rows = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        let mut row = vec![label.clone()];
        let mut csv_row = vec![label.clone()];
        for j in 0..kinds.len() {
            let v: Vec<f64> = results.iter().filter_map(|r| row_reports(i, r)[j].mean).collect();
            let s = stats(&v);
            row.push(cell(s));
            csv_row.push(s.map_or(String::new(), |s| format!("{},{}", s.mean, s.ci_radius)));
        }
        rows.push(row);
        csv_rows.push(csv_row);
    }
    let csv_header: Vec<String> = std::iter::once("baseline".to_string())
        .chain(
            kinds
                .iter()
                .flat_map(|k| [format!("{k}_mean"), format!("{k}_ci_radius")]),
        )
        .collect();
    write_file(&ctx.out.join("baselines.csv"), &csv_table(&csv_header, &csv_rows))?;
    let md = format!(
        "# Baselines for {}\n\nMean over clients, then over {} seeds; 95% CI radius in parentheses. Client k rows: model trained on client k, tested on every client.\n\n{}",
        cfg.name,
        seeds.len(),
        markdown_table(&header, &rows)
    );
    write_file(&ctx.out.join("baselines.md"), &md)?;
    print!("{md}");
    Ok(())
}

pub fn cmd_ablate_checkpoints(ctx: &Context) -> CliResult<()> {
    let cfg = &ctx.config;
    let data = cfg.dataset(&ctx.base)?;
    let mut exp = cfg.experiment.clone();
    exp.checkpoint_modes.clear();
    let runs = finished(run_replicates(&exp, &data, ctx.exec))?;
    let header: Vec<String> = std::iter::once("Metric".to_string())
        .chain(CheckpointMode::ALL.iter().map(|m| m.name().to_string()))
        .collect();
    let rows: Vec<Vec<String>> = exp
        .metrics
        .iter()
        .map(|&k| {
            std::iter::once(k.name().to_string())
                .chain(CheckpointMode::ALL.iter().map(|&m| cell(mode_stats(&runs, m, k))))
                .collect()
        })
        .collect();
    let csv_rows: Vec<Vec<String>> = exp
        .metrics
        .iter()
        .map(|&k| {
            std::iter::once(k.name().to_string())
                .chain(CheckpointMode::ALL.iter().flat_map(|&m| match mode_stats(&runs, m, k) {
                    Some(s) => [s.mean.to_string(), s.ci_radius.to_string()],
                    None => [String::new(), String::new()],
                }))
                .collect()
        })
        .collect();
    let csv_header: Vec<String> = std::iter::once("metric".to_string())
        .chain(
            CheckpointMode::ALL
                .iter()
                .flat_map(|m| [format!("{m}_mean"), format!("{m}_ci_radius")]),
        )
        .collect();
    write_file(&ctx.out.join("ablation.csv"), &csv_table(&csv_header, &csv_rows))?;
    let md = format!(
        "# Checkpoint ablation: {} ({})\n\nOne training pass per seed records every checkpoint family; {} seeds, 95% CI radius in parentheses.\n\n{}",
        cfg.name,
        exp.strategy.kind,
        runs.len(),
        markdown_table(&header, &rows)
    );
    write_file(&ctx.out.join("ablation.md"), &md)?;
    print!("{md}");
    diverged_note(&runs)
}

/// `(method, task/metric) -> best-mode replicate mean` from one metrics report.
fn read_report(path: &Path) -> CliResult<(String, BTreeMap<String, f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let bad = |what: &str| Failure::Config(format!("{}: report is missing {what}", path.display()));
    let method = v["method"].as_str().ok_or_else(|| bad("`method`"))?.to_string();
    let task = v["task"].as_str().ok_or_else(|| bad("`task`"))?;
    let modes = v["modes"].as_object().ok_or_else(|| bad("`modes`"))?;
    let mut per_metric: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for metrics in modes.values() {
        for (k, block) in metrics.as_object().ok_or_else(|| bad("metric blocks"))? {
            let mean = block["mean"].as_f64().unwrap_or(f64::NAN);
            per_metric.entry(format!("{task}/{k}")).or_default().push(vec![mean]);
        }
    }
    let mut out = BTreeMap::new();
    for (col, vals) in per_metric {
        let finite: Vec<Vec<f64>> = vals.into_iter().filter(|v| v[0].is_finite()).collect();
        out.insert(
            col,
            if finite.is_empty() {
                f64::NAN
            } else {
                best_over_modes(&finite)?[0]
            },
        );
    }
    Ok((method, out))
}

pub fn cmd_rank(reports: &[PathBuf], out: &Path, tie: TieRule) -> CliResult<()> {
    let mut table: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for p in reports {
        let (method, cols) = read_report(p)?;
        let entry = table.entry(method.clone()).or_default();
        for (c, v) in cols {
            if entry.insert(c.clone(), v).is_some() {
                return Err(Failure::Config(format!("{method} has two reports for {c}")));
            }
        }
    }
    if table.len() < 2 {
        return Err(Failure::Config("ranking needs reports for at least two methods".into()));
    }
    let columns: Vec<String> = table.values().next().unwrap().keys().cloned().collect();
    for (m, cols) in &table {
        if !cols.keys().eq(columns.iter()) {
            return Err(Failure::Config(format!(
                "{m} was evaluated on a different task/metric set"
            )));
        }
    }
    let methods: Vec<String> = table.keys().cloned().collect();
    let values: Vec<Vec<f64>> = table.values().map(|c| c.values().copied().collect()).collect();
    let ranked = rank_methods(&methods, &columns, &values, tie)?;
    write_file(&out.join("rank.csv"), &ranked.to_csv())?;
    let md = ranked.to_markdown();
    write_file(&out.join("rank.md"), &md)?;
    print!("{md}");
    Ok(())
}

pub fn cmd_demo_drift() {
    println!("step,x");
    for (i, x) in fedadam_drift_demo().iter().enumerate() {
        println!("{},{x}", i + 1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_order() {
        let mut g = BTreeMap::new();
        g.insert("a".to_string(), vec![json!(1), json!(2)]);
        g.insert("b".to_string(), vec![json!(3), json!(4)]);
        let p = grid_points(&g);
        let flat: Vec<(i64, i64)> = p
            .iter()
            .map(|q| (q[0].1.as_i64().unwrap(), q[1].1.as_i64().unwrap()))
            .collect();
        assert_eq!(flat, vec![(1, 3), (1, 4), (2, 3), (2, 4)]);
    }

    #[test]
    fn sweep_point_rejects_foreign_field() {
        let base = StrategyConfig::new(fedbench_core::strategy::StrategyKind::FedAvg, 0.1);
        assert!(apply_point(&base, &[("mu_prox".into(), json!(0.1))]).is_err());
        assert!(apply_point(&base, &[("nonsense".into(), json!(0.1))]).is_err());
        assert_eq!(
            apply_point(&base, &[("client_lr".into(), json!(0.5))])
                .unwrap()
                .client_lr,
            0.5
        );
    }
}
