use std::fmt::Write;
use std::path::Path;

use fedbench_core::eval::{multi_run_stats, RunStatistics};
use fedbench_core::fl::RunResult;

use crate::error::{io_err, CliResult};

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).expect("json values serialize");
    s.push('\n');
    write_file(path, &s)
}

/// Per-round losses of one replicate.
pub fn history_csv(run: &RunResult) -> String {
    let n = run.history.first().map_or(0, |r| r.clients.len());
    let mut s = String::from("round");
    for i in 0..n {
        let _ = write!(s, ",client_{i}_train_loss,client_{i}_val_loss");
    }
    s.push_str(",aggregated_val_loss\n");
    for r in &run.history {
        let _ = write!(s, "{}", r.round);
        for c in &r.clients {
            let _ = write!(s, ",{},{}", c.train_loss, c.val_loss);
        }
        let _ = writeln!(s, ",{}", r.aggregated_val_loss);
    }
    s
}

pub fn stats(values: &[f64]) -> Option<RunStatistics> {
    multi_run_stats(values).ok()
}

pub fn cell(s: Option<RunStatistics>) -> String {
    match s {
        Some(s) => format!("{:.4} ({:.4})", s.mean, s.ci_radius),
        None => "--".into(),
    }
}

pub fn markdown_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut s = format!("| {} |\n|", header.join(" | "));
    s.push_str(&"---|".repeat(header.len()));
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "| {} |", r.join(" | "));
    }
    s
}

pub fn csv_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}
