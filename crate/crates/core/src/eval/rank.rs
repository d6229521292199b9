//! Method ranking across task/metric columns.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// Tied methods share the best position (1, 2, 2, 4).
    #[default]
    Competition,
    /// Tied methods share the mean of their positions (1, 2.5, 2.5, 4).
    Average,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub methods: Vec<String>,
    pub columns: Vec<String>,
    /// `ranks[method][column]`, 1 = best.
    pub ranks: Vec<Vec<f64>>,
    pub avg_rank: Vec<f64>,
}

/// Elementwise maximum over a method's checkpoint modes, so each method is
/// ranked by its best mode per column.
pub fn best_over_modes(per_mode: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = per_mode
        .first()
        .ok_or_else(|| Error::Config("no checkpoint modes to choose from".into()))?;
    let mut best = first.clone();
    for row in &per_mode[1..] {
        if row.len() != best.len() {
            return Err(Error::dim("checkpoint mode columns", best.len(), row.len()));
        }
        for (b, v) in best.iter_mut().zip(row) {
            *b = b.max(*v);
        }
    }
    Ok(best)
}

/// Ranks `values[method][column]`, higher being better in every column.
pub fn rank_methods(methods: &[String], columns: &[String], values: &[Vec<f64>], tie: TieRule) -> Result<RankTable> {
    if methods.len() != values.len() {
        return Err(Error::dim("rank rows", methods.len(), values.len()));
    }
    if methods.is_empty() || columns.is_empty() {
        return Err(Error::Config("ranking needs at least one method and one column".into()));
    }
    for (m, row) in methods.iter().zip(values) {
        if row.len() != columns.len() {
            return Err(Error::Config(format!(
                "method {m} has {} values for {} columns",
                row.len(),
                columns.len()
            )));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "method {m} is missing a value for {}",
                columns[j]
            )));
        }
    }
    let n = methods.len();
    let mut ranks = vec![vec![0.0; columns.len()]; n];
    for j in 0..columns.len() {
        for i in 0..n {
            let v = values[i][j];
            let better = values.iter().filter(|r| r[j] > v).count();
            let equal = values.iter().filter(|r| r[j] == v).count();
            ranks[i][j] = match tie {
                TieRule::Competition => (better + 1) as f64,
                TieRule::Average => better as f64 + (equal as f64 + 1.0) / 2.0,
            };
        }
    }
    let avg_rank = ranks.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
    Ok(RankTable {
        methods: methods.to_vec(),
        columns: columns.to_vec(),
        ranks,
        avg_rank,
    })
}

fn fmt_rank(r: f64) -> String {
    if r.fract() == 0.0 {
        format!("{r:.0}")
    } else {
        format!("{r:.1}")
    }
}

impl RankTable {
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| Method |");
        for c in &self.columns {
            let _ = write!(s, " {c} |");
        }
        s.push_str(" Avg. Rank |\n|---|");
        s.push_str(&"---|".repeat(self.columns.len() + 1));
        s.push('\n');
        for (i, m) in self.methods.iter().enumerate() {
            let _ = write!(s, "| {m} |");
            for r in &self.ranks[i] {
                let _ = write!(s, " {} |", fmt_rank(*r));
            }
            let _ = writeln!(s, " {:.2} |", self.avg_rank[i]);
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method");
        for c in &self.columns {
            let _ = write!(s, ",{c}");
        }
        s.push_str(",avg_rank\n");
        for (i, m) in self.methods.iter().enumerate() {
            s.push_str(m);
            for r in &self.ranks[i] {
                let _ = write!(s, ",{}", fmt_rank(*r));
            }
            let _ = writeln!(s, ",{:.4}", self.avg_rank[i]);
        }
        s
    }
}
