//! JSON reports and CSV feeds for plotting.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::case::{MarkCase, ShiftCase, SizeDistribution, TracePoint};
use crate::error::{EhdError, Result};

/// Pretty JSON with a trailing newline. Field order is fixed by the types, so
/// equal values give equal bytes.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| EhdError::io(path.display().to_string(), e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value)?)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// `step,left_fraction`
pub fn left_fraction_csv(trace: &[(usize, f64)]) -> String {
    let mut s = String::from("step,left_fraction\n");
    for (step, f) in trace {
        let _ = writeln!(s, "{step},{f}");
    }
    s
}

/// One row per mark; empty cells where a mark never occurs.
pub fn marks_csv(case: &MarkCase) -> String {
    let mut s = String::from("mark,name,events,chd_fraction,rd_fraction,z,p_greater,p_bonferroni\n");
    for r in &case.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.mark,
            r.name.as_deref().unwrap_or(""),
            r.events,
            opt(r.chd_fraction),
            opt(r.rd_fraction),
            opt(r.z),
            opt(r.p_greater),
            opt(r.p_bonferroni)
        );
    }
    s
}

/// `length,count,pdf,cdf`
pub fn lengths_csv(d: &SizeDistribution) -> String {
    let mut s = String::from("length,count,pdf,cdf\n");
    for (i, c) in d.counts.iter().enumerate() {
        let _ = writeln!(s, "{i},{c},{},{}", d.pdf[i], d.cdf[i]);
    }
    s
}

/// `size,additions,ejections`
pub fn shifts_csv(case: &ShiftCase) -> String {
    let mut s = String::from("size,additions,ejections\n");
    let max = case.additions.counts.len().max(case.ejections.counts.len());
    for i in 0..max {
        let a = case.additions.counts.get(i).copied().unwrap_or(0);
        let e = case.ejections.counts.get(i).copied().unwrap_or(0);
        let _ = writeln!(s, "{i},{a},{e}");
    }
    s
}

/// `seq_id,segment,offset,card`
pub fn traces_csv(traces: &[TracePoint]) -> String {
    let mut s = String::from("seq_id,segment,offset,card\n");
    for t in traces {
        let _ = writeln!(s, "{},{},{},{}", t.seq_id, t.segment, t.offset, t.card);
    }
    s
}
