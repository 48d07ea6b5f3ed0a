//! JSON and Markdown renderings of a [`BenchmarkReport`].

use std::fmt::Write as _;

use abca_core::{Cell, VerdictKind};

use crate::benchmark::BenchmarkReport;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Json,
    Markdown,
}

pub fn emit_report(report: &BenchmarkReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)?),
        ReportFormat::Markdown => Ok(markdown(report)),
    }
}

fn verdict_label(kind: Option<VerdictKind>) -> &'static str {
    match kind {
        Some(VerdictKind::AbstainType1) => "abstain (type-1)",
        Some(VerdictKind::AbstainType2) => "abstain (type-2)",
        Some(VerdictKind::Aggregate) => "answer",
        None => "answer (direct)",
    }
}

fn cell_label(c: Cell) -> &'static str {
    match c {
        Cell::TP => "TP",
        Cell::FP => "FP",
        Cell::FN => "FN",
        Cell::TN => "TN",
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").replace('|', "\\|")
}

fn markdown(report: &BenchmarkReport) -> String {
    let m = &report.metrics;
    let mut s = String::new();
    let _ = writeln!(s, "| Acc | A-Ac | U-Ac | A-F1 | U-F1 |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    let _ = writeln!(s, "| {:.3} | {:.3} | {:.3} | {:.3} | {:.3} |", m.acc, m.a_ac, m.u_ac, m.a_f1, m.u_f1);
    let _ = writeln!(s);
    let _ = writeln!(s, "| %T1 | %T2 | Type-1 | Type-2 |");
    let _ = writeln!(s, "|---|---|---|---|");
    match m.abstention_split() {
        Some((t1, t2)) => {
            let _ = writeln!(s, "| {t1:.1} | {t2:.1} | {} | {} |", m.type1_abstentions, m.type2_abstentions);
        }
        None => {
            let _ = writeln!(s, "| - | - | 0 | 0 |");
        }
    }
    let c = &m.matrix;
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "TP {} / FP {} / FN {} / TN {} over {} answerable and {} unanswerable records.",
        c.tp, c.fp, c.fn_, c.tn, c.n_answerable, c.n_unanswerable
    );
    if !m.degenerate.is_empty() {
        let _ = writeln!(s, "Zero-denominator metrics reported as 0: {}.", m.degenerate.join(", "));
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "| id | verdict | cell | response |");
    let _ = writeln!(s, "|---|---|---|---|");
    for r in &report.results {
        match (&r.bundle, r.cell) {
            (Some(b), Some(cell)) => {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} |",
                    r.id,
                    verdict_label(b.verdict.as_ref().map(|v| v.kind())),
                    cell_label(cell),
                    one_line(&b.final_text)
                );
            }
            _ => {
                let _ = writeln!(s, "| {} | aborted | - | {} |", r.id, one_line(r.error.as_deref().unwrap_or("")));
            }
        }
    }
    if !report.aborted.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(s, "Aborted: {}", report.aborted.join(", "));
    }
    s
}
