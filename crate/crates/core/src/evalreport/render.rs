//! Aligned-text and CSV rendering. Percentages use two decimals.

use std::fmt::Write;

use super::{EvalReport, ModeComparison, SliceStats};
use crate::data::QuestionType;
use crate::types::Difficulty;

fn slices(report: &EvalReport) -> Vec<(String, &SliceStats)> {
    let mut v = vec![("overall".to_string(), &report.overall)];
    for d in Difficulty::ALL {
        if let Some(s) = report.by_difficulty.get(&d) {
            v.push((d.as_str().to_string(), s));
        }
    }
    for q in QuestionType::ALL {
        if let Some(s) = report.by_question_type.get(&q) {
            v.push((format!("qtype:{}", q.as_str()), s));
        }
    }
    v
}

pub fn render_report(report: &EvalReport, title: &str) -> String {
    let rows = slices(report);
    let w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(5).max(5);
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "{:<w$}  {:>6}  {:>8}  {:>8}  {:>8}  {:>4}", "slice", "n", "accuracy", "min", "max", "runs");
    for (k, s) in rows {
        let _ = writeln!(
            out,
            "{k:<w$}  {:>6}  {:>8.2}  {:>8.2}  {:>8.2}  {:>4}",
            s.total, s.accuracy, s.min, s.max, s.runs
        );
    }
    out
}

pub fn report_csv(report: &EvalReport) -> String {
    let mut out = String::from("slice,n,accuracy,min,max,runs\n");
    for (k, s) in slices(report) {
        let _ = writeln!(out, "{k},{},{:.2},{:.2},{:.2},{}", s.total, s.accuracy, s.min, s.max, s.runs);
    }
    out
}

fn comparison_columns(c: &ModeComparison) -> (Vec<Difficulty>, Vec<QuestionType>) {
    let d = Difficulty::ALL
        .into_iter()
        .filter(|d| c.rows.iter().any(|r| r.by_difficulty.contains_key(d)))
        .collect();
    let q = QuestionType::ALL
        .into_iter()
        .filter(|q| c.rows.iter().any(|r| r.by_question_type.contains_key(q)))
        .collect();
    (d, q)
}

fn signed(v: Option<&f64>) -> String {
    v.map(|x| format!("{x:+.2}")).unwrap_or_else(|| "-".into())
}

pub fn render_comparison(c: &ModeComparison) -> String {
    let (ds, qs) = comparison_columns(c);
    let mut header = vec!["mode".to_string(), "overall".into(), "delta".into()];
    header.extend(ds.iter().map(|d| d.as_str().to_string()));
    header.extend(qs.iter().map(|q| q.as_str().to_string()));
    header.extend(["fixed".to_string(), "broken".into()]);
    let mut rows = vec![{
        let mut r = vec![c.baseline.clone(), format!("{:.2}", c.baseline_overall), "+0.00".into()];
        r.extend(std::iter::repeat_n("+0.00".to_string(), ds.len() + qs.len()));
        r.extend(["0".to_string(), "0".into()]);
        r
    }];
    for m in &c.rows {
        let mut r = vec![m.mode.clone(), format!("{:.2}", m.overall), format!("{:+.2}", m.overall_delta)];
        r.extend(ds.iter().map(|d| signed(m.by_difficulty.get(d))));
        r.extend(qs.iter().map(|q| signed(m.by_question_type.get(q))));
        r.extend([m.fixed.len().to_string(), m.broken.len().to_string()]);
        rows.push(r);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|i| rows.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
        .collect();
    let mut out = format!("deltas vs {}\n", c.baseline);
    for line in std::iter::once(&header).chain(rows.iter()) {
        let cells: Vec<String> = line
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (cell, w))| if i == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

pub fn comparison_csv(c: &ModeComparison) -> String {
    let (ds, qs) = comparison_columns(c);
    let mut out = String::from("mode,overall,delta");
    for d in &ds {
        let _ = write!(out, ",{}", d.as_str());
    }
    for q in &qs {
        let _ = write!(out, ",{}", q.as_str());
    }
    out.push_str(",fixed,broken\n");
    for m in &c.rows {
        let _ = write!(out, "{},{:.2},{:.2}", m.mode, m.overall, m.overall_delta);
        for d in &ds {
            let _ = write!(out, ",{}", m.by_difficulty.get(d).map(|x| format!("{x:.2}")).unwrap_or_default());
        }
        for q in &qs {
            let _ = write!(out, ",{}", m.by_question_type.get(q).map(|x| format!("{x:.2}")).unwrap_or_default());
        }
        let _ = writeln!(out, ",{},{}", m.fixed.len(), m.broken.len());
    }
    out
}
