use std::fmt::Write as _;
use std::str::FromStr;

use super::{Averages, MetricsError, MetricsReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    /// Fixed-width table with values rounded to two decimals.
    PlainTable,
    /// Metrics CSV, a blank line, then the confusion-matrix CSV.
    CsvPack,
    /// Pretty-printed JSON of the whole report.
    JsonDoc,
}

impl FromStr for ReportFormat {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain-table" => Ok(Self::PlainTable),
            "csv-pack" => Ok(Self::CsvPack),
            "json-doc" => Ok(Self::JsonDoc),
            other => Err(MetricsError::Format(other.to_string())),
        }
    }
}

pub fn render_report(report: &MetricsReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::PlainTable => plain_table(report).into_bytes(),
        ReportFormat::CsvPack => format!("{}\n{}", metrics_csv(report), report.confusion.to_csv()).into_bytes(),
        ReportFormat::JsonDoc => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s.into_bytes()
        }
    }
}

/// Two decimals without a negative zero.
fn r2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

const LABEL_W: usize = 12;

fn plain_table(r: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<LABEL_W$} {:>5} {:>9} {:>6} {:>8} {:>7}",
        "", "MCC", "Precision", "Recall", "F1-Score", "Support"
    );
    for m in &r.classes {
        let _ = writeln!(
            s,
            "{:<LABEL_W$} {:>5} {:>9} {:>6} {:>8} {:>7}",
            format!("Class {}", m.class),
            r2(m.mcc),
            r2(m.precision),
            r2(m.recall),
            r2(m.f1),
            m.support
        );
    }
    let _ = writeln!(
        s,
        "{:<LABEL_W$} {:>5} {:>9} {:>6} {:>8} {:>7}",
        "Accuracy",
        "",
        "",
        "",
        r2(r.accuracy),
        r.total
    );
    for (name, avg) in [("Macro Avg", &r.macro_avg), ("Weighted Avg", &r.weighted_avg)] {
        let _ = writeln!(
            s,
            "{:<LABEL_W$} {:>5} {:>9} {:>6} {:>8} {:>7}",
            name,
            "",
            r2(avg.precision),
            r2(avg.recall),
            r2(avg.f1),
            r.total
        );
    }
    s
}

fn metrics_csv(r: &MetricsReport) -> String {
    let mut s = String::from("row,mcc,precision,recall,f1,support\n");
    for m in &r.classes {
        let _ = writeln!(
            s,
            "class_{},{},{},{},{},{}",
            m.class, m.mcc, m.precision, m.recall, m.f1, m.support
        );
    }
    let _ = writeln!(s, "accuracy,,,,{},{}", r.accuracy, r.total);
    for (name, a) in [("macro_avg", &r.macro_avg), ("weighted_avg", &r.weighted_avg)] {
        let _ = writeln!(s, "{name},,{},{},{},{}", a.precision, a.recall, a.f1, r.total);
    }
    s
}

fn delta_cells(before: f64, after: f64) -> String {
    let d = after - before;
    let sign = if r2(d).starts_with('-') { "" } else { "+" };
    format!("{:>6} {:>6} {:>6}", r2(before), r2(after), format!("{sign}{}", r2(d)))
}

/// Side-by-side comparison of two evaluations on the same test set, with
/// columns `before after delta` for every score.
pub fn render_delta(before: &MetricsReport, after: &MetricsReport, before_name: &str, after_name: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "before = {before_name}, after = {after_name}");
    let group = |title: &str| format!("{:^20}", title);
    let _ = writeln!(
        s,
        "{:<LABEL_W$} {} {} {} {}",
        "",
        group("MCC"),
        group("Precision"),
        group("Recall"),
        group("F1-Score")
    );
    let sub = format!("{:>6} {:>6} {:>6}", "before", "after", "delta");
    let _ = writeln!(s, "{:<LABEL_W$} {sub} {sub} {sub} {sub}", "");
    for (b, a) in before.classes.iter().zip(&after.classes) {
        let _ = writeln!(
            s,
            "{:<LABEL_W$} {} {} {} {}",
            format!("Class {}", b.class),
            delta_cells(b.mcc, a.mcc),
            delta_cells(b.precision, a.precision),
            delta_cells(b.recall, a.recall),
            delta_cells(b.f1, a.f1)
        );
    }
    let blank = format!("{:20}", "");
    let avg_row = |name: &str, b: &Averages, a: &Averages| {
        format!(
            "{:<LABEL_W$} {blank} {} {} {}",
            name,
            delta_cells(b.precision, a.precision),
            delta_cells(b.recall, a.recall),
            delta_cells(b.f1, a.f1)
        )
    };
    let _ = writeln!(s, "{}", avg_row("Macro Avg", &before.macro_avg, &after.macro_avg));
    let _ = writeln!(
        s,
        "{}",
        avg_row("Weighted Avg", &before.weighted_avg, &after.weighted_avg)
    );
    let _ = writeln!(
        s,
        "{:<LABEL_W$} {blank} {blank} {blank} {}",
        "Accuracy",
        delta_cells(before.accuracy, after.accuracy)
    );
    s
}
