//! CSV, JSON and SVG renderings of experiment reports. Percentages carry two
//! decimals; absent values are written as empty fields.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{AggregateReport, ConfusionMatrix, EvalError};
use crate::precondition::PreconditionMode;

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn opt_pct(v: Option<f64>) -> String {
    v.map(pct).unwrap_or_default()
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, EvalError> {
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Accuracy of one (method, preconditioning) cell of the grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridCell {
    pub method: String,
    pub mode: PreconditionMode,
    pub accuracy: f64,
}

/// One row per preconditioning mode, one column per method.
pub fn grid_csv(cells: &[GridCell], methods: &[&str], modes: &[PreconditionMode]) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["preconditioning".to_string()];
    header.extend(methods.iter().map(|m| m.to_uppercase()));
    w.write_record(&header)?;
    for &mode in modes {
        let mut row = vec![mode.caption().to_string()];
        for m in methods {
            let cell = cells.iter().find(|c| c.mode == mode && c.method == *m);
            row.push(cell.map(|c| pct(c.accuracy)).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    finish(w)
}

pub fn results_csv(report: &AggregateReport) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "preconditioning", "policy", "partition", "subject", "correct", "total", "accuracy"])?;
    for r in &report.results {
        w.write_record([
            r.method.clone(),
            r.mode.name().to_string(),
            report.policy.name().to_string(),
            r.partition.to_string(),
            r.subject.to_string(),
            r.confusion.trace().to_string(),
            r.confusion.total().to_string(),
            pct(r.accuracy),
        ])?;
    }
    for p in &report.partitions {
        w.write_record([
            report.method.name().to_string(),
            report.mode.name().to_string(),
            report.policy.name().to_string(),
            p.partition.to_string(),
            "mean".to_string(),
            String::new(),
            String::new(),
            pct(p.accuracy),
        ])?;
    }
    w.write_record([
        report.method.name().to_string(),
        report.mode.name().to_string(),
        report.policy.name().to_string(),
        "global".to_string(),
        "mean".to_string(),
        String::new(),
        String::new(),
        pct(report.accuracy),
    ])?;
    w.write_record([
        report.method.name().to_string(),
        report.mode.name().to_string(),
        report.policy.name().to_string(),
        "pooled".to_string(),
        "all".to_string(),
        report.pooled.trace().to_string(),
        report.pooled.total().to_string(),
        pct(report.pooled_accuracy),
    ])?;
    finish(w)
}

/// Per-class precision and recall, mean and sample deviation across subjects.
pub fn table2_csv(report: &AggregateReport) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["location", "activity", "precision", "precision_sd", "recall", "recall_sd", "subjects"])?;
    for row in &report.class_rows {
        let activity = row.label.map(|l| l.name().to_string()).unwrap_or_else(|| "Average".to_string());
        w.write_record([
            row.partition.to_string(),
            activity,
            opt_pct(row.precision.mean),
            opt_pct(row.precision.sd),
            opt_pct(row.recall.mean),
            opt_pct(row.recall.sd),
            row.precision.n.max(row.recall.n).to_string(),
        ])?;
    }
    w.write_record([
        "global".to_string(),
        "Global average".to_string(),
        opt_pct(report.global_precision),
        String::new(),
        opt_pct(report.global_recall),
        String::new(),
        String::new(),
    ])?;
    finish(w)
}

pub fn confusion_csv(m: &ConfusionMatrix) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(m.classes().iter().map(|c| c.name().to_string()));
    w.write_record(&header)?;
    for (c, row) in m.classes().iter().zip(m.counts()) {
        let mut rec = vec![c.name().to_string()];
        rec.extend(row.iter().map(u64::to_string));
        w.write_record(&rec)?;
    }
    finish(w)
}

/// Heat map of the row-normalised matrix, labelled with class letters.
pub fn confusion_svg(m: &ConfusionMatrix) -> String {
    const CELL: usize = 36;
    const MARGIN: usize = 40;
    let n = m.classes().len();
    let size = MARGIN + n * CELL + 10;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" font-family="sans-serif" font-size="11">"#
    );
    for (i, c) in m.classes().iter().enumerate() {
        let mid = MARGIN + i * CELL + CELL / 2;
        let _ = writeln!(s, r#"<text x="{mid}" y="{}" text-anchor="middle">{}</text>"#, MARGIN - 8, c.letter());
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN - 8, mid + 4, c.letter());
    }
    for (i, row) in m.counts().iter().enumerate() {
        let total: u64 = row.iter().sum();
        for (j, &count) in row.iter().enumerate() {
            let frac = if total > 0 { count as f64 / total as f64 } else { 0.0 };
            let shade = (255.0 * (1.0 - frac)).round() as u8;
            let (x, y) = (MARGIN + j * CELL, MARGIN + i * CELL);
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},255)" stroke="#999"/>"##
            );
            if count > 0 {
                let ink = if frac > 0.5 { "white" } else { "black" };
                let _ = writeln!(
                    s,
                    r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{:.0}</text>"#,
                    x + CELL / 2,
                    y + CELL / 2 + 4,
                    100.0 * frac
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `<stem>_results.csv`, `<stem>_table2.csv`, `<stem>_confusion.csv`,
/// `<stem>_confusion.svg` and `<stem>.json` into `dir`.
pub fn write_report_files(report: &AggregateReport, dir: &Path, stem: &str) -> Result<(), EvalError> {
    let write = |name: String, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|source| EvalError::Io { path, source })
    };
    fs::create_dir_all(dir).map_err(|source| EvalError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write(format!("{stem}_results.csv"), results_csv(report)?)?;
    write(format!("{stem}_table2.csv"), table2_csv(report)?)?;
    write(format!("{stem}_confusion.csv"), confusion_csv(&report.pooled)?)?;
    write(format!("{stem}_confusion.svg"), confusion_svg(&report.pooled))?;
    write(format!("{stem}.json"), serde_json::to_string_pretty(report)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ActivityLabel::*;

    #[test]
    fn grid_layout() {
        let cells = vec![
            GridCell { method: "knn".into(), mode: PreconditionMode::None, accuracy: 0.5376 },
            GridCell { method: "svm".into(), mode: PreconditionMode::CentreMirror, accuracy: 0.123456 },
        ];
        let text = grid_csv(&cells, &["svm", "knn"], &[PreconditionMode::None, PreconditionMode::CentreMirror]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "preconditioning,SVM,KNN");
        assert_eq!(lines[1], "No preconditioning,,53.76");
        assert_eq!(lines[2], "Centring and mirroring,12.35,");
    }

    #[test]
    fn confusion_outputs() {
        let m = ConfusionMatrix::from_counts(vec![BrushingTeeth, Still], vec![vec![8, 2], vec![1, 9]]);
        let csv = confusion_csv(&m).unwrap();
        assert_eq!(csv.lines().nth(1).unwrap(), "brushing teeth,8,2");
        let svg = confusion_svg(&m);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect").count(), 4);
    }
}
