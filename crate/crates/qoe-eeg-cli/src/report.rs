//! `report`: walk a directory tree for eval and ablation artifacts and
//! render them as one CSV table and one grouped bar chart, with the
//! published study numbers as a fixed comparison row.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use qoe_eeg::plot::{BarChart, BarGroup};
use qoe_eeg::train::reference;

use crate::artifacts::{AblationDocument, EvalDocument};
use crate::context::{CliError, CommandContext};

struct ReportRow {
    source: String,
    kind: String,
    name: String,
    accuracy: f64,
    macro_f1: f64,
    delta_accuracy: Option<f64>,
    delta_macro_f1: Option<f64>,
}

/// Collects `eval.json` and `ablation.json` files under `root`, depth
/// first with siblings in name order, so the report row order is a
/// function of the tree alone.
fn find_artifacts(root: &Path) -> Result<Vec<PathBuf>, CliError> {
    fn walk(dir: &Path, found: &mut Vec<PathBuf>) -> std::io::Result<()> {
        let mut entries: Vec<_> =
            std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            let path = entry.path();
            if entry.file_type()?.is_dir() {
                walk(&path, found)?;
            } else if matches!(
                path.file_name().and_then(|n| n.to_str()),
                Some("eval.json" | "ablation.json")
            ) {
                found.push(path);
            }
        }
        Ok(())
    }

    let mut found = Vec::new();
    walk(root, &mut found)
        .map_err(|e| CliError::Runtime(format!("cannot scan {}: {e}", root.display())))?;
    Ok(found)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Runtime(format!("cannot parse {}: {e}", path.display())))
}

fn rows_for(path: &Path, root: &Path) -> Result<Vec<ReportRow>, CliError> {
    let source = path
        .strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/");
    if path.file_name().and_then(|n| n.to_str()) == Some("eval.json") {
        let doc: EvalDocument = read_json(path)?;
        return Ok(vec![ReportRow {
            source,
            kind: "eval".into(),
            name: doc.architecture,
            accuracy: doc.test.accuracy,
            macro_f1: doc.test.macro_f1,
            delta_accuracy: None,
            delta_macro_f1: None,
        }]);
    }

    let doc: AblationDocument = read_json(path)?;
    let mut rows = vec![ReportRow {
        source: source.clone(),
        kind: "baseline".into(),
        name: doc.architecture,
        accuracy: doc.baseline_accuracy,
        macro_f1: doc.baseline_macro_f1,
        delta_accuracy: None,
        delta_macro_f1: None,
    }];
    for entry in doc.entries {
        rows.push(ReportRow {
            source: source.clone(),
            kind: format!("{:?}", entry.kind).to_lowercase(),
            name: format!("minus {}", entry.name),
            accuracy: entry.mean_accuracy,
            macro_f1: entry.mean_macro_f1,
            delta_accuracy: Some(entry.delta_accuracy),
            delta_macro_f1: Some(entry.delta_macro_f1),
        });
    }
    Ok(rows)
}

fn to_csv(rows: &[ReportRow]) -> String {
    let mut csv =
        String::from("source,kind,name,accuracy,macro_f1,delta_accuracy,delta_macro_f1\n");
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    for row in rows {
        let _ = writeln!(
            csv,
            "{},{},{},{:.6},{:.6},{},{}",
            row.source,
            row.kind,
            row.name,
            row.accuracy,
            row.macro_f1,
            opt(row.delta_accuracy),
            opt(row.delta_macro_f1)
        );
    }
    csv
}

pub fn run(ctx: &mut CommandContext, input: &Path) -> Result<(), CliError> {
    ctx.guard(&["report.csv", "report.svg"])?;
    let artifacts = find_artifacts(input)?;
    if artifacts.is_empty() {
        return Err(CliError::Runtime(format!(
            "no eval.json or ablation.json found under {}",
            input.display()
        )));
    }

    let mut rows = Vec::new();
    for path in &artifacts {
        rows.extend(rows_for(path, input)?);
    }
    rows.push(ReportRow {
        source: "built-in".into(),
        kind: "reference".into(),
        name: "study bilstm".into(),
        accuracy: reference::BILSTM_ACCURACY,
        macro_f1: reference::BILSTM_MACRO_F1,
        delta_accuracy: None,
        delta_macro_f1: None,
    });
    ctx.note(format!("{} artifacts, {} rows", artifacts.len(), rows.len()));

    let chart = BarChart {
        title: "QoE prediction runs".into(),
        y_label: "score".into(),
        series: vec!["accuracy".into(), "macro F1".into()],
        groups: rows
            .iter()
            .map(|row| BarGroup {
                label: row.name.clone(),
                values: vec![row.accuracy, row.macro_f1],
            })
            .collect(),
    };
    let svg = chart.render()?;

    ctx.write_bytes("report.csv", to_csv(&rows).as_bytes())?;
    ctx.write_bytes("report.svg", svg.as_bytes())
}
