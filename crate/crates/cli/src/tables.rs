//! Flat tables written by `simulate`.

use glaa::simulation::{AggregateRow, MeanSe, ReplicationOutcome};

use crate::error::{CliError, CliResult};

const REPLICATION_HEADER: [&str; 20] = [
    "rep", "method", "tpr1", "fpr1", "tpr2", "fpr2", "tpr3", "fpr3", "d1", "d2", "d3", "d",
    "iterations", "converged", "eta1", "eta2", "eta3", "eta_tilde1", "eta_tilde2",
    "eta_tilde3",
];

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Io(format!("cannot format table: {e}"));
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Io(format!("cannot format table: {e}")))
}

/// One row per replication and method. The fit columns are empty for ULA.
pub fn replications_csv(outcomes: &[ReplicationOutcome]) -> CliResult<Vec<u8>> {
    let mut rows = Vec::new();
    for o in outcomes {
        for (label, m, is_glaa) in [("GLAA", &o.glaa, true), ("ULA", &o.ula, false)] {
            let mut row = vec![o.rep.to_string(), label.to_string()];
            for k in 0..3 {
                row.push(m.tpr[k].to_string());
                row.push(m.fpr[k].to_string());
            }
            row.extend(m.d_per_mode.iter().map(f64::to_string));
            row.push(m.d_avg.to_string());
            if is_glaa {
                row.push(o.iterations.to_string());
                row.push(o.converged.to_string());
                row.extend(o.init_eta.iter().map(f64::to_string));
                row.extend(o.eta_tilde.iter().map(f64::to_string));
            } else {
                row.extend(std::iter::repeat_n(String::new(), 8));
            }
            rows.push(row);
        }
    }
    csv_bytes(&REPLICATION_HEADER, rows)
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> CliResult<Vec<u8>> {
    let header = [
        "method", "reps", "tpr1_mean", "tpr1_se", "fpr1_mean", "fpr1_se", "tpr2_mean",
        "tpr2_se", "fpr2_mean", "fpr2_se", "d_mean", "d_se", "se_undefined",
    ];
    let body = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.method.label().to_string(), r.reps.to_string()];
            for ms in [r.tpr1, r.fpr1, r.tpr2, r.fpr2, r.d] {
                row.push(ms.mean.to_string());
                row.push(ms.se.to_string());
            }
            row.push(r.se_undefined.to_string());
            row
        })
        .collect();
    csv_bytes(&header, body)
}

fn cell(ms: MeanSe) -> String {
    format!("{:.3} ({:.3})", ms.mean, ms.se)
}

/// Fixed-width summary: mean with the standard error in parentheses.
pub fn aggregate_text(rows: &[AggregateRow], title: &str) -> String {
    let mut out = format!("{title}\n");
    out.push_str(&format!(
        "{:<8}{:>16}{:>16}{:>16}{:>16}{:>16}\n",
        "Method", "TPR-1", "FPR-1", "TPR-2", "FPR-2", "D"
    ));
    let mut flagged = false;
    for r in rows {
        let mark = if r.se_undefined { "*" } else { "" };
        flagged |= r.se_undefined;
        out.push_str(&format!(
            "{:<8}{:>16}{:>16}{:>16}{:>16}{:>16}\n",
            format!("{}{mark}", r.method.label()),
            cell(r.tpr1),
            cell(r.fpr1),
            cell(r.tpr2),
            cell(r.fpr2),
            cell(r.d)
        ));
    }
    if flagged {
        out.push_str("* single replication: standard errors are undefined and shown as 0\n");
    }
    out
}
