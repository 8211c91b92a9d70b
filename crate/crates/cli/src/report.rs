//! CSV and JSON emission of a convergence study.

use fhd_core::verify::{StudyReport, ERROR_COLUMNS};
use serde::Serialize;

use crate::config::RunConfig;

pub const CSV_HEADER: &str = "N,h,err_phi_h1,err_H_hcurl,err_M_l2,err_u_h1h,err_p_l2,curl_inf";

/// `x` with `digits` significant digits, in fixed notation when the decimal
/// exponent lies in `[-5, digits)` and in scientific notation otherwise.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", digits - 1, x);
    // the exponent after rounding, so 9.9999996 becomes 10.0000
    let exp: i32 = sci.split_once('e').map_or(0, |(_, e)| e.parse().unwrap_or(0));
    if (-5..digits as i32).contains(&exp) {
        format!("{:.*}", (digits as i32 - 1 - exp) as usize, x)
    } else {
        sci
    }
}

fn order_row(label: &str, orders: &[f64]) -> String {
    let cells: Vec<String> = orders.iter().map(|&o| format_sig(o, 6)).collect();
    format!("{label},,{},", cells.join(","))
}

/// The study table: header, one row per level, the order footers (pairwise
/// orders of the two finest levels and the least-squares slope over all
/// levels) and, after a failed solve, a `# FAILED` trailer.
pub fn study_csv(report: &StudyReport) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        let errs: Vec<String> = r.errors().iter().map(|&e| format_sig(e, 6)).collect();
        out.push_str(&format!("{},{},{},{:.3e}\n", r.n, format_sig(r.h, 6), errs.join(","), r.curl_inf));
    }
    if let Some(orders) = &report.orders {
        let last: Vec<f64> = orders.pairwise.iter().map(|c| *c.last().expect("two levels")).collect();
        out.push_str(&order_row("order_pairwise", &last));
        out.push('\n');
        out.push_str(&order_row("order_lsq", &orders.lsq));
        out.push('\n');
    }
    if let Some((n, msg)) = &report.failed {
        out.push_str(&format!("# FAILED at N={n}: {}\n", msg.replace('\n', " ")));
    }
    out
}

#[derive(Serialize)]
struct JsonReport<'a> {
    config: &'a RunConfig,
    columns: [&'static str; 5],
    #[serde(flatten)]
    study: &'a StudyReport,
}

/// The full report including per-level solver diagnostics.
pub fn study_json(config: &RunConfig, report: &StudyReport) -> String {
    serde_json::to_string_pretty(&JsonReport {
        config,
        columns: ERROR_COLUMNS,
        study: report,
    })
    .expect("report is serializable")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(0.394312345, 6), "0.394312");
        assert_eq!(format_sig(0.0128, 6), "0.0128000");
        assert_eq!(format_sig(128.0, 6), "128.000");
        assert_eq!(format_sig(9.9999996, 6), "10.0000");
        assert_eq!(format_sig(1.23456789e-7, 6), "1.23457e-7");
        assert_eq!(format_sig(0.0, 6), "0");
    }

    #[test]
    fn failed_study_gets_trailer() {
        use fhd_core::verify::StudyRow;
        let row = StudyRow {
            n: 4,
            h: 2f64.sqrt() / 4.0,
            err_phi_h1: 0.5,
            err_h_hcurl: 0.5,
            err_m_l2: 0.5,
            err_u_h1h: 0.5,
            err_p_l2: 0.5,
            curl_inf: 0.0,
            err_ptilde_l2: 0.5,
        };
        let report = StudyReport {
            case: "2d-l0".into(),
            pair: fhd_core::ElementPair::L0,
            rows: vec![row],
            orders: None,
            diagnostics: vec![],
            failed: Some((8, "solve failed\nsingular".into())),
        };
        let csv = study_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "4,0.353553,0.500000,0.500000,0.500000,0.500000,0.500000,0.000e0");
        assert_eq!(lines[2], "# FAILED at N=8: solve failed singular");
    }
}
