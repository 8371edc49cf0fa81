use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{EvalReport, MetricsReport, RMSE_LABEL};
use crate::dynamics::{CONTROL_CHANNELS, WRENCH_CHANNELS};

fn pct(v: Option<f64>) -> String {
    v.map(|p| format!("{p:+.1}%")).unwrap_or_else(|| "-".into())
}

/// Aligned text table: one row per evaluation speed.
pub fn render_eval(r: &EvalReport) -> String {
    let mut s = String::new();
    writeln!(s, "variant: {}  (RMSE: {})", r.variant, r.rmse_label).unwrap();
    write!(s, "{:>8} {:>10}", "speed", "RMSE").unwrap();
    for c in WRENCH_CHANNELS {
        write!(s, " {c:>9}").unwrap();
    }
    writeln!(s, " {:>10}", "vs ref").unwrap();
    for m in &r.speeds {
        write!(s, "{:>8.1} {:>10.4}", m.speed, m.rmse).unwrap();
        for v in m.channel_rmse {
            write!(s, " {v:>9.4}").unwrap();
        }
        writeln!(s, " {:>10}", pct(m.inflation_pct)).unwrap();
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub speed: f64,
    pub rmse: Vec<f64>,
    pub inflation_pct: Vec<Option<f64>>,
}

/// Side-by-side RMSE and inflation of several evaluations over their common speeds.
pub fn render_comparison(reports: &[EvalReport]) -> (String, Vec<ComparisonRow>) {
    let mut rows = Vec::new();
    if let Some(first) = reports.first() {
        for m in &first.speeds {
            let found: Vec<_> = reports.iter().filter_map(|r| r.at(m.speed)).collect();
            if found.len() == reports.len() {
                rows.push(ComparisonRow {
                    speed: m.speed,
                    rmse: found.iter().map(|f| f.rmse).collect(),
                    inflation_pct: found.iter().map(|f| f.inflation_pct).collect(),
                });
            }
        }
    }
    let mut s = String::new();
    writeln!(s, "RMSE ({RMSE_LABEL}) and change relative to the reference speed").unwrap();
    write!(s, "{:>8}", "speed").unwrap();
    for r in reports {
        write!(s, " {:>20} {:>9}", r.variant.as_str(), "vs ref").unwrap();
    }
    writeln!(s).unwrap();
    for row in &rows {
        write!(s, "{:>8.1}", row.speed).unwrap();
        for (e, p) in row.rmse.iter().zip(&row.inflation_pct) {
            write!(s, " {e:>20.4} {:>9}", pct(*p)).unwrap();
        }
        writeln!(s).unwrap();
    }
    (s, rows)
}

pub fn render_suite(r: &MetricsReport) -> String {
    let mut s = String::new();
    writeln!(s, "seed {}  split {}", r.seed, r.split_hash).unwrap();
    if let Some(cal) = &r.calibration {
        for (i, c) in cal.iter().enumerate() {
            writeln!(
                s,
                "probe {i}: Va rel. RMSE {:.2}%  alpha RMSE {:.3} deg  beta RMSE {:.3} deg",
                100.0 * c.va_relative_rmse,
                c.alpha_rmse_deg,
                c.beta_rmse_deg
            )
            .unwrap();
        }
    }
    writeln!(s).unwrap();
    let evals: Vec<EvalReport> = r.variants.iter().map(|v| v.eval.clone()).collect();
    s.push_str(&render_comparison(&evals).0);
    writeln!(s).unwrap();

    writeln!(s, "closed-loop tracking (RMSSD of commands, deg per step)").unwrap();
    write!(s, "{:>20}", "variant").unwrap();
    for c in CONTROL_CHANNELS {
        write!(s, " {c:>8}").unwrap();
    }
    writeln!(s, " {:>8} {:>10} {:>9}", "average", "track err", "sym res").unwrap();
    for v in &r.variants {
        write!(s, "{:>20}", v.variant.as_str()).unwrap();
        for x in v.tracking.rmssd.per_input {
            write!(s, " {x:>8.4}").unwrap();
        }
        let sym = v
            .symmetry_residual
            .map(|x| format!("{x:.4}"))
            .unwrap_or_else(|| "-".into());
        writeln!(
            s,
            " {:>8.4} {:>10.4} {:>9}",
            v.tracking.rmssd.average, v.tracking.tracking_rmse, sym
        )
        .unwrap();
    }
    s
}

/// Long-format CSV: one row per variant and evaluation speed.
pub fn suite_csv(r: &MetricsReport) -> String {
    let mut s = String::from("variant,speed,rmse");
    for c in WRENCH_CHANNELS {
        write!(s, ",rmse_{c}").unwrap();
    }
    s.push_str(",inflation_pct,rmssd_avg\n");
    for v in &r.variants {
        for m in &v.eval.speeds {
            write!(s, "{},{},{}", v.variant, m.speed, m.rmse).unwrap();
            for x in m.channel_rmse {
                write!(s, ",{x}").unwrap();
            }
            let infl = m.inflation_pct.map(|p| p.to_string()).unwrap_or_default();
            writeln!(s, ",{infl},{}", v.tracking.rmssd.average).unwrap();
        }
    }
    s
}
