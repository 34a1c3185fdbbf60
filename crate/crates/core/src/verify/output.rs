//! Report files: JSON, CSV tables and optional SVG plots.

use super::svg::{line_chart, Series};
use super::VerificationReport;
use crate::error::Result;
use std::fs;
use std::path::{Path, PathBuf};

/// Paths written by [`write_report`].
#[derive(Debug, Clone, Default)]
pub struct ReportFiles {
    pub paths: Vec<PathBuf>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// Writes `report.json`, `upper.csv`, `psi.csv`, `replicates.csv`,
/// `oracles.csv`, `exceedance.csv` and, with `svg`, one plot per exceedance
/// curve and per upper function.
pub fn write_report(report: &VerificationReport, dir: &Path, svg: bool) -> Result<ReportFiles> {
    fs::create_dir_all(dir)?;
    let mut files = ReportFiles::default();
    let mut put = |name: &str, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body)?;
        files.paths.push(p);
        Ok(())
    };
    put("report.json", serde_json::to_string_pretty(report)? + "\n")?;

    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record([
        "upper", "theorem", "e_hat", "se", "bound", "ln_bound", "bound_variant", "pass", "margin", "zero_fraction",
        "tightness_mean", "tightness_max",
    ])?;
    for u in &report.upper {
        w.write_record([
            u.kind.label(),
            u.theorem.map(|t| format!("{t:?}")).unwrap_or_default(),
            format!("{:e}", u.e_hat),
            format!("{:e}", u.se),
            opt(u.bound),
            opt(u.ln_bound),
            opt(u.bound_variant),
            u.pass.map(|p| p.to_string()).unwrap_or_default(),
            opt(u.margin),
            u.zero_fraction.to_string(),
            format!("{:e}", u.tightness.mean),
            format!("{:e}", u.tightness.max),
        ])?;
    }
    put("upper.csv", String::from_utf8_lossy(&w.into_inner().map_err(|e| e.into_error())?).into_owned())?;

    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(["upper", "bandwidth", "psi", "note"])?;
    for u in &report.upper {
        for (i, (v, n)) in u.psi.iter().zip(&u.notes).enumerate() {
            w.write_record([u.kind.label(), i.to_string(), format!("{v:e}"), n.clone()])?;
        }
    }
    put("psi.csv", String::from_utf8_lossy(&w.into_inner().map_err(|e| e.into_error())?).into_owned())?;

    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(["upper", "replicate", "deficit", "tightness"])?;
    for u in &report.upper {
        for (i, (d, t)) in u.deficits.iter().zip(&u.tightness_ratios).enumerate() {
            w.write_record([u.kind.label(), i.to_string(), format!("{d:e}"), format!("{t:e}")])?;
        }
    }
    put("replicates.csv", String::from_utf8_lossy(&w.into_inner().map_err(|e| e.into_error())?).into_owned())?;

    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(["oracle", "item", "estimate", "target", "se", "z", "pass"])?;
    if let Some(rows) = &report.oracles.moment {
        for r in rows {
            w.write_record([
                "moment".into(),
                format!("h{}", r.bandwidth),
                format!("{:e}", r.estimate),
                format!("{:e}", r.target),
                format!("{:e}", r.se),
                r.z.to_string(),
                r.pass.to_string(),
            ])?;
        }
    }
    if let Some(rows) = &report.oracles.covariance {
        for r in rows {
            w.write_record([
                "covariance".into(),
                format!("{}-{}", r.i, r.j),
                format!("{:e}", r.estimate),
                format!("{:e}", r.exact),
                format!("{:e}", r.se),
                r.z.to_string(),
                r.pass.to_string(),
            ])?;
        }
    }
    if let Some(h) = &report.oracles.holder {
        w.write_record([
            "holder".into(),
            format!("violations/{}", h.checks),
            h.violations.to_string(),
            "0".into(),
            String::new(),
            h.max_ratio.to_string(),
            h.pass.to_string(),
        ])?;
    }
    put("oracles.csv", String::from_utf8_lossy(&w.into_inner().map_err(|e| e.into_error())?).into_owned())?;

    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(["bandwidth", "u", "empirical", "se", "reference"])?;
    for c in &report.exceedance {
        for r in &c.rows {
            w.write_record([
                c.bandwidth.to_string(),
                format!("{:e}", r.u),
                r.empirical.to_string(),
                r.se.to_string(),
                format!("{:e}", r.reference),
            ])?;
        }
    }
    put("exceedance.csv", String::from_utf8_lossy(&w.into_inner().map_err(|e| e.into_error())?).into_owned())?;

    if svg {
        for c in &report.exceedance {
            let body = line_chart(
                &format!("exceedance, bandwidth {}", c.bandwidth),
                "u",
                "P(norm >= u)",
                &[
                    Series {
                        name: "empirical".into(),
                        points: c.rows.iter().map(|r| (r.u, r.empirical)).collect(),
                        color: "#1f4e9c",
                        dashed: false,
                    },
                    Series {
                        name: "reference".into(),
                        points: c.rows.iter().map(|r| (r.u, r.reference)).collect(),
                        color: "#b03a2e",
                        dashed: true,
                    },
                ],
                true,
            );
            put(&format!("exceedance_{}.svg", c.bandwidth), body)?;
        }
        for u in &report.upper {
            let body = line_chart(
                &format!("{} per bandwidth", u.kind.label()),
                "bandwidth index",
                "value",
                &[Series {
                    name: u.kind.label(),
                    points: u.psi.iter().enumerate().map(|(i, v)| (i as f64, *v)).collect(),
                    color: "#1f4e9c",
                    dashed: false,
                }],
                true,
            );
            put(&format!("{}.svg", u.kind.label()), body)?;
        }
    }
    Ok(files)
}
