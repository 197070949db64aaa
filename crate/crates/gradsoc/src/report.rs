//! CSV tables and SVG line plots for run artifacts.
//!
//! Outputs are deterministic: no timestamps or machine data outside the
//! dedicated timing table, fixed float formatting, stable column orders.

use std::io::Write;
use std::path::Path;

use crate::models::{ModelIndex, ModelSolution};
use crate::network::GradostatNetwork;
use crate::validate::{CertificateReport, ExactnessReport, KktReport};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        // normalize negative zero so artifact bytes stay stable
        let v = if v == 0.0 { 0.0 } else { v };
        format!("{v:.12}")
    } else {
        format!("{v}")
    }
}

/// Per tank (and period, for dynamic runs) solution table.
pub fn write_solution_csv(
    path: &Path,
    net: &GradostatNetwork,
    ms: &ModelSolution,
    ex: &ExactnessReport,
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "period",
        "tank",
        "s_kg_per_m3",
        "x_kg_per_m3",
        "t_kg_per_m3_h",
        "kinetics",
        "gap",
        "growth_binding",
        "underestimator_binding",
    ])?;
    let under = &ex.underestimator_binding;
    for t in 0..ms.periods {
        for i in 0..ms.n_tanks {
            let k = ms.slot(t, i);
            w.write_record([
                (t + 1).to_string(),
                (i + 1).to_string(),
                fmt(ms.s[k]),
                fmt(ms.x.get(k).copied().unwrap_or(f64::NAN)),
                fmt(ms.t[k]),
                fmt(ex.kinetics[k]),
                fmt(ex.gap[k]),
                ex.growth_binding[k].to_string(),
                under.get(k).copied().unwrap_or(false).to_string(),
            ])?;
        }
    }
    let _ = net;
    w.flush()?;
    Ok(())
}

/// Chosen pipes of a design run.
pub fn write_design_csv(
    path: &Path,
    net: &GradostatNetwork,
    idx: &ModelIndex,
    assignment: &[f64],
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "from",
        "to",
        "activated",
        "cost",
        "q1_m3_per_h",
        "d1_m3_per_h",
    ])?;
    for (k, &pi) in idx.candidate_pipes.iter().enumerate() {
        let p = &net.pipes[pi];
        w.write_record([
            (p.from + 1).to_string(),
            (p.to + 1).to_string(),
            (assignment.get(k).copied().unwrap_or(0.0) > 0.5).to_string(),
            fmt(p.cost),
            fmt(p.q1_m3_per_h),
            fmt(p.d1_m3_per_h),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Validation summary: exactness, certificate verdicts, KKT residuals, and
/// the simulation residual.
pub fn write_validation_csv(
    path: &Path,
    ex: &ExactnessReport,
    cert: Option<&CertificateReport>,
    kkt: Option<&KktReport>,
    ode_residual: Option<f64>,
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["metric", "value"])?;
    w.write_record(["exactness", &fmt(ex.exactness)])?;
    if let Some(c) = cert {
        w.write_record(["outflow_connected", &c.outflow_connected.to_string()])?;
        w.write_record(["irreducible", &c.irreducible.to_string()])?;
        w.write_record(["fully_fed", &c.fully_fed.to_string()])?;
        w.write_record(["rho_positive", &c.rho_positive.to_string()])?;
        w.write_record(["predicts_exact", &c.predicts_exact.to_string()])?;
        if let Some(a) = c.agrees {
            w.write_record(["certificate_agrees", &a.to_string()])?;
        }
        if let Some(rho) = &c.rho {
            for (i, r) in rho.iter().enumerate() {
                w.write_record([format!("rho_{}", i + 1), fmt(*r)])?;
            }
        }
        for (i, m) in c.margins.iter().enumerate() {
            w.write_record([format!("margin_{}", i + 1), fmt(*m)])?;
        }
    }
    if let Some(k) = kkt {
        w.write_record(["kkt_stationarity", &fmt(k.stationarity)])?;
        w.write_record(["kkt_balance_s", &fmt(k.balance_stationarity_s)])?;
        if let Some(x) = k.balance_stationarity_x {
            w.write_record(["kkt_balance_x", &fmt(x)])?;
        }
        w.write_record([
            "kkt_complementary_slackness",
            &fmt(k.complementary_slackness),
        ])?;
        w.write_record(["kkt_primal", &fmt(k.primal)])?;
        for fam in &k.unchecked {
            w.write_record(["kkt_unchecked", fam])?;
        }
    }
    if let Some(r) = ode_residual {
        w.write_record(["ode_steady_residual", &fmt(r)])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-period trajectory table for dynamic runs.
pub fn write_dynamic_csv(
    path: &Path,
    ms: &ModelSolution,
    s_in: &[Vec<f64>],
) -> Result<(), ReportError> {
    let n = ms.n_tanks;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["period".to_string()];
    for tag in ["s_in", "x_in", "s", "x", "t"] {
        for i in 1..=n {
            header.push(format!("{tag}_{i}"));
        }
    }
    w.write_record(&header)?;
    for t in 0..ms.periods {
        let mut rec = vec![(t + 1).to_string()];
        for i in 0..n {
            rec.push(fmt(s_in[t][i]));
        }
        for i in 0..n {
            rec.push(fmt(ms.x_in.get(ms.slot(t, i)).copied().unwrap_or(0.0)));
        }
        for i in 0..n {
            rec.push(fmt(ms.s[ms.slot(t, i)]));
        }
        for i in 0..n {
            rec.push(fmt(ms.x.get(ms.slot(t, i)).copied().unwrap_or(f64::NAN)));
        }
        for i in 0..n {
            rec.push(fmt(ms.t[ms.slot(t, i)]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timing_csv(path: &Path, entries: &[(&str, f64)]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["stage", "seconds"])?;
    for (name, secs) in entries {
        w.write_record([name.to_string(), format!("{secs:.6}")])?;
    }
    w.flush()?;
    Ok(())
}

/// A named series of (x, y) points.
pub struct Series<'a> {
    pub name: String,
    pub points: &'a [(f64, f64)],
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Minimal static SVG line chart with axes, ticks, and a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (860.0, 420.0);
    let (ml, mr, mt, mb) = (64.0, 150.0, 40.0, 48.0);
    let pw = w - ml - mr;
    let ph = h - mt - mb;
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in s.points {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if !xmin.is_finite() {
        xmin = 0.0;
        xmax = 1.0;
    }
    if !ymin.is_finite() {
        ymin = 0.0;
        ymax = 1.0;
    }
    if (ymax - ymin).abs() < 1e-12 {
        ymax = ymin + 1.0;
    }
    if (xmax - xmin).abs() < 1e-12 {
        xmax = xmin + 1.0;
    }
    let px = |x: f64| ml + (x - xmin) / (xmax - xmin) * pw;
    let py = |y: f64| mt + ph - (y - ymin) / (ymax - ymin) * ph;
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    out.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n<text x=\"{}\" y=\"22\" \
         font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        ml + pw / 2.0,
        xml_escape(title)
    ));
    // axes
    out.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + ph,
        ml + pw,
        mt + ph
    ));
    out.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + ph
    ));
    for k in 0..=5 {
        let xv = xmin + (xmax - xmin) * k as f64 / 5.0;
        let yv = ymin + (ymax - ymin) * k as f64 / 5.0;
        out.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n\
             <text x=\"{0}\" y=\"{3}\" text-anchor=\"middle\">{4:.4}</text>\n",
            px(xv),
            mt + ph,
            mt + ph + 5.0,
            mt + ph + 20.0,
            xv
        ));
        out.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n\
             <text x=\"{3}\" y=\"{4}\" text-anchor=\"end\">{5:.4}</text>\n",
            ml - 5.0,
            py(yv),
            ml,
            ml - 8.0,
            py(yv) + 4.0,
            yv
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        ml + pw / 2.0,
        h - 8.0,
        xml_escape(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        mt + ph / 2.0,
        mt + ph / 2.0,
        xml_escape(y_label)
    ));
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let mut d = String::new();
        for (pi, &(x, y)) in s.points.iter().enumerate() {
            d.push_str(if pi == 0 { "M" } else { "L" });
            d.push_str(&format!("{:.2},{:.2}", px(x), py(y)));
        }
        out.push_str(&format!(
            "<path d=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.3\"/>\n"
        ));
        let ly = mt + 16.0 * si as f64 + 8.0;
        out.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{ly}\" x2=\"{1}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{2}\" y=\"{3}\">{4}</text>\n",
            ml + pw + 10.0,
            ml + pw + 34.0,
            ml + pw + 40.0,
            ly + 4.0,
            xml_escape(&s.name)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn write_svg(path: &Path, content: &str) -> Result<(), ReportError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(content.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_contains_series_and_escapes() {
        let pts = [(0.0, 1.0), (1.0, 2.0), (2.0, 0.5)];
        let svg = line_chart(
            "a<b",
            "t",
            "y",
            &[Series {
                name: "s&1".into(),
                points: &pts,
            }],
        );
        assert!(svg.contains("a&lt;b"));
        assert!(svg.contains("s&amp;1"));
        assert!(svg.contains("<path"));
        assert!(svg.starts_with("<svg"));
    }
}
