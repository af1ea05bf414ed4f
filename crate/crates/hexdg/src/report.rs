//! Study report emission: CSV tables with the effective configuration
//! echoed in comment headers, JSON fit summaries, and SVG semilog plots.
//!
//! Numeric CSV columns carry 17 significant digits. Timing columns are the
//! last field of each row and are excluded from reproducibility
//! comparisons.

use crate::infsup::{ExponentFit, InfSupResult};
use crate::problems::{ConvergenceRow, RateFit};

/// 17 significant digits, round-trippable f64.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn header_lines(config: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in config {
        s.push_str(&format!("# {k} = {v}\n"));
    }
    s
}

/// kind,patch,sigma,k,levels,M,N,value,sigma_kernel,seconds
pub fn infsup_csv(rows: &[InfSupResult], config: &[(String, String)]) -> String {
    let mut s = header_lines(config);
    s.push_str("kind,patch,sigma,k,levels,M,N,value,sigma_kernel,seconds\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{:.3}\n",
            r.kind,
            r.patch,
            fmt17(r.sigma),
            r.k,
            r.levels,
            r.m,
            r.n,
            fmt17(r.value),
            fmt17(r.kernel_sigma),
            r.seconds
        ));
    }
    s
}

/// case,nu,patch,k,levels,N,dg_error,vel_error,pre_error,gmres_iters,seconds
pub fn convergence_csv(rows: &[ConvergenceRow], config: &[(String, String)]) -> String {
    let mut s = header_lines(config);
    s.push_str("case,nu,patch,k,levels,N,dg_error,vel_error,pre_error,gmres_iters,seconds\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{:.3}\n",
            r.case,
            fmt17(r.nu),
            r.patch,
            r.k,
            r.levels,
            r.n_dofs,
            fmt17(r.dg_error),
            fmt17(r.vel_error),
            fmt17(r.pre_error),
            r.gmres_iters,
            r.seconds
        ));
    }
    s
}

pub fn infsup_fit_json(
    fits: &[ExponentFit],
    rows: usize,
    config: &[(String, String)],
) -> serde_json::Value {
    serde_json::json!({
        "config": config_object(config),
        "rows": rows,
        "fits": fits.iter().map(|f| serde_json::json!({
            "kind": f.kind.to_string(),
            "patch": f.patch.to_string(),
            "slope": f.slope,
            "intercept": f.intercept,
            "points": f.points.iter().map(|(k, v)| serde_json::json!([k, v])).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    })
}

pub fn rate_fit_json(case: &str, nu: f64, fit: &RateFit) -> serde_json::Value {
    serde_json::json!({
        "case": case,
        "nu": nu,
        "root": fit.root,
        "slope": fit.slope,
        "intercept": fit.intercept,
        "b": fit.b,
        "r_squared": fit.r_squared,
        "n_points": fit.n_points,
    })
}

pub fn config_object(config: &[(String, String)]) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    for (k, v) in config {
        map.insert(k.clone(), serde_json::Value::String(v.clone()));
    }
    serde_json::Value::Object(map)
}

/// One curve of a semilog-y plot.
pub struct PlotSeries {
    pub label: String,
    /// (x, y) with y > 0 plotted on a log scale
    pub points: Vec<(f64, f64)>,
}

/// Minimal self-contained SVG semilog-y plot (error curves against
/// N^(1/root)).
pub fn svg_semilogy(series: &[PlotSeries], title: &str, xlabel: &str, ylabel: &str) -> String {
    let (w, h) = (720.0, 540.0);
    let (ml, mr, mt, mb) = (80.0, 24.0, 48.0, 64.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);

    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if y > 0.0 && y.is_finite() {
                xs.push(x);
                ys.push(y.log10());
            }
        }
    }
    if xs.is_empty() {
        return format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\
             <text x=\"20\" y=\"40\">no data</text></svg>"
        );
    }
    let (xmin, xmax) = xs.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let (ymin, ymax) = ys.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let xpad = 0.05 * (xmax - xmin).max(1e-9);
    let (xmin, xmax) = (xmin - xpad, xmax + xpad);
    let (ymin, ymax) = ((ymin - 0.2).floor(), (ymax + 0.2).ceil());

    let px = |x: f64| ml + (x - xmin) / (xmax - xmin) * pw;
    let py = |ylog: f64| mt + (ymax - ylog) / (ymax - ymin).max(1e-12) * ph;

    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"13\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{pw}\" height=\"{ph}\" fill=\"white\" \
         stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        ml + pw / 2.0,
        title
    ));
    // y decades
    let mut d = ymin as i64;
    while d <= ymax as i64 {
        let y = py(d as f64);
        if y >= mt - 1.0 && y <= mt + ph + 1.0 {
            svg.push_str(&format!(
                "<line x1=\"{ml}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\n",
                ml + pw
            ));
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">1e{d}</text>\n",
                ml - 6.0,
                y + 4.0
            ));
        }
        d += 1;
    }
    // x ticks
    for i in 0..=5 {
        let x = xmin + (xmax - xmin) * i as f64 / 5.0;
        let sx = px(x);
        svg.push_str(&format!(
            "<line x1=\"{sx:.1}\" y1=\"{:.1}\" x2=\"{sx:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            mt + ph,
            mt + ph + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{sx:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x:.2}</text>\n",
            mt + ph + 20.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        ml + pw / 2.0,
        h - 16.0,
        xlabel
    ));
    svg.push_str(&format!(
        "<text x=\"20\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {})\">{}</text>\n",
        mt + ph / 2.0,
        mt + ph / 2.0,
        ylabel
    ));
    for (si, s) in series.iter().enumerate() {
        let color = colors[si % colors.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(_, y)| *y > 0.0 && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y.log10())))
            .collect();
        if pts.len() > 1 {
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                pts.join(" ")
            ));
        }
        for p in &pts {
            let mut it = p.split(',');
            let (cx, cy) = (it.next().unwrap(), it.next().unwrap());
            svg.push_str(&format!(
                "<circle cx=\"{cx}\" cy=\"{cy}\" r=\"3\" fill=\"{color}\"/>\n"
            ));
        }
        let ly = mt + 18.0 + 18.0 * si as f64;
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" \
             stroke-width=\"2\"/>\n",
            ml + pw - 150.0,
            ml + pw - 120.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            ml + pw - 112.0,
            ly + 4.0,
            s.label
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
