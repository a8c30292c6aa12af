//! CSV and SVG writers for trajectories and Monte Carlo curves.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::sim::{MonteCarloResult, Trajectory};

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header `t,y1..yN[,e1..eN][,mode]`, where `eᵢ = ‖ξ̂ᵢ − ξ̌ᵢ‖`. With
/// `full_state`, per-agent `xi_hat`, `eta` and `u` columns follow.
pub fn write_trajectory_csv<W: Write>(
    traj: &Trajectory,
    out: &mut W,
    full_state: bool,
) -> io::Result<()> {
    let n = traj.agents.len();
    let observer = traj.has_observer();
    let switching = !traj.modes.is_empty();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("y{i}")));
    if observer {
        header.extend((1..=n).map(|i| format!("e{i}")));
    }
    if switching {
        header.push("mode".into());
    }
    if full_state {
        for (i, a) in traj.agents.iter().enumerate() {
            let r = a.xi_hat.first().map_or(0, Vec::len);
            let k = a.eta.first().map_or(0, Vec::len);
            header.extend((1..=r).map(|c| format!("xi_hat{}_{c}", i + 1)));
            header.extend((1..=k).map(|c| format!("eta{}_{c}", i + 1)));
            header.push(format!("u{}", i + 1));
        }
    }
    writeln!(out, "{}", header.join(","))?;

    let mut line = String::new();
    for k in 0..traj.len() {
        line.clear();
        line.push_str(&num(traj.times[k]));
        for a in &traj.agents {
            let _ = write!(line, ",{}", num(a.y[k]));
        }
        if observer {
            for a in &traj.agents {
                let e = a.observer_error[k]
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt();
                let _ = write!(line, ",{}", num(e));
            }
        }
        if switching {
            let _ = write!(line, ",{}", traj.modes[k]);
        }
        if full_state {
            for a in &traj.agents {
                for v in a.xi_hat[k]
                    .iter()
                    .chain(&a.eta[k])
                    .chain(std::iter::once(&a.u[k]))
                {
                    let _ = write!(line, ",{}", num(*v));
                }
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Header `t,mean_sq`.
pub fn write_montecarlo_csv<W: Write>(mc: &MonteCarloResult, out: &mut W) -> io::Result<()> {
    writeln!(out, "t,mean_sq")?;
    for (t, v) in mc.times.iter().zip(&mc.mean_sq) {
        writeln!(out, "{},{}", num(*t), num(*v))?;
    }
    Ok(())
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];
const MAX_POINTS: usize = 2000;

/// One polyline per agent output on an 800×500 canvas.
pub fn write_svg<W: Write>(traj: &Trajectory, out: &mut W, title: &str) -> io::Result<()> {
    let (t0, t1) = match (traj.times.first(), traj.times.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a, a + 1.0),
        _ => (0.0, 1.0),
    };
    let (mut lo, mut hi) = traj
        .agents
        .iter()
        .flat_map(|a| a.y.iter())
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(lo < hi) {
        let c = if lo.is_finite() { lo } else { 0.0 };
        lo = c - 1.0;
        hi = c + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let sx = |t: f64| MARGIN + (t - t0) / (t1 - t0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - lo) / (hi - lo) * (HEIGHT - 2.0 * MARGIN);

    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )?;
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    )?;
    writeln!(
        out,
        r#"<text x="{}" y="30" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    )?;
    for (label, x, y, anchor) in [
        (format!("{t0:.3}"), MARGIN, HEIGHT - MARGIN + 20.0, "start"),
        (
            format!("{t1:.3}"),
            WIDTH - MARGIN,
            HEIGHT - MARGIN + 20.0,
            "end",
        ),
        (format!("{hi:.3}"), MARGIN - 5.0, MARGIN + 5.0, "end"),
        (format!("{lo:.3}"), MARGIN - 5.0, HEIGHT - MARGIN, "end"),
        ("t".to_string(), WIDTH / 2.0, HEIGHT - 15.0, "middle"),
    ] {
        writeln!(
            out,
            r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-family="sans-serif" font-size="12">{label}</text>"#
        )?;
    }
    let stride = traj.len().div_ceil(MAX_POINTS).max(1);
    for (i, a) in traj.agents.iter().enumerate() {
        let mut pts = String::new();
        for k in (0..traj.len())
            .step_by(stride)
            .chain(traj.len().checked_sub(1))
        {
            if a.y[k].is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", sx(traj.times[k]), sy(a.y[k]));
            }
        }
        writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            COLORS[i % COLORS.len()],
            pts.trim_end()
        )?;
        writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{}">y{}</text>"#,
            WIDTH - MARGIN + 5.0,
            MARGIN + 15.0 * (i as f64 + 1.0),
            COLORS[i % COLORS.len()],
            i + 1
        )?;
    }
    writeln!(out, "</svg>")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
