//! Minimal SVG line plots for trajectories: outputs vs reference, control
//! inputs, and selected states. No external plotting dependency; the files
//! are plain vector graphics.

use std::io::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::sim::Trajectory;

const W: f64 = 720.0;
const H: f64 = 420.0;
const ML: f64 = 60.0; // margins
const MR: f64 = 20.0;
const MT: f64 = 30.0;
const MB: f64 = 45.0;

struct Series<'a> {
    label: &'a str,
    values: Vec<f64>,
    dashed: bool,
}

const COLORS: [&str; 6] = ["#1f6fb2", "#c0392b", "#27ae60", "#8e44ad", "#d68910", "#16a085"];

fn render(title: &str, t: &[f64], series: &[Series], path: &Path) -> Result<()> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in series {
        for v in &s.values {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        let c = 0.5 * (hi + lo);
        lo = c - 1.0;
        hi = c + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    let (t0, t1) = (t.first().copied().unwrap_or(0.0), t.last().copied().unwrap_or(1.0));
    let tx = |tt: f64| ML + (tt - t0) / (t1 - t0).max(1e-12) * (W - ML - MR);
    let ty = |v: f64| H - MB - (v - lo) / (hi - lo) * (H - MT - MB);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" \
         text-anchor=\"middle\">{title}</text>\n",
        W / 2.0
    ));
    // Axes.
    out.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{ML}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB,
        H - MB,
        W - MR,
        H - MB
    ));
    // Tick labels: min/max on both axes.
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" \
         text-anchor=\"end\">{:.3}</text>\n",
        ML - 4.0,
        ty(lo) + 3.0,
        lo
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" \
         text-anchor=\"end\">{:.3}</text>\n",
        ML - 4.0,
        ty(hi) + 3.0,
        hi
    ));
    out.push_str(&format!(
        "<text x=\"{ML}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\">{t0:.1}</text>\n",
        H - MB + 14.0
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" \
         text-anchor=\"end\">{t1:.1}</text>\n",
        W - MR,
        H - MB + 14.0
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
         text-anchor=\"middle\">t [s]</text>\n",
        (ML + W - MR) / 2.0,
        H - 8.0
    ));

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = t
            .iter()
            .zip(&s.values)
            .map(|(tt, v)| format!("{:.2},{:.2}", tx(*tt), ty(*v)))
            .collect();
        let dash = if s.dashed { " stroke-dasharray=\"6,4\"" } else { "" };
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash} \
             points=\"{}\"/>\n",
            pts.join(" ")
        ));
        // Legend entry.
        let lx = ML + 10.0;
        let lyy = MT + 14.0 * i as f64 + 6.0;
        out.push_str(&format!(
            "<line x1=\"{lx}\" y1=\"{lyy}\" x2=\"{}\" y2=\"{lyy}\" stroke=\"{color}\" \
             stroke-width=\"1.5\"{dash}/>\n\
             <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
            lx + 22.0,
            lx + 27.0,
            lyy + 3.0,
            s.label
        ));
    }
    out.push_str("</svg>\n");
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Outputs against their references, one SVG per output.
pub fn plot_outputs(traj: &Trajectory, dir: &Path, tag: &str) -> Result<Vec<std::path::PathBuf>> {
    let m = traj.y.first().map_or(0, |r| r.len());
    let mut files = Vec::new();
    for i in 0..m {
        let series = [
            Series {
                label: "y",
                values: traj.y.iter().map(|r| r[i]).collect(),
                dashed: false,
            },
            Series {
                label: "y_c",
                values: traj.yc.iter().map(|r| r[i]).collect(),
                dashed: true,
            },
        ];
        let path = dir.join(format!("{tag}_output{}.svg", i + 1));
        render(&format!("output {} vs reference", i + 1), &traj.t, &series, &path)?;
        files.push(path);
    }
    Ok(files)
}

/// All control inputs on one SVG.
pub fn plot_inputs(traj: &Trajectory, dir: &Path, tag: &str) -> Result<std::path::PathBuf> {
    let m = traj.u.first().map_or(0, |r| r.len());
    let labels: Vec<String> = (1..=m).map(|i| format!("u{i}")).collect();
    let series: Vec<Series> = (0..m)
        .map(|i| Series {
            label: &labels[i],
            values: traj.u.iter().map(|r| r[i]).collect(),
            dashed: false,
        })
        .collect();
    let path = dir.join(format!("{tag}_inputs.svg"));
    render("control inputs", &traj.t, &series, &path)?;
    Ok(path)
}

/// Selected plant states on one SVG.
pub fn plot_states(
    traj: &Trajectory,
    indices: &[usize],
    dir: &Path,
    tag: &str,
) -> Result<std::path::PathBuf> {
    let labels: Vec<String> = indices.iter().map(|i| format!("x{}", i + 1)).collect();
    let series: Vec<Series> = indices
        .iter()
        .enumerate()
        .map(|(slot, &i)| Series {
            label: &labels[slot],
            values: traj.x.iter().map(|r| r[i]).collect(),
            dashed: false,
        })
        .collect();
    let path = dir.join(format!("{tag}_states.svg"));
    render("selected states", &traj.t, &series, &path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_traj() -> Trajectory {
        let t: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let n = t.len();
        Trajectory {
            t: t.clone(),
            x: t.iter().map(|tt| vec![tt.sin(), tt.cos()]).collect(),
            chi: vec![vec![0.0; 3]; n],
            u: t.iter().map(|tt| vec![*tt]).collect(),
            v: vec![vec![0.0]; n],
            y: t.iter().map(|tt| vec![tt.sin()]).collect(),
            yc: vec![vec![1.0]; n],
            z: vec![vec![0.0; 3]; n],
            zeta: vec![vec![0.0; 3]; n],
            cost: vec![0.0; n],
            diverged: None,
            warnings: vec![],
        }
    }

    #[test]
    fn emits_svg_files() {
        let dir = tempfile::tempdir().unwrap();
        let traj = toy_traj();
        let outs = plot_outputs(&traj, dir.path(), "case1").unwrap();
        assert_eq!(outs.len(), 1);
        let text = std::fs::read_to_string(&outs[0]).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("polyline"));
        plot_inputs(&traj, dir.path(), "case1").unwrap();
        plot_states(&traj, &[0, 1], dir.path(), "case1").unwrap();
        assert!(dir.path().join("case1_inputs.svg").exists());
        assert!(dir.path().join("case1_states.svg").exists());
    }

    #[test]
    fn constant_series_does_not_degenerate() {
        let dir = tempfile::tempdir().unwrap();
        let mut traj = toy_traj();
        for y in &mut traj.y {
            y[0] = 2.0;
        }
        let outs = plot_outputs(&traj, dir.path(), "flat").unwrap();
        let text = std::fs::read_to_string(&outs[0]).unwrap();
        assert!(!text.contains("NaN"));
    }
}
