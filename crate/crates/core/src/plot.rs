//! Deterministic SVG renderings of skeletons and PCKh curves.
//!
//! Coordinates are printed with a fixed number of decimals, so identical
//! inputs give byte-identical files.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::metrics::{auc_thresholds, Report};
use crate::sequence::PoseSequence;
use crate::topology::SkeletonTopology;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const PANEL: f64 = 220.0;
const MARGIN: f64 = 12.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Draws the chosen frames side by side, overlaying every sequence in its
/// own color. Sequences must share the topology and be at least as long as
/// the largest frame index.
pub fn skeleton_svg(topo: &SkeletonTopology, layers: &[(&str, &PoseSequence)], frames: &[usize]) -> Result<String> {
    if frames.is_empty() {
        return Err(Error::Config("no frames to draw".into()));
    }
    if layers.is_empty() {
        return Err(Error::Config("no sequences to draw".into()));
    }
    for (name, s) in layers {
        if s.joints() != topo.joint_count() {
            return Err(Error::Shape(format!("{name:?} does not match topology {:?}", topo.name())));
        }
        if let Some(&f) = frames.iter().find(|&&f| f >= s.frames()) {
            return Err(Error::Shape(format!("{name:?} has no frame {f}")));
        }
    }
    // One shared scale keeps the overlays comparable across panels.
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for (_, s) in layers {
        for &f in frames {
            for j in 0..s.joints() {
                if s.is_available(f, j) {
                    let p = s.position(f, j);
                    for a in 0..2 {
                        lo[a] = lo[a].min(p[a]);
                        hi[a] = hi[a].max(p[a]);
                    }
                }
            }
        }
    }
    if !lo[0].is_finite() {
        return Err(Error::EmptyMask("no available joint in the chosen frames"));
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
    let scale = (PANEL - 2.0 * MARGIN) / extent;
    let legend = 18.0 * layers.len() as f64;
    let (width, height) = (PANEL * frames.len() as f64, PANEL + legend);
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    )
    .expect("write to string");
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let bones = topo.bones();
    for (k, &f) in frames.iter().enumerate() {
        let x0 = k as f64 * PANEL;
        writeln!(svg, r#"<g data-frame="{f}">"#).expect("write to string");
        writeln!(svg, r##"<text x="{:.1}" y="14" font-size="11" fill="#444">frame {f}</text>"##, x0 + 4.0).expect("write to string");
        for (i, (_, s)) in layers.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            // Image y grows downwards; pose y grows upwards.
            let map = |p: [f64; 2]| {
                (
                    x0 + MARGIN + (p[0] - lo[0]) * scale,
                    PANEL - MARGIN - (p[1] - lo[1]) * scale,
                )
            };
            for &(a, b) in &bones {
                if s.is_available(f, a) && s.is_available(f, b) {
                    let (p, q) = (map(s.position(f, a)), map(s.position(f, b)));
                    writeln!(
                        svg,
                        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
                        p.0, p.1, q.0, q.1
                    )
                    .expect("write to string");
                }
            }
            for j in 0..s.joints() {
                if s.is_available(f, j) {
                    let p = map(s.position(f, j));
                    writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, p.0, p.1).expect("write to string");
                }
            }
        }
        svg.push_str("</g>\n");
    }
    for (i, (name, _)) in layers.iter().enumerate() {
        let y = PANEL + 14.0 + 18.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        writeln!(
            svg,
            r#"<rect x="8" y="{:.0}" width="12" height="12" fill="{color}"/><text x="26" y="{:.0}" font-size="12">{}</text>"#,
            y - 10.0,
            y,
            escape(name)
        )
        .expect("write to string");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// PCKh against threshold for every report row, with the AUC in the legend.
pub fn pckh_svg(report: &Report) -> Result<String> {
    if report.rows.is_empty() {
        return Err(Error::Config("report has no rows".into()));
    }
    let ts = auc_thresholds();
    let (w, h, left, bottom, top, right) = (560.0, 380.0, 50.0, 40.0, 20.0, 190.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
    )
    .expect("write to string");
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    writeln!(
        svg,
        r##"<rect x="{left:.0}" y="{top:.0}" width="{pw:.0}" height="{ph:.0}" fill="none" stroke="#888"/>"##
    )
    .expect("write to string");
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let (x, y) = (left + v * pw, top + ph - v * ph);
        writeln!(
            svg,
            r##"<text x="{x:.1}" y="{:.1}" font-size="10" text-anchor="middle">{v:.1}</text><text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{v:.1}</text>"##,
            top + ph + 14.0,
            left - 4.0,
            y + 3.0
        )
        .expect("write to string");
    }
    writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">threshold (head sizes)</text>"#,
        left + pw / 2.0,
        h - 6.0
    )
    .expect("write to string");
    for (i, row) in report.rows.iter().enumerate() {
        if row.curve.len() != ts.len() {
            return Err(Error::Config(format!("row {:?} has {} curve points", row.method, row.curve.len())));
        }
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = ts
            .iter()
            .zip(&row.curve)
            .map(|(t, v)| format!("{:.2},{:.2}", left + t * pw, top + ph - v * ph))
            .collect();
        let label = format!("{} ({})", row.method, row.joints.name());
        writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" data-method="{}" data-pckh0="{}" data-pckh1="{}" points="{}"/>"#,
            escape(&label),
            row.curve[0],
            row.curve[ts.len() - 1],
            points.join(" ")
        )
        .expect("write to string");
        let y = top + 12.0 + 16.0 * i as f64;
        writeln!(
            svg,
            r#"<rect x="{:.0}" y="{:.0}" width="10" height="10" fill="{color}"/><text x="{:.0}" y="{:.0}" font-size="11">{} AUC {:.4}</text>"#,
            w - right + 10.0,
            y - 9.0,
            w - right + 24.0,
            y,
            escape(&label),
            row.auc
        )
        .expect("write to string");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{JointSet, ReportRow};

    fn report() -> Report {
        let curve: Vec<f64> = (0..101).map(|i| (i as f64 / 100.0).sqrt()).collect();
        Report {
            experiment: "upsampling".into(),
            sequences: 1,
            head_factor: 1.0,
            rows: vec![ReportRow {
                method: "full".into(),
                joints: JointSet::Missing,
                pckh_01: curve[10],
                pckh_05: curve[50],
                pckh_10: curve[100],
                auc: curve.iter().sum::<f64>() / 101.0,
                mpjpe: 0.1,
                scored: 10,
                excluded_frames: 0,
                curve,
            }],
        }
    }

    #[test]
    fn empty_frame_list_rejected() {
        let topo = SkeletonTopology::mpi_inf_3dhp_28();
        let s = PoseSequence::from_fn(2, 28, |f, j| [j as f64, f as f64]).unwrap();
        assert!(skeleton_svg(&topo, &[("a", &s)], &[]).is_err());
        assert!(skeleton_svg(&topo, &[("a", &s)], &[2]).is_err());
    }

    #[test]
    fn output_is_deterministic() {
        let topo = SkeletonTopology::mpi_inf_3dhp_28();
        let s = PoseSequence::from_fn(3, 28, |f, j| [(j as f64).sin(), f as f64 + j as f64 * 0.1]).unwrap();
        let a = skeleton_svg(&topo, &[("a", &s)], &[0, 2]).unwrap();
        assert_eq!(a, skeleton_svg(&topo, &[("a", &s)], &[0, 2]).unwrap());
        assert_eq!(a.matches("<line").count(), 2 * topo.bones().len());
        assert_eq!(pckh_svg(&report()).unwrap(), pckh_svg(&report()).unwrap());
    }

    #[test]
    fn curve_endpoints_match_report() {
        let r = report();
        let svg = pckh_svg(&r).unwrap();
        assert!(svg.contains(&format!("data-pckh0=\"{}\"", r.rows[0].curve[0])));
        assert!(svg.contains(&format!("data-pckh1=\"{}\"", r.rows[0].pckh_10)));
    }
}
