//! Side-by-side export of real and synthetic beats for visual inspection.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use beatgan::data::{self, Beat, Dataset, Origin, BEAT_LEN};
use log::warn;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const LEFT: f64 = 56.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 44.0;

fn x_of(i: usize) -> f64 {
    LEFT + (WIDTH - LEFT - RIGHT) * i as f64 / (BEAT_LEN - 1) as f64
}

fn y_of(v: f64) -> f64 {
    TOP + (HEIGHT - TOP - BOTTOM) * (1.0 - v)
}

fn polyline(beat: &Beat, color: &str, dash: &str) -> String {
    let mut points = String::new();
    for (i, v) in beat.samples().iter().enumerate() {
        if i > 0 {
            points.push(' ');
        }
        let _ = write!(points, "{:.2},{:.2}", x_of(i), y_of(*v));
    }
    format!(r#"<polyline fill="none" stroke="{color}" stroke-width="1.2"{dash} points="{points}"/>"#)
}

/// One SVG with every beat of `real` (solid blue) and `synthetic` (dashed
/// red) over sample index 0..186 and amplitude 0..1.
pub fn svg_plot(class: u8, real: &[&Beat], synthetic: &[&Beat]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">Class {class}: {} real, {} synthetic</text>"#,
        WIDTH / 2.0,
        real.len(),
        synthetic.len()
    );
    let (x0, x1, y0, y1) = (x_of(0), x_of(BEAT_LEN - 1), y_of(0.0), y_of(1.0));
    let _ = writeln!(
        s,
        r#"<g stroke="black" stroke-width="1" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/>"#);
    for i in [0, 50, 100, 150, BEAT_LEN - 1] {
        let x = x_of(i);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{}"/>"#, y0 + 4.0);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{}" stroke="none" text-anchor="middle">{i}</text>"#,
            y0 + 16.0
        );
    }
    for v in [0.0, 0.5, 1.0] {
        let y = y_of(v);
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}"/>"#, x0 - 4.0);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" stroke="none" text-anchor="end">{v:.1}</text>"#,
            x0 - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" stroke="none" text-anchor="middle">sample index</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" stroke="none" text-anchor="middle" transform="rotate(-90 14 {})">amplitude</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    let _ = writeln!(s, "</g>");
    for b in real {
        let _ = writeln!(s, "{}", polyline(b, "#1f5fbf", ""));
    }
    for b in synthetic {
        let _ = writeln!(s, "{}", polyline(b, "#c8321e", r#" stroke-dasharray="4 2""#));
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `waveforms_class{k}.csv` and `.svg` for every class with both real
/// and synthetic beats in `beats`, using at most `n_per_class` of each in
/// input order. Classes without synthetic beats are skipped with a warning.
pub fn export_waveforms(beats: &Dataset, n_per_class: usize, out: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for class in 0..data::NUM_CLASSES as u8 {
        let pick = |origin: Origin| -> Vec<&Beat> {
            beats
                .iter()
                .filter(|(b, o)| b.label() == class && *o == origin)
                .map(|(b, _)| b)
                .take(n_per_class)
                .collect()
        };
        let (real, synthetic) = (pick(Origin::Real), pick(Origin::Synthetic));
        if synthetic.is_empty() {
            if !real.is_empty() {
                warn!("class {class}: no synthetic beats, skipping waveform export");
            }
            continue;
        }
        let mut ds = Dataset::new();
        for b in &real {
            ds.push((*b).clone(), Origin::Real);
        }
        for b in &synthetic {
            ds.push((*b).clone(), Origin::Synthetic);
        }
        let csv = out.join(format!("waveforms_class{class}.csv"));
        data::save_csv(&ds, &csv, true).map_err(io::Error::other)?;
        let svg = out.join(format!("waveforms_class{class}.svg"));
        fs::write(&svg, svg_plot(class, &real, &synthetic))?;
        written.push(csv);
        written.push(svg);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beat(class: u8, level: f64) -> Beat {
        Beat::new(
            (0..BEAT_LEN).map(|i| (level + i as f64 * 1e-3).min(1.0)).collect(),
            class,
        )
        .unwrap()
    }

    #[test]
    fn exports_pairs_and_skips_real_only_classes() {
        let mut ds = Dataset::new();
        for i in 0..3 {
            ds.push(beat(3, 0.1 * i as f64), Origin::Real);
            ds.push(beat(3, 0.5 + 0.1 * i as f64), Origin::Synthetic);
            ds.push(beat(0, 0.2), Origin::Real);
        }
        let dir = tempfile::tempdir().unwrap();
        let files = export_waveforms(&ds, 2, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let back = data::load_csv(&files[0]).unwrap();
        assert_eq!(back.len(), 4);
        assert_eq!(
            back.origins(),
            &[Origin::Real, Origin::Real, Origin::Synthetic, Origin::Synthetic]
        );
        assert_eq!(back.beats()[0], beat(3, 0.0));
        assert_eq!(back.beats()[2], beat(3, 0.5));
        let svg = fs::read_to_string(&files[1]).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
