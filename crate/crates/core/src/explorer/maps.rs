use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{best_worst, SweepGrid, SweepRecord};
use crate::error::Result;
use crate::io::ensure_parent;

pub const SWEEP_HEADER: &str =
    "design_index,sides,nx,ny,angle_deg,vf,rate_per_s,valid,sea_J_per_kg";

pub fn write_sweep_csv(path: &Path, records: &[SweepRecord]) -> Result<()> {
    ensure_parent(path)?;
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(SWEEP_HEADER);
    s.push('\n');
    for r in records {
        let p = &r.params;
        let _ = writeln!(
            s,
            "{},{},{},{},{:.6},{:.6},{},{},{}",
            r.design_index,
            p.sides,
            p.nx,
            p.ny,
            p.angle_deg(),
            p.vf,
            r.rate,
            r.valid,
            r.sea.map(|v| format!("{v:.6}")).unwrap_or_default()
        );
    }
    fs::write(path, s)?;
    Ok(())
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#17becf",
];

/// SEA against design index, one colour per rate; per-rate extremes drawn
/// as larger red (best) and black (worst) markers.
pub fn write_svg(path: &Path, records: &[SweepRecord], rates: &[f64]) -> Result<()> {
    ensure_parent(path)?;
    let (w, h, m) = (900.0, 500.0, 60.0);
    let valid: Vec<&SweepRecord> = records.iter().filter(|r| r.sea.is_some()).collect();
    let x_max = records
        .iter()
        .map(|r| r.design_index)
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let y_max = valid.iter().map(|r| r.sea.unwrap()).fold(0.0f64, f64::max);
    let y_max = if y_max > 0.0 { y_max * 1.05 } else { 1.0 };
    let px = |i: usize| m + (w - 2.0 * m) * i as f64 / x_max;
    let py = |s: f64| h - m - (h - 2.0 * m) * s / y_max;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{m} {m} V{} H{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">design index</text>"#,
        w / 2.0,
        h - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" font-size="14" transform="rotate(-90 18 {})">SEA (J/kg)</text>"#,
        h / 2.0,
        h / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end" font-size="11">{:.0}</text>"#,
        m - 4.0,
        m + 4.0,
        y_max
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end" font-size="11">0</text>"#,
        m - 4.0,
        h - m + 4.0
    );
    for (k, &rate) in rates.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let _ = writeln!(s, r#"<g fill="{colour}" fill-opacity="0.4">"#);
        for r in valid.iter().filter(|r| r.rate == rate) {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="1.2"/>"#,
                px(r.design_index),
                py(r.sea.unwrap())
            );
        }
        s.push_str("</g>\n");
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" fill="{colour}">{rate} 1/s</text>"#,
            w - m - 80.0,
            m + 16.0 * k as f64
        );
        if let Ok((best, worst)) = best_worst(records, rate) {
            for (r, c) in [(best, "red"), (worst, "black")] {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.1}" cy="{:.1}" r="5" fill="none" stroke="{c}" stroke-width="2"/>"#,
                    px(r.design_index),
                    py(r.sea.unwrap())
                );
            }
        }
    }
    s.push_str("</svg>\n");
    fs::write(path, s)?;
    Ok(())
}

/// A square-tubule family: fixed counts and volume fraction, angle free.
type Family = (usize, usize, u64);

fn square_families(records: &[SweepRecord]) -> BTreeMap<Family, Vec<&SweepRecord>> {
    let mut fam: BTreeMap<Family, Vec<&SweepRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.params.sides == 4) {
        fam.entry((r.params.nx, r.params.ny, r.params.vf.to_bits()))
            .or_default()
            .push(r);
    }
    fam
}

/// SEA against angle for square designs with nx = ny. Writes every valid
/// angle of every such family; rows sorted by family, rate and angle.
pub fn write_angle_trend(path: &Path, records: &[SweepRecord]) -> Result<usize> {
    ensure_parent(path)?;
    let mut s = String::from("nx,ny,vf,rate_per_s,angle_deg,sea_J_per_kg\n");
    let mut rows = 0;
    for ((nx, ny, _), members) in square_families(records) {
        if nx != ny {
            continue;
        }
        let mut members: Vec<&&SweepRecord> = members.iter().filter(|r| r.sea.is_some()).collect();
        members.sort_by(|a, b| {
            a.rate
                .total_cmp(&b.rate)
                .then(a.params.angle.total_cmp(&b.params.angle))
        });
        for r in members {
            let _ = writeln!(
                s,
                "{nx},{ny},{:.6},{},{:.4},{:.6}",
                r.params.vf,
                r.rate,
                r.params.angle_deg(),
                r.sea.unwrap()
            );
            rows += 1;
        }
    }
    fs::write(path, s)?;
    Ok(rows)
}

/// Agreement of predicted SEA at θ and θ + 90° for square tubules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Periodicity {
    pub pairs: usize,
    pub mean_abs_diff: f64,
    pub max_abs_diff: f64,
    /// Mean of |a - b| / ((a + b) / 2).
    pub mean_rel_diff: f64,
}

/// Needs an angle grid with a whole number of bins per quarter turn.
pub fn angle_periodicity(records: &[SweepRecord], grid: &SweepGrid) -> Option<Periodicity> {
    if !grid.angle_bins.is_multiple_of(4) {
        return None;
    }
    let shift = grid.angle_bins / 4;
    let mut lookup: BTreeMap<(usize, u64), f64> = BTreeMap::new();
    for r in records.iter().filter(|r| r.params.sides == 4) {
        if let Some(v) = r.sea {
            lookup.insert((r.design_index, r.rate.to_bits()), v);
        }
    }
    let (mut n, mut sum_abs, mut max_abs, mut sum_rel) = (0usize, 0.0, 0.0f64, 0.0);
    for (&(idx, rate), &a) in &lookup {
        let bin = idx % grid.angle_bins;
        // pair each bin with the one a quarter turn later, wrapping
        let partner = idx - bin + (bin + shift) % grid.angle_bins;
        if let Some(&b) = lookup.get(&(partner, rate)) {
            let d = (a - b).abs();
            n += 1;
            sum_abs += d;
            max_abs = max_abs.max(d);
            let mid = 0.5 * (a + b);
            if mid > 0.0 {
                sum_rel += d / mid;
            }
        }
    }
    (n > 0).then(|| Periodicity {
        pairs: n,
        mean_abs_diff: sum_abs / n as f64,
        max_abs_diff: max_abs,
        mean_rel_diff: sum_rel / n as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFiles {
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub angle_trend: PathBuf,
    pub rows: usize,
}

/// Writes sweep.csv, sweep.svg and angle_trend.csv into `dir`.
pub fn emit_maps(dir: &Path, records: &[SweepRecord], rates: &[f64]) -> Result<MapFiles> {
    fs::create_dir_all(dir)?;
    let files = MapFiles {
        csv: dir.join("sweep.csv"),
        svg: dir.join("sweep.svg"),
        angle_trend: dir.join("angle_trend.csv"),
        rows: records.len(),
    };
    write_sweep_csv(&files.csv, records)?;
    write_svg(&files.svg, records, rates)?;
    write_angle_trend(&files.angle_trend, records)?;
    Ok(files)
}
