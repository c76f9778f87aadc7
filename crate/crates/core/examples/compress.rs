//! Compresses one design and prints the stress-strain table.
//!
//! cargo run --release --example compress -- 4 2 3 30 0.06 9.1

use std::time::Instant;

use impactforge::fesolver::{run_simulation, MaterialModel};
use impactforge::geometry::{build_design, rasterize, DesignParams, DEFAULT_EDGE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse::<f64>())
        .collect::<Result<_, _>>()?;
    let [sides, nx, ny, angle_deg, vf, rate] = args[..] else {
        return Err("usage: compress SIDES NX NY ANGLE_DEG VF RATE".into());
    };
    let params = DesignParams::new(
        sides as usize,
        nx as usize,
        ny as usize,
        angle_deg.to_radians(),
        vf,
    )?;
    let polygons = build_design(&params)?.map_err(|r| r.to_string())?;
    let mesh = rasterize(&polygons, DEFAULT_EDGE)?;
    println!("{params}: {}", mesh.summary());
    let start = Instant::now();
    let rec = run_simulation(&mesh, &MaterialModel::default(), rate, 0.25, 50)?;
    println!(
        "{} steps, dt {:.3e} s, mass scale {:.1}, {:.2} s",
        rec.steps,
        rec.dt_s,
        rec.mass_scale,
        start.elapsed().as_secs_f64()
    );
    println!("strain  stress_MPa  E_pl  E_el  E_k  W_ext");
    for k in 0..rec.len() {
        println!(
            "{:.4} {:9.3} {:9.3} {:9.3} {:9.4} {:9.3}",
            rec.nominal_strain[k],
            rec.nominal_stress[k] / 1e6,
            rec.e_plastic[k],
            rec.e_elastic[k],
            rec.e_kinetic[k],
            rec.w_external[k]
        );
    }
    Ok(())
}
