//! CSV snapshots of tessellations and particle states.
//!
//! Every file starts with a `# schema: <name>/<version>` line, followed by a
//! CSV header. Floats are written with 17 significant digits so identical
//! runs produce identical bytes.

use std::io::Write;

use crate::error::Result;
use crate::geometry::PotentialWeights;
use crate::measures::{DualCloud, FluidDomain, Point3};
use crate::solver::Tessellation;

pub const HEIGHTS_SCHEMA: &str = "geodual.heights/1";
pub const CELLS_SCHEMA: &str = "geodual.cells/1";
pub const PARTICLES_SCHEMA: &str = "geodual.particles/1";

/// Round-trippable scientific notation with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer<W: Write>(mut out: W, schema: &str, header: &[&str]) -> Result<csv::Writer<W>> {
    writeln!(out, "# schema: {schema}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

/// `column,j1,j2,x1,x2,h`, row-major column order.
pub fn write_heights<W: Write>(out: W, domain: &FluidDomain, tess: &Tessellation) -> Result<()> {
    let mut w = writer(out, HEIGHTS_SCHEMA, &["column", "j1", "j2", "x1", "x2", "h"])?;
    for (c, h) in tess.heights().values().iter().enumerate() {
        let (j1, j2) = domain.column_coords(c);
        let [x1, x2] = domain.column_center(c);
        w.write_record([
            c.to_string(),
            j1.to_string(),
            j2.to_string(),
            fmt_f64(x1),
            fmt_f64(x2),
            fmt_f64(*h),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `particle,mass,volume,xbar1,xbar2,xbar3,weight`; empty cells have `nan`
/// barycenters.
pub fn write_cells<W: Write>(
    out: W,
    cloud: &DualCloud,
    w: &PotentialWeights,
    tess: &Tessellation,
) -> Result<()> {
    let mut wr = writer(
        out,
        CELLS_SCHEMA,
        &["particle", "mass", "volume", "xbar1", "xbar2", "xbar3", "weight"],
    )?;
    for (i, p) in cloud.particles().iter().enumerate() {
        let xb = tess.barycenter(i).unwrap_or([f64::NAN; 3]);
        wr.write_record([
            i.to_string(),
            fmt_f64(p.mass),
            fmt_f64(tess.volumes()[i]),
            fmt_f64(xb[0]),
            fmt_f64(xb[1]),
            fmt_f64(xb[2]),
            fmt_f64(w.values()[i]),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// `step,particle,y1,y2,y3,w1,w2`.
pub fn write_particles<W: Write>(
    out: W,
    step: usize,
    cloud: &DualCloud,
    velocities: &[Point3],
) -> Result<()> {
    let mut w = writer(
        out,
        PARTICLES_SCHEMA,
        &["step", "particle", "y1", "y2", "y3", "w1", "w2"],
    )?;
    for (i, (y, v)) in cloud.positions().zip(velocities).enumerate() {
        w.write_record([
            step.to_string(),
            i.to_string(),
            fmt_f64(y[0]),
            fmt_f64(y[1]),
            fmt_f64(y[2]),
            fmt_f64(v[0]),
            fmt_f64(v[1]),
        ])?;
    }
    w.flush()?;
    Ok(())
}
