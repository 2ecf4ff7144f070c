//! CSV and JSON writers.
//!
//! Floats are printed with 17 significant digits so values read back
//! exactly.

use std::io::{self, Write};

use serde::Serialize;

use crate::analysis::{CurvatureReport, DensityShadow, SupportReport};
use crate::error::Result;
use crate::sampler::{TimeGrid, Trajectory};
use crate::schedule::{eval_point, to_kernel, ScheduleSpec};
use crate::sde::tvsnr_sde;

/// Round-trippable float formatting.
pub struct Float(pub f64);

impl std::fmt::Display for Float {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.16e}", self.0)
    }
}

/// One trajectory as `t,x_0,...,x_{d-1}`, rows in integration order.
pub fn write_trajectory<W: Write>(mut w: W, traj: &Trajectory) -> io::Result<()> {
    write!(w, "t")?;
    for j in 0..traj.dim {
        write!(w, ",x_{j}")?;
    }
    writeln!(w)?;
    for (i, &t) in traj.grid.times().iter().enumerate() {
        write!(w, "{}", Float(t))?;
        for x in traj.state(i) {
            write!(w, ",{}", Float(*x))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// A batch in long format, `traj_id,t,dim,value`.
pub fn write_trajectories_long<W: Write>(mut w: W, batch: &[Trajectory]) -> io::Result<()> {
    writeln!(w, "traj_id,t,dim,value")?;
    for traj in batch {
        for (i, &t) in traj.grid.times().iter().enumerate() {
            let t = Float(t);
            for (j, x) in traj.state(i).iter().enumerate() {
                writeln!(w, "{},{t},{j},{}", traj.index, Float(*x))?;
            }
        }
    }
    Ok(())
}

/// Final states only, `traj_id,x_0,...`.
pub fn write_samples<W: Write>(mut w: W, batch: &[Trajectory]) -> io::Result<()> {
    write!(w, "traj_id")?;
    if let Some(first) = batch.first() {
        for j in 0..first.dim {
            write!(w, ",x_{j}")?;
        }
    }
    writeln!(w)?;
    for traj in batch {
        write!(w, "{}", traj.index)?;
        for x in traj.sample() {
            write!(w, ",{}", Float(*x))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_curvature<W: Write>(mut w: W, report: &CurvatureReport) -> io::Result<()> {
    writeln!(w, "t,local")?;
    for (t, v) in report.times.iter().zip(&report.local) {
        writeln!(w, "{},{}", Float(*t), Float(*v))?;
    }
    Ok(())
}

/// Sidecar summary for a curvature CSV.
#[derive(Debug, Clone, Serialize)]
pub struct CurvatureSummary {
    pub schedule: String,
    pub global: f64,
    pub trajectories: usize,
    pub steps: usize,
}

pub fn write_support<W: Write>(mut w: W, report: &SupportReport) -> io::Result<()> {
    writeln!(w, "t,rel_support")?;
    for (t, v) in report.times.iter().zip(&report.rel_support) {
        writeln!(w, "{},{}", Float(*t), Float(*v))?;
    }
    Ok(())
}

pub fn write_shadow<W: Write>(mut w: W, shadow: &DensityShadow) -> io::Result<()> {
    writeln!(w, "t,x,pdf")?;
    for (i, &t) in shadow.times.iter().enumerate() {
        let t = Float(t);
        for (x, p) in shadow.xs.iter().zip(shadow.column(i)) {
            writeln!(w, "{t},{},{}", Float(*x), Float(*p))?;
        }
    }
    Ok(())
}

pub fn write_grid_json<W: Write>(w: W, grid: &TimeGrid) -> io::Result<()> {
    serde_json::to_writer_pretty(w, grid).map_err(io::Error::other)
}

/// One row of a schedule table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleRow {
    pub t: f64,
    pub tv_sq: f64,
    pub snr_sq: f64,
    pub a: f64,
    pub b: f64,
    pub f: f64,
    pub g_sq: f64,
}

pub fn schedule_table(spec: &ScheduleSpec, times: &[f64]) -> Result<Vec<ScheduleRow>> {
    times
        .iter()
        .map(|&t| {
            let p = eval_point(spec, t)?;
            let k = to_kernel(&p);
            let c = tvsnr_sde(&p)?;
            Ok(ScheduleRow {
                t,
                tv_sq: p.tv_sq,
                snr_sq: p.snr_sq,
                a: k.a,
                b: k.b,
                f: c.f,
                g_sq: c.g_sq,
            })
        })
        .collect()
}

pub fn write_schedule_table<W: Write>(mut w: W, rows: &[ScheduleRow]) -> io::Result<()> {
    writeln!(w, "t,tv_sq,snr_sq,a,b,f,g_sq")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            Float(r.t),
            Float(r.tv_sq),
            Float(r.snr_sq),
            Float(r.a),
            Float(r.b),
            Float(r.f),
            Float(r.g_sq)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{default_grid, sample_batch, ReverseField, Solver};
    use crate::score::MixtureData;
    use std::sync::Arc;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = Float(x).to_string();
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn trajectory_layouts() {
        let spec = ScheduleSpec::otfm().vp();
        let field = ReverseField::new(&spec, Arc::new(default_grid(&spec, 3).unwrap())).unwrap();
        let mix = MixtureData::single_delta(vec![0.0, 1.0]);
        let batch = sample_batch(&spec, &field, &mix, Solver::Euler, 2, 0).unwrap();

        let mut single = Vec::new();
        write_trajectory(&mut single, &batch[0]).unwrap();
        let text = String::from_utf8(single).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x_0,x_1");
        assert_eq!(lines.len(), 5);

        let mut long = Vec::new();
        write_trajectories_long(&mut long, &batch).unwrap();
        let text = String::from_utf8(long).unwrap();
        assert_eq!(text.lines().next(), Some("traj_id,t,dim,value"));
        assert_eq!(text.lines().count(), 1 + 2 * 4 * 2);
        assert!(text.lines().last().unwrap().starts_with("1,"));
    }

    #[test]
    fn schedule_table_columns() {
        let rows = schedule_table(&ScheduleSpec::otfm(), &[0.5]).unwrap();
        assert_eq!(rows[0].tv_sq, 0.5);
        let mut out = Vec::new();
        write_schedule_table(&mut out, &rows).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("t,tv_sq,snr_sq,a,b,f,g_sq\n"));
    }
}
