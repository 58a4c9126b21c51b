//! Comma-separated text tables. Floats carry 17 significant digits, enough
//! to round-trip any binary64 value.

use std::io::Write;

use crate::dynamics::Snapshot;
use crate::error::Result;
use crate::experiments::{SweepRow, WidthSample};

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn timeseries_header(ndim: usize) -> Vec<String> {
    let mut h = vec!["time".to_string(), "norm".to_string()];
    h.extend((0..ndim).map(|d| format!("mean_x{d}")));
    h.extend((0..ndim).map(|d| format!("width{d}")));
    h.extend(
        ["energy_linear", "max_omega", "nonsignaling", "current_linearity", "norm_drift"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

/// Header row, then one row per snapshot; `7 + 2·ndim` columns.
pub fn write_timeseries(mut w: impl Write, ndim: usize, snapshots: &[Snapshot]) -> Result<()> {
    writeln!(w, "{}", timeseries_header(ndim).join(","))?;
    for s in snapshots {
        let mut row = vec![num(s.time()), num(s.obs.norm)];
        row.extend(s.obs.mean_x.iter().map(|&v| num(v)));
        row.extend(s.obs.width.iter().map(|&v| num(v)));
        row.extend(
            [s.obs.energy_linear, s.max_omega, s.nonsignaling, s.current_linearity, s.norm_drift]
                .into_iter()
                .map(num),
        );
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_sweep_table(mut w: impl Write, rows: &[SweepRow]) -> Result<()> {
    writeln!(
        w,
        "mass_ratio,sign,oracle_sign,slope,oracle_slope,event_time,window_end,max_rel_dev,valid,error"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            num(r.ratio),
            r.sign,
            r.oracle_sign,
            num(r.slope),
            num(r.oracle_slope),
            r.event_time.map_or_else(|| "nan".into(), num),
            num(r.window_end),
            num(r.max_rel_dev),
            r.valid,
            r.error.as_deref().unwrap_or("").replace(',', ";"),
        )?;
    }
    Ok(())
}

pub fn write_oracle_table(mut w: impl Write, samples: &[WidthSample]) -> Result<()> {
    writeln!(w, "time,sigma_pde,sigma_ode,rel_dev")?;
    for s in samples {
        writeln!(w, "{},{},{},{}", num(s.time), num(s.sigma_pde), num(s.sigma_ode), num(s.rel_dev()))?;
    }
    Ok(())
}
