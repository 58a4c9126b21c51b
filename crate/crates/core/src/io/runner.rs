//! Executes a [`RunSpec`] and writes its artifacts into an output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use crate::dynamics::{evolve, Propagator, RateKernel, Snapshot, Trajectory};
use crate::error::Result;
use crate::experiments::{self, trajectory_reports};
use crate::grid;
use crate::io::config::{RunSpec, Scenario};
use crate::io::manifest::Manifest;
use crate::io::snapshot::write_snapshot;
use crate::io::timeseries::{write_oracle_table, write_sweep_table, write_timeseries};
use crate::io::OutputLock;
use crate::verify::{self, CheckReport};
use crate::wavefield::PhysParams;

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Write every N-th recorded snapshot as a binary file; zero writes only
    /// the final state.
    pub snapshots: usize,
    pub threads: usize,
}

struct Writer<'a> {
    dir: &'a Path,
    manifest: Manifest,
}

impl Writer<'_> {
    fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        if let Some(parent) = Path::new(name).parent() {
            fs::create_dir_all(self.dir.join(parent))?;
        }
        self.manifest.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn bytes(&mut self, name: &str, data: &[u8]) -> Result<()> {
        self.file(name)?.write_all(data)?;
        Ok(())
    }

    fn trajectory(&mut self, traj: &Trajectory, ratio: f64, every: usize) -> Result<()> {
        let mut w = self.file("timeseries.csv")?;
        write_timeseries(&mut w, traj.grid.ndim(), &traj.snapshots)?;
        w.flush()?;
        if every > 0 {
            for (i, s) in traj.snapshots.iter().enumerate().step_by(every) {
                self.bytes(&format!("snapshots/snap_{i:05}.nsnl"), &write_snapshot(&s.state, ratio))?;
            }
        }
        let last = write_snapshot(&traj.last().state, ratio);
        self.manifest.final_crc32 = Some(crc32fast::hash(&last));
        self.bytes("final.nsnl", &last)
    }

    fn reports(&mut self, reports: Vec<CheckReport>) {
        self.manifest.valid &= experiments::bundle_valid(&reports);
        self.manifest.reports.extend(reports);
    }
}

fn last_summary(s: &Snapshot) -> serde_json::Value {
    json!({
        "t_final": s.time(),
        "norm": s.obs.norm,
        "mean_x": s.obs.mean_x,
        "width": s.obs.width,
        "max_omega": s.max_omega,
    })
}

/// Runs the scenario, writes its tables, snapshots and `manifest.json`, and
/// returns the manifest. The output directory is locked for the duration.
pub fn execute(spec: &RunSpec, opts: &RunOptions) -> Result<Manifest> {
    grid::set_kernel_threads(opts.threads);
    let _lock = OutputLock::acquire(&opts.out_dir)?;
    let mut w = Writer {
        dir: &opts.out_dir,
        manifest: Manifest::new(spec.scenario.to_string(), spec.to_config_text(), opts.threads),
    };
    match spec.scenario {
        Scenario::MassPoint => {
            let wf = spec.initial_state()?;
            let traj = evolve(&wf, spec.t_final, &spec.stepper, &spec.params)?;
            w.trajectory(&traj, spec.mass_ratio, opts.snapshots)?;
            w.reports(trajectory_reports(&traj));
            w.manifest.summary = last_summary(traj.last());
        }
        Scenario::MassSweep => {
            let sweep = spec.sweep_spec()?;
            let rows = experiments::run_mass_sweep(&sweep)?;
            let mut t = w.file("sweep.csv")?;
            write_sweep_table(&mut t, &rows)?;
            t.flush()?;
            for (i, r) in rows.iter().enumerate() {
                let mut f = w.file(&format!("rows/row_{i:02}_oracle.csv"))?;
                write_oracle_table(&mut f, &r.samples)?;
                f.flush()?;
                let row_manifest = json!({
                    "mass_ratio": r.ratio,
                    "sign": r.sign,
                    "oracle_sign": r.oracle_sign,
                    "slope": r.slope,
                    "event_time": r.event_time,
                    "window_end": r.window_end,
                    "max_rel_dev": r.max_rel_dev,
                    "mass": sweep.params_for(r.ratio).mass,
                    "mu": sweep.mu,
                    "nl_cutoff": sweep.params_for(r.ratio).nl_cutoff,
                    "reports": r.reports,
                    "valid": r.valid,
                    "error": r.error,
                });
                let text = serde_json::to_string_pretty(&row_manifest)?;
                w.bytes(&format!("rows/row_{i:02}.json"), text.as_bytes())?;
                w.reports(r.reports.clone());
                if r.error.is_some() {
                    w.manifest.valid = false;
                }
            }
            w.manifest.summary = json!(rows
                .iter()
                .map(|r| json!({"mass_ratio": r.ratio, "sign": r.sign, "oracle_sign": r.oracle_sign}))
                .collect::<Vec<_>>());
        }
        Scenario::Interference => {
            let cfg = spec.slit_config()?;
            let run = experiments::run_interference(&cfg, spec.mass_ratio)?;
            let control = experiments::run_interference(&cfg, 0.0)?;
            let analytic = experiments::analytic_linear_fringes(&cfg)?;
            let mut f = w.file("fringes.csv")?;
            writeln!(f, "x,density,control_density,analytic_density")?;
            for i in 0..run.x.len() {
                writeln!(
                    f,
                    "{:.16e},{:.16e},{:.16e},{:.16e}",
                    run.x[i], run.density[i], control.density[i], analytic.density[i]
                )?;
            }
            f.flush()?;
            w.reports(run.reports.clone());
            w.manifest.summary = json!({
                "mass_ratio": spec.mass_ratio,
                "visibility": run.visibility,
                "envelope_width": run.envelope_width,
                "control_visibility": control.visibility,
                "control_envelope_width": control.envelope_width,
                "analytic_visibility": analytic.visibility,
            });
        }
        Scenario::Pointer => {
            let cfg = spec.pointer_config()?;
            let rec = experiments::run_pointer_collapse(&cfg)?;
            w.trajectory(&rec.trajectory, spec.mass_ratio, opts.snapshots)?;
            let mut f = w.file("wells.csv")?;
            writeln!(f, "time,left,right,norm")?;
            for s in &rec.wells {
                writeln!(f, "{:.16e},{:.16e},{:.16e},{:.16e}", s.time, s.left, s.right, s.norm)?;
            }
            f.flush()?;
            w.reports(rec.reports);
            w.manifest.summary = last_summary(rec.trajectory.last());
        }
        Scenario::Branch => {
            let cfg = spec.branch_config()?;
            let rec = experiments::run_branch_correlation(&cfg)?;
            w.trajectory(&rec.trajectory, spec.mass_ratio, opts.snapshots)?;
            let mut f = w.file("branches.csv")?;
            writeln!(f, "time,mass_first,mass_second,delta_phi")?;
            for s in &rec.series {
                writeln!(
                    f,
                    "{:.16e},{:.16e},{:.16e},{:.16e}",
                    s.time, s.mass_first, s.mass_second, s.delta_phi
                )?;
            }
            f.flush()?;
            w.reports(rec.reports.clone());
            w.manifest.summary = json!({
                "max_phase_error": rec.max_phase_error(cfg.delta),
                "t_end": rec.trajectory.last().time(),
            });
        }
    }
    let text = w.manifest.to_json()?;
    fs::write(opts.out_dir.join("manifest.json"), text)?;
    Ok(w.manifest)
}

/// Instantaneous verify bundle for a single state.
pub fn verify_state(wf: &crate::wavefield::WaveField, params: &PhysParams) -> Result<Vec<CheckReport>> {
    Ok(vec![
        verify::check_nonsignaling(wf, params),
        verify::check_current_linearity(wf, params)?,
    ])
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub points: usize,
    pub steps: usize,
    pub threads: usize,
    pub steps_per_sec: f64,
    /// Mean wall time per call, in microseconds.
    pub fft_round_trip_us: f64,
    pub nonlinear_rate_us: f64,
    pub step_us: f64,
}

/// Times `steps` propagator steps and the two dominant kernels.
pub fn bench(spec: &RunSpec, steps: usize, threads: usize) -> Result<BenchReport> {
    grid::set_kernel_threads(threads);
    let grid = spec.make_grid()?;
    let mut psi = spec.initial_state()?.psi.into_vec();
    let steps = steps.max(1);

    let mut buf = psi.clone();
    let t = Instant::now();
    for _ in 0..steps {
        grid.forward(&mut buf);
        grid.inverse(&mut buf);
    }
    let fft = t.elapsed().as_secs_f64() / steps as f64;

    let mut kernel = RateKernel::new(&grid, &spec.params);
    let mut omega = vec![0.0; grid.len()];
    let t = Instant::now();
    for _ in 0..steps {
        kernel.eval(&psi, &mut omega);
    }
    let rate = t.elapsed().as_secs_f64() / steps as f64;

    let mut prop = Propagator::new(&grid, &spec.params, spec.stepper.scheme, spec.stepper.dt)?;
    let t = Instant::now();
    for _ in 0..steps {
        prop.step(&mut psi)?;
    }
    let step = t.elapsed().as_secs_f64() / steps as f64;
    Ok(BenchReport {
        points: grid.len(),
        steps,
        threads,
        steps_per_sec: 1.0 / step,
        fft_round_trip_us: fft * 1e6,
        nonlinear_rate_us: rate * 1e6,
        step_us: step * 1e6,
    })
}
