//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::f64::consts::{FRAC_PI_2, SQRT_2};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use nsnl_core::dynamics::{evolve, Scheme, StepperConfig, Trajectory};
use nsnl_core::experiments::{
    run_branch_correlation, run_interference, run_mass_sweep, run_pointer_collapse, BranchConfig,
    PointerConfig, SlitConfig, SweepSpec,
};
use nsnl_core::io::{read_snapshot, write_snapshot};
use nsnl_core::verify::{check_nonsignaling, check_separability};
use nsnl_core::{gaussian_packet, make_grid, ComplexField, PhysParams, WaveField};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn quiet(scheme: Scheme, dt: f64) -> StepperConfig {
    StepperConfig {
        snapshot_every: usize::MAX,
        ..StepperConfig::new(scheme, dt)
    }
}

fn final_state(wf: &WaveField, t: f64, stepper: &StepperConfig, p: &PhysParams) -> WaveField {
    evolve(wf, t, stepper, p).expect("run completes").last().state.clone()
}

fn max_nonsignaling(traj: &Trajectory) -> f64 {
    traj.snapshots.iter().map(|s| s.nonsignaling).fold(0.0, f64::max)
}

/// Least-squares slope of log2(err) against log2(dt).
fn observed_order(dts: &[f64], errs: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = dts.iter().zip(errs).map(|(d, e)| (d.log2(), e.log2())).collect();
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let num: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    num / den
}

fn random_smooth_state(rng: &mut StdRng, dims: usize) -> WaveField {
    let grid = if dims == 1 {
        make_grid(&[(128, 32.0)]).unwrap()
    } else {
        make_grid(&[(64, 32.0), (64, 32.0)]).unwrap()
    };
    let terms: Vec<(Complex64, Vec<f64>, f64, Vec<f64>)> = (0..rng.gen_range(1..=4))
        .map(|_| {
            (
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                (0..dims).map(|_| rng.gen_range(-4.0..4.0)).collect(),
                rng.gen_range(0.7..1.5),
                (0..dims).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            )
        })
        .collect();
    let psi = ComplexField::from_fn(&grid, |x| {
        terms
            .iter()
            .map(|(c, a, s, k)| {
                let r2: f64 = x.iter().zip(a).map(|(xi, ai)| (xi - ai).powi(2)).sum();
                let phase: f64 = x.iter().zip(k).map(|(xi, ki)| xi * ki).sum();
                c * Complex64::from_polar((-r2 / (4.0 * s * s)).exp(), phase)
            })
            .sum()
    });
    WaveField::new(psi).normalized().unwrap()
}

/// Residuals of every snapshot recorded by the other criteria.
#[derive(Default)]
struct Corpus {
    max_residual: f64,
    snapshots: usize,
}

impl Corpus {
    fn add(&mut self, traj: &Trajectory) {
        self.max_residual = self.max_residual.max(max_nonsignaling(traj));
        self.snapshots += traj.snapshots.len();
    }
}

fn nonsignaling(corpus: &Corpus) -> Outcome {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(20_24);
    let mut random_max = 0.0f64;
    for i in 0..100 {
        let wf = random_smooth_state(&mut rng, if i % 4 == 3 { 2 } else { 1 });
        let ratio = rng.gen_range(0.1..5.0);
        let params = PhysParams {
            eps_reg: if rng.gen_bool(0.5) { 1e-6 } else { 1e-10 },
            nl_cutoff: rng.gen_bool(0.5).then_some(4.0),
            ..PhysParams::with_ratio(ratio)
        };
        random_max = random_max.max(check_nonsignaling(&wf, &params).max_residual);
    }

    let mut own = Corpus::default();
    let g = make_grid(&[(128, 32.0)]).unwrap();
    let wf = gaussian_packet(&g, &[0.5], 1.0, &[1.0]).unwrap();
    for (scheme, ratio, cut) in [
        (Scheme::Strang, 0.5, None),
        (Scheme::Strang, 1.0, None),
        (Scheme::Strang, 2.0, Some(4.5)),
        (Scheme::Rk4, 0.5, None),
        (Scheme::Rk4, 2.0, Some(4.5)),
    ] {
        let p = PhysParams {
            nl_cutoff: cut,
            ..PhysParams::with_ratio(ratio)
        };
        own.add(&evolve(&wf, 0.5, &StepperConfig::new(scheme, 1e-3).every(25), &p).unwrap());
    }
    let pedestal = ComplexField::from_fn(&g, |x| {
        let q = 2.0 * std::f64::consts::PI * x[0] / 32.0;
        Complex64::new(1.0 + 0.3 * q.cos(), 0.2 * (2.0 * q).sin())
    });
    let pedestal = WaveField::new(pedestal).normalized().unwrap();
    own.add(&evolve(&pedestal, 0.5, &StepperConfig::new(Scheme::Madelung, 1e-3).every(25), &PhysParams::with_ratio(2.0)).unwrap());
    let elapsed = start.elapsed();

    let worst = random_max.max(own.max_residual).max(corpus.max_residual);
    outcome(
        worst <= 1e-12 && elapsed < Duration::from_secs(10),
        format!(
            "max residual {worst:.2e} (100 random states {random_max:.2e}; {} scheme snapshots {:.2e}; \
             {} experiment snapshots {:.2e}) in {:.1}s",
            own.snapshots,
            own.max_residual,
            corpus.snapshots,
            corpus.max_residual,
            elapsed.as_secs_f64()
        ),
    )
}

fn modulus_preservation(corpus: &mut Corpus) -> Outcome {
    let start = Instant::now();
    let g = make_grid(&[(256, 32.0)]).unwrap();
    let wf = gaussian_packet(&g, &[0.0], 1.0, &[0.0]).unwrap();
    let p = PhysParams {
        nl_cutoff: Some(4.5),
        ..PhysParams::with_ratio(2.0)
    };
    let traj = evolve(&wf, 2.5, &StepperConfig::new(Scheme::Strang, 2.5e-4).every(1000), &p).unwrap();
    let elapsed = start.elapsed();
    corpus.add(&traj);
    outcome(
        traj.steps == 10_000
            && traj.max_modulus_change <= 1e-13
            && traj.max_norm_drift <= 1e-9
            && elapsed < Duration::from_secs(60),
        format!(
            "{} steps, max per-step modulus change {:.2e}, norm drift {:.2e}, {:.1}s",
            traj.steps,
            traj.max_modulus_change,
            traj.max_norm_drift,
            elapsed.as_secs_f64()
        ),
    )
}

fn fixed_point() -> Outcome {
    let g = make_grid(&[(256, 32.0)]).unwrap();
    let wf = gaussian_packet(&g, &[0.0], 1.0, &[0.0]).unwrap();
    let p = PhysParams {
        eps_reg: 1e-11,
        ..PhysParams::with_ratio(1.0)
    };
    let end = final_state(&wf, 5.0, &quiet(Scheme::Strang, 2.5e-4), &p);
    let d = end.psi.max_abs_diff(&wf.psi);
    outcome(d <= 1e-8, format!("||psi(5) - psi(0)||_inf = {d:.2e} (eps_reg 1e-11, dt 2.5e-4)"))
}

fn linear_limit() -> Outcome {
    let g = make_grid(&[(256, 32.0)]).unwrap();
    let wf = gaussian_packet(&g, &[0.0], 1.0, &[0.0]).unwrap();
    let traj = evolve(&wf, 2.0, &quiet(Scheme::Strang, 1e-3), &PhysParams::with_ratio(0.0)).unwrap();
    let w = traj.last().obs.width[0];
    let rel = (w - SQRT_2).abs() / SQRT_2;
    outcome(rel <= 2e-3, format!("width(2) = {w:.10}, relative deviation from sqrt(2) {rel:.2e}"))
}

fn sweep_criteria(corpus: &mut Corpus) -> (Outcome, Outcome) {
    let start = Instant::now();
    let rows = run_mass_sweep(&SweepSpec::default()).unwrap();
    let elapsed = start.elapsed();
    let signs: Vec<i8> = rows.iter().map(|r| r.sign).collect();
    let agree = rows.iter().all(|r| r.sign == r.oracle_sign && r.error.is_none());
    for r in &rows {
        if let Some(ns) = r.reports.iter().find(|c| c.name == "nonsignaling") {
            corpus.max_residual = corpus.max_residual.max(ns.max_residual);
            corpus.snapshots += r.samples.len();
        }
    }
    let fmt_sign = |s: i8| match s {
        1 => "+",
        -1 => "-",
        _ => "0",
    };
    let collapse = outcome(
        signs == [1, 1, 0, -1, -1] && agree && elapsed < Duration::from_secs(300),
        format!(
            "M/mu {:?}: signs [{}], oracle [{}], slopes [{}], {:.1}s",
            rows.iter().map(|r| r.ratio).collect::<Vec<_>>(),
            signs.iter().map(|&s| fmt_sign(s)).collect::<Vec<_>>().join(","),
            rows.iter().map(|r| fmt_sign(r.oracle_sign)).collect::<Vec<_>>().join(","),
            rows.iter().map(|r| format!("{:.2e}", r.slope)).collect::<Vec<_>>().join(", "),
            elapsed.as_secs_f64()
        ),
    );
    let worst = rows.iter().map(|r| r.max_rel_dev).fold(0.0, f64::max);
    let oracle = outcome(
        rows.iter().all(|r| r.max_rel_dev <= 5e-3),
        format!(
            "max |sigma_pde - sigma_ode|/sigma_ode = {worst:.2e}; per row [{}] over windows ending at [{}]",
            rows.iter().map(|r| format!("{:.1e}", r.max_rel_dev)).collect::<Vec<_>>().join(", "),
            rows.iter().map(|r| format!("{:.3}", r.window_end)).collect::<Vec<_>>().join(", ")
        ),
    );
    (collapse, oracle)
}

fn separability() -> Outcome {
    let g = make_grid(&[(128, 32.0)]).unwrap();
    let a = gaussian_packet(&g, &[0.0], 1.0, &[0.5]).unwrap();
    let b = gaussian_packet(&g, &[1.0], 1.2, &[0.0]).unwrap();
    let p = PhysParams {
        eps_reg: 1e-12,
        nl_cutoff: Some(3.0),
        ..PhysParams::with_ratio(2.0)
    };
    let r = check_separability(&a, &b, &p, 0.5, &StepperConfig::new(Scheme::Strang, 1e-3)).unwrap();
    outcome(r.max_residual <= 1e-8, format!("L2 residual {:.2e} at t = 0.5 on 128x128 ({})", r.max_residual, r.context))
}

fn phase_difference(corpus: &mut Corpus) -> Outcome {
    let start = Instant::now();
    let cfg = BranchConfig::default();
    let rec = run_branch_correlation(&cfg).unwrap();
    corpus.add(&rec.trajectory);
    let err = rec.max_phase_error(FRAC_PI_2);
    outcome(
        err <= 1e-3 && rec.valid,
        format!(
            "max |dphi - pi/2| = {err:.2e} over t in [0, {}] ({} snapshots, 128x128, {:.1}s)",
            rec.trajectory.last().time(),
            rec.series.len(),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn convergence() -> Outcome {
    let g = make_grid(&[(128, 32.0)]).unwrap();
    let wf = gaussian_packet(&g, &[0.0], 1.0, &[1.0]).unwrap();
    let p = PhysParams {
        nl_cutoff: Some(4.5),
        ..PhysParams::with_ratio(2.0)
    };
    let dt0 = 4e-3;
    let reference = final_state(&wf, 1.0, &quiet(Scheme::Strang, dt0 / 64.0), &p);
    let dts: Vec<f64> = (0..4).map(|j| dt0 / 2f64.powi(j)).collect();
    let errs: Vec<f64> = dts
        .iter()
        .map(|&dt| final_state(&wf, 1.0, &quiet(Scheme::Strang, dt), &p).psi.l2_distance(&reference.psi))
        .collect();
    let strang = observed_order(&dts, &errs);

    let g = make_grid(&[(64, 32.0)]).unwrap();
    let fast = gaussian_packet(&g, &[0.0], 2.0, &[4.0]).unwrap();
    let p = PhysParams::with_ratio(0.5);
    let rk_dts = [0.016, 0.008, 0.004, 0.002];
    let drifts: Vec<f64> = rk_dts
        .iter()
        .map(|&dt| {
            let st = StepperConfig {
                norm_drift_abort: 1e-2,
                ..quiet(Scheme::Rk4, dt)
            };
            let t = evolve(&fast, 1.0, &st, &p).unwrap();
            (t.last().obs.norm / t.snapshots[0].obs.norm - 1.0).abs()
        })
        .collect();
    let rk4 = observed_order(&rk_dts, &drifts);
    outcome(
        (strang - 2.0).abs() <= 0.2 && rk4 >= 4.5,
        format!(
            "strang order {strang:.3} (errors {}), rk4 norm-drift order {rk4:.3} (drifts {})",
            errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(", "),
            drifts.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn cross_integrator() -> Outcome {
    let g = make_grid(&[(256, 32.0)]).unwrap();
    let wf = gaussian_packet(&g, &[0.0], 1.0, &[0.0]).unwrap();
    let p = PhysParams {
        nl_cutoff: Some(4.5),
        ..PhysParams::with_ratio(2.0)
    };
    let a = final_state(&wf, 1.0, &quiet(Scheme::Strang, 1e-3), &p);
    let b = final_state(&wf, 1.0, &quiet(Scheme::Rk4, 1e-3), &p);
    let d = a.psi.l2_distance(&b.psi);
    outcome(d <= 1e-6, format!("||strang - rk4||_2 = {d:.2e} at t = 1 (dt 1e-3, M = 2 mu)"))
}

fn parity(corpus: &mut Corpus) -> Outcome {
    let cfg = PointerConfig {
        stepper: PointerConfig::default().stepper.every(50),
        ..Default::default()
    };
    let rec = run_pointer_collapse(&cfg).unwrap();
    corpus.add(&rec.trajectory);
    let split = rec.wells.iter().map(|w| (w.left - w.right).abs() / 2.0).fold(0.0, f64::max);
    let worst = rec
        .wells
        .iter()
        .map(|w| (w.left / (w.left + w.right) - 0.5).abs())
        .fold(0.0, f64::max);
    outcome(
        worst <= 1e-8,
        format!(
            "max |left/(left+right) - 0.5| = {worst:.2e} (|L - R|/2 = {split:.2e}) over {} snapshots to t = {}",
            rec.wells.len(),
            cfg.t_final
        ),
    )
}

fn interference() -> Outcome {
    let cfg = SlitConfig::default();
    let control = run_interference(&cfg, 0.0).unwrap();
    let heavy = run_interference(&cfg, 2.0).unwrap();
    let light = run_interference(&cfg, 0.005).unwrap();
    let below = heavy.visibility < control.visibility && heavy.envelope_width < control.envelope_width;
    let light_rel = (light.visibility - control.visibility).abs() / control.visibility;
    outcome(
        below && light_rel <= 1e-2,
        format!(
            "M/mu=2: V {:.7} vs control {:.7} ({}), width {:.4} vs {:.4} ({}); M/mu=0.005: V rel. diff {light_rel:.1e}",
            heavy.visibility,
            control.visibility,
            if heavy.visibility < control.visibility { "below" } else { "NOT below" },
            heavy.envelope_width,
            control.envelope_width,
            if heavy.envelope_width < control.envelope_width { "below" } else { "NOT below" },
        ),
    )
}

fn format_round_trip() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7);
    let mut bitwise = true;
    for i in 0..20 {
        let mut wf = random_smooth_state(&mut rng, 1 + i % 2);
        wf.time = rng.gen_range(0.0..10.0);
        let ratio = rng.gen_range(0.0..5.0);
        let bytes = write_snapshot(&wf, ratio);
        let back = read_snapshot(&bytes).unwrap();
        bitwise &= back.mass_ratio.to_bits() == ratio.to_bits()
            && back.state.time.to_bits() == wf.time.to_bits()
            && back
                .state
                .psi
                .as_slice()
                .iter()
                .zip(wf.psi.as_slice())
                .all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits());
    }

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "scenario = mass_point\ngrid.n = 256\ngrid.length = 32\nparams.mass_ratio = 2\n\
         params.nl_cutoff = 4.5\nstepper.dt = 1e-3\nstepper.t_final = 1\nstepper.snapshot_every = 100\n",
    )
    .unwrap();
    let bin = env!("CARGO_BIN_EXE_nsnl");
    let (first, second) = (dir.path().join("first"), dir.path().join("second"));
    let run = Command::new(bin)
        .env("NSNL_THREADS", "1")
        .args(["--quiet", "--snapshots", "5", "--out"])
        .arg(&first)
        .arg("run")
        .arg(&cfg)
        .status()
        .unwrap();
    let again = Command::new(bin)
        .env("NSNL_THREADS", "1")
        .args(["--quiet", "--out"])
        .arg(&second)
        .arg("reproduce")
        .arg(first.join("manifest.json"))
        .status()
        .unwrap();
    let same = |name: &str| -> bool {
        let read = |d: &Path| std::fs::read(d.join(name)).ok();
        matches!((read(&first), read(&second)), (Some(a), Some(b)) if a == b)
    };
    let reproduced = run.success() && again.success() && same("final.nsnl") && same("timeseries.csv");
    outcome(
        bitwise && reproduced,
        format!(
            "20 random snapshots bitwise {}; manifest re-run with NSNL_THREADS=1 {}",
            if bitwise { "identical" } else { "DIFFERENT" },
            if reproduced { "bit-for-bit identical" } else { "DIFFERENT" }
        ),
    )
}

fn main() {
    let total = Instant::now();
    let mut corpus = Corpus::default();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let (collapse, oracle) = sweep_criteria(&mut corpus);
    results.push(("discrete modulus preservation", modulus_preservation(&mut corpus)));
    results.push(("fixed point M = mu", fixed_point()));
    results.push(("linear limit width(2) = sqrt(2)", linear_limit()));
    results.push(("collapse transition signs", collapse));
    results.push(("oracle equivalence 0.5%", oracle));
    results.push(("separability 2D vs 1D x 1D", separability()));
    results.push(("phase-difference preservation", phase_difference(&mut corpus)));
    results.push(("convergence orders", convergence()));
    results.push(("cross-integrator strang vs rk4", cross_integrator()));
    results.push(("parity symmetry", parity(&mut corpus)));
    results.push(("interference direction", interference()));
    results.push(("format round trip and reproducibility", format_round_trip()));
    results.insert(0, ("non-signaling identity", nonsignaling(&corpus)));

    println!();
    for (i, (name, o)) in results.iter().enumerate() {
        println!("[{}] A{:02} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!(
        "\nacceptance: {} passed, {failed} failed ({:.1}s)",
        results.len() - failed,
        total.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
