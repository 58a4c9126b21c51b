//! Flat `section.key = value` run configuration.
//!
//! Lines are trimmed; blank lines and text after `#` are ignored. Lists are
//! comma separated. Every key has a default except `grid.n`, `grid.length`
//! and `scenario`. [`RunSpec::to_config_text`] writes every key back out, so
//! the echo alone rebuilds an identical spec.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Scheme, StepperConfig};
use crate::error::{Error, Result};
use crate::experiments::{BranchConfig, PointerConfig, SlitConfig, SweepSpec};
use crate::grid::{make_grid, Grid};
use crate::wavefield::{gaussian_packet, PhysParams, PotentialSpec, WaveField, DEFAULT_EPS_REG};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// One free or confined Gaussian at a single mass ratio.
    MassPoint,
    MassSweep,
    Interference,
    Pointer,
    Branch,
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "mass_point" => Scenario::MassPoint,
            "mass_sweep" => Scenario::MassSweep,
            "interference" => Scenario::Interference,
            "pointer" => Scenario::Pointer,
            "branch" => Scenario::Branch,
            _ => return Err(format!("unknown scenario `{s}`")),
        })
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scenario::MassPoint => "mass_point",
            Scenario::MassSweep => "mass_sweep",
            Scenario::Interference => "interference",
            Scenario::Pointer => "pointer",
            Scenario::Branch => "branch",
        })
    }
}

/// Gaussian initial state; per-axis centre and carrier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    pub x0: Vec<f64>,
    pub sigma: f64,
    pub k0: Vec<f64>,
}

/// Scenario-specific keys with their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioKeys {
    pub sweep_ratios: Vec<f64>,
    pub sweep_t_max: f64,
    pub sweep_sample_interval: f64,
    pub slit_count: usize,
    pub slit_width: f64,
    pub slit_separation: f64,
    pub slit_t_screen: f64,
    pub slit_k0: f64,
    pub branch_offset: f64,
    pub branch_delta: f64,
    pub branch_sigma1: Option<f64>,
}

impl Default for ScenarioKeys {
    fn default() -> Self {
        let sweep = SweepSpec::default();
        let slit = SlitConfig::default();
        let branch = BranchConfig::default();
        ScenarioKeys {
            sweep_ratios: sweep.ratios,
            sweep_t_max: sweep.t_max,
            sweep_sample_interval: sweep.sample_interval,
            slit_count: slit.slits,
            slit_width: slit.width,
            slit_separation: slit.separation,
            slit_t_screen: slit.t_screen,
            slit_k0: slit.k0,
            branch_offset: branch.offset,
            branch_delta: branch.delta,
            branch_sigma1: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub scenario: Scenario,
    pub grid: Vec<(usize, f64)>,
    pub state: StateSpec,
    /// M/μ as configured; zero selects the linear limit.
    pub mass_ratio: f64,
    pub params: PhysParams,
    pub stepper: StepperConfig,
    pub t_final: f64,
    pub keys: ScenarioKeys,
    pub output_dir: Option<PathBuf>,
    /// Reserved; the dynamics is deterministic.
    pub seed: u64,
}

const KEYS: &[&str] = &[
    "scenario",
    "seed",
    "grid.dims",
    "grid.n",
    "grid.length",
    "grid.n2",
    "grid.length2",
    "params.mass_ratio",
    "params.mass_kg",
    "params.mu",
    "params.hbar",
    "params.eps_reg",
    "params.nl_cutoff",
    "potential.kind",
    "potential.k",
    "potential.a",
    "potential.b",
    "state.kind",
    "state.x0",
    "state.sigma",
    "state.k0",
    "stepper.scheme",
    "stepper.dt",
    "stepper.t_final",
    "stepper.snapshot_every",
    "stepper.max_steps",
    "stepper.norm_drift_abort",
    "sweep.ratios",
    "sweep.t_max",
    "sweep.sample_interval",
    "slit.count",
    "slit.width",
    "slit.separation",
    "slit.t_screen",
    "slit.k0",
    "branch.offset",
    "branch.delta",
    "branch.sigma1",
    "output.dir",
];

struct Table {
    values: BTreeMap<String, (usize, String)>,
}

impl Table {
    fn parse(text: &str) -> Result<Table> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: "expected `key = value`".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "empty key or value".into(),
                });
            }
            if !KEYS.contains(&key) {
                return Err(Error::UnknownKey {
                    line: line_no,
                    key: key.into(),
                });
            }
            if values.insert(key.to_string(), (line_no, value.to_string())).is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(Table { values })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|_| Error::Parse {
                line: *line,
                msg: format!("cannot parse `{v}` for `{key}`"),
            }),
        }
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::Validation(format!("missing required key `{key}`")))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line: *line,
                        msg: format!("cannot parse list entry `{}` for `{key}`", s.trim()),
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }
}

/// Parses and fully validates a configuration.
pub fn load_config(text: &str) -> Result<RunSpec> {
    let t = Table::parse(text)?;
    let scenario: Scenario = match t.values.get("scenario") {
        None => return Err(Error::Validation("missing required key `scenario`".into())),
        Some((line, v)) => v.parse().map_err(|msg| Error::Parse { line: *line, msg })?,
    };
    let dims: usize = t.or("grid.dims", if scenario == Scenario::Branch { 2 } else { 1 })?;
    if !(1..=2).contains(&dims) {
        return Err(Error::UnsupportedDimension(dims));
    }
    let n: usize = t.required("grid.n")?;
    let length: f64 = t.required("grid.length")?;
    let mut grid = vec![(n, length)];
    if dims == 2 {
        grid.push((t.or("grid.n2", n)?, t.or("grid.length2", length)?));
    } else if t.values.contains_key("grid.n2") || t.values.contains_key("grid.length2") {
        return Err(Error::Validation("grid.n2/grid.length2 need grid.dims = 2".into()));
    }

    let mu: f64 = t.or("params.mu", 1.0)?;
    let mass_ratio = match (t.get::<f64>("params.mass_ratio")?, t.get::<f64>("params.mass_kg")?) {
        (Some(_), Some(_)) => {
            return Err(Error::Validation("give params.mass_ratio or params.mass_kg, not both".into()))
        }
        (Some(r), None) => r,
        (None, Some(kg)) => crate::wavefield::mass_ratio(kg)?,
        (None, None) => 1.0,
    };
    if !(mass_ratio >= 0.0) || !mass_ratio.is_finite() {
        return Err(Error::Validation(format!("params.mass_ratio must be >= 0, got {mass_ratio}")));
    }
    let cutoff: f64 = t.or("params.nl_cutoff", 0.0)?;
    let potential = match t.or("potential.kind", "none".to_string())?.as_str() {
        "none" => PotentialSpec::None,
        "harmonic" => PotentialSpec::Harmonic {
            k: t.or("potential.k", 1.0)?,
        },
        "double_well" => PotentialSpec::DoubleWell {
            a: t.or("potential.a", PointerConfig::default().a)?,
            b: t.or("potential.b", PointerConfig::default().b)?,
        },
        other => return Err(Error::Validation(format!("unknown potential.kind `{other}`"))),
    };
    let params = PhysParams {
        mass: if mass_ratio == 0.0 { mu } else { mass_ratio * mu },
        mu: if mass_ratio == 0.0 { f64::INFINITY } else { mu },
        hbar: t.or("params.hbar", 1.0)?,
        potential,
        eps_reg: t.or("params.eps_reg", DEFAULT_EPS_REG)?,
        nl_cutoff: (cutoff > 0.0).then_some(cutoff),
    };
    params
        .validate()
        .map_err(|e| Error::Validation(e.to_string()))?;

    if t.or("state.kind", "gaussian".to_string())? != "gaussian" {
        return Err(Error::Validation("state.kind must be `gaussian`".into()));
    }
    let axis_list = |key: &str| -> Result<Vec<f64>> {
        let v = t.list(key)?.unwrap_or_else(|| vec![0.0; dims]);
        if v.len() != dims {
            return Err(Error::Validation(format!("`{key}` needs {dims} entries")));
        }
        Ok(v)
    };
    let state = StateSpec {
        x0: axis_list("state.x0")?,
        sigma: t.or("state.sigma", 1.0)?,
        k0: axis_list("state.k0")?,
    };

    let d = StepperConfig::default();
    let scheme: Scheme = match t.values.get("stepper.scheme") {
        None => d.scheme,
        Some((line, v)) => v.parse().map_err(|_| Error::Parse {
            line: *line,
            msg: format!("unknown scheme `{v}`"),
        })?,
    };
    let stepper = StepperConfig {
        scheme,
        dt: t.or("stepper.dt", d.dt)?,
        snapshot_every: t.or("stepper.snapshot_every", d.snapshot_every)?,
        max_steps: t.or("stepper.max_steps", d.max_steps)?,
        norm_drift_abort: t.or("stepper.norm_drift_abort", d.norm_drift_abort)?,
    };
    let defaults = ScenarioKeys::default();
    let keys = ScenarioKeys {
        sweep_ratios: t.list("sweep.ratios")?.unwrap_or(defaults.sweep_ratios),
        sweep_t_max: t.or("sweep.t_max", defaults.sweep_t_max)?,
        sweep_sample_interval: t.or("sweep.sample_interval", defaults.sweep_sample_interval)?,
        slit_count: t.or("slit.count", defaults.slit_count)?,
        slit_width: t.or("slit.width", defaults.slit_width)?,
        slit_separation: t.or("slit.separation", defaults.slit_separation)?,
        slit_t_screen: t.or("slit.t_screen", defaults.slit_t_screen)?,
        slit_k0: t.or("slit.k0", defaults.slit_k0)?,
        branch_offset: t.or("branch.offset", defaults.branch_offset)?,
        branch_delta: t.or("branch.delta", defaults.branch_delta)?,
        branch_sigma1: t.get("branch.sigma1")?,
    };
    let spec = RunSpec {
        scenario,
        grid,
        state,
        mass_ratio,
        params,
        stepper,
        t_final: t.or("stepper.t_final", 1.0)?,
        keys,
        output_dir: t.get::<String>("output.dir")?.map(PathBuf::from),
        seed: t.or("seed", 0)?,
    };
    spec.validate()?;
    Ok(spec)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

impl RunSpec {
    pub fn make_grid(&self) -> Result<Grid> {
        make_grid(&self.grid)
    }

    pub fn initial_state(&self) -> Result<WaveField> {
        gaussian_packet(&self.make_grid()?, &self.state.x0, self.state.sigma, &self.state.k0)
    }

    /// Largest guard-safe dt for the net kinetic rate at the band corner,
    /// `ħ·k_max²·|1/M − 1/μ|·dt/2 < 0.5`.
    pub fn guard_dt_bound(params: &PhysParams, grid: &Grid) -> f64 {
        let rate = params.band_edge_rate(grid);
        if rate > 0.0 {
            0.5 / rate
        } else {
            f64::INFINITY
        }
    }

    fn check_guard(&self, params: &PhysParams, grid: &Grid, dt: f64) -> Result<()> {
        let bound = Self::guard_dt_bound(params, grid);
        if dt >= bound {
            return Err(Error::Validation(format!(
                "stepper.dt = {dt} violates the stability guard ħ·k_max²·|1/M − 1/μ|·dt/2 < 0.5 \
                 (dt must be below {bound:.6e} for this grid and mass ratio)"
            )));
        }
        Ok(())
    }

    /// Cross-field checks: the state fits the grid, the stepper passes the
    /// guard and the scenario's own configuration is valid.
    pub fn validate(&self) -> Result<()> {
        let v = |e: Error| Error::Validation(e.to_string());
        if !(self.stepper.dt > 0.0) || !(self.t_final > 0.0) {
            return Err(Error::Validation("stepper.dt and stepper.t_final must be positive".into()));
        }
        if self.stepper.snapshot_every == 0 {
            return Err(Error::Validation("stepper.snapshot_every must be at least 1".into()));
        }
        let grid = self.make_grid().map_err(v)?;
        self.params.potential.validate(&grid).map_err(v)?;
        match self.scenario {
            Scenario::MassPoint => {
                self.initial_state().map_err(v)?;
                self.check_guard(&self.params, &grid, self.stepper.dt)?;
            }
            Scenario::MassSweep => {
                let s = self.sweep_spec()?;
                s.validate()?;
                let ratios = s.ratios.clone();
                for r in ratios {
                    self.check_guard(&s.params_for(r), &grid, s.stepper.dt)?;
                }
                self.initial_state().map_err(v)?;
            }
            Scenario::Interference => {
                let c = self.slit_config()?;
                c.initial_state().map_err(v)?;
                self.check_guard(&c.params_for(self.mass_ratio), &grid, self.stepper.dt)?;
            }
            Scenario::Pointer => {
                let c = self.pointer_config()?;
                c.initial_state().map_err(v)?;
                self.check_guard(&c.params(), &grid, self.stepper.dt)?;
            }
            Scenario::Branch => {
                let c = self.branch_config()?;
                c.initial_state().map_err(v)?;
                self.check_guard(&c.params(), &grid, self.stepper.dt)?;
            }
        }
        Ok(())
    }

    fn require_1d(&self) -> Result<(usize, f64)> {
        if self.grid.len() != 1 {
            return Err(Error::Validation(format!("scenario {} runs on a 1D grid", self.scenario)));
        }
        Ok(self.grid[0])
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let (n, length) = self.require_1d()?;
        let mut ratios = self.keys.sweep_ratios.clone();
        ratios.sort_by(f64::total_cmp);
        Ok(SweepSpec {
            ratios,
            n,
            length,
            sigma0: self.state.sigma,
            mu: self.params.mu,
            hbar: self.params.hbar,
            eps_reg: self.params.eps_reg,
            heavy_cutoff: self.params.nl_cutoff,
            stepper: self.stepper.clone(),
            t_max: self.keys.sweep_t_max,
            sample_interval: self.keys.sweep_sample_interval,
            ..SweepSpec::default()
        })
    }

    pub fn slit_config(&self) -> Result<SlitConfig> {
        let (n, length) = self.require_1d()?;
        Ok(SlitConfig {
            slits: self.keys.slit_count,
            width: self.keys.slit_width,
            separation: self.keys.slit_separation,
            t_screen: self.keys.slit_t_screen,
            k0: self.keys.slit_k0,
            n,
            length,
            mass: self.params.mass,
            hbar: self.params.hbar,
            eps_reg: self.params.eps_reg,
            nl_cutoff: self.params.nl_cutoff,
            stepper: self.stepper.clone(),
        })
    }

    pub fn pointer_config(&self) -> Result<PointerConfig> {
        let (n, length) = self.require_1d()?;
        let (a, b) = match self.params.potential {
            PotentialSpec::DoubleWell { a, b } => (a, b),
            _ => return Err(Error::Validation("pointer scenario needs potential.kind = double_well".into())),
        };
        if self.params.mu != 1.0 || self.params.hbar != 1.0 {
            return Err(Error::Validation("pointer scenario uses mu = 1 and hbar = 1".into()));
        }
        Ok(PointerConfig {
            n,
            length,
            a,
            b,
            sigma0: self.state.sigma,
            x0: self.state.x0[0],
            ratio: self.mass_ratio,
            eps_reg: self.params.eps_reg,
            nl_cutoff: self.params.nl_cutoff,
            t_final: self.t_final,
            stepper: self.stepper.clone(),
        })
    }

    pub fn branch_config(&self) -> Result<BranchConfig> {
        if self.grid.len() != 2 || self.grid[0] != self.grid[1] {
            return Err(Error::Validation("branch scenario needs a square 2D grid".into()));
        }
        if self.params.mu != 1.0 || self.params.hbar != 1.0 || !self.params.potential.is_none() {
            return Err(Error::Validation("branch scenario uses mu = 1, hbar = 1 and no potential".into()));
        }
        let (n, length) = self.grid[0];
        Ok(BranchConfig {
            n,
            length,
            offset: self.keys.branch_offset,
            sigma0: self.state.sigma,
            sigma1: self.keys.branch_sigma1.unwrap_or(self.state.sigma),
            delta: self.keys.branch_delta,
            ratio: self.mass_ratio,
            eps_reg: self.params.eps_reg,
            nl_cutoff: self.params.nl_cutoff,
            t_final: self.t_final,
            stepper: self.stepper.clone(),
        })
    }

    /// Every key with its materialized value. Floats use the shortest
    /// representation that parses back to the same bits.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("scenario", self.scenario.to_string());
        put("seed", self.seed.to_string());
        put("grid.dims", self.grid.len().to_string());
        put("grid.n", self.grid[0].0.to_string());
        put("grid.length", format!("{:?}", self.grid[0].1));
        if let Some(&(n2, l2)) = self.grid.get(1) {
            put("grid.n2", n2.to_string());
            put("grid.length2", format!("{l2:?}"));
        }
        put("params.mass_ratio", format!("{:?}", self.mass_ratio));
        let mu = if self.params.is_linear() { self.params.mass } else { self.params.mu };
        put("params.mu", format!("{mu:?}"));
        put("params.hbar", format!("{:?}", self.params.hbar));
        put("params.eps_reg", format!("{:?}", self.params.eps_reg));
        put("params.nl_cutoff", format!("{:?}", self.params.nl_cutoff.unwrap_or(0.0)));
        match &self.params.potential {
            PotentialSpec::None | PotentialSpec::Tabulated(_) => put("potential.kind", "none".into()),
            PotentialSpec::Harmonic { k } => {
                put("potential.kind", "harmonic".into());
                put("potential.k", format!("{k:?}"));
            }
            PotentialSpec::DoubleWell { a, b } => {
                put("potential.kind", "double_well".into());
                put("potential.a", format!("{a:?}"));
                put("potential.b", format!("{b:?}"));
            }
        }
        put("state.kind", "gaussian".into());
        put("state.x0", join(&self.state.x0));
        put("state.sigma", format!("{:?}", self.state.sigma));
        put("state.k0", join(&self.state.k0));
        put("stepper.scheme", self.stepper.scheme.to_string());
        put("stepper.dt", format!("{:?}", self.stepper.dt));
        put("stepper.t_final", format!("{:?}", self.t_final));
        put("stepper.snapshot_every", self.stepper.snapshot_every.to_string());
        put("stepper.max_steps", self.stepper.max_steps.to_string());
        put("stepper.norm_drift_abort", format!("{:?}", self.stepper.norm_drift_abort));
        let k = &self.keys;
        put("sweep.ratios", join(&k.sweep_ratios));
        put("sweep.t_max", format!("{:?}", k.sweep_t_max));
        put("sweep.sample_interval", format!("{:?}", k.sweep_sample_interval));
        put("slit.count", k.slit_count.to_string());
        put("slit.width", format!("{:?}", k.slit_width));
        put("slit.separation", format!("{:?}", k.slit_separation));
        put("slit.t_screen", format!("{:?}", k.slit_t_screen));
        put("slit.k0", format!("{:?}", k.slit_k0));
        put("branch.offset", format!("{:?}", k.branch_offset));
        put("branch.delta", format!("{:?}", k.branch_delta));
        if let Some(s1) = k.branch_sigma1 {
            put("branch.sigma1", format!("{s1:?}"));
        }
        if let Some(dir) = &self.output_dir {
            put("output.dir", dir.display().to_string());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "grid.n = 256\ngrid.length = 32\nparams.mass_ratio = 2.0\nscenario = mass_point\n";

    #[test]
    fn minimal_config_materializes_defaults() {
        let spec = load_config(MINIMAL).unwrap();
        assert_eq!(spec.params.hbar, 1.0);
        assert_eq!(spec.params.eps_reg, 1e-6);
        assert_eq!(spec.stepper.scheme, Scheme::Strang);
        assert_eq!(spec.params.mass, 2.0);
        assert_eq!(spec.params.mu, 1.0);
        assert_eq!(spec.grid, vec![(256, 32.0)]);
    }

    #[test]
    fn negative_mass_ratio_is_rejected() {
        let text = MINIMAL.replace("2.0", "-1");
        assert!(matches!(load_config(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn oversized_dt_names_the_guard_bound() {
        let text = format!("{MINIMAL}stepper.dt = 0.01\n");
        match load_config(&text) {
            Err(Error::Validation(msg)) => {
                assert!(msg.contains("k_max"), "{msg}");
                // k_max = 8π, ħ·k_max²·(1/2)/2 ≈ 157.9, bound ≈ 3.17e-3
                assert!(msg.contains("3.16"), "{msg}");
            }
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_and_key_errors_carry_line_numbers() {
        match load_config("scenario = mass_point\ngrid.n 256\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match load_config("# comment\n\ngrid.colour = red\n") {
            Err(Error::UnknownKey { line, key }) => {
                assert_eq!(line, 3);
                assert_eq!(key, "grid.colour");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            load_config(&format!("{MINIMAL}grid.n = 128\n")),
            Err(Error::Parse { line: 5, .. })
        ));
        assert!(matches!(
            load_config(&format!("{MINIMAL}stepper.dt = fast\n")),
            Err(Error::Parse { line: 5, .. })
        ));
    }

    #[test]
    fn echo_reproduces_the_spec() {
        let text = format!(
            "{MINIMAL}params.nl_cutoff = 4.5   # band limit\nstepper.dt = 2.5e-4\nstate.x0 = 0.1\nsweep.ratios = 4, 0.25, 1\n"
        );
        let spec = load_config(&text).unwrap();
        let again = load_config(&spec.to_config_text()).unwrap();
        assert_eq!(spec, again);
        assert_eq!(spec.to_config_text(), again.to_config_text());
    }

    #[test]
    fn linear_and_kg_masses() {
        let lin = load_config(&MINIMAL.replace("2.0", "0")).unwrap();
        assert!(lin.params.is_linear());
        assert_eq!(load_config(&lin.to_config_text()).unwrap(), lin);
        let kg = load_config(&MINIMAL.replace("params.mass_ratio = 2.0", "params.mass_kg = 1e-25\nstepper.dt = 1e-6")).unwrap();
        assert!((kg.mass_ratio - 0.005).abs() < 1e-15);
    }

    #[test]
    fn scenario_configs_are_checked() {
        let p = "scenario = pointer\ngrid.n = 256\ngrid.length = 16\npotential.kind = double_well\n";
        assert!(load_config(p).unwrap().pointer_config().is_ok());
        assert!(matches!(
            load_config("scenario = pointer\ngrid.n = 256\ngrid.length = 16\n"),
            Err(Error::Validation(_))
        ));
        let b = "scenario = branch\ngrid.n = 128\ngrid.length = 32\nparams.mass_ratio = 2\nparams.nl_cutoff = 3\nstepper.dt = 1e-3\n";
        let spec = load_config(b).unwrap();
        assert_eq!(spec.grid.len(), 2);
        assert_eq!(spec.branch_config().unwrap().n, 128);
    }
}
