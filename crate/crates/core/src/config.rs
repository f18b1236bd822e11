//! Experiment configuration, read from TOML.
//!
//! Every section is optional and defaulted; see `docs/config-reference.md`
//! for the full list of keys.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::{self, Builtin, PhaseSpacePoint};
use crate::observable::Observable;
use crate::orbits::{ScanOptions, SeedStrategy};
use crate::traceformula::uniform_grid;
use crate::window::SpectralWindow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    /// One of ho1d, quartic1d, ho2d_aniso, henon_heiles_bounded.
    pub family: String,
    pub params: BTreeMap<String, f64>,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            family: "ho1d".into(),
            params: BTreeMap::new(),
        }
    }
}

/// A single hbar or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HbarSpec {
    One(f64),
    Many(Vec<f64>),
}

impl HbarSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            HbarSpec::One(h) => vec![*h],
            HbarSpec::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowSection {
    /// Support T of ĝ.
    pub support: f64,
    /// ĝ(0).
    pub amplitude: f64,
    /// Fraction of the half-width on which chi = 1.
    pub plateau: f64,
}

impl Default for WindowSection {
    fn default() -> Self {
        Self {
            support: 3.5,
            amplitude: 1.0,
            plateau: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyGridSection {
    pub points: usize,
    /// Defaults to E - dE/2.
    pub lo: Option<f64>,
    /// Defaults to E + dE/2.
    pub hi: Option<f64>,
}

impl Default for EnergyGridSection {
    fn default() -> Self {
        Self { points: 801, lo: None, hi: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedEntry {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    /// Period guess.
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrbitSection {
    /// Largest |T_gamma| kept; defaults to the window support.
    pub t_max: Option<f64>,
    pub seeds: Vec<SeedEntry>,
    pub scan: Option<ScanOptions>,
    /// Largest repetition |k| used in the trace formula.
    pub max_repetition: Option<u32>,
}

impl Default for OrbitSection {
    fn default() -> Self {
        Self {
            t_max: None,
            seeds: Vec::new(),
            scan: None,
            max_repetition: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct QuantumSection {
    /// Grid points per axis; chosen automatically when absent.
    pub points: Option<usize>,
    /// Half-width L of the box [-L, L]^n; chosen automatically when absent.
    pub half_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WavepacketSection {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub time: f64,
    pub hbars: Vec<f64>,
}

impl Default for WavepacketSection {
    fn default() -> Self {
        Self {
            q: vec![0.5],
            p: vec![0.0],
            time: 1.0,
            hbars: vec![2e-2, 1e-2, 5e-3, 2.5e-3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative energy drift allowed along trajectories.
    pub energy_drift: f64,
    /// Newton closure tolerance for periodic orbits.
    pub orbit: f64,
    /// Refinement tolerance of the coherent-state quadrature.
    pub coherent: f64,
    /// Richardson tolerance of converged quantum propagations.
    pub richardson: f64,
    /// Relative tolerance of the stationary-phase quadrature.
    pub staphase: f64,
    /// Relative tolerance of the Hessian identity.
    pub identity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            energy_drift: 1e-9,
            orbit: 1e-10,
            coherent: 1e-3,
            richardson: 1e-8,
            staphase: 1e-9,
            identity: 1e-6,
        }
    }
}

impl Tolerances {
    /// Applies `key=value` overrides separated by commas.
    pub fn apply_overrides(&mut self, overrides: &str) -> Result<()> {
        for item in overrides.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::config("tol-overrides", format!("expected key=value, got {item:?}")))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::config(key.trim(), format!("not a number: {value:?}")))?;
            if !(v > 0.0) {
                return Err(Error::config(key.trim(), "tolerance must be positive"));
            }
            let slot = match key.trim() {
                "energy_drift" => &mut self.energy_drift,
                "orbit" => &mut self.orbit,
                "coherent" => &mut self.coherent,
                "richardson" => &mut self.richardson,
                "staphase" => &mut self.staphase,
                "identity" => &mut self.identity,
                other => return Err(Error::config(other, "unknown tolerance")),
            };
            *slot = v;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    /// Reference energy E.
    pub energy: f64,
    /// Half-width dE of the energy cutoff.
    pub half_width: f64,
    pub hbar: HbarSpec,
    /// Seed of every Monte Carlo or random scan.
    pub seed: u64,
    pub out: String,
    pub observable: Observable,
    pub window: WindowSection,
    pub energy_grid: EnergyGridSection,
    pub orbits: OrbitSection,
    pub quantum: QuantumSection,
    pub wavepacket: WavepacketSection,
    pub tolerances: Tolerances,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemSection::default(),
            energy: 1.0,
            half_width: 1.6,
            hbar: HbarSpec::One(0.05),
            seed: 0,
            out: "out".into(),
            observable: Observable::Identity,
            window: WindowSection::default(),
            energy_grid: EnergyGridSection::default(),
            orbits: OrbitSection::default(),
            quantum: QuantumSection::default(),
            wavepacket: WavepacketSection::default(),
            tolerances: Tolerances::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = field_from_message(&msg).unwrap_or_else(|| "<document>".into());
            Error::config(field, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let hb = self.hbar.values();
        if hb.is_empty() {
            return Err(Error::config("hbar", "at least one value is required"));
        }
        if hb.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
            return Err(Error::config("hbar", "must be positive"));
        }
        if !(self.half_width > 0.0) {
            return Err(Error::config("half_width", "must be positive"));
        }
        if !self.energy.is_finite() {
            return Err(Error::config("energy", "must be finite"));
        }
        if !(self.window.support > 0.0) || !self.window.support.is_finite() {
            return Err(Error::config("window.support", "must be positive"));
        }
        if !(0.5..1.0).contains(&self.window.plateau) {
            return Err(Error::config("window.plateau", "must lie in [0.5, 1)"));
        }
        if self.energy_grid.points < 2 {
            return Err(Error::config("energy_grid.points", "need at least two points"));
        }
        let (lo, hi) = self.energy_bounds();
        if !(hi > lo) {
            return Err(Error::config("energy_grid", "hi must exceed lo"));
        }
        let system = self.builtin().map_err(|e| Error::config("system", e.to_string()))?;
        let n = hamiltonians::Hamiltonian::dim(&system);
        self.observable.validate(n).map_err(|e| Error::config("observable", e.to_string()))?;
        for (i, s) in self.orbits.seeds.iter().enumerate() {
            if s.q.len() != n || s.p.len() != n {
                return Err(Error::config(format!("orbits.seeds[{i}]"), format!("q and p need {n} components")));
            }
            if !(s.t > 0.0) {
                return Err(Error::config(format!("orbits.seeds[{i}].t"), "period guess must be positive"));
            }
        }
        if let Some(t) = self.orbits.t_max {
            if !(t > 0.0) {
                return Err(Error::config("orbits.t_max", "must be positive"));
            }
        }
        if self.quantum.points.is_some_and(|p| p < 8) {
            return Err(Error::config("quantum.points", "need at least 8 points"));
        }
        if self.quantum.half_width.is_some_and(|l| !(l > 0.0)) {
            return Err(Error::config("quantum.half_width", "must be positive"));
        }
        if self.wavepacket.q.len() != self.wavepacket.p.len() {
            return Err(Error::config("wavepacket", "q and p lengths differ"));
        }
        if self.wavepacket.hbars.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::config("wavepacket.hbars", "must be positive"));
        }
        Ok(())
    }

    pub fn builtin(&self) -> Result<Builtin> {
        hamiltonians::make_builtin(&self.system.family, &self.system.params, Some(self.energy))
    }

    pub fn window(&self) -> Result<SpectralWindow> {
        Ok(SpectralWindow::new(self.window.support, self.energy, self.half_width)?
            .with_plateau(self.window.plateau)?
            .with_amplitude(self.window.amplitude))
    }

    pub fn energy_bounds(&self) -> (f64, f64) {
        (
            self.energy_grid.lo.unwrap_or(self.energy - 0.5 * self.half_width),
            self.energy_grid.hi.unwrap_or(self.energy + 0.5 * self.half_width),
        )
    }

    pub fn energy_grid(&self) -> Vec<f64> {
        let (lo, hi) = self.energy_bounds();
        uniform_grid(lo, hi, self.energy_grid.points)
    }

    pub fn t_max(&self) -> f64 {
        self.orbits.t_max.unwrap_or(self.window.support)
    }

    pub fn seed_strategy(&self) -> Result<SeedStrategy> {
        let seeds = self
            .orbits
            .seeds
            .iter()
            .map(|s| Ok((PhaseSpacePoint::new(s.q.clone(), s.p.clone())?, s.t)))
            .collect::<Result<Vec<_>>>()?;
        let scan = self.orbits.scan.map(|mut s| {
            s.rng_seed = s.rng_seed.wrapping_add(self.seed);
            s
        });
        Ok(SeedStrategy { seeds, scan })
    }
}

fn field_from_message(msg: &str) -> Option<String> {
    // "unknown field `x`" / "missing field `x`"
    let start = msg.find('`')?;
    let rest = &msg[start + 1..];
    let end = rest.find('`')?;
    Some(rest[..end].to_string())
}
