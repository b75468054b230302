//! Run configuration: one JSON document per scenario, plus built-in presets.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dynamics::{cyclotron_period, Integration};
use crate::fields::{FieldConfig, ParticleParams};
use crate::identities::MAX_POINTS;
use crate::symbol::Band;

/// Largest accepted config document, in bytes.
pub const MAX_CONFIG_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[error("{message}")]
pub struct ConfigError {
    pub message: String,
    /// Dotted path of the offending key, when one is known.
    pub key: Option<String>,
}

impl ConfigError {
    fn at(key: &str, message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            key: Some(key.to_string()),
        }
    }

    fn missing(key: &str) -> Self {
        Self::at(key, format!("missing required key `{key}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Orbit only.
    Classical,
    /// Orbit and spinor transport.
    Spin,
    /// BMT precession along the classical orbit.
    Bmt,
    /// Spinor polarization against BMT.
    Compare,
    /// Split-step Dirac run at one ε.
    Quantum,
    /// ε-sweep of the split-step run.
    Convergence,
    /// Randomized identity suite.
    Identities,
}

impl Mode {
    fn required_blocks(self) -> &'static [&'static str] {
        match self {
            Mode::Classical | Mode::Spin | Mode::Bmt | Mode::Compare => {
                &["particle", "fields", "initial", "integration"]
            }
            Mode::Quantum => &["particle", "fields", "initial", "grid", "quantum"],
            Mode::Convergence => &["particle", "fields", "initial", "grid", "convergence"],
            Mode::Identities => &[],
        }
    }
}

/// Initial phase point and internal state. Exactly one of `spin` (a
/// polarization direction) or `spinor` (four `[re, im]` pairs) is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub q0: [f64; 3],
    pub p0: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spin: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spinor: Option<[[f64; 2]; 4]>,
    #[serde(default = "default_band")]
    pub band: Band,
}

fn default_band() -> Band {
    Band::Electron
}

/// Grid and packet settings shared by the quantum modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSettings {
    pub dims: usize,
    pub n: usize,
    pub length: f64,
    #[serde(default)]
    pub center: [f64; 2],
    pub t_final: f64,
    /// Time step in units of ε.
    pub dt_over_eps: f64,
    /// Packet width `σ = sqrt(width_factor · ε)`.
    pub width_factor: f64,
    /// Observation times after t = 0.
    pub observations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantumSettings {
    pub eps: f64,
    /// Write the final `|ψ|²` as a binary snapshot.
    #[serde(default = "yes")]
    pub snapshot: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSettings {
    /// Strictly decreasing.
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    pub dir: String,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

fn default_seed() -> u64 {
    42
}

fn default_points() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particle: Option<ParticleParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<FieldConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integration: Option<Integration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantum: Option<QuantumSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSettings>,
    #[serde(default)]
    pub output: OutputSettings,
    /// Seed for the identity-suite probe points.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_points")]
    pub identity_points: usize,
}

/// Pulls the key name out of serde's "missing field `x`" / "unknown field `x`".
fn quoted_key(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        if text.len() > MAX_CONFIG_BYTES {
            return Err(ConfigError {
                message: format!("config exceeds {MAX_CONFIG_BYTES} bytes"),
                key: None,
            });
        }
        let value: Value = serde_json::from_str(text).map_err(|e| ConfigError {
            message: format!("invalid JSON: {e}"),
            key: None,
        })?;
        let obj = value.as_object().ok_or_else(|| ConfigError {
            message: "config must be a JSON object".into(),
            key: None,
        })?;
        for key in ["scenario", "mode"] {
            if !obj.contains_key(key) {
                return Err(ConfigError::missing(key));
            }
        }
        let mode: Mode = serde_json::from_value(obj["mode"].clone())
            .map_err(|e| ConfigError::at("mode", format!("invalid mode: {e}")))?;
        for key in mode.required_blocks() {
            if obj.get(*key).is_none_or(Value::is_null) {
                return Err(ConfigError::missing(key));
            }
        }
        for (key, block) in obj {
            Self::check_block(key, block)?;
        }
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| {
            let msg = e.to_string();
            ConfigError {
                key: quoted_key(&msg),
                message: msg,
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Decodes one block alone so nested missing keys get a dotted path.
    fn check_block(key: &str, block: &Value) -> Result<(), ConfigError> {
        fn probe<T: serde::de::DeserializeOwned>(key: &str, block: &Value) -> Result<(), ConfigError> {
            serde_json::from_value::<T>(block.clone()).map(|_| ()).map_err(|e| {
                let msg = e.to_string();
                let inner = quoted_key(&msg);
                ConfigError {
                    key: Some(inner.map_or(key.to_string(), |k| format!("{key}.{k}"))),
                    message: format!("{key}: {msg}"),
                }
            })
        }
        if block.is_null() {
            return Ok(());
        }
        match key {
            "particle" => probe::<ParticleParams>(key, block),
            "fields" => probe::<FieldConfig>(key, block),
            "initial" => probe::<InitialState>(key, block),
            "integration" => probe::<Integration>(key, block),
            "grid" => probe::<GridSettings>(key, block),
            "quantum" => probe::<QuantumSettings>(key, block),
            "convergence" => probe::<ConvergenceSettings>(key, block),
            "output" => probe::<OutputSettings>(key, block),
            _ => Ok(()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn particle(&self) -> ParticleParams {
        self.particle.unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.scenario.trim().is_empty() {
            return Err(ConfigError::at("scenario", "scenario name is empty"));
        }
        for key in self.mode.required_blocks() {
            let present = match *key {
                "particle" => self.particle.is_some(),
                "fields" => self.fields.is_some(),
                "initial" => self.initial.is_some(),
                "integration" => self.integration.is_some(),
                "grid" => self.grid.is_some(),
                "quantum" => self.quantum.is_some(),
                "convergence" => self.convergence.is_some(),
                _ => true,
            };
            if !present {
                return Err(ConfigError::missing(key));
            }
        }
        if let Some(p) = &self.particle {
            p.validate().map_err(|e| ConfigError::at("particle", e.to_string()))?;
        }
        if let Some(f) = &self.fields {
            f.validate().map_err(|e| ConfigError::at("fields", e.to_string()))?;
        }
        if let Some(init) = &self.initial {
            if !finite(&init.q0) || !finite(&init.p0) {
                return Err(ConfigError::at("initial", "q0 and p0 must be finite"));
            }
            match (&init.spin, &init.spinor) {
                (Some(_), Some(_)) => {
                    return Err(ConfigError::at("initial", "give either `spin` or `spinor`, not both"))
                }
                (None, None) => return Err(ConfigError::missing("initial.spin")),
                (Some(a), None) => {
                    if !finite(a) || a.iter().map(|x| x * x).sum::<f64>() == 0.0 {
                        return Err(ConfigError::at(
                            "initial.spin",
                            "spin direction must be finite and nonzero",
                        ));
                    }
                }
                (None, Some(s)) => {
                    if !s.iter().all(|z| finite(z)) || s.iter().flatten().all(|x| *x == 0.0) {
                        return Err(ConfigError::at("initial.spinor", "spinor must be finite and nonzero"));
                    }
                }
            }
        }
        if let Some(integ) = &self.integration {
            integ
                .steps()
                .map_err(|e| ConfigError::at("integration", e.to_string()))?;
            if integ.t_final == 0.0 {
                return Err(ConfigError::at("integration.t_final", "t_final must be positive"));
            }
        }
        if let Some(g) = &self.grid {
            if !(g.dims == 1 || g.dims == 2) {
                return Err(ConfigError::at(
                    "grid.dims",
                    format!("dims must be 1 or 2, got {}", g.dims),
                ));
            }
            let positive = [
                ("length", g.length),
                ("t_final", g.t_final),
                ("dt_over_eps", g.dt_over_eps),
                ("width_factor", g.width_factor),
            ];
            for (k, v) in positive {
                if !(v.is_finite() && v > 0.0) {
                    return Err(ConfigError::at(
                        &format!("grid.{k}"),
                        format!("{k} must be positive, got {v}"),
                    ));
                }
            }
            if !finite(&g.center) {
                return Err(ConfigError::at("grid.center", "center must be finite"));
            }
            if g.observations == 0 || g.observations > 10_000 {
                return Err(ConfigError::at(
                    "grid.observations",
                    "observations must be in 1..=10000",
                ));
            }
            crate::grid::GridSpec::centered(g.dims, g.n, g.length, g.center)
                .map_err(|e| ConfigError::at("grid.n", e.to_string()))?;
        }
        if let Some(q) = &self.quantum {
            if !(q.eps.is_finite() && q.eps > 0.0) {
                return Err(ConfigError::at("quantum.eps", "eps must be positive"));
            }
        }
        if let Some(cv) = &self.convergence {
            if cv.eps.is_empty() || cv.eps.len() > 8 || cv.eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                return Err(ConfigError::at("convergence.eps", "eps needs 1 to 8 positive values"));
            }
            if cv.eps.windows(2).any(|w| w[1] >= w[0]) {
                return Err(ConfigError::at("convergence.eps", "eps must be strictly decreasing"));
            }
        }
        if self.output.dir.is_empty() {
            return Err(ConfigError::at("output.dir", "output directory is empty"));
        }
        if self.identity_points == 0 || self.identity_points > MAX_POINTS {
            return Err(ConfigError::at(
                "identity_points",
                format!("identity_points must be in 1..={MAX_POINTS}"),
            ));
        }
        Ok(())
    }
}

/// A named built-in scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub config: RunConfig,
}

fn base(name: &str, mode: Mode, fields: FieldConfig, q0: [f64; 3], p0: [f64; 3], spin: [f64; 3]) -> RunConfig {
    RunConfig {
        scenario: name.into(),
        mode,
        particle: Some(ParticleParams::default()),
        fields: Some(fields),
        initial: Some(InitialState {
            q0,
            p0,
            spin: Some(spin),
            spinor: None,
            band: Band::Electron,
        }),
        integration: None,
        grid: None,
        quantum: None,
        convergence: None,
        output: OutputSettings {
            dir: format!("out/{name}"),
        },
        seed: default_seed(),
        identity_points: default_points(),
    }
}

/// The built-in scenario catalog, in a fixed order.
pub fn presets() -> Vec<Preset> {
    let params = ParticleParams::default();
    let pi = std::f64::consts::PI;

    let mut free = base(
        "free",
        Mode::Spin,
        FieldConfig::Free,
        [0.0; 3],
        [0.6, 0.3, 0.0],
        [0.0, 0.0, 1.0],
    );
    free.integration = Some(Integration {
        t_final: 10.0,
        dt: 0.01,
    });

    // |p| = √3 gives γ = 2; five periods at 10⁴ steps.
    let period = cyclotron_period(&params, 1.0, 2.0);
    let mut cyclotron = base(
        "uniform_B_cyclotron",
        Mode::Compare,
        FieldConfig::UniformB {
            b: [0.0, 0.0, 1.0],
            center: [0.0; 3],
        },
        [0.0; 3],
        [3f64.sqrt(), 0.0, 0.0],
        [0.0, 1.0, 0.0],
    );
    cyclotron.integration = Some(Integration {
        t_final: 5.0 * period,
        dt: 5.0 * period / 10_000.0,
    });

    let mut drift = base(
        "crossed_EB_drift",
        Mode::Compare,
        FieldConfig::CrossedEb {
            e: [0.3, 0.0, 0.0],
            b: [0.0, 0.0, 1.0],
            center: [0.0; 3],
        },
        [0.0; 3],
        [0.2, 0.5, 0.1],
        [1.0, 0.0, 1.0],
    );
    drift.integration = Some(Integration {
        t_final: 40.0,
        dt: 0.004,
    });

    // e < 0, so a negative stiffness makes eφ confining.
    let mut trap = base(
        "harmonic_trap",
        Mode::Compare,
        FieldConfig::HarmonicPhi {
            stiffness: [-0.5, -0.5, -0.5],
            center: [0.0; 3],
        },
        [1.0, 0.0, 0.0],
        [0.0, 0.5, 0.2],
        [1.0, 0.0, 0.0],
    );
    trap.integration = Some(Integration {
        t_final: 30.0,
        dt: 0.003,
    });

    let mut conv = base(
        "convergence_2d_B",
        Mode::Convergence,
        FieldConfig::UniformB {
            b: [0.0, 0.0, 1.0],
            center: [0.0; 3],
        },
        [1.0, 0.0, 0.0],
        [0.0, 0.5, 0.0],
        [1.0, 0.0, 0.0],
    );
    // π0 = (0, 1): γ = √2, half a cyclotron period.
    conv.grid = Some(GridSettings {
        dims: 2,
        n: 256,
        length: 8.0,
        center: [0.0, 0.0],
        t_final: pi * 2f64.sqrt(),
        dt_over_eps: 0.02,
        width_factor: 0.5,
        observations: 8,
    });
    conv.convergence = Some(ConvergenceSettings {
        eps: vec![0.2, 0.1, 0.05],
    });

    vec![
        Preset {
            name: "free",
            description: "no fields; straight orbit and frozen spin",
            config: free,
        },
        Preset {
            name: "uniform_B_cyclotron",
            description: "uniform B along z, gamma = 2, five cyclotron periods; quantum spin against BMT",
            config: cyclotron,
        },
        Preset {
            name: "crossed_EB_drift",
            description: "E along x, B along z, |E| < |B|; E x B drift with precessing spin",
            config: drift,
        },
        Preset {
            name: "harmonic_trap",
            description: "confining electrostatic harmonic potential",
            config: trap,
        },
        Preset {
            name: "convergence_2d_B",
            description: "split-step Dirac packet in uniform B on a 256^2 grid, eps in {0.2, 0.1, 0.05}, half a period",
            config: conv,
        },
    ]
}

pub fn preset(name: &str) -> Option<Preset> {
    presets().into_iter().find(|p| p.name == name)
}
