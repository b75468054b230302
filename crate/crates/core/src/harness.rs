//! Runs a configuration and writes its artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::bmt::{compare_quantum_bmt, evolve_bmt};
use crate::config::{ConfigError, Mode, RunConfig};
use crate::dynamics::{evolve_packet, DeltaPacket, DynamicsError, TrajectoryRecord};
use crate::fields::Vec3;
use crate::gamma::{Spinor, C64};
use crate::identities::{run_identity_suite, IdentityError, IdentitySuiteReport};
use crate::pde::{convergence_study, observables_csv, quantum_run, ConvergenceScenario, GridObservables, PdeError};
use crate::plot::{render, Plot, Series};
use crate::snapshot::Snapshot;
use crate::symbol::DiracSymbol;

/// Points kept per plotted series.
const PLOT_POINTS: usize = 2000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("identity residuals above threshold: {}", .failures.join(", "))]
    IdentityFailure { failures: Vec<String> },
    #[error("i/o error: {0}")]
    Io(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Numerical(_) => 3,
            HarnessError::IdentityFailure { .. } => 4,
            HarnessError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Numerical(_) => "numerical",
            HarnessError::IdentityFailure { .. } => "identity",
            HarnessError::Io(_) => "io",
        }
    }

    /// One-line JSON object describing the error.
    pub fn to_json(&self) -> String {
        let mut err = json!({ "kind": self.kind(), "message": self.to_string(), "exit_code": self.exit_code() });
        match self {
            HarnessError::Config(c) => {
                if let Some(k) = &c.key {
                    err["key"] = json!(k);
                }
            }
            HarnessError::IdentityFailure { failures } => err["failures"] = json!(failures),
            _ => {}
        }
        json!({ "error": err }).to_string()
    }

    fn config(key: &str, message: impl Into<String>) -> Self {
        HarnessError::Config(ConfigError {
            message: message.into(),
            key: Some(key.into()),
        })
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<DynamicsError> for HarnessError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::InvalidPacket(m) => HarnessError::config("initial", m),
            DynamicsError::Settings(m) => HarnessError::config("integration", m),
            DynamicsError::Symbol(s) => HarnessError::config("initial.spin", s.to_string()),
            other => HarnessError::Numerical(other.to_string()),
        }
    }
}

impl From<PdeError> for HarnessError {
    fn from(e: PdeError) -> Self {
        match e {
            PdeError::Dynamics(d) => d.into(),
            PdeError::NonFinite(_) => HarnessError::Numerical(e.to_string()),
            PdeError::PacketDoesNotFit(_) | PdeError::NotInBand(_) => HarnessError::config("initial", e.to_string()),
            PdeError::Fields(_) => HarnessError::config("fields", e.to_string()),
            PdeError::Grid(_) | PdeError::Settings(_) => HarnessError::config("grid", e.to_string()),
        }
    }
}

impl From<IdentityError> for HarnessError {
    fn from(e: IdentityError) -> Self {
        match e {
            IdentityError::Settings(m) => HarnessError::config("identity_points", m),
            other => HarnessError::Numerical(other.to_string()),
        }
    }
}

/// Written as `summary.json` by every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub scenario: String,
    pub mode: Mode,
    pub metrics: BTreeMap<String, Value>,
    /// File names relative to the output directory.
    pub artifacts: Vec<String>,
}

struct Writer<'a> {
    dir: &'a Path,
    artifacts: Vec<String>,
}

impl Writer<'_> {
    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<(), HarnessError> {
        std::fs::write(self.dir.join(name), bytes)
            .map_err(|e| HarnessError::Io(format!("{}: {e}", self.dir.join(name).display())))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), HarnessError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Io(e.to_string()))?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    fn plot(&mut self, name: &str, plot: &Plot) -> Result<(), HarnessError> {
        self.put(name, render(plot).as_bytes())
    }
}

fn thin<T: Copy>(v: &[T]) -> Vec<T> {
    if v.is_empty() {
        return Vec::new();
    }
    let stride = v.len().div_ceil(PLOT_POINTS).max(1);
    let mut out: Vec<T> = v.iter().step_by(stride).copied().collect();
    if !(v.len() - 1).is_multiple_of(stride) {
        out.push(v[v.len() - 1]);
    }
    out
}

fn vec_series(label: &str, rows: &[(f64, Vec3)]) -> Vec<Series> {
    let rows = thin(rows);
    (0..3)
        .map(|k| {
            Series::new(
                &format!("{label}{}", ["x", "y", "z"][k]),
                rows.iter().map(|(t, v)| (*t, v[k])).collect(),
            )
        })
        .collect()
}

fn orbit_plot(title: &str, series: Vec<Series>) -> Plot {
    let mut p = Plot::lines(title, "q_x", "q_y", series);
    p.equal_aspect = true;
    p
}

fn initial_packet(cfg: &RunConfig, symbol: &DiracSymbol) -> Result<DeltaPacket, HarnessError> {
    let init = cfg
        .initial
        .as_ref()
        .ok_or_else(|| HarnessError::config("initial", "missing required key `initial`"))?;
    let (q, p) = (Vec3::from(init.q0), Vec3::from(init.p0));
    match (&init.spin, &init.spinor) {
        (Some(a), _) => Ok(DeltaPacket::polarized(symbol, q, p, &Vec3::from(*a), init.band)?),
        (None, Some(s)) => {
            let v = Spinor::from_iterator(s.iter().map(|z| C64::new(z[0], z[1])));
            let v = v / C64::new(v.norm(), 0.0);
            DeltaPacket::new(symbol, q, p, v, 1.0, init.band)
                .map_err(|e| HarnessError::config("initial.spinor", e.to_string()))
        }
        (None, None) => Err(HarnessError::config(
            "initial.spin",
            "missing required key `initial.spin`",
        )),
    }
}

fn orbit_csv(rec: &TrajectoryRecord) -> String {
    let mut out = String::from("t,qx,qy,qz,px,py,pz,h\n");
    for s in &rec.samples {
        let _ = write!(out, "{}", s.t);
        for x in s.q.iter().chain(s.p.iter()) {
            let _ = write!(out, ",{x}");
        }
        let _ = writeln!(out, ",{}", s.h);
    }
    out
}

fn orbit_points(rec: &TrajectoryRecord) -> Vec<(f64, f64)> {
    thin(&rec.samples.iter().map(|s| (s.q[0], s.q[1])).collect::<Vec<_>>())
}

fn trajectory_metrics(m: &mut BTreeMap<String, Value>, rec: &TrajectoryRecord) {
    let last = rec.last();
    m.insert("steps".into(), json!(rec.samples.len() - 1));
    m.insert("t_final".into(), json!(last.t));
    m.insert("final_q".into(), json!([last.q[0], last.q[1], last.q[2]]));
    m.insert("final_p".into(), json!([last.p[0], last.p[1], last.p[2]]));
    m.insert("max_energy_drift".into(), json!(rec.max_energy_drift()));
}

fn scenario_for(cfg: &RunConfig) -> Result<ConvergenceScenario, HarnessError> {
    let grid = cfg
        .grid
        .as_ref()
        .ok_or_else(|| HarnessError::config("grid", "missing required key `grid`"))?;
    let init = cfg
        .initial
        .as_ref()
        .ok_or_else(|| HarnessError::config("initial", "missing required key `initial`"))?;
    let spin_axis = init
        .spin
        .ok_or_else(|| HarnessError::config("initial.spin", "quantum modes need a spin direction"))?;
    let fields = cfg
        .fields
        .clone()
        .ok_or_else(|| HarnessError::config("fields", "missing required key `fields`"))?;
    Ok(ConvergenceScenario {
        fields,
        params: cfg.particle(),
        q0: [init.q0[0], init.q0[1]],
        p0: [init.p0[0], init.p0[1]],
        spin_axis,
        dims: grid.dims,
        n: grid.n,
        length: grid.length,
        center: grid.center,
        t_final: grid.t_final,
        dt_over_eps: grid.dt_over_eps,
        width_factor: grid.width_factor,
        observations: grid.observations,
    })
}

fn observable_plots(
    w: &mut Writer,
    tag: &str,
    series: &[GridObservables],
    reference: Option<&[(f64, Vec3, Vec3)]>,
) -> Result<(), HarnessError> {
    let mut orbit = vec![Series::new(
        "quantum",
        series.iter().map(|o| (o.mean_x[0], o.mean_x[1])).collect(),
    )];
    let mut spin = vec_series("s_", &series.iter().map(|o| (o.t, Vec3::from(o.s))).collect::<Vec<_>>());
    if let Some(r) = reference {
        orbit.push(Series::new(
            "classical",
            r.iter().map(|(_, q, _)| (q[0], q[1])).collect(),
        ));
        spin.extend(vec_series(
            "bmt_",
            &r.iter().map(|(t, _, s)| (*t, *s)).collect::<Vec<_>>(),
        ));
    }
    w.plot(&format!("orbit{tag}.svg"), &orbit_plot("mean position", orbit))?;
    w.plot(
        &format!("spin{tag}.svg"),
        &Plot::lines("band polarization", "t", "s", spin),
    )?;
    let occ = vec![Series::new(
        "1 - occupation",
        series.iter().map(|o| (o.t, 1.0 - o.band_occupation)).collect(),
    )];
    w.plot(
        &format!("occupation{tag}.svg"),
        &Plot::lines("band leakage", "t", "1 - <Op(P+)>", occ),
    )
}

fn reference_csv(reference: &[(f64, Vec3, Vec3)]) -> String {
    let mut out = String::from("t,qx,qy,qz,sbmt_x,sbmt_y,sbmt_z\n");
    for (t, q, s) in reference {
        let _ = write!(out, "{t}");
        for x in q.iter().chain(s.iter()) {
            let _ = write!(out, ",{x}");
        }
        out.push('\n');
    }
    out
}

fn eps_tag(eps: f64) -> String {
    format!("_eps{eps}")
}

/// Runs `cfg`, writing artifacts into `out_dir`. Identical configurations
/// give byte-identical files.
pub fn run(cfg: &RunConfig, out_dir: &Path, plots: bool) -> Result<RunSummary, HarnessError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::Io(format!("{}: {e}", out_dir.display())))?;
    let mut w = Writer {
        dir: out_dir,
        artifacts: Vec::new(),
    };
    w.json("config.json", cfg)?;
    let mut m = BTreeMap::new();
    let mut identity_failures = None;

    match cfg.mode {
        Mode::Classical | Mode::Spin | Mode::Bmt | Mode::Compare => {
            let fields = cfg
                .fields
                .clone()
                .ok_or_else(|| HarnessError::config("fields", "missing required key `fields`"))?;
            let symbol = DiracSymbol::new(fields, cfg.particle());
            let integ = cfg
                .integration
                .ok_or_else(|| HarnessError::config("integration", "missing required key `integration`"))?;
            let packet = initial_packet(cfg, &symbol)?;
            m.insert("dt".into(), json!(integ.step()?));
            match cfg.mode {
                Mode::Classical => {
                    let rec = evolve_packet(&packet, &symbol, &integ)?;
                    trajectory_metrics(&mut m, &rec);
                    w.put("orbit.csv", orbit_csv(&rec).as_bytes())?;
                    if plots {
                        w.plot(
                            "orbit.svg",
                            &orbit_plot("orbit", vec![Series::new("q", orbit_points(&rec))]),
                        )?;
                    }
                }
                Mode::Spin => {
                    let rec = evolve_packet(&packet, &symbol, &integ)?;
                    trajectory_metrics(&mut m, &rec);
                    m.insert("max_band_residual".into(), json!(rec.max_band_residual()));
                    m.insert("max_norm_err".into(), json!(rec.max_norm_err()));
                    let s = rec.last().s;
                    m.insert("final_s".into(), json!([s[0], s[1], s[2]]));
                    w.put("trajectory.csv", rec.to_csv().as_bytes())?;
                    if plots {
                        w.plot(
                            "orbit.svg",
                            &orbit_plot("orbit", vec![Series::new("q", orbit_points(&rec))]),
                        )?;
                        let rows: Vec<(f64, Vec3)> = rec.samples.iter().map(|s| (s.t, s.s)).collect();
                        w.plot(
                            "spin.svg",
                            &Plot::lines("band polarization", "t", "s", vec_series("s_", &rows)),
                        )?;
                    }
                }
                Mode::Bmt => {
                    let rec = evolve_packet(&packet, &symbol, &integ)?;
                    trajectory_metrics(&mut m, &rec);
                    let series = evolve_bmt(&packet.polarization(&symbol), &rec, &symbol, &integ)?;
                    let n0 = series[0].1.norm();
                    let drift = series.iter().map(|(_, s)| (s.norm() - n0).abs()).fold(0.0, f64::max);
                    m.insert("bmt_norm_drift".into(), json!(drift));
                    let s = series[series.len() - 1].1;
                    m.insert("final_s".into(), json!([s[0], s[1], s[2]]));
                    let mut csv = String::from("t,sx,sy,sz\n");
                    for (t, s) in &series {
                        let _ = writeln!(csv, "{t},{},{},{}", s[0], s[1], s[2]);
                    }
                    w.put("bmt.csv", csv.as_bytes())?;
                    if plots {
                        w.plot(
                            "orbit.svg",
                            &orbit_plot("orbit", vec![Series::new("q", orbit_points(&rec))]),
                        )?;
                        w.plot(
                            "spin.svg",
                            &Plot::lines("BMT spin", "t", "s", vec_series("s_", &series)),
                        )?;
                    }
                }
                _ => {
                    let rep = compare_quantum_bmt(&packet, &symbol, &integ, &cfg.scenario)?;
                    trajectory_metrics(&mut m, &rep.trajectory);
                    m.insert("max_deviation".into(), json!(rep.summary.max_deviation));
                    m.insert("bmt_norm_drift".into(), json!(rep.bmt_norm_drift()));
                    m.insert("max_band_residual".into(), json!(rep.trajectory.max_band_residual()));
                    m.insert("max_norm_err".into(), json!(rep.trajectory.max_norm_err()));
                    w.put("comparison.csv", rep.to_csv().as_bytes())?;
                    if plots {
                        w.plot(
                            "orbit.svg",
                            &orbit_plot("orbit", vec![Series::new("q", orbit_points(&rep.trajectory))]),
                        )?;
                        let q: Vec<(f64, Vec3)> = rep.rows.iter().map(|r| (r.t, r.s_quantum)).collect();
                        let b: Vec<(f64, Vec3)> = rep.rows.iter().map(|r| (r.t, r.s_bmt)).collect();
                        let mut series = vec_series("quantum_", &q);
                        series.extend(vec_series("bmt_", &b));
                        w.plot("spin.svg", &Plot::lines("quantum spin and BMT", "t", "s", series))?;
                        let dev: Vec<(f64, f64)> =
                            thin(&rep.rows.iter().map(|r| (r.t, r.deviation)).collect::<Vec<_>>());
                        w.plot(
                            "deviation.svg",
                            &Plot::lines(
                                "|s_quantum - s_BMT|",
                                "t",
                                "deviation",
                                vec![Series::new("deviation", dev)],
                            ),
                        )?;
                    }
                }
            }
        }
        Mode::Quantum => {
            let sc = scenario_for(cfg)?;
            let q = cfg
                .quantum
                .as_ref()
                .ok_or_else(|| HarnessError::config("quantum", "missing required key `quantum`"))?;
            let run = quantum_run(&sc, q.eps)?;
            m.insert(
                "result".into(),
                serde_json::to_value(&run.entry).map_err(|e| HarnessError::Io(e.to_string()))?,
            );
            w.put("observables.csv", observables_csv(sc.dims, &run.series).as_bytes())?;
            w.put("reference.csv", reference_csv(&run.reference).as_bytes())?;
            if q.snapshot {
                let t = run.series.last().map_or(0.0, |o| o.t);
                w.put("density_final.bin", &Snapshot::of(&run.psi, t).encode())?;
            }
            if plots {
                observable_plots(&mut w, "", &run.series, Some(&run.reference))?;
            }
        }
        Mode::Convergence => {
            let sc = scenario_for(cfg)?;
            let cv = cfg
                .convergence
                .as_ref()
                .ok_or_else(|| HarnessError::config("convergence", "missing required key `convergence`"))?;
            let study = convergence_study(&sc, &cv.eps)?;
            m.insert("err_x_decreasing".into(), json!(study.report.err_x_decreasing));
            m.insert("leak_decreasing".into(), json!(study.report.leak_decreasing));
            m.insert("min_order_x".into(), json!(study.report.min_order_x));
            let drift = study.report.entries.values().map(|e| e.norm_drift).fold(0.0, f64::max);
            m.insert("max_norm_drift".into(), json!(drift));
            w.json("convergence.json", &study.report)?;
            for (eps, series) in &study.series {
                w.put(
                    &format!("observables{}.csv", eps_tag(*eps)),
                    observables_csv(sc.dims, series).as_bytes(),
                )?;
            }
            if plots {
                for (eps, series) in &study.series {
                    observable_plots(&mut w, &eps_tag(*eps), series, None)?;
                }
                let col = |f: fn(&crate::pde::ConvergenceEntry) -> f64| -> Vec<(f64, f64)> {
                    cv.eps
                        .iter()
                        .filter_map(|e| study.report.entries.get(&format!("{e}")))
                        .map(|en| (en.eps, f(en)))
                        .collect()
                };
                let series = vec![
                    Series::new("err_x", col(|e| e.err_x)),
                    Series::new("err_s", col(|e| e.err_s)),
                    Series::new("leak", col(|e| e.leak)),
                ];
                w.plot(
                    "convergence.svg",
                    &Plot::lines("errors against eps", "eps", "error", series),
                )?;
            }
        }
        Mode::Identities => {
            let rep: IdentitySuiteReport = run_identity_suite(cfg.seed, cfg.identity_points)?;
            m.insert("passed".into(), json!(rep.passed));
            m.insert("checks".into(), json!(rep.checks.len()));
            let worst = rep
                .checks
                .values()
                .map(|c| c.residual / c.threshold)
                .fold(0.0, f64::max);
            m.insert("worst_residual_ratio".into(), json!(worst));
            w.json("identities.json", &rep)?;
            if !rep.passed {
                identity_failures = Some(rep.failures.clone());
            }
        }
    }

    w.artifacts.push("summary.json".into());
    let summary = RunSummary {
        scenario: cfg.scenario.clone(),
        mode: cfg.mode,
        metrics: m,
        artifacts: w.artifacts.clone(),
    };
    w.artifacts.pop();
    w.json("summary.json", &summary)?;
    if let Some(failures) = identity_failures {
        return Err(HarnessError::IdentityFailure { failures });
    }
    Ok(summary)
}
