//! Strang split-step evolution of the scaled Dirac equation
//! `iε ∂ₜψ = H_D(x, −iε∇)ψ` on periodic 1D/2D grids, band-resolved
//! observables, 1D Wigner slices and the ε-convergence study.
//!
//! The potential part `eφ − eα·A` and the kinetic part `c(α·εξ + mcβ)`
//! are both exponentiated exactly, so each step is unitary to rounding.

use std::collections::BTreeMap;

use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bmt::evolve_bmt;
use crate::calculus::weyl::{minimal_expectations, weyl_apply, MinimalCoupling};
use crate::calculus::{CalculusError, FnSymbol};
use crate::dynamics::{evolve_packet, DeltaPacket, DynamicsError, Integration};
use crate::fields::{FieldConfig, ParticleParams, Vec3};
use crate::gamma::{c, gammas, to_dynamic, ComplexMatrix4, Spinor, C64, I};
use crate::grid::{GridFft, GridSpec, GridSpinor};
use crate::symbol::{
    kinetic_matrix, projection_action, projection_of_kinetic, spin_actions, spin_operator_of_kinetic, Band,
    DiracSymbol, PhasePoint,
};

/// Relative density below which nodes and modes are skipped by the sparse
/// Weyl evaluation.
pub const SUPPORT_TOL: f64 = 1e-14;
/// Looser cutoff for expectation values; they converge faster than states.
pub const OBSERVABLE_TOL: f64 = 1e-11;
/// Largest Wigner array (x samples × p samples) produced in one call.
pub const WIGNER_MAX_CELLS: usize = 1 << 22;

#[derive(Debug, Error)]
pub enum PdeError {
    #[error(transparent)]
    Grid(#[from] CalculusError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("packet does not fit the grid: {0}")]
    PacketDoesNotFit(String),
    #[error("initial spinor is not in the electron band (residual {0:e})")]
    NotInBand(f64),
    #[error("fields do not reduce to the grid axes: {0}")]
    Fields(String),
    #[error("invalid settings: {0}")]
    Settings(String),
    #[error("wave function stopped being finite at t = {0}")]
    NonFinite(f64),
}

/// Position of grid node `idx` as a 3-vector with zero off-grid components.
fn node_position(grid: &GridSpec, idx: usize) -> Vec3 {
    let x = grid.position(idx);
    Vec3::new(x[0], x[1], 0.0)
}

/// The fields must not vary along the axes the grid does not resolve.
pub fn check_reducible(fields: &FieldConfig, grid: &GridSpec) -> Result<(), PdeError> {
    grid.validate()?;
    let len = grid.len();
    for idx in [0, len / 3, len / 2, 2 * len / 3, len - 1] {
        let s = fields.eval(&node_position(grid, idx));
        let scale = 1.0 + s.grad_phi.norm() + s.jac_a.abs().max();
        for k in grid.dims..3 {
            let bad = s.grad_phi[k].abs() > 1e-12 * scale || (0..3).any(|i| s.jac_a[(i, k)].abs() > 1e-12 * scale);
            if bad {
                return Err(PdeError::Fields(format!("φ or A depends on off-grid coordinate {k}")));
            }
        }
    }
    Ok(())
}

/// `exp(−iθ(eφ − eα·A))` in closed form, using `(α·A)² = |A|²`.
pub fn potential_exponential(phi: f64, a: &Vec3, params: &ParticleParams, theta: f64) -> ComplexMatrix4 {
    let ea = a * params.e;
    let x = theta * ea.norm();
    let sinc = if x.abs() < 1e-4 { 1.0 - x * x / 6.0 } else { x.sin() / x };
    (ComplexMatrix4::identity() * c(x.cos()) + gammas().alpha_dot(&ea) * (I * (theta * sinc)))
        * C64::from_polar(1.0, -theta * params.e * phi)
}

/// `exp(−iθ c(α·p + mcβ)) = cos(θcp0) − i sin(θcp0)(α·p + mcβ)/p0`.
pub fn kinetic_exponential(p: &Vec3, params: &ParticleParams, theta: f64) -> ComplexMatrix4 {
    let p0 = (params.m * params.m * params.c * params.c + p.norm_squared()).sqrt();
    let w = theta * params.c * p0;
    ComplexMatrix4::identity() * c(w.cos()) - kinetic_matrix(p, params) * (I * (w.sin() / p0))
}

/// Time stepping settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitStepConfig {
    pub dt: f64,
    pub n_steps: usize,
    /// Observables are recorded every this many steps.
    #[serde(default = "default_observe_every")]
    pub observe_every: usize,
}

fn default_observe_every() -> usize {
    50
}

impl SplitStepConfig {
    pub fn validate(&self) -> Result<(), PdeError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(PdeError::Settings(format!("dt must be positive, got {}", self.dt)));
        }
        if self.observe_every == 0 {
            return Err(PdeError::Settings("observe_every must be at least 1".into()));
        }
        Ok(())
    }
}

fn apply_nodes(psi: &mut GridSpinor, mats: &[ComplexMatrix4]) {
    let [a, b, cc, d] = &mut psi.comps;
    for (i, m) in mats.iter().enumerate() {
        let v = m * Spinor::new(a[i], b[i], cc[i], d[i]);
        a[i] = v[0];
        b[i] = v[1];
        cc[i] = v[2];
        d[i] = v[3];
    }
}

/// Precomputed Strang propagator `V½ K V½` for one grid, ε and dt.
pub struct SplitStepper {
    grid: GridSpec,
    eps: f64,
    dt: f64,
    fft: GridFft,
    half: Vec<ComplexMatrix4>,
    full: Vec<ComplexMatrix4>,
    kin: Vec<ComplexMatrix4>,
}

impl SplitStepper {
    pub fn new(
        grid: GridSpec,
        eps: f64,
        dt: f64,
        fields: &FieldConfig,
        params: &ParticleParams,
    ) -> Result<Self, PdeError> {
        check_reducible(fields, &grid)?;
        if !(eps.is_finite() && eps > 0.0 && dt.is_finite() && dt > 0.0) {
            return Err(PdeError::Settings("ε and dt must be positive".into()));
        }
        let theta = dt / eps;
        let nodes: Vec<(f64, Vec3)> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let s = fields.eval(&node_position(&grid, idx));
                (s.phi, s.a)
            })
            .collect();
        let half = nodes
            .par_iter()
            .map(|(phi, a)| potential_exponential(*phi, a, params, 0.5 * theta))
            .collect();
        let full = nodes
            .par_iter()
            .map(|(phi, a)| potential_exponential(*phi, a, params, theta))
            .collect();
        let kin = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let xi = grid.wavevector(idx);
                kinetic_exponential(&Vec3::new(eps * xi[0], eps * xi[1], 0.0), params, theta)
            })
            .collect();
        Ok(Self {
            grid,
            eps,
            dt,
            fft: GridFft::new(&grid),
            half,
            full,
            kin,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn kinetic(&self, psi: &mut GridSpinor) {
        self.fft.forward_spinor(psi);
        apply_nodes(psi, &self.kin);
        self.fft.inverse_spinor(psi);
    }

    /// Advances `n` Strang steps; interior potential half-steps are fused.
    pub fn advance(&self, psi: &mut GridSpinor, n: usize) -> Result<(), PdeError> {
        psi.check_compatible(&GridSpinor::zeros(self.grid, self.eps))?;
        if n == 0 {
            return Ok(());
        }
        apply_nodes(psi, &self.half);
        for k in 0..n {
            self.kinetic(psi);
            apply_nodes(psi, if k + 1 == n { &self.half } else { &self.full });
        }
        if !psi.is_finite() {
            return Err(PdeError::NonFinite(n as f64 * self.dt));
        }
        Ok(())
    }
}

/// Runs `cfg.n_steps` Strang steps from `psi`.
pub fn evolve_split_step(
    psi: &GridSpinor,
    cfg: &SplitStepConfig,
    fields: &FieldConfig,
    params: &ParticleParams,
) -> Result<GridSpinor, PdeError> {
    cfg.validate()?;
    let stepper = SplitStepper::new(psi.grid, psi.eps, cfg.dt, fields, params)?;
    let mut out = psi.clone();
    stepper.advance(&mut out, cfg.n_steps)?;
    Ok(out)
}

/// Free evolution over time `t` applied exactly in Fourier space.
pub fn exact_free_propagator(psi: &GridSpinor, t: f64, params: &ParticleParams) -> GridSpinor {
    let fft = GridFft::new(&psi.grid);
    let mut out = psi.clone();
    fft.forward_spinor(&mut out);
    let mats: Vec<ComplexMatrix4> = (0..psi.grid.len())
        .map(|idx| {
            let xi = psi.grid.wavevector(idx);
            kinetic_exponential(&Vec3::new(psi.eps * xi[0], psi.eps * xi[1], 0.0), params, t / psi.eps)
        })
        .collect();
    apply_nodes(&mut out, &mats);
    fft.inverse_spinor(&mut out);
    out
}

fn coupling_for(fields: &FieldConfig, params: &ParticleParams) -> Option<MinimalCoupling> {
    fields.linear_gauge().map(|gauge| MinimalCoupling {
        gauge,
        kappa: params.e / params.c,
    })
}

/// `[⟨Op(P₊)⟩, ⟨Op(P₊S_x)⟩, ⟨Op(P₊S_y)⟩, ⟨Op(P₊S_z)⟩]`. The spin operator
/// commutes with `P₊` at every phase point, so `P₊SP₊ = SP₊`.
fn band_expectations(psi: &GridSpinor, fields: &FieldConfig, params: &ParticleParams) -> Result<[f64; 4], PdeError> {
    let out = match coupling_for(fields, params) {
        Some(coupling) => {
            let p = *params;
            let act = move |pi: &Vec3, v: &Spinor| {
                let u = projection_action(pi, &p, Band::Electron, v);
                let [sx, sy, sz] = spin_actions(pi, &p, &u);
                [u, sx, sy, sz]
            };
            minimal_expectations::<4>(&act, &coupling, psi, OBSERVABLE_TOL)?
        }
        None => {
            let mut res = [C64::new(0.0, 0.0); 4];
            for (k, r) in res.iter_mut().enumerate() {
                let (f, p) = (fields.clone(), *params);
                let sym = FnSymbol {
                    dim: 4,
                    f: move |pt: &PhasePoint| {
                        let pi = pt.p - f.eval(&pt.q).a * (p.e / p.c);
                        let proj = projection_of_kinetic(&pi, &p, Band::Electron);
                        let m = if k == 0 {
                            proj
                        } else {
                            spin_operator_of_kinetic(&Vec3::ith(k - 1, 1.0), &pi, &p) * proj
                        };
                        to_dynamic(&m)
                    },
                };
                *r = psi.inner(&weyl_apply(&sym, psi)?)?;
            }
            res
        }
    };
    Ok(out.map(|z| z.re))
}

/// Applies the Weyl quantization of the electron projection.
pub fn project_electron_band(
    psi: &GridSpinor,
    fields: &FieldConfig,
    params: &ParticleParams,
) -> Result<GridSpinor, PdeError> {
    match coupling_for(fields, params) {
        Some(coupling) => {
            let p = *params;
            let act = move |pi: &Vec3, v: &Spinor| projection_action(pi, &p, Band::Electron, v);
            Ok(crate::calculus::weyl::weyl_apply_minimal(
                &act,
                &coupling,
                psi,
                Some(SUPPORT_TOL),
            )?)
        }
        None => {
            let (f, p) = (fields.clone(), *params);
            let sym = FnSymbol {
                dim: 4,
                f: move |pt: &PhasePoint| {
                    let pi = pt.p - f.eval(&pt.q).a * (p.e / p.c);
                    to_dynamic(&projection_of_kinetic(&pi, &p, Band::Electron))
                },
            };
            Ok(weyl_apply(&sym, psi)?)
        }
    }
}

/// Gaussian packet description on the grid axes.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketSpec {
    pub q0: [f64; 2],
    pub p0: [f64; 2],
    pub sigma: f64,
    pub spinor: Spinor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPacket {
    pub psi: GridSpinor,
    /// `1 − ⟨ψ, Op(P₊)ψ⟩` after projection and renormalization.
    pub positron_content: f64,
}

/// `exp(−|x−q0|²/4σ²) e^{ip0·x/ε} φ0`, projected on the electron band and
/// normalized.
pub fn prepare_gaussian_packet(
    spec: &PacketSpec,
    grid: GridSpec,
    eps: f64,
    fields: &FieldConfig,
    params: &ParticleParams,
) -> Result<PreparedPacket, PdeError> {
    grid.validate()?;
    check_reducible(fields, &grid)?;
    let sigma = spec.sigma;
    if !(sigma.is_finite() && sigma > 0.0 && eps.is_finite() && eps > 0.0) {
        return Err(PdeError::Settings("σ and ε must be positive".into()));
    }
    if !grid.contains_with_margin(&spec.q0, 8.0 * sigma) {
        return Err(PdeError::PacketDoesNotFit(format!(
            "center {:?} with σ = {sigma} is too close to the edge",
            spec.q0
        )));
    }
    let xi_max = std::f64::consts::PI / grid.dx();
    for a in 0..grid.dims {
        if spec.p0[a].abs() / eps + 4.0 / sigma > xi_max {
            return Err(PdeError::PacketDoesNotFit(format!(
                "momentum {} along axis {a} is not resolved (max |ξ| = {xi_max:.3})",
                spec.p0[a]
            )));
        }
    }
    let q0 = Vec3::new(spec.q0[0], spec.q0[1], 0.0);
    let p0 = Vec3::new(spec.p0[0], spec.p0[1], 0.0);
    let frame = DiracSymbol::new(fields.clone(), *params).frame(&PhasePoint::new(q0, p0));
    let phi0 = spec.spinor / C64::new(spec.spinor.norm(), 0.0);
    let residual = (phi0 - frame.p_plus * phi0).norm();
    if !(residual <= 1e-8) {
        return Err(PdeError::NotInBand(residual));
    }
    let d = grid.dims;
    let mut psi = GridSpinor::from_fn(grid, eps, |x| {
        let r2: f64 = (0..d).map(|a| (x[a] - spec.q0[a]).powi(2)).sum();
        let ph: f64 = (0..d).map(|a| spec.p0[a] * x[a]).sum::<f64>() / eps;
        phi0 * C64::from_polar((-r2 / (4.0 * sigma * sigma)).exp(), ph)
    });
    psi.normalize()?;
    let mut psi = project_electron_band(&psi, fields, params)?;
    psi.normalize()?;
    let occ = band_expectations(&psi, fields, params)?[0];
    Ok(PreparedPacket {
        psi,
        positron_content: 1.0 - occ,
    })
}

/// Diagnostics of a grid state at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridObservables {
    pub t: f64,
    pub mean_x: [f64; 2],
    pub mean_p: [f64; 2],
    pub band_occupation: f64,
    pub s: [f64; 3],
    pub norm_err: f64,
    /// Root of the summed position variances.
    pub width: f64,
}

pub fn grid_observables(
    psi: &GridSpinor,
    t: f64,
    fields: &FieldConfig,
    params: &ParticleParams,
) -> Result<GridObservables, PdeError> {
    let g = psi.grid;
    let dens = psi.density();
    let total: f64 = dens.iter().sum();
    if !(total > 0.0) {
        return Err(PdeError::Settings("state has zero norm".into()));
    }
    let mut mean_x = [0.0; 2];
    let mut second = 0.0;
    for (idx, w) in dens.iter().enumerate() {
        let x = g.position(idx);
        for a in 0..g.dims {
            mean_x[a] += w * x[a];
            second += w * x[a] * x[a];
        }
    }
    mean_x.iter_mut().for_each(|m| *m /= total);
    let width = (second / total - mean_x.iter().map(|m| m * m).sum::<f64>())
        .max(0.0)
        .sqrt();

    let mut hat = psi.clone();
    GridFft::new(&g).forward_spinor(&mut hat);
    let hdens = hat.density();
    let htotal: f64 = hdens.iter().sum();
    let mut mean_p = [0.0; 2];
    for (idx, w) in hdens.iter().enumerate() {
        let xi = g.wavevector(idx);
        for a in 0..g.dims {
            mean_p[a] += w * psi.eps * xi[a];
        }
    }
    mean_p.iter_mut().for_each(|m| *m /= htotal);

    let [occ, sx, sy, sz] = band_expectations(psi, fields, params)?;
    Ok(GridObservables {
        t,
        mean_x,
        mean_p,
        band_occupation: occ,
        s: [sx, sy, sz],
        norm_err: (psi.norm() - 1.0).abs(),
        width,
    })
}

pub fn observables_csv_header(dims: usize) -> String {
    let axes = ["x", "y"];
    let mut cols = vec!["t".to_string()];
    cols.extend(axes[..dims].iter().map(|a| format!("mean_{a}")));
    cols.extend(axes[..dims].iter().map(|a| format!("mean_p{a}")));
    cols.extend(["band_occupation", "sx", "sy", "sz", "norm_err"].map(String::from));
    cols.join(",")
}

pub fn observables_csv(dims: usize, rows: &[GridObservables]) -> String {
    let mut out = observables_csv_header(dims);
    out.push('\n');
    for r in rows {
        let mut vals = vec![r.t];
        vals.extend(&r.mean_x[..dims]);
        vals.extend(&r.mean_p[..dims]);
        vals.extend([r.band_occupation, r.s[0], r.s[1], r.s[2], r.norm_err]);
        let line: Vec<String> = vals.iter().map(|v| format!("{v:.12e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Matrix Wigner function on a rectangular (x, p) lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerSlice {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    /// Row-major in x: entry `(i, k)` is `values[i * p.len() + k]`.
    pub values: Vec<ComplexMatrix4>,
}

impl WignerSlice {
    pub fn at(&self, i: usize, k: usize) -> &ComplexMatrix4 {
        &self.values[i * self.p.len() + k]
    }

    pub fn dp(&self) -> f64 {
        self.p[1] - self.p[0]
    }

    /// `∫ W dp` at x sample `i`.
    pub fn position_marginal(&self, i: usize) -> ComplexMatrix4 {
        (0..self.p.len()).fold(ComplexMatrix4::zeros(), |acc, k| acc + self.at(i, k)) * c(self.dp())
    }

    /// `∫ W dx` at momentum sample `k`, for slices taken with stride 1.
    pub fn momentum_marginal(&self, k: usize, dx: f64) -> ComplexMatrix4 {
        (0..self.x.len()).fold(ComplexMatrix4::zeros(), |acc, i| acc + self.at(i, k)) * c(dx)
    }
}

/// `W(x,p) = (2π)⁻¹ ∫ ψ(x − εξ/2) ψ(x + εξ/2)† e^{ipξ} dξ` for a 1D state.
///
/// `ψ` is interpolated spectrally onto the half-spaced grid so the
/// integrand needs no other interpolation; the momentum lattice is
/// `p_k = πkε/L`, `k = −N..N−1`. Every `stride`-th grid node is an x sample.
/// The lag integral is cut at `|εξ/2| ≤ L/4`, which is exact for states
/// supported on less than half the box.
pub fn wigner_slice_1d(psi: &GridSpinor, stride: usize) -> Result<WignerSlice, PdeError> {
    let g = psi.grid;
    g.validate()?;
    if g.dims != 1 {
        return Err(PdeError::Settings(format!(
            "Wigner slices need a 1D grid, got {}D",
            g.dims
        )));
    }
    if stride == 0 {
        return Err(PdeError::Settings("stride must be at least 1".into()));
    }
    let n = g.n;
    let m = 2 * n;
    let xs: Vec<usize> = (0..n).step_by(stride).collect();
    if xs.len() * m > WIGNER_MAX_CELLS {
        return Err(PdeError::Settings(format!(
            "Wigner array {}×{m} too large; raise the stride",
            xs.len()
        )));
    }
    let mut planner = FftPlanner::<f64>::new();
    let (fwd, inv2) = (planner.plan_fft_forward(n), planner.plan_fft_inverse(m));
    // Zero-padded spectral interpolation; the Nyquist mode is split evenly.
    let fine: Vec<Vec<C64>> = psi
        .comps
        .iter()
        .map(|comp| {
            let mut hat = comp.clone();
            fwd.process(&mut hat);
            let mut pad = vec![C64::new(0.0, 0.0); m];
            pad[..n / 2].copy_from_slice(&hat[..n / 2]);
            pad[n / 2 + 1 + n..].copy_from_slice(&hat[n / 2 + 1..]);
            pad[n / 2] = hat[n / 2] * 0.5;
            pad[n / 2 + n] = hat[n / 2] * 0.5;
            inv2.process(&mut pad);
            pad.iter().map(|z| z / n as f64).collect()
        })
        .collect();
    let pref = g.dx() / (2.0 * std::f64::consts::PI * psi.eps);
    let rows: Vec<Vec<ComplexMatrix4>> = xs
        .par_iter()
        .map(|&i| {
            let mut planner = FftPlanner::<f64>::new();
            let inv = planner.plan_fft_inverse(m);
            let mut ent: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); m]; 16];
            for j in 0..m {
                // Lags |y| ≤ L/4 only: longer ones would pair the packet with
                // its periodic image.
                let lag = if j < n { j } else { m - j };
                let weight = match lag.cmp(&(n / 2)) {
                    std::cmp::Ordering::Less => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Greater => continue,
                };
                let minus = (2 * i + m - j) % m;
                let plus = (2 * i + j) % m;
                for a in 0..4 {
                    for b in 0..4 {
                        ent[a * 4 + b][j] = fine[a][minus] * fine[b][plus].conj() * weight;
                    }
                }
            }
            for e in &mut ent {
                inv.process(e);
            }
            (0..m)
                .map(|kk| {
                    // Output sorted by signed k = −N..N−1.
                    let slot = (kk + n) % m;
                    ComplexMatrix4::from_fn(|a, b| ent[a * 4 + b][slot] * pref)
                })
                .collect()
        })
        .collect();
    let dp = std::f64::consts::PI * psi.eps / g.length;
    Ok(WignerSlice {
        x: xs.iter().map(|&i| g.coord(0, i)).collect(),
        p: (0..m).map(|kk| (kk as f64 - n as f64) * dp).collect(),
        values: rows.into_iter().flatten().collect(),
    })
}

/// One member of the ε-study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceScenario {
    pub fields: FieldConfig,
    pub params: ParticleParams,
    pub q0: [f64; 2],
    pub p0: [f64; 2],
    pub spin_axis: [f64; 3],
    pub dims: usize,
    pub n: usize,
    pub length: f64,
    pub center: [f64; 2],
    pub t_final: f64,
    /// Time step in units of ε.
    pub dt_over_eps: f64,
    /// Packet width `σ = sqrt(width_factor · ε)`.
    pub width_factor: f64,
    /// Number of observation times after t = 0.
    pub observations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderEstimates {
    pub err_x: Option<f64>,
    pub leak: Option<f64>,
    pub err_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceEntry {
    pub eps: f64,
    pub dt: f64,
    pub steps: usize,
    pub err_x: f64,
    pub err_p: f64,
    /// `max_t |1 − ⟨Op(P₊)⟩|`.
    pub leak: f64,
    /// `max_t (1 − ⟨Op(P₊)⟩)`; negative at O(ε²) because the quantized
    /// projection is not an exact projector.
    pub leak_signed: f64,
    pub err_s: f64,
    pub norm_drift: f64,
    pub initial_leak: f64,
    /// Orders against the next smaller ε in the list.
    pub order_estimates: OrderEstimates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceReport {
    pub entries: BTreeMap<String, ConvergenceEntry>,
    pub err_x_decreasing: bool,
    pub leak_decreasing: bool,
    pub min_order_x: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub report: ConvergenceReport,
    /// Observable series per ε, in the order of the input list.
    pub series: Vec<(f64, Vec<GridObservables>)>,
}

/// One ε-member of a study, with the final state kept.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumRun {
    pub entry: ConvergenceEntry,
    pub series: Vec<GridObservables>,
    pub psi: GridSpinor,
    /// Classical orbit and BMT spin at each observation time.
    pub reference: Vec<(f64, Vec3, Vec3)>,
}

/// Runs the scenario at a single ε.
pub fn quantum_run(sc: &ConvergenceScenario, eps: f64) -> Result<QuantumRun, PdeError> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(PdeError::Settings(format!("ε must be positive, got {eps}")));
    }
    run_epsilon(sc, eps)
}

fn run_epsilon(sc: &ConvergenceScenario, eps: f64) -> Result<QuantumRun, PdeError> {
    let grid = GridSpec::centered(sc.dims, sc.n, sc.length, sc.center)?;
    let symbol = DiracSymbol::new(sc.fields.clone(), sc.params);
    let lift = |v: [f64; 2]| Vec3::new(v[0], if sc.dims == 2 { v[1] } else { 0.0 }, 0.0);
    let (q0, p0) = (lift(sc.q0), lift(sc.p0));
    let packet = DeltaPacket::polarized(&symbol, q0, p0, &Vec3::from(sc.spin_axis), Band::Electron)?;
    if sc.observations == 0 || !(sc.dt_over_eps > 0.0 && sc.t_final > 0.0 && sc.width_factor > 0.0) {
        return Err(PdeError::Settings(
            "observations, dt_over_eps, t_final and width_factor must be positive".into(),
        ));
    }
    let stride = (sc.t_final / (sc.dt_over_eps * eps) / sc.observations as f64)
        .ceil()
        .max(1.0) as usize;
    let steps = stride * sc.observations;
    let dt = sc.t_final / steps as f64;
    let integ = Integration::new(sc.t_final, dt)?;
    let record = evolve_packet(&packet, &symbol, &integ)?;
    let s_bmt = evolve_bmt(&packet.polarization(&symbol), &record, &symbol, &integ)?;
    if record.samples.len() != steps + 1 || s_bmt.len() != steps + 1 {
        return Err(PdeError::Settings(
            "reference trajectory does not match the step count".into(),
        ));
    }
    let spec = PacketSpec {
        q0: [q0[0], q0[1]],
        p0: [p0[0], p0[1]],
        sigma: (sc.width_factor * eps).sqrt(),
        spinor: packet.spinor,
    };
    let prepared = prepare_gaussian_packet(&spec, grid, eps, &sc.fields, &sc.params)?;
    let stepper = SplitStepper::new(grid, eps, dt, &sc.fields, &sc.params)?;
    let mut psi = prepared.psi;
    let norm0 = psi.norm();
    let mut series = Vec::with_capacity(sc.observations + 1);
    let mut reference = Vec::with_capacity(sc.observations + 1);
    let (mut err_x, mut err_p, mut err_s, mut drift) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut leak, mut leak_signed) = (0.0f64, f64::NEG_INFINITY);
    for j in 0..=sc.observations {
        if j > 0 {
            stepper.advance(&mut psi, stride)?;
        }
        let k = j * stride;
        let obs = grid_observables(&psi, k as f64 * dt, &sc.fields, &sc.params)?;
        let cl = &record.samples[k];
        for a in 0..sc.dims {
            err_x = err_x.max((obs.mean_x[a] - cl.q[a]).abs());
            err_p = err_p.max((obs.mean_p[a] - cl.p[a]).abs());
        }
        let sb = s_bmt[k].1;
        err_s = err_s.max((Vec3::from(obs.s) - sb).norm());
        leak = leak.max((1.0 - obs.band_occupation).abs());
        leak_signed = leak_signed.max(1.0 - obs.band_occupation);
        drift = drift.max((psi.norm() - norm0).abs());
        series.push(obs);
        reference.push((cl.t, cl.q, sb));
    }
    let entry = ConvergenceEntry {
        eps,
        dt,
        steps,
        err_x,
        err_p,
        leak,
        leak_signed,
        err_s,
        norm_drift: drift,
        initial_leak: prepared.positron_content,
        order_estimates: OrderEstimates {
            err_x: None,
            leak: None,
            err_s: None,
        },
    };
    Ok(QuantumRun {
        entry,
        series,
        psi,
        reference,
    })
}

fn order(e1: f64, e2: f64, eps1: f64, eps2: f64) -> Option<f64> {
    (e1 > 0.0 && e2 > 0.0).then(|| (e1 / e2).ln() / (eps1 / eps2).ln())
}

/// Runs the scenario for every ε (in parallel) and compares the grid
/// observables with the classical orbit and the BMT spin.
pub fn convergence_study(sc: &ConvergenceScenario, eps_list: &[f64]) -> Result<ConvergenceStudy, PdeError> {
    if eps_list.is_empty() || eps_list.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(PdeError::Settings("ε list must be non-empty and positive".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(PdeError::Settings("ε list must be strictly decreasing".into()));
    }
    let runs: Vec<QuantumRun> = eps_list
        .par_iter()
        .map(|&eps| run_epsilon(sc, eps))
        .collect::<Result<_, _>>()?;
    let mut entries: Vec<ConvergenceEntry> = runs.iter().map(|r| r.entry.clone()).collect();
    for i in 0..entries.len().saturating_sub(1) {
        let (a, b) = (&entries[i], &entries[i + 1]);
        let est = OrderEstimates {
            err_x: order(a.err_x, b.err_x, a.eps, b.eps),
            leak: order(a.leak, b.leak, a.eps, b.eps),
            err_s: order(a.err_s, b.err_s, a.eps, b.eps),
        };
        entries[i].order_estimates = est;
    }
    let err_x_decreasing = entries.windows(2).all(|w| w[1].err_x < w[0].err_x);
    let leak_decreasing = entries.windows(2).all(|w| w[1].leak < w[0].leak);
    let min_order_x = entries.iter().filter_map(|e| e.order_estimates.err_x).reduce(f64::min);
    let report = ConvergenceReport {
        entries: entries.into_iter().map(|e| (format!("{}", e.eps), e)).collect(),
        err_x_decreasing,
        leak_decreasing,
        min_order_x,
    };
    Ok(ConvergenceStudy {
        report,
        series: runs.into_iter().map(|r| (r.entry.eps, r.series)).collect(),
    })
}
