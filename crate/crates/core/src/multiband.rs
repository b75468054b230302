//! Band decomposition of a generic `n×n` Hermitian symbol, band spin
//! Hamiltonians, band-packet transport and the bracket identity battery.
//!
//! Bands are ordered by increasing energy. All formulas work with spectral
//! projections, never with individual eigenvectors, so no gauge choice is
//! needed along an orbit.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calculus::{
    finite_difference_gradients, BracketMode, CalculusError, MatrixSymbol, PhasePolynomial, SymbolGradients,
};
use crate::dynamics::{DeltaPacket, DynamicsError, Integration};
use crate::fields::Vec3;
use crate::gamma::{c, max_abs, C64, I};
use crate::symbol::{Band, PhasePoint};

#[derive(Debug, Error, PartialEq)]
pub enum MultibandError {
    #[error("symbol is not Hermitian at the probed point (residual {0:e})")]
    NotHermitian(f64),
    #[error("bands cross or nearly cross: eigenvalue spacing {spacing:e} is between the cluster and gap tolerances")]
    Crossing { spacing: f64 },
    #[error("band structure changed from {expected:?} to {found:?}")]
    DegeneracyChanged { expected: Vec<usize>, found: Vec<usize> },
    #[error("band index {index} out of range for {count} bands")]
    BandIndex { index: usize, count: usize },
    #[error("invalid band packet: {0}")]
    InvalidPacket(String),
    #[error("at t = {t}: {source}")]
    AlongOrbit { t: f64, source: Box<MultibandError> },
    #[error(transparent)]
    Calculus(#[from] CalculusError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Relative thresholds for grouping eigenvalues into bands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandOptions {
    /// Successive eigenvalues further apart than `gap_tol · scale` start a
    /// new band.
    pub gap_tol: f64,
    /// Eigenvalues inside one band must agree to `cluster_tol · scale`.
    pub cluster_tol: f64,
}

impl Default for BandOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-6,
            cluster_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandData {
    pub energy: f64,
    pub projection: DMatrix<C64>,
    pub degeneracy: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandDecomposition {
    pub bands: Vec<BandData>,
    /// Smallest spacing between neighbouring band energies (infinite for a
    /// single band).
    pub gap: f64,
}

impl BandDecomposition {
    pub fn degeneracies(&self) -> Vec<usize> {
        self.bands.iter().map(|b| b.degeneracy).collect()
    }

    /// `Σ h_j P_j`.
    pub fn reconstruct(&self) -> DMatrix<C64> {
        let n = self.bands[0].projection.nrows();
        self.bands
            .iter()
            .fold(DMatrix::zeros(n, n), |acc, b| acc + &b.projection * c(b.energy))
    }
}

/// Clusters the spectrum of `symbol(pt)` into bands.
pub fn spectral_decompose(
    symbol: &dyn MatrixSymbol,
    pt: &PhasePoint,
    opts: &BandOptions,
) -> Result<BandDecomposition, MultibandError> {
    decompose_matrix(&symbol.eval(pt), opts)
}

pub fn decompose_matrix(h: &DMatrix<C64>, opts: &BandOptions) -> Result<BandDecomposition, MultibandError> {
    let n = h.nrows();
    let scale0 = max_abs(h).max(f64::MIN_POSITIVE);
    let herm = max_abs(&(h - h.adjoint()));
    if !(herm <= 1e-10 * scale0.max(1.0)) {
        return Err(MultibandError::NotHermitian(herm));
    }
    let eig = SymmetricEigen::new((h + h.adjoint()) * c(0.5));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let scale = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let (gap_tol, cluster_tol) = (opts.gap_tol * scale, opts.cluster_tol * scale);

    let mut clusters: Vec<Vec<usize>> = vec![vec![0]];
    for k in 1..n {
        let spacing = vals[k] - vals[k - 1];
        if spacing > gap_tol {
            clusters.push(vec![k]);
        } else {
            let cl = clusters.last_mut().expect("nonempty");
            if vals[k] - vals[cl[0]] > cluster_tol {
                return Err(MultibandError::Crossing { spacing });
            }
            cl.push(k);
        }
    }
    let mut bands = Vec::with_capacity(clusters.len());
    for cl in &clusters {
        let mut p = DMatrix::<C64>::zeros(n, n);
        for &k in cl {
            let v = eig.eigenvectors.column(order[k]);
            p += v * v.adjoint();
        }
        let mut p = (&p + p.adjoint()) * c(0.5);
        let p2 = &p * &p;
        if max_abs(&(&p2 - &p)) > 1e-14 {
            // One Newton step towards the nearest projection.
            p = &p2 * c(3.0) - &p2 * &p * c(2.0);
        }
        let energy = cl.iter().map(|&k| vals[k]).sum::<f64>() / cl.len() as f64;
        bands.push(BandData {
            energy,
            projection: p,
            degeneracy: cl.len(),
        });
    }
    let gap = bands
        .windows(2)
        .map(|w| w[1].energy - w[0].energy)
        .fold(f64::INFINITY, f64::min);
    Ok(BandDecomposition { bands, gap })
}

/// A matrix together with its phase-space gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub val: DMatrix<C64>,
    pub dq: [DMatrix<C64>; 3],
    pub dp: [DMatrix<C64>; 3],
}

impl Jet {
    pub fn new(val: DMatrix<C64>, g: SymbolGradients) -> Self {
        Self {
            val,
            dq: g.dq,
            dp: g.dp,
        }
    }

    pub fn constant(val: DMatrix<C64>) -> Self {
        let z = DMatrix::zeros(val.nrows(), val.ncols());
        Self {
            val,
            dq: std::array::from_fn(|_| z.clone()),
            dp: std::array::from_fn(|_| z.clone()),
        }
    }

    /// `f · I_n` for a scalar with gradient `(dq, dp)`.
    pub fn scalar(n: usize, f: f64, dq: [f64; 3], dp: [f64; 3]) -> Self {
        let id = DMatrix::<C64>::identity(n, n);
        Self {
            val: &id * c(f),
            dq: std::array::from_fn(|i| &id * c(dq[i])),
            dp: std::array::from_fn(|i| &id * c(dp[i])),
        }
    }

    pub fn scale(&self, k: C64) -> Jet {
        Jet {
            val: &self.val * k,
            dq: self.dq.clone().map(|m| m * k),
            dp: self.dp.clone().map(|m| m * k),
        }
    }

    pub fn gradients(&self) -> SymbolGradients {
        SymbolGradients {
            dq: self.dq.clone(),
            dp: self.dp.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.val.nrows()
    }
}

// Product rule on the gradients.
#[allow(clippy::suspicious_arithmetic_impl)]
impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, o: &Jet) -> Jet {
        Jet {
            val: &self.val * &o.val,
            dq: std::array::from_fn(|i| &self.dq[i] * &o.val + &self.val * &o.dq[i]),
            dp: std::array::from_fn(|i| &self.dp[i] * &o.val + &self.val * &o.dp[i]),
        }
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, o: &Jet) -> Jet {
        Jet {
            val: &self.val + &o.val,
            dq: std::array::from_fn(|i| &self.dq[i] + &o.dq[i]),
            dp: std::array::from_fn(|i| &self.dp[i] + &o.dp[i]),
        }
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, o: &Jet) -> Jet {
        Jet {
            val: &self.val - &o.val,
            dq: std::array::from_fn(|i| &self.dq[i] - &o.dq[i]),
            dp: std::array::from_fn(|i| &self.dp[i] - &o.dp[i]),
        }
    }
}

/// `{A, B}` of two jets.
pub fn pb(a: &Jet, b: &Jet) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(a.dim(), a.dim());
    for i in 0..3 {
        out += &a.dp[i] * &b.dq[i] - &a.dq[i] * &b.dp[i];
    }
    out
}

fn comm(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a * b - b * a
}

/// Decomposition plus first derivatives of the symbol, every band energy
/// (as `h_j I`) and every projection at one phase point.
#[derive(Debug, Clone)]
pub struct BandFrame {
    pub decomposition: BandDecomposition,
    pub symbol: Jet,
    pub energies: Vec<Jet>,
    pub projections: Vec<Jet>,
}

impl BandFrame {
    pub fn band_count(&self) -> usize {
        self.projections.len()
    }

    pub fn dim(&self) -> usize {
        self.symbol.dim()
    }

    fn check(&self, j: usize) -> Result<(), MultibandError> {
        if j >= self.band_count() {
            return Err(MultibandError::BandIndex {
                index: j,
                count: self.band_count(),
            });
        }
        Ok(())
    }

    /// `∇_p h_j` and `−∇_q h_j`.
    pub fn band_velocity(&self, j: usize) -> (Vec3, Vec3) {
        let e = &self.energies[j];
        (
            Vec3::from_fn(|i, _| e.dp[i][(0, 0)].re),
            Vec3::from_fn(|i, _| -e.dq[i][(0, 0)].re),
        )
    }

    /// `H_s^(j) = −i[P_j,{h_j,P_j}] − (i/2)h_j P_j{P_j,P_j}P_j
    /// + (i/2) Σ_{ℓ≠j} h_ℓ P_j{P_ℓ,P_ℓ}P_j`.
    pub fn spin_hamiltonian(&self, j: usize) -> Result<DMatrix<C64>, MultibandError> {
        self.check(j)?;
        let pj = &self.projections[j];
        let berry = comm(&pj.val, &pb(&self.energies[j], pj)) * (-I);
        let mut curv = DMatrix::zeros(self.dim(), self.dim());
        for (l, pl) in self.projections.iter().enumerate() {
            let sign = if l == j { -1.0 } else { 1.0 };
            let h = self.decomposition.bands[l].energy;
            curv += &pj.val * pb(pl, pl) * &pj.val * c(0.5 * sign * h);
        }
        Ok(berry + curv * I)
    }
}

/// Builds a [`BandFrame`]. Analytic mode uses the symbol's own gradients and
/// first-order perturbation theory for the bands; finite-difference mode
/// differentiates the decomposition numerically.
pub fn band_frame(
    symbol: &dyn MatrixSymbol,
    pt: &PhasePoint,
    mode: BracketMode,
    opts: &BandOptions,
) -> Result<BandFrame, MultibandError> {
    let decomposition = spectral_decompose(symbol, pt, opts)?;
    let n = symbol.dim();
    let m = decomposition.bands.len();
    let (energies, projections, hjet) = match mode {
        BracketMode::Analytic => {
            let g = symbol.gradients(pt).ok_or(CalculusError::MissingGradients)?;
            let hjet = Jet::new(symbol.eval(pt), g);
            let bands = &decomposition.bands;
            let dh = |j: usize, dm: &DMatrix<C64>| (&bands[j].projection * dm).trace().re / bands[j].degeneracy as f64;
            let dproj = |j: usize, dm: &DMatrix<C64>| {
                let pj = &bands[j].projection;
                let mut out = DMatrix::zeros(n, n);
                for (l, bl) in bands.iter().enumerate() {
                    if l != j {
                        let pl = &bl.projection;
                        out += (pl * dm * pj + pj * dm * pl) * c(1.0 / (bands[j].energy - bl.energy));
                    }
                }
                out
            };
            let energies = (0..m)
                .map(|j| {
                    let dq = std::array::from_fn(|i| dh(j, &hjet.dq[i]));
                    let dp = std::array::from_fn(|i| dh(j, &hjet.dp[i]));
                    Jet::scalar(n, bands[j].energy, dq, dp)
                })
                .collect();
            let projections = (0..m)
                .map(|j| Jet {
                    val: bands[j].projection.clone(),
                    dq: std::array::from_fn(|i| dproj(j, &hjet.dq[i])),
                    dp: std::array::from_fn(|i| dproj(j, &hjet.dp[i])),
                })
                .collect();
            (energies, projections, hjet)
        }
        BracketMode::FiniteDifference => {
            let hjet = Jet::new(symbol.eval(pt), finite_difference_gradients(symbol, pt));
            let expected = decomposition.degeneracies();
            let shifted = |axis: usize, h: f64| -> Result<BandDecomposition, MultibandError> {
                let mut p = *pt;
                if axis < 3 {
                    p.q[axis] += h;
                } else {
                    p.p[axis - 3] += h;
                }
                let d = spectral_decompose(symbol, &p, opts)?;
                if d.degeneracies() != expected {
                    return Err(MultibandError::DegeneracyChanged {
                        expected: expected.clone(),
                        found: d.degeneracies(),
                    });
                }
                Ok(d)
            };
            let mut de = vec![[0.0f64; 6]; m];
            let mut dpj: Vec<Vec<DMatrix<C64>>> = vec![Vec::with_capacity(6); m];
            for axis in 0..6 {
                let x = if axis < 3 { pt.q[axis] } else { pt.p[axis - 3] };
                let h = 1e-5 * (1.0 + x.abs());
                let (plus, minus) = (shifted(axis, h)?, shifted(axis, -h)?);
                for j in 0..m {
                    de[j][axis] = (plus.bands[j].energy - minus.bands[j].energy) / (2.0 * h);
                    dpj[j].push((&plus.bands[j].projection - &minus.bands[j].projection) * c(0.5 / h));
                }
            }
            let energies = (0..m)
                .map(|j| {
                    let d = de[j];
                    Jet::scalar(n, decomposition.bands[j].energy, [d[0], d[1], d[2]], [d[3], d[4], d[5]])
                })
                .collect();
            let projections = (0..m)
                .map(|j| Jet {
                    val: decomposition.bands[j].projection.clone(),
                    dq: std::array::from_fn(|i| dpj[j][i].clone()),
                    dp: std::array::from_fn(|i| dpj[j][i + 3].clone()),
                })
                .collect();
            (energies, projections, hjet)
        }
    };
    Ok(BandFrame {
        decomposition,
        symbol: hjet,
        energies,
        projections,
    })
}

/// `H_s^(j)` of `symbol` at `pt`.
pub fn band_spin_hamiltonian(
    symbol: &dyn MatrixSymbol,
    j: usize,
    pt: &PhasePoint,
    mode: BracketMode,
    opts: &BandOptions,
) -> Result<DMatrix<C64>, MultibandError> {
    band_frame(symbol, pt, mode, opts)?.spin_hamiltonian(j)
}

/// Index of a Dirac band in the energy-ordered list.
pub fn dirac_band_index(band: Band) -> usize {
    match band {
        Band::Positron => 0,
        Band::Electron => 1,
    }
}

/// A concentrated state in band `band` of a generic symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPacket {
    pub band: usize,
    pub q: Vec3,
    pub p: Vec3,
    pub spinor: DVector<C64>,
}

impl BandPacket {
    pub fn from_delta(packet: &DeltaPacket) -> Self {
        Self {
            band: dirac_band_index(packet.band),
            q: packet.q,
            p: packet.p,
            spinor: DVector::from_iterator(4, packet.spinor.iter().copied()),
        }
    }

    pub fn phase_point(&self) -> PhasePoint {
        PhasePoint::new(self.q, self.p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandSample {
    pub t: f64,
    pub q: Vec3,
    pub p: Vec3,
    pub spinor: DVector<C64>,
    pub energy: f64,
    pub band_residual: f64,
    pub norm_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandTrajectory {
    pub band: usize,
    pub degeneracies: Vec<usize>,
    pub samples: Vec<BandSample>,
}

#[derive(Clone)]
struct BandState {
    q: Vec3,
    p: Vec3,
    phi: DVector<C64>,
}

impl BandState {
    fn axpy(&self, h: f64, d: &BandState) -> BandState {
        BandState {
            q: self.q + d.q * h,
            p: self.p + d.p * h,
            phi: &self.phi + &d.phi * c(h),
        }
    }
}

struct BandRun<'a> {
    symbol: &'a dyn MatrixSymbol,
    band: usize,
    mode: BracketMode,
    opts: BandOptions,
    expected: Vec<usize>,
}

impl BandRun<'_> {
    fn frame(&self, s: &BandState) -> Result<BandFrame, MultibandError> {
        let pt = PhasePoint::new(s.q, s.p);
        if !pt.is_finite() {
            return Err(DynamicsError::NonFinite { last_good_t: f64::NAN }.into());
        }
        let f = band_frame(self.symbol, &pt, self.mode, &self.opts)?;
        let found = f.decomposition.degeneracies();
        if found != self.expected {
            return Err(MultibandError::DegeneracyChanged {
                expected: self.expected.clone(),
                found,
            });
        }
        Ok(f)
    }

    fn rhs(&self, s: &BandState) -> Result<BandState, MultibandError> {
        let f = self.frame(s)?;
        let (qdot, pdot) = f.band_velocity(self.band);
        let hs = f.spin_hamiltonian(self.band)?;
        Ok(BandState {
            q: qdot,
            p: pdot,
            phi: hs * &s.phi * (-I),
        })
    }

    fn sample(&self, t: f64, s: &BandState) -> Result<BandSample, MultibandError> {
        let f = self.frame(s)?;
        let bd = &f.decomposition.bands[self.band];
        let n = s.phi.len();
        Ok(BandSample {
            t,
            q: s.q,
            p: s.p,
            spinor: s.phi.clone(),
            energy: bd.energy,
            band_residual: ((DMatrix::<C64>::identity(n, n) - &bd.projection) * &s.phi).norm(),
            norm_err: (s.phi.norm() - 1.0).abs(),
        })
    }
}

/// RK4 transport of a band packet: `q̇ = ∇_p h_j`, `ṗ = −∇_q h_j`,
/// `i φ̇ = H_s^(j) φ`.
pub fn evolve_band_packet(
    packet: &BandPacket,
    symbol: &dyn MatrixSymbol,
    integ: &Integration,
    mode: BracketMode,
    opts: &BandOptions,
) -> Result<BandTrajectory, MultibandError> {
    let n = symbol.dim();
    if packet.spinor.len() != n {
        return Err(MultibandError::InvalidPacket(format!(
            "spinor has {} components, symbol is {n}×{n}",
            packet.spinor.len()
        )));
    }
    if (packet.spinor.norm() - 1.0).abs() > 1e-10 {
        return Err(MultibandError::InvalidPacket("spinor must be normalized".into()));
    }
    let d0 = spectral_decompose(symbol, &packet.phase_point(), opts)?;
    if packet.band >= d0.bands.len() {
        return Err(MultibandError::BandIndex {
            index: packet.band,
            count: d0.bands.len(),
        });
    }
    let run = BandRun {
        symbol,
        band: packet.band,
        mode,
        opts: *opts,
        expected: d0.degeneracies(),
    };
    let mut st = BandState {
        q: packet.q,
        p: packet.p,
        phi: packet.spinor.clone(),
    };
    let first = run.sample(0.0, &st)?;
    if first.band_residual > crate::dynamics::TOL_BAND {
        return Err(MultibandError::InvalidPacket(format!(
            "spinor leaves band by {:e}",
            first.band_residual
        )));
    }
    let steps = integ.steps()?;
    let h = integ.step()?;
    let mut samples = vec![first];
    let at = |t: f64, e: MultibandError| MultibandError::AlongOrbit { t, source: Box::new(e) };
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = run.rhs(&st).map_err(|e| at(t, e))?;
        let k2 = run.rhs(&st.axpy(0.5 * h, &k1)).map_err(|e| at(t, e))?;
        let k3 = run.rhs(&st.axpy(0.5 * h, &k2)).map_err(|e| at(t, e))?;
        let k4 = run.rhs(&st.axpy(h, &k3)).map_err(|e| at(t, e))?;
        st = BandState {
            q: st.q + (k1.q + k2.q * 2.0 + k3.q * 2.0 + k4.q) * (h / 6.0),
            p: st.p + (k1.p + k2.p * 2.0 + k3.p * 2.0 + k4.p) * (h / 6.0),
            phi: &st.phi + (&k1.phi + &k2.phi * c(2.0) + &k3.phi * c(2.0) + &k4.phi) * c(h / 6.0),
        };
        let t_next = if k + 1 == steps {
            integ.t_final
        } else {
            (k + 1) as f64 * h
        };
        samples.push(run.sample(t_next, &st).map_err(|e| at(t_next, e))?);
    }
    Ok(BandTrajectory {
        band: packet.band,
        degeneracies: run.expected,
        samples,
    })
}

/// A random band-diagonal test symbol `W = Σ_j f_j(q,p) P_j R_j P_j` with
/// polynomial `f_j` and constant Hermitian `R_j`.
#[derive(Debug, Clone)]
pub struct BandDiagonalProbe {
    pub parts: Vec<(PhasePolynomial, DMatrix<C64>)>,
}

impl BandDiagonalProbe {
    pub fn random(rng: &mut ChaCha8Rng, n: usize, bands: usize) -> Self {
        let parts = (0..bands)
            .map(|_| {
                let a = DMatrix::from_fn(n, n, |_, _| {
                    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                });
                (PhasePolynomial::random(rng, 3, 2), (&a + a.adjoint()) * c(0.5))
            })
            .collect();
        Self { parts }
    }

    /// `W` and its gradient at the frame's point.
    pub fn jet(&self, frame: &BandFrame, pt: &PhasePoint) -> Jet {
        let n = frame.dim();
        let mut w = Jet::constant(DMatrix::zeros(n, n));
        for (j, pj) in frame.projections.iter().enumerate() {
            let (f, r) = &self.parts[j % self.parts.len()];
            let fj = Jet::scalar(
                n,
                f.eval(pt),
                std::array::from_fn(|i| f.partial(pt, i)),
                std::array::from_fn(|i| f.partial(pt, i + 3)),
            );
            let term = &(&fj * pj) * &(&Jet::constant(r.clone()) * pj);
            w = &w + &term;
        }
        w
    }
}

/// Identity name → residual (max entry of the difference of both sides).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub residuals: BTreeMap<String, f64>,
}

impl IdentityReport {
    pub fn record(&mut self, name: &str, value: f64) {
        let e = self.residuals.entry(name.to_string()).or_insert(0.0);
        *e = e.max(value);
    }

    pub fn merge(&mut self, other: &IdentityReport) {
        for (k, v) in &other.residuals {
            self.record(k, *v);
        }
    }

    pub fn max(&self) -> f64 {
        self.residuals.values().cloned().fold(0.0, f64::max)
    }
}

/// Product-rule identity `A{B,C} − {A,B}C = {AB,C} − {A,BC}` on jets.
fn product_rule_residual(a: &Jet, b: &Jet, cc: &Jet) -> f64 {
    let lhs = &a.val * pb(b, cc) - pb(a, b) * &cc.val;
    let rhs = pb(&(a * b), cc) - pb(a, &(b * cc));
    max_abs(&(lhs - rhs))
}

/// Evaluates the bracket identities used to reduce the band transport
/// equation, with `W` a band-diagonal probe symbol.
pub fn verify_bracket_identities(frame: &BandFrame, w: &Jet) -> IdentityReport {
    let mut rep = IdentityReport::default();
    let n = frame.dim();
    let id = DMatrix::<C64>::identity(n, n);
    let m = frame.band_count();
    for j in 0..m {
        let pj = &frame.projections[j];
        let hj = &frame.energies[j];
        // P_j {h_j, P_j} P_j = 0
        let hp = pb(hj, pj);
        rep.record("band_energy_projection", max_abs(&(&pj.val * &hp * &pj.val)));
        // P_j{h_j,W}P_j = {h_j, P_jWP_j} − [P_jWP_j, [P_j,{h_j,P_j}]]
        let pwp = &(pj * w) * pj;
        let lhs = &pj.val * pb(hj, w) * &pj.val;
        let rhs = pb(hj, &pwp) - comm(&pwp.val, &comm(&pj.val, &hp));
        rep.record("energy_bracket_rewrite", max_abs(&(lhs - rhs)));
        // Product rule on the triples that appear in the reduction.
        rep.record("product_rule", product_rule_residual(pj, pj, w));
        rep.record("product_rule", product_rule_residual(w, pj, pj));
        rep.record("product_rule", product_rule_residual(&frame.symbol, w, pj));
        // P_j({W,P_j} − {P_j,W})P_j = [W, P_j{P_j,P_j}P_j]
        let lhs = &pj.val * (pb(w, pj) - pb(pj, w)) * &pj.val;
        let rhs = comm(&w.val, &(&pj.val * pb(pj, pj) * &pj.val));
        rep.record("same_band_curvature", max_abs(&(lhs - rhs)));
        for l in 0..m {
            if l == j {
                continue;
            }
            let pl = &frame.projections[l];
            rep.record("product_rule", product_rule_residual(pj, pl, w));
            // P_1{P_2,P_2} = −{P_1,P_2}(1−P_2),  {P_2,P_2}P_1 = −(1−P_2){P_2,P_1}
            let a = &pj.val * pb(pl, pl) + pb(pj, pl) * (&id - &pl.val);
            let b = pb(pl, pl) * &pj.val + (&id - &pl.val) * pb(pl, pj);
            rep.record("cross_band_curvature", max_abs(&a).max(max_abs(&b)));
            // P_1({W,P_2} − {P_2,W})P_1 = −[W, P_1{P_2,P_2}P_1]
            let lhs = &pj.val * (pb(w, pl) - pb(pl, w)) * &pj.val;
            let rhs = -comm(&w.val, &(&pj.val * pb(pl, pl) * &pj.val));
            rep.record("cross_band_commutator", max_abs(&(lhs - rhs)));
        }
    }
    rep
}

/// Both sides of the reduction of the limiting transport generator applied
/// to a band-diagonal `W`:
/// `Σ_j P_j ½({W,H} − {H,W}) P_j` and
/// `Σ_j (−{h_j, P_jWP_j} − i[H_s^(j), P_jWP_j])`.
pub fn transport_forms(frame: &BandFrame, w: &Jet) -> Result<(DMatrix<C64>, DMatrix<C64>), MultibandError> {
    let n = frame.dim();
    let raw = (pb(w, &frame.symbol) - pb(&frame.symbol, w)) * c(0.5);
    let mut lhs = DMatrix::zeros(n, n);
    let mut rhs = DMatrix::zeros(n, n);
    for j in 0..frame.band_count() {
        let pj = &frame.projections[j];
        lhs += &pj.val * &raw * &pj.val;
        let pwp = &(pj * w) * pj;
        let hs = frame.spin_hamiltonian(j)?;
        rhs += -pb(&frame.energies[j], &pwp) - comm(&hs, &pwp.val) * I;
    }
    Ok((lhs, rhs))
}
