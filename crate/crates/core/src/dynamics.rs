//! Limit dynamics of a concentrated Wigner state: the classical orbit in
//! one band and the spinor transported along it.

use std::fmt::Write as _;

use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::Vec3;
use crate::gamma::{c, ComplexMatrix4, Spinor, C64, I};
use crate::symbol::{Band, DiracFrame, DiracSymbol, PhasePoint, SymbolError};

/// Tolerance for band membership of a freshly built packet.
pub const TOL_BAND: f64 = 1e-8;
/// Hard cap on the number of integration steps a single run may take.
pub const MAX_STEPS: usize = 50_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("invalid packet: {0}")]
    InvalidPacket(String),
    #[error("invalid integration settings: {0}")]
    Settings(String),
    #[error("state became non-finite after t = {last_good_t}")]
    NonFinite { last_good_t: f64 },
    #[error("time range mismatch: {0}")]
    TimeRange(String),
    #[error(transparent)]
    Symbol(#[from] SymbolError),
}

/// Fixed-step integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Integration {
    pub t_final: f64,
    pub dt: f64,
}

impl Integration {
    pub fn new(t_final: f64, dt: f64) -> Result<Self, DynamicsError> {
        let s = Self { t_final, dt };
        s.steps()?;
        Ok(s)
    }

    /// Number of steps; the actual step is `t_final / steps`.
    pub fn steps(&self) -> Result<usize, DynamicsError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(DynamicsError::Settings(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(DynamicsError::Settings(format!(
                "t_final must be nonnegative, got {}",
                self.t_final
            )));
        }
        let n = (self.t_final / self.dt - 1e-9).ceil().max(0.0);
        if n > MAX_STEPS as f64 {
            return Err(DynamicsError::Settings(format!(
                "more than {MAX_STEPS} steps requested"
            )));
        }
        Ok(n as usize)
    }

    pub fn step(&self) -> Result<f64, DynamicsError> {
        let n = self.steps()?;
        Ok(if n == 0 { 0.0 } else { self.t_final / n as f64 })
    }
}

/// `δ(q − q₀) δ(p − p₀) |φ⟩⟨φ|` with a weight, living in one band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaPacket {
    pub q: Vec3,
    pub p: Vec3,
    pub spinor: Spinor,
    pub weight: f64,
    pub band: Band,
}

impl DeltaPacket {
    /// Validates norm and band membership; the spinor is not modified.
    pub fn new(
        symbol: &DiracSymbol,
        q: Vec3,
        p: Vec3,
        spinor: Spinor,
        weight: f64,
        band: Band,
    ) -> Result<Self, DynamicsError> {
        let packet = Self {
            q,
            p,
            spinor,
            weight,
            band,
        };
        packet.validate(symbol)?;
        Ok(packet)
    }

    pub fn validate(&self, symbol: &DiracSymbol) -> Result<(), DynamicsError> {
        let pt = self.phase_point();
        if !pt.is_finite() || !self.spinor.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(DynamicsError::InvalidPacket("non-finite state".into()));
        }
        if !(self.weight.is_finite() && self.weight >= 0.0) {
            return Err(DynamicsError::InvalidPacket("weight must be nonnegative".into()));
        }
        if (self.spinor.norm() - 1.0).abs() > 1e-10 {
            return Err(DynamicsError::InvalidPacket(format!(
                "spinor norm {} is not 1",
                self.spinor.norm()
            )));
        }
        let res = band_residual(&symbol.frame(&pt), self.band, &self.spinor);
        if res > TOL_BAND {
            return Err(DynamicsError::InvalidPacket(format!(
                "spinor leaves the band by {res:e}"
            )));
        }
        Ok(())
    }

    /// Packet in `band` polarized along `a`: the +1 eigenvector of
    /// `P (a·S) P`, with its largest component made real and positive.
    pub fn polarized(symbol: &DiracSymbol, q: Vec3, p: Vec3, a: &Vec3, band: Band) -> Result<Self, DynamicsError> {
        let pt = PhasePoint::new(q, p);
        if !pt.is_finite() {
            return Err(DynamicsError::InvalidPacket("non-finite phase point".into()));
        }
        let frame = symbol.frame(&pt);
        let proj = frame.projection(band);
        let s = frame.spin_matrix(a)?;
        let m = proj * s * proj;
        let eig = SymmetricEigen::new((m + m.adjoint()) * c(0.5));
        let k = eig.eigenvalues.imax();
        let mut v: Spinor = eig.eigenvectors.column(k).into_owned();
        let big = v.icamax();
        let phase = v[big] / v[big].norm();
        v /= phase;
        v /= C64::new(v.norm(), 0.0);
        Self::new(symbol, q, p, v, 1.0, band)
    }

    pub fn phase_point(&self) -> PhasePoint {
        PhasePoint::new(self.q, self.p)
    }

    /// Polarization `s_k = ⟨φ, P (e_k·S) P φ⟩`.
    pub fn polarization(&self, symbol: &DiracSymbol) -> Vec3 {
        polarization_in_frame(&symbol.frame(&self.phase_point()), self.band, &self.spinor)
    }
}

pub fn polarization_in_frame(frame: &DiracFrame, band: Band, spinor: &Spinor) -> Vec3 {
    let proj = frame.projection(band);
    Vec3::from_fn(|k, _| {
        let op = proj * frame.spin_operator(&Vec3::ith(k, 1.0)) * proj;
        spinor.dotc(&(op * spinor)).re
    })
}

pub fn band_residual(frame: &DiracFrame, band: Band, spinor: &Spinor) -> f64 {
    ((ComplexMatrix4::identity() - frame.projection(band)) * spinor).norm()
}

/// `(dq/dt, dp/dt) = (∇_p h, −∇_q h)` for the band energy.
pub fn classical_rhs(symbol: &DiracSymbol, pt: &PhasePoint, band: Band) -> (Vec3, Vec3) {
    let g = symbol.frame(pt).energy_gradient(band);
    (g.dp, -g.dq)
}

/// `dφ/dt = −i H_s φ` with the band spin Hamiltonian.
pub fn spinor_rhs(symbol: &DiracSymbol, spinor: &Spinor, pt: &PhasePoint, band: Band) -> Spinor {
    spinor_rhs_in_frame(&symbol.frame(pt), spinor, band)
}

fn spinor_rhs_in_frame(frame: &DiracFrame, spinor: &Spinor, band: Band) -> Spinor {
    frame.spin_hamiltonian(band) * spinor * (-I)
}

#[derive(Debug, Clone, Copy)]
struct State {
    q: Vec3,
    p: Vec3,
    phi: Spinor,
}

impl State {
    fn axpy(&self, h: f64, d: &State) -> State {
        State {
            q: self.q + d.q * h,
            p: self.p + d.p * h,
            phi: self.phi + d.phi * c(h),
        }
    }

    fn is_finite(&self) -> bool {
        self.q.iter().chain(self.p.iter()).all(|x| x.is_finite())
            && self.phi.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

fn rhs(symbol: &DiracSymbol, s: &State, band: Band) -> State {
    let frame = symbol.frame(&PhasePoint::new(s.q, s.p));
    let g = frame.energy_gradient(band);
    State {
        q: g.dp,
        p: -g.dq,
        phi: spinor_rhs_in_frame(&frame, &s.phi, band),
    }
}

fn rk4_step(symbol: &DiracSymbol, s: &State, h: f64, band: Band) -> State {
    let k1 = rhs(symbol, s, band);
    let k2 = rhs(symbol, &s.axpy(0.5 * h, &k1), band);
    let k3 = rhs(symbol, &s.axpy(0.5 * h, &k2), band);
    let k4 = rhs(symbol, &s.axpy(h, &k3), band);
    State {
        q: s.q + (k1.q + k2.q * 2.0 + k3.q * 2.0 + k4.q) * (h / 6.0),
        p: s.p + (k1.p + k2.p * 2.0 + k3.p * 2.0 + k4.p) * (h / 6.0),
        phi: s.phi + (k1.phi + k2.phi * c(2.0) + k3.phi * c(2.0) + k4.phi) * c(h / 6.0),
    }
}

/// One recorded time of a transported packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub q: Vec3,
    pub p: Vec3,
    pub qdot: Vec3,
    pub pdot: Vec3,
    pub v: Vec3,
    pub gamma: f64,
    /// Energy of the packet's band.
    pub h: f64,
    pub spinor: Spinor,
    pub s: Vec3,
    pub band_residual: f64,
    pub norm_err: f64,
}

impl TrajectorySample {
    fn new(symbol: &DiracSymbol, t: f64, st: &State, band: Band) -> Self {
        let pt = PhasePoint::new(st.q, st.p);
        let frame = symbol.frame(&pt);
        let g = frame.energy_gradient(band);
        Self {
            t,
            q: st.q,
            p: st.p,
            qdot: g.dp,
            pdot: -g.dq,
            v: frame.kin.v,
            gamma: frame.kin.gamma,
            h: frame.band_energy(band),
            spinor: st.phi,
            s: polarization_in_frame(&frame, band, &st.phi),
            band_residual: band_residual(&frame, band, &st.phi),
            norm_err: (st.phi.norm() - 1.0).abs(),
        }
    }

    pub fn phase_point(&self) -> PhasePoint {
        PhasePoint::new(self.q, self.p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub band: Band,
    pub samples: Vec<TrajectorySample>,
}

pub const TRAJECTORY_CSV_HEADER: &str = "t,qx,qy,qz,px,py,pz,vx,vy,vz,gamma,h_plus,sx,sy,sz,band_residual,norm_err";

impl TrajectoryRecord {
    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().expect("a record always holds the initial state")
    }

    pub fn t_final(&self) -> f64 {
        self.last().t
    }

    /// CSV with one row per sample. The `h_plus` column holds the energy of
    /// the packet's band.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(200 * (self.samples.len() + 1));
        out.push_str(TRAJECTORY_CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{}", s.t);
            for v in [&s.q, &s.p, &s.v] {
                for x in v.iter() {
                    let _ = write!(out, ",{x}");
                }
            }
            let _ = write!(out, ",{},{}", s.gamma, s.h);
            for x in s.s.iter() {
                let _ = write!(out, ",{x}");
            }
            let _ = writeln!(out, ",{},{}", s.band_residual, s.norm_err);
        }
        out
    }

    pub fn max_band_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.band_residual).fold(0.0, f64::max)
    }

    pub fn max_norm_err(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_err).fold(0.0, f64::max)
    }

    /// Largest `|h(t) − h(0)| / |h(0)|`.
    pub fn max_energy_drift(&self) -> f64 {
        let h0 = self.samples[0].h;
        self.samples
            .iter()
            .map(|s| (s.h - h0).abs() / h0.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

/// Joint RK4 transport of orbit and spinor. No re-projection onto the band
/// is applied; the band residual is reported as a diagnostic.
pub fn evolve_packet(
    packet: &DeltaPacket,
    symbol: &DiracSymbol,
    integ: &Integration,
) -> Result<TrajectoryRecord, DynamicsError> {
    packet.validate(symbol)?;
    let n = integ.steps()?;
    let h = integ.step()?;
    let band = packet.band;
    let mut st = State {
        q: packet.q,
        p: packet.p,
        phi: packet.spinor,
    };
    let mut samples = Vec::with_capacity(n + 1);
    samples.push(TrajectorySample::new(symbol, 0.0, &st, band));
    for k in 1..=n {
        let next = rk4_step(symbol, &st, h, band);
        if !next.is_finite() {
            return Err(DynamicsError::NonFinite {
                last_good_t: (k - 1) as f64 * h,
            });
        }
        st = next;
        let t = if k == n { integ.t_final } else { k as f64 * h };
        let sample = TrajectorySample::new(symbol, t, &st, band);
        if !(sample.gamma.is_finite() && sample.h.is_finite()) {
            return Err(DynamicsError::NonFinite {
                last_good_t: (k - 1) as f64 * h,
            });
        }
        samples.push(sample);
    }
    Ok(TrajectoryRecord { band, samples })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub records: Vec<TrajectoryRecord>,
    pub weights: Vec<f64>,
    /// Weight-averaged polarization at each recorded time.
    pub mean_s: Vec<(f64, Vec3)>,
}

/// Independent evolution of an incoherent superposition of packets.
pub fn ensemble_evolve(
    packets: &[DeltaPacket],
    symbol: &DiracSymbol,
    integ: &Integration,
) -> Result<EnsembleResult, DynamicsError> {
    if packets.is_empty() {
        return Err(DynamicsError::InvalidPacket("empty ensemble".into()));
    }
    let total: f64 = packets.iter().map(|p| p.weight).sum();
    if (total - 1.0).abs() > 1e-12 * packets.len() as f64 {
        return Err(DynamicsError::InvalidPacket(format!("weights sum to {total}, not 1")));
    }
    let records = packets
        .par_iter()
        .map(|p| evolve_packet(p, symbol, integ))
        .collect::<Result<Vec<_>, _>>()?;
    let weights: Vec<f64> = packets.iter().map(|p| p.weight).collect();
    let mean_s = (0..records[0].samples.len())
        .map(|i| {
            let s = records
                .iter()
                .zip(&weights)
                .fold(Vec3::zeros(), |acc, (r, w)| acc + r.samples[i].s * *w);
            (records[0].samples[i].t, s)
        })
        .collect();
    Ok(EnsembleResult {
        records,
        weights,
        mean_s,
    })
}

/// Period `2π γ m c / (|e| |B|)` of relativistic cyclotron motion.
pub fn cyclotron_period(params: &crate::fields::ParticleParams, b: f64, gamma: f64) -> f64 {
    2.0 * std::f64::consts::PI * gamma * params.m * params.c / (params.e.abs() * b.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{FieldConfig, ParticleParams};
    use crate::sampling::{random_phase_point, random_scenario, random_unit};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform_b(b: f64) -> DiracSymbol {
        DiracSymbol::new(
            FieldConfig::UniformB {
                b: [0.0, 0.0, b],
                center: [0.0; 3],
            },
            ParticleParams::default(),
        )
    }

    #[test]
    fn free_flight() {
        let sym = DiracSymbol::new(FieldConfig::Free, ParticleParams::default());
        let pt = PhasePoint::new(Vec3::new(0.1, 0.2, 0.3), Vec3::new(0.5, -0.4, 1.0));
        let (dq, dp) = classical_rhs(&sym, &pt, Band::Electron);
        assert_eq!(dp, Vec3::zeros());
        assert!((dq - sym.kinematics(&pt).v).norm() < 1e-15);
        let packet = DeltaPacket::polarized(&sym, pt.q, pt.p, &Vec3::z(), Band::Electron).unwrap();
        assert_eq!(spinor_rhs(&sym, &packet.spinor, &pt, Band::Electron), Spinor::zeros());
        let rec = evolve_packet(&packet, &sym, &Integration::new(1.0, 0.01).unwrap()).unwrap();
        assert!((rec.last().q - (pt.q + dq)).norm() < 1e-10);
        assert_eq!(rec.last().spinor, packet.spinor);
    }

    #[test]
    fn zero_time_keeps_only_initial_state() {
        let sym = uniform_b(1.0);
        let packet = DeltaPacket::polarized(&sym, Vec3::zeros(), Vec3::x(), &Vec3::y(), Band::Electron).unwrap();
        let rec = evolve_packet(&packet, &sym, &Integration::new(0.0, 0.1).unwrap()).unwrap();
        assert_eq!(rec.samples.len(), 1);
        assert_eq!(rec.samples[0].q, packet.q);
    }

    #[test]
    fn uniform_e_gives_constant_canonical_force() {
        let params = ParticleParams {
            m: 1.3,
            e: -0.7,
            c: 1.1,
        };
        let sym = DiracSymbol::new(
            FieldConfig::UniformE {
                e: [0.4, -0.2, 0.9],
                center: [0.0; 3],
            },
            params,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pt = random_phase_point(&mut rng);
        let (_, dp) = classical_rhs(&sym, &pt, Band::Electron);
        assert!((dp - Vec3::new(0.4, -0.2, 0.9) * params.e).norm() < 1e-14);
    }

    #[test]
    fn cyclotron_orbit_closes_after_one_period() {
        // γ = 2: |π| = √3 mc.
        let b = 1.0;
        let sym = uniform_b(b);
        let params = sym.params;
        let p = Vec3::new(3f64.sqrt(), 0.0, 0.0);
        let period = cyclotron_period(&params, b, 2.0);
        let packet = DeltaPacket::polarized(&sym, Vec3::zeros(), p, &Vec3::x(), Band::Electron).unwrap();
        let rec = evolve_packet(&packet, &sym, &Integration::new(period, period / 2000.0).unwrap()).unwrap();
        assert!((rec.last().q - packet.q).norm() < 1e-9);
        assert!((rec.last().p - packet.p).norm() < 1e-9);
        // Radius γ m v / (|e| B) = |π| c / (|e| B).
        let radius = rec.samples.iter().map(|s| s.q.norm()).fold(0.0, f64::max) / 2.0;
        assert!((radius - 3f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn polarization_examples() {
        let sym = DiracSymbol::new(FieldConfig::Free, ParticleParams::default());
        let up = Spinor::new(c(1.0), c(0.0), c(0.0), c(0.0));
        let packet = DeltaPacket::new(&sym, Vec3::zeros(), Vec3::zeros(), up, 1.0, Band::Electron).unwrap();
        assert!((packet.polarization(&sym) - Vec3::z()).norm() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let sym = random_scenario(&mut rng);
            let pt = random_phase_point(&mut rng);
            let a = random_unit(&mut rng);
            for band in [Band::Electron, Band::Positron] {
                let pk = DeltaPacket::polarized(&sym, pt.q, pt.p, &a, band).unwrap();
                let s = pk.polarization(&sym);
                assert!((s - a).norm() < 1e-10, "{s} vs {a}");
                let frame = sym.frame(&pt);
                let proj = frame.projection(band);
                let along = |v: &Vec3| pk.spinor.dotc(&(proj * frame.spin_operator(v) * proj * pk.spinor)).re;
                assert!((along(&a) + along(&(-a))).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn invalid_packets_are_rejected() {
        let sym = uniform_b(1.0);
        let lower = Spinor::new(c(0.0), c(0.0), c(1.0), c(0.0));
        assert!(DeltaPacket::new(&sym, Vec3::zeros(), Vec3::zeros(), lower, 1.0, Band::Electron).is_err());
        let unnormalized = Spinor::new(c(2.0), c(0.0), c(0.0), c(0.0));
        assert!(DeltaPacket::new(&sym, Vec3::zeros(), Vec3::zeros(), unnormalized, 1.0, Band::Electron).is_err());
        assert!(DeltaPacket::polarized(&sym, Vec3::zeros(), Vec3::zeros(), &Vec3::zeros(), Band::Electron).is_err());
        assert!(Integration::new(1.0, 0.0).is_err());
        assert!(Integration::new(-1.0, 0.1).is_err());
        assert!(Integration::new(1e9, 1e-9).is_err());
    }

    #[test]
    fn norm_derivative_vanishes_in_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let sym = random_scenario(&mut rng);
            let pt = random_phase_point(&mut rng);
            let pk = DeltaPacket::polarized(&sym, pt.q, pt.p, &random_unit(&mut rng), Band::Electron).unwrap();
            let d = spinor_rhs(&sym, &pk.spinor, &pt, Band::Electron);
            assert!(pk.spinor.dotc(&d).re.abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_state_reports_last_good_time() {
        // A steep quartic potential throws the particle out within a few steps.
        let phi = crate::fields::Polynomial(vec![crate::fields::Monomial {
            coef: -1e300,
            powers: [8, 0, 0],
        }]);
        let sym = DiracSymbol::new(
            FieldConfig::CustomPolynomial {
                phi,
                a: Default::default(),
            },
            ParticleParams::default(),
        );
        let pk = DeltaPacket::polarized(
            &sym,
            Vec3::new(3.0, 0.0, 0.0),
            Vec3::zeros(),
            &Vec3::z(),
            Band::Electron,
        )
        .unwrap();
        let err = evolve_packet(&pk, &sym, &Integration::new(100.0, 0.5).unwrap()).unwrap_err();
        assert!(matches!(err, DynamicsError::NonFinite { .. }));
    }

    #[test]
    fn ensembles_average_linearly() {
        let sym = uniform_b(0.7);
        let integ = Integration::new(3.0, 0.01).unwrap();
        let a = DeltaPacket::polarized(
            &sym,
            Vec3::zeros(),
            Vec3::new(0.8, 0.1, 0.3),
            &Vec3::y(),
            Band::Electron,
        )
        .unwrap();
        let single = evolve_packet(&a, &sym, &integ).unwrap();
        let one = ensemble_evolve(&[a], &sym, &integ).unwrap();
        assert_eq!(one.records[0], single);
        let halves = [DeltaPacket { weight: 0.5, ..a }, DeltaPacket { weight: 0.5, ..a }];
        let two = ensemble_evolve(&halves, &sym, &integ).unwrap();
        for (x, y) in two.mean_s.iter().zip(&one.mean_s) {
            assert!((x.1 - y.1).norm() < 1e-15);
        }
        let mut b = DeltaPacket::polarized(
            &sym,
            Vec3::new(0.2, 0.0, 0.0),
            Vec3::new(-0.5, 0.4, 0.0),
            &Vec3::x(),
            Band::Positron,
        )
        .unwrap();
        b.weight = 0.25;
        let a3 = DeltaPacket { weight: 0.75, ..a };
        let mixed = ensemble_evolve(&[a3, b], &sym, &integ).unwrap();
        let rb = evolve_packet(&b, &sym, &integ).unwrap();
        for (i, (_, s)) in mixed.mean_s.iter().enumerate() {
            let expect = single.samples[i].s * 0.75 + rb.samples[i].s * 0.25;
            assert!((s - expect).norm() < 1e-15);
        }
        assert!(rb.max_band_residual() < 1e-6);
        assert!(ensemble_evolve(&[a3], &sym, &integ).is_err());
    }

    #[test]
    fn csv_has_header_and_one_row_per_sample() {
        let sym = uniform_b(1.0);
        let pk = DeltaPacket::polarized(&sym, Vec3::zeros(), Vec3::x(), &Vec3::z(), Band::Electron).unwrap();
        let rec = evolve_packet(&pk, &sym, &Integration::new(0.5, 0.1).unwrap()).unwrap();
        let csv = rec.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TRAJECTORY_CSV_HEADER);
        assert_eq!(lines.len(), rec.samples.len() + 1);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 17));
    }
}
