//! Classical spin precession with g = 2 along a precomputed orbit, and the
//! comparison against the transported quantum spinor.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve_packet, DeltaPacket, DynamicsError, Integration, TrajectoryRecord};
use crate::fields::Vec3;
use crate::symbol::{Band, DiracSymbol, PhasePoint};

/// `ds/dt = (e/mc) s × [B/γ − v×E / ((1+γ) c)]`.
pub fn bmt_rhs(s: &Vec3, pt: &PhasePoint, symbol: &DiracSymbol) -> Vec3 {
    let p = &symbol.params;
    let sample = symbol.fields.eval(&pt.q);
    let kin = symbol.kinematics(pt);
    let omega = sample.b / kin.gamma - kin.v.cross(&sample.e) / ((1.0 + kin.gamma) * p.c);
    s.cross(&omega) * (p.e / (p.m * p.c))
}

/// Cubic Hermite interpolation of `(q, p)` between recorded samples.
pub fn interpolate(record: &TrajectoryRecord, t: f64) -> Result<PhasePoint, DynamicsError> {
    let samples = &record.samples;
    let (t0, t1) = (samples[0].t, record.t_final());
    let slack = 1e-9 * (1.0 + t1.abs());
    if t < t0 - slack || t > t1 + slack {
        return Err(DynamicsError::TimeRange(format!(
            "t = {t} outside recorded [{t0}, {t1}]"
        )));
    }
    if samples.len() == 1 {
        return Ok(samples[0].phase_point());
    }
    let k = samples.partition_point(|s| s.t <= t).clamp(1, samples.len() - 1);
    let (a, b) = (&samples[k - 1], &samples[k]);
    let h = b.t - a.t;
    let u = ((t - a.t) / h).clamp(0.0, 1.0);
    let (u2, u3) = (u * u, u * u * u);
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    let herm = |x0: Vec3, d0: Vec3, x1: Vec3, d1: Vec3| x0 * h00 + d0 * (h10 * h) + x1 * h01 + d1 * (h11 * h);
    Ok(PhasePoint::new(
        herm(a.q, a.qdot, b.q, b.qdot),
        herm(a.p, a.pdot, b.p, b.pdot),
    ))
}

/// RK4 integration of the BMT equation along `record`.
pub fn evolve_bmt(
    s0: &Vec3,
    record: &TrajectoryRecord,
    symbol: &DiracSymbol,
    integ: &Integration,
) -> Result<Vec<(f64, Vec3)>, DynamicsError> {
    if !s0.iter().all(|x| x.is_finite()) {
        return Err(DynamicsError::InvalidPacket("initial spin is not finite".into()));
    }
    let n = integ.steps()?;
    let h = integ.step()?;
    let t_end = record.t_final();
    if integ.t_final > t_end + 1e-9 * (1.0 + t_end) || record.samples[0].t != 0.0 {
        return Err(DynamicsError::TimeRange(format!(
            "trajectory covers [{}, {t_end}], spin run needs [0, {}]",
            record.samples[0].t, integ.t_final
        )));
    }
    let f = |t: f64, s: &Vec3| -> Result<Vec3, DynamicsError> { Ok(bmt_rhs(s, &interpolate(record, t)?, symbol)) };
    let mut s = *s0;
    let mut out = Vec::with_capacity(n + 1);
    out.push((0.0, s));
    for k in 0..n {
        let t = k as f64 * h;
        let k1 = f(t, &s)?;
        let k2 = f(t + 0.5 * h, &(s + k1 * (0.5 * h)))?;
        let k3 = f(t + 0.5 * h, &(s + k2 * (0.5 * h)))?;
        let k4 = f(t + h, &(s + k3 * h))?;
        s += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if !s.iter().all(|x| x.is_finite()) {
            return Err(DynamicsError::NonFinite { last_good_t: t });
        }
        let t_next = if k + 1 == n { integ.t_final } else { (k + 1) as f64 * h };
        out.push((t_next, s));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonSummary {
    pub max_deviation: f64,
    pub dt: f64,
    pub t_final: f64,
    pub scenario: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub t: f64,
    pub s_quantum: Vec3,
    pub s_bmt: Vec3,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub summary: ComparisonSummary,
    pub rows: Vec<ComparisonRow>,
    pub trajectory: TrajectoryRecord,
}

pub const COMPARISON_CSV_HEADER: &str = "t,sq_x,sq_y,sq_z,sbmt_x,sbmt_y,sbmt_z,deviation";

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(160 * (self.rows.len() + 1));
        out.push_str(COMPARISON_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{}", r.t);
            for x in r.s_quantum.iter().chain(r.s_bmt.iter()) {
                let _ = write!(out, ",{x}");
            }
            let _ = writeln!(out, ",{}", r.deviation);
        }
        out
    }

    /// Largest change of `|s_BMT|` from its initial value.
    pub fn bmt_norm_drift(&self) -> f64 {
        let n0 = self.rows[0].s_bmt.norm();
        self.rows
            .iter()
            .map(|r| (r.s_bmt.norm() - n0).abs())
            .fold(0.0, f64::max)
    }
}

/// Transports the packet and the BMT spin along the same orbit and reports
/// `max_t |s_quantum(t) − s_BMT(t)|`.
pub fn compare_quantum_bmt(
    packet: &DeltaPacket,
    symbol: &DiracSymbol,
    integ: &Integration,
    scenario: &str,
) -> Result<ComparisonReport, DynamicsError> {
    if packet.band != Band::Electron {
        return Err(DynamicsError::InvalidPacket(
            "the BMT comparison is defined for the electron band".into(),
        ));
    }
    let trajectory = evolve_packet(packet, symbol, integ)?;
    let s0 = trajectory.samples[0].s;
    let bmt = evolve_bmt(&s0, &trajectory, symbol, integ)?;
    let rows: Vec<ComparisonRow> = trajectory
        .samples
        .iter()
        .zip(&bmt)
        .map(|(q, (t, sb))| ComparisonRow {
            t: *t,
            s_quantum: q.s,
            s_bmt: *sb,
            deviation: (q.s - sb).norm(),
        })
        .collect();
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    Ok(ComparisonReport {
        summary: ComparisonSummary {
            max_deviation,
            dt: integ.step()?,
            t_final: integ.t_final,
            scenario: scenario.to_string(),
        },
        rows,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::cyclotron_period;
    use crate::fields::{FieldConfig, ParticleParams};
    use nalgebra::{Rotation3, Unit};

    fn cyclotron() -> (DiracSymbol, Vec3, f64) {
        let sym = DiracSymbol::new(
            FieldConfig::UniformB {
                b: [0.0, 0.0, 1.0],
                center: [0.0; 3],
            },
            ParticleParams::default(),
        );
        let period = cyclotron_period(&sym.params, 1.0, 2.0);
        (sym, Vec3::new(3f64.sqrt(), 0.0, 0.0), period)
    }

    #[test]
    fn rhs_examples() {
        let (sym, _, _) = cyclotron();
        let pt = PhasePoint::new(Vec3::new(0.3, 0.1, 0.0), Vec3::new(0.4, 0.5, 0.2));
        assert_eq!(bmt_rhs(&Vec3::z(), &pt, &sym), Vec3::zeros());
        let gamma = sym.kinematics(&pt).gamma;
        let rate = bmt_rhs(&Vec3::x(), &pt, &sym).norm();
        assert!((rate - 1.0 / gamma).abs() < 1e-14);
        let e_only = DiracSymbol::new(
            FieldConfig::UniformE {
                e: [0.3, 0.2, 0.1],
                center: [0.0; 3],
            },
            ParticleParams::default(),
        );
        let rest = PhasePoint::new(Vec3::new(1.0, 2.0, 3.0), Vec3::zeros());
        assert_eq!(bmt_rhs(&Vec3::y(), &rest, &e_only), Vec3::zeros());
    }

    #[test]
    fn zero_fields_freeze_spin_and_deviation() {
        let sym = DiracSymbol::new(FieldConfig::Free, ParticleParams::default());
        let pk = DeltaPacket::polarized(
            &sym,
            Vec3::zeros(),
            Vec3::new(0.3, 0.2, 0.0),
            &Vec3::new(1.0, 1.0, 0.0),
            Band::Electron,
        )
        .unwrap();
        let rep = compare_quantum_bmt(&pk, &sym, &Integration::new(2.0, 0.01).unwrap(), "free").unwrap();
        assert_eq!(rep.summary.max_deviation, 0.0);
        assert!(rep.rows.iter().all(|r| r.s_bmt == rep.rows[0].s_bmt));
    }

    #[test]
    fn spin_turns_with_momentum_in_pure_magnetic_field() {
        let (sym, p, period) = cyclotron();
        let pk = DeltaPacket::polarized(&sym, Vec3::zeros(), p, &Vec3::new(0.0, 1.0, 0.0), Band::Electron).unwrap();
        let integ = Integration::new(period, period / 1000.0).unwrap();
        let traj = evolve_packet(&pk, &sym, &integ).unwrap();
        let series = evolve_bmt(&traj.samples[0].s, &traj, &sym, &integ).unwrap();
        let angle = |v: &Vec3| v[1].atan2(v[0]);
        let (a_s0, a_p0) = (angle(&series[0].1), angle(&traj.samples[0].p));
        for (sample, (_, s)) in traj.samples.iter().zip(&series) {
            let pi = sym.kinematics(&sample.phase_point()).pi;
            let turn_s = (angle(s) - a_s0).rem_euclid(std::f64::consts::TAU);
            let turn_p = (angle(&pi) - a_p0).rem_euclid(std::f64::consts::TAU);
            let d = (turn_s - turn_p).abs();
            assert!(d.min(std::f64::consts::TAU - d) < 1e-8);
        }
        assert!((series.last().unwrap().1 - series[0].1).norm() < 1e-9);
    }

    #[test]
    fn bmt_norm_is_conserved() {
        let (sym, p, period) = cyclotron();
        let pk = DeltaPacket::polarized(&sym, Vec3::zeros(), p, &Vec3::new(0.6, 0.0, 0.8), Band::Electron).unwrap();
        let rep = compare_quantum_bmt(
            &pk,
            &sym,
            &Integration::new(10.0 * period, period / 1000.0).unwrap(),
            "b",
        )
        .unwrap();
        assert!(rep.bmt_norm_drift() < 1e-10);
    }

    #[test]
    fn interpolation_range_and_nodes() {
        let (sym, p, period) = cyclotron();
        let pk = DeltaPacket::polarized(&sym, Vec3::zeros(), p, &Vec3::z(), Band::Electron).unwrap();
        let integ = Integration::new(period / 4.0, period / 400.0).unwrap();
        let traj = evolve_packet(&pk, &sym, &integ).unwrap();
        for s in &traj.samples {
            assert_eq!(interpolate(&traj, s.t).unwrap().q, s.q);
        }
        assert!(interpolate(&traj, -1.0).is_err());
        assert!(evolve_bmt(
            &Vec3::z(),
            &traj,
            &sym,
            &Integration::new(period, period / 400.0).unwrap()
        )
        .is_err());
    }

    #[test]
    fn rotating_the_setup_rotates_the_spin() {
        let params = ParticleParams {
            m: 1.2,
            e: -0.9,
            c: 1.4,
        };
        let fields = FieldConfig::CrossedEb {
            e: [0.3, 0.0, 0.0],
            b: [0.0, 0.0, 1.1],
            center: [0.0; 3],
        };
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::new(0.3, -1.0, 0.5)), 0.9);
        let (q, p, a) = (
            Vec3::new(0.2, -0.1, 0.3),
            Vec3::new(0.7, 0.4, -0.2),
            Vec3::new(0.0, 0.6, 0.8),
        );
        let integ = Integration::new(6.0, 0.005).unwrap();
        let run = |f: FieldConfig, q: Vec3, p: Vec3, a: Vec3| {
            let sym = DiracSymbol::new(f, params);
            let pk = DeltaPacket::polarized(&sym, q, p, &a, Band::Electron).unwrap();
            compare_quantum_bmt(&pk, &sym, &integ, "rot").unwrap()
        };
        let base = run(fields.clone(), q, p, a);
        let turned = run(fields.rotated(&rot).unwrap(), rot * q, rot * p, rot * a);
        for (x, y) in base.rows.iter().zip(&turned.rows) {
            assert!((rot * x.s_bmt - y.s_bmt).norm() < 1e-9);
            assert!((rot * x.s_quantum - y.s_quantum).norm() < 1e-9);
        }
    }

    #[test]
    fn positron_packets_are_rejected() {
        let (sym, p, _) = cyclotron();
        let pk = DeltaPacket::polarized(&sym, Vec3::zeros(), p, &Vec3::z(), Band::Positron).unwrap();
        assert!(compare_quantum_bmt(&pk, &sym, &Integration::new(1.0, 0.1).unwrap(), "x").is_err());
    }

    #[test]
    fn summary_round_trips_through_json() {
        let s = ComparisonSummary {
            max_deviation: 1.5e-12,
            dt: 0.01,
            t_final: 3.0,
            scenario: "a".into(),
        };
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<ComparisonSummary>(&text).unwrap(), s);
    }
}
