//! Static external fields.
//!
//! Every built-in configuration has polynomial potentials, so `E = -∇φ`,
//! `B = ∇×A` and the Jacobian of `A` are evaluated exactly.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("field configuration error: {0}")]
    Config(String),
    #[error("invalid particle parameters: {0}")]
    Params(String),
}

/// Mass, charge and speed of light in Gaussian units with ħ = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleParams {
    pub m: f64,
    pub e: f64,
    pub c: f64,
}

impl Default for ParticleParams {
    /// Electron in units with m = c = 1.
    fn default() -> Self {
        Self {
            m: 1.0,
            e: -1.0,
            c: 1.0,
        }
    }
}

impl ParticleParams {
    pub fn validate(&self) -> Result<(), FieldError> {
        if !(self.m.is_finite() && self.m > 0.0) {
            return Err(FieldError::Params(format!("mass must be positive, got {}", self.m)));
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(FieldError::Params(format!(
                "speed of light must be positive, got {}",
                self.c
            )));
        }
        if !self.e.is_finite() {
            return Err(FieldError::Params("charge must be finite".into()));
        }
        Ok(())
    }
}

/// One monomial `coef · x^i y^j z^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coef: f64,
    pub powers: [u32; 3],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial(pub Vec<Monomial>);

const MAX_DEGREE: u32 = 8;
const MAX_TERMS: usize = 256;

impl Polynomial {
    pub fn eval(&self, q: &Vec3) -> f64 {
        self.0.iter().map(|t| t.coef * monomial(q, t.powers)).sum()
    }

    pub fn gradient(&self, q: &Vec3) -> Vec3 {
        let mut g = Vec3::zeros();
        for t in &self.0 {
            for axis in 0..3 {
                let k = t.powers[axis];
                if k == 0 {
                    continue;
                }
                let mut pw = t.powers;
                pw[axis] -= 1;
                g[axis] += t.coef * k as f64 * monomial(q, pw);
            }
        }
        g
    }

    pub fn degree(&self) -> u32 {
        self.0
            .iter()
            .filter(|t| t.coef != 0.0)
            .map(|t| t.powers.iter().sum())
            .max()
            .unwrap_or(0)
    }

    fn validate(&self, name: &str) -> Result<(), FieldError> {
        if self.0.len() > MAX_TERMS {
            return Err(FieldError::Config(format!("{name}: more than {MAX_TERMS} terms")));
        }
        for t in &self.0 {
            if !t.coef.is_finite() {
                return Err(FieldError::Config(format!("{name}: non-finite coefficient")));
            }
            if t.powers.iter().any(|&p| p > MAX_DEGREE) {
                return Err(FieldError::Config(format!("{name}: exponent above {MAX_DEGREE}")));
            }
        }
        Ok(())
    }
}

fn monomial(q: &Vec3, powers: [u32; 3]) -> f64 {
    q[0].powi(powers[0] as i32) * q[1].powi(powers[1] as i32) * q[2].powi(powers[2] as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldConfig {
    /// No fields at all.
    Free,
    /// Uniform magnetic field in the symmetric gauge `A = ½ B × (q − center)`.
    UniformB {
        b: [f64; 3],
        #[serde(default)]
        center: [f64; 3],
    },
    /// Uniform electric field, `φ = −E · (q − center)`.
    UniformE {
        e: [f64; 3],
        #[serde(default)]
        center: [f64; 3],
    },
    /// Both of the above; any relative orientation is allowed.
    CrossedEb {
        e: [f64; 3],
        b: [f64; 3],
        #[serde(default)]
        center: [f64; 3],
    },
    /// `φ = ½ Σ kᵢ (qᵢ − centerᵢ)²`, no vector potential.
    HarmonicPhi {
        stiffness: [f64; 3],
        #[serde(default)]
        center: [f64; 3],
    },
    CustomPolynomial {
        #[serde(default)]
        phi: Polynomial,
        #[serde(default)]
        a: [Polynomial; 3],
    },
}

/// Potentials and their first derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub phi: f64,
    pub grad_phi: Vec3,
    pub a: Vec3,
    /// `jac_a[(k, i)] = ∂A_k/∂q_i`.
    pub jac_a: Matrix3<f64>,
    pub e: Vec3,
    pub b: Vec3,
}

/// `A(q) = offset + jac · q` for gauges that are affine in `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGauge {
    pub offset: Vec3,
    pub jac: Matrix3<f64>,
}

impl LinearGauge {
    pub fn zero() -> Self {
        Self {
            offset: Vec3::zeros(),
            jac: Matrix3::zeros(),
        }
    }

    /// Symmetric gauge `A = ½ B × (q − center)` of a uniform field.
    pub fn symmetric(b: &Vec3, center: &Vec3) -> Self {
        let jac = cross_matrix(b) * 0.5;
        Self {
            offset: -(jac * center),
            jac,
        }
    }

    pub fn eval(&self, q: &Vec3) -> Vec3 {
        self.offset + self.jac * q
    }

    pub fn is_antisymmetric(&self, tol: f64) -> bool {
        (self.jac + self.jac.transpose()).abs().max() <= tol
    }
}

fn cross_matrix(b: &Vec3) -> Matrix3<f64> {
    // (b × q) = cross_matrix(b) q
    Matrix3::new(0.0, -b[2], b[1], b[2], 0.0, -b[0], -b[1], b[0], 0.0)
}

pub fn curl_from_jacobian(j: &Matrix3<f64>) -> Vec3 {
    Vec3::new(j[(2, 1)] - j[(1, 2)], j[(0, 2)] - j[(2, 0)], j[(1, 0)] - j[(0, 1)])
}

impl FieldConfig {
    pub fn from_json(text: &str) -> Result<Self, FieldError> {
        let cfg: FieldConfig = serde_json::from_str(text).map_err(|e| FieldError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            FieldConfig::Free => "free",
            FieldConfig::UniformB { .. } => "uniform_b",
            FieldConfig::UniformE { .. } => "uniform_e",
            FieldConfig::CrossedEb { .. } => "crossed_eb",
            FieldConfig::HarmonicPhi { .. } => "harmonic_phi",
            FieldConfig::CustomPolynomial { .. } => "custom_polynomial",
        }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let ok = match self {
            FieldConfig::Free => true,
            FieldConfig::UniformB { b, center } => finite(b) && finite(center),
            FieldConfig::UniformE { e, center } => finite(e) && finite(center),
            FieldConfig::CrossedEb { e, b, center } => finite(e) && finite(b) && finite(center),
            FieldConfig::HarmonicPhi { stiffness, center } => finite(stiffness) && finite(center),
            FieldConfig::CustomPolynomial { phi, a } => {
                phi.validate("phi")?;
                for (k, ak) in a.iter().enumerate() {
                    ak.validate(&format!("a[{k}]"))?;
                }
                true
            }
        };
        if ok {
            Ok(())
        } else {
            Err(FieldError::Config(format!(
                "{}: non-finite parameter",
                self.kind_name()
            )))
        }
    }

    pub fn eval(&self, q: &Vec3) -> FieldSample {
        let mut s = FieldSample {
            phi: 0.0,
            grad_phi: Vec3::zeros(),
            a: Vec3::zeros(),
            jac_a: Matrix3::zeros(),
            e: Vec3::zeros(),
            b: Vec3::zeros(),
        };
        let set_b = |s: &mut FieldSample, b: &[f64; 3], center: &[f64; 3]| {
            let bv = Vec3::from(*b);
            let j = cross_matrix(&bv) * 0.5;
            s.jac_a = j;
            s.a = j * (q - Vec3::from(*center));
            s.b = bv;
        };
        let set_e = |s: &mut FieldSample, e: &[f64; 3], center: &[f64; 3]| {
            let ev = Vec3::from(*e);
            s.phi = -ev.dot(&(q - Vec3::from(*center)));
            s.grad_phi = -ev;
            s.e = ev;
        };
        match self {
            FieldConfig::Free => {}
            FieldConfig::UniformB { b, center } => set_b(&mut s, b, center),
            FieldConfig::UniformE { e, center } => set_e(&mut s, e, center),
            FieldConfig::CrossedEb { e, b, center } => {
                set_b(&mut s, b, center);
                set_e(&mut s, e, center);
            }
            FieldConfig::HarmonicPhi { stiffness, center } => {
                let d = q - Vec3::from(*center);
                let k = Vec3::from(*stiffness);
                s.phi = 0.5 * d.component_mul(&d).dot(&k);
                s.grad_phi = k.component_mul(&d);
                s.e = -s.grad_phi;
            }
            FieldConfig::CustomPolynomial { phi, a } => {
                s.phi = phi.eval(q);
                s.grad_phi = phi.gradient(q);
                s.e = -s.grad_phi;
                for k in 0..3 {
                    s.a[k] = a[k].eval(q);
                    let g = a[k].gradient(q);
                    for i in 0..3 {
                        s.jac_a[(k, i)] = g[i];
                    }
                }
                s.b = curl_from_jacobian(&s.jac_a);
            }
        }
        s
    }

    /// Returns the gauge when `A` is affine in `q`.
    pub fn linear_gauge(&self) -> Option<LinearGauge> {
        let affine = |b: &[f64; 3], center: &[f64; 3]| LinearGauge::symmetric(&Vec3::from(*b), &Vec3::from(*center));
        match self {
            FieldConfig::Free | FieldConfig::UniformE { .. } | FieldConfig::HarmonicPhi { .. } => {
                Some(LinearGauge::zero())
            }
            FieldConfig::UniformB { b, center } | FieldConfig::CrossedEb { b, center, .. } => Some(affine(b, center)),
            FieldConfig::CustomPolynomial { a, .. } => {
                if a.iter().any(|p| p.degree() > 1) {
                    return None;
                }
                let origin = self.eval(&Vec3::zeros());
                Some(LinearGauge {
                    offset: origin.a,
                    jac: origin.jac_a,
                })
            }
        }
    }

    /// True when the vector potential vanishes identically.
    pub fn is_electrostatic(&self) -> bool {
        self.linear_gauge()
            .is_some_and(|g| g.offset == Vec3::zeros() && g.jac == Matrix3::zeros())
    }

    /// The same physical setup seen in a rotated frame.
    pub fn rotated(&self, r: &Rotation3<f64>) -> Result<FieldConfig, FieldError> {
        let rot = |v: &[f64; 3]| -> [f64; 3] { (r * Vec3::from(*v)).into() };
        Ok(match self {
            FieldConfig::Free => FieldConfig::Free,
            FieldConfig::UniformB { b, center } => FieldConfig::UniformB {
                b: rot(b),
                center: rot(center),
            },
            FieldConfig::UniformE { e, center } => FieldConfig::UniformE {
                e: rot(e),
                center: rot(center),
            },
            FieldConfig::CrossedEb { e, b, center } => FieldConfig::CrossedEb {
                e: rot(e),
                b: rot(b),
                center: rot(center),
            },
            FieldConfig::HarmonicPhi { stiffness, center }
                if stiffness[0] == stiffness[1] && stiffness[1] == stiffness[2] =>
            {
                FieldConfig::HarmonicPhi {
                    stiffness: *stiffness,
                    center: rot(center),
                }
            }
            other => {
                return Err(FieldError::Config(format!("{} cannot be rotated", other.kind_name())));
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
        Vec3::new(
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
        )
    }

    fn random_poly(rng: &mut ChaCha8Rng, max_degree: u32) -> Polynomial {
        let mut terms = Vec::new();
        for _ in 0..6 {
            let mut powers = [0u32; 3];
            let deg = rng.gen_range(0..=max_degree);
            for _ in 0..deg {
                powers[rng.gen_range(0..3)] += 1;
            }
            terms.push(Monomial {
                coef: rng.gen_range(-1.0..1.0),
                powers,
            });
        }
        Polynomial(terms)
    }

    fn random_custom(rng: &mut ChaCha8Rng) -> FieldConfig {
        FieldConfig::CustomPolynomial {
            phi: random_poly(rng, 3),
            a: [random_poly(rng, 3), random_poly(rng, 3), random_poly(rng, 3)],
        }
    }

    fn step(x: f64) -> f64 {
        1e-5 * (1.0 + x.abs())
    }

    /// Central differences of φ and A at q.
    fn finite_difference(cfg: &FieldConfig, q: &Vec3) -> (Vec3, Matrix3<f64>) {
        let mut grad_phi = Vec3::zeros();
        let mut jac = Matrix3::zeros();
        for i in 0..3 {
            let h = step(q[i]);
            let mut qp = *q;
            let mut qm = *q;
            qp[i] += h;
            qm[i] -= h;
            let (sp, sm) = (cfg.eval(&qp), cfg.eval(&qm));
            grad_phi[i] = (sp.phi - sm.phi) / (2.0 * h);
            for k in 0..3 {
                jac[(k, i)] = (sp.a[k] - sm.a[k]) / (2.0 * h);
            }
        }
        (grad_phi, jac)
    }

    fn builtin(rng: &mut ChaCha8Rng) -> Vec<FieldConfig> {
        let v = |rng: &mut ChaCha8Rng| -> [f64; 3] { random_vec(rng, 1.0).into() };
        vec![
            FieldConfig::UniformB {
                b: v(rng),
                center: v(rng),
            },
            FieldConfig::UniformE {
                e: v(rng),
                center: v(rng),
            },
            FieldConfig::CrossedEb {
                e: v(rng),
                b: v(rng),
                center: v(rng),
            },
            FieldConfig::HarmonicPhi {
                stiffness: v(rng),
                center: v(rng),
            },
            random_custom(rng),
        ]
    }

    #[test]
    fn uniform_b_symmetric_gauge() {
        let cfg = FieldConfig::UniformB {
            b: [0.0, 0.0, 1.0],
            center: [0.0; 3],
        };
        let s = cfg.eval(&Vec3::new(0.3, -1.2, 4.0));
        assert_eq!(s.b, Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(s.e, Vec3::zeros());
        assert!((s.a - Vec3::new(0.6, 0.15, 0.0)).norm() < 1e-15);
        assert_eq!(curl_from_jacobian(&s.jac_a), Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn uniform_e_potential() {
        let cfg = FieldConfig::UniformE {
            e: [1.0, 0.0, 0.0],
            center: [0.0; 3],
        };
        let s = cfg.eval(&Vec3::new(2.0, 1.0, -1.0));
        assert_eq!(s.phi, -2.0);
        assert_eq!(s.e, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(s.b, Vec3::zeros());
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            for cfg in builtin(&mut rng) {
                let q = random_vec(&mut rng, 1.5);
                let s = cfg.eval(&q);
                let (gp, jac) = finite_difference(&cfg, &q);
                assert!((s.e + gp).norm() < 1e-8, "{cfg:?}");
                assert!((s.jac_a - jac).abs().max() < 1e-8, "{cfg:?}");
                assert!((s.b - curl_from_jacobian(&jac)).norm() < 1e-8, "{cfg:?}");
            }
        }
    }

    #[test]
    fn curl_e_and_div_b_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            for cfg in builtin(&mut rng) {
                let q = random_vec(&mut rng, 1.5);
                let mut jac_e = Matrix3::zeros();
                let mut div_b = 0.0;
                for i in 0..3 {
                    let h = step(q[i]);
                    let mut qp = q;
                    let mut qm = q;
                    qp[i] += h;
                    qm[i] -= h;
                    let (sp, sm) = (cfg.eval(&qp), cfg.eval(&qm));
                    div_b += (sp.b[i] - sm.b[i]) / (2.0 * h);
                    for k in 0..3 {
                        jac_e[(k, i)] = (sp.e[k] - sm.e[k]) / (2.0 * h);
                    }
                }
                assert!(curl_from_jacobian(&jac_e).norm() < 1e-8);
                assert!(div_b.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn unknown_kind_is_a_configuration_error() {
        let err = FieldConfig::from_json(r#"{"kind": "dipole", "m": [0, 0, 1]}"#).unwrap_err();
        assert!(matches!(err, FieldError::Config(_)));
        let ok = FieldConfig::from_json(r#"{"kind": "uniform_b", "b": [0, 0, 1]}"#).unwrap();
        assert_eq!(
            ok,
            FieldConfig::UniformB {
                b: [0.0, 0.0, 1.0],
                center: [0.0; 3]
            }
        );
    }

    #[test]
    fn linear_gauge_reproduces_potential() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = FieldConfig::CrossedEb {
            e: [0.2, 0.0, 0.0],
            b: [0.1, -0.4, 1.0],
            center: [0.3, 0.2, -0.1],
        };
        let gauge = cfg.linear_gauge().unwrap();
        assert!(gauge.is_antisymmetric(0.0));
        for _ in 0..10 {
            let q = random_vec(&mut rng, 2.0);
            assert!((gauge.eval(&q) - cfg.eval(&q).a).norm() < 1e-14);
        }
        assert!(FieldConfig::HarmonicPhi {
            stiffness: [1.0; 3],
            center: [0.0; 3]
        }
        .is_electrostatic());
        assert!(!cfg.is_electrostatic());
    }

    #[test]
    fn params_validation() {
        assert!(ParticleParams::default().validate().is_ok());
        assert!(ParticleParams { m: 0.0, e: 1.0, c: 1.0 }.validate().is_err());
        assert!(ParticleParams {
            m: 1.0,
            e: 1.0,
            c: -1.0
        }
        .validate()
        .is_err());
    }
}
