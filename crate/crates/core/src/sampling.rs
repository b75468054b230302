//! Random fields, particles and phase points for property checks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::calculus::{PhasePolynomial, PolynomialMatrixSymbol};
use crate::fields::{FieldConfig, Monomial, ParticleParams, Polynomial, Vec3};
use crate::gamma::{c, gammas, to_dynamic};
use crate::symbol::{DiracSymbol, PhasePoint};

pub fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
    Vec3::new(
        rng.gen_range(-scale..scale),
        rng.gen_range(-scale..scale),
        rng.gen_range(-scale..scale),
    )
}

pub fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = random_vec(rng, 1.0);
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn random_poly(rng: &mut ChaCha8Rng, max_degree: u32, scale: f64) -> Polynomial {
    let mut terms = Vec::new();
    for _ in 0..5 {
        let mut powers = [0u32; 3];
        for _ in 0..rng.gen_range(0..=max_degree) {
            powers[rng.gen_range(0..3)] += 1;
        }
        terms.push(Monomial {
            coef: rng.gen_range(-scale..scale),
            powers,
        });
    }
    Polynomial(terms)
}

/// Smooth polynomial potentials with nonzero E and B almost everywhere.
pub fn random_custom_field(rng: &mut ChaCha8Rng) -> FieldConfig {
    FieldConfig::CustomPolynomial {
        phi: random_poly(rng, 3, 0.5),
        a: [
            random_poly(rng, 2, 0.5),
            random_poly(rng, 2, 0.5),
            random_poly(rng, 2, 0.5),
        ],
    }
}

pub fn random_params(rng: &mut ChaCha8Rng) -> ParticleParams {
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    ParticleParams {
        m: rng.gen_range(0.5..2.0),
        c: rng.gen_range(0.7..2.0),
        e: sign * rng.gen_range(0.3..1.5),
    }
}

pub fn random_scenario(rng: &mut ChaCha8Rng) -> DiracSymbol {
    DiracSymbol::new(random_custom_field(rng), random_params(rng))
}

pub fn random_phase_point(rng: &mut ChaCha8Rng) -> PhasePoint {
    PhasePoint::new(random_vec(rng, 1.0), random_vec(rng, 1.0))
}

/// `f I + Σ_k g_k Γ_k` with anticommuting Γ: two doubly degenerate bands
/// separated by a gap of at least about 4 on the unit box.
pub fn random_two_band(rng: &mut ChaCha8Rng) -> PolynomialMatrixSymbol {
    let g = gammas();
    let gens = [g.alpha[0], g.alpha[1], g.alpha[2], g.gamma0];
    let mut parts = vec![(PhasePolynomial::random(rng, 3, 2), DMatrix::identity(4, 4))];
    for (k, m) in gens.iter().enumerate() {
        let mut f = PhasePolynomial::random(rng, 3, 2);
        for t in &mut f.terms {
            t.0 *= 0.3;
        }
        if k == 3 {
            f.terms.push((3.0, [0; 6]));
        }
        parts.push((f, to_dynamic(m)));
    }
    PolynomialMatrixSymbol { parts }
}

/// Three nondegenerate bands near 0, 3 and 6.
pub fn random_three_band(rng: &mut ChaCha8Rng) -> PolynomialMatrixSymbol {
    let mut s = PolynomialMatrixSymbol::random_hermitian(rng, 3, 2);
    for p in &mut s.parts {
        p.1 *= c(0.2);
    }
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![c(0.0), c(3.0), c(6.0)]));
    s.parts.push((
        PhasePolynomial {
            terms: vec![(1.0, [0; 6])],
        },
        d,
    ));
    s
}
