//! Randomized identity suite across all layers: gamma algebra, Dirac
//! symbol, bracket calculus, spin Hamiltonians, generic band framework and
//! the BMT right-hand side.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bmt::bmt_rhs;
use crate::calculus::{
    check_product_identity, poisson_bracket, BracketMode, CalculusError, MatrixSymbol, PolynomialMatrixSymbol,
};
use crate::gamma::{c, commutator, gammas, max_abs, to_dynamic, ComplexMatrix4, C64, I};
use crate::multiband::{
    band_frame, dirac_band_index, transport_forms, verify_bracket_identities, BandDiagonalProbe, BandOptions,
    IdentityReport, MultibandError,
};
use crate::sampling::{random_phase_point, random_scenario, random_three_band, random_two_band, random_unit};
use crate::symbol::{bracket_scalar4, Band, DiracBandEnergy, DiracProjection, SymbolError};

/// Largest number of random points accepted per run.
pub const MAX_POINTS: usize = 100_000;

#[derive(Debug, Error)]
pub enum IdentityError {
    #[error("invalid identity-suite settings: {0}")]
    Settings(String),
    #[error(transparent)]
    Calculus(#[from] CalculusError),
    #[error(transparent)]
    Multiband(#[from] MultibandError),
    #[error(transparent)]
    Symbol(#[from] SymbolError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityCheck {
    pub residual: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitySuiteReport {
    pub seed: u64,
    pub points: usize,
    pub checks: BTreeMap<String, IdentityCheck>,
    /// Names of the checks above their threshold.
    pub failures: Vec<String>,
    pub passed: bool,
}

/// Threshold for each recorded residual name.
fn threshold(name: &str) -> f64 {
    if name.ends_with("_fd") {
        return 1e-5;
    }
    match name {
        n if n.starts_with("multiband.") => 1e-9,
        n if n.starts_with("spin_hamiltonian.") => 1e-10,
        "calculus.product_rule" => 1e-10,
        _ => 1e-12,
    }
}

fn point_checks(seed: u64, k: usize) -> Result<IdentityReport, IdentityError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    let mut rep = IdentityReport::default();
    let id = ComplexMatrix4::identity();
    let g = gammas();

    let sym = random_scenario(&mut rng);
    let pt = random_phase_point(&mut rng);
    let f = sym.frame(&pt);
    let (pp, pm) = (f.p_plus, f.p_minus);
    let h = f.hamiltonian();
    rep.record(
        "dirac.projection_idempotent",
        max_abs(&(pp * pp - pp)).max(max_abs(&(pm * pm - pm))),
    );
    rep.record(
        "dirac.projection_complete",
        max_abs(&(pp + pm - id)).max(max_abs(&(pp * pm))),
    );
    rep.record(
        "dirac.spectral_reconstruction",
        max_abs(&(pp * c(f.h_plus) + pm * c(f.h_minus) - h)),
    );

    let a = random_unit(&mut rng);
    let s = f.spin_matrix(&a)?;
    rep.record("dirac.polarization_square", max_abs(&(s * s - id)));
    rep.record("dirac.polarization_commutes_hamiltonian", max_abs(&commutator(&h, &s)));
    rep.record("dirac.polarization_commutes_projection", max_abs(&commutator(&pp, &s)));
    // (p0/mc) P₊ (v·γ)γ₅ P₊ = P₊ (v·S) P₊ = c P₊ γ₅ P₊
    let mc = f.params.m * f.params.c;
    let lhs = pp * g.slash(&f.kin.v) * g.gamma5 * pp * c(f.kin.p0 / mc);
    let mid = pp * f.spin_operator(&f.kin.v) * pp;
    let rhs = pp * g.gamma5 * pp * c(f.params.c);
    rep.record(
        "dirac.polarization_chain",
        max_abs(&(lhs - mid)).max(max_abs(&(mid - rhs))),
    );

    for band in [Band::Electron, Band::Positron] {
        let hb = bracket_scalar4(&f.energy_gradient(band), &f.projection_gradients(band));
        let pj = f.projection(band);
        rep.record("dirac.band_energy_projection", max_abs(&(pj * hb * pj)));
    }

    let closed = f.curly_pp_closed();
    rep.record("dirac.curvature_analytic", max_abs(&(f.curly_pp_bracket() - closed)));
    let pplus = DiracProjection {
        symbol: &sym,
        band: Band::Electron,
    };
    let pminus = DiracProjection {
        symbol: &sym,
        band: Band::Positron,
    };
    let hplus = DiracBandEnergy {
        symbol: &sym,
        band: Band::Electron,
    };
    let fd = BracketMode::FiniteDifference;
    let curv_p = poisson_bracket(&pplus, &pplus, &pt, fd)?;
    let curv_m = poisson_bracket(&pminus, &pminus, &pt, fd)?;
    let closed_d = to_dynamic(&closed);
    rep.record(
        "dirac.curvature_fd",
        max_abs(&(&curv_p - &closed_d)).max(max_abs(&(&curv_m - &closed_d))),
    );

    let (be, nn) = (f.berry_closed(), f.no_name_closed());
    let (be_b, nn_b) = f.spin_hamiltonian_bracket_parts(Band::Electron);
    rep.record("spin_hamiltonian.berry", max_abs(&(be - be_b)));
    rep.record("spin_hamiltonian.no_name", max_abs(&(nn - nn_b)));
    let hs = f.electron_spin_hamiltonian();
    rep.record(
        "spin_hamiltonian.hermitian_in_band",
        max_abs(&(pp * (hs - hs.adjoint()) * pp)),
    );
    let p = to_dynamic(&pp);
    let h_p = poisson_bracket(&hplus, &pplus, &pt, fd)?;
    let be_fd = (&p * &h_p - &h_p * &p) * (-I);
    let inner = &curv_p * c(f.h_plus) - &curv_m * c(f.h_minus);
    let nn_fd = &p * inner * &p * (-I * 0.5);
    rep.record("spin_hamiltonian.berry_fd", max_abs(&(be_fd - to_dynamic(&be))));
    rep.record("spin_hamiltonian.no_name_fd", max_abs(&(nn_fd - to_dynamic(&nn))));

    let spin = random_unit(&mut rng);
    rep.record(
        "bmt.precession_preserves_length",
        bmt_rhs(&spin, &pt, &sym).dot(&spin).abs(),
    );
    let grad = f.energy_gradient(Band::Electron);
    rep.record("dirac.band_velocity", (grad.dp - f.kin.v).norm());

    let polys: [PolynomialMatrixSymbol; 3] =
        std::array::from_fn(|_| PolynomialMatrixSymbol::random_hermitian(&mut rng, 3, 3));
    let ppt = random_phase_point(&mut rng);
    rep.record(
        "calculus.product_rule",
        check_product_identity(&polys[0], &polys[1], &polys[2], &ppt, BracketMode::Analytic)?,
    );
    rep.record(
        "calculus.product_rule_fd",
        check_product_identity(&polys[0], &polys[1], &polys[2], &ppt, fd)?,
    );

    let opts = BandOptions::default();
    let two = random_two_band(&mut rng);
    let three = random_three_band(&mut rng);
    let symbols: [(&str, &dyn MatrixSymbol, usize); 3] =
        [("dirac", &sym, 4), ("two_band", &two, 4), ("three_band", &three, 3)];
    for (label, symbol, n) in symbols {
        for mode in [BracketMode::Analytic, BracketMode::FiniteDifference] {
            let suffix = if mode == BracketMode::Analytic { "" } else { "_fd" };
            let frame = band_frame(symbol, &pt, mode, &opts)?;
            let w = BandDiagonalProbe::random(&mut rng, n, frame.band_count()).jet(&frame, &pt);
            for (name, r) in verify_bracket_identities(&frame, &w).residuals {
                rep.record(&format!("multiband.{name}{suffix}"), r);
            }
            let (lhs, rhs) = transport_forms(&frame, &w)?;
            rep.record(
                &format!("multiband.transport_forms_{label}{suffix}"),
                max_abs(&(lhs - rhs)),
            );
            if label == "dirac" {
                for band in [Band::Electron, Band::Positron] {
                    let generic = frame.spin_hamiltonian(dirac_band_index(band))?;
                    let special: DMatrix<C64> = to_dynamic(&f.spin_hamiltonian(band));
                    rep.record(
                        &format!("multiband.dirac_spin_hamiltonian{suffix}"),
                        max_abs(&(generic - special)),
                    );
                }
            }
        }
    }
    Ok(rep)
}

/// Runs every identity at `points` random phase points, fields and particle
/// parameters drawn from `seed`. Each point has its own random stream, so
/// results do not depend on thread scheduling.
pub fn run_identity_suite(seed: u64, points: usize) -> Result<IdentitySuiteReport, IdentityError> {
    if points == 0 || points > MAX_POINTS {
        return Err(IdentityError::Settings(format!(
            "points must be in 1..={MAX_POINTS}, got {points}"
        )));
    }
    let reports = (0..points)
        .into_par_iter()
        .map(|k| point_checks(seed, k))
        .collect::<Result<Vec<_>, _>>()?;
    let mut all = IdentityReport::default();
    all.record("gamma.clifford", gammas().max_relation_residual());
    for r in &reports {
        all.merge(r);
    }
    let checks: BTreeMap<String, IdentityCheck> = all
        .residuals
        .into_iter()
        .map(|(name, residual)| {
            let threshold = threshold(&name);
            let passed = residual.is_finite() && residual < threshold;
            (
                name,
                IdentityCheck {
                    residual,
                    threshold,
                    passed,
                },
            )
        })
        .collect();
    let failures: Vec<String> = checks
        .iter()
        .filter(|(_, ch)| !ch.passed)
        .map(|(k, _)| k.clone())
        .collect();
    Ok(IdentitySuiteReport {
        seed,
        points,
        passed: failures.is_empty(),
        checks,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_and_is_reproducible() {
        let a = run_identity_suite(42, 12).unwrap();
        assert!(a.passed, "{:?}", a.failures);
        assert!(a.checks.len() > 20);
        assert!(a.checks.contains_key("multiband.transport_forms_dirac_fd"));
        let b = run_identity_suite(42, 12).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = run_identity_suite(43, 12).unwrap();
        assert_ne!(a.checks, c.checks);
    }

    #[test]
    fn rejects_bad_point_counts() {
        assert!(matches!(run_identity_suite(1, 0), Err(IdentityError::Settings(_))));
        assert!(matches!(
            run_identity_suite(1, MAX_POINTS + 1),
            Err(IdentityError::Settings(_))
        ));
    }

    #[test]
    fn thresholds_follow_names() {
        assert_eq!(threshold("dirac.curvature_fd"), 1e-5);
        assert_eq!(threshold("multiband.product_rule"), 1e-9);
        assert_eq!(threshold("dirac.polarization_square"), 1e-12);
    }
}
