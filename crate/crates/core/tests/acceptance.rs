//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spinlimit::bmt::{compare_quantum_bmt, evolve_bmt};
use spinlimit::calculus::{poisson_bracket, BracketMode};
use spinlimit::config::{preset, Mode, QuantumSettings};
use spinlimit::dynamics::{cyclotron_period, evolve_packet, DeltaPacket, Integration};
use spinlimit::fields::{FieldConfig, ParticleParams, Vec3};
use spinlimit::gamma::{c, max_abs, to_dynamic, C64, I};
use spinlimit::grid::{GridSpec, GridSpinor};
use spinlimit::harness::run;
use spinlimit::identities::run_identity_suite;
use spinlimit::multiband::{
    band_frame, evolve_band_packet, transport_forms, verify_bracket_identities, BandDiagonalProbe, BandOptions,
    BandPacket,
};
use spinlimit::pde::{
    convergence_study, evolve_split_step, exact_free_propagator, ConvergenceScenario, SplitStepConfig,
};
use spinlimit::sampling::{random_phase_point, random_scenario, random_unit};
use spinlimit::symbol::{Band, DiracBandEnergy, DiracProjection, DiracSymbol};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(checks: &[(&str, bool, String)]) -> Outcome {
    let passed = checks.iter().all(|c| c.1);
    let detail = checks
        .iter()
        .map(|(name, ok, msg)| format!("{name}{} {msg}", if *ok { "" } else { " [FAILED]" }))
        .collect::<Vec<_>>()
        .join("; ");
    Outcome { passed, detail }
}

fn below(name: &'static str, value: f64, tol: f64) -> (&'static str, bool, String) {
    (
        name,
        value.is_finite() && value < tol,
        format!("{value:.3e} < {tol:.0e}"),
    )
}

fn electron() -> ParticleParams {
    ParticleParams::default()
}

fn uniform_b() -> DiracSymbol {
    DiracSymbol::new(
        FieldConfig::UniformB {
            b: [0.0, 0.0, 1.0],
            center: [0.0; 3],
        },
        electron(),
    )
}

fn crossed() -> DiracSymbol {
    DiracSymbol::new(
        FieldConfig::CrossedEb {
            e: [0.3, 0.0, 0.0],
            b: [0.0, 0.0, 1.0],
            center: [0.0; 3],
        },
        electron(),
    )
}

/// |p| = √3 in the plane: γ = 2.
fn gamma_two() -> Vec3 {
    Vec3::new(3f64.sqrt(), 0.0, 0.0)
}

fn criterion_1() -> Outcome {
    let rep = run_identity_suite(2024, 50).expect("suite runs");
    let r = |k: &str| rep.checks[k].residual;
    outcome(&[
        below("(a.S)^2 = I", r("dirac.polarization_square"), 1e-12),
        below("[H_D, a.S] = 0", r("dirac.polarization_commutes_hamiltonian"), 1e-12),
        below("P^2 = P", r("dirac.projection_idempotent"), 1e-12),
        below("h+P+ + h-P- = H_D", r("dirac.spectral_reconstruction"), 1e-12),
        below("polarization chain", r("dirac.polarization_chain"), 1e-12),
        below("{P,P} closed vs FD", r("dirac.curvature_fd"), 1e-5),
        below("P{h,P}P = 0", r("dirac.band_energy_projection"), 1e-12),
    ])
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut fd_worst, mut an_worst) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let sym = random_scenario(&mut rng);
        let pt = random_phase_point(&mut rng);
        let f = sym.frame(&pt);
        let closed = f.berry_closed() + f.no_name_closed();
        let (be, nn) = f.spin_hamiltonian_bracket_parts(Band::Electron);
        an_worst = an_worst.max(max_abs(&(be + nn - closed)));

        // −i[P₊,{h₊,P₊}] − (i/2) P₊(h₊{P₊,P₊} − h₋{P₋,P₋})P₊ with difference brackets.
        let fd = BracketMode::FiniteDifference;
        let pp = DiracProjection {
            symbol: &sym,
            band: Band::Electron,
        };
        let pm = DiracProjection {
            symbol: &sym,
            band: Band::Positron,
        };
        let hp = DiracBandEnergy {
            symbol: &sym,
            band: Band::Electron,
        };
        let p = to_dynamic(&f.p_plus);
        let h_p = poisson_bracket(&hp, &pp, &pt, fd).unwrap();
        let berry = (&p * &h_p - &h_p * &p) * (-I);
        let inner = poisson_bracket(&pp, &pp, &pt, fd).unwrap() * c(f.h_plus)
            - poisson_bracket(&pm, &pm, &pt, fd).unwrap() * c(f.h_minus);
        let no_name = &p * inner * &p * (-I * 0.5);
        fd_worst = fd_worst.max(max_abs(&(berry + no_name - to_dynamic(&closed))));
    }
    outcome(&[
        below("finite-difference brackets", fd_worst, 1e-5),
        below("analytic gradients", an_worst, 1e-10),
    ])
}

fn max_bmt_deviation(sym: &DiracSymbol, p: Vec3, spin: Vec3, t: f64, steps: usize) -> (f64, f64) {
    let pk = DeltaPacket::polarized(sym, Vec3::zeros(), p, &spin, Band::Electron).unwrap();
    let rep = compare_quantum_bmt(&pk, sym, &Integration::new(t, t / steps as f64).unwrap(), "acceptance").unwrap();
    (rep.summary.max_deviation, rep.bmt_norm_drift())
}

fn criterion_3() -> Outcome {
    let t_b = 5.0 * cyclotron_period(&electron(), 1.0, 2.0);
    let spin = Vec3::new(0.3, 1.0, 0.4);
    let (dev_b, _) = max_bmt_deviation(&uniform_b(), gamma_two(), spin, t_b, 10_000);
    let p_eb = Vec3::new(0.2, 0.5, 0.1);
    let (dev_eb, _) = max_bmt_deviation(&crossed(), p_eb, spin, 40.0, 10_000);
    // Halving order, measured where the step error is far above rounding.
    let order = |sym: &DiracSymbol, p: Vec3, t: f64, n: usize| {
        let (a, _) = max_bmt_deviation(sym, p, spin, t, n);
        let (b, _) = max_bmt_deviation(sym, p, spin, t, 2 * n);
        (a / b).log2()
    };
    let ord_b = order(&uniform_b(), gamma_two(), t_b, 200);
    let ord_eb = order(&crossed(), p_eb, 40.0, 100);
    let near4 = |o: f64| (o - 4.0).abs() < 0.3;
    outcome(&[
        below("uniform B, 5 periods, 1e4 steps", dev_b, 1e-6),
        below("crossed E x B, 1e4 steps", dev_eb, 1e-6),
        (
            "halving order uniform B",
            near4(ord_b),
            format!("{ord_b:.3} (ratio {:.1})", 2f64.powf(ord_b)),
        ),
        (
            "halving order crossed",
            near4(ord_eb),
            format!("{ord_eb:.3} (ratio {:.1})", 2f64.powf(ord_eb)),
        ),
    ])
}

fn angle(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

fn criterion_4() -> Outcome {
    let sym = uniform_b();
    let t = 10.0 * cyclotron_period(&electron(), 1.0, 2.0);
    let integ = Integration::new(t, t / 20_000.0).unwrap();
    let pk = DeltaPacket::polarized(
        &sym,
        Vec3::zeros(),
        gamma_two(),
        &Vec3::new(0.6, 0.8, 0.3),
        Band::Electron,
    )
    .unwrap();
    let rec = evolve_packet(&pk, &sym, &integ).unwrap();
    let bmt = evolve_bmt(&rec.samples[0].s, &rec, &sym, &integ).unwrap();
    let a0 = angle(&rec.samples[0].s, &rec.samples[0].v);
    let q_dev = rec
        .samples
        .iter()
        .map(|s| (angle(&s.s, &s.v) - a0).abs())
        .fold(0.0, f64::max);
    let b_dev = rec
        .samples
        .iter()
        .zip(&bmt)
        .map(|(s, (_, sb))| (angle(sb, &s.v) - a0).abs())
        .fold(0.0, f64::max);
    outcome(&[
        below("quantum spin vs velocity [rad]", q_dev, 1e-6),
        below("BMT spin vs velocity [rad]", b_dev, 1e-6),
        ("initial angle", a0 > 0.1, format!("{a0:.4} rad")),
    ])
}

fn criterion_5() -> Outcome {
    let sym = uniform_b();
    let t = 10.0 * cyclotron_period(&electron(), 1.0, 2.0);
    let pk = DeltaPacket::polarized(
        &sym,
        Vec3::zeros(),
        gamma_two(),
        &Vec3::new(0.2, -0.5, 0.8),
        Band::Electron,
    )
    .unwrap();
    let rep = compare_quantum_bmt(&pk, &sym, &Integration::new(t, t / 20_000.0).unwrap(), "conservation").unwrap();
    let tr = &rep.trajectory;
    outcome(&[
        below("spinor norm drift", tr.max_norm_err(), 1e-9),
        below("band residual", tr.max_band_residual(), 1e-6),
        below("h+ relative drift", tr.max_energy_drift(), 1e-8),
        below("|s_BMT| drift", rep.bmt_norm_drift(), 1e-10),
    ])
}

fn criterion_6() -> Outcome {
    let opts = BandOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut orbit = 0.0f64;
    let scenarios = [
        (uniform_b(), gamma_two(), 2.0 * cyclotron_period(&electron(), 1.0, 2.0)),
        (crossed(), Vec3::new(0.2, 0.5, 0.1), 10.0),
    ];
    for (sym, p, t) in &scenarios {
        let integ = Integration::new(*t, t / 2000.0).unwrap();
        for band in [Band::Electron, Band::Positron] {
            let pk = DeltaPacket::polarized(sym, Vec3::new(0.1, 0.0, 0.0), *p, &random_unit(&mut rng), band).unwrap();
            let special = evolve_packet(&pk, sym, &integ).unwrap();
            let generic =
                evolve_band_packet(&BandPacket::from_delta(&pk), sym, &integ, BracketMode::Analytic, &opts).unwrap();
            for (a, b) in special.samples.iter().zip(&generic.samples) {
                let phi = DVector::from_iterator(4, a.spinor.iter().copied());
                orbit = orbit
                    .max((a.q - b.q).norm())
                    .max((a.p - b.p).norm())
                    .max((phi - &b.spinor).norm());
            }
        }
    }
    let (mut forms, mut battery) = (0.0f64, BTreeMap::<String, f64>::new());
    for _ in 0..20 {
        let sym = random_scenario(&mut rng);
        let pt = random_phase_point(&mut rng);
        let frame = band_frame(&sym, &pt, BracketMode::FiniteDifference, &opts).unwrap();
        let w = BandDiagonalProbe::random(&mut rng, 4, frame.band_count()).jet(&frame, &pt);
        let (lhs, rhs) = transport_forms(&frame, &w).unwrap();
        forms = forms.max(max_abs(&(lhs - rhs)));
        for (k, v) in verify_bracket_identities(&frame, &w).residuals {
            let e = battery.entry(k).or_insert(0.0);
            *e = e.max(v);
        }
    }
    let worst = battery.values().cloned().fold(0.0, f64::max);
    let names = battery.keys().cloned().collect::<Vec<_>>().join(",");
    outcome(&[
        below("generic vs specialized transport", orbit, 1e-9),
        below("transport forms (FD)", forms, 1e-5),
        (
            "bracket battery (FD)",
            worst < 1e-5,
            format!("{worst:.3e} < 1e-5 over {names}"),
        ),
    ])
}

fn criterion_7() -> Outcome {
    let cfg = preset("convergence_2d_B").unwrap().config;
    let g = cfg.grid.clone().unwrap();
    let init = cfg.initial.clone().unwrap();
    let sc = ConvergenceScenario {
        fields: cfg.fields.clone().unwrap(),
        params: cfg.particle(),
        q0: [init.q0[0], init.q0[1]],
        p0: [init.p0[0], init.p0[1]],
        spin_axis: init.spin.unwrap(),
        dims: g.dims,
        n: g.n,
        length: g.length,
        center: g.center,
        t_final: g.t_final,
        dt_over_eps: g.dt_over_eps,
        width_factor: g.width_factor,
        observations: g.observations,
    };
    let eps = cfg.convergence.unwrap().eps;
    assert_eq!((g.n, eps.as_slice()), (256, [0.2, 0.1, 0.05].as_slice()));
    let study = convergence_study(&sc, &eps).expect("study runs");
    let rep = &study.report;
    let errs: Vec<String> = eps
        .iter()
        .map(|e| format!("{:.4}", rep.entries[&format!("{e}")].err_x))
        .collect();
    let leaks: Vec<String> = eps
        .iter()
        .map(|e| format!("{:.2e}", rep.entries[&format!("{e}")].leak))
        .collect();
    let drift = rep.entries.values().map(|e| e.norm_drift).fold(0.0, f64::max);
    let order = rep.min_order_x.unwrap_or(f64::NAN);

    let grid = GridSpec::centered(2, 128, 8.0, [0.0, 0.0]).unwrap();
    let psi = GridSpinor::from_fn(grid, 0.1, |x| {
        let a = (-(x[0] * x[0] + x[1] * x[1])).exp();
        let ph = C64::from_polar(a, 3.0 * x[0] + 2.0 * x[1]);
        spinlimit::gamma::Spinor::new(ph, ph * 0.3, C64::new(0.0, 0.2) * a, C64::new(0.1 * a, 0.0))
    });
    let steps = 400;
    let dt = 0.005;
    let split = evolve_split_step(
        &psi,
        &SplitStepConfig {
            dt,
            n_steps: steps,
            observe_every: 50,
        },
        &FieldConfig::Free,
        &electron(),
    )
    .unwrap();
    let exact = exact_free_propagator(&psi, dt * steps as f64, &electron());
    let diff = split.sub(&exact).unwrap();
    let free = diff.comps.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);

    outcome(&[
        (
            "err_x strictly decreasing",
            rep.err_x_decreasing,
            format!("[{}]", errs.join(", ")),
        ),
        ("empirical order >= 0.8", order >= 0.8, format!("{order:.3}")),
        (
            "leakage decreasing",
            rep.leak_decreasing,
            format!("[{}]", leaks.join(", ")),
        ),
        below("norm drift", drift, 1e-10),
        below("free split-step vs exact", free, 1e-12),
    ])
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
        .iter()
        .map(|f| {
            (
                f.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(f).unwrap(),
            )
        })
        .collect()
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut ident = preset("free").unwrap().config;
    ident.mode = Mode::Identities;
    ident.seed = 42;
    let compare = preset("uniform_B_cyclotron").unwrap().config;
    let mut quantum = preset("convergence_2d_B").unwrap().config;
    quantum.mode = Mode::Quantum;
    let g = quantum.grid.as_mut().unwrap();
    (g.n, g.length, g.t_final, g.observations) = (64, 10.0, 0.5, 3);
    quantum.quantum = Some(QuantumSettings {
        eps: 0.2,
        snapshot: true,
    });

    let mut checks = Vec::new();
    for (name, cfg) in [("identities", ident), ("compare", compare), ("quantum", quantum)] {
        let a = tmp.path().join(format!("{name}_a"));
        let b = tmp.path().join(format!("{name}_b"));
        run(&cfg, &a, true).unwrap();
        run(&cfg, &b, true).unwrap();
        let (fa, fb) = (dir_bytes(&a), dir_bytes(&b));
        let same = fa == fb;
        checks.push((name, same, format!("{} files", fa.len())));
    }
    outcome(&checks)
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("algebraic identity suite", criterion_1),
        ("spin-Hamiltonian equivalence", criterion_2),
        ("BMT reproduction", criterion_3),
        ("g = 2 helicity lock", criterion_4),
        ("conservation suite", criterion_5),
        ("band framework equivalence", criterion_6),
        ("PDE epsilon-convergence", criterion_7),
        ("determinism", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let id = (k + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|s| s == &id) {
            continue;
        }
        let start = Instant::now();
        let out = f();
        let tag = if out.passed { "PASS" } else { "FAIL" };
        println!(
            "[{tag}] {id}. {name} ({:.2} s): {}",
            start.elapsed().as_secs_f64(),
            out.detail
        );
        if !out.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
