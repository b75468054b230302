//! Weyl quantization of matrix symbols on periodic grids.
//!
//! The generic path is a midpoint quadrature of
//! `(Hψ)(x) = (2π)^{-d} ∫∫ H((x+y)/2, εξ) e^{i(x−y)·ξ} ψ(y) dy dξ`
//! with `ξ` on the Fourier lattice. For each half-grid midpoint `M` the
//! kernel `K(M, r)` is an inverse DFT of the symbol over `ξ`; pairs
//! `(i, j)` with `i + j = M` and `i − j = r` pick it up. The two wraps of
//! the Nyquist separation `r = ±N/2` share the weight.
//!
//! Two fast paths cover everything the PDE needs: split symbols
//! `f(q) + g(p)` and minimal-coupling symbols `f(p − κA(q))` with a linear
//! gauge whose Jacobian is antisymmetric on the grid axes. For the latter the
//! Weyl and left quantizations coincide, so the operator is
//! `(1/N^d) Σ_ξ f(εξ − κA(x)) ψ̂(ξ) e^{iξ·x}` and can be evaluated only
//! where `ψ` and `ψ̂` are non-negligible.

use nalgebra::DMatrix;
use rustfft::FftPlanner;

use super::{embed, CalculusError, MatrixSymbol};
use crate::fields::{LinearGauge, Vec3};
use crate::gamma::{ComplexMatrix4, Spinor, C64};
use crate::grid::{GridFft, GridSpinor};

/// Largest grid the dense quadrature accepts, per dimension.
pub const DENSE_LIMIT_1D: usize = 1024;
pub const DENSE_LIMIT_2D: usize = 64;

fn to_matrix4(m: &DMatrix<C64>) -> Result<ComplexMatrix4, CalculusError> {
    match m.nrows() {
        1 => Ok(ComplexMatrix4::identity() * m[(0, 0)]),
        4 => Ok(ComplexMatrix4::from_iterator(m.iter().copied())),
        n => Err(CalculusError::DimensionMismatch(n, 4)),
    }
}

/// Dense midpoint-quadrature Weyl quantization of `symbol` applied to `psi`.
pub fn weyl_apply(symbol: &dyn MatrixSymbol, psi: &GridSpinor) -> Result<GridSpinor, CalculusError> {
    let g = psi.grid;
    g.validate()?;
    if symbol.dim() != 1 && symbol.dim() != 4 {
        return Err(CalculusError::DimensionMismatch(symbol.dim(), 4));
    }
    let limit = if g.dims == 1 { DENSE_LIMIT_1D } else { DENSE_LIMIT_2D };
    if g.n > limit {
        return Err(CalculusError::Grid(format!(
            "dense Weyl quadrature limited to n <= {limit} in {}D, got {}",
            g.dims, g.n
        )));
    }
    let n = g.n;
    let eps = psi.eps;
    let d = g.dims;
    let n1 = if d == 2 { n } else { 1 };
    let m1_count = if d == 2 { 2 * n } else { 1 };
    let half = (n / 2) as i64;
    let r1_range = if d == 2 { -half..=half } else { 0..=0 };

    let mut planner = FftPlanner::new();
    let inv = planner.plan_fft_inverse(n);
    let mut kernel: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); n * n1]; 16];
    let mut out = GridSpinor::zeros(g, eps);
    let wrap = |k: i64| k.rem_euclid(n as i64) as usize;
    let weight = |r: i64| if r.abs() == half { 0.5 } else { 1.0 };
    let data: Vec<Spinor> = (0..g.len()).map(|i| psi.get(i)).collect();

    for m1 in 0..m1_count {
        for m0 in 0..2 * n {
            let mid = [
                g.origin[0] + 0.5 * m0 as f64 * g.dx(),
                g.origin[1] + 0.5 * m1 as f64 * g.dx(),
            ];
            let q: Vec<f64> = mid[..d].to_vec();
            for k1 in 0..n1 {
                for k0 in 0..n {
                    let xi = [g.wavenumber(k0), if d == 2 { g.wavenumber(k1) } else { 0.0 }];
                    let p: Vec<f64> = xi[..d].iter().map(|x| eps * x).collect();
                    let h = to_matrix4(&symbol.eval(&embed(&q, &p)))?;
                    for (e, kern) in kernel.iter_mut().enumerate() {
                        kern[k1 * n + k0] = h[e];
                    }
                }
            }
            // K(M, r) = (1/N^d) Σ_ξ H(M, εξ) e^{iξ·r dx}.
            for kern in kernel.iter_mut() {
                inv.process(kern);
                if d == 2 {
                    transpose(kern, n);
                    inv.process(kern);
                    transpose(kern, n);
                }
                let scale = 1.0 / (n * n1) as f64;
                for z in kern.iter_mut() {
                    *z *= scale;
                }
            }
            for r1 in r1_range.clone() {
                if (m1 as i64 - r1).rem_euclid(2) != 0 {
                    continue;
                }
                let (i1, j1) = (wrap((m1 as i64 + r1) / 2), wrap((m1 as i64 - r1) / 2));
                for r0 in -half..=half {
                    if (m0 as i64 - r0).rem_euclid(2) != 0 {
                        continue;
                    }
                    let (i0, j0) = (wrap((m0 as i64 + r0) / 2), wrap((m0 as i64 - r0) / 2));
                    let w = weight(r0) * if d == 2 { weight(r1) } else { 1.0 };
                    let slot = wrap(r1) * n + wrap(r0);
                    let k = ComplexMatrix4::from_fn(|a, b| kernel[b * 4 + a][slot]);
                    let src = data[g.flat([j0, j1])];
                    let contrib = k * src * C64::new(w, 0.0);
                    let dst = g.flat([i0, i1]);
                    for a in 0..4 {
                        out.comps[a][dst] += contrib[a];
                    }
                }
            }
        }
    }
    Ok(out)
}

fn transpose(data: &mut [C64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Applies the Fourier multiplier `f(εξ)` to every mode.
pub fn apply_fourier_multiplier(psi: &GridSpinor, fft: &GridFft, f: impl Fn([f64; 2]) -> ComplexMatrix4) -> GridSpinor {
    let mut hat = psi.clone();
    fft.forward_spinor(&mut hat);
    for idx in 0..psi.grid.len() {
        let xi = psi.grid.wavevector(idx);
        let v = f([psi.eps * xi[0], psi.eps * xi[1]]) * hat.get(idx);
        hat.set(idx, &v);
    }
    fft.inverse_spinor(&mut hat);
    hat
}

/// Weyl quantization of `q_part(q) + p_part(p)`.
pub fn weyl_apply_split(
    q_part: impl Fn([f64; 2]) -> ComplexMatrix4,
    p_part: impl Fn([f64; 2]) -> ComplexMatrix4,
    psi: &GridSpinor,
) -> Result<GridSpinor, CalculusError> {
    psi.grid.validate()?;
    let fft = GridFft::new(&psi.grid);
    let mut out = apply_fourier_multiplier(psi, &fft, p_part);
    for idx in 0..psi.grid.len() {
        let v = out.get(idx) + q_part(psi.grid.position(idx)) * psi.get(idx);
        out.set(idx, &v);
    }
    Ok(out)
}

/// `π = p − κ A(q)` with a linear gauge.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimalCoupling {
    pub gauge: LinearGauge,
    pub kappa: f64,
}

impl MinimalCoupling {
    pub fn none() -> Self {
        Self {
            gauge: LinearGauge::zero(),
            kappa: 0.0,
        }
    }

    pub fn kinetic(&self, q: [f64; 2], p: [f64; 2]) -> Vec3 {
        let a = self.gauge.eval(&Vec3::new(q[0], q[1], 0.0));
        Vec3::new(p[0], p[1], 0.0) - a * self.kappa
    }

    fn is_trivial(&self, dims: usize) -> bool {
        self.kappa == 0.0 || (0..3).all(|k| (0..dims).all(|i| self.gauge.jac[(k, i)] == 0.0))
    }

    /// Whether the Weyl and left quantizations of `f(p − κA(q))` agree.
    pub fn check(&self, dims: usize) -> Result<(), CalculusError> {
        let j = &self.gauge.jac;
        let tol = 1e-14 * (1.0 + j.abs().max());
        for i in 0..dims {
            for k in 0..3 {
                let bad = if k < dims {
                    (j[(k, i)] + j[(i, k)]).abs() > tol
                } else {
                    j[(k, i)].abs() > tol
                };
                if bad {
                    return Err(CalculusError::Unsupported(
                        "gauge Jacobian must be antisymmetric on the grid axes".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Sparse evaluation plan: grid nodes and Fourier modes that carry the state.
struct Support {
    nodes: Vec<usize>,
    modes: Vec<usize>,
    hat: Vec<Spinor>,
}

fn support(psi: &GridSpinor, fft: &GridFft, tol: f64) -> Support {
    let g = psi.grid;
    let dens = psi.density();
    let dmax = dens.iter().cloned().fold(0.0, f64::max);
    let nodes = (0..g.len()).filter(|&i| dens[i] > tol * dmax).collect();
    let mut hat = psi.clone();
    fft.forward_spinor(&mut hat);
    let hdens = hat.density();
    let hmax = hdens.iter().cloned().fold(0.0, f64::max);
    let modes: Vec<usize> = (0..g.len()).filter(|&k| hdens[k] > tol * hmax).collect();
    let hat = modes.iter().map(|&k| hat.get(k)).collect();
    Support { nodes, modes, hat }
}

/// Action of a symbol on a spinor at kinetic momentum `π`, returning `K`
/// results at once. Matrix-free actions keep the sparse double sum cheap.
pub type MinimalAction<'a, const K: usize> = dyn Fn(&Vec3, &Spinor) -> [Spinor; K] + Sync + 'a;

fn minimal_core<const K: usize>(
    act: &MinimalAction<K>,
    coupling: &MinimalCoupling,
    psi: &GridSpinor,
    sup: &Support,
    nodes: &[usize],
) -> Vec<[Spinor; K]> {
    use rayon::prelude::*;
    let g = psi.grid;
    let n = g.n;
    // e^{2πi t/N} by table lookup; the phase of (node, mode) is t = x·k mod N.
    let table: Vec<C64> = (0..n)
        .map(|t| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * t as f64 / n as f64))
        .collect();
    let norm = C64::new(1.0 / g.len() as f64, 0.0);
    let modes: Vec<([usize; 2], Vec3)> = sup
        .modes
        .iter()
        .map(|&k| {
            let xi = g.wavevector(k);
            (g.index(k), Vec3::new(psi.eps * xi[0], psi.eps * xi[1], 0.0))
        })
        .collect();
    nodes
        .par_iter()
        .map(|&node| {
            let x = g.position(node);
            let shift = coupling.kinetic(x, [0.0, 0.0]);
            let xi = g.index(node);
            let mut acc = [Spinor::zeros(); K];
            for ((ki, p), h) in modes.iter().zip(&sup.hat) {
                let t = (xi[0] * ki[0] + xi[1] * ki[1]) % n;
                let v = h * table[t];
                for (a, r) in acc.iter_mut().zip(act(&(p + shift), &v)) {
                    *a += r;
                }
            }
            acc.map(|a| a * norm)
        })
        .collect()
}

/// Applies the Weyl quantization of `f(p − κA(q))`, given through its
/// action `v ↦ f(π) v`.
///
/// With `support_tol = Some(t)` only modes of `ψ̂` and output nodes of
/// `ψ` whose density exceeds `t` times the peak are used; outside that set
/// the output is zero. `None` evaluates everything.
pub fn weyl_apply_minimal(
    act: &(dyn Fn(&Vec3, &Spinor) -> Spinor + Sync),
    coupling: &MinimalCoupling,
    psi: &GridSpinor,
    support_tol: Option<f64>,
) -> Result<GridSpinor, CalculusError> {
    let g = psi.grid;
    g.validate()?;
    let fft = GridFft::new(&g);
    if coupling.is_trivial(g.dims) {
        let a = coupling.gauge.offset * coupling.kappa;
        let mut hat = psi.clone();
        fft.forward_spinor(&mut hat);
        for idx in 0..g.len() {
            let xi = g.wavevector(idx);
            let pi = Vec3::new(psi.eps * xi[0], psi.eps * xi[1], 0.0) - a;
            let v = act(&pi, &hat.get(idx));
            hat.set(idx, &v);
        }
        fft.inverse_spinor(&mut hat);
        return Ok(hat);
    }
    coupling.check(g.dims)?;
    let sup = support(psi, &fft, support_tol.unwrap_or(0.0));
    let nodes: Vec<usize> = if support_tol.is_some() {
        sup.nodes.clone()
    } else {
        (0..g.len()).collect()
    };
    let wrapped = |pi: &Vec3, v: &Spinor| [act(pi, v)];
    let vals = minimal_core::<1>(&wrapped, coupling, psi, &sup, &nodes);
    let mut out = GridSpinor::zeros(g, psi.eps);
    for (&node, v) in nodes.iter().zip(&vals) {
        out.set(node, &v[0]);
    }
    Ok(out)
}

/// Expectations `⟨ψ, Op(f_k)ψ⟩` for `K` minimal-coupling symbols evaluated
/// together through their actions.
pub fn minimal_expectations<const K: usize>(
    act: &MinimalAction<K>,
    coupling: &MinimalCoupling,
    psi: &GridSpinor,
    support_tol: f64,
) -> Result<[C64; K], CalculusError> {
    let g = psi.grid;
    g.validate()?;
    let fft = GridFft::new(&g);
    let mut res = [C64::new(0.0, 0.0); K];
    if coupling.is_trivial(g.dims) {
        // Parseval: ⟨ψ, f(εξ)ψ⟩ = N^{-d} Σ_ξ ψ̂† f ψ̂ dx^d.
        let a = coupling.gauge.offset * coupling.kappa;
        let mut hat = psi.clone();
        fft.forward_spinor(&mut hat);
        let w = g.cell_volume() / g.len() as f64;
        for idx in 0..g.len() {
            let xi = g.wavevector(idx);
            let pi = Vec3::new(psi.eps * xi[0], psi.eps * xi[1], 0.0) - a;
            let h = hat.get(idx);
            for (r, v) in res.iter_mut().zip(act(&pi, &h)) {
                *r += h.dotc(&v) * w;
            }
        }
        return Ok(res);
    }
    coupling.check(g.dims)?;
    let sup = support(psi, &fft, support_tol);
    let vals = minimal_core::<K>(act, coupling, psi, &sup, &sup.nodes);
    for (&node, v) in sup.nodes.iter().zip(&vals) {
        let s = psi.get(node);
        for (r, out) in res.iter_mut().zip(v) {
            *r += s.dotc(out) * g.cell_volume();
        }
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{Constant, FnSymbol};
    use crate::fields::ParticleParams;
    use crate::gamma::{c, gammas};
    use crate::grid::GridSpec;
    use crate::symbol::{projection_of_kinetic, Band, PhasePoint};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(g: GridSpec, eps: f64, seed: u64) -> GridSpinor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut psi = GridSpinor::zeros(g, eps);
        for comp in &mut psi.comps {
            for z in comp.iter_mut() {
                *z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        psi
    }

    fn gaussian(g: GridSpec, eps: f64, q0: [f64; 2], k0: [f64; 2], sigma: f64) -> GridSpinor {
        let mut psi = GridSpinor::from_fn(g, eps, |x| {
            let r2: f64 = (0..g.dims).map(|a| (x[a] - q0[a]).powi(2)).sum();
            let ph: f64 = (0..g.dims).map(|a| k0[a] * x[a]).sum();
            let amp = C64::from_polar((-r2 / (4.0 * sigma * sigma)).exp(), ph);
            Spinor::new(amp, amp * 0.5, amp * C64::new(0.0, 0.3), amp * -0.2)
        });
        psi.normalize().unwrap();
        psi
    }

    fn max_diff(a: &GridSpinor, b: &GridSpinor) -> f64 {
        a.comps
            .iter()
            .zip(&b.comps)
            .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).norm()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn identity_and_multiplication_symbols() {
        for (dims, n) in [(1, 32), (2, 8)] {
            let g = GridSpec::centered(dims, n, 5.0, [0.0, 0.0]).unwrap();
            let psi = random_field(g, 0.3, 1);
            let id = Constant(DMatrix::identity(4, 4));
            assert!(max_diff(&weyl_apply(&id, &psi).unwrap(), &psi) < 1e-12);
            let v = FnSymbol {
                dim: 1,
                f: |pt: &PhasePoint| DMatrix::from_element(1, 1, c((pt.q[0] + 0.3 * pt.q[1]).sin())),
            };
            let out = weyl_apply(&v, &psi).unwrap();
            let expect = GridSpinor::from_fn(g, 0.3, |_| Spinor::zeros());
            let mut expect = expect;
            for idx in 0..g.len() {
                let x = g.position(idx);
                expect.set(idx, &(psi.get(idx) * c((x[0] + 0.3 * x[1]).sin())));
            }
            assert!(max_diff(&out, &expect) < 1e-12);
        }
    }

    #[test]
    fn momentum_symbol_on_plane_wave() {
        let g = GridSpec::centered(1, 64, 2.0 * std::f64::consts::PI, [0.0, 0.0]).unwrap();
        let eps = 0.25;
        let k = 5.0;
        let psi = GridSpinor::from_fn(g, eps, |x| {
            let z = C64::from_polar(1.0, k * x[0]);
            Spinor::new(z, C64::new(0.0, 0.0), C64::new(0.0, 0.0), z)
        });
        let p = FnSymbol {
            dim: 1,
            f: |pt: &PhasePoint| DMatrix::from_element(1, 1, c(pt.p[0])),
        };
        let out = weyl_apply(&p, &psi).unwrap();
        let mut expect = psi.clone();
        expect.scale(c(eps * k));
        assert!(max_diff(&out, &expect) < 1e-12);
    }

    #[test]
    fn real_scalar_symbol_is_hermitian() {
        for (dims, n) in [(1, 48), (2, 8)] {
            let g = GridSpec::centered(dims, n, 6.0, [0.0, 0.0]).unwrap();
            let sym = FnSymbol {
                dim: 1,
                f: |pt: &PhasePoint| {
                    DMatrix::from_element(
                        1,
                        1,
                        c((pt.q[0] * pt.p[0]).cos() + pt.p[1] * pt.q[1].sin() + pt.p[0].powi(2)),
                    )
                },
            };
            let chi = random_field(g, 0.4, 2);
            let psi = random_field(g, 0.4, 3);
            let lhs = chi.inner(&weyl_apply(&sym, &psi).unwrap()).unwrap();
            let rhs = weyl_apply(&sym, &chi).unwrap().inner(&psi).unwrap();
            assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0));
        }
    }

    #[test]
    fn split_path_matches_dense() {
        let g = GridSpec::centered(1, 64, 8.0, [0.0, 0.0]).unwrap();
        let gs = gammas();
        let psi = gaussian(g, 0.2, [0.5, 0.0], [3.0, 0.0], 0.6);
        let sym = FnSymbol {
            dim: 4,
            f: |pt: &PhasePoint| {
                let m = gs.alpha[0] * c(pt.p[0]) + gs.gamma0 + ComplexMatrix4::identity() * c(0.3 * pt.q[0] * pt.q[0]);
                crate::gamma::to_dynamic(&m)
            },
        };
        let dense = weyl_apply(&sym, &psi).unwrap();
        let fast = weyl_apply_split(
            |q| ComplexMatrix4::identity() * c(0.3 * q[0] * q[0]),
            |p| gs.alpha[0] * c(p[0]) + gs.gamma0,
            &psi,
        )
        .unwrap();
        assert!(max_diff(&dense, &fast) < 1e-10);
    }

    #[test]
    fn minimal_coupling_path_matches_dense_in_2d() {
        // The dense quadrature approaches the fast path algebraically in N.
        let mut diffs = Vec::new();
        for nn in [16usize, 32] {
            let g = GridSpec::centered(2, nn, 8.0, [0.0, 0.0]).unwrap();
            let params = ParticleParams::default();
            let b = 0.8;
            let gauge = LinearGauge::symmetric(&Vec3::new(0.0, 0.0, b), &Vec3::zeros());
            let kappa = params.e / params.c;
            let coupling = MinimalCoupling { gauge, kappa };
            let eps = 0.1;
            let psi = gaussian(g, eps, [0.3, -0.2], [5.0, 2.0], 0.35);
            let f = move |pi: &Vec3, v: &Spinor| projection_of_kinetic(pi, &params, Band::Electron) * v;
            let sym = FnSymbol {
                dim: 4,
                f: move |pt: &PhasePoint| {
                    let a = gauge.eval(&pt.q);
                    crate::gamma::to_dynamic(&projection_of_kinetic(&(pt.p - a * kappa), &params, Band::Electron))
                },
            };
            let dense = weyl_apply(&sym, &psi).unwrap();
            let fast = weyl_apply_minimal(&f, &coupling, &psi, None).unwrap();
            diffs.push(max_diff(&dense, &fast));
            if nn < 32 {
                continue;
            }
            let sparse = weyl_apply_minimal(&f, &coupling, &psi, Some(1e-20)).unwrap();
            // Exact on the nodes it keeps; elsewhere only the discrete kernel tail is dropped.
            let dens = psi.density();
            let peak = dens.iter().cloned().fold(0.0, f64::max);
            for idx in (0..g.len()).filter(|&i| dens[i] > 1e-20 * peak) {
                assert!((sparse.get(idx) - fast.get(idx)).norm() < 1e-10);
            }
            let [occ] = minimal_expectations::<1>(&|pi: &Vec3, v: &Spinor| [f(pi, v)], &coupling, &psi, 1e-20).unwrap();
            let direct = psi.inner(&fast).unwrap();
            assert!((occ - direct).norm() < 1e-8);
        }
        assert!(diffs[1] < 1e-3 && diffs[1] < diffs[0] / 4.0, "{diffs:?}");
    }

    #[test]
    fn minimal_coupling_rejects_symmetric_jacobian() {
        let g = GridSpec::centered(2, 8, 4.0, [0.0, 0.0]).unwrap();
        let mut gauge = LinearGauge::zero();
        gauge.jac[(0, 1)] = 1.0;
        gauge.jac[(1, 0)] = 1.0;
        let coupling = MinimalCoupling { gauge, kappa: 1.0 };
        let psi = random_field(g, 0.2, 4);
        let f = |_: &Vec3, v: &Spinor| *v;
        assert!(matches!(
            weyl_apply_minimal(&f, &coupling, &psi, None),
            Err(CalculusError::Unsupported(_))
        ));
    }

    #[test]
    fn dense_rejects_large_grids_and_bad_dims() {
        let g = GridSpec::centered(2, 128, 4.0, [0.0, 0.0]).unwrap();
        let psi = GridSpinor::zeros(g, 0.1);
        assert!(weyl_apply(&Constant(DMatrix::identity(4, 4)), &psi).is_err());
        let g1 = GridSpec::centered(1, 16, 4.0, [0.0, 0.0]).unwrap();
        let psi1 = GridSpinor::zeros(g1, 0.1);
        assert_eq!(
            weyl_apply(&Constant(DMatrix::identity(3, 3)), &psi1).unwrap_err(),
            CalculusError::DimensionMismatch(3, 4)
        );
    }
}
