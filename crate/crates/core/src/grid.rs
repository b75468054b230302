//! Uniform periodic grids in one or two dimensions, four-component spinor
//! fields on them, and the FFT plumbing used by the Weyl and PDE code.
//!
//! Nodes are stored with axis 0 contiguous: `idx = i1·n + i0`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::calculus::CalculusError;
use crate::gamma::{Spinor, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dims: usize,
    /// Nodes per axis.
    pub n: usize,
    /// Box length per axis.
    pub length: f64,
    /// Position of node 0 on each axis.
    pub origin: [f64; 2],
}

impl GridSpec {
    pub fn new(dims: usize, n: usize, length: f64, origin: [f64; 2]) -> Result<Self, CalculusError> {
        let g = Self {
            dims,
            n,
            length,
            origin,
        };
        g.validate()?;
        Ok(g)
    }

    /// Box `[-L/2, L/2)^d` around `center`.
    pub fn centered(dims: usize, n: usize, length: f64, center: [f64; 2]) -> Result<Self, CalculusError> {
        Self::new(dims, n, length, [center[0] - 0.5 * length, center[1] - 0.5 * length])
    }

    pub fn validate(&self) -> Result<(), CalculusError> {
        if !(1..=2).contains(&self.dims) {
            return Err(CalculusError::Grid(format!("dims must be 1 or 2, got {}", self.dims)));
        }
        if self.n < 4 || !self.n.is_multiple_of(2) {
            return Err(CalculusError::Grid(format!(
                "n must be even and at least 4, got {}",
                self.n
            )));
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(CalculusError::Grid("box length must be positive".into()));
        }
        if !self.origin.iter().all(|x| x.is_finite()) {
            return Err(CalculusError::Grid("origin must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dims as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.dims as i32)
    }

    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// Multi-index of a flat node index.
    pub fn index(&self, idx: usize) -> [usize; 2] {
        if self.dims == 1 {
            [idx, 0]
        } else {
            [idx % self.n, idx / self.n]
        }
    }

    pub fn flat(&self, ij: [usize; 2]) -> usize {
        if self.dims == 1 {
            ij[0]
        } else {
            ij[1] * self.n + ij[0]
        }
    }

    /// Coordinate of node `i` on `axis`.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.dx()
    }

    pub fn position(&self, idx: usize) -> [f64; 2] {
        let ij = self.index(idx);
        let x = [self.coord(0, ij[0]), self.coord(1, ij[1])];
        if self.dims == 1 {
            [x[0], 0.0]
        } else {
            x
        }
    }

    /// Signed Fourier mode number for FFT slot `k`.
    pub fn mode(&self, k: usize) -> i64 {
        let n = self.n as i64;
        let k = k as i64;
        if k < n / 2 {
            k
        } else {
            k - n
        }
    }

    /// Angular wavenumber of FFT slot `k`.
    pub fn wavenumber(&self, k: usize) -> f64 {
        self.mode(k) as f64 * self.dxi()
    }

    pub fn wavevector(&self, idx: usize) -> [f64; 2] {
        let ij = self.index(idx);
        if self.dims == 1 {
            [self.wavenumber(ij[0]), 0.0]
        } else {
            [self.wavenumber(ij[0]), self.wavenumber(ij[1])]
        }
    }

    /// Whether `x` lies within `margin` of every box edge.
    pub fn contains_with_margin(&self, x: &[f64; 2], margin: f64) -> bool {
        (0..self.dims).all(|a| x[a] - margin >= self.origin[a] && x[a] + margin <= self.origin[a] + self.length)
    }
}

/// A four-component complex field on a grid, tagged with its scale `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpinor {
    pub grid: GridSpec,
    pub eps: f64,
    pub comps: [Vec<C64>; 4],
}

impl GridSpinor {
    pub fn zeros(grid: GridSpec, eps: f64) -> Self {
        let z = vec![C64::new(0.0, 0.0); grid.len()];
        Self {
            grid,
            eps,
            comps: [z.clone(), z.clone(), z.clone(), z],
        }
    }

    pub fn from_fn(grid: GridSpec, eps: f64, f: impl Fn([f64; 2]) -> Spinor) -> Self {
        let mut out = Self::zeros(grid, eps);
        for idx in 0..grid.len() {
            out.set(idx, &f(grid.position(idx)));
        }
        out
    }

    #[inline]
    pub fn get(&self, idx: usize) -> Spinor {
        Spinor::new(
            self.comps[0][idx],
            self.comps[1][idx],
            self.comps[2][idx],
            self.comps[3][idx],
        )
    }

    #[inline]
    pub fn set(&mut self, idx: usize, v: &Spinor) {
        for a in 0..4 {
            self.comps[a][idx] = v[a];
        }
    }

    pub fn check_compatible(&self, other: &Self) -> Result<(), CalculusError> {
        if self.grid != other.grid {
            return Err(CalculusError::Grid("grid specifications differ".into()));
        }
        Ok(())
    }

    /// `Σ |ψ(x)|² dx^d`.
    pub fn norm_sqr(&self) -> f64 {
        self.comps.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `⟨self, other⟩ = Σ self† other dx^d`.
    pub fn inner(&self, other: &Self) -> Result<C64, CalculusError> {
        self.check_compatible(other)?;
        let s: C64 = self
            .comps
            .iter()
            .zip(&other.comps)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| x.conj() * y))
            .sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn scale(&mut self, k: C64) {
        for comp in &mut self.comps {
            for z in comp.iter_mut() {
                *z *= k;
            }
        }
    }

    pub fn normalize(&mut self) -> Result<(), CalculusError> {
        let n = self.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(CalculusError::Grid(
                "cannot normalize a zero or non-finite field".into(),
            ));
        }
        self.scale(C64::new(1.0 / n, 0.0));
        Ok(())
    }

    /// Pointwise density `Σ_a |ψ_a(x)|²`.
    pub fn density(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| self.comps.iter().map(|c| c[i].norm_sqr()).sum())
            .collect()
    }

    pub fn sub(&self, other: &Self) -> Result<Self, CalculusError> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (a, b) in out.comps.iter_mut().zip(&other.comps) {
            for (x, y) in a.iter_mut().zip(b) {
                *x -= y;
            }
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.comps
            .iter()
            .flatten()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Forward and inverse FFT plans for a grid. The forward transform is
/// unnormalized; the inverse divides by the node count.
#[derive(Clone)]
pub struct GridFft {
    grid: GridSpec,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for GridFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridFft").field("grid", &self.grid).finish()
    }
}

impl GridFft {
    pub fn new(grid: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid: *grid,
            fwd: planner.plan_fft_forward(grid.n),
            inv: planner.plan_fft_inverse(grid.n),
        }
    }

    fn run(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n;
        assert_eq!(data.len(), self.grid.len(), "FFT buffer does not match grid");
        plan.process(data);
        if self.grid.dims == 2 {
            transpose_square(data, n);
            plan.process(data);
            transpose_square(data, n);
        }
    }

    pub fn forward(&self, data: &mut [C64]) {
        self.run(data, &self.fwd);
    }

    pub fn inverse(&self, data: &mut [C64]) {
        self.run(data, &self.inv);
        let k = 1.0 / self.grid.len() as f64;
        for z in data.iter_mut() {
            *z *= k;
        }
    }

    pub fn forward_spinor(&self, psi: &mut GridSpinor) {
        for comp in &mut psi.comps {
            self.forward(comp);
        }
    }

    pub fn inverse_spinor(&self, psi: &mut GridSpinor) {
        for comp in &mut psi.comps {
            self.inverse(comp);
        }
    }
}

fn transpose_square(data: &mut [C64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}
