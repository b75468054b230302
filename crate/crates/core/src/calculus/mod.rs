//! Matrix-valued Poisson brackets and Weyl quantization.
//!
//! The bracket convention is `{A, B} = ∇_p A · ∇_q B − ∇_q A · ∇_p B`, with
//! the order of the matrix factors kept, so `{p_i, q_j} = δ_ij` and
//! `{A, A}` need not vanish.

pub mod weyl;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fields::Vec3;
use crate::gamma::{c, max_abs, C64};
use crate::symbol::PhasePoint;

#[derive(Debug, Error, PartialEq)]
pub enum CalculusError {
    #[error("analytic bracket requested but a symbol has no analytic gradients")]
    MissingGradients,
    #[error("symbol dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("grid error: {0}")]
    Grid(String),
    #[error("unsupported symbol structure: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BracketMode {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolGradients {
    pub dq: [DMatrix<C64>; 3],
    pub dp: [DMatrix<C64>; 3],
}

/// An `n×n` Hermitian matrix function on phase space.
pub trait MatrixSymbol: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, pt: &PhasePoint) -> DMatrix<C64>;
    /// Closed-form gradients, when the symbol knows them.
    fn gradients(&self, _pt: &PhasePoint) -> Option<SymbolGradients> {
        None
    }
}

impl<T: MatrixSymbol + ?Sized> MatrixSymbol for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, pt: &PhasePoint) -> DMatrix<C64> {
        (**self).eval(pt)
    }
    fn gradients(&self, pt: &PhasePoint) -> Option<SymbolGradients> {
        (**self).gradients(pt)
    }
}

fn fd_step(x: f64) -> f64 {
    1e-5 * (1.0 + x.abs())
}

/// Central-difference gradients, step `1e-5·(1 + |coordinate|)`.
pub fn finite_difference_gradients<S: MatrixSymbol + ?Sized>(sym: &S, pt: &PhasePoint) -> SymbolGradients {
    let diff = |shift: &dyn Fn(f64) -> PhasePoint, x: f64| {
        let h = fd_step(x);
        (sym.eval(&shift(h)) - sym.eval(&shift(-h))) * c(0.5 / h)
    };
    let dq = std::array::from_fn(|i| {
        diff(
            &|h| {
                let mut p = *pt;
                p.q[i] += h;
                p
            },
            pt.q[i],
        )
    });
    let dp = std::array::from_fn(|i| {
        diff(
            &|h| {
                let mut p = *pt;
                p.p[i] += h;
                p
            },
            pt.p[i],
        )
    });
    SymbolGradients { dq, dp }
}

pub fn gradients<S: MatrixSymbol + ?Sized>(
    sym: &S,
    pt: &PhasePoint,
    mode: BracketMode,
) -> Result<SymbolGradients, CalculusError> {
    match mode {
        BracketMode::Analytic => sym.gradients(pt).ok_or(CalculusError::MissingGradients),
        BracketMode::FiniteDifference => Ok(finite_difference_gradients(sym, pt)),
    }
}

pub fn bracket_from_gradients(a: &SymbolGradients, b: &SymbolGradients) -> DMatrix<C64> {
    let n = a.dq[0].nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..3 {
        out += &a.dp[i] * &b.dq[i] - &a.dq[i] * &b.dp[i];
    }
    out
}

pub fn poisson_bracket<A: MatrixSymbol + ?Sized, B: MatrixSymbol + ?Sized>(
    a: &A,
    b: &B,
    pt: &PhasePoint,
    mode: BracketMode,
) -> Result<DMatrix<C64>, CalculusError> {
    if a.dim() != b.dim() {
        return Err(CalculusError::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(bracket_from_gradients(
        &gradients(a, pt, mode)?,
        &gradients(b, pt, mode)?,
    ))
}

/// Residual of `A{B,C} − {A,B}C − {AB,C} + {A,BC}` (max entry).
pub fn check_product_identity(
    a: &dyn MatrixSymbol,
    b: &dyn MatrixSymbol,
    cc: &dyn MatrixSymbol,
    pt: &PhasePoint,
    mode: BracketMode,
) -> Result<f64, CalculusError> {
    let n = a.dim();
    for d in [b.dim(), cc.dim()] {
        if d != n {
            return Err(CalculusError::DimensionMismatch(n, d));
        }
    }
    let ab = Product(a, b);
    let bc = Product(b, cc);
    let lhs = a.eval(pt) * poisson_bracket(b, cc, pt, mode)? - poisson_bracket(a, b, pt, mode)? * cc.eval(pt);
    let rhs = poisson_bracket(&ab, cc, pt, mode)? - poisson_bracket(a, &bc, pt, mode)?;
    Ok(max_abs(&(lhs - rhs)))
}

/// Pointwise product `A·B`; gradients by the product rule.
pub struct Product<'a>(pub &'a dyn MatrixSymbol, pub &'a dyn MatrixSymbol);

impl MatrixSymbol for Product<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval(&self, pt: &PhasePoint) -> DMatrix<C64> {
        self.0.eval(pt) * self.1.eval(pt)
    }

    fn gradients(&self, pt: &PhasePoint) -> Option<SymbolGradients> {
        let (ga, gb) = (self.0.gradients(pt)?, self.1.gradients(pt)?);
        let (a, b) = (self.0.eval(pt), self.1.eval(pt));
        Some(SymbolGradients {
            dq: std::array::from_fn(|i| &ga.dq[i] * &b + &a * &gb.dq[i]),
            dp: std::array::from_fn(|i| &ga.dp[i] * &b + &a * &gb.dp[i]),
        })
    }
}

/// A constant matrix.
pub struct Constant(pub DMatrix<C64>);

impl MatrixSymbol for Constant {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn eval(&self, _pt: &PhasePoint) -> DMatrix<C64> {
        self.0.clone()
    }
    fn gradients(&self, _pt: &PhasePoint) -> Option<SymbolGradients> {
        let z = DMatrix::zeros(self.0.nrows(), self.0.ncols());
        Some(SymbolGradients {
            dq: std::array::from_fn(|_| z.clone()),
            dp: std::array::from_fn(|_| z.clone()),
        })
    }
}

/// Scalar coordinate functions `q_i` or `p_i` as 1×1 symbols.
#[derive(Debug, Clone, Copy)]
pub enum Coordinate {
    Q(usize),
    P(usize),
}

impl MatrixSymbol for Coordinate {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, pt: &PhasePoint) -> DMatrix<C64> {
        let x = match *self {
            Coordinate::Q(i) => pt.q[i],
            Coordinate::P(i) => pt.p[i],
        };
        DMatrix::from_element(1, 1, c(x))
    }
    fn gradients(&self, _pt: &PhasePoint) -> Option<SymbolGradients> {
        let unit = |hit: bool| DMatrix::from_element(1, 1, c(if hit { 1.0 } else { 0.0 }));
        Some(match *self {
            Coordinate::Q(k) => SymbolGradients {
                dq: std::array::from_fn(|i| unit(i == k)),
                dp: std::array::from_fn(|_| unit(false)),
            },
            Coordinate::P(k) => SymbolGradients {
                dq: std::array::from_fn(|_| unit(false)),
                dp: std::array::from_fn(|i| unit(i == k)),
            },
        })
    }
}

/// A polynomial in the six phase-space coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePolynomial {
    /// `(coefficient, exponents of q₁ q₂ q₃ p₁ p₂ p₃)`.
    pub terms: Vec<(f64, [u32; 6])>,
}

impl PhasePolynomial {
    fn coords(pt: &PhasePoint) -> [f64; 6] {
        [pt.q[0], pt.q[1], pt.q[2], pt.p[0], pt.p[1], pt.p[2]]
    }

    pub fn eval(&self, pt: &PhasePoint) -> f64 {
        let x = Self::coords(pt);
        self.terms
            .iter()
            .map(|(k, e)| k * (0..6).map(|i| x[i].powi(e[i] as i32)).product::<f64>())
            .sum()
    }

    /// Partial derivative with respect to coordinate `axis` (0..3 → q, 3..6 → p).
    pub fn partial(&self, pt: &PhasePoint, axis: usize) -> f64 {
        let x = Self::coords(pt);
        self.terms
            .iter()
            .filter(|(_, e)| e[axis] > 0)
            .map(|(k, e)| {
                let mut prod = k * e[axis] as f64;
                for (i, &xi) in x.iter().enumerate() {
                    let pw = if i == axis { e[i] - 1 } else { e[i] };
                    prod *= xi.powi(pw as i32);
                }
                prod
            })
            .sum()
    }

    pub fn random(rng: &mut ChaCha8Rng, n_terms: usize, max_degree: u32) -> Self {
        let terms = (0..n_terms)
            .map(|_| {
                let mut e = [0u32; 6];
                for _ in 0..rng.gen_range(0..=max_degree) {
                    e[rng.gen_range(0..6)] += 1;
                }
                (rng.gen_range(-1.0..1.0), e)
            })
            .collect();
        Self { terms }
    }
}

/// `H(q,p) = Σ_k f_k(q,p) M_k` with scalar polynomials `f_k` and constant
/// Hermitian `M_k`. Used to probe bracket identities.
#[derive(Debug, Clone)]
pub struct PolynomialMatrixSymbol {
    pub parts: Vec<(PhasePolynomial, DMatrix<C64>)>,
}

impl PolynomialMatrixSymbol {
    pub fn random_hermitian(rng: &mut ChaCha8Rng, n: usize, n_parts: usize) -> Self {
        let parts = (0..n_parts)
            .map(|_| {
                let a = DMatrix::from_fn(n, n, |_, _| {
                    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                });
                let m = (&a + a.adjoint()) * c(0.5);
                (PhasePolynomial::random(rng, 4, 3), m)
            })
            .collect();
        Self { parts }
    }
}

impl MatrixSymbol for PolynomialMatrixSymbol {
    fn dim(&self) -> usize {
        self.parts[0].1.nrows()
    }

    fn eval(&self, pt: &PhasePoint) -> DMatrix<C64> {
        let n = self.dim();
        self.parts
            .iter()
            .fold(DMatrix::zeros(n, n), |acc, (f, m)| acc + m * c(f.eval(pt)))
    }

    fn gradients(&self, pt: &PhasePoint) -> Option<SymbolGradients> {
        let n = self.dim();
        let along = |axis: usize| {
            self.parts
                .iter()
                .fold(DMatrix::zeros(n, n), |acc, (f, m)| acc + m * c(f.partial(pt, axis)))
        };
        Some(SymbolGradients {
            dq: std::array::from_fn(along),
            dp: std::array::from_fn(|i| along(i + 3)),
        })
    }
}

/// Closure-backed symbol without analytic gradients.
pub struct FnSymbol<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> MatrixSymbol for FnSymbol<F>
where
    F: Fn(&PhasePoint) -> DMatrix<C64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, pt: &PhasePoint) -> DMatrix<C64> {
        (self.f)(pt)
    }
}

/// Phase point from the first coordinates of a lower-dimensional grid.
pub fn embed(q: &[f64], p: &[f64]) -> PhasePoint {
    let mut pt = PhasePoint::new(Vec3::zeros(), Vec3::zeros());
    for (i, (&qi, &pi)) in q.iter().zip(p).enumerate() {
        pt.q[i] = qi;
        pt.p[i] = pi;
    }
    pt
}
