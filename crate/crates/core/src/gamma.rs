//! Dense 4×4 complex matrices and the Dirac gamma matrices.
//!
//! Everything here is plain value arithmetic on top of `nalgebra`. The gamma
//! matrices use the standard Dirac representation with metric `(+,-,-,-)`
//! and `γ₅ = i γ⁰γ¹γ²γ³`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, Matrix2, Matrix4, SymmetricEigen, Vector3, Vector4};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type ComplexMatrix4 = Matrix4<C64>;
pub type Spinor = Vector4<C64>;

/// Tolerance for exact algebraic identities in double precision.
pub const TOL_ALG: f64 = 1e-12;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Largest absolute entry of a matrix.
pub fn max_abs<R: nalgebra::Dim, Cc: nalgebra::Dim, S>(m: &nalgebra::Matrix<C64, R, Cc, S>) -> f64
where
    S: nalgebra::RawStorage<C64, R, Cc>,
{
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn commutator(a: &ComplexMatrix4, b: &ComplexMatrix4) -> ComplexMatrix4 {
    a * b - b * a
}

pub fn anticommutator(a: &ComplexMatrix4, b: &ComplexMatrix4) -> ComplexMatrix4 {
    a * b + b * a
}

pub fn is_hermitian(m: &ComplexMatrix4, tol: f64) -> bool {
    max_abs(&(m - m.adjoint())) < tol
}

/// `exp(M)` by scaling and squaring with a Padé approximant.
pub fn expm(m: &ComplexMatrix4) -> ComplexMatrix4 {
    m.exp()
}

/// `exp(-i t H)` for Hermitian `H`, through the eigendecomposition.
///
/// The result is unitary to rounding regardless of `‖tH‖`.
pub fn exp_i_hermitian(h: &ComplexMatrix4, t: f64) -> ComplexMatrix4 {
    let herm = (h + h.adjoint()) * c(0.5);
    let eig = SymmetricEigen::new(herm);
    let phases = ComplexMatrix4::from_diagonal(&eig.eigenvalues.map(|lam| C64::from_polar(1.0, -lam * t)));
    eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

pub fn to_dynamic(m: &ComplexMatrix4) -> DMatrix<C64> {
    DMatrix::from_iterator(4, 4, m.iter().copied())
}

/// Pauli matrices σ₁, σ₂, σ₃.
pub fn pauli() -> [Matrix2<C64>; 3] {
    let z = c(0.0);
    let one = c(1.0);
    [
        Matrix2::new(z, one, one, z),
        Matrix2::new(z, -I, I, z),
        Matrix2::new(one, z, z, -one),
    ]
}

fn blocks(a: Matrix2<C64>, b: Matrix2<C64>, cc: Matrix2<C64>, d: Matrix2<C64>) -> ComplexMatrix4 {
    let mut m = ComplexMatrix4::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&a);
    m.fixed_view_mut::<2, 2>(0, 2).copy_from(&b);
    m.fixed_view_mut::<2, 2>(2, 0).copy_from(&cc);
    m.fixed_view_mut::<2, 2>(2, 2).copy_from(&d);
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaSet {
    pub gamma0: ComplexMatrix4,
    pub gamma: [ComplexMatrix4; 3],
    pub gamma5: ComplexMatrix4,
    /// `α_i = γ₀γⁱ`.
    pub alpha: [ComplexMatrix4; 3],
    /// `γ₅γ₀γⁱ`, the combination that appears in the spin Hamiltonians.
    pub g5g0g: [ComplexMatrix4; 3],
    pub convention: &'static str,
}

impl GammaSet {
    /// `γ · v` for a real 3-vector.
    pub fn slash(&self, v: &Vector3<f64>) -> ComplexMatrix4 {
        self.gamma[0] * c(v[0]) + self.gamma[1] * c(v[1]) + self.gamma[2] * c(v[2])
    }

    /// `α · v = γ₀ γ · v`.
    pub fn alpha_dot(&self, v: &Vector3<f64>) -> ComplexMatrix4 {
        self.alpha[0] * c(v[0]) + self.alpha[1] * c(v[1]) + self.alpha[2] * c(v[2])
    }

    /// `γ₅γ₀ γ · v`.
    pub fn g5g0_dot(&self, v: &Vector3<f64>) -> ComplexMatrix4 {
        self.g5g0g[0] * c(v[0]) + self.g5g0g[1] * c(v[1]) + self.g5g0g[2] * c(v[2])
    }

    /// Largest violation of the Clifford relations and the hermiticity
    /// conventions listed for the representation.
    pub fn max_relation_residual(&self) -> f64 {
        let id = ComplexMatrix4::identity();
        let all = [self.gamma0, self.gamma[0], self.gamma[1], self.gamma[2]];
        let metric = [1.0, -1.0, -1.0, -1.0];
        let mut worst = 0.0_f64;
        for mu in 0..4 {
            for nu in 0..4 {
                let expect = if mu == nu {
                    id * c(2.0 * metric[mu])
                } else {
                    ComplexMatrix4::zeros()
                };
                worst = worst.max(max_abs(&(anticommutator(&all[mu], &all[nu]) - expect)));
            }
            worst = worst.max(max_abs(&anticommutator(&self.gamma5, &all[mu])));
        }
        worst = worst.max(max_abs(&(self.gamma5 * self.gamma5 - id)));
        worst = worst.max(max_abs(&(self.gamma0 - self.gamma0.adjoint())));
        worst = worst.max(max_abs(&(self.gamma5 - self.gamma5.adjoint())));
        for g in &self.gamma {
            worst = worst.max(max_abs(&(g + g.adjoint())));
        }
        worst
    }
}

/// Builds the Dirac representation.
pub fn make_gamma_set() -> GammaSet {
    let id2 = Matrix2::<C64>::identity();
    let z2 = Matrix2::<C64>::zeros();
    let s = pauli();
    let gamma0 = blocks(id2, z2, z2, -id2);
    let gamma = [0, 1, 2].map(|i| blocks(z2, s[i], -s[i], z2));
    let gamma5 = gamma0 * gamma[0] * gamma[1] * gamma[2] * I;
    let alpha = gamma.map(|g| gamma0 * g);
    let g5g0g = gamma.map(|g| gamma5 * gamma0 * g);
    GammaSet {
        gamma0,
        gamma,
        gamma5,
        alpha,
        g5g0g,
        convention: "dirac",
    }
}

/// Shared instance of the Dirac representation.
pub fn gammas() -> &'static GammaSet {
    static SET: OnceLock<GammaSet> = OnceLock::new();
    SET.get_or_init(make_gamma_set)
}
