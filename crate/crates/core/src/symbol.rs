//! The Dirac symbol `H_D(q, p)` and everything derived from it in closed
//! form: band energies, eigenprojections, the polarization matrix and the
//! band spin Hamiltonians.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calculus::{MatrixSymbol, SymbolGradients};
use crate::fields::{FieldConfig, FieldSample, ParticleParams, Vec3};
use crate::gamma::{c, commutator, gammas, to_dynamic, ComplexMatrix4, Spinor, C64, I};

#[derive(Debug, Error, PartialEq)]
pub enum SymbolError {
    #[error("orientation vector must be nonzero and finite")]
    ZeroOrientation,
}

/// Canonical coordinates `(q, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub q: Vec3,
    pub p: Vec3,
}

impl PhasePoint {
    pub fn new(q: Vec3, p: Vec3) -> Self {
        Self { q, p }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.p.iter()).all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Electron,
    Positron,
}

impl Band {
    /// `+1` for the electron band, `−1` for the positron band.
    pub fn sign(self) -> f64 {
        match self {
            Band::Electron => 1.0,
            Band::Positron => -1.0,
        }
    }

    pub fn other(self) -> Band {
        match self {
            Band::Electron => Band::Positron,
            Band::Positron => Band::Electron,
        }
    }
}

/// Kinetic momentum `π = p − (e/c)A`, `p0 = √(m²c² + π²)`, velocity and
/// Lorentz factor at one phase point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicState {
    pub pi: Vec3,
    pub p0: f64,
    pub v: Vec3,
    pub gamma: f64,
}

impl KinematicState {
    pub fn from_kinetic(pi: Vec3, params: &ParticleParams) -> Self {
        let mc = params.m * params.c;
        let p0 = (mc * mc + pi.norm_squared()).sqrt();
        Self {
            pi,
            p0,
            v: pi * (params.c / p0),
            gamma: p0 / mc,
        }
    }
}

/// `α·π + mcβ`, whose square is `p0²`.
pub fn kinetic_matrix(pi: &Vec3, params: &ParticleParams) -> ComplexMatrix4 {
    let g = gammas();
    g.alpha_dot(pi) + g.gamma0 * c(params.m * params.c)
}

/// Band projection as a function of the kinetic momentum alone.
pub fn projection_of_kinetic(pi: &Vec3, params: &ParticleParams, band: Band) -> ComplexMatrix4 {
    let p0 = (params.m * params.m * params.c * params.c + pi.norm_squared()).sqrt();
    (ComplexMatrix4::identity() + kinetic_matrix(pi, params) * c(band.sign() / p0)) * c(0.5)
}

/// `a·S` for an arbitrary (not necessarily unit) vector `a`; linear in `a`.
pub fn spin_operator_of_kinetic(a: &Vec3, pi: &Vec3, params: &ParticleParams) -> ComplexMatrix4 {
    let g = gammas();
    let mc = params.m * params.c;
    let p0 = (mc * mc + pi.norm_squared()).sqrt();
    let a_pi = a.dot(pi);
    let gv = a - pi * (a_pi / (p0 * (p0 + mc)));
    (g.slash(&gv) + ComplexMatrix4::identity() * c(a_pi / p0)) * g.gamma5
}

/// `σ·π` on a two-spinor.
fn sigma_dot(pi: &Vec3, a: C64, b: C64) -> (C64, C64) {
    let (px, py, pz) = (pi[0], pi[1], pi[2]);
    (a * pz + b * C64::new(px, -py), a * C64::new(px, py) - b * pz)
}

/// `(α·π + mcβ) v` without forming the matrix.
pub fn kinetic_action(pi: &Vec3, params: &ParticleParams, v: &Spinor) -> Spinor {
    let mc = params.m * params.c;
    let (u0, u1) = sigma_dot(pi, v[2], v[3]);
    let (l0, l1) = sigma_dot(pi, v[0], v[1]);
    Spinor::new(u0 + v[0] * mc, u1 + v[1] * mc, l0 - v[2] * mc, l1 - v[3] * mc)
}

/// `P_band(π) v`.
pub fn projection_action(pi: &Vec3, params: &ParticleParams, band: Band, v: &Spinor) -> Spinor {
    let p0 = (params.m * params.m * params.c * params.c + pi.norm_squared()).sqrt();
    (v + kinetic_action(pi, params, v) * c(band.sign() / p0)) * c(0.5)
}

/// `(ê_k·S) u` for k = x, y, z, matching [`spin_operator_of_kinetic`].
pub fn spin_actions(pi: &Vec3, params: &ParticleParams, u: &Spinor) -> [Spinor; 3] {
    let mc = params.m * params.c;
    let p0 = (mc * mc + pi.norm_squared()).sqrt();
    // y = γ₅u, t_i = γ^i y = (σ_i u_up, −σ_i u_low).
    let y = Spinor::new(u[2], u[3], u[0], u[1]);
    let t = [
        Spinor::new(u[1], u[0], -u[3], -u[2]),
        Spinor::new(-I * u[1], I * u[0], I * u[3], -I * u[2]),
        Spinor::new(u[0], -u[1], -u[2], u[3]),
    ];
    let (a0, a1) = sigma_dot(pi, u[0], u[1]);
    let (b0, b1) = sigma_dot(pi, u[2], u[3]);
    let pt = Spinor::new(a0, a1, -b0, -b1);
    let k = 1.0 / (p0 * (p0 + mc));
    std::array::from_fn(|i| t[i] - pt * c(pi[i] * k) + y * c(pi[i] / p0))
}

/// First derivatives of a 4×4 symbol with respect to `q` and `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gradients4 {
    pub dq: [ComplexMatrix4; 3],
    pub dp: [ComplexMatrix4; 3],
}

impl Gradients4 {
    pub fn to_dynamic(&self) -> SymbolGradients {
        SymbolGradients {
            dq: self.dq.map(|m| to_dynamic(&m)),
            dp: self.dp.map(|m| to_dynamic(&m)),
        }
    }
}

/// Gradient of a scalar phase-space function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarGradient {
    pub dq: Vec3,
    pub dp: Vec3,
}

/// `{A, B}` for 4×4 symbols given their gradients.
pub fn bracket4(a: &Gradients4, b: &Gradients4) -> ComplexMatrix4 {
    let mut out = ComplexMatrix4::zeros();
    for i in 0..3 {
        out += a.dp[i] * b.dq[i] - a.dq[i] * b.dp[i];
    }
    out
}

/// `{f, B}` with scalar `f`.
pub fn bracket_scalar4(f: &ScalarGradient, b: &Gradients4) -> ComplexMatrix4 {
    let mut out = ComplexMatrix4::zeros();
    for i in 0..3 {
        out += b.dq[i] * c(f.dp[i]) - b.dp[i] * c(f.dq[i]);
    }
    out
}

/// The Dirac symbol for a given field configuration and particle.
#[derive(Debug, Clone, PartialEq)]
pub struct DiracSymbol {
    pub fields: FieldConfig,
    pub params: ParticleParams,
}

impl DiracSymbol {
    pub fn new(fields: FieldConfig, params: ParticleParams) -> Self {
        Self { fields, params }
    }

    pub fn frame(&self, pt: &PhasePoint) -> DiracFrame {
        DiracFrame::new(pt, self.fields.eval(&pt.q), self.params)
    }

    pub fn kinematics(&self, pt: &PhasePoint) -> KinematicState {
        self.frame(pt).kin
    }

    pub fn hamiltonian(&self, pt: &PhasePoint) -> ComplexMatrix4 {
        self.frame(pt).hamiltonian()
    }

    /// `(h₊, h₋)`.
    pub fn band_energies(&self, pt: &PhasePoint) -> (f64, f64) {
        let f = self.frame(pt);
        (f.h_plus, f.h_minus)
    }

    /// `(P₊, P₋)`.
    pub fn band_projections(&self, pt: &PhasePoint) -> (ComplexMatrix4, ComplexMatrix4) {
        let f = self.frame(pt);
        (f.p_plus, f.p_minus)
    }

    pub fn spin_matrix(&self, a: &Vec3, pt: &PhasePoint) -> Result<ComplexMatrix4, SymbolError> {
        self.frame(pt).spin_matrix(a)
    }

    /// `(H_be, H_nn)` for the electron band.
    pub fn spin_hamiltonian_closed(&self, pt: &PhasePoint) -> (ComplexMatrix4, ComplexMatrix4) {
        let f = self.frame(pt);
        (f.berry_closed(), f.no_name_closed())
    }

    pub fn curly_pp(&self, pt: &PhasePoint) -> ComplexMatrix4 {
        self.frame(pt).curly_pp_closed()
    }
}

/// All closed-form quantities at one phase point.
#[derive(Debug, Clone, Copy)]
pub struct DiracFrame {
    pub pt: PhasePoint,
    pub params: ParticleParams,
    pub sample: FieldSample,
    pub kin: KinematicState,
    pub h_plus: f64,
    pub h_minus: f64,
    pub p_plus: ComplexMatrix4,
    pub p_minus: ComplexMatrix4,
    kinetic: ComplexMatrix4,
}

impl DiracFrame {
    pub fn new(pt: &PhasePoint, sample: FieldSample, params: ParticleParams) -> Self {
        let pi = pt.p - sample.a * (params.e / params.c);
        let kin = KinematicState::from_kinetic(pi, &params);
        let kinetic = kinetic_matrix(&pi, &params);
        let half = ComplexMatrix4::identity() * c(0.5);
        let k = kinetic * c(0.5 / kin.p0);
        let cp0 = params.c * kin.p0;
        let ephi = params.e * sample.phi;
        Self {
            pt: *pt,
            params,
            sample,
            kin,
            h_plus: cp0 + ephi,
            h_minus: -cp0 + ephi,
            p_plus: half + k,
            p_minus: half - k,
            kinetic,
        }
    }

    pub fn hamiltonian(&self) -> ComplexMatrix4 {
        self.kinetic * c(self.params.c) + ComplexMatrix4::identity() * c(self.params.e * self.sample.phi)
    }

    pub fn band_energy(&self, band: Band) -> f64 {
        match band {
            Band::Electron => self.h_plus,
            Band::Positron => self.h_minus,
        }
    }

    pub fn projection(&self, band: Band) -> &ComplexMatrix4 {
        match band {
            Band::Electron => &self.p_plus,
            Band::Positron => &self.p_minus,
        }
    }

    /// Polarization matrix along the unit vector `a / |a|`.
    pub fn spin_matrix(&self, a: &Vec3) -> Result<ComplexMatrix4, SymbolError> {
        let n = a.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(SymbolError::ZeroOrientation);
        }
        Ok(self.spin_operator(&(a / n)))
    }

    /// `a·S`, linear in `a`.
    pub fn spin_operator(&self, a: &Vec3) -> ComplexMatrix4 {
        spin_operator_of_kinetic(a, &self.kin.pi, &self.params)
    }

    /// `∂π_k/∂q_i = −(e/c) ∂A_k/∂q_i`.
    fn dpi_dq(&self, k: usize, i: usize) -> f64 {
        -(self.params.e / self.params.c) * self.sample.jac_a[(k, i)]
    }

    /// `∂P₊/∂π_i`.
    fn dprojection_dpi(&self, i: usize) -> ComplexMatrix4 {
        let p0 = self.kin.p0;
        (gammas().alpha[i] * c(1.0 / p0) - self.kinetic * c(self.kin.pi[i] / (p0 * p0 * p0))) * c(0.5)
    }

    fn chain_to_phase_space(&self, dpi: [ComplexMatrix4; 3]) -> Gradients4 {
        let dq =
            std::array::from_fn(|i| (0..3).fold(ComplexMatrix4::zeros(), |acc, k| acc + dpi[k] * c(self.dpi_dq(k, i))));
        Gradients4 { dq, dp: dpi }
    }

    pub fn projection_gradients(&self, band: Band) -> Gradients4 {
        let s = band.sign();
        let dpi = std::array::from_fn(|i| self.dprojection_dpi(i) * c(s));
        self.chain_to_phase_space(dpi)
    }

    pub fn hamiltonian_gradients(&self) -> Gradients4 {
        let cc = self.params.c;
        let mut g = self.chain_to_phase_space(gammas().alpha.map(|a| a * c(cc)));
        for i in 0..3 {
            g.dq[i] += ComplexMatrix4::identity() * c(self.params.e * self.sample.grad_phi[i]);
        }
        g
    }

    /// Gradient of `h₊` or `h₋`; for the electron band `dp = v` and
    /// `−dq` is the canonical force.
    pub fn energy_gradient(&self, band: Band) -> ScalarGradient {
        let s = band.sign();
        let v = self.kin.v;
        let dq = Vec3::from_fn(|i, _| {
            let kinetic: f64 = (0..3).map(|k| v[k] * self.dpi_dq(k, i)).sum();
            s * kinetic + self.params.e * self.sample.grad_phi[i]
        });
        ScalarGradient { dq, dp: v * s }
    }

    /// `{P₊, P₊}` from analytic gradients (equal to `{P₋, P₋}`).
    pub fn curly_pp_bracket(&self) -> ComplexMatrix4 {
        let g = self.projection_gradients(Band::Electron);
        bracket4(&g, &g)
    }

    /// Closed form of `{P₊, P₊}`.
    ///
    /// The bracket is block diagonal in the band decomposition; the closed
    /// expression `−i (e/2cp0²) γ₅γ₀γ·B` agrees with it on the two diagonal
    /// blocks only, so it is returned projected onto them.
    pub fn curly_pp_closed(&self) -> ComplexMatrix4 {
        let p0 = self.kin.p0;
        let raw = gammas().g5g0_dot(&self.sample.b) * (-I * (self.params.e / (2.0 * self.params.c * p0 * p0)));
        self.p_plus * raw * self.p_plus + self.p_minus * raw * self.p_minus
    }

    /// Berry term `H_be` in closed form.
    pub fn berry_closed(&self) -> ComplexMatrix4 {
        let g = gammas();
        let p = &self.params;
        let p0 = self.kin.p0;
        let v = self.kin.v;
        let f = self.sample.e + v.cross(&self.sample.b) / p.c;
        let vxf = v.cross(&f) / p.c;
        (g.g5g0_dot(&vxf) - g.slash(&f) * (I * (p.m * p.c / p0))) * c(p.e / (2.0 * p0))
    }

    /// No-name term `H_nn = −(e/2p0) P₊ γ₅γ₀γ·B P₊`.
    pub fn no_name_closed(&self) -> ComplexMatrix4 {
        let raw = gammas().g5g0_dot(&self.sample.b) * c(-self.params.e / (2.0 * self.kin.p0));
        self.p_plus * raw * self.p_plus
    }

    /// Electron spin Hamiltonian `H_be + H_nn` from the closed forms.
    pub fn electron_spin_hamiltonian(&self) -> ComplexMatrix4 {
        self.berry_closed() + self.no_name_closed()
    }

    /// Berry and no-name parts of the band spin Hamiltonian built from
    /// analytic brackets:
    /// `−i[P_j, {h_j, P_j}]` and `(i/2)(h_other − h_j) P_j{P_j,P_j}P_j`.
    pub fn spin_hamiltonian_bracket_parts(&self, band: Band) -> (ComplexMatrix4, ComplexMatrix4) {
        let pj = self.projection(band);
        let gp = self.projection_gradients(band);
        let hb = bracket_scalar4(&self.energy_gradient(band), &gp);
        let berry = commutator(pj, &hb) * (-I);
        let curv = bracket4(&gp, &gp);
        let gap = self.band_energy(band.other()) - self.band_energy(band);
        let no_name = pj * curv * pj * (I * (0.5 * gap));
        (berry, no_name)
    }

    /// Spin Hamiltonian for either band; for the electron band this equals
    /// [`Self::electron_spin_hamiltonian`].
    pub fn spin_hamiltonian(&self, band: Band) -> ComplexMatrix4 {
        match band {
            Band::Electron => self.electron_spin_hamiltonian(),
            Band::Positron => {
                let (b, n) = self.spin_hamiltonian_bracket_parts(band);
                b + n
            }
        }
    }
}

impl MatrixSymbol for DiracSymbol {
    fn dim(&self) -> usize {
        4
    }

    fn eval(&self, pt: &PhasePoint) -> DMatrix<C64> {
        to_dynamic(&self.hamiltonian(pt))
    }

    fn gradients(&self, pt: &PhasePoint) -> Option<SymbolGradients> {
        Some(self.frame(pt).hamiltonian_gradients().to_dynamic())
    }
}

/// `P₊` or `P₋` as a phase-space symbol.
#[derive(Debug, Clone)]
pub struct DiracProjection<'a> {
    pub symbol: &'a DiracSymbol,
    pub band: Band,
}

impl MatrixSymbol for DiracProjection<'_> {
    fn dim(&self) -> usize {
        4
    }

    fn eval(&self, pt: &PhasePoint) -> DMatrix<C64> {
        to_dynamic(self.symbol.frame(pt).projection(self.band))
    }

    fn gradients(&self, pt: &PhasePoint) -> Option<SymbolGradients> {
        Some(self.symbol.frame(pt).projection_gradients(self.band).to_dynamic())
    }
}

/// `h₊ I` or `h₋ I` as a 4×4 symbol.
#[derive(Debug, Clone)]
pub struct DiracBandEnergy<'a> {
    pub symbol: &'a DiracSymbol,
    pub band: Band,
}

impl MatrixSymbol for DiracBandEnergy<'_> {
    fn dim(&self) -> usize {
        4
    }

    fn eval(&self, pt: &PhasePoint) -> DMatrix<C64> {
        DMatrix::identity(4, 4) * c(self.symbol.frame(pt).band_energy(self.band))
    }

    fn gradients(&self, pt: &PhasePoint) -> Option<SymbolGradients> {
        let g = self.symbol.frame(pt).energy_gradient(self.band);
        let id = DMatrix::<C64>::identity(4, 4);
        Some(SymbolGradients {
            dq: std::array::from_fn(|i| &id * c(g.dq[i])),
            dp: std::array::from_fn(|i| &id * c(g.dp[i])),
        })
    }
}
