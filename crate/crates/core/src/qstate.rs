//! Two-qubit polarization states.
//!
//! Basis order is fixed to `HH, HV, VH, VV`; index `2 * a + b` addresses
//! Signal-1 polarization `a` and Signal-2 polarization `b` (0 = H, 1 = V).

use core::fmt;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;

/// Basis labels in matrix order.
pub const BASIS_LABELS: [&str; 4] = ["HH", "HV", "VH", "VV"];
/// The basis string written next to every serialized density matrix.
pub const BASIS_STRING: &str = "HH,HV,VH,VV";

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
/// Eigenvalues in `[-PSD_TOL, 0)` are clamped; anything more negative is rejected.
pub const PSD_TOL: f64 = 1e-9;
pub const NORM_TOL: f64 = 1e-12;
/// Eigenvalues below this are treated as exact zeros when taking square roots.
const SQRT_FLOOR: f64 = 1e-14;

const fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Single-photon polarization state `amp_h |H> + amp_v |V>`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PolarizationKet {
    pub amp_h: C64,
    pub amp_v: C64,
}

impl PolarizationKet {
    /// Builds a ket, rejecting amplitudes whose norm is not 1 within `1e-12`.
    pub fn new(amp_h: C64, amp_v: C64) -> Result<Self> {
        let k = PolarizationKet { amp_h, amp_v };
        k.check_normalized()?;
        Ok(k)
    }

    /// Builds a ket and rescales it to unit norm.
    pub fn normalized(amp_h: C64, amp_v: C64) -> Result<Self> {
        let n = (amp_h.norm_sqr() + amp_v.norm_sqr()).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::validation(
                "cannot normalize a zero or non-finite ket",
            ));
        }
        Ok(PolarizationKet {
            amp_h: amp_h / n,
            amp_v: amp_v / n,
        })
    }

    pub fn h() -> Self {
        PolarizationKet {
            amp_h: c(1.0, 0.0),
            amp_v: c(0.0, 0.0),
        }
    }

    pub fn v() -> Self {
        PolarizationKet {
            amp_h: c(0.0, 0.0),
            amp_v: c(1.0, 0.0),
        }
    }

    /// `(|H> + |V>)/sqrt(2)`
    pub fn d() -> Self {
        let s = core::f64::consts::FRAC_1_SQRT_2;
        PolarizationKet {
            amp_h: c(s, 0.0),
            amp_v: c(s, 0.0),
        }
    }

    /// `(|H> - |V>)/sqrt(2)`
    pub fn a() -> Self {
        let s = core::f64::consts::FRAC_1_SQRT_2;
        PolarizationKet {
            amp_h: c(s, 0.0),
            amp_v: c(-s, 0.0),
        }
    }

    /// `(|H> - i|V>)/sqrt(2)`
    pub fn r() -> Self {
        let s = core::f64::consts::FRAC_1_SQRT_2;
        PolarizationKet {
            amp_h: c(s, 0.0),
            amp_v: c(0.0, -s),
        }
    }

    /// `(|H> + i|V>)/sqrt(2)`
    pub fn l() -> Self {
        let s = core::f64::consts::FRAC_1_SQRT_2;
        PolarizationKet {
            amp_h: c(s, 0.0),
            amp_v: c(0.0, s),
        }
    }

    /// Linear polarization at analyzer angle `theta`: `cos θ |H> + sin θ |V>`.
    pub fn linear(theta: f64) -> Self {
        PolarizationKet {
            amp_h: c(theta.cos(), 0.0),
            amp_v: c(theta.sin(), 0.0),
        }
    }

    /// The orthogonal complement `-conj(v)|H> + conj(h)|V>`.
    pub fn orthogonal(&self) -> Self {
        PolarizationKet {
            amp_h: -self.amp_v.conj(),
            amp_v: self.amp_h.conj(),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp_h.norm_sqr() + self.amp_v.norm_sqr()
    }

    pub fn check_normalized(&self) -> Result<()> {
        let n = self.norm_sqr();
        if (n - 1.0).abs() > NORM_TOL || !n.is_finite() {
            return Err(Error::validation(alloc::format!(
                "polarization ket not normalized (|h|^2+|v|^2 = {n})"
            )));
        }
        Ok(())
    }

    pub fn vector(&self) -> Vector2<C64> {
        Vector2::new(self.amp_h, self.amp_v)
    }

    /// `<self|other>`
    pub fn inner(&self, other: &PolarizationKet) -> C64 {
        self.amp_h.conj() * other.amp_h + self.amp_v.conj() * other.amp_v
    }

    pub fn projector(&self) -> Mat2 {
        let v = self.vector();
        v * v.adjoint()
    }
}

/// Two-qubit density matrix satisfying Hermiticity, unit trace and PSD.
#[derive(Clone, PartialEq)]
pub struct TwoQubitState {
    rho: Mat4,
}

impl fmt::Debug for TwoQubitState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TwoQubitState")
            .field("rho", &self.rho.as_slice())
            .finish()
    }
}

impl TwoQubitState {
    /// Validates `rho` and wraps it.
    ///
    /// Eigenvalues in `[-1e-9, 0)` are clamped to zero and the result is
    /// renormalized, so slightly unphysical linear-inversion output can still
    /// seed the maximum-likelihood search.
    pub fn from_matrix(rho: Mat4) -> Result<Self> {
        if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::validation("density matrix has non-finite entries"));
        }
        let herm = hermiticity_defect(&rho);
        if herm > HERMITIAN_TOL {
            return Err(Error::validation(alloc::format!(
                "density matrix not Hermitian (max |rho - rho^dag| = {herm:e})"
            )));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::validation(alloc::format!(
                "density matrix trace {} + {}i differs from 1",
                tr.re,
                tr.im
            )));
        }
        let rho = hermitian_part(&rho);
        let eig = rho.symmetric_eigen();
        let min = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min < -PSD_TOL {
            return Err(Error::validation(alloc::format!(
                "density matrix not positive semidefinite (min eigenvalue {min:e})"
            )));
        }
        if min < 0.0 {
            let clamped = eig.eigenvalues.map(|l| l.max(0.0));
            let total: f64 = clamped.iter().sum();
            let d = Mat4::from_diagonal(&clamped.map(|l| c(l / total, 0.0)));
            let rebuilt = eig.eigenvectors * d * eig.eigenvectors.adjoint();
            return Ok(TwoQubitState {
                rho: hermitian_part(&rebuilt),
            });
        }
        Ok(TwoQubitState { rho })
    }

    /// For matrices produced by trace- and positivity-preserving maps inside
    /// the crate; only Hermitian symmetrization and renormalization are applied.
    pub(crate) fn from_trusted(rho: Mat4) -> Self {
        let rho = hermitian_part(&rho);
        let tr = rho.trace().re;
        TwoQubitState {
            rho: rho.unscale(tr),
        }
    }

    /// Hermitian symmetrization only; the caller guarantees unit trace.
    pub(crate) fn from_exact(rho: Mat4) -> Self {
        TwoQubitState {
            rho: hermitian_part(&rho),
        }
    }

    /// Projects an arbitrary Hermitian matrix onto the physical set by
    /// clamping negative eigenvalues and renormalizing.
    pub fn project_physical(m: &Mat4) -> Result<Self> {
        let m = hermitian_part(m);
        let eig = m.symmetric_eigen();
        let clamped = eig.eigenvalues.map(|l| l.max(0.0));
        let total: f64 = clamped.iter().sum();
        if !(total > 0.0) {
            return Err(Error::estimation("matrix has no positive eigenvalues"));
        }
        let d = Mat4::from_diagonal(&clamped.map(|l| c(l / total, 0.0)));
        Ok(TwoQubitState::from_trusted(
            eig.eigenvectors * d * eig.eigenvectors.adjoint(),
        ))
    }

    pub fn from_pure(psi: &Vector4<C64>) -> Result<Self> {
        let n = psi.norm_squared();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::validation(alloc::format!(
                "state vector not normalized (norm^2 = {n})"
            )));
        }
        Ok(TwoQubitState::from_trusted(psi * psi.adjoint()))
    }

    pub fn maximally_mixed() -> Self {
        TwoQubitState {
            rho: Mat4::identity().scale(0.25),
        }
    }

    /// `(|HV> + |VH>)/sqrt(2)`, the balanced source and ideal retrieved state.
    pub fn psi_plus() -> Self {
        Self::from_pure(&psi_plus_vector()).expect("normalized")
    }

    pub fn basis_state(index: usize) -> Self {
        let mut v = Vector4::zeros();
        v[index] = c(1.0, 0.0);
        Self::from_pure(&v).expect("normalized")
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.rho
    }

    pub fn into_matrix(self) -> Mat4 {
        self.rho
    }

    pub fn element(&self, row: usize, col: usize) -> C64 {
        self.rho[(row, col)]
    }

    pub fn purity(&self) -> f64 {
        (self.rho * self.rho).trace().re
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        let e = self.rho.symmetric_eigen().eigenvalues;
        let mut out = [e[0], e[1], e[2], e[3]];
        out.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
        out
    }

    /// Reduced state of Signal 1 (Signal 2 traced out).
    pub fn signal1_marginal(&self) -> Mat2 {
        partial_trace_signal2(&self.rho)
    }

    /// Reduced state of Signal 2 (Signal 1 traced out).
    pub fn signal2_marginal(&self) -> Mat2 {
        partial_trace_signal1(&self.rho)
    }

    /// Born probability of the product projector `|k1 k2><k1 k2|`.
    pub fn product_probability(&self, k1: &PolarizationKet, k2: &PolarizationKet) -> f64 {
        let psi = product_vector(k1, k2);
        (psi.adjoint() * self.rho * psi)[(0, 0)].re
    }

    /// `Tr(rho P)` for a validated projector.
    pub fn probability(&self, p: &Projector) -> f64 {
        (self.rho * p.matrix).trace().re
    }
}

/// `max |m - m^dag|` elementwise.
pub fn hermiticity_defect(m: &Mat4) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn hermitian_part(m: &Mat4) -> Mat4 {
    (m + m.adjoint()).scale(0.5)
}

pub fn psi_plus_vector() -> Vector4<C64> {
    let s = core::f64::consts::FRAC_1_SQRT_2;
    Vector4::new(c(0.0, 0.0), c(s, 0.0), c(s, 0.0), c(0.0, 0.0))
}

/// `|a> ⊗ |b>` as a 4-vector in `HH, HV, VH, VV` order.
pub fn product_vector(a: &PolarizationKet, b: &PolarizationKet) -> Vector4<C64> {
    Vector4::new(
        a.amp_h * b.amp_h,
        a.amp_h * b.amp_v,
        a.amp_v * b.amp_h,
        a.amp_v * b.amp_v,
    )
}

/// Kronecker product of two 2x2 operators (first factor acts on Signal 1).
pub fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    Mat4::from_fn(|i, j| a[(i / 2, j / 2)] * b[(i % 2, j % 2)])
}

/// Traces out Signal 2.
pub fn partial_trace_signal2(m: &Mat4) -> Mat2 {
    Mat2::from_fn(|a, ap| m[(2 * a, 2 * ap)] + m[(2 * a + 1, 2 * ap + 1)])
}

/// Traces out Signal 1.
pub fn partial_trace_signal1(m: &Mat4) -> Mat2 {
    Mat2::from_fn(|b, bp| m[(b, bp)] + m[(2 + b, 2 + bp)])
}

pub fn pauli_x() -> Mat2 {
    Mat2::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0))
}

pub fn pauli_y() -> Mat2 {
    Mat2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0))
}

/// `σz = |H><H| - |V><V|`
pub fn pauli_z() -> Mat2 {
    Mat2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0))
}

/// Rank-1 (or higher) orthogonal projector on the two-qubit space.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    pub matrix: Mat4,
    pub rank: usize,
}

impl Projector {
    pub fn product(a: &PolarizationKet, b: &PolarizationKet) -> Result<Self> {
        a.check_normalized()?;
        b.check_normalized()?;
        let psi = product_vector(a, b);
        Ok(Projector {
            matrix: psi * psi.adjoint(),
            rank: 1,
        })
    }

    /// Validates idempotence and Hermiticity; rank is read off the trace.
    pub fn from_matrix(matrix: Mat4) -> Result<Self> {
        if hermiticity_defect(&matrix) > HERMITIAN_TOL {
            return Err(Error::validation("projector not Hermitian"));
        }
        let d = matrix * matrix - matrix;
        let defect = d.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if defect >= 1e-10 {
            return Err(Error::validation(alloc::format!(
                "projector not idempotent (max |P^2 - P| = {defect:e})"
            )));
        }
        let rank = matrix.trace().re.round() as usize;
        Ok(Projector { matrix, rank })
    }
}

/// `|a><a| ⊗ |b><b|` as a density matrix.
pub fn tensor_product(a: &PolarizationKet, b: &PolarizationKet) -> Result<TwoQubitState> {
    a.check_normalized()?;
    b.check_normalized()?;
    Ok(TwoQubitState::from_trusted({
        let psi = product_vector(a, b);
        psi * psi.adjoint()
    }))
}

/// Square root of a Hermitian PSD matrix via eigendecomposition.
///
/// Eigenvalues below `1e-14` (including small negative rounding residue) are
/// set to zero.
pub fn sqrt_psd(m: &Mat4) -> Mat4 {
    let eig = hermitian_part(m).symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| {
        if l > SQRT_FLOOR {
            c(l.sqrt(), 0.0)
        } else {
            c(0.0, 0.0)
        }
    });
    eig.eigenvectors * Mat4::from_diagonal(&roots) * eig.eigenvectors.adjoint()
}

/// Uhlmann fidelity `(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2`.
pub fn fidelity(rho: &TwoQubitState, sigma: &TwoQubitState) -> f64 {
    let s = sqrt_psd(&rho.rho);
    let inner = s * sigma.rho * s;
    let eig = hermitian_part(&inner).symmetric_eigen();
    let tr: f64 = eig
        .eigenvalues
        .iter()
        .map(|&l| if l > SQRT_FLOOR { l.sqrt() } else { 0.0 })
        .sum();
    (tr * tr).clamp(0.0, 1.0)
}

/// Fidelity on raw matrices, validating both first.
pub fn fidelity_matrices(rho: &Mat4, sigma: &Mat4) -> Result<f64> {
    Ok(fidelity(
        &TwoQubitState::from_matrix(*rho)?,
        &TwoQubitState::from_matrix(*sigma)?,
    ))
}

/// Trace distance `½ Tr|rho - sigma|`.
pub fn trace_distance(rho: &TwoQubitState, sigma: &TwoQubitState) -> f64 {
    let d = hermitian_part(&(rho.rho - sigma.rho));
    0.5 * d
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|l| l.abs())
        .sum::<f64>()
}

/// `Tr(rho · obs)` for a Hermitian observable.
pub fn expectation(rho: &TwoQubitState, obs: &Mat4) -> Result<f64> {
    let herm = hermiticity_defect(obs);
    if herm > HERMITIAN_TOL {
        return Err(Error::validation(alloc::format!(
            "observable not Hermitian (max |O - O^dag| = {herm:e})"
        )));
    }
    let v = (rho.rho * obs).trace();
    if v.im.abs() > HERMITIAN_TOL * (1.0 + v.re.abs()) {
        return Err(Error::validation(alloc::format!(
            "expectation value has imaginary residue {:e}",
            v.im
        )));
    }
    Ok(v.re)
}

#[cfg(feature = "serde")]
mod serde_impl {
    use super::*;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct DensityMatrixRepr {
        basis: alloc::string::String,
        rho: [[[f64; 2]; 4]; 4],
    }

    impl Serialize for TwoQubitState {
        fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
            matrix_repr(&self.rho).serialize(s)
        }
    }

    impl<'de> Deserialize<'de> for TwoQubitState {
        fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
            let repr = DensityMatrixRepr::deserialize(d)?;
            let m = repr_matrix(&repr).map_err(D::Error::custom)?;
            TwoQubitState::from_matrix(m).map_err(D::Error::custom)
        }
    }

    fn matrix_repr(m: &Mat4) -> DensityMatrixRepr {
        let mut rho = [[[0.0; 2]; 4]; 4];
        for (i, row) in rho.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = [m[(i, j)].re, m[(i, j)].im];
            }
        }
        DensityMatrixRepr {
            basis: BASIS_STRING.into(),
            rho,
        }
    }

    fn repr_matrix(r: &DensityMatrixRepr) -> Result<Mat4> {
        if r.basis != BASIS_STRING {
            return Err(Error::validation(alloc::format!(
                "basis must be \"{BASIS_STRING}\", got \"{}\"",
                r.basis
            )));
        }
        Ok(Mat4::from_fn(|i, j| c(r.rho[i][j][0], r.rho[i][j][1])))
    }

    /// Serde adapter for a raw (possibly non-physical) Hermitian matrix,
    /// written in the same `{basis, rho}` layout as a density matrix.
    pub mod raw_matrix {
        use super::*;

        pub fn serialize<S: Serializer>(m: &Mat4, s: S) -> core::result::Result<S::Ok, S::Error> {
            matrix_repr(m).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> core::result::Result<Mat4, D::Error> {
            let repr = DensityMatrixRepr::deserialize(d)?;
            repr_matrix(&repr).map_err(D::Error::custom)
        }
    }
}

#[cfg(feature = "serde")]
pub use serde_impl::raw_matrix;
