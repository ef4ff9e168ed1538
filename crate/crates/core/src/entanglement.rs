//! Gaussian-state entanglement of the two mechanical modes.
//!
//! Convention: quadratures `q = (b + b†)/√2`, `p = i(b† − b)/√2`, so the
//! vacuum has variance ½ and a covariance matrix is physical iff every
//! symplectic eigenvalue is at least ½. Logarithmic negativity is
//! `E_N = max[0, −ln 2ν̃₋]` with `ν̃₋` the smallest symplectic eigenvalue of the
//! partially transposed mechanical covariance.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::symmetrize;

/// Slack on the ½ floor used by every physicality test.
pub const PHYSICALITY_TOL: f64 = 1e-8;
/// Values of `−ln 2ν̃₋` below this are reported as exactly zero.
pub const NEGATIVITY_CLAMP: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-9;

/// Real symmetric `2n × 2n` matrix of quadrature second moments,
/// `V_ij = ½⟨{u_i, u_j}⟩`, ordered `(q₁, p₁, q₂, p₂, …)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "Vec<Vec<f64>>")]
pub struct CovarianceMatrix(DMatrix<f64>);

impl From<CovarianceMatrix> for Vec<Vec<f64>> {
    fn from(v: CovarianceMatrix) -> Self {
        v.0.row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

impl CovarianceMatrix {
    /// Checks shape and symmetry (to a relative 1e-9) and stores the exactly
    /// symmetrized matrix.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n != m.ncols() || n == 0 || !n.is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "covariance must be square with even dimension, got {}x{}",
                n,
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Shape("covariance has non-finite entries".into()));
        }
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::Shape(format!(
                "covariance is not symmetric (|V - Vᵀ| = {asym:.3e})"
            )));
        }
        Ok(CovarianceMatrix(symmetrize(&m)))
    }

    pub(crate) fn from_symmetric_unchecked(m: DMatrix<f64>) -> Self {
        CovarianceMatrix(m)
    }

    pub fn vacuum(modes: usize) -> Self {
        CovarianceMatrix(DMatrix::identity(2 * modes, 2 * modes) * 0.5)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn modes(&self) -> usize {
        self.0.nrows() / 2
    }
}

/// `⊕ⁿ [[0, 1], [−1, 0]]`
pub fn symplectic_form(modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * modes, 2 * modes);
    for j in 0..modes {
        omega[(2 * j, 2 * j + 1)] = 1.0;
        omega[(2 * j + 1, 2 * j)] = -1.0;
    }
    omega
}

/// `P V P` with `P = diag(1, 1, 1, −1)`: flips the momentum of the second mode.
pub fn partial_transpose(v: &CovarianceMatrix) -> Result<CovarianceMatrix> {
    if v.dim() != 4 {
        return Err(Error::Shape(format!(
            "partial transpose needs 4x4, got {}",
            v.dim()
        )));
    }
    let mut m = v.0.clone();
    for k in 0..4 {
        if k != 3 {
            m[(3, k)] = -m[(3, k)];
            m[(k, 3)] = -m[(k, 3)];
        }
    }
    Ok(CovarianceMatrix(m))
}

/// Symplectic eigenvalues in ascending order, read off the imaginary parts
/// of the spectrum `{±iν_k}` of `ΩV`.
pub fn symplectic_spectrum(v: &CovarianceMatrix) -> Vec<f64> {
    let omega = symplectic_form(v.modes());
    let mut im: Vec<f64> = (omega * &v.0)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.im.abs())
        .collect();
    im.sort_by(f64::total_cmp);
    im.chunks(2).map(|pair| 0.5 * (pair[0] + pair[1])).collect()
}

pub fn min_symplectic_eigenvalue(v: &CovarianceMatrix) -> f64 {
    symplectic_spectrum(v)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Uncertainty-principle gate: `V > 0` and every symplectic eigenvalue
/// is at least `½ − 1e-8`.
pub fn physicality_check(v: &CovarianceMatrix) -> bool {
    let lowest = v.0.clone().symmetric_eigenvalues().min();
    lowest > 0.0 && min_symplectic_eigenvalue(v) >= 0.5 - PHYSICALITY_TOL
}

/// Smallest symplectic eigenvalue `ν̃₋` of the partially transposed 4×4
/// mechanical covariance.
pub fn min_symplectic_eigenvalue_pt(v4: &CovarianceMatrix) -> Result<f64> {
    if v4.dim() != 4 {
        return Err(Error::Shape(format!(
            "expected 4x4 covariance, got {}",
            v4.dim()
        )));
    }
    if !physicality_check(v4) {
        return Err(Error::Unphysical {
            nu: min_symplectic_eigenvalue(v4),
        });
    }
    Ok(min_symplectic_eigenvalue(&partial_transpose(v4)?))
}

/// Logarithmic negativity from `ν̃₋`, with the numerical-dust clamp.
pub fn negativity_from_nu(nu_minus: f64) -> f64 {
    let e = -(2.0 * nu_minus).ln();
    if e < NEGATIVITY_CLAMP {
        0.0
    } else {
        e
    }
}

pub fn log_negativity(v4: &CovarianceMatrix) -> Result<f64> {
    min_symplectic_eigenvalue_pt(v4).map(negativity_from_nu)
}

/// Top-left 4×4 block of a 6×6 covariance, ordered `(q₁, p₁, q₂, p₂)`.
pub fn mechanical_submatrix(v6: &CovarianceMatrix) -> Result<CovarianceMatrix> {
    if v6.dim() != 6 {
        return Err(Error::Shape(format!(
            "expected 6x6 covariance, got {}",
            v6.dim()
        )));
    }
    Ok(CovarianceMatrix(v6.0.view((0, 0), (4, 4)).into_owned()))
}

/// Separable start: each resonator thermal, cavity in vacuum.
pub fn initial_covariance(nbar1: f64, nbar2: f64) -> Result<CovarianceMatrix> {
    if !(nbar1 >= 0.0) || !(nbar2 >= 0.0) {
        return Err(Error::domain("thermal occupancies must be nonnegative"));
    }
    let d = [nbar1 + 0.5, nbar1 + 0.5, nbar2 + 0.5, nbar2 + 0.5, 0.5, 0.5];
    Ok(CovarianceMatrix(DMatrix::from_diagonal(
        &nalgebra::DVector::from_row_slice(&d),
    )))
}

/// Two-mode squeezed vacuum with squeezing `r`:
/// `cosh 2r / 2` on the diagonal, `± sinh 2r / 2` between `(q₁,q₂)` and `(p₁,p₂)`.
pub fn two_mode_squeezed_vacuum(r: f64) -> CovarianceMatrix {
    let c = 0.5 * (2.0 * r).cosh();
    let s = 0.5 * (2.0 * r).sinh();
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(4, 4, &[
        c,   0.0, s,   0.0,
        0.0, c,   0.0, -s,
        s,   0.0, c,   0.0,
        0.0, -s,  0.0, c,
    ]);
    CovarianceMatrix(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Closed-form two-mode symplectic eigenvalues from the local invariants
    /// `Σ = det A + det B + 2 det C` and `det V`.
    fn two_mode_invariants(v: &DMatrix<f64>) -> (f64, f64) {
        let det2 =
            |i: usize, j: usize| v[(i, j)] * v[(i + 1, j + 1)] - v[(i, j + 1)] * v[(i + 1, j)];
        let sigma = det2(0, 0) + det2(2, 2) + 2.0 * det2(0, 2);
        let det = v.clone().determinant();
        let disc = (sigma * sigma - 4.0 * det).max(0.0).sqrt();
        (((sigma - disc) / 2.0).sqrt(), ((sigma + disc) / 2.0).sqrt())
    }

    #[test]
    fn symplectic_form_properties() {
        let o = symplectic_form(3);
        assert_eq!(&o * &o, -DMatrix::<f64>::identity(6, 6));
        assert_eq!(o.transpose(), -o);
    }

    #[test]
    fn vacuum_and_thermal() {
        let vac = CovarianceMatrix::vacuum(2);
        assert!((min_symplectic_eigenvalue_pt(&vac).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(log_negativity(&vac).unwrap(), 0.0);
        let th = CovarianceMatrix::new(DMatrix::identity(4, 4) * 3.5).unwrap();
        assert!((min_symplectic_eigenvalue_pt(&th).unwrap() - 3.5).abs() < 1e-14);
        assert_eq!(log_negativity(&th).unwrap(), 0.0);
    }

    #[test]
    fn tmsv_spectrum() {
        for r in [0.1, 0.5, 1.0, 2.0, 3.0] {
            let v = two_mode_squeezed_vacuum(r);
            let nu = min_symplectic_eigenvalue_pt(&v).unwrap();
            assert!((nu - 0.5 * (-2.0 * r).exp()).abs() < 1e-12 * (2.0 * r).exp());
            let (lo, _) = two_mode_invariants(partial_transpose(&v).unwrap().matrix());
            assert!((nu - lo).abs() < 1e-9);
        }
        let e = log_negativity(&two_mode_squeezed_vacuum(1.0)).unwrap();
        assert!((e - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unphysical_rejected() {
        let bad = CovarianceMatrix::new(DMatrix::identity(4, 4) * 0.4).unwrap();
        assert!(!physicality_check(&bad));
        assert!(matches!(
            log_negativity(&bad),
            Err(Error::Unphysical { .. })
        ));
        assert!(physicality_check(&CovarianceMatrix::vacuum(3)));
        let indefinite =
            CovarianceMatrix::new(DMatrix::from_diagonal_element(2, 2, 1.0) * -1.0).unwrap();
        assert!(!physicality_check(&indefinite));
    }

    #[test]
    fn shape_errors() {
        assert!(CovarianceMatrix::new(DMatrix::identity(3, 3)).is_err());
        let mut asym = DMatrix::<f64>::identity(4, 4);
        asym[(0, 1)] = 0.1;
        assert!(CovarianceMatrix::new(asym).is_err());
        assert!(mechanical_submatrix(&CovarianceMatrix::vacuum(2)).is_err());
        assert!(log_negativity(&CovarianceMatrix::vacuum(3)).is_err());
    }

    #[test]
    fn submatrix_and_initial_state() {
        let d = nalgebra::DVector::from_row_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let v = CovarianceMatrix::new(DMatrix::from_diagonal(&d)).unwrap();
        let m = mechanical_submatrix(&v).unwrap();
        assert_eq!(m.matrix().diagonal().as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(
            mechanical_submatrix(&CovarianceMatrix::vacuum(3)).unwrap(),
            CovarianceMatrix::vacuum(2)
        );

        assert_eq!(
            initial_covariance(0.0, 0.0).unwrap(),
            CovarianceMatrix::vacuum(3)
        );
        let init = initial_covariance(20.0, 10.0).unwrap();
        assert_eq!(
            init.matrix().diagonal().as_slice(),
            &[20.5, 20.5, 10.5, 10.5, 0.5, 0.5]
        );
        assert_eq!(
            log_negativity(&mechanical_submatrix(&init).unwrap()).unwrap(),
            0.0
        );
        assert!(initial_covariance(-1.0, 0.0).is_err());
    }

    #[test]
    fn partial_transpose_involution() {
        let v = two_mode_squeezed_vacuum(0.7);
        let twice = partial_transpose(&partial_transpose(&v).unwrap()).unwrap();
        assert_eq!(twice, v);
    }

    #[test]
    fn clamp_suppresses_dust() {
        assert_eq!(negativity_from_nu(0.5 * (1.0 - 5e-13)), 0.0);
        assert!(negativity_from_nu(0.5 * (1.0 - 1e-9)) > 0.0);
    }

    /// Random symplectic: local rotations and squeezers plus a beam splitter.
    fn symplectic(params: &[f64]) -> DMatrix<f64> {
        let local = |phi: f64, sq: f64| {
            let (s, c) = phi.sin_cos();
            let rot = DMatrix::from_row_slice(2, 2, &[c, s, -s, c]);
            let squeeze = DMatrix::from_row_slice(2, 2, &[sq.exp(), 0.0, 0.0, (-sq).exp()]);
            rot * squeeze
        };
        let mut s = DMatrix::<f64>::zeros(4, 4);
        s.view_mut((0, 0), (2, 2))
            .copy_from(&local(params[0], params[1]));
        s.view_mut((2, 2), (2, 2))
            .copy_from(&local(params[2], params[3]));
        let (sn, cs) = params[4].sin_cos();
        let mut bs = DMatrix::<f64>::identity(4, 4) * cs;
        bs[(0, 2)] = sn;
        bs[(1, 3)] = sn;
        bs[(2, 0)] = -sn;
        bs[(3, 1)] = -sn;
        bs * s
    }

    /// Two-mode squeezer `S(r)` applied to a product of thermal states.
    fn thermal_squeezed(n1: f64, n2: f64, r: f64) -> CovarianceMatrix {
        let th = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&[
            n1 + 0.5,
            n1 + 0.5,
            n2 + 0.5,
            n2 + 0.5,
        ]));
        let (c, s) = (r.cosh(), r.sinh());
        #[rustfmt::skip]
        let tms = DMatrix::from_row_slice(4, 4, &[
            c,   0.0, s,   0.0,
            0.0, c,   0.0, -s,
            s,   0.0, c,   0.0,
            0.0, -s,  0.0, c,
        ]);
        CovarianceMatrix::new(&tms * th * tms.transpose()).unwrap()
    }

    proptest! {
        #[test]
        fn spectrum_is_symplectic_invariant(p in proptest::collection::vec(-1.0..1.0f64, 5),
                                            n1 in 0.0..5.0f64, n2 in 0.0..5.0f64, r in 0.0..1.5f64) {
            let v = thermal_squeezed(n1, n2, r);
            let s = symplectic(&p);
            let w = CovarianceMatrix::new(&s * v.matrix() * s.transpose()).unwrap();
            let a = symplectic_spectrum(&v);
            let b = symplectic_spectrum(&w);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-10 * x.max(1.0));
            }
            let (lo, hi) = two_mode_invariants(v.matrix());
            prop_assert!((a[0] - lo).abs() < 1e-8 && (a[1] - hi).abs() < 1e-8);
        }

        #[test]
        fn tmsv_negativity_is_2r(r in 0.0..3.0f64) {
            let e = log_negativity(&two_mode_squeezed_vacuum(r)).unwrap();
            prop_assert!((e - 2.0 * r).abs() < 1e-9);
        }

        #[test]
        fn added_noise_never_helps(n1 in 0.0..3.0f64, n2 in 0.0..3.0f64, r in 0.2..2.0f64, eps in 0.0..2.0f64) {
            let v = thermal_squeezed(n1, n2, r);
            let noisy = CovarianceMatrix::new(v.matrix() + DMatrix::identity(4, 4) * eps).unwrap();
            prop_assert!(log_negativity(&noisy).unwrap() <= log_negativity(&v).unwrap() + 1e-12);
        }

        #[test]
        fn negativity_is_continuous(r in 0.3..2.0f64, n in 0.0..0.5f64,
                                    dir in proptest::collection::vec(-1.0..1.0f64, 10)) {
            let v = thermal_squeezed(n, n, r);
            let mut d = DMatrix::<f64>::zeros(4, 4);
            let mut k = 0;
            for i in 0..4 {
                for j in i..4 {
                    d[(i, j)] = dir[k];
                    d[(j, i)] = dir[k];
                    k += 1;
                }
            }
            if d.norm() > 0.0 {
                d *= 1e-8 / d.norm();
            }
            let w = CovarianceMatrix::new(v.matrix() + d).unwrap();
            let e0 = log_negativity(&v).unwrap();
            let e1 = log_negativity(&w).unwrap();
            prop_assert!((e0 - e1).abs() < 1e-6);
        }
    }
}
