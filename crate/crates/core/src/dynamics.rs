//! Linear state-space model `u̇ = A u + n` of the two resonators and the
//! cavity, with steady-state and time-resolved covariance matrices.
//!
//! Quadrature order is `(q₁, p₁, q₂, p₂, X, Y)`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::entanglement::CovarianceMatrix;
use crate::error::{Error, Result};
use crate::linalg::{expm, lyapunov_residual, solve_lyapunov, symmetrize, DdMatrix};
use crate::params::EffectiveModel;

/// Relative stability band: spectral abscissae within `1e-9 · ‖A‖_F` of zero
/// are reported as marginal.
pub const STABILITY_REL_TOL: f64 = 1e-9;
/// Propagation sub-steps satisfy `‖A‖_F · dt ≤ MAX_STEP_NORM`.
pub const MAX_STEP_NORM: f64 = 0.1;

/// The 6×6 drift matrix.
pub fn drift_matrix(m: &EffectiveModel) -> DMatrix<f64> {
    let (g1, g2) = (m.g1, m.g2);
    let (h1, h2) = (-m.gamma1 / 2.0, -m.gamma2 / 2.0);
    let (k, d) = (-m.kappa_tilde, m.delta_tilde);
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(6, 6, &[
        h1,  0.0, 0.0, 0.0, 0.0, -g1,
        0.0, h1,  0.0, 0.0, -g1, 0.0,
        0.0, 0.0, h2,  0.0, 0.0, g2,
        0.0, 0.0, 0.0, h2,  -g2, 0.0,
        0.0, -g1, 0.0, g2,  k,   d,
        -g1, 0.0, -g2, 0.0, -d,  k,
    ]);
    a
}

/// `diag[γ₁(n̄₁+½), γ₁(n̄₁+½), γ₂(n̄₂+½), γ₂(n̄₂+½), κ̃, κ̃]`
pub fn diffusion_matrix(m: &EffectiveModel) -> DMatrix<f64> {
    let d1 = m.gamma1 * (m.nbar1 + 0.5);
    let d2 = m.gamma2 * (m.nbar2 + 0.5);
    DMatrix::from_diagonal(&DVector::from_row_slice(&[
        d1,
        d1,
        d2,
        d2,
        m.kappa_tilde,
        m.kappa_tilde,
    ]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    drift: DMatrix<f64>,
    diffusion: DMatrix<f64>,
}

impl StateSpace {
    pub fn from_model(m: &EffectiveModel) -> Self {
        StateSpace {
            drift: drift_matrix(m),
            diffusion: diffusion_matrix(m),
        }
    }

    /// Generic linear system; `diffusion` must be symmetric with a
    /// nonnegative diagonal.
    pub fn new(drift: DMatrix<f64>, diffusion: DMatrix<f64>) -> Result<Self> {
        let n = drift.nrows();
        if drift.ncols() != n || diffusion.shape() != (n, n) {
            return Err(Error::Shape(
                "drift and diffusion must be equal-size square matrices".into(),
            ));
        }
        if (&diffusion - diffusion.transpose()).amax() > 0.0 {
            return Err(Error::Shape("diffusion matrix must be symmetric".into()));
        }
        if diffusion.diagonal().iter().any(|&x| x < 0.0) {
            return Err(Error::domain(
                "diffusion matrix must have a nonnegative diagonal",
            ));
        }
        Ok(StateSpace { drift, diffusion })
    }

    pub fn drift(&self) -> &DMatrix<f64> {
        &self.drift
    }

    pub fn diffusion(&self) -> &DMatrix<f64> {
        &self.diffusion
    }

    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StabilityVerdict {
    Stable,
    Marginal,
    Unstable,
}

impl StabilityVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            StabilityVerdict::Stable => "stable",
            StabilityVerdict::Marginal => "marginal",
            StabilityVerdict::Unstable => "unstable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    pub verdict: StabilityVerdict,
    /// Largest real part of the spectrum.
    pub abscissa: f64,
    pub tolerance: f64,
}

pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn classify_stability(a: &DMatrix<f64>) -> StabilityReport {
    let abscissa = spectral_abscissa(a);
    let tolerance = STABILITY_REL_TOL * a.norm();
    let verdict = if abscissa < -tolerance {
        StabilityVerdict::Stable
    } else if abscissa <= tolerance {
        StabilityVerdict::Marginal
    } else {
        StabilityVerdict::Unstable
    };
    StabilityReport {
        verdict,
        abscissa,
        tolerance,
    }
}

/// True iff every eigenvalue of `a` has real part below `−1e-9·‖A‖_F`.
pub fn stability_eigen(a: &DMatrix<f64>) -> bool {
    classify_stability(a).verdict == StabilityVerdict::Stable
}

/// Left side minus right side of the equal-damping stability inequality,
/// `|G₂|² − |G₁|² + (κ̃γ/2)[1 + 4Δ̃²/(γ+2κ̃)²]`; positive means stable.
pub fn stability_gap(m: &EffectiveModel) -> Result<f64> {
    if !m.equal_dampings() {
        return Err(Error::UnsupportedRegime(
            "analytic stability needs gamma1 == gamma2; use the eigenvalue test".into(),
        ));
    }
    let gamma = m.gamma1;
    let kt = m.kappa_tilde;
    let denom = gamma + 2.0 * kt;
    let detuning = if denom > 0.0 {
        4.0 * m.delta_tilde * m.delta_tilde / (denom * denom)
    } else {
        0.0
    };
    Ok(m.g2 * m.g2 - m.g1 * m.g1 + 0.5 * kt * gamma * (1.0 + detuning))
}

pub fn stability_analytic(m: &EffectiveModel) -> Result<bool> {
    Ok(stability_gap(m)? > 0.0)
}

/// Stationary covariance, the solution of `A V + V Aᵀ = −D`.
pub fn steady_state_covariance(ss: &StateSpace) -> Result<CovarianceMatrix> {
    let report = classify_stability(&ss.drift);
    if report.verdict != StabilityVerdict::Stable {
        return Err(Error::Unstable {
            verdict: report.verdict.as_str(),
            abscissa: report.abscissa,
        });
    }
    let v = solve_lyapunov(&ss.drift, &ss.diffusion)?;
    Ok(CovarianceMatrix::from_symmetric_unchecked(v))
}

/// `‖A V + V Aᵀ + D‖_F / ‖D‖_F` for a candidate stationary covariance.
pub fn steady_state_residual(ss: &StateSpace, v: &CovarianceMatrix) -> f64 {
    lyapunov_residual(&ss.drift, v.matrix(), &ss.diffusion)
}

/// Exact one-step map `V ↦ M V Mᵀ + Q` over an interval `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteStep {
    pub transition: DMatrix<f64>,
    pub noise: DMatrix<f64>,
}

impl DiscreteStep {
    pub fn identity(n: usize) -> Self {
        DiscreteStep {
            transition: DMatrix::identity(n, n),
            noise: DMatrix::zeros(n, n),
        }
    }

    /// The map "`self`, then `next`".
    pub fn then(&self, next: &DiscreteStep) -> DiscreteStep {
        DdStep::from(self).then(&DdStep::from(next)).into()
    }

    /// `self` applied `count` times, by repeated squaring. Products are
    /// accumulated in double-double precision.
    pub fn repeated(&self, mut count: u64) -> DiscreteStep {
        let mut result: Option<DdStep> = None;
        let mut base = DdStep::from(self);
        while count > 0 {
            if count & 1 == 1 {
                result = Some(match result {
                    None => base.clone(),
                    Some(r) => r.then(&base),
                });
            }
            count >>= 1;
            if count > 0 {
                base = base.then(&base);
            }
        }
        match result {
            Some(r) => r.into(),
            None => DiscreteStep::identity(self.transition.nrows()),
        }
    }

    pub fn apply(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let m = DdMatrix::from_f64(&self.transition);
        let q = DdMatrix::from_f64(&self.noise);
        let v = DdMatrix::from_f64(v);
        (&(&(&m * &v) * &m.transpose()) + &q).symmetrized().to_f64()
    }
}

#[derive(Clone)]
struct DdStep {
    transition: DdMatrix,
    noise: DdMatrix,
}

impl DdStep {
    fn then(&self, next: &DdStep) -> DdStep {
        let m = &next.transition * &self.transition;
        let q = &(&(&next.transition * &self.noise) * &next.transition.transpose()) + &next.noise;
        DdStep {
            transition: m,
            noise: q.symmetrized(),
        }
    }
}

impl From<&DiscreteStep> for DdStep {
    fn from(s: &DiscreteStep) -> Self {
        DdStep {
            transition: DdMatrix::from_f64(&s.transition),
            noise: DdMatrix::from_f64(&s.noise),
        }
    }
}

impl From<DdStep> for DiscreteStep {
    fn from(s: DdStep) -> Self {
        DiscreteStep {
            transition: s.transition.to_f64(),
            noise: s.noise.to_f64(),
        }
    }
}

/// `M = e^{A dt}` and `Q = ∫₀^dt e^{As} D e^{Aᵀs} ds` from the exponential of
/// the block matrix `[[A, D], [0, −Aᵀ]]·dt`.
pub fn transition_and_noise(a: &DMatrix<f64>, d: &DMatrix<f64>, dt: f64) -> Result<DiscreteStep> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::domain(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let n = a.nrows();
    let mut block = DMatrix::<f64>::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    block.view_mut((0, n), (n, n)).copy_from(&(d * dt));
    block
        .view_mut((n, n), (n, n))
        .copy_from(&(-a.transpose() * dt));
    let e = expm(&block)?;
    let m = e.view((0, 0), (n, n)).into_owned();
    let q = e.view((0, n), (n, n)) * m.transpose();
    Ok(DiscreteStep {
        transition: m,
        noise: symmetrize(&q),
    })
}

/// Exact map over an interval of length `span`, built from sub-steps with
/// `‖A‖_F·dt ≤ 0.1` composed by repeated squaring.
pub fn interval_map(ss: &StateSpace, span: f64) -> Result<DiscreteStep> {
    let norm = ss.drift.norm();
    let steps = ((norm * span / MAX_STEP_NORM).ceil()).max(1.0);
    if !steps.is_finite() || steps > 2f64.powi(62) {
        return Err(Error::domain(format!(
            "interval {span} too long to subdivide"
        )));
    }
    let step = transition_and_noise(&ss.drift, &ss.diffusion, span / steps)?;
    Ok(step.repeated(steps as u64))
}

/// Covariances at every time in `t_grid`, starting from `v0` at `t = 0`.
pub fn propagate(
    ss: &StateSpace,
    v0: &CovarianceMatrix,
    t_grid: &[f64],
) -> Result<Vec<CovarianceMatrix>> {
    if v0.dim() != ss.dim() {
        return Err(Error::Shape(format!(
            "initial covariance is {0}x{0}, system has dimension {1}",
            v0.dim(),
            ss.dim()
        )));
    }
    validate_grid(t_grid)?;

    let mut cache: HashMap<u64, DiscreteStep> = HashMap::new();
    let mut out = Vec::with_capacity(t_grid.len());
    let mut v = v0.matrix().clone();
    let mut now = 0.0;
    for (step, &t) in t_grid.iter().enumerate() {
        let span = t - now;
        if span > 0.0 {
            let map = match cache.get(&span.to_bits()) {
                Some(m) => m,
                None => {
                    let m = interval_map(ss, span)?;
                    cache.entry(span.to_bits()).or_insert(m)
                }
            };
            v = map.apply(&v);
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Divergence { step });
            }
        }
        now = t;
        out.push(CovarianceMatrix::from_symmetric_unchecked(v.clone()));
    }
    Ok(out)
}

fn validate_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::domain("time grid is empty"));
    }
    if t_grid.iter().any(|t| !t.is_finite()) || t_grid[0] < 0.0 {
        return Err(Error::domain(
            "time grid must be finite and start at t >= 0",
        ));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("time grid must be strictly increasing"));
    }
    Ok(())
}

/// `count` equally spaced points over `[0, t_max]`.
pub fn uniform_grid(t_max: f64, count: usize) -> Result<Vec<f64>> {
    if !(t_max > 0.0) || count < 2 {
        return Err(Error::domain(
            "uniform grid needs t_max > 0 and at least two points",
        ));
    }
    let h = t_max / (count - 1) as f64;
    Ok((0..count)
        .map(|i| if i == count - 1 { t_max } else { i as f64 * h })
        .collect())
}
