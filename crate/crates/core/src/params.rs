//! Raw experimental parameters and the effective quantities that enter the
//! linearized dynamics.
//!
//! Every rate (mechanical damping, cavity decay, coupling, detuning) is a
//! plain rate in s⁻¹. Values quoted "in Hz" are used as-is, without a 2π
//! factor; the dynamics only depend on ratios of these rates.

use nalgebra::Complex;
use serde::Serialize;

use crate::error::{Error, Result};

/// Reduced Planck constant (CODATA 2018, exact in SI), J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (exact in SI), J/K.
pub const K_B: f64 = 1.380_649e-23;

/// Default RWA threshold on the ratio returned by [`rwa_validity`].
pub const DEFAULT_RWA_THRESHOLD: f64 = 0.1;

/// Single-photon couplings and two-tone pump used on the physical entry path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveParams {
    pub g1: f64,
    pub g2: f64,
    /// Pump powers in W.
    pub p1: f64,
    pub p2: f64,
    /// Laser angular frequencies in s⁻¹.
    pub omega_l1: f64,
    pub omega_l2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    pub omega1: f64,
    pub omega2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    /// Cavity detuning, light shift included.
    pub delta: f64,
    /// Bath temperature in K.
    pub temperature: f64,
    pub drive: Option<DriveParams>,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.omega1,
            self.omega2,
            self.gamma1,
            self.gamma2,
            self.kappa1,
            self.kappa2,
            self.delta,
            self.temperature,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("physical parameters must be finite"));
        }
        if self.omega1 <= 0.0 || self.omega2 <= 0.0 {
            return Err(Error::domain("mechanical frequencies must be positive"));
        }
        if self.omega1 == self.omega2 {
            return Err(Error::domain("mechanical frequencies must differ"));
        }
        if self.gamma1 < 0.0 || self.gamma2 < 0.0 || self.kappa1 < 0.0 || self.kappa2 < 0.0 {
            return Err(Error::domain("damping and decay rates must be nonnegative"));
        }
        if self.temperature < 0.0 {
            return Err(Error::domain("temperature must be nonnegative"));
        }
        Ok(())
    }

    /// Thermal occupancies of both resonators at `self.temperature`.
    pub fn occupancies(&self) -> Result<(f64, f64)> {
        Ok((
            thermal_occupancy(self.omega1, self.temperature)?,
            thermal_occupancy(self.omega2, self.temperature)?,
        ))
    }
}

/// Beam-splitter reflectivity (net of loop losses) and loop phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeedbackParams {
    pub r_b: f64,
    pub theta: f64,
}

impl FeedbackParams {
    /// `r_b = 1` is accepted as the ideal lossless-loop limit, see [`Self::is_ideal`].
    pub fn new(r_b: f64, theta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&r_b) {
            return Err(Error::domain(format!(
                "reflectivity rB = {r_b} outside [0, 1]"
            )));
        }
        if !theta.is_finite() {
            return Err(Error::domain("feedback phase must be finite"));
        }
        Ok(FeedbackParams { r_b, theta })
    }

    pub fn none() -> Self {
        FeedbackParams {
            r_b: 0.0,
            theta: 0.0,
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.r_b == 1.0
    }
}

/// The closed parameter set of the linearized equations of motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveModel {
    /// Coupling magnitudes |G₁|, |G₂|.
    pub g1: f64,
    pub g2: f64,
    pub kappa_tilde: f64,
    pub delta_tilde: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub nbar1: f64,
    pub nbar2: f64,
}

impl EffectiveModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        g1: f64,
        g2: f64,
        kappa_tilde: f64,
        delta_tilde: f64,
        gamma1: f64,
        gamma2: f64,
        nbar1: f64,
        nbar2: f64,
    ) -> Result<Self> {
        let all = [
            g1,
            g2,
            kappa_tilde,
            delta_tilde,
            gamma1,
            gamma2,
            nbar1,
            nbar2,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("effective model parameters must be finite"));
        }
        if kappa_tilde < 0.0 {
            return Err(Error::domain(format!(
                "effective cavity decay {kappa_tilde} < 0"
            )));
        }
        if nbar1 < 0.0 || nbar2 < 0.0 {
            return Err(Error::domain("thermal occupancies must be nonnegative"));
        }
        if gamma1 < 0.0 || gamma2 < 0.0 {
            return Err(Error::domain(
                "mechanical damping rates must be nonnegative",
            ));
        }
        Ok(EffectiveModel {
            g1: g1.abs(),
            g2: g2.abs(),
            kappa_tilde,
            delta_tilde,
            gamma1,
            gamma2,
            nbar1,
            nbar2,
        })
    }

    /// Direct entry path: couplings supplied by the caller, occupancies from
    /// the bath temperature.
    pub fn from_couplings(
        p: &PhysicalParams,
        fb: &FeedbackParams,
        g1: f64,
        g2: f64,
    ) -> Result<(Self, ValidityReport)> {
        p.validate()?;
        let (kt, dt) = effective_cavity_params(p.kappa1, p.kappa2, fb, p.delta)?;
        let (n1, n2) = p.occupancies()?;
        let model = Self::new(g1, g2, kt, dt, p.gamma1, p.gamma2, n1, n2)?;
        let report = rwa_validity(p, model.g1, model.g2, DEFAULT_RWA_THRESHOLD);
        Ok((model, report))
    }

    /// Physical entry path: pump powers and single-photon couplings are turned
    /// into drive amplitudes and then into effective couplings. Coupling phases
    /// are dropped from the model and kept in the report.
    pub fn from_physical(
        p: &PhysicalParams,
        fb: &FeedbackParams,
    ) -> Result<(Self, ValidityReport)> {
        let drive = p
            .drive
            .ok_or_else(|| Error::domain("physical entry path needs g, P and omegaL"))?;
        let (c1, c2) = physical_couplings(p, &drive)?;
        let (model, mut report) = Self::from_couplings(p, fb, c1.norm(), c2.norm())?;
        report.coupling_phases = Some([c1.arg(), c2.arg()]);
        Ok((model, report))
    }

    /// Replaces the occupancies (e.g. when they are given directly instead of
    /// through a temperature).
    pub fn with_occupancies(self, nbar1: f64, nbar2: f64) -> Result<Self> {
        Self::new(
            self.g1,
            self.g2,
            self.kappa_tilde,
            self.delta_tilde,
            self.gamma1,
            self.gamma2,
            nbar1,
            nbar2,
        )
    }

    pub fn equal_dampings(&self) -> bool {
        self.gamma1 == self.gamma2
    }
}

/// Complex effective couplings from the physical parameters.
pub fn physical_couplings(
    p: &PhysicalParams,
    drive: &DriveParams,
) -> Result<(Complex<f64>, Complex<f64>)> {
    let e1 = drive_amplitude(drive.p1, p.kappa1, drive.omega_l1)?;
    let e2 = drive_amplitude(drive.p2, p.kappa1, drive.omega_l2)?;
    effective_couplings(
        drive.g1, drive.g2, e1, e2, p.omega1, p.omega2, p.delta, p.kappa1, p.kappa2,
    )
}

/// Bose–Einstein occupancy `1 / (exp(ħω/k_B T) − 1)`; exactly 0 at `T = 0`.
pub fn thermal_occupancy(omega: f64, temperature: f64) -> Result<f64> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::domain(format!(
            "frequency must be positive, got {omega}"
        )));
    }
    if !(temperature >= 0.0) || !temperature.is_finite() {
        return Err(Error::domain(format!(
            "temperature must be nonnegative, got {temperature}"
        )));
    }
    if temperature == 0.0 {
        return Ok(0.0);
    }
    let x = HBAR * omega / (K_B * temperature);
    Ok(1.0 / x.exp_m1())
}

/// Pump amplitude `√(2 P κ₁ / ħ ω_L)` in s⁻¹.
pub fn drive_amplitude(power: f64, kappa1: f64, omega_l: f64) -> Result<f64> {
    if !(power >= 0.0) {
        return Err(Error::domain(format!(
            "pump power must be nonnegative, got {power}"
        )));
    }
    if !(kappa1 > 0.0) {
        return Err(Error::domain(format!(
            "kappa1 must be positive, got {kappa1}"
        )));
    }
    if !(omega_l > 0.0) {
        return Err(Error::domain(format!(
            "laser frequency must be positive, got {omega_l}"
        )));
    }
    Ok((2.0 * power * kappa1 / (HBAR * omega_l)).sqrt())
}

/// `G₁ = g₁E₁ / [ω₁ − Δ + i(κ₁+κ₂)]`, `G₂ = g₂E₂ / [−ω₂ − Δ + i(κ₁+κ₂)]`.
#[allow(clippy::too_many_arguments)]
pub fn effective_couplings(
    g1: f64,
    g2: f64,
    e1: f64,
    e2: f64,
    omega1: f64,
    omega2: f64,
    delta: f64,
    kappa1: f64,
    kappa2: f64,
) -> Result<(Complex<f64>, Complex<f64>)> {
    let k = kappa1 + kappa2;
    let d1 = Complex::new(omega1 - delta, k);
    let d2 = Complex::new(-omega2 - delta, k);
    if d1.norm() == 0.0 {
        return Err(Error::Singularity { resonator: 1 });
    }
    if d2.norm() == 0.0 {
        return Err(Error::Singularity { resonator: 2 });
    }
    Ok((
        Complex::new(g1 * e1, 0.0) / d1,
        Complex::new(g2 * e2, 0.0) / d2,
    ))
}

/// Feedback-modified cavity decay and detuning:
/// `κ̃ = κ₁+κ₂ − 2√(κ₁κ₂) r_B cos θ`, `Δ̃ = Δ − 2√(κ₁κ₂) r_B sin θ`.
pub fn effective_cavity_params(
    kappa1: f64,
    kappa2: f64,
    fb: &FeedbackParams,
    delta: f64,
) -> Result<(f64, f64)> {
    if !(kappa1 >= 0.0) || !(kappa2 >= 0.0) {
        return Err(Error::domain("cavity decay rates must be nonnegative"));
    }
    let s1 = kappa1.sqrt();
    let s2 = kappa2.sqrt();
    let cross = 2.0 * s1 * s2;
    // (√κ₁ − √κ₂)² + 2√(κ₁κ₂)(1 − r_B cos θ): same value, never negative for r_B ≤ 1
    let kappa_tilde = (s1 - s2).powi(2) + cross * (1.0 - fb.r_b * fb.theta.cos());
    let delta_tilde = delta - cross * fb.r_b * fb.theta.sin();
    Ok((kappa_tilde, delta_tilde))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RwaVerdict {
    Valid,
    Marginal,
    Invalid,
}

impl RwaVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            RwaVerdict::Valid => "valid",
            RwaVerdict::Marginal => "marginal",
            RwaVerdict::Invalid => "invalid",
        }
    }
}

impl std::fmt::Display for RwaVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Regime-of-validity metadata. Never blocks a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidityReport {
    /// `max(|G₁|, |G₂|, κ₁, κ₂) / min(ω₁, ω₂, |ω₁−ω₂|)`
    pub ratio: f64,
    pub threshold: f64,
    pub verdict: RwaVerdict,
    /// Phases of the complex couplings discarded by the model, when known.
    pub coupling_phases: Option<[f64; 2]>,
}

pub fn rwa_validity(p: &PhysicalParams, g1: f64, g2: f64, threshold: f64) -> ValidityReport {
    let fast = g1.abs().max(g2.abs()).max(p.kappa1).max(p.kappa2);
    let slow = p.omega1.min(p.omega2).min((p.omega1 - p.omega2).abs());
    let ratio = if slow > 0.0 {
        fast / slow
    } else {
        f64::INFINITY
    };
    let verdict = if ratio < threshold {
        RwaVerdict::Valid
    } else if ratio < 1.0 {
        RwaVerdict::Marginal
    } else {
        RwaVerdict::Invalid
    };
    ValidityReport {
        ratio,
        threshold,
        verdict,
        coupling_phases: None,
    }
}

/// Squeezing parameter of the Bogoliubov mode, `tanh s = G₁/G₂`.
pub fn squeezing_parameter(g1: f64, g2: f64) -> Result<f64> {
    check_ordered_couplings(g1, g2)?;
    Ok((g1 / g2).atanh())
}

/// Collective coupling `𝒢 = √(G₂² − G₁²)`.
pub fn collective_coupling(g1: f64, g2: f64) -> Result<f64> {
    check_ordered_couplings(g1, g2)?;
    Ok(((g2 - g1) * (g2 + g1)).sqrt())
}

fn check_ordered_couplings(g1: f64, g2: f64) -> Result<()> {
    if !(g1 >= 0.0) || !(g2 > g1) {
        return Err(Error::domain(format!(
            "Bogoliubov mode needs 0 <= G1 < G2, got G1 = {g1}, G2 = {g2}"
        )));
    }
    Ok(())
}
