//! Parameter sweeps, grid-search optimization and the figure presets.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    classify_stability, propagate, steady_state_covariance, uniform_grid, StabilityVerdict,
    StateSpace,
};
use crate::entanglement::{
    initial_covariance, mechanical_submatrix, min_symplectic_eigenvalue,
    min_symplectic_eigenvalue_pt, negativity_from_nu, physicality_check, CovarianceMatrix,
};
use crate::error::{Error, Result};
use crate::params::{
    thermal_occupancy, DriveParams, EffectiveModel, FeedbackParams, PhysicalParams, RwaVerdict,
    ValidityReport, DEFAULT_RWA_THRESHOLD,
};

pub const DEFAULT_GRID_POINTS: usize = 61;
pub const DEFAULT_FIG3_T_MAX: f64 = 1e-2;
pub const DEFAULT_FIG3_T_POINTS: usize = 1001;
pub const DEFAULT_REFINE_LEVELS: usize = 4;
pub const DEFAULT_OMEGA1: f64 = 1e8;
pub const DEFAULT_OMEGA2: f64 = 2e8;
pub const FIG3_RB: [f64; 5] = [0.0, 0.9, 0.99, 0.999, 1.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Couplings {
    Direct {
        g1: f64,
        g2: f64,
    },
    /// `G₁ = ratio·G₂`.
    Ratio {
        ratio: f64,
        g2: f64,
    },
    Drive(DriveParams),
}

/// One fully specified operating point, before the effective reduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub omega1: f64,
    pub omega2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub delta: f64,
    pub temperature: f64,
    /// Direct occupancies; each falls back to the thermal value at `temperature`.
    pub nbar1: Option<f64>,
    pub nbar2: Option<f64>,
    pub couplings: Couplings,
    pub r_b: f64,
    pub theta: f64,
    /// Sets `Δ = 2√(κ₁κ₂) r_B sin θ` so that `Δ̃ = 0`.
    pub detuning_lock: bool,
    pub rwa_threshold: f64,
}

impl Scenario {
    /// Direct couplings, no feedback, zero temperature.
    pub fn new(g1: f64, g2: f64, gamma: f64, kappa1: f64, kappa2: f64) -> Self {
        Scenario {
            omega1: DEFAULT_OMEGA1,
            omega2: DEFAULT_OMEGA2,
            gamma1: gamma,
            gamma2: gamma,
            kappa1,
            kappa2,
            delta: 0.0,
            temperature: 0.0,
            nbar1: None,
            nbar2: None,
            couplings: Couplings::Direct { g1, g2 },
            r_b: 0.0,
            theta: 0.0,
            detuning_lock: false,
            rwa_threshold: DEFAULT_RWA_THRESHOLD,
        }
    }

    pub fn effective_delta(&self) -> f64 {
        if self.detuning_lock {
            2.0 * (self.kappa1 * self.kappa2).sqrt() * self.r_b * self.theta.sin()
        } else {
            self.delta
        }
    }

    pub fn physical(&self) -> PhysicalParams {
        PhysicalParams {
            omega1: self.omega1,
            omega2: self.omega2,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            kappa1: self.kappa1,
            kappa2: self.kappa2,
            delta: self.effective_delta(),
            temperature: self.temperature,
            drive: match self.couplings {
                Couplings::Drive(d) => Some(d),
                _ => None,
            },
        }
    }

    pub fn feedback(&self) -> Result<FeedbackParams> {
        FeedbackParams::new(self.r_b, self.theta)
    }

    pub fn model(&self) -> Result<(EffectiveModel, ValidityReport)> {
        let p = self.physical();
        let fb = self.feedback()?;
        let (model, mut report) = match self.couplings {
            Couplings::Direct { g1, g2 } => EffectiveModel::from_couplings(&p, &fb, g1, g2)?,
            Couplings::Ratio { ratio, g2 } => {
                EffectiveModel::from_couplings(&p, &fb, ratio * g2, g2)?
            }
            Couplings::Drive(_) => EffectiveModel::from_physical(&p, &fb)?,
        };
        let n1 = match self.nbar1 {
            Some(n) => n,
            None => thermal_occupancy(self.omega1, self.temperature)?,
        };
        let n2 = match self.nbar2 {
            Some(n) => n,
            None => thermal_occupancy(self.omega2, self.temperature)?,
        };
        let model = model.with_occupancies(n1, n2)?;
        let phases = report.coupling_phases;
        report = crate::params::rwa_validity(&p, model.g1, model.g2, self.rwa_threshold);
        report.coupling_phases = phases;
        Ok((model, report))
    }

    pub fn with_axis(&self, axis: AxisName, v: f64) -> Result<Scenario> {
        let mut s = *self;
        match axis {
            AxisName::G1OverG2 => {
                s.couplings = match s.couplings {
                    Couplings::Direct { g2, .. } | Couplings::Ratio { g2, .. } => {
                        Couplings::Ratio { ratio: v, g2 }
                    }
                    Couplings::Drive(_) => return Err(needs_direct(axis)),
                }
            }
            AxisName::G1 => {
                s.couplings = match s.couplings {
                    Couplings::Direct { g2, .. } | Couplings::Ratio { g2, .. } => {
                        Couplings::Direct { g1: v, g2 }
                    }
                    Couplings::Drive(_) => return Err(needs_direct(axis)),
                }
            }
            AxisName::G2 => {
                s.couplings = match s.couplings {
                    Couplings::Direct { g1, .. } => Couplings::Direct { g1, g2: v },
                    Couplings::Ratio { ratio, .. } => Couplings::Ratio { ratio, g2: v },
                    Couplings::Drive(_) => return Err(needs_direct(axis)),
                }
            }
            AxisName::RB => s.r_b = v,
            AxisName::Theta => s.theta = v,
            AxisName::ThetaPi => s.theta = v * PI,
            AxisName::Delta => s.delta = v,
            AxisName::Kappa1 => s.kappa1 = v,
            AxisName::Kappa2 => s.kappa2 = v,
            AxisName::Gamma1 => s.gamma1 = v,
            AxisName::Gamma2 => s.gamma2 = v,
            AxisName::Nbar1 => s.nbar1 = Some(v),
            AxisName::Nbar2 => s.nbar2 = Some(v),
            AxisName::TemperatureK => s.temperature = v,
        }
        Ok(s)
    }
}

fn needs_direct(axis: AxisName) -> Error {
    Error::domain(format!("axis {axis} needs directly specified couplings"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AxisName {
    #[serde(rename = "G1overG2")]
    G1OverG2,
    #[serde(rename = "G1")]
    G1,
    #[serde(rename = "G2")]
    G2,
    #[serde(rename = "rB")]
    RB,
    #[serde(rename = "theta")]
    Theta,
    #[serde(rename = "thetaPi")]
    ThetaPi,
    #[serde(rename = "Delta")]
    Delta,
    #[serde(rename = "kappa1")]
    Kappa1,
    #[serde(rename = "kappa2")]
    Kappa2,
    #[serde(rename = "gamma1")]
    Gamma1,
    #[serde(rename = "gamma2")]
    Gamma2,
    #[serde(rename = "nbar1")]
    Nbar1,
    #[serde(rename = "nbar2")]
    Nbar2,
    #[serde(rename = "temperatureK")]
    TemperatureK,
}

impl AxisName {
    pub const ALL: [AxisName; 14] = [
        AxisName::G1OverG2,
        AxisName::G1,
        AxisName::G2,
        AxisName::RB,
        AxisName::Theta,
        AxisName::ThetaPi,
        AxisName::Delta,
        AxisName::Kappa1,
        AxisName::Kappa2,
        AxisName::Gamma1,
        AxisName::Gamma2,
        AxisName::Nbar1,
        AxisName::Nbar2,
        AxisName::TemperatureK,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AxisName::G1OverG2 => "G1overG2",
            AxisName::G1 => "G1",
            AxisName::G2 => "G2",
            AxisName::RB => "rB",
            AxisName::Theta => "theta",
            AxisName::ThetaPi => "thetaPi",
            AxisName::Delta => "Delta",
            AxisName::Kappa1 => "kappa1",
            AxisName::Kappa2 => "kappa2",
            AxisName::Gamma1 => "gamma1",
            AxisName::Gamma2 => "gamma2",
            AxisName::Nbar1 => "nbar1",
            AxisName::Nbar2 => "nbar2",
            AxisName::TemperatureK => "temperatureK",
        }
    }
}

impl fmt::Display for AxisName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AxisName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AxisName::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::domain(format!("unknown axis name `{s}`")))
    }
}

/// A swept parameter and its grid values.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: AxisName,
    pub values: Vec<f64>,
}

impl Axis {
    /// `count` equally spaced values over `[min, max]`; a single point needs `min == max`.
    pub fn linspace(name: AxisName, min: f64, max: f64, count: usize) -> Result<Axis> {
        if !min.is_finite() || !max.is_finite() {
            return Err(Error::domain(format!("axis {name}: bounds must be finite")));
        }
        let values = match count {
            0 => {
                return Err(Error::domain(format!(
                    "axis {name}: count must be at least 1"
                )))
            }
            1 if min == max => vec![min],
            1 => {
                return Err(Error::domain(format!(
                    "axis {name}: a one-point axis needs min == max"
                )))
            }
            _ if max <= min => {
                return Err(Error::domain(format!("axis {name}: needs min < max")));
            }
            _ => {
                let h = (max - min) / (count - 1) as f64;
                (0..count)
                    .map(|i| {
                        if i == count - 1 {
                            max
                        } else {
                            min + i as f64 * h
                        }
                    })
                    .collect()
            }
        };
        Ok(Axis { name, values })
    }

    pub fn list(name: AxisName, values: Vec<f64>) -> Result<Axis> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "axis {name}: value list must be nonempty and finite"
            )));
        }
        Ok(Axis { name, values })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Steady,
    Evolve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: Scenario,
    /// Up to two axes; the first varies slowest. No axes means a single point.
    pub axes: Vec<Axis>,
    pub mode: Mode,
    /// Evolve mode only.
    pub t_grid: Vec<f64>,
    /// Evolve mode: keep every `E_N(t)` in the rows.
    pub curves: bool,
}

impl SweepSpec {
    pub fn steady(base: Scenario, axes: Vec<Axis>) -> Self {
        SweepSpec {
            base,
            axes,
            mode: Mode::Steady,
            t_grid: Vec::new(),
            curves: false,
        }
    }

    pub fn evolve(base: Scenario, axes: Vec<Axis>, t_grid: Vec<f64>, curves: bool) -> Self {
        SweepSpec {
            base,
            axes,
            mode: Mode::Evolve,
            t_grid,
            curves,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.len() > 2 {
            return Err(Error::domain("at most two sweep axes are supported"));
        }
        if self.axes.len() == 2 && self.axes[0].name == self.axes[1].name {
            return Err(Error::domain(format!(
                "axis {} given twice",
                self.axes[0].name
            )));
        }
        let names: Vec<_> = self.axes.iter().map(|a| a.name).collect();
        if names.contains(&AxisName::Theta) && names.contains(&AxisName::ThetaPi) {
            return Err(Error::domain("axes theta and thetaPi are exclusive"));
        }
        for a in &self.axes {
            if a.values.is_empty() {
                return Err(Error::domain(format!("axis {} is empty", a.name)));
            }
            self.base.with_axis(a.name, a.values[0])?;
        }
        if self.mode == Mode::Evolve {
            if self.t_grid.is_empty() {
                return Err(Error::domain("evolve mode needs a time grid"));
            }
            if self.t_grid.windows(2).any(|w| w[1] <= w[0]) || self.t_grid[0] < 0.0 {
                return Err(Error::domain(
                    "time grid must be increasing and start at t >= 0",
                ));
            }
        }
        Ok(())
    }

    /// Axis values of every grid point, first axis slowest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut pts = vec![Vec::new()];
        for axis in &self.axes {
            pts = pts
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        pts
    }

    pub fn scenario_at(&self, point: &[f64]) -> Result<Scenario> {
        self.axes
            .iter()
            .zip(point)
            .try_fold(self.base, |s, (a, &v)| s.with_axis(a.name, v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub point: Vec<f64>,
    /// Steady mode: stationary `E_N`. Evolve mode: peak over the time grid.
    /// Absent when the point has no steady state or failed.
    pub e_n: Option<f64>,
    pub stable: bool,
    pub verdict: StabilityVerdict,
    pub kappa_tilde: Option<f64>,
    pub delta_tilde: Option<f64>,
    pub nu_minus: Option<f64>,
    pub rwa: Option<RwaVerdict>,
    /// Evolve mode: time of the peak.
    pub t_peak: Option<f64>,
    /// Evolve mode with curves: `E_N` at every time of the grid.
    pub curve: Option<Vec<f64>>,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(point: Vec<f64>, err: &Error) -> Self {
        SweepRow {
            point,
            e_n: None,
            stable: false,
            verdict: StabilityVerdict::Unstable,
            kappa_tilde: None,
            delta_tilde: None,
            nu_minus: None,
            rwa: None,
            t_peak: None,
            curve: None,
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis_names: Vec<AxisName>,
    pub mode: Mode,
    pub t_grid: Vec<f64>,
    pub rows: Vec<SweepRow>,
}

/// Mechanical `E_N` and `ν̃₋` of a full covariance; rejects unphysical input.
pub fn mechanical_negativity(v6: &CovarianceMatrix) -> Result<(f64, f64)> {
    if !physicality_check(v6) {
        return Err(Error::Unphysical {
            nu: min_symplectic_eigenvalue(v6),
        });
    }
    let nu = min_symplectic_eigenvalue_pt(&mechanical_submatrix(v6)?)?;
    Ok((negativity_from_nu(nu), nu))
}

/// Stationary `E_N`, `ν̃₋` and the covariance for one model.
pub fn steady_point(model: &EffectiveModel) -> Result<(f64, f64, CovarianceMatrix)> {
    let ss = StateSpace::from_model(model);
    let v = steady_state_covariance(&ss)?;
    let (e, nu) = mechanical_negativity(&v)?;
    Ok((e, nu, v))
}

/// `E_N(t)` and `ν̃₋(t)` from the thermal-mechanics, cavity-vacuum initial state.
pub fn evolve_point(model: &EffectiveModel, t_grid: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let ss = StateSpace::from_model(model);
    let v0 = initial_covariance(model.nbar1, model.nbar2)?;
    let states = propagate(&ss, &v0, t_grid)?;
    let mut e = Vec::with_capacity(states.len());
    let mut nu = Vec::with_capacity(states.len());
    for v in &states {
        let (ei, ni) = mechanical_negativity(v)?;
        e.push(ei);
        nu.push(ni);
    }
    Ok((e, nu))
}

fn evaluate(spec: &SweepSpec, point: Vec<f64>) -> SweepRow {
    let (model, report) = match spec.scenario_at(&point).and_then(|s| s.model()) {
        Ok(m) => m,
        Err(e) => return SweepRow::failed(point, &e),
    };
    let ss = StateSpace::from_model(&model);
    let stability = classify_stability(ss.drift());
    let mut row = SweepRow {
        point,
        e_n: None,
        stable: stability.verdict == StabilityVerdict::Stable,
        verdict: stability.verdict,
        kappa_tilde: Some(model.kappa_tilde),
        delta_tilde: Some(model.delta_tilde),
        nu_minus: None,
        rwa: Some(report.verdict),
        t_peak: None,
        curve: None,
        error: None,
    };
    match spec.mode {
        Mode::Steady => {
            if !row.stable {
                return row;
            }
            match steady_point(&model) {
                Ok((e, nu, _)) => {
                    row.e_n = Some(e);
                    row.nu_minus = Some(nu);
                }
                Err(e) => row.error = Some(e.to_string()),
            }
        }
        Mode::Evolve => match evolve_point(&model, &spec.t_grid) {
            Ok((e, nu)) => {
                let mut best = 0;
                for (i, &x) in e.iter().enumerate() {
                    if x > e[best] {
                        best = i;
                    }
                }
                row.e_n = Some(e[best]);
                row.nu_minus = Some(nu[best]);
                row.t_peak = Some(spec.t_grid[best]);
                if spec.curves {
                    row.curve = Some(e);
                }
            }
            Err(e) => row.error = Some(e.to_string()),
        },
    }
    row
}

/// Evaluates every grid point independently (in parallel, merged in grid
/// order). Per-point failures are recorded in the row.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let rows = spec
        .points()
        .into_par_iter()
        .map(|p| evaluate(spec, p))
        .collect();
    Ok(SweepResult {
        axis_names: spec.axes.iter().map(|a| a.name).collect(),
        mode: spec.mode,
        t_grid: if spec.mode == Mode::Evolve {
            spec.t_grid.clone()
        } else {
            Vec::new()
        },
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Optimum {
    pub point: Vec<f64>,
    pub e_n: f64,
}

fn best_row(rows: &[SweepRow]) -> Option<&SweepRow> {
    let mut best: Option<&SweepRow> = None;
    for r in rows {
        if let Some(e) = r.e_n {
            if best.and_then(|b| b.e_n).is_none_or(|b| e > b) {
                best = Some(r);
            }
        }
    }
    best
}

/// Grid search with recursive zoom: each level halves every axis window and
/// recenters it on the best point so far (clamped to the original range).
pub fn find_optimum(spec: &SweepSpec, refine_levels: usize) -> Result<Optimum> {
    if spec.mode != Mode::Steady {
        return Err(Error::domain("optimization runs in steady mode"));
    }
    if spec.axes.is_empty() {
        return Err(Error::domain("optimization needs one or two axes"));
    }
    let coarse = run_sweep(spec)?;
    let best = best_row(&coarse.rows).ok_or(Error::NoFeasiblePoint)?;
    let mut opt = Optimum {
        point: best.point.clone(),
        e_n: best.e_n.unwrap_or(0.0),
    };

    let bounds: Vec<(f64, f64)> = spec
        .axes
        .iter()
        .map(|a| {
            let lo = a.values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = a.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        })
        .collect();
    let mut widths: Vec<f64> = bounds.iter().map(|(lo, hi)| hi - lo).collect();

    for _ in 0..refine_levels {
        let mut axes = Vec::with_capacity(spec.axes.len());
        for (i, a) in spec.axes.iter().enumerate() {
            let (lo, hi) = bounds[i];
            let count = a.values.len();
            if count < 2 || widths[i] == 0.0 {
                axes.push(Axis::list(a.name, vec![opt.point[i]])?);
                continue;
            }
            widths[i] *= 0.5;
            let mut min = opt.point[i] - widths[i] / 2.0;
            let mut max = opt.point[i] + widths[i] / 2.0;
            if min < lo {
                max += lo - min;
                min = lo;
            }
            if max > hi {
                min -= max - hi;
                max = hi;
            }
            axes.push(Axis::linspace(a.name, min.max(lo), max, count)?);
        }
        let level = SweepSpec {
            axes,
            ..spec.clone()
        };
        let res = run_sweep(&level)?;
        if let Some(r) = best_row(&res.rows) {
            let e = r.e_n.unwrap_or(0.0);
            if e > opt.e_n {
                opt = Optimum {
                    point: r.point.clone(),
                    e_n: e,
                };
            }
        }
    }
    Ok(opt)
}

/// Fig. 3 operating point: `G₁ = G₂ = 10⁴`, `κ₁ = κ₂ = 5·10⁴`, `Δ = 10³`,
/// `γ = 10`, `θ = 0`.
pub fn fig3_base(nbar1: f64, nbar2: f64) -> Scenario {
    let mut s = Scenario::new(1e4, 1e4, 10.0, 5e4, 5e4);
    s.delta = 1e3;
    s.nbar1 = Some(nbar1);
    s.nbar2 = Some(nbar2);
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig3Curve {
    pub r_b: f64,
    pub times: Vec<f64>,
    pub e_n: Vec<f64>,
}

/// `E_N(t)` on `[0, t_max]` for each reflectivity in `r_b_list`.
pub fn fig3_curves(
    r_b_list: &[f64],
    nbar1: f64,
    nbar2: f64,
    t_max: f64,
    t_points: usize,
) -> Result<Vec<Fig3Curve>> {
    let grid = uniform_grid(t_max, t_points)?;
    let base = fig3_base(nbar1, nbar2);
    r_b_list
        .par_iter()
        .map(|&r_b| {
            let (model, _) = base.with_axis(AxisName::RB, r_b)?.model()?;
            let (e_n, _) = evolve_point(&model, &grid)?;
            Ok(Fig3Curve {
                r_b,
                times: grid.clone(),
                e_n,
            })
        })
        .collect()
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 7] = [
    "fig2a",
    "fig2b",
    "fig2c",
    "fig2d",
    "fig3a",
    "fig3b",
    "phase-map",
];

fn fig2_base(nbar1: f64, nbar2: f64) -> Scenario {
    let mut s = Scenario::new(1e5, 1e5, 10.0, 5e4, 5e4);
    s.couplings = Couplings::Ratio {
        ratio: 1.0,
        g2: 1e5,
    };
    s.nbar1 = Some(nbar1);
    s.nbar2 = Some(nbar2);
    s
}

/// Built-in sweeps reproducing the steady-state maps, the ratio cuts, the
/// time traces and the (θ, r_B) map.
pub fn preset(name: &str) -> Result<SweepSpec> {
    let n = DEFAULT_GRID_POINTS;
    let spec = match name {
        "fig2a" | "fig2b" => {
            let (n1, n2) = if name == "fig2a" {
                (0.0, 0.0)
            } else {
                (200.0, 100.0)
            };
            SweepSpec::steady(
                fig2_base(n1, n2),
                vec![
                    Axis::linspace(AxisName::G1OverG2, 0.8, 1.0, n)?,
                    Axis::linspace(AxisName::RB, 0.0, 0.99, n)?,
                ],
            )
        }
        "fig2c" | "fig2d" => {
            let (n1, n2, rb) = if name == "fig2c" {
                (0.0, 0.0, 0.95)
            } else {
                (200.0, 100.0, 0.7)
            };
            SweepSpec::steady(
                fig2_base(n1, n2),
                vec![
                    Axis::list(AxisName::RB, vec![0.0, rb])?,
                    Axis::linspace(AxisName::G1OverG2, 0.8, 0.999, n)?,
                ],
            )
        }
        "fig3a" | "fig3b" => {
            let (n1, n2) = if name == "fig3a" {
                (0.0, 0.0)
            } else {
                (20.0, 10.0)
            };
            SweepSpec::evolve(
                fig3_base(n1, n2),
                vec![Axis::list(AxisName::RB, FIG3_RB.to_vec())?],
                uniform_grid(DEFAULT_FIG3_T_MAX, DEFAULT_FIG3_T_POINTS)?,
                true,
            )
        }
        "phase-map" => {
            let mut base = fig2_base(0.0, 0.0);
            base.couplings = Couplings::Ratio {
                ratio: 0.99,
                g2: 1e5,
            };
            base.detuning_lock = true;
            SweepSpec::steady(
                base,
                vec![
                    Axis::linspace(AxisName::ThetaPi, -1.0, 1.0, n)?,
                    Axis::linspace(AxisName::RB, 0.0, 0.99, n)?,
                ],
            )
        }
        _ => {
            return Err(Error::domain(format!(
                "unknown preset `{name}` (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(spec)
}

/// Local maxima of a sampled curve (strict rise, then non-rise).
pub fn local_maxima(y: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < y.len() {
        if y[i] > y[i - 1] {
            let mut j = i;
            while j + 1 < y.len() && y[j + 1] == y[j] {
                j += 1;
            }
            if j + 1 < y.len() && y[j + 1] < y[j] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Total time with `E_N > 0` on a uniform grid.
pub fn entangled_duration(times: &[f64], e_n: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(e_n.windows(2))
        .filter(|(_, e)| e[0] > 0.0 && e[1] > 0.0)
        .map(|(t, _)| t[1] - t[0])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_grids() {
        let a = Axis::linspace(AxisName::RB, 0.0, 1.0, 5).unwrap();
        assert_eq!(a.values, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(
            Axis::linspace(AxisName::RB, 0.3, 0.3, 1).unwrap().values,
            vec![0.3]
        );
        assert!(Axis::linspace(AxisName::RB, 0.0, 1.0, 1).is_err());
        assert!(Axis::linspace(AxisName::RB, 1.0, 0.0, 3).is_err());
        assert!(Axis::linspace(AxisName::RB, 0.0, 1.0, 0).is_err());
        for a in AxisName::ALL {
            assert_eq!(a.as_str().parse::<AxisName>().unwrap(), a);
        }
        assert!("rb".parse::<AxisName>().is_err());
    }

    #[test]
    fn grid_order_first_axis_slowest() {
        let spec = SweepSpec::steady(
            Scenario::new(1.0, 2.0, 1.0, 1.0, 1.0),
            vec![
                Axis::list(AxisName::RB, vec![0.0, 0.5]).unwrap(),
                Axis::list(AxisName::Theta, vec![1.0, 2.0, 3.0]).unwrap(),
            ],
        );
        let pts = spec.points();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1], vec![0.0, 2.0]);
        assert_eq!(pts[3], vec![0.5, 1.0]);
        let s = spec.scenario_at(&pts[5]).unwrap();
        assert_eq!((s.r_b, s.theta), (0.5, 3.0));
    }

    #[test]
    fn spec_validation() {
        let base = Scenario::new(1.0, 2.0, 1.0, 1.0, 1.0);
        let rb = Axis::list(AxisName::RB, vec![0.0]).unwrap();
        let three = SweepSpec::steady(base, vec![rb.clone(), rb.clone(), rb.clone()]);
        assert!(three.validate().is_err());
        assert!(SweepSpec::steady(base, vec![rb.clone(), rb.clone()])
            .validate()
            .is_err());
        let both = vec![
            Axis::list(AxisName::Theta, vec![0.0]).unwrap(),
            Axis::list(AxisName::ThetaPi, vec![0.0]).unwrap(),
        ];
        assert!(SweepSpec::steady(base, both).validate().is_err());
        assert!(SweepSpec::evolve(base, vec![], vec![], false)
            .validate()
            .is_err());
        assert!(SweepSpec::evolve(base, vec![], vec![0.0, 0.0], false)
            .validate()
            .is_err());

        let mut driven = base;
        driven.couplings = Couplings::Drive(DriveParams {
            g1: 1.0,
            g2: 1.0,
            p1: 1e-3,
            p2: 1e-3,
            omega_l1: 1e15,
            omega_l2: 1e15,
        });
        let ratio = Axis::list(AxisName::G1OverG2, vec![0.5]).unwrap();
        assert!(SweepSpec::steady(driven, vec![ratio]).validate().is_err());
    }

    #[test]
    fn detuning_lock_cancels_effective_detuning() {
        let mut s = Scenario::new(0.99e5, 1e5, 10.0, 3e4, 7e4);
        s.detuning_lock = true;
        for (rb, th) in [(0.9, 0.4), (0.5, -2.0), (1.0, 1.5), (0.0, 1.0)] {
            s.r_b = rb;
            s.theta = th;
            let (m, _) = s.model().unwrap();
            assert!(m.delta_tilde.abs() <= 1e-9 * s.effective_delta().abs().max(1.0));
        }
    }

    #[test]
    fn ratio_axis_and_occupancies() {
        let mut s = Scenario::new(1.0, 2e5, 10.0, 5e4, 5e4);
        s = s.with_axis(AxisName::G1OverG2, 0.5).unwrap();
        s = s.with_axis(AxisName::G2, 1e5).unwrap();
        s = s.with_axis(AxisName::Nbar2, 7.0).unwrap();
        s.temperature = 1e-3;
        let (m, _) = s.model().unwrap();
        assert_eq!(m.g1, 0.5e5);
        assert_eq!(m.g2, 1e5);
        assert_eq!(m.nbar2, 7.0);
        assert_eq!(m.nbar1, thermal_occupancy(s.omega1, 1e-3).unwrap());
        let s = s.with_axis(AxisName::ThetaPi, 0.5).unwrap();
        assert_eq!(s.theta, PI / 2.0);
    }

    #[test]
    fn unstable_points_are_missing_not_zero() {
        let spec = SweepSpec::steady(
            Scenario::new(1.0, 1.0, 1.0, 1.0, 1.0),
            vec![Axis::list(AxisName::G1, vec![0.5, 3.0]).unwrap()],
        );
        let res = run_sweep(&spec).unwrap();
        assert!(res.rows[0].stable && res.rows[0].e_n.is_some());
        assert!(!res.rows[1].stable);
        assert_eq!(res.rows[1].e_n, None);
        assert_eq!(res.rows[1].error, None);
    }

    #[test]
    fn per_point_errors_do_not_abort() {
        let spec = SweepSpec::steady(
            Scenario::new(1.0, 2.0, 1.0, 1.0, 1.0),
            vec![Axis::list(AxisName::RB, vec![0.5, 1.5]).unwrap()],
        );
        let res = run_sweep(&spec).unwrap();
        assert_eq!(res.rows.len(), 2);
        assert!(res.rows[0].error.is_none());
        assert!(res.rows[1].error.as_deref().unwrap().contains("rB"));
    }

    #[test]
    fn zero_axes_is_one_point() {
        let spec = SweepSpec::steady(Scenario::new(0.5, 1.0, 1.0, 1.0, 1.0), vec![]);
        let res = run_sweep(&spec).unwrap();
        assert_eq!(res.rows.len(), 1);
        assert!(res.rows[0].point.is_empty());
    }

    #[test]
    fn sweep_row_matches_standalone() {
        let spec = SweepSpec::steady(
            fig2_base(0.0, 0.0),
            vec![Axis::linspace(AxisName::G1OverG2, 0.8, 0.99, 7).unwrap()],
        );
        let res = run_sweep(&spec).unwrap();
        for row in &res.rows {
            let mut s = fig2_base(0.0, 0.0);
            s.couplings = Couplings::Direct {
                g1: row.point[0] * 1e5,
                g2: 1e5,
            };
            let (m, _) = s.model().unwrap();
            let (e, _, _) = steady_point(&m).unwrap();
            assert!((e - row.e_n.unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn theta_sweep_without_feedback_is_flat() {
        let mut base = fig2_base(0.0, 0.0);
        base.couplings = Couplings::Ratio {
            ratio: 0.95,
            g2: 1e5,
        };
        let spec = SweepSpec::steady(
            base,
            vec![Axis::linspace(AxisName::Theta, -PI, PI, 9).unwrap()],
        );
        let res = run_sweep(&spec).unwrap();
        let e0 = res.rows[0].e_n.unwrap();
        assert!(res.rows.iter().all(|r| r.e_n == Some(e0)));
    }

    #[test]
    fn optimum_on_one_point_grid() {
        let spec = SweepSpec::steady(
            fig2_base(0.0, 0.0),
            vec![Axis::linspace(AxisName::G1OverG2, 0.9, 0.9, 1).unwrap()],
        );
        let opt = find_optimum(&spec, 3).unwrap();
        assert_eq!(opt.point, vec![0.9]);
        let row = &run_sweep(&spec).unwrap().rows[0];
        assert_eq!(Some(opt.e_n), row.e_n);
    }

    #[test]
    fn optimum_needs_a_stable_point() {
        let spec = SweepSpec::steady(
            Scenario::new(1.0, 1.0, 1.0, 1.0, 1.0),
            vec![Axis::list(AxisName::G1, vec![3.0, 4.0]).unwrap()],
        );
        assert_eq!(find_optimum(&spec, 2), Err(Error::NoFeasiblePoint));
    }

    #[test]
    fn optimum_dominates_coarse_grid() {
        let mut base = fig2_base(0.0, 0.0);
        base.couplings = Couplings::Ratio {
            ratio: 0.99,
            g2: 1e5,
        };
        let spec = SweepSpec::steady(
            base,
            vec![Axis::linspace(AxisName::RB, 0.0, 0.99, 11).unwrap()],
        );
        let coarse = run_sweep(&spec).unwrap();
        let opt = find_optimum(&spec, 4).unwrap();
        for r in &coarse.rows {
            assert!(opt.e_n >= r.e_n.unwrap());
        }
        assert!(opt.e_n >= coarse.rows[0].e_n.unwrap());
        let again = find_optimum(&spec, 4).unwrap();
        assert_eq!(opt, again);
    }

    #[test]
    fn local_maxima_detection() {
        assert_eq!(
            local_maxima(&[0.0, 1.0, 0.0, 2.0, 2.0, 1.0, 3.0]),
            vec![1, 3]
        );
        assert!(local_maxima(&[0.0, 1.0, 2.0]).is_empty());
        assert!(local_maxima(&[]).is_empty());
    }

    #[test]
    fn entangled_duration_counts_positive_segments() {
        let t = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(entangled_duration(&t, &[0.0, 0.1, 0.2, 0.0, 0.0]), 1.0);
        assert_eq!(entangled_duration(&t, &[0.1; 5]), 4.0);
    }

    #[test]
    fn presets_resolve() {
        for name in PRESETS {
            let spec = preset(name).unwrap();
            spec.validate().unwrap();
        }
        assert!(preset("fig9").is_err());
        let s = preset("fig3a").unwrap();
        assert_eq!(s.t_grid.len(), DEFAULT_FIG3_T_POINTS);
        assert_eq!(*s.t_grid.last().unwrap(), DEFAULT_FIG3_T_MAX);
    }
}
