//! Command-line front end: flat JSON configs, `--set` overrides, dispatch and
//! exit codes.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::dynamics::{classify_stability, stability_gap, uniform_grid, StateSpace};
use crate::error::{Error, Result};
use crate::experiments::{
    find_optimum, preset, run_sweep, Axis, AxisName, Couplings, Mode, Scenario, SweepSpec,
    DEFAULT_FIG3_T_MAX, DEFAULT_FIG3_T_POINTS, DEFAULT_OMEGA1, DEFAULT_OMEGA2,
    DEFAULT_REFINE_LEVELS,
};
use crate::output::{round_sig, serialize, Cell, Format, Table};
use crate::params::{DriveParams, DEFAULT_RWA_THRESHOLD};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_UNSTABLE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "cfent",
    version,
    about = "Coherent-feedback optomechanical entanglement"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Args)]
pub struct Options {
    /// JSON config file; a previous JSON output is accepted (its meta.config is used).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value = "csv")]
    pub format: String,
    /// key=value overrides, applied after the config file; last wins.
    #[arg(long = "set", global = true, num_args = 1.., value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Emit full E_N(t) curves in evolve-mode sweeps.
    #[arg(long, global = true)]
    pub curves: bool,
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stationary E_N at one operating point.
    Steady,
    /// E_N(t) from the thermal initial state at one operating point.
    Evolve,
    /// Grid sweep over the configured axes.
    Sweep,
    /// Grid search with zoom refinement for the largest stationary E_N.
    Optimize,
    /// Analytic and eigenvalue stability verdicts.
    Stability,
    /// Built-in figure sweeps.
    Preset { name: String },
}

const NUMBER_KEYS: [&str; 24] = [
    "gamma1",
    "gamma2",
    "kappa1",
    "kappa2",
    "G1",
    "G2",
    "G1overG2",
    "Delta",
    "rB",
    "theta",
    "thetaPi",
    "nbar1",
    "nbar2",
    "temperatureK",
    "omega1",
    "omega2",
    "tMax",
    "rwaThreshold",
    "g1",
    "g2",
    "P1",
    "P2",
    "omegaL1",
    "omegaL2",
];
const INTEGER_KEYS: [&str; 2] = ["tPoints", "refineLevels"];
const BOOL_KEYS: [&str; 2] = ["detuningLock", "curves"];
const DRIVE_KEYS: [&str; 6] = ["g1", "g2", "P1", "P2", "omegaL1", "omegaL2"];
const DIRECT_KEYS: [&str; 3] = ["G1", "G2", "G1overG2"];

fn cfg_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        message: message.into(),
    }
}

/// A validated run configuration together with the flat map it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub raw: Map<String, Value>,
    pub scenario: Scenario,
    pub axes: Vec<Axis>,
    pub mode: Mode,
    pub t_max: f64,
    pub t_points: usize,
    pub curves: bool,
    pub refine_levels: usize,
}

impl RunConfig {
    /// Validates `raw`. With `use_axes` unset the axes are checked but may not
    /// stand in for required point parameters.
    pub fn parse(raw: Map<String, Value>, use_axes: bool) -> Result<RunConfig> {
        for (k, v) in &raw {
            let ok = if NUMBER_KEYS.contains(&k.as_str()) {
                v.as_f64().is_some_and(f64::is_finite)
            } else if INTEGER_KEYS.contains(&k.as_str()) {
                v.as_u64().is_some()
            } else if BOOL_KEYS.contains(&k.as_str()) {
                v.is_boolean()
            } else if k == "mode" {
                v.is_string()
            } else if k == "axes" {
                v.is_array()
            } else {
                return Err(cfg_err(k, "unknown key"));
            };
            if !ok {
                return Err(cfg_err(k, format!("invalid value {v}")));
            }
        }
        let num = |k: &str| raw.get(k).and_then(Value::as_f64);
        let has = |k: &str| raw.contains_key(k);

        let axes = parse_axes(raw.get("axes"))?;
        let covered: BTreeSet<AxisName> = if use_axes {
            axes.iter().map(|a| a.name).collect()
        } else {
            BTreeSet::new()
        };

        for (a, b) in [
            ("theta", "thetaPi"),
            ("temperatureK", "nbar1"),
            ("temperatureK", "nbar2"),
            ("G1", "G1overG2"),
        ] {
            if has(a) && has(b) {
                return Err(cfg_err(b, format!("cannot be combined with `{a}`")));
            }
        }

        let drive_given: Vec<&str> = DRIVE_KEYS.iter().copied().filter(|k| has(k)).collect();
        let direct_given: Vec<&str> = DIRECT_KEYS.iter().copied().filter(|k| has(k)).collect();
        if !drive_given.is_empty() && !direct_given.is_empty() {
            return Err(cfg_err(
                direct_given[0],
                "give either G1/G2 or the g/P/omegaL block, not both",
            ));
        }
        let couplings = if !drive_given.is_empty() {
            if let Some(missing) = DRIVE_KEYS.iter().find(|k| !has(k)) {
                return Err(cfg_err(missing, "missing from the g/P/omegaL block"));
            }
            for a in &axes {
                if matches!(a.name, AxisName::G1 | AxisName::G2 | AxisName::G1OverG2) {
                    return Err(cfg_err(
                        "axes",
                        format!("axis {} needs G1/G2 couplings", a.name),
                    ));
                }
            }
            let d = DriveParams {
                g1: num("g1").unwrap(),
                g2: num("g2").unwrap(),
                p1: num("P1").unwrap(),
                p2: num("P2").unwrap(),
                omega_l1: num("omegaL1").unwrap(),
                omega_l2: num("omegaL2").unwrap(),
            };
            for k in ["P1", "P2"] {
                if num(k).unwrap() < 0.0 {
                    return Err(cfg_err(k, "pump power must be nonnegative"));
                }
            }
            for k in ["omegaL1", "omegaL2"] {
                if num(k).unwrap() <= 0.0 {
                    return Err(cfg_err(k, "laser frequency must be positive"));
                }
            }
            Couplings::Drive(d)
        } else {
            let g2 = match num("G2") {
                Some(v) => v,
                None if covered.contains(&AxisName::G2) => 0.0,
                None => return Err(cfg_err("G2", "missing")),
            };
            if let Some(r) = num("G1overG2") {
                Couplings::Ratio { ratio: r, g2 }
            } else if let Some(g1) = num("G1") {
                Couplings::Direct { g1, g2 }
            } else if covered.contains(&AxisName::G1) || covered.contains(&AxisName::G1OverG2) {
                Couplings::Direct { g1: 0.0, g2 }
            } else {
                return Err(cfg_err("G1", "missing (or give G1overG2)"));
            }
        };

        let mut s = Scenario::new(0.0, 0.0, 0.0, 0.0, 0.0);
        s.couplings = couplings;
        s.omega1 = num("omega1").unwrap_or(DEFAULT_OMEGA1);
        s.omega2 = num("omega2").unwrap_or(DEFAULT_OMEGA2);
        s.gamma1 = num("gamma1").unwrap_or(0.0);
        s.gamma2 = num("gamma2").unwrap_or(0.0);
        s.kappa1 = num("kappa1").unwrap_or(0.0);
        s.kappa2 = num("kappa2").unwrap_or(0.0);
        s.delta = num("Delta").unwrap_or(0.0);
        s.temperature = num("temperatureK").unwrap_or(0.0);
        s.nbar1 = num("nbar1");
        s.nbar2 = num("nbar2");
        s.r_b = num("rB").unwrap_or(0.0);
        s.theta = match num("thetaPi") {
            Some(v) => v * std::f64::consts::PI,
            None => num("theta").unwrap_or(0.0),
        };
        s.detuning_lock = raw
            .get("detuningLock")
            .and_then(Value::as_bool)
            .unwrap_or(false);
        s.rwa_threshold = num("rwaThreshold").unwrap_or(DEFAULT_RWA_THRESHOLD);

        for k in [
            "gamma1",
            "gamma2",
            "kappa1",
            "kappa2",
            "temperatureK",
            "nbar1",
            "nbar2",
        ] {
            if num(k).is_some_and(|v| v < 0.0) {
                return Err(cfg_err(k, "must be nonnegative"));
            }
        }
        for k in ["omega1", "omega2", "rwaThreshold"] {
            if num(k).is_some_and(|v| v <= 0.0) {
                return Err(cfg_err(k, "must be positive"));
            }
        }
        if s.omega1 == s.omega2 {
            return Err(cfg_err("omega2", "mechanical frequencies must differ"));
        }
        if !(0.0..=1.0).contains(&s.r_b) {
            return Err(cfg_err("rB", "must lie in [0, 1]"));
        }
        let dissipation_swept = [
            AxisName::Gamma1,
            AxisName::Gamma2,
            AxisName::Kappa1,
            AxisName::Kappa2,
        ]
        .iter()
        .any(|a| covered.contains(a));
        if !dissipation_swept && s.gamma1 + s.gamma2 + s.kappa1 + s.kappa2 == 0.0 {
            return Err(cfg_err(
                "gamma1/gamma2/kappa1/kappa2",
                "zero total dissipation: the model has no steady state or physical dynamics",
            ));
        }

        let mode = match raw.get("mode").and_then(Value::as_str) {
            None | Some("steady") => Mode::Steady,
            Some("evolve") => Mode::Evolve,
            Some(m) => {
                return Err(cfg_err(
                    "mode",
                    format!("expected steady or evolve, got `{m}`"),
                ))
            }
        };
        let t_max = num("tMax").unwrap_or(DEFAULT_FIG3_T_MAX);
        if t_max <= 0.0 {
            return Err(cfg_err("tMax", "must be positive"));
        }
        let t_points = raw
            .get("tPoints")
            .and_then(Value::as_u64)
            .map_or(DEFAULT_FIG3_T_POINTS, |n| n as usize);
        if t_points < 2 {
            return Err(cfg_err("tPoints", "need at least two time points"));
        }

        let cfg = RunConfig {
            scenario: s,
            axes,
            mode,
            t_max,
            t_points,
            curves: raw.get("curves").and_then(Value::as_bool).unwrap_or(false),
            refine_levels: raw
                .get("refineLevels")
                .and_then(Value::as_u64)
                .map_or(DEFAULT_REFINE_LEVELS, |n| n as usize),
            raw,
        };
        cfg.spec(Mode::Steady, true)
            .validate()
            .map_err(|e| cfg_err("axes", e.to_string()))?;
        Ok(cfg)
    }

    pub fn t_grid(&self) -> Result<Vec<f64>> {
        uniform_grid(self.t_max, self.t_points)
    }

    pub fn spec(&self, mode: Mode, with_axes: bool) -> SweepSpec {
        SweepSpec {
            base: self.scenario,
            axes: if with_axes {
                self.axes.clone()
            } else {
                Vec::new()
            },
            mode,
            t_grid: if mode == Mode::Evolve {
                self.t_grid().unwrap_or_default()
            } else {
                Vec::new()
            },
            curves: self.curves,
        }
    }
}

fn parse_axes(v: Option<&Value>) -> Result<Vec<Axis>> {
    let Some(v) = v else { return Ok(Vec::new()) };
    let items = v
        .as_array()
        .ok_or_else(|| cfg_err("axes", "expected an array"))?;
    if items.len() > 2 {
        return Err(cfg_err("axes", "at most two axes"));
    }
    let mut out = Vec::new();
    for item in items {
        let obj = item
            .as_object()
            .ok_or_else(|| cfg_err("axes", "each axis is an object"))?;
        for k in obj.keys() {
            if !["name", "min", "max", "count", "values"].contains(&k.as_str()) {
                return Err(cfg_err(&format!("axes.{k}"), "unknown key"));
            }
        }
        let name: AxisName = obj
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| cfg_err("axes.name", "missing"))?
            .parse()
            .map_err(|e: Error| cfg_err("axes.name", e.to_string()))?;
        let axis = if let Some(vals) = obj.get("values") {
            if obj.contains_key("min") || obj.contains_key("max") || obj.contains_key("count") {
                return Err(cfg_err(
                    "axes.values",
                    "give values or min/max/count, not both",
                ));
            }
            let vals = vals
                .as_array()
                .ok_or_else(|| cfg_err("axes.values", "expected an array"))?
                .iter()
                .map(|x| {
                    x.as_f64()
                        .ok_or_else(|| cfg_err("axes.values", "expected numbers"))
                })
                .collect::<Result<Vec<f64>>>()?;
            Axis::list(name, vals)
        } else {
            let get = |k: &str| {
                obj.get(k)
                    .and_then(Value::as_f64)
                    .ok_or_else(|| cfg_err(&format!("axes.{k}"), "missing or not a number"))
            };
            let count = match obj.get("count") {
                None => crate::experiments::DEFAULT_GRID_POINTS,
                Some(c) => c
                    .as_u64()
                    .ok_or_else(|| cfg_err("axes.count", "expected a positive integer"))?
                    as usize,
            };
            Axis::linspace(name, get("min")?, get("max")?, count)
        };
        out.push(axis.map_err(|e| cfg_err("axes", e.to_string()))?);
    }
    Ok(out)
}

/// Flat config map describing `spec`; parsing it back yields the same spec.
pub fn config_from_spec(spec: &SweepSpec) -> Map<String, Value> {
    let s = &spec.base;
    let mut m = Map::new();
    let mut put = |k: &str, v: Value| {
        m.insert(k.into(), v);
    };
    match s.couplings {
        Couplings::Direct { g1, g2 } => {
            put("G1", json!(g1));
            put("G2", json!(g2));
        }
        Couplings::Ratio { ratio, g2 } => {
            put("G1overG2", json!(ratio));
            put("G2", json!(g2));
        }
        Couplings::Drive(d) => {
            put("g1", json!(d.g1));
            put("g2", json!(d.g2));
            put("P1", json!(d.p1));
            put("P2", json!(d.p2));
            put("omegaL1", json!(d.omega_l1));
            put("omegaL2", json!(d.omega_l2));
        }
    }
    put("omega1", json!(s.omega1));
    put("omega2", json!(s.omega2));
    put("gamma1", json!(s.gamma1));
    put("gamma2", json!(s.gamma2));
    put("kappa1", json!(s.kappa1));
    put("kappa2", json!(s.kappa2));
    put("Delta", json!(s.delta));
    match (s.nbar1, s.nbar2) {
        (None, None) => put("temperatureK", json!(s.temperature)),
        (n1, n2) => {
            if let Some(n) = n1 {
                put("nbar1", json!(n));
            }
            if let Some(n) = n2 {
                put("nbar2", json!(n));
            }
        }
    }
    put("rB", json!(s.r_b));
    put("theta", json!(s.theta));
    put("detuningLock", json!(s.detuning_lock));
    put("rwaThreshold", json!(s.rwa_threshold));
    put(
        "mode",
        json!(match spec.mode {
            Mode::Steady => "steady",
            Mode::Evolve => "evolve",
        }),
    );
    if spec.mode == Mode::Evolve {
        if let (Some(first), Some(last)) = (spec.t_grid.first(), spec.t_grid.last()) {
            debug_assert_eq!(*first, 0.0);
            put("tMax", json!(last));
            put("tPoints", json!(spec.t_grid.len()));
        }
        put("curves", json!(spec.curves));
    }
    let axes: Vec<Value> = spec
        .axes
        .iter()
        .map(|a| json!({"name": a.name.as_str(), "values": a.values}))
        .collect();
    put("axes", Value::Array(axes));
    m
}

/// `key=value`, the value read as JSON when possible and as a string otherwise.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| cfg_err(s, "override must look like key=value"))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(cfg_err(s, "empty key"));
    }
    let v = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_owned()));
    Ok((k.to_owned(), v))
}

fn read_config(path: &PathBuf) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| cfg_err("--config", format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| cfg_err("--config", format!("{}: {e}", path.display())))?;
    let v = match v.get("meta").and_then(|m| m.get("config")) {
        Some(c) => c.clone(),
        None => v,
    };
    match v {
        Value::Object(m) => Ok(m),
        _ => Err(cfg_err("--config", "top level must be a JSON object")),
    }
}

/// Merges `base` < config file < `--set` overrides.
pub fn resolve_map(base: Map<String, Value>, opts: &Options) -> Result<Map<String, Value>> {
    let mut map = base;
    if let Some(p) = &opts.config {
        map.extend(read_config(p)?);
    }
    for s in &opts.set {
        let (k, v) = parse_override(s)?;
        map.insert(k, v);
    }
    Ok(map)
}

/// Rendered output of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub table: Table,
    pub meta: Value,
}

fn base_meta(command: &str, cfg: &RunConfig) -> Value {
    let mut meta = json!({
        "command": command,
        "config": Value::Object(cfg.raw.clone()),
        "mode": match cfg.mode { Mode::Steady => "steady", Mode::Evolve => "evolve" },
    });
    if let Ok((model, report)) = cfg.scenario.model() {
        meta["kappaTilde"] = json!(round_sig(model.kappa_tilde));
        meta["DeltaTilde"] = json!(round_sig(model.delta_tilde));
        meta["G1"] = json!(round_sig(model.g1));
        meta["G2"] = json!(round_sig(model.g2));
        meta["nbar1"] = json!(round_sig(model.nbar1));
        meta["nbar2"] = json!(round_sig(model.nbar2));
        meta["rwa"] = json!(report.verdict.as_str());
        meta["rwaRatio"] = json!(round_sig(report.ratio));
        if let Some(p) = report.coupling_phases {
            meta["couplingPhases"] = json!(p);
        }
    }
    meta
}

fn point_row_error(table: &Table) -> Option<String> {
    let col = table.columns.iter().position(|c| c == "error")?;
    table.rows.iter().find_map(|r| match &r[col] {
        Cell::Text(s) => Some(s.clone()),
        _ => None,
    })
}

/// Runs a command and returns its table; no I/O beyond reading the config.
pub fn execute(command: &Command, opts: &Options) -> Result<Report> {
    match command {
        Command::Steady => {
            let cfg = RunConfig::parse(resolve_map(Map::new(), opts)?, false)?;
            let res = run_sweep(&cfg.spec(Mode::Steady, false))?;
            let row = &res.rows[0];
            if !row.stable {
                let (model, _) = cfg.scenario.model()?;
                let r = classify_stability(StateSpace::from_model(&model).drift());
                return Err(Error::Unstable {
                    verdict: r.verdict.as_str(),
                    abscissa: r.abscissa,
                });
            }
            let table = Table::from_sweep(&res, false);
            if let Some(e) = point_row_error(&table) {
                return Err(Error::Numerical {
                    message: e,
                    condition: f64::NAN,
                });
            }
            Ok(Report {
                meta: base_meta("steady", &cfg),
                table,
            })
        }
        Command::Evolve => {
            let cfg = RunConfig::parse(resolve_map(Map::new(), opts)?, false)?;
            let mut spec = cfg.spec(Mode::Evolve, false);
            spec.curves = true;
            let res = run_sweep(&spec)?;
            let table = Table::from_sweep(&res, true);
            if let Some(e) = point_row_error(&table) {
                return Err(Error::Numerical {
                    message: e,
                    condition: f64::NAN,
                });
            }
            Ok(Report {
                meta: base_meta("evolve", &cfg),
                table,
            })
        }
        Command::Sweep => {
            let cfg = RunConfig::parse(resolve_map(Map::new(), opts)?, true)?;
            sweep_report("sweep", &cfg, opts.curves)
        }
        Command::Preset { name } => {
            let spec = preset(name).map_err(|e| cfg_err("preset", e.to_string()))?;
            let cfg = RunConfig::parse(resolve_map(config_from_spec(&spec), opts)?, true)?;
            let mut report = sweep_report("preset", &cfg, opts.curves)?;
            report.meta["preset"] = json!(name);
            Ok(report)
        }
        Command::Optimize => {
            let cfg = RunConfig::parse(resolve_map(Map::new(), opts)?, true)?;
            if cfg.axes.is_empty() {
                return Err(cfg_err("axes", "optimize needs one or two axes"));
            }
            let spec = cfg.spec(Mode::Steady, true);
            let opt = find_optimum(&spec, cfg.refine_levels)?;
            let scenario = spec.scenario_at(&opt.point)?;
            let (model, report) = scenario.model()?;
            let mut cols: Vec<&str> = cfg.axes.iter().map(|a| a.name.as_str()).collect();
            cols.extend(["EN", "kappaTilde", "DeltaTilde", "rwa"]);
            let mut table = Table::new(&cols);
            let mut cells: Vec<Cell> = opt.point.iter().map(|&v| Cell::num(Some(v))).collect();
            cells.extend([
                Cell::num(Some(opt.e_n)),
                Cell::num(Some(model.kappa_tilde)),
                Cell::num(Some(model.delta_tilde)),
                Cell::Text(report.verdict.as_str().into()),
            ]);
            table.push(cells);
            let mut meta = base_meta("optimize", &cfg);
            meta["refineLevels"] = json!(cfg.refine_levels);
            Ok(Report { table, meta })
        }
        Command::Stability => {
            let cfg = RunConfig::parse(resolve_map(Map::new(), opts)?, false)?;
            let (model, report) = cfg.scenario.model()?;
            let eig = classify_stability(StateSpace::from_model(&model).drift());
            let gap = stability_gap(&model);
            let mut table = Table::new(&[
                "analytic",
                "eigen",
                "verdict",
                "abscissa",
                "gap",
                "kappaTilde",
                "DeltaTilde",
                "rwa",
                "error",
            ]);
            table.push(vec![
                match &gap {
                    Ok(g) => Cell::Bool(*g > 0.0),
                    Err(_) => Cell::Empty,
                },
                Cell::Bool(eig.verdict == crate::dynamics::StabilityVerdict::Stable),
                Cell::Text(eig.verdict.as_str().into()),
                Cell::num(Some(eig.abscissa)),
                Cell::num(gap.as_ref().ok().copied()),
                Cell::num(Some(model.kappa_tilde)),
                Cell::num(Some(model.delta_tilde)),
                Cell::Text(report.verdict.as_str().into()),
                Cell::text(gap.as_ref().err().map(|e| e.to_string()).as_deref()),
            ]);
            Ok(Report {
                meta: base_meta("stability", &cfg),
                table,
            })
        }
    }
}

fn sweep_report(command: &str, cfg: &RunConfig, curves_flag: bool) -> Result<Report> {
    let mut spec = cfg.spec(cfg.mode, true);
    spec.curves |= curves_flag;
    let res = run_sweep(&spec)?;
    let mut meta = base_meta(command, cfg);
    meta["axes"] = json!(cfg.axes.iter().map(|a| a.name.as_str()).collect::<Vec<_>>());
    Ok(Report {
        table: Table::from_sweep(&res, spec.curves),
        meta,
    })
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Domain(_) | Error::Singularity { .. } => EXIT_CONFIG,
        Error::Unstable { .. } | Error::NoFeasiblePoint => EXIT_UNSTABLE,
        _ => EXIT_NUMERICAL,
    }
}

fn emit(bytes: &[u8], out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::Io(e.to_string())),
    }
}

/// Full entry point; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = cli.opts.format.parse::<Format>().and_then(|format| {
        let report = execute(&cli.command, &cli.opts)?;
        let bytes = serialize(&report.table, &report.meta, format)?;
        emit(&bytes, cli.opts.out.as_ref())?;
        Ok(report.table.rows.len())
    });
    match result {
        Ok(rows) => {
            if !cli.opts.quiet {
                if let Some(p) = &cli.opts.out {
                    eprintln!("wrote {rows} rows to {}", p.display());
                }
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    fn key_of(e: Error) -> String {
        match e {
            Error::Config { key, .. } => key,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn overrides_parse_as_json_then_string() {
        assert_eq!(parse_override("rB=0.5").unwrap(), ("rB".into(), json!(0.5)));
        assert_eq!(
            parse_override("mode=evolve").unwrap(),
            ("mode".into(), json!("evolve"))
        );
        assert_eq!(
            parse_override("detuningLock=true").unwrap(),
            ("detuningLock".into(), json!(true))
        );
        assert_eq!(parse_override("a=b=c").unwrap().1, json!("b=c"));
        assert!(parse_override("novalue").is_err());
    }

    #[test]
    fn unknown_and_mistyped_keys_are_named() {
        let base = json!({"G1": 1.0, "G2": 2.0, "kappa1": 1.0});
        let mut m = map(base.clone());
        m.insert("kapa2".into(), json!(1.0));
        assert_eq!(key_of(RunConfig::parse(m, false).unwrap_err()), "kapa2");
        let mut m = map(base);
        m.insert("rB".into(), json!("high"));
        assert_eq!(key_of(RunConfig::parse(m, false).unwrap_err()), "rB");
    }

    #[test]
    fn exclusive_blocks() {
        let cases = [
            (
                json!({"G1": 1, "G2": 2, "kappa1": 1, "theta": 0, "thetaPi": 0}),
                "thetaPi",
            ),
            (
                json!({"G1": 1, "G2": 2, "kappa1": 1, "temperatureK": 0, "nbar1": 0}),
                "nbar1",
            ),
            (
                json!({"G1": 1, "G2": 2, "kappa1": 1, "g1": 1, "g2": 1, "P1": 1,
                       "P2": 1, "omegaL1": 1, "omegaL2": 1}),
                "G1",
            ),
            (json!({"g1": 1, "g2": 1, "P1": 1, "kappa1": 1}), "P2"),
            (json!({"G2": 2, "kappa1": 1}), "G1"),
            (json!({"G1": 1, "G2": 2, "kappa1": 1, "rB": 1.5}), "rB"),
            (
                json!({"G1": 1, "G2": 2, "kappa1": 1, "mode": "fast"}),
                "mode",
            ),
        ];
        for (v, key) in cases {
            assert_eq!(key_of(RunConfig::parse(map(v), false).unwrap_err()), key);
        }
    }

    #[test]
    fn zero_dissipation_rejected() {
        let m = map(json!({"G1": 1, "G2": 2, "kappa1": 0, "kappa2": 0, "gamma1": 0, "gamma2": 0}));
        let e = RunConfig::parse(m, false).unwrap_err();
        assert_eq!(exit_code(&e), EXIT_CONFIG);
    }

    #[test]
    fn axes_can_supply_couplings_only_for_sweeps() {
        let m = map(
            json!({"G2": 1e5, "kappa1": 5e4, "kappa2": 5e4, "gamma1": 10, "gamma2": 10,
                           "axes": [{"name": "G1overG2", "min": 0.8, "max": 0.9, "count": 3}]}),
        );
        let cfg = RunConfig::parse(m.clone(), true).unwrap();
        assert_eq!(cfg.axes[0].values.len(), 3);
        assert_eq!(key_of(RunConfig::parse(m, false).unwrap_err()), "G1");
    }

    #[test]
    fn preset_configs_round_trip() {
        for name in crate::experiments::PRESETS {
            let spec = preset(name).unwrap();
            let cfg = RunConfig::parse(config_from_spec(&spec), true).unwrap();
            let back = cfg.spec(cfg.mode, true);
            assert_eq!(back, spec, "{name}");
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&cfg_err("x", "y")), 2);
        assert_eq!(
            exit_code(&Error::Unstable {
                verdict: "unstable",
                abscissa: 1.0
            }),
            3
        );
        assert_eq!(exit_code(&Error::Io("x".into())), 4);
        assert_eq!(exit_code(&Error::Divergence { step: 3 }), 4);
    }
}
