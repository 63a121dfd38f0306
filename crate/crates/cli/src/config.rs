//! Experiment configuration: TOML schema, preset expansion and validation.
//!
//! A config file holds the run-wide keys (`mode`, `preset`, `output_dir`,
//! `strict`), shared sections (`system`, `bath`, `tempo`, `rc`, `field`),
//! an optional `sweep` section and optional `[[panel]]` entries. Each panel
//! resolves as preset panel < shared sections < matching `[[panel]]` entry.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use structured_tempo::model::map_dimer_to_spin;
use structured_tempo::DimerParams;

use crate::preset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Tempo,
    Rc,
    Compare,
    BathField,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Fig2,
    Fig4,
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fig2" => Ok(Preset::Fig2),
            "fig4" => Ok(Preset::Fig4),
            _ => Err(format!("unknown preset `{s}` (expected fig2 or fig4)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    #[default]
    Up,
    Down,
    Plus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSection {
    pub omega: f64,
    #[serde(default)]
    pub eps: f64,
    #[serde(default)]
    pub initial_state: Initial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    Underdamped {
        alpha: f64,
        omega0: f64,
        gamma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<f64>,
    },
    CommonEnvironment {
        #[serde(rename = "R")]
        r: f64,
        base: Box<DensitySpec>,
    },
    Scaled {
        factor: f64,
        base: Box<DensitySpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathSection {
    pub temperature: f64,
    pub density: DensitySpec,
}

fn default_quad_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TempoSection {
    pub dt: f64,
    pub chi: f64,
    pub n_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_cutoff: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_bond: Option<usize>,
    /// Aborts the run (exit 4) when a bond exceeds this extent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bond_budget: Option<usize>,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
    #[serde(default)]
    pub dump_eta: bool,
}

impl TempoSection {
    pub fn t_end(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RcSection {
    /// First Fock truncation tried; the thermal estimate when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_trunc: Option<usize>,
    pub n_step: usize,
    pub n_max: usize,
    /// Sup-norm change in `⟨σz⟩` accepted as converged.
    pub conv_tol: f64,
    /// Relative integrator tolerance; the absolute one is `10⁻³·ode_tol`.
    pub ode_tol: f64,
    /// Top Fock population above the threshold is an error, not a warning.
    pub strict: bool,
}

impl Default for RcSection {
    fn default() -> Self {
        Self {
            n_trunc: None,
            n_step: 2,
            n_max: 80,
            conv_tol: 1e-3,
            ode_tol: 1e-9,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldSection {
    /// Defaults to `−3R`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    /// Defaults to `3R`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    pub nx: usize,
    pub nt: usize,
    pub quad_tol: f64,
}

impl Default for FieldSection {
    fn default() -> Self {
        Self {
            x_min: None,
            x_max: None,
            nx: 121,
            nt: 101,
            quad_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    /// Dotted path of a numeric panel key, e.g. `tempo.dt`.
    pub param: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelConfig {
    pub name: String,
    pub system: SystemSection,
    pub bath: BathSection,
    pub tempo: TempoSection,
    #[serde(default)]
    pub rc: RcSection,
    #[serde(default)]
    pub field: FieldSection,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub strict: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(rename = "panel")]
    pub panels: Vec<PanelConfig>,
}

impl ExperimentConfig {
    /// The resolved config as TOML; feeding it back through
    /// [`validate_config`] reproduces `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Every problem found in a config, each prefixed by its field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

const TOP_KEYS: [&str; 12] = [
    "mode", "preset", "output_dir", "strict", "system", "dimer", "bath", "tempo", "rc", "field", "sweep", "panel",
];
const SECTIONS: [&str; 6] = ["system", "dimer", "bath", "tempo", "rc", "field"];

pub fn parse_raw(raw: &str) -> Result<Table, ConfigErrors> {
    raw.parse::<Table>()
        .map_err(|e| ConfigErrors(vec![format!("syntax: {}", e.message())]))
}

pub fn validate_config(raw: &str) -> Result<ExperimentConfig, ConfigErrors> {
    resolve(parse_raw(raw)?)
}

/// Expands presets and panels, deserializes and range-checks everything.
pub fn resolve(table: Table) -> Result<ExperimentConfig, ConfigErrors> {
    let mut errors = Vec::new();
    for key in table.keys() {
        if !TOP_KEYS.contains(&key.as_str()) {
            errors.push(format!("{key}: unknown key"));
        }
    }

    let preset = match table.get("preset") {
        None => None,
        Some(Value::String(s)) => s.parse::<Preset>().map_err(|e| errors.push(format!("preset: {e}"))).ok(),
        Some(_) => {
            errors.push("preset: expected a string".into());
            None
        }
    };
    let mode = match table.get("mode") {
        None => match preset {
            Some(p) => Some(preset::mode(p)),
            None => {
                errors.push("mode: missing (one of tempo, rc, compare, bath_field, sweep)".into());
                None
            }
        },
        Some(v) => Mode::deserialize(v.clone())
            .map_err(|e| errors.push(format!("mode: {}", e.message())))
            .ok(),
    };
    let output_dir = match table.get("output_dir") {
        None => None,
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(_) => {
            errors.push("output_dir: expected a string".into());
            None
        }
    };
    let strict = match table.get("strict") {
        None => false,
        Some(Value::Boolean(b)) => *b,
        Some(_) => {
            errors.push("strict: expected a boolean".into());
            false
        }
    };
    let sweep = table.get("sweep").and_then(|v| deserialize_checked::<SweepSection>(v, "sweep", &mut errors));

    let mut shared = Table::new();
    for s in SECTIONS {
        if let Some(v) = table.get(s) {
            shared.insert(s.to_string(), v.clone());
        }
    }
    let user_panels: Vec<Table> = match table.get("panel") {
        None => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .filter_map(|(i, v)| match v {
                Value::Table(t) => Some(t.clone()),
                _ => {
                    errors.push(format!("panel[{i}]: expected a table"));
                    None
                }
            })
            .collect(),
        Some(_) => {
            errors.push("panel: expected an array of tables".into());
            Vec::new()
        }
    };

    let merged = merge_panels(preset, &shared, &user_panels, &mut errors);
    let mut panels = Vec::new();
    let mut names = BTreeSet::new();
    for (label, t) in &merged {
        let mut t = t.clone();
        let separation = dimer_to_system(&mut t, label, &mut errors);
        // Densities are parsed by hand so that unknown keys inside them do
        // not mask errors elsewhere in the panel.
        let density = t
            .get_mut("bath")
            .and_then(Value::as_table_mut)
            .and_then(|b| b.remove("density"))
            .map(|d| parse_density(&d, &format!("{label}.bath.density"), &mut errors));
        let density_ok = !matches!(density, Some(None));
        if let (Some(Some(d)), Some(Value::Table(b))) = (&density, t.get_mut("bath")) {
            b.insert("density".into(), Value::try_from(d).expect("density serializes"));
        }
        let parsed = deserialize_checked::<PanelConfig>(&Value::Table(t), label, &mut errors);
        if let (Some(p), true) = (parsed, density_ok) {
            if !names.insert(p.name.clone()) {
                errors.push(format!("{label}.name: duplicate panel name `{}`", p.name));
            }
            check_panel(&p, label, mode, &mut errors);
            if let (Some(r), DensitySpec::CommonEnvironment { r: rd, .. }) = (separation, &p.bath.density) {
                if (r - rd).abs() > 1e-12 * r.max(*rd) {
                    errors.push(format!("{label}.dimer: site separation {r} differs from bath.density.R = {rd}"));
                }
            }
            panels.push(p);
        }
    }
    if let (Some(s), Some(_)) = (&sweep, mode) {
        check_sweep(s, &mut errors);
    }
    if mode == Some(Mode::Sweep) && sweep.is_none() {
        errors.push("sweep: required in sweep mode".into());
    }

    if !errors.is_empty() {
        let mut seen = BTreeSet::new();
        errors.retain(|e| seen.insert(e.clone()));
        return Err(ConfigErrors(errors));
    }
    Ok(ExperimentConfig {
        mode: mode.expect("checked"),
        preset,
        output_dir,
        strict,
        sweep,
        panels,
    })
}

/// `(label, table)` per panel in output order.
fn merge_panels(
    preset: Option<Preset>,
    shared: &Table,
    user: &[Table],
    errors: &mut Vec<String>,
) -> Vec<(String, Table)> {
    let label = |t: &Table, i: usize| match t.get("name") {
        Some(Value::String(s)) => format!("panel[{s}]"),
        _ => format!("panel[{i}]"),
    };
    match preset {
        Some(p) => {
            let mut out: Vec<(String, Table)> = preset::panels(p)
                .into_iter()
                .map(|t| {
                    let mut t = t;
                    deep_merge(&mut t, shared);
                    (label(&t, 0), t)
                })
                .collect();
            for (i, u) in user.iter().enumerate() {
                let target = out.iter_mut().find(|(_, t)| t.get("name").is_some() && t.get("name") == u.get("name"));
                match target {
                    Some((_, t)) => deep_merge(t, u),
                    None => errors.push(format!("{}.name: no such panel in preset", label(u, i))),
                }
            }
            out
        }
        None if user.is_empty() => {
            let mut t = Table::new();
            t.insert("name".into(), Value::String("main".into()));
            deep_merge(&mut t, shared);
            vec![("panel[main]".into(), t)]
        }
        None => user
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let mut t = shared.clone();
                deep_merge(&mut t, u);
                (label(&t, i), t)
            })
            .collect(),
    }
}

/// Recursive table merge where `over` wins. A table whose `kind` differs
/// from the base's replaces it instead of merging.
pub fn deep_merge(base: &mut Table, over: &Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(o)) if b.get("kind").is_none() || o.get("kind").is_none() || b.get("kind") == o.get("kind") => {
                deep_merge(b, o)
            }
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

fn deserialize_checked<T: serde::de::DeserializeOwned>(v: &Value, label: &str, errors: &mut Vec<String>) -> Option<T> {
    let mut unknown = Vec::new();
    let out = serde_ignored::deserialize(v.clone(), |path| unknown.push(path.to_string()));
    for path in unknown {
        errors.push(format!("{label}.{path}: unknown key"));
    }
    match out {
        Ok(x) => Some(x),
        Err(e) => {
            let e: toml::de::Error = e;
            errors.push(format!("{label}: {}", e.message().trim()));
            None
        }
    }
}

#[derive(Deserialize)]
struct DimerKeys {
    eps1: f64,
    eps2: f64,
    omega: f64,
    r1: f64,
    r2: f64,
    #[serde(default)]
    initial_state: Initial,
}

/// Replaces a `dimer` section by the equivalent `system` section and
/// returns the site separation.
fn dimer_to_system(t: &mut Table, label: &str, errors: &mut Vec<String>) -> Option<f64> {
    let d = t.remove("dimer")?;
    if t.contains_key("system") {
        errors.push(format!("{label}: give either system or dimer, not both"));
        return None;
    }
    let k: DimerKeys = deserialize_checked(&d, &format!("{label}.dimer"), errors)?;
    let spin = map_dimer_to_spin(&DimerParams {
        eps1: k.eps1,
        eps2: k.eps2,
        omega: k.omega,
        r1: k.r1,
        r2: k.r2,
    });
    let system = SystemSection {
        omega: spin.omega,
        eps: spin.eps,
        initial_state: k.initial_state,
    };
    t.insert("system".into(), Value::try_from(system).expect("system serializes"));
    spin.separation
}

#[derive(Deserialize)]
struct UnderdampedKeys {
    alpha: f64,
    omega0: f64,
    gamma: f64,
    #[serde(default)]
    cutoff: Option<f64>,
}

#[derive(Deserialize)]
struct CommonKeys {
    #[serde(rename = "R")]
    r: f64,
}

#[derive(Deserialize)]
struct ScaledKeys {
    factor: f64,
}

fn parse_density(v: &Value, path: &str, errors: &mut Vec<String>) -> Option<DensitySpec> {
    let Some(t) = v.as_table() else {
        errors.push(format!("{path}: expected a table"));
        return None;
    };
    let mut rest = t.clone();
    let kind = match rest.remove("kind") {
        Some(Value::String(k)) => k,
        Some(_) => {
            errors.push(format!("{path}.kind: expected a string"));
            return None;
        }
        None => {
            errors.push(format!("{path}.kind: missing (underdamped, common_environment or scaled)"));
            return None;
        }
    };
    let base = |rest: &mut Table, errors: &mut Vec<String>| match rest.remove("base") {
        Some(b) => parse_density(&b, &format!("{path}.base"), errors).map(Box::new),
        None => {
            errors.push(format!("{path}.base: missing"));
            None
        }
    };
    match kind.as_str() {
        "underdamped" => {
            let k: UnderdampedKeys = deserialize_checked(&Value::Table(rest), path, errors)?;
            Some(DensitySpec::Underdamped {
                alpha: k.alpha,
                omega0: k.omega0,
                gamma: k.gamma,
                cutoff: k.cutoff,
            })
        }
        "common_environment" => {
            let b = base(&mut rest, errors);
            let k: Option<CommonKeys> = deserialize_checked(&Value::Table(rest), path, errors);
            Some(DensitySpec::CommonEnvironment { r: k?.r, base: b? })
        }
        "scaled" => {
            let b = base(&mut rest, errors);
            let k: Option<ScaledKeys> = deserialize_checked(&Value::Table(rest), path, errors);
            Some(DensitySpec::Scaled { factor: k?.factor, base: b? })
        }
        other => {
            errors.push(format!(
                "{path}.kind: unknown kind `{other}` (underdamped, common_environment or scaled)"
            ));
            None
        }
    }
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

fn check_density(d: &DensitySpec, path: &str, errors: &mut Vec<String>) {
    match d {
        DensitySpec::Underdamped { alpha, omega0, gamma, cutoff } => {
            for (k, v) in [("alpha", alpha), ("omega0", omega0), ("gamma", gamma)] {
                if !positive(*v) {
                    errors.push(format!("{path}.{k}: must be > 0, got {v}"));
                }
            }
            if let Some(c) = cutoff {
                if !positive(*c) {
                    errors.push(format!("{path}.cutoff: must be > 0, got {c}"));
                }
            }
        }
        DensitySpec::CommonEnvironment { r, base } => {
            if !positive(*r) {
                errors.push(format!("{path}.R: must be > 0, got {r}"));
            }
            check_density(base, &format!("{path}.base"), errors);
        }
        DensitySpec::Scaled { factor, base } => {
            if !positive(*factor) {
                errors.push(format!("{path}.factor: must be > 0, got {factor}"));
            }
            check_density(base, &format!("{path}.base"), errors);
        }
    }
}

fn check_panel(p: &PanelConfig, label: &str, mode: Option<Mode>, errors: &mut Vec<String>) {
    if !(p.system.omega.is_finite() && p.system.eps.is_finite()) {
        errors.push(format!("{label}.system: omega and eps must be finite"));
    }
    let b = &p.bath;
    if !(b.temperature.is_finite() && b.temperature >= 0.0) {
        errors.push(format!("{label}.bath.temperature: must be ≥ 0, got {}", b.temperature));
    }
    check_density(&b.density, &format!("{label}.bath.density"), errors);
    let t = &p.tempo;
    if !positive(t.dt) {
        errors.push(format!("{label}.tempo.dt: must be > 0, got {}", t.dt));
    }
    if !(t.chi > 0.0 && t.chi < 1.0) {
        errors.push(format!("{label}.tempo.chi: must lie in (0, 1), got {}", t.chi));
    }
    if t.n_steps == 0 {
        errors.push(format!("{label}.tempo.n_steps: must be ≥ 1"));
    }
    if t.memory_cutoff == Some(0) {
        errors.push(format!("{label}.tempo.memory_cutoff: must be ≥ 1"));
    }
    if t.max_bond == Some(0) {
        errors.push(format!("{label}.tempo.max_bond: must be ≥ 1"));
    }
    if !positive(t.quad_tol) {
        errors.push(format!("{label}.tempo.quad_tol: must be > 0"));
    }
    let rc = &p.rc;
    if rc.n_trunc.is_some_and(|n| n < 2) {
        errors.push(format!("{label}.rc.n_trunc: must be ≥ 2"));
    }
    if rc.n_step == 0 {
        errors.push(format!("{label}.rc.n_step: must be ≥ 1"));
    }
    if !(positive(rc.conv_tol) && positive(rc.ode_tol)) {
        errors.push(format!("{label}.rc: conv_tol and ode_tol must be > 0"));
    }
    let f = &p.field;
    if f.nx < 2 || f.nt < 2 {
        errors.push(format!("{label}.field: nx and nt must be ≥ 2"));
    }
    if let (Some(a), Some(b)) = (f.x_min, f.x_max) {
        if !(a < b) {
            errors.push(format!("{label}.field: x_min must be < x_max"));
        }
    }
    if !positive(f.quad_tol) {
        errors.push(format!("{label}.field.quad_tol: must be > 0"));
    }
    match mode {
        Some(Mode::Rc | Mode::Compare) if !matches!(b.density, DensitySpec::Underdamped { .. }) => {
            errors.push(format!("{label}.bath.density.kind: rc and compare modes need an underdamped density"));
        }
        Some(Mode::BathField) if !matches!(b.density, DensitySpec::CommonEnvironment { .. }) => {
            errors.push(format!("{label}.bath.density.kind: bath_field mode needs a common_environment density"));
        }
        _ => {}
    }
}

fn check_sweep(s: &SweepSection, errors: &mut Vec<String>) {
    if s.values.len() < 2 {
        errors.push("sweep.values: need at least two values".into());
    }
    if s.values.iter().any(|v| !v.is_finite()) {
        errors.push("sweep.values: must be finite".into());
    }
    if !crate::sweep::SWEEPABLE.contains(&s.param.as_str()) {
        errors.push(format!(
            "sweep.param: `{}` is not sweepable (one of {})",
            s.param,
            crate::sweep::SWEEPABLE.join(", ")
        ));
    }
}
