//! Built-in experiments. Each preset expands to panel tables that pass
//! through the same merge and validation as hand-written panels.

use std::f64::consts::PI;

use toml::Table;

use crate::config::{Mode, Preset};

/// Bath peak frequencies of the three single-spin panels, in units of `Ω`.
pub const FIG2_OMEGA0: [f64; 3] = [0.25, 0.5, 1.0];

/// `ω_R = 2π/R` per grid row, in units of `ω₀`.
pub const FIG4_ROWS: [f64; 3] = [0.9, 1.0, 1.1];
/// `Ω` per grid column, in units of `ω₀`.
pub const FIG4_COLUMNS: [f64; 3] = [1.1, 1.0, 0.9];
pub const FIG4_LAYOUT: &str = "rows: omega_R = 0.9, 1.0, 1.1 omega0; columns: Omega = 1.1, 1.0, 0.9 omega0";

pub fn mode(p: Preset) -> Mode {
    match p {
        Preset::Fig2 => Mode::Compare,
        Preset::Fig4 => Mode::BathField,
    }
}

pub fn panels(p: Preset) -> Vec<Table> {
    match p {
        Preset::Fig2 => FIG2_OMEGA0.iter().map(|&w| fig2_panel(w)).collect(),
        Preset::Fig4 => FIG4_ROWS
            .iter()
            .flat_map(|&wr| FIG4_COLUMNS.iter().map(move |&om| fig4_panel(wr, om)))
            .collect(),
    }
}

pub fn fig2_name(omega0: f64) -> String {
    format!("omega0_{omega0}")
}

pub fn fig4_name(omega_r: f64, omega: f64) -> String {
    format!("wr_{omega_r}_omega_{omega}")
}

/// `πα = 0.05Ω`, `Γ = 0.05Ω`, `T = Ω`, `ε = 0.5Ω`, `Δt = 0.2/Ω`, `χ = 10⁻⁸`,
/// out to `t = 60/Ω`.
fn fig2_panel(omega0: f64) -> Table {
    let name = fig2_name(omega0);
    let alpha = 0.05 / PI;
    table(&format!(
        r#"
        name = "{name}"
        [system]
        omega = 1.0
        eps = 0.5
        initial_state = "up"
        [bath]
        temperature = 1.0
        [bath.density]
        kind = "underdamped"
        alpha = {alpha:?}
        omega0 = {omega0:?}
        gamma = 0.05
        [tempo]
        dt = 0.2
        chi = 1e-8
        n_steps = 300
        "#
    ))
}

/// `T = 0`, `ε = 0`, `Γ = 0.05ω₀`, `πα = 0.1ω₀` for the unmapped density,
/// `Δt = 0.1/ω₀`, `χ = 10⁻⁷`, out to `t = 40/ω₀`.
fn fig4_panel(omega_r: f64, omega: f64) -> Table {
    let name = fig4_name(omega_r, omega);
    let alpha = 0.1 / PI;
    let r = 2.0 * PI / omega_r;
    table(&format!(
        r#"
        name = "{name}"
        [system]
        omega = {omega:?}
        eps = 0.0
        initial_state = "up"
        [bath]
        temperature = 0.0
        [bath.density]
        kind = "common_environment"
        R = {r:?}
        [bath.density.base]
        kind = "underdamped"
        alpha = {alpha:?}
        omega0 = 1.0
        gamma = 0.05
        [tempo]
        dt = 0.1
        chi = 1e-7
        n_steps = 400
        "#
    ))
}

fn table(text: &str) -> Table {
    text.parse().expect("preset tables are valid TOML")
}
