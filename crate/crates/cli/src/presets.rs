//! Scenario files shipped with the binary.

use std::path::Path;

use crate::scenario::{load_scenario, parse_scenario, Overrides, Scenario, ScenarioFile};
use crate::CliError;

pub const PRESETS: [(&str, &str); 5] = [
    ("flat-t4", include_str!("../presets/flat-t4.toml")),
    ("sphere-product", include_str!("../presets/sphere-product.toml")),
    ("einstein-s2xs2", include_str!("../presets/einstein-s2xs2.toml")),
    ("twisted-torus", include_str!("../presets/twisted-torus.toml")),
    ("shrinking-sphere", include_str!("../presets/shrinking-sphere.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// TOML source of a preset.
pub fn source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn preset(name: &str, overrides: &Overrides) -> Result<Scenario, CliError> {
    let text = source(name).ok_or_else(|| CliError::Validation(format!("no preset named '{name}'")))?;
    parse_scenario(text, overrides).map_err(|e| match e {
        CliError::Validation(m) => CliError::Validation(format!("preset {name}: {m}")),
        other => other,
    })
}

/// Parsed but unvalidated preset, for programmatic variants.
pub fn preset_file(name: &str) -> Result<ScenarioFile, CliError> {
    let text = source(name).ok_or_else(|| CliError::Validation(format!("no preset named '{name}'")))?;
    toml::from_str(text).map_err(|e| CliError::Validation(format!("preset {name}: {e}")))
}

/// A path to a scenario file, or else a preset name.
pub fn resolve(arg: &str, overrides: &Overrides) -> Result<Scenario, CliError> {
    let p = Path::new(arg);
    if p.exists() {
        return load_scenario(p, overrides);
    }
    if source(arg).is_some() {
        return preset(arg, overrides);
    }
    Err(CliError::Validation(format!("'{arg}' is neither a scenario file nor a preset ({})", names().collect::<Vec<_>>().join(", "))))
}
