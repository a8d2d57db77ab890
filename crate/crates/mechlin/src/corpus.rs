//! The bundled example systems, embedded in the binary so the `corpus`
//! command works regardless of the working directory.  The same files ship
//! in the repository under `crates/mechlin/systems/` for copying and
//! editing.

use crate::sysfile::{parse_system_str, LoadedSystem, SysFileError};

/// `(name, TOML text)` pairs in presentation order.
pub const SYSTEMS: &[(&str, &str)] = &[
    ("iwp", include_str!("../systems/iwp.toml")),
    ("tora3", include_str!("../systems/tora3.toml")),
    (
        "double_pendulum_base",
        include_str!("../systems/double_pendulum_base.toml"),
    ),
    (
        "double_pendulum_feedback",
        include_str!("../systems/double_pendulum_feedback.toml"),
    ),
    ("example1", include_str!("../systems/example1.toml")),
];

/// Load a bundled system by name.
pub fn load(name: &str) -> Option<Result<LoadedSystem, SysFileError>> {
    SYSTEMS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_system_str(text))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_bundled_system_parses() {
        for (name, _) in SYSTEMS {
            let loaded = load(name).unwrap().unwrap_or_else(|e| {
                panic!("bundled system '{name}' failed to load: {e}");
            });
            assert!(loaded.system.n >= 1);
        }
        assert!(load("missing").is_none());
    }
}
