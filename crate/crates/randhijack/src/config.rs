//! Scenario files (TOML).

use std::path::Path;

use randhijack_core::harness::{ConfigError, ScenarioConfig};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(#[from] ConfigError),
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, LoadError> {
    let cfg: ScenarioConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use randhijack_core::harness::{ScenarioStep, TracePredicate};
    use randhijack_core::network::ConsumptionPolicy;
    use randhijack_core::CipherAlgId;

    const FULL: &str = r#"
seed = 7

[network]
consumption = "random_order"
cipher = "a5_1"
batch_size = 2

[[subscribers]]
imsi = "001010000000001"
mode = "enhanced"
me = { class_e_supported = false }

[attacker]
kind = "bbk_replay"
imsi = "001010000000099"

[[script]]
kind = "attach"
ue = "001010000000001"

[[script]]
kind = "request_triples"
ue = "001010000000001"

[[script]]
kind = "assert"
label = "attached"
predicate = { type = "present", pattern = { name = "ATTACH" } }
"#;

    #[test]
    fn parses_full_config() {
        let cfg = parse_config(FULL).unwrap();
        assert_eq!(cfg.network.consumption, ConsumptionPolicy::RandomOrder);
        assert_eq!(cfg.network.cipher, CipherAlgId::A5_1);
        assert!(!cfg.subscribers[0].me.class_e_supported);
        assert!(matches!(cfg.script[1], ScenarioStep::RequestTriples { n: None, .. }));
        assert!(matches!(
            &cfg.script[2],
            ScenarioStep::Assert {
                predicate: TracePredicate::Present { .. },
                ..
            }
        ));
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = FULL.replace("batch_size = 2", "batch_size = 2\nbatchsize = 3");
        assert!(matches!(parse_config(&bad), Err(LoadError::Syntax(_))));
        let bad = FULL.replace("kind = \"attach\"", "kind = \"attach\"\nfoo = 1");
        assert!(matches!(parse_config(&bad), Err(LoadError::Syntax(_))));
    }

    #[test]
    fn bad_imsi_rejected() {
        let bad = FULL.replace("001010000000001\"\nmode", "00101\"\nmode");
        assert!(matches!(parse_config(&bad), Err(LoadError::Syntax(_))));
    }

    #[test]
    fn validation_runs() {
        let bad = FULL.replace(
            "ue = \"001010000000001\"\n\n[[script]]\nkind = \"request",
            "ue = \"001010000000002\"\n\n[[script]]\nkind = \"request",
        );
        assert!(matches!(parse_config(&bad), Err(LoadError::Invalid(_))));
    }
}
