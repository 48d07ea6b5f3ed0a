//! TOML config files. Every key is optional; unknown keys are rejected.

use std::path::Path;

use abca_core::AbcaConfig;

use crate::error::{HarnessError, Result};

pub fn parse_config(s: &str) -> Result<AbcaConfig> {
    let cfg: AbcaConfig = toml::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<AbcaConfig> {
    let s = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_config(&s)
}

pub fn config_to_toml(cfg: &AbcaConfig) -> Result<String> {
    toml::to_string_pretty(cfg).map_err(|e| HarnessError::Config(e.to_string()))
}

pub fn save_config(cfg: &AbcaConfig, path: &Path) -> Result<()> {
    std::fs::write(path, config_to_toml(cfg)?).map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use abca_core::JudgeMode;

    #[test]
    fn roundtrip_and_rejection() {
        let cfg = parse_config("debate_rounds = 3\njudge_mode = \"llm_judge\"\n").unwrap();
        assert_eq!(cfg.debate_rounds, 3);
        assert_eq!(cfg.judge_mode, JudgeMode::LlmJudge);
        assert_eq!(cfg.theta_max, AbcaConfig::default().theta_max);
        assert_eq!(parse_config(&config_to_toml(&cfg).unwrap()).unwrap(), cfg);
        assert!(parse_config("theta_maxx = 0.4").is_err());
        assert!(parse_config("theta_max = 9.0").is_err());
    }
}
