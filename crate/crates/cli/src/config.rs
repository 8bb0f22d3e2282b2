use std::path::Path;

use anyhow::{Context, Result};
use splatstyle::train::TrainConfig;

/// Reads a training config. `.json` files are parsed as JSON; anything else
/// is tried as TOML first and as JSON if that fails.
pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: TrainConfig = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)
            .with_context(|| format!("parsing {} as JSON", path.display()))?
    } else {
        match toml::from_str(&text) {
            Ok(c) => c,
            Err(toml_err) => serde_json::from_str(&text).map_err(|json_err| {
                anyhow::anyhow!(
                    "{}: not TOML ({toml_err}) nor JSON ({json_err})",
                    path.display()
                )
            })?,
        }
    };
    cfg.validate()?;
    Ok(cfg)
}
