use std::path::Path;

use crate::error::{Error, Result};
use crate::training::{FittedModel, MODEL_FORMAT_VERSION};

pub fn model_to_json(model: &FittedModel) -> String {
    let mut s = serde_json::to_string(model).expect("models always serialize");
    s.push('\n');
    s
}

/// Parse a model document, checking `format_version` before the body.
pub fn model_from_json(text: &str) -> Result<FittedModel> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::parse(Some(e.line()), e.to_string()))?;
    let version = value
        .get("format_version")
        .ok_or_else(|| Error::schema(None, "missing format_version"))?
        .as_u64()
        .ok_or_else(|| Error::schema(None, "format_version must be an unsigned integer"))?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: MODEL_FORMAT_VERSION,
        });
    }
    let model: FittedModel =
        serde_json::from_value(value).map_err(|e| Error::schema(None, e.to_string()))?;
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &FittedModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_json(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FittedModel> {
    model_from_json(&std::fs::read_to_string(path)?)
}
