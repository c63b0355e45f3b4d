use std::path::Path;

use serde_json::Value;
use wbmia::eval::ExperimentConfig;

use crate::args::Common;
use crate::error::CliError;

/// Reads, overrides, resolves and validates the experiment config.
///
/// A mirrored flag fills in a field the config leaves out. When the config
/// sets the field to a different value the flag is rejected unless
/// `--override` is given, in which case the flag wins.
pub fn load(common: &Common) -> Result<ExperimentConfig, CliError> {
    let path = &common.config;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut raw: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    apply_flags(&mut raw, common)?;
    let mut config: ExperimentConfig =
        serde_json::from_value(raw).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    config.validate()?;
    Ok(config)
}

fn apply_flags(raw: &mut Value, common: &Common) -> Result<(), CliError> {
    let mut flags: Vec<(&[&str], Value)> = Vec::new();
    if let Some(s) = common.master_seed {
        flags.push((&["master_seed"], s.into()));
    }
    if let Some(r) = common.repetitions {
        flags.push((&["repetitions"], r.into()));
    }
    if let Some(a) = &common.alphas {
        flags.push((&["alphas"], a.clone().into()));
    }
    if let Some(n) = common.calibration_sample_size {
        flags.push((&["calibration_sample_size"], n.into()));
    }
    if let Some(n) = common.records {
        flags.push((&["dataset", "records"], n.into()));
    }
    for (field, value) in flags {
        set_field(raw, field, value, common.override_config)?;
    }
    Ok(())
}

fn set_field(raw: &mut Value, field: &[&str], value: Value, force: bool) -> Result<(), CliError> {
    let dotted = field.join(".");
    let (last, parents) = field.split_last().expect("field path is non-empty");
    let mut node = raw;
    for key in parents {
        node = node
            .get_mut(*key)
            .ok_or_else(|| CliError::Config(format!("{dotted}: config has no `{key}` section")))?;
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| CliError::Config(format!("{dotted}: parent is not an object")))?;
    match obj.get(*last) {
        Some(existing) if !same(existing, &value) && !force => Err(CliError::Config(format!(
            "{dotted}: flag value {value} conflicts with config value {existing} (pass --override to use the flag)"
        ))),
        _ => {
            obj.insert(last.to_string(), value);
            Ok(())
        }
    }
}

/// JSON equality with numbers compared as values, so `10` equals `10.0`.
fn same(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x.as_f64() == y.as_f64(),
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| same(p, q)),
        _ => a == b,
    }
}
