//! `key = value` config files and manifests turned into extra flags.

use crate::CliError;

/// Flags for the entries of a config file.
///
/// Plain files hold `key = value` lines (`#` starts a comment). A JSON object
/// with a `params` member, i.e. a run manifest, is accepted as well. Lists are
/// comma-separated; `true` becomes a bare flag and `false` is dropped.
pub fn config_args(text: &str) -> Result<Vec<String>, CliError> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        return manifest_args(trimmed);
    }
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", n + 1)))?;
        push_flag(&mut out, key.trim(), value.trim());
    }
    Ok(out)
}

fn manifest_args(text: &str) -> Result<Vec<String>, CliError> {
    let v: serde_json::Value = serde_json::from_str(text)?;
    let params = v
        .get("params")
        .and_then(|p| p.as_object())
        .ok_or_else(|| CliError::Usage("JSON config needs a \"params\" object".into()))?;
    let mut out = Vec::new();
    for (key, value) in params {
        let text = match value {
            serde_json::Value::Null => continue,
            serde_json::Value::Array(items) => items.iter().map(scalar).collect::<Vec<_>>().join(","),
            other => scalar(other),
        };
        push_flag(&mut out, key, &text);
    }
    Ok(out)
}

fn scalar(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn push_flag(out: &mut Vec<String>, key: &str, value: &str) {
    match value {
        "true" => out.push(format!("--{key}")),
        "false" => {}
        _ => out.push(format!("--{key}={value}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_lines() {
        let args = config_args("# comment\nkappa = 0.5\nT = 1,2 # trailing\nfree = true\nx = false\n").unwrap();
        assert_eq!(args, ["--kappa=0.5", "--T=1,2", "--free"]);
    }

    #[test]
    fn manifest_params() {
        let args = config_args(r#"{"cmd":"x","params":{"E":19.5,"T":[0.5,5.0],"eps":null,"free":false}}"#).unwrap();
        assert_eq!(args, ["--E=19.5", "--T=0.5,5.0"]);
    }

    #[test]
    fn malformed_line() {
        assert!(matches!(config_args("kappa 0.5"), Err(CliError::Usage(_))));
    }
}
