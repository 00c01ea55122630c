//! `key=value` settings files. Keys are long flag names (dashes or
//! underscores); `#` starts a comment. A file value is used only when the
//! same flag is absent from the command line.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use clap::{parser::ValueSource, ArgAction, ArgMatches, Command};

use endovo::{Error, Result};

static FILE_KEYS: OnceLock<BTreeSet<String>> = OnceLock::new();

fn config_path(args: &[String]) -> Option<String> {
    args.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            args.get(i + 1).cloned()
        } else {
            a.strip_prefix("--config=").map(str::to_string)
        }
    })
}

fn subcommand_position(cmd: &Command, args: &[String]) -> Option<usize> {
    let mut skip = false;
    for (i, a) in args.iter().enumerate().skip(1) {
        if skip {
            skip = false;
            continue;
        }
        if a == "--config" {
            skip = true;
            continue;
        }
        if cmd.find_subcommand(a).is_some() {
            return Some(i);
        }
    }
    None
}

pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("config line {}: expected key=value", n + 1)))?;
        out.push((k.trim().replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

/// Splices the settings file named by `--config` into `args`, right after
/// the subcommand.
pub fn merge_config_file(root: &Command, args: Vec<String>) -> Result<Vec<String>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
        path: path.clone().into(),
        source: e,
    })?;
    let Some(pos) = subcommand_position(root, &args) else {
        return Ok(args);
    };
    let sub = root.find_subcommand(&args[pos]).expect("found above");
    let on_command_line = |long: &str| {
        args.iter()
            .any(|a| a == &format!("--{long}") || a.starts_with(&format!("--{long}=")))
    };
    let mut injected = Vec::new();
    let mut keys = BTreeSet::new();
    for (key, value) in parse_pairs(&text)? {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| Error::Config(format!("unknown setting `{key}` for `{}`", sub.get_name())))?;
        if key == "config" || on_command_line(&key) {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" | "1" | "yes" => injected.push(format!("--{key}")),
                "false" | "0" | "no" => {}
                other => return Err(Error::Config(format!("`{key}` expects true or false, got `{other}`"))),
            },
            _ => {
                injected.push(format!("--{key}"));
                injected.push(value);
            }
        }
        keys.insert(key);
    }
    let _ = FILE_KEYS.set(keys);
    let mut out = args[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

fn source(m: &ArgMatches, id: &str) -> &'static str {
    let from_file = FILE_KEYS.get().is_some_and(|k| k.contains(&id.replace('_', "-")));
    match m.value_source(id) {
        Some(ValueSource::CommandLine) if from_file => "file",
        Some(ValueSource::CommandLine) => "flag",
        Some(ValueSource::EnvVariable) => "env",
        _ => "default",
    }
}

/// Every resolved setting of subcommand `cmd` as (key, value, source), in
/// flag declaration order. Unset optional flags are left out.
pub fn resolved(cmd: &Command, m: &ArgMatches) -> Vec<(String, String, &'static str)> {
    let mut out = Vec::new();
    for arg in cmd.get_arguments() {
        let id = arg.get_id().as_str();
        let Ok(Some(values)) = m.try_get_raw(id) else {
            continue;
        };
        let v: Vec<String> = values.map(|v| v.to_string_lossy().into_owned()).collect();
        out.push((id.replace('_', "-"), v.join(","), source(m, id)));
    }
    out
}

/// `key=value  # source` lines, readable back through `--config`.
pub fn render_file(settings: &[(String, String, &str)]) -> String {
    settings.iter().map(|(k, v, src)| format!("{k}={v}  # {src}\n")).collect()
}

/// One log-friendly line: `key=value@source` separated by spaces.
pub fn render_line(settings: &[(String, String, &str)]) -> String {
    let parts: Vec<String> = settings.iter().map(|(k, v, src)| format!("{k}={v}@{src}")).collect();
    parts.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_skip_comments_and_normalize_keys() {
        let p = parse_pairs("# run\nlstm_hidden = 16\n\nseed=3 # fixed\n").unwrap();
        assert_eq!(p, vec![("lstm-hidden".into(), "16".into()), ("seed".into(), "3".into())]);
        assert!(parse_pairs("novalue").is_err());
    }
}
