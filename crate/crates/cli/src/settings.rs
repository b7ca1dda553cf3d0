//! Resolved settings for one command: defaults, then a config file, then
//! command-line flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::parser::ValueSource;
use clap::{Arg, ArgAction, ArgMatches, Command};
use selmask::{Error, Result};

use crate::manifest::Manifest;

#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: Option<&'static str>,
    pub help: &'static str,
    /// Comma-separated in config files; may be repeated on the command line.
    pub list: bool,
}

pub const fn key(name: &'static str, default: Option<&'static str>, help: &'static str) -> Key {
    Key {
        name,
        default,
        help,
        list: false,
    }
}

pub const fn list(name: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default: None,
        help,
        list: true,
    }
}

pub fn add_args(mut cmd: Command, keys: &[Key]) -> Command {
    cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .help("key=value config file, or a manifest.json from an earlier run"),
    );
    for k in keys {
        let mut help = k.help.to_string();
        if let Some(d) = k.default {
            help.push_str(&format!(" [default: {d}]"));
        }
        cmd = cmd.arg(
            Arg::new(k.name)
                .long(k.name)
                .value_name("VALUE")
                .help(help)
                .action(if k.list { ArgAction::Append } else { ArgAction::Set }),
        );
    }
    cmd
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub command: String,
    values: BTreeMap<String, String>,
    /// Set when the config came from a manifest.
    pub previous: Option<Manifest>,
}

fn normalize_key(k: &str) -> String {
    k.trim().replace('_', "-")
}

/// Parses the flat `key = value` format. `#` starts a comment line.
pub fn parse_config_text(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format_at(path, i + 1, format!("expected key=value, found '{line}'")))?;
        out.insert(normalize_key(k), v.trim().to_string());
    }
    Ok(out)
}

impl Settings {
    pub fn resolve(command: &str, keys: &[Key], m: &ArgMatches) -> Result<Self> {
        let mut values: BTreeMap<String, String> = keys
            .iter()
            .filter_map(|k| k.default.map(|d| (k.name.to_string(), d.to_string())))
            .collect();
        let mut previous = None;
        if let Some(path) = m.get_one::<String>("config") {
            let path = Path::new(path);
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let from_file = if text.trim_start().starts_with('{') {
                let manifest: Manifest = serde_json::from_str(&text)
                    .map_err(|e| Error::format_at(path, e.line(), format!("not a manifest: {e}")))?;
                if manifest.command != command {
                    return Err(Error::usage(format!(
                        "manifest {} is for '{}', not '{command}'",
                        path.display(),
                        manifest.command
                    )));
                }
                let c = manifest.config.clone();
                previous = Some(manifest);
                c
            } else {
                parse_config_text(&text, path)?
            };
            for (k, v) in from_file {
                if !keys.iter().any(|key| key.name == k) {
                    return Err(Error::usage(format!("unknown key '{k}' in {}", path.display())));
                }
                values.insert(k, v);
            }
        }
        for k in keys {
            if m.value_source(k.name) == Some(ValueSource::CommandLine) {
                let v: Vec<&String> = m.get_many::<String>(k.name).into_iter().flatten().collect();
                let joined = v.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(",");
                values.insert(k.name.to_string(), joined);
            }
        }
        Ok(Settings {
            command: command.to_string(),
            values,
            previous,
        })
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn get(&self, k: &str) -> Option<&str> {
        self.values.get(k).map(|s| s.as_str()).filter(|s| !s.is_empty())
    }

    pub fn required(&self, k: &str) -> Result<&str> {
        self.get(k).ok_or_else(|| Error::usage(format!("--{k} is required")))
    }

    pub fn parse<T: FromStr>(&self, k: &str) -> Result<T> {
        let v = self.required(k)?;
        v.parse()
            .map_err(|_| Error::usage(format!("invalid value '{v}' for --{k}")))
    }

    pub fn parse_opt<T: FromStr>(&self, k: &str) -> Result<Option<T>> {
        match self.get(k) {
            None => Ok(None),
            Some(_) => self.parse(k).map(Some),
        }
    }

    pub fn flag(&self, k: &str) -> Result<bool> {
        match self.required(k)? {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => Err(Error::usage(format!("invalid boolean '{other}' for --{k}"))),
        }
    }

    pub fn path(&self, k: &str) -> Result<PathBuf> {
        self.required(k).map(PathBuf::from)
    }

    pub fn path_opt(&self, k: &str) -> Option<PathBuf> {
        self.get(k).map(PathBuf::from)
    }

    pub fn list(&self, k: &str) -> Vec<String> {
        self.get(k)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse("seed")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEYS: &[Key] = &[key("epochs", Some("10"), ""), key("lr", Some("0.1"), ""), list("refs", "")];

    fn matches(args: &[&str]) -> ArgMatches {
        let mut all = vec!["t"];
        all.extend(args);
        add_args(Command::new("t"), KEYS).get_matches_from(all)
    }

    #[test]
    fn precedence() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.txt");
        fs::write(&cfg, "# comment\nepochs = 3\nlr=0.5\nrefs = a.txt, b.txt\n").unwrap();
        let m = matches(&["--config", cfg.to_str().unwrap(), "--epochs", "7"]);
        let s = Settings::resolve("t", KEYS, &m).unwrap();
        assert_eq!(s.parse::<usize>("epochs").unwrap(), 7);
        assert_eq!(s.parse::<f64>("lr").unwrap(), 0.5);
        assert_eq!(s.list("refs"), vec!["a.txt", "b.txt"]);
        let s = Settings::resolve("t", KEYS, &matches(&[])).unwrap();
        assert_eq!(s.parse::<usize>("epochs").unwrap(), 10);
    }

    #[test]
    fn repeated_list_flags_join() {
        let s = Settings::resolve("t", KEYS, &matches(&["--refs", "a", "--refs", "b"])).unwrap();
        assert_eq!(s.list("refs"), vec!["a", "b"]);
    }

    #[test]
    fn unknown_config_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.txt");
        fs::write(&cfg, "bogus_key = 1\n").unwrap();
        let m = matches(&["--config", cfg.to_str().unwrap()]);
        assert!(matches!(Settings::resolve("t", KEYS, &m), Err(Error::Usage(_))));
        fs::write(&cfg, "no equals sign\n").unwrap();
        let m = matches(&["--config", cfg.to_str().unwrap()]);
        assert!(matches!(Settings::resolve("t", KEYS, &m), Err(Error::Format { line: Some(1), .. })));
    }

    #[test]
    fn bad_values_are_usage_errors() {
        let s = Settings::resolve("t", KEYS, &matches(&["--epochs", "ten"])).unwrap();
        assert!(matches!(s.parse::<usize>("epochs"), Err(Error::Usage(_))));
    }
}
