//! `key = value` configuration files and their merge with command-line
//! flags. Flags win; every key a subcommand reads is echoed back.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

pub struct Resolver {
    file: BTreeMap<String, String>,
    echo: Vec<(String, String)>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl Resolver {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut file = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            for (n, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let Some((k, v)) = line.split_once('=') else {
                    return Err(CliError::Usage(format!(
                        "{}:{}: expected `key = value`",
                        path.display(),
                        n + 1
                    )));
                };
                file.insert(normalize(k), v.trim().to_string());
            }
        }
        Ok(Self {
            file,
            echo: Vec::new(),
        })
    }

    /// Flag if given, else the file's value, else `default`.
    pub fn value<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let v = self.optional(key, flag)?.unwrap_or(default);
        self.record(key, &v);
        Ok(v)
    }

    /// Flag if given, else the file's value; records it when present.
    pub fn optional<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        let key = normalize(key);
        let from_file = self.file.remove(&key);
        let v = match (flag, from_file) {
            (Some(v), _) => Some(v),
            (None, Some(text)) => Some(
                text.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("config key `{key}`: cannot parse `{text}`: {e}")))?,
            ),
            (None, None) => None,
        };
        if let Some(v) = &v {
            self.record(&key, v);
        }
        Ok(v)
    }

    /// A boolean switch: set by the flag or by `key = true` in the file.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool, CliError> {
        let v = self.value(key, flag.then_some(true), false)?;
        Ok(v)
    }

    fn record(&mut self, key: &str, v: &impl Display) {
        let key = normalize(key);
        let text = v.to_string();
        match self.echo.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => entry.1 = text,
            None => self.echo.push((key, text)),
        }
    }

    /// Rejects unused file keys and prints the resolved settings to stderr
    /// in the same `key = value` form.
    pub fn finish(self) -> Result<(), CliError> {
        if let Some(k) = self.file.keys().next() {
            return Err(CliError::Usage(format!("unknown config key `{k}`")));
        }
        eprintln!("# resolved configuration");
        for (k, v) in &self.echo {
            eprintln!("{k} = {v}");
        }
        Ok(())
    }
}

/// Comma-separated list of positive integers.
#[derive(Clone, Debug, PartialEq)]
pub struct List(pub Vec<usize>);

impl FromStr for List {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(|x| x.trim().parse::<usize>().map_err(|e| format!("`{x}`: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(List)
    }
}

impl Display for List {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolver(text: &str) -> (tempfile::TempDir, Resolver) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, text).unwrap();
        let r = Resolver::load(Some(&path)).unwrap();
        (dir, r)
    }

    #[test]
    fn flags_override_file() {
        let (_d, mut r) = resolver("# comment\nseed = 5\nlr = 0.01  # trailing\n");
        assert_eq!(r.value("seed", Some(9u64), 0).unwrap(), 9);
        assert_eq!(r.value("lr", None, 1.0f64).unwrap(), 0.01);
        assert_eq!(r.value("steps", None, 7u64).unwrap(), 7);
        r.finish().unwrap();
    }

    #[test]
    fn unknown_and_malformed_keys() {
        let (_d, r) = resolver("bogus = 1\n");
        assert!(matches!(r.finish(), Err(CliError::Usage(_))));
        let (_d, mut r) = resolver("seed = x\n");
        assert!(matches!(r.value("seed", None, 0u64), Err(CliError::Usage(_))));
    }

    #[test]
    fn dashes_and_underscores_match() {
        let (_d, mut r) = resolver("t-values = 1,2\n");
        assert_eq!(r.value("t_values", None, List(vec![])).unwrap(), List(vec![1, 2]));
    }
}
