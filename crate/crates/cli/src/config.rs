//! `key = value` run configuration files.
//!
//! Keys are long flag names without the dashes. Blank lines and lines
//! starting with `#` are ignored. Values from the file fill in flags not
//! given on the command line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub path: PathBuf,
    /// Key to (value, line number).
    pub entries: BTreeMap<String, (String, usize)>,
}

impl RunConfig {
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("{}:{lineno}: expected `key = value`, got `{line}`", path.display());
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                bail!("{}:{lineno}: empty key", path.display());
            }
            if let Some((_, first)) = entries.insert(k.to_string(), (v.to_string(), lineno)) {
                bail!("{}:{lineno}: key `{k}` already set on line {first}", path.display());
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(path, &text)
    }

    /// Fails on the first key not in `known`, naming its file and line.
    pub fn check_keys(&self, known: &[String]) -> Result<()> {
        let mut unknown: Vec<(&String, usize)> = self
            .entries
            .iter()
            .filter(|(k, _)| !known.contains(k))
            .map(|(k, (_, line))| (k, *line))
            .collect();
        unknown.sort_by_key(|(_, line)| *line);
        if let Some((k, line)) = unknown.first() {
            bail!("{}:{line}: unknown key `{k}`", self.path.display());
        }
        Ok(())
    }

    pub fn line_of(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|(_, l)| *l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_locates_keys() {
        let text = "# run\nscheme = mci\n\nsrc-fps=15\n";
        let c = RunConfig::parse(Path::new("run.cfg"), text).unwrap();
        assert_eq!(c.entries["scheme"], ("mci".to_string(), 2));
        assert_eq!(c.line_of("src-fps"), Some(4));
        let err = c.check_keys(&["scheme".into()]).unwrap_err().to_string();
        assert_eq!(err, "run.cfg:4: unknown key `src-fps`");
    }

    #[test]
    fn rejects_malformed_lines() {
        let err = RunConfig::parse(Path::new("a.cfg"), "scheme mci")
            .unwrap_err()
            .to_string();
        assert!(err.starts_with("a.cfg:1:"));
        let err = RunConfig::parse(Path::new("a.cfg"), "a=1\na=2")
            .unwrap_err()
            .to_string();
        assert!(err.contains("already set on line 1"));
    }
}
