//! `key = value` config files, spliced into argv ahead of the user's flags so
//! that flags given on the command line win.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parses a config file into `--key value` pairs. Blank lines and `#`
/// comments are skipped; `key = true` becomes a bare `--key` and
/// `key = false` is dropped.
pub fn parse_config(text: &str, origin: &str) -> Result<Vec<String>> {
    let mut args = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{origin}:{}: expected `key = value`, found `{line}`", no + 1);
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key.starts_with('-') {
            bail!("{origin}:{}: bad key `{key}`", no + 1);
        }
        match value {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            v => {
                args.push(format!("--{key}"));
                args.push(v.to_string());
            }
        }
    }
    Ok(args)
}

/// Removes `--config <path>` from `argv` and inserts the file's flags right
/// after the subcommand name.
pub fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut out = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = Some(it.next().context("--config needs a file path")?);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(OsString::from(p));
        } else {
            out.push(a);
        }
    }
    let Some(path) = path else {
        return Ok(out);
    };
    let p = Path::new(&path);
    let text = std::fs::read_to_string(p).with_context(|| format!("cannot read config file {}", p.display()))?;
    let extra = parse_config(&text, &p.display().to_string())?;
    let at = out
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map_or(out.len(), |k| k + 2);
    out.splice(at..at, extra.into_iter().map(OsString::from));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_pairs_comments_and_booleans() {
        let args = parse_config("# comment\nsigma = 1e10\n\nsigma_grid=1e5,1e10 # trailing\nzero-noise = true\ntrack-drift = false\n", "f").unwrap();
        assert_eq!(args, vec!["--sigma", "1e10", "--sigma-grid", "1e5,1e10", "--zero-noise"]);
        assert!(parse_config("just words", "f").is_err());
        assert!(parse_config("= 3", "f").is_err());
    }

    #[test]
    fn file_flags_go_before_user_flags() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.conf");
        std::fs::write(&f, "t = 2\n").unwrap();
        let argv = os(&["prog", "bounds", "--config", f.to_str().unwrap(), "--t", "3"]);
        let out = expand_config(argv).unwrap();
        assert_eq!(out, os(&["prog", "bounds", "--t", "2", "--t", "3"]));
        assert_eq!(expand_config(os(&["prog", "bounds"])).unwrap(), os(&["prog", "bounds"]));
        assert!(expand_config(os(&["prog", "bounds", "--config"])).is_err());
    }
}
