//! `--config FILE` support. The file holds `key = value` lines named after
//! long flags; they are spliced in right after the subcommand so that any
//! flag given on the command line wins.

use std::fs;

#[derive(Debug)]
pub enum ConfigError {
    MissingPath,
    Read(String, std::io::Error),
    Syntax { line: usize, text: String },
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::MissingPath => write!(f, "--config needs a file path"),
            ConfigError::Read(path, e) => write!(f, "cannot read config {path}: {e}"),
            ConfigError::Syntax { line, text } => {
                write!(f, "config line {line}: expected `key = value`, got {text:?}")
            }
        }
    }
}

fn config_path(args: &[String]) -> Result<Option<String>, ConfigError> {
    for (i, a) in args.iter().enumerate() {
        if let Some(p) = a.strip_prefix("--config=") {
            return Ok(Some(p.to_string()));
        }
        if a == "--config" {
            return args.get(i + 1).cloned().map(Some).ok_or(ConfigError::MissingPath);
        }
    }
    Ok(None)
}

/// Turns config text into `--key value` pairs. Blank lines and `#` comments
/// are skipped.
pub fn parse(text: &str) -> Result<Vec<String>, ConfigError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let syntax = || ConfigError::Syntax {
            line: idx + 1,
            text: raw.to_string(),
        };
        let (key, value) = line.split_once('=').ok_or_else(syntax)?;
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(syntax());
        }
        out.push(format!("--{key}"));
        out.push(value.trim().to_string());
    }
    Ok(out)
}

/// Returns `args` with the config file's flags inserted after the
/// subcommand, or unchanged when no `--config` is present.
pub fn merge(args: Vec<String>) -> Result<Vec<String>, ConfigError> {
    let Some(path) = config_path(&args)? else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| ConfigError::Read(path.clone(), e))?;
    let extra = parse(&text)?;

    // The subcommand is the first bare word, skipping the value of a leading
    // --config.
    let mut at = None;
    let mut i = 1;
    while i < args.len() {
        if args[i] == "--config" {
            i += 2;
            continue;
        }
        if !args[i].starts_with('-') {
            at = Some(i + 1);
            break;
        }
        i += 1;
    }
    let at = at.unwrap_or(args.len());
    let mut merged = args[..at].to_vec();
    merged.extend(extra);
    merged.extend_from_slice(&args[at..]);
    Ok(merged)
}
