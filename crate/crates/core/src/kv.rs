//! Flat `key=value` settings shared by manifests and run configurations.

use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A configuration block addressable by bare key names (no prefix).
pub trait KeyValues {
    /// Prefix used when the block is embedded in a larger document.
    const PREFIX: &'static str;

    fn set(&mut self, key: &str, value: &str) -> Result<()>;

    /// All keys with their current values, in a fixed order.
    fn entries(&self) -> Vec<(&'static str, String)>;

    fn validate(&self) -> Result<()>;

    fn to_lines(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{}.{k}={v}\n", Self::PREFIX))
            .collect()
    }
}

pub(crate) fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::Config(format!("bad value `{value}` for `{key}`: {e}")))
}

pub(crate) fn unknown(prefix: &str, key: &str) -> Error {
    Error::Config(format!("unknown key `{prefix}.{key}`"))
}

/// Splits a `key=value` line; `#` starts a comment. Returns `None` for
/// blank or comment-only lines.
pub fn split_line(line: &str) -> Option<Result<(&str, &str)>> {
    let line = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
    .trim();
    if line.is_empty() {
        return None;
    }
    Some(match line.split_once('=') {
        Some((k, v)) => Ok((k.trim(), v.trim())),
        None => Err(Error::Config(format!("expected key=value, got `{line}`"))),
    })
}
