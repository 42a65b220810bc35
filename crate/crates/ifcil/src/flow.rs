//! Flow-direction table: maps each operation to the direction of the
//! information flow it causes.
//!
//! File format: UTF-8, one entry per line, `<key> <forward|backward|both|none>`,
//! `#` starts a comment. A key is either `class.op` or a bare `op`; the
//! class-qualified key wins when both match.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowDirection {
    Forward,
    Backward,
    Both,
    None,
}

#[derive(Debug, Error)]
pub enum FlowTableError {
    #[error("line {line}: expected `<key> <forward|backward|both|none>`")]
    Malformed { line: usize },
    #[error("line {line}: unknown direction `{word}`")]
    BadDirection { line: usize, word: String },
}

/// Operation-to-direction table with `class.op` keys taking precedence over
/// bare `op` keys.
#[derive(Debug, Clone)]
pub struct FlowTable {
    entries: BTreeMap<String, FlowDirection>,
}

impl FlowTable {
    /// The built-in table: reads pull information backward, writes push it
    /// forward, ioctl moves it both ways.
    pub fn defaults() -> Self {
        let mut entries = BTreeMap::new();
        for op in ["read", "getattr"] {
            entries.insert(op.to_owned(), FlowDirection::Backward);
        }
        for op in ["write", "append", "setattr"] {
            entries.insert(op.to_owned(), FlowDirection::Forward);
        }
        entries.insert("ioctl".to_owned(), FlowDirection::Both);
        FlowTable { entries }
    }

    /// Parses a table file. With `extend_defaults` the built-in entries
    /// remain as fallbacks underneath the parsed ones.
    pub fn parse(text: &str, extend_defaults: bool) -> Result<Self, FlowTableError> {
        let mut table = if extend_defaults {
            FlowTable::defaults()
        } else {
            FlowTable { entries: BTreeMap::new() }
        };
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut parts = content.split_whitespace();
            let (Some(key), Some(word), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(FlowTableError::Malformed { line });
            };
            let dir = match word {
                "forward" => FlowDirection::Forward,
                "backward" => FlowDirection::Backward,
                "both" => FlowDirection::Both,
                "none" => FlowDirection::None,
                other => {
                    return Err(FlowTableError::BadDirection { line, word: other.to_owned() })
                }
            };
            table.entries.insert(key.to_owned(), dir);
        }
        Ok(table)
    }

    /// Longest-key lookup: `class.op` wins over `op`. `None` when the table
    /// has no entry for the operation at all.
    pub fn lookup(&self, class: &str, op: &str) -> Option<FlowDirection> {
        self.entries
            .get(&format!("{class}.{op}"))
            .or_else(|| self.entries.get(op))
            .copied()
    }
}
