//! Qualified names, the currency of all name resolution.
//!
//! A name is a dotted path of segments, optionally anchored at the global
//! namespace. In concrete CIL syntax anchored names start with a dot
//! (`.x.y`); internally the anchor is a flag. The global namespace itself is
//! the anchored name with an empty path.

use std::fmt;

/// A possibly-anchored dotted name. Anchored names start at the global
/// namespace and are fixed points of every resolution function.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QualifiedName {
    anchored: bool,
    path: Vec<String>,
}

impl QualifiedName {
    /// The global namespace.
    pub fn global() -> Self {
        QualifiedName { anchored: true, path: Vec::new() }
    }

    /// A relative name from path segments. Segments must be non-empty.
    pub fn relative<I, S>(segments: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let path: Vec<String> = segments.into_iter().map(Into::into).collect();
        debug_assert!(!path.is_empty() && path.iter().all(|s| !s.is_empty()));
        QualifiedName { anchored: false, path }
    }

    /// An anchored name from path segments.
    pub fn anchored<I, S>(segments: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let path: Vec<String> = segments.into_iter().map(Into::into).collect();
        QualifiedName { anchored: true, path }
    }

    /// Parses concrete syntax: a leading dot anchors the name.
    /// Empty segments (`a..b`, trailing dots) are rejected.
    pub fn parse(text: &str) -> Result<Self, String> {
        let (anchored, rest) = match text.strip_prefix('.') {
            Some(rest) => (true, rest),
            None => (false, text),
        };
        if rest.is_empty() {
            return Err(format!("empty name `{text}`"));
        }
        let path: Vec<String> = rest.split('.').map(str::to_owned).collect();
        if path.iter().any(|s| s.is_empty()) {
            return Err(format!("empty segment in name `{text}`"));
        }
        if let Some(bad) = path
            .iter()
            .find(|s| !s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'))
        {
            return Err(format!("invalid characters in name segment `{bad}`"));
        }
        Ok(QualifiedName { anchored, path })
    }

    pub fn is_anchored(&self) -> bool {
        self.anchored
    }

    pub fn is_global(&self) -> bool {
        self.anchored && self.path.is_empty()
    }

    pub fn segments(&self) -> &[String] {
        &self.path
    }

    /// Last segment; the unqualified name part.
    pub fn last(&self) -> &str {
        self.path.last().expect("name with empty path has no last segment")
    }

    /// All segments but the last, kept on the same side of the anchor.
    pub fn prefix(&self) -> QualifiedName {
        QualifiedName {
            anchored: self.anchored,
            path: self.path[..self.path.len() - 1].to_vec(),
        }
    }

    /// Parent namespace of an anchored namespace. `None` for the global one.
    pub fn parent(&self) -> Option<QualifiedName> {
        if self.path.is_empty() {
            None
        } else {
            Some(self.prefix())
        }
    }

    /// Extends a namespace by one segment.
    pub fn child(&self, segment: &str) -> QualifiedName {
        let mut path = self.path.clone();
        path.push(segment.to_owned());
        QualifiedName { anchored: self.anchored, path }
    }

    /// `self.rel`: appends a relative name under this namespace.
    pub fn join(&self, rel: &QualifiedName) -> QualifiedName {
        debug_assert!(!rel.anchored);
        let mut path = self.path.clone();
        path.extend(rel.path.iter().cloned());
        QualifiedName { anchored: self.anchored, path }
    }

    pub fn is_prefix_of(&self, other: &QualifiedName) -> bool {
        self.anchored == other.anchored
            && other.path.len() >= self.path.len()
            && other.path[..self.path.len()] == self.path[..]
    }

    /// The remainder of `other` below `self`, as a path of segments.
    /// Empty when the names are equal.
    pub fn relative_remainder(&self, other: &QualifiedName) -> Option<Vec<String>> {
        if self.is_prefix_of(other) {
            Some(other.path[self.path.len()..].to_vec())
        } else {
            None
        }
    }

    /// Depth below the global namespace (0 for the global namespace itself).
    pub fn depth(&self) -> usize {
        self.path.len()
    }
}

impl fmt::Display for QualifiedName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.anchored {
            write!(f, ".")?;
        }
        write!(f, "{}", self.path.join("."))
    }
}
