use sha2::{Digest, Sha256};
use std::fmt::Write as _;

use crate::ids::CoreId;

/// Line-delimited event trace: `cycle core kind detail`.
///
/// Hashing is always on when tracing is enabled; keeping the lines in
/// memory is optional.
#[derive(Debug, Default)]
pub struct Trace {
    enabled: bool,
    keep_lines: bool,
    hasher: Option<Sha256>,
    lines: Vec<String>,
    count: u64,
}

impl Trace {
    pub fn new(enabled: bool, keep_lines: bool) -> Self {
        Trace {
            enabled,
            keep_lines,
            hasher: enabled.then(Sha256::new),
            lines: Vec::new(),
            count: 0,
        }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn record(&mut self, cycle: u64, core: CoreId, kind: &str, detail: std::fmt::Arguments<'_>) {
        if !self.enabled {
            return;
        }
        let mut line = String::with_capacity(48);
        let _ = write!(line, "{cycle} {core} {kind} {detail}");
        if let Some(h) = self.hasher.as_mut() {
            h.update(line.as_bytes());
            h.update(b"\n");
        }
        self.count += 1;
        if self.keep_lines {
            self.lines.push(line);
        }
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Hex digest of everything recorded so far (empty string when disabled).
    pub fn hash_hex(&self) -> String {
        match &self.hasher {
            Some(h) => h.clone().finalize().iter().map(|b| format!("{b:02x}")).collect(),
            None => String::new(),
        }
    }
}
