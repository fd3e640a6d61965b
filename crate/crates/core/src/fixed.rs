//! Fixed six-decimal float formatting for every file the toolkit writes.

use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

pub fn fmt6(x: f64) -> String {
    let s = format!("{x:.6}");
    // avoid "-0.000000" for tiny negatives
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Serializes as a JSON number with exactly six decimals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fixed6(pub f64);

impl Serialize for Fixed6 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(serde::ser::Error::custom(format!(
                "cannot write non-finite value {}",
                self.0
            )));
        }
        RawValue::from_string(fmt6(self.0))
            .map_err(serde::ser::Error::custom)?
            .serialize(serializer)
    }
}
