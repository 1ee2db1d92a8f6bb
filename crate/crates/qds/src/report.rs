//! Machine-parseable report records: one record per line, `key=value`
//! fields, first field `record=<type>`. Floats are printed at 12 significant
//! digits so identical runs produce byte-identical reports.

use std::fmt::Write as _;

/// One report line under construction.
#[derive(Debug, Clone)]
pub struct ReportRecord {
    fields: Vec<(String, String)>,
}

impl ReportRecord {
    pub fn new(kind: &str) -> Self {
        Self {
            fields: vec![("record".into(), kind.into())],
        }
    }

    pub fn push(mut self, key: &str, value: impl Into<String>) -> Self {
        self.fields.push((key.into(), value.into()));
        self
    }

    pub fn push_f64(self, key: &str, value: f64) -> Self {
        let rendered = fmt_sig12(value);
        self.push(key, rendered)
    }

    pub fn push_usize(self, key: &str, value: usize) -> Self {
        self.push(key, value.to_string())
    }

    pub fn push_u64(self, key: &str, value: u64) -> Self {
        self.push(key, value.to_string())
    }

    pub fn push_bool(self, key: &str, value: bool) -> Self {
        self.push(key, if value { "true" } else { "false" })
    }

    pub fn to_line(&self) -> String {
        let mut out = String::new();
        for (i, (k, v)) in self.fields.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            write!(out, "{k}={v}").unwrap();
        }
        out
    }
}

/// Canonical 12-significant-digit rendering; every reported value must be
/// finite.
pub fn fmt_sig12(x: f64) -> String {
    debug_assert!(x.is_finite(), "report values must be finite");
    if x == 0.0 {
        return "0".into();
    }
    format!("{x:.11e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_line_shape() {
        let line = ReportRecord::new("verdict")
            .push_usize("recipient", 0)
            .push_usize("s", 3)
            .push("verdict", "0-ACC")
            .to_line();
        assert_eq!(line, "record=verdict recipient=0 s=3 verdict=0-ACC");
    }

    #[test]
    fn sig12_is_stable() {
        assert_eq!(fmt_sig12(0.75), "7.50000000000e-1");
        assert_eq!(fmt_sig12(0.0), "0");
        assert_eq!(fmt_sig12(3.0517578125e-5), "3.05175781250e-5");
    }
}
