//! Correction ledger: relative shifts and uncertainties of the decay rate.
//!
//! CSV with header `label,shift_rel,unc_rel`; `#` lines are comments. The
//! label is everything before the last two commas. Totals are always
//! recomputed from the rows.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const LEDGER_COLUMNS: &str = "label,shift_rel,unc_rel";

const SHIPPED: &str = include_str!("../../data/ledger.csv");

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow<T> {
    pub label: String,
    pub shift: T,
    pub unc: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionLedger<T> {
    rows: Vec<LedgerRow<T>>,
}

impl<T: Real> CorrectionLedger<T> {
    pub fn new(rows: Vec<LedgerRow<T>>) -> Result<Self> {
        for r in &rows {
            if !(r.unc >= T::zero() && r.unc.is_finite() && r.shift.is_finite()) {
                return Err(Error::Input(format!(
                    "ledger row `{}` needs a finite shift and an uncertainty >= 0",
                    r.label
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn empty() -> Self {
        Self { rows: Vec::new() }
    }

    /// The budget distributed with the crate (`data/ledger.csv`).
    pub fn shipped() -> Self {
        Self::parse(SHIPPED).expect("embedded ledger is valid")
    }

    pub fn shipped_text() -> &'static str {
        SHIPPED
    }

    pub fn rows(&self) -> &[LedgerRow<T>] {
        &self.rows
    }

    pub fn total_shift(&self) -> T {
        self.rows.iter().fold(T::zero(), |acc, r| acc + r.shift)
    }

    /// Root sum of squares of the row uncertainties.
    pub fn total_uncertainty(&self) -> T {
        self.rows
            .iter()
            .fold(T::zero(), |acc, r| acc + r.unc * r.unc)
            .sqrt()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut seen_header = false;
        for (i, line) in text.lines().enumerate() {
            let loc = format!("line {}", i + 1);
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !seen_header {
                if line != LEDGER_COLUMNS {
                    return Err(Error::parse(&loc, format!("expected header `{LEDGER_COLUMNS}`")));
                }
                seen_header = true;
                continue;
            }
            let mut parts = line.rsplitn(3, ',');
            let unc = parts.next();
            let shift = parts.next();
            let label = parts.next();
            let (Some(label), Some(shift), Some(unc)) = (label, shift, unc) else {
                return Err(Error::parse(&loc, "expected `label,shift_rel,unc_rel`"));
            };
            let num = |s: &str, what: &str| -> Result<T> {
                let v: f64 = s
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(&loc, format!("bad {what} `{s}`")))?;
                Ok(T::lit(v))
            };
            rows.push(LedgerRow {
                label: label.trim().to_string(),
                shift: num(shift, "shift_rel")?,
                unc: num(unc, "unc_rel")?,
            });
        }
        if !seen_header {
            return Err(Error::parse("ledger", "missing header row"));
        }
        Self::new(rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(LEDGER_COLUMNS);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.label, r.shift.as_f64(), r.unc.as_f64()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_totals() {
        let l = CorrectionLedger::<f64>::shipped();
        assert_eq!(l.rows().len(), 10);
        assert!((l.total_shift() - 3.6e-3).abs() < 1e-12);
        // sqrt(13.725) · 1e-3
        assert!((l.total_uncertainty() - 13.725f64.sqrt() * 1e-3).abs() < 1e-12);
    }

    #[test]
    fn labels_may_contain_commas() {
        let l = CorrectionLedger::<f64>::parse("label,shift_rel,unc_rel\nA, b, c,0.1,0.2\n").unwrap();
        assert_eq!(l.rows()[0].label, "A, b, c");
        assert_eq!(l.rows()[0].unc, 0.2);
    }

    #[test]
    fn rejects_negative_uncertainty_and_bad_rows() {
        assert!(CorrectionLedger::<f64>::parse("label,shift_rel,unc_rel\nx,0,-1\n").is_err());
        assert!(CorrectionLedger::<f64>::parse("label,shift_rel,unc_rel\nx\n").is_err());
        assert!(CorrectionLedger::<f64>::parse("x,0,1\n").is_err());
    }

    #[test]
    fn csv_round_trip_and_f32() {
        let l = CorrectionLedger::<f64>::shipped();
        assert_eq!(CorrectionLedger::<f64>::parse(&l.to_csv()).unwrap(), l);
        let l32 = CorrectionLedger::<f32>::shipped();
        assert!((l32.total_uncertainty() - 3.7047e-3).abs() < 1e-6);
    }

    #[test]
    fn quadrature_of_three_four() {
        let rows = vec![
            LedgerRow { label: "a".into(), shift: 0.0, unc: 3.0 },
            LedgerRow { label: "b".into(), shift: 0.0, unc: 4.0 },
        ];
        assert_eq!(CorrectionLedger::new(rows).unwrap().total_uncertainty(), 5.0);
    }
}
