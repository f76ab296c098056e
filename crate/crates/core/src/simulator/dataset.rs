//! Shot datasets and their text file format.
//!
//! ```text
//! # iondyne-dataset v1
//! # seed=7
//! # detuning_label=m12.03
//! # kind=flip
//! # run=0
//! duration_s,shots,dark_count,init
//! 0.00000000e0,2500,2391,up
//! ```
//!
//! Metadata lines come in a fixed order: `seed`, `detuning_label`, `kind`,
//! then any extra keys sorted by name. Durations carry 9 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::dynamics::Spin;
use crate::error::{Error, Result};

pub const DATASET_HEADER: &str = "# iondyne-dataset v1";
pub const DATASET_COLUMNS: &str = "duration_s,shots,dark_count,init";

/// What a scan measures; also the per-row `init` column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScanKind {
    Flip(Spin),
    Echo,
}

impl ScanKind {
    pub fn init_label(self) -> &'static str {
        match self {
            ScanKind::Flip(s) => s.as_str(),
            ScanKind::Echo => "echo",
        }
    }

    pub fn kind_label(self) -> &'static str {
        match self {
            ScanKind::Flip(_) => "flip",
            ScanKind::Echo => "echo",
        }
    }

    pub fn from_init_label(s: &str) -> Option<Self> {
        match s {
            "up" => Some(ScanKind::Flip(Spin::Up)),
            "down" => Some(ScanKind::Flip(Spin::Down)),
            "echo" => Some(ScanKind::Echo),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotRow {
    pub duration: f64,
    pub shots: u32,
    pub dark_count: u32,
}

impl ShotRow {
    pub fn dark_fraction(&self) -> f64 {
        self.dark_count as f64 / self.shots as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub seed: u64,
    pub detuning_label: String,
    pub kind: ScanKind,
    pub extra: BTreeMap<String, String>,
}

impl DatasetMeta {
    pub fn new(seed: u64, detuning_label: impl Into<String>, kind: ScanKind) -> Self {
        Self {
            seed,
            detuning_label: detuning_label.into(),
            kind,
            extra: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get_parsed<V: std::str::FromStr>(&self, key: &str) -> Result<V> {
        let raw = self
            .extra
            .get(key)
            .ok_or_else(|| Error::Input(format!("dataset metadata lacks `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::Input(format!("dataset metadata `{key}={raw}` is malformed")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotDataset {
    rows: Vec<ShotRow>,
    meta: DatasetMeta,
}

impl ShotDataset {
    pub fn new(rows: Vec<ShotRow>, meta: DatasetMeta) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if r.dark_count > r.shots {
                return Err(Error::Input(format!(
                    "row {i}: dark_count {} exceeds shots {}",
                    r.dark_count, r.shots
                )));
            }
            if r.shots == 0 {
                return Err(Error::Input(format!("row {i}: zero shots")));
            }
            if !(r.duration.is_finite() && r.duration >= 0.0) {
                return Err(Error::Input(format!("row {i}: invalid duration {}", r.duration)));
            }
        }
        Ok(Self { rows, meta })
    }

    pub fn rows(&self) -> &[ShotRow] {
        &self.rows
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn kind(&self) -> ScanKind {
        self.meta.kind
    }

    pub fn durations(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.duration)
    }

    /// Same data with rows permuted by `order`.
    pub fn reordered(&self, order: &[usize]) -> Self {
        Self {
            rows: order.iter().map(|&i| self.rows[i]).collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        out.push_str(DATASET_HEADER);
        out.push('\n');
        let _ = writeln!(out, "# seed={}", self.meta.seed);
        let _ = writeln!(out, "# detuning_label={}", self.meta.detuning_label);
        let _ = writeln!(out, "# kind={}", self.meta.kind.kind_label());
        for (k, v) in &self.meta.extra {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str(DATASET_COLUMNS);
        out.push('\n');
        let init = self.meta.kind.init_label();
        for r in &self.rows {
            let _ = writeln!(out, "{:.8e},{},{},{init}", r.duration, r.shots, r.dark_count);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().peekable();
        match lines.next() {
            Some((_, l)) if l.trim_end() == DATASET_HEADER => {}
            _ => {
                return Err(Error::parse(
                    "line 1",
                    format!("expected header `{DATASET_HEADER}`"),
                ))
            }
        }
        let mut seed = None;
        let mut label = None;
        let mut kind_label = None;
        let mut extra = BTreeMap::new();
        while let Some((i, l)) = lines.peek() {
            let Some(body) = l.strip_prefix('#') else { break };
            let loc = format!("line {}", i + 1);
            let (k, v) = body
                .trim()
                .split_once('=')
                .ok_or_else(|| Error::parse(&loc, "expected `# key=value`"))?;
            match k {
                "seed" => {
                    seed = Some(v.parse::<u64>().map_err(|e| Error::parse(&loc, e.to_string()))?)
                }
                "detuning_label" => label = Some(v.to_string()),
                "kind" => kind_label = Some(v.to_string()),
                _ => {
                    extra.insert(k.to_string(), v.to_string());
                }
            }
            lines.next();
        }
        if let Some((_, l)) = lines.peek() {
            if l.trim_end() == DATASET_COLUMNS {
                lines.next();
            }
        }
        let mut rows = Vec::new();
        let mut kind: Option<ScanKind> = None;
        for (i, l) in lines {
            let loc = format!("line {}", i + 1);
            if l.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = l.split(',').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(Error::parse(&loc, "expected 4 comma-separated columns"));
            }
            let duration: f64 = cols[0].parse().map_err(|_| Error::parse(&loc, "bad duration"))?;
            let shots: u32 = cols[1].parse().map_err(|_| Error::parse(&loc, "bad shots"))?;
            let dark_count: u32 = cols[2]
                .parse()
                .map_err(|_| Error::parse(&loc, "bad dark_count"))?;
            let row_kind = ScanKind::from_init_label(cols[3])
                .ok_or_else(|| Error::parse(&loc, format!("unknown init `{}`", cols[3])))?;
            match kind {
                None => kind = Some(row_kind),
                Some(k) if k != row_kind => {
                    return Err(Error::parse(&loc, "mixed init labels in one dataset"))
                }
                _ => {}
            }
            rows.push(ShotRow {
                duration,
                shots,
                dark_count,
            });
        }
        let kind = kind.ok_or_else(|| Error::parse("body", "dataset has no rows"))?;
        if let Some(kl) = kind_label {
            if kl != kind.kind_label() {
                return Err(Error::parse("metadata", format!("kind={kl} contradicts rows")));
            }
        }
        let meta = DatasetMeta {
            seed: seed.ok_or_else(|| Error::parse("metadata", "missing seed"))?,
            detuning_label: label.ok_or_else(|| Error::parse("metadata", "missing detuning_label"))?,
            kind,
            extra,
        };
        Self::new(rows, meta)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { location, message } => Error::Parse {
                location: format!("{}: {location}", path.display()),
                message,
            },
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> ShotDataset {
        let meta = DatasetMeta::new(7, "m12.03", ScanKind::Flip(Spin::Up))
            .with("run", 3)
            .with("block", 1);
        ShotDataset::new(
            vec![
                ShotRow { duration: 0.0, shots: 2500, dark_count: 2391 },
                ShotRow { duration: 1.2e-7, shots: 2500, dark_count: 2000 },
                ShotRow { duration: 1.0e-3, shots: 2500, dark_count: 17 },
            ],
            meta,
        )
        .unwrap()
    }

    #[test]
    fn exact_text_layout() {
        let text = sample().to_file_string();
        let expected = "# iondyne-dataset v1\n# seed=7\n# detuning_label=m12.03\n# kind=flip\n\
                        # block=1\n# run=3\nduration_s,shots,dark_count,init\n\
                        0.00000000e0,2500,2391,up\n1.20000000e-7,2500,2000,up\n\
                        1.00000000e-3,2500,17,up\n";
        assert_eq!(text, expected);
    }

    #[test]
    fn parse_errors() {
        assert!(ShotDataset::parse("duration_s,shots\n").is_err());
        let too_many = "# iondyne-dataset v1\n# seed=1\n# detuning_label=a\n1e-6,10,11,up\n";
        assert!(matches!(ShotDataset::parse(too_many), Err(Error::Input(_))));
        let mixed = "# iondyne-dataset v1\n# seed=1\n# detuning_label=a\n1e-6,10,1,up\n2e-6,10,1,down\n";
        assert!(ShotDataset::parse(mixed).is_err());
        let bad_init = "# iondyne-dataset v1\n# seed=1\n# detuning_label=a\n1e-6,10,1,left\n";
        assert!(ShotDataset::parse(bad_init).is_err());
    }

    #[test]
    fn header_row_optional() {
        let text = "# iondyne-dataset v1\n# seed=1\n# detuning_label=a\n1e-6,10,1,echo\n";
        let d = ShotDataset::parse(text).unwrap();
        assert_eq!(d.kind(), ScanKind::Echo);
        assert_eq!(d.rows().len(), 1);
    }

    proptest! {
        #[test]
        fn round_trip_preserves_rows_to_nine_digits(
            rows in prop::collection::vec((0.0f64..1e-2, 1u32..5000, 0.0f64..=1.0), 1..40),
            seed in any::<u64>(),
        ) {
            let rows: Vec<ShotRow> = rows
                .into_iter()
                .map(|(d, n, f)| ShotRow { duration: d, shots: n, dark_count: (f * n as f64) as u32 })
                .collect();
            let ds = ShotDataset::new(rows, DatasetMeta::new(seed, "x", ScanKind::Flip(Spin::Down))).unwrap();
            let back = ShotDataset::parse(&ds.to_file_string()).unwrap();
            prop_assert_eq!(back.meta(), ds.meta());
            for (a, b) in ds.rows().iter().zip(back.rows()) {
                prop_assert_eq!(a.shots, b.shots);
                prop_assert_eq!(a.dark_count, b.dark_count);
                prop_assert!((a.duration - b.duration).abs() <= 5e-9 * a.duration.abs());
            }
            prop_assert_eq!(back.to_file_string(), ds.to_file_string());
        }
    }
}
