//! Estimate records: one text file per fit.
//!
//! ```text
//! # iondyne-estimate v1
//! # method=mcmc
//! # converged=true
//! # run=3
//! param,median,ci68_lo,ci68_hi,rhat
//! delta_r,-4.98e3,-5.04e3,-4.92e3,1.001
//! ```
//!
//! Least-squares fits report `point ± 1σ` as the interval and `nan` for rhat.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{FitMethod, ParamSummary, PosteriorEstimate};
use crate::error::{Error, Result};

pub const ESTIMATE_HEADER: &str = "# iondyne-estimate v1";
pub const ESTIMATE_COLUMNS: &str = "param,median,ci68_lo,ci68_hi,rhat";

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRecord {
    pub meta: BTreeMap<String, String>,
    pub params: Vec<ParamSummary>,
}

impl EstimateRecord {
    pub fn from_estimate(est: &PosteriorEstimate) -> Self {
        let mut meta = BTreeMap::new();
        meta.insert("method".to_string(), est.diagnostics.method.as_str().to_string());
        meta.insert("converged".to_string(), est.diagnostics.converged.to_string());
        if !est.diagnostics.acceptance.is_empty() {
            let acc: Vec<String> = est.diagnostics.acceptance.iter().map(|a| format!("{a:.4}")).collect();
            meta.insert("acceptance".to_string(), acc.join(";"));
        }
        Self {
            meta,
            params: est.params.clone(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, name: &str) -> Result<&ParamSummary> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::Input(format!("estimate record lacks `{name}`")))
    }

    pub fn meta_parsed<V: std::str::FromStr>(&self, key: &str) -> Result<V> {
        let raw = self
            .meta
            .get(key)
            .ok_or_else(|| Error::Input(format!("estimate record lacks metadata `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::Input(format!("estimate metadata `{key}={raw}` is malformed")))
    }

    pub fn method(&self) -> Option<FitMethod> {
        match self.meta.get("method").map(String::as_str) {
            Some("mcmc") => Some(FitMethod::Mcmc),
            Some("least_squares") => Some(FitMethod::LeastSquares),
            _ => None,
        }
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::from(ESTIMATE_HEADER);
        out.push('\n');
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str(ESTIMATE_COLUMNS);
        out.push('\n');
        for p in &self.params {
            let rhat = p.rhat.map_or_else(|| "nan".to_string(), |r| format!("{r:e}"));
            let _ = writeln!(out, "{},{:e},{:e},{:e},{rhat}", p.name, p.point, p.lo, p.hi);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim_end() == ESTIMATE_HEADER => {}
            _ => return Err(Error::parse("line 1", format!("expected `{ESTIMATE_HEADER}`"))),
        }
        let mut meta = BTreeMap::new();
        let mut params = Vec::new();
        for (i, l) in lines {
            let loc = format!("line {}", i + 1);
            let l = l.trim_end();
            if l.is_empty() || l == ESTIMATE_COLUMNS {
                continue;
            }
            if let Some(body) = l.strip_prefix('#') {
                let (k, v) = body
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| Error::parse(&loc, "expected `# key=value`"))?;
                meta.insert(k.to_string(), v.to_string());
                continue;
            }
            let cols: Vec<&str> = l.split(',').collect();
            if cols.len() != 5 {
                return Err(Error::parse(&loc, "expected 5 columns"));
            }
            let num = |s: &str| -> Result<f64> {
                s.trim().parse().map_err(|_| Error::parse(&loc, format!("bad number `{s}`")))
            };
            let rhat = num(cols[4])?;
            params.push(ParamSummary {
                name: cols[0].to_string(),
                point: num(cols[1])?,
                lo: num(cols[2])?,
                hi: num(cols[3])?,
                rhat: if rhat.is_nan() { None } else { Some(rhat) },
            });
        }
        Ok(Self { meta, params })
    }
}
