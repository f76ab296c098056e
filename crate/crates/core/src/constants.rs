//! Physical constants table.
//!
//! Constants are read from a versioned key/value text file, one entry per
//! line in the form `name = value # unit`. The reference table shipped with
//! the crate lives in `data/constants.txt` and is embedded at compile time.
//!
//! Naming note: `vacuum_permittivity` is the electric constant. It is unrelated
//! to the pi-polarization amplitude, which is called `eps_pi` everywhere.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Header line every constants file must start with.
pub const CONSTANTS_HEADER: &str = "# iondyne-constants v1";

const REFERENCE_TABLE: &str = include_str!("../data/constants.txt");

const KEYS: [&str; 6] = [
    "hbar",
    "vacuum_permittivity",
    "elementary_charge",
    "bohr_radius",
    "speed_of_light",
    "lambda_ps",
];

/// SI constants plus the transition wavelength used for the dipole matrix element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants<T> {
    hbar: T,
    vacuum_permittivity: T,
    elementary_charge: T,
    bohr_radius: T,
    speed_of_light: T,
    lambda_ps: T,
}

impl<T: Real> PhysicalConstants<T> {
    /// The reference table shipped with the crate.
    pub fn reference() -> Self {
        Self::parse(REFERENCE_TABLE).expect("embedded constants table is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, first)) if first.trim() == CONSTANTS_HEADER => {}
            _ => {
                return Err(Error::parse(
                    "line 1",
                    format!("expected header `{CONSTANTS_HEADER}`"),
                ))
            }
        }
        let mut values: [Option<f64>; 6] = [None; 6];
        for (idx, raw) in lines {
            let location = format!("line {}", idx + 1);
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (name, value) = content
                .split_once('=')
                .ok_or_else(|| Error::parse(&location, "expected `name = value`"))?;
            let name = name.trim();
            let slot = KEYS
                .iter()
                .position(|k| *k == name)
                .ok_or_else(|| Error::parse(&location, format!("unknown constant `{name}`")))?;
            if values[slot].is_some() {
                return Err(Error::parse(&location, format!("duplicate constant `{name}`")));
            }
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|e| Error::parse(&location, format!("`{name}`: {e}")))?;
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::parse(
                    &location,
                    format!("`{name}` must be finite and strictly positive"),
                ));
            }
            values[slot] = Some(value);
        }
        let get = |i: usize| -> Result<T> {
            values[i]
                .map(T::lit)
                .ok_or_else(|| Error::parse("table", format!("missing constant `{}`", KEYS[i])))
        };
        Ok(Self {
            hbar: get(0)?,
            vacuum_permittivity: get(1)?,
            elementary_charge: get(2)?,
            bohr_radius: get(3)?,
            speed_of_light: get(4)?,
            lambda_ps: get(5)?,
        })
    }

    /// Returns a copy with a different transition wavelength (metres).
    pub fn with_lambda_ps(self, lambda_ps: T) -> Result<Self> {
        if !(lambda_ps.is_finite() && lambda_ps > T::zero()) {
            return Err(Error::Domain("lambda_ps must be strictly positive".into()));
        }
        Ok(Self { lambda_ps, ..self })
    }

    pub fn hbar(&self) -> T {
        self.hbar
    }

    pub fn vacuum_permittivity(&self) -> T {
        self.vacuum_permittivity
    }

    pub fn elementary_charge(&self) -> T {
        self.elementary_charge
    }

    pub fn bohr_radius(&self) -> T {
        self.bohr_radius
    }

    pub fn speed_of_light(&self) -> T {
        self.speed_of_light
    }

    pub fn lambda_ps(&self) -> T {
        self.lambda_ps
    }

    /// Atomic unit of electric dipole moment, e·a₀, in C·m.
    pub fn e_a0(&self) -> T {
        self.elementary_charge * self.bohr_radius
    }

    /// Renders the table back into the file format.
    pub fn to_file_string(&self) -> String {
        let units = ["J s", "F m^-1", "C", "m", "m s^-1", "m"];
        let vals = [
            self.hbar,
            self.vacuum_permittivity,
            self.elementary_charge,
            self.bohr_radius,
            self.speed_of_light,
            self.lambda_ps,
        ];
        let mut out = String::from(CONSTANTS_HEADER);
        out.push('\n');
        for ((key, unit), v) in KEYS.iter().zip(units).zip(vals) {
            out.push_str(&format!("{key} = {:e} # {unit}\n", v.as_f64()));
        }
        out
    }
}
