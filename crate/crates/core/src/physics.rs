//! Closed-form light shift and Raman scattering rates of the ground-state
//! Zeeman doublet under an off-resonant field, and the closure relation that
//! eliminates the field intensity and polarization.
//!
//! All frequencies and rates are angular (rad/s). Detuning is
//! `ω_laser − ω_resonance`, so red detuning is negative.

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::scalar::{identity_tol, Real};

/// Off-resonant driving field.
///
/// Polarization amplitudes are normalized, `ε₊² + ε₋² + ε_π² = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserField<T> {
    detuning: T,
    rabi: T,
    eps_plus: T,
    eps_minus: T,
    eps_pi: T,
}

impl<T: Real> LaserField<T> {
    pub fn new(detuning: T, rabi: T, eps_plus: T, eps_minus: T, eps_pi: T) -> Result<Self> {
        if !detuning.is_finite() {
            return Err(Error::Domain("detuning must be finite".into()));
        }
        if !(rabi.is_finite() && rabi >= T::zero()) {
            return Err(Error::Domain("Rabi frequency must be finite and >= 0".into()));
        }
        for (name, e) in [("eps_plus", eps_plus), ("eps_minus", eps_minus), ("eps_pi", eps_pi)] {
            if !(e.is_finite() && e >= T::zero()) {
                return Err(Error::Domain(format!("{name} must be finite and >= 0")));
            }
        }
        let norm = eps_plus * eps_plus + eps_minus * eps_minus + eps_pi * eps_pi;
        if (norm - T::one()).abs() > identity_tol(1e-12) {
            return Err(Error::Domain(format!(
                "polarization amplitudes must satisfy sum of squares = 1, got {norm}"
            )));
        }
        Ok(Self {
            detuning,
            rabi,
            eps_plus,
            eps_minus,
            eps_pi,
        })
    }

    /// Builds a field from polarization intensity fractions `ε_q²`, which are
    /// renormalized to sum to one.
    pub fn from_fractions(detuning: T, rabi: T, plus_sq: T, minus_sq: T, pi_sq: T) -> Result<Self> {
        let total = plus_sq + minus_sq + pi_sq;
        if [plus_sq, minus_sq, pi_sq].iter().any(|f| !(f.is_finite() && *f >= T::zero()))
            || total <= T::zero()
        {
            return Err(Error::Domain(
                "polarization fractions must be >= 0 with positive sum".into(),
            ));
        }
        Self::new(
            detuning,
            rabi,
            (plus_sq / total).sqrt(),
            (minus_sq / total).sqrt(),
            (pi_sq / total).sqrt(),
        )
    }

    pub fn detuning(&self) -> T {
        self.detuning
    }

    pub fn rabi(&self) -> T {
        self.rabi
    }

    pub fn eps_plus(&self) -> T {
        self.eps_plus
    }

    pub fn eps_minus(&self) -> T {
        self.eps_minus
    }

    pub fn eps_pi(&self) -> T {
        self.eps_pi
    }

    pub fn pi_fraction(&self) -> T {
        self.eps_pi * self.eps_pi
    }

    /// Same field with σ₊ and σ₋ amplitudes exchanged.
    pub fn swap_circular(self) -> Self {
        Self {
            eps_plus: self.eps_minus,
            eps_minus: self.eps_plus,
            ..self
        }
    }

    pub fn with_detuning(self, detuning: T) -> Result<Self> {
        Self::new(detuning, self.rabi, self.eps_plus, self.eps_minus, self.eps_pi)
    }

    /// Same field with the intensity (Ω²) multiplied by `factor`.
    pub fn with_intensity_factor(self, factor: T) -> Result<Self> {
        if !(factor.is_finite() && factor >= T::zero()) {
            return Err(Error::Domain("intensity factor must be >= 0".into()));
        }
        Ok(Self {
            rabi: self.rabi * factor.sqrt(),
            ..self
        })
    }

    /// Rejects fields whose π component is too large for the leak-rate model.
    pub fn ensure_circular(&self, max_pi_fraction: T) -> Result<()> {
        if self.pi_fraction() > max_pi_fraction {
            return Err(Error::Domain(format!(
                "pi-polarized fraction {} exceeds threshold {max_pi_fraction}",
                self.pi_fraction()
            )));
        }
        Ok(())
    }

    fn nonzero_detuning(&self) -> Result<T> {
        if self.detuning == T::zero() {
            return Err(Error::Domain(
                "on-resonance shift undefined in this model (detuning is zero)".into(),
            ));
        }
        Ok(self.detuning)
    }
}

/// P₁/₂ decay constants: decay rate to S₁/₂, decay rate to D₃/₂ and the leak
/// factor `b = 3 γ_PD / γ_PS`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayConstants<T> {
    gamma_ps: T,
    gamma_pd: T,
    leak_b: T,
}

impl<T: Real> DecayConstants<T> {
    pub fn new(gamma_ps: T, gamma_pd: T) -> Result<Self> {
        if !(gamma_ps.is_finite() && gamma_ps > T::zero()) {
            return Err(Error::Domain("gamma_ps must be > 0".into()));
        }
        if !(gamma_pd.is_finite() && gamma_pd >= T::zero()) {
            return Err(Error::Domain("gamma_pd must be >= 0".into()));
        }
        Ok(Self {
            gamma_ps,
            gamma_pd,
            leak_b: T::lit(3.0) * gamma_pd / gamma_ps,
        })
    }

    pub fn from_leak_factor(gamma_ps: T, leak_b: T) -> Result<Self> {
        if !(leak_b.is_finite() && leak_b >= T::zero()) {
            return Err(Error::Domain("leak factor must be >= 0".into()));
        }
        Self::new(gamma_ps, leak_b * gamma_ps / T::lit(3.0))
    }

    /// From the P₁/₂ → S₁/₂ branching fraction `1/(1 + b/3)`.
    pub fn from_branching(gamma_ps: T, branching: T) -> Result<Self> {
        if !(branching > T::zero() && branching <= T::one()) {
            return Err(Error::Domain("branching fraction must lie in (0, 1]".into()));
        }
        Self::from_leak_factor(gamma_ps, leak_from_branching(branching))
    }

    pub fn gamma_ps(&self) -> T {
        self.gamma_ps
    }

    pub fn gamma_pd(&self) -> T {
        self.gamma_pd
    }

    pub fn leak_b(&self) -> T {
        self.leak_b
    }

    pub fn branching(&self) -> T {
        branching_from_leak(self.leak_b)
    }

    /// Excited state lifetime `1/(γ_PS + γ_PD)`.
    pub fn lifetime(&self) -> T {
        T::one() / (self.gamma_ps * (T::one() + self.leak_b / T::lit(3.0)))
    }
}

pub fn branching_from_leak<T: Real>(leak_b: T) -> T {
    T::one() / (T::one() + leak_b / T::lit(3.0))
}

pub fn leak_from_branching<T: Real>(branching: T) -> T {
    T::lit(3.0) * (T::one() / branching - T::one())
}

/// Raman spin-flip rates. `r_plus` flips ↓→↑, `r_minus` flips ↑→↓.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePair<T> {
    pub r_plus: T,
    pub r_minus: T,
}

impl<T: Real> RatePair<T> {
    pub fn new(r_plus: T, r_minus: T) -> Result<Self> {
        if !(r_plus.is_finite() && r_plus >= T::zero() && r_minus.is_finite() && r_minus >= T::zero())
        {
            return Err(Error::Domain("spin-flip rates must be finite and >= 0".into()));
        }
        Ok(Self { r_plus, r_minus })
    }

    /// Differential rate `δR = R₋ − R₊`.
    pub fn delta_r(&self) -> T {
        self.r_minus - self.r_plus
    }

    pub fn swapped(self) -> Self {
        Self {
            r_plus: self.r_minus,
            r_minus: self.r_plus,
        }
    }
}

/// Differential ac Stark shift between |↑⟩ and |↓⟩,
/// `(1/3) Ω²/(4Δ) (ε₋² − ε₊²)`.
pub fn stark_shift<T: Real>(field: &LaserField<T>) -> Result<T> {
    let delta = field.nonzero_detuning()?;
    let omega_sq = field.rabi * field.rabi;
    let imbalance = field.eps_minus * field.eps_minus - field.eps_plus * field.eps_plus;
    Ok(omega_sq / (T::lit(12.0) * delta) * imbalance)
}

/// Spin-flip rates `R± = γ_PS (ε±² + ε_π²)/9 · Ω²/(4Δ²)`.
pub fn spin_flip_rates<T: Real>(field: &LaserField<T>, gamma_ps: T) -> Result<RatePair<T>> {
    let delta = field.nonzero_detuning()?;
    if !(gamma_ps.is_finite() && gamma_ps > T::zero()) {
        return Err(Error::Domain("gamma_ps must be > 0".into()));
    }
    let saturation = field.rabi * field.rabi / (T::lit(4.0) * delta * delta);
    let scale = gamma_ps / T::lit(9.0) * saturation;
    let pi_sq = field.eps_pi * field.eps_pi;
    RatePair::new(
        scale * (field.eps_plus * field.eps_plus + pi_sq),
        scale * (field.eps_minus * field.eps_minus + pi_sq),
    )
}

/// Loss rates into the D₃/₂ sink, returned as `(R_↑D, R_↓D) = (b R₋, b R₊)`.
///
/// Only meaningful for negligible π polarization; see [`LaserField::ensure_circular`].
pub fn leak_rates<T: Real>(rates: &RatePair<T>, leak_b: T) -> Result<(T, T)> {
    if !(leak_b.is_finite() && leak_b >= T::zero()) {
        return Err(Error::Domain("leak factor must be >= 0".into()));
    }
    Ok((leak_b * rates.r_minus, leak_b * rates.r_plus))
}

/// Decay rate from detuning, differential flip rate and differential light
/// shift: `γ_PS = 3 Δ δR / Δ_S`.
pub fn closure_gamma_ps<T: Real>(detuning: T, delta_r: T, stark: T) -> Result<T> {
    if stark == T::zero() {
        return Err(Error::Domain("ac Stark shift is zero".into()));
    }
    let gamma = T::lit(3.0) * detuning * delta_r / stark;
    if gamma < T::zero() {
        return Err(Error::InconsistentSign(format!(
            "3*detuning*delta_r/stark = {gamma} < 0 (detuning {detuning}, delta_r {delta_r}, stark {stark})"
        )));
    }
    Ok(gamma)
}

/// Reduced dipole matrix element ⟨S₁/₂‖d‖P₁/₂⟩ in units of e·a₀,
/// from `𝒟² = 2 γ_PS · 3 ε₀ ħ λ³ / (8π²)`.
pub fn matrix_element<T: Real>(gamma_ps: T, constants: &PhysicalConstants<T>) -> Result<T> {
    if !(gamma_ps.is_finite() && gamma_ps > T::zero()) {
        return Err(Error::Domain("gamma_ps must be > 0".into()));
    }
    // Work in e·a₀ from the start so f32 does not underflow on SI magnitudes.
    let lambda_au = constants.lambda_ps() / constants.bohr_radius();
    let e = constants.elementary_charge();
    let prefactor = constants.vacuum_permittivity() / e * constants.hbar() / e
        * constants.bohr_radius();
    let pi = T::PI();
    let d_sq = T::lit(6.0) * gamma_ps * prefactor * lambda_au * lambda_au * lambda_au
        / (T::lit(8.0) * pi * pi);
    Ok(d_sq.sqrt())
}
