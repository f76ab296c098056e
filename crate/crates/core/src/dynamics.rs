//! Spin population dynamics under Raman spin flips with loss into a
//! metastable sink.
//!
//! ```text
//! ṗ↑ = −R₋(1+b) p↑ + R₊ p↓
//! ṗ↓ = −R₊(1+b) p↓ + R₋ p↑
//! ṗ_sink = b R₋ p↑ + b R₊ p↓
//! ```

use crate::error::{Error, Result};
use crate::physics::RatePair;
use crate::scalar::Real;

/// Ground-state spin label used for initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn flipped(self) -> Self {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Spin::Up => "up",
            Spin::Down => "down",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationState<T> {
    pub p_up: T,
    pub p_down: T,
    pub p_sink: T,
}

impl<T: Real> PopulationState<T> {
    pub fn pure(spin: Spin) -> Self {
        match spin {
            Spin::Up => Self::new_unchecked(T::one(), T::zero(), T::zero()),
            Spin::Down => Self::new_unchecked(T::zero(), T::one(), T::zero()),
        }
    }

    pub fn new(p_up: T, p_down: T, p_sink: T) -> Result<Self> {
        let s = Self::new_unchecked(p_up, p_down, p_sink);
        s.validate()?;
        Ok(s)
    }

    fn new_unchecked(p_up: T, p_down: T, p_sink: T) -> Self {
        Self {
            p_up,
            p_down,
            p_sink,
        }
    }

    pub fn total(&self) -> T {
        self.p_up + self.p_down + self.p_sink
    }

    /// Each component in [0, 1] and total 1, both within 1e-9.
    pub fn validate(&self) -> Result<()> {
        let tol = T::lit(1e-9);
        for p in self.as_array() {
            if !(p.is_finite() && p >= -tol && p <= T::one() + tol) {
                return Err(Error::Domain(format!("population {p} outside [0, 1]")));
            }
        }
        if (self.total() - T::one()).abs() > tol {
            return Err(Error::Domain(format!(
                "populations sum to {} instead of 1",
                self.total()
            )));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [T; 3] {
        [self.p_up, self.p_down, self.p_sink]
    }

    fn from_array(a: [T; 3]) -> Self {
        Self::new_unchecked(a[0], a[1], a[2])
    }

    /// Largest absolute component difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(a, b)| (*a - b).abs())
            .fold(T::zero(), T::max)
    }
}

/// Rates and leak factor driving the rate equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsParams<T> {
    rates: RatePair<T>,
    leak_b: T,
}

impl<T: Real> DynamicsParams<T> {
    pub fn new(rates: RatePair<T>, leak_b: T) -> Result<Self> {
        let rates = RatePair::new(rates.r_plus, rates.r_minus)?;
        if !(leak_b.is_finite() && leak_b >= T::zero()) {
            return Err(Error::Domain("leak factor must be >= 0".into()));
        }
        let p = Self { rates, leak_b };
        if rates.r_plus > T::zero() && rates.r_minus > T::zero() {
            assert!(p.r_tilde_sq() > T::zero(), "r_tilde^2 must be positive");
        }
        Ok(p)
    }

    pub fn rates(&self) -> RatePair<T> {
        self.rates
    }

    pub fn leak_b(&self) -> T {
        self.leak_b
    }

    /// `R̄ = (1+b)(R₋+R₊)`, the trace of the decay generator.
    pub fn r_bar(&self) -> T {
        (T::one() + self.leak_b) * (self.rates.r_minus + self.rates.r_plus)
    }

    /// `R̃² = R̄² − 4b(2+b)R₋R₊`, evaluated in the cancellation-free form
    /// `(1+b)²δR² + 4R₋R₊`.
    pub fn r_tilde_sq(&self) -> T {
        let k = T::one() + self.leak_b;
        let dr = self.rates.delta_r();
        k * k * dr * dr + T::lit(4.0) * self.rates.r_minus * self.rates.r_plus
    }

    pub fn r_tilde(&self) -> T {
        self.r_tilde_sq().sqrt()
    }

    /// Same dynamics seen with spin labels exchanged.
    pub fn mirrored(&self) -> Self {
        Self {
            rates: self.rates.swapped(),
            leak_b: self.leak_b,
        }
    }

    /// Right-hand side of the rate equations, including the sink.
    pub fn derivative(&self, p: [T; 3]) -> [T; 3] {
        let RatePair { r_plus, r_minus } = self.rates;
        let b = self.leak_b;
        let k = T::one() + b;
        [
            -r_minus * k * p[0] + r_plus * p[1],
            -r_plus * k * p[1] + r_minus * p[0],
            b * (r_minus * p[0] + r_plus * p[1]),
        ]
    }
}

/// Closed-form populations at time `t` after preparing `init`.
pub fn evolve_analytic<T: Real>(
    params: &DynamicsParams<T>,
    init: Spin,
    t: T,
) -> Result<PopulationState<T>> {
    if !(t >= T::zero()) {
        return Err(Error::Domain(format!("time must be >= 0, got {t}")));
    }
    // Down initialization is the up solution with R₊ ↔ R₋ and labels swapped.
    let (p_same, p_other) = match init {
        Spin::Up => same_and_other(params, t),
        Spin::Down => same_and_other(&params.mirrored(), t),
    };
    let (p_up, p_down) = match init {
        Spin::Up => (p_same, p_other),
        Spin::Down => (p_other, p_same),
    };
    Ok(PopulationState {
        p_up,
        p_down,
        p_sink: T::one() - p_up - p_down,
    })
}

/// Populations of the initial level and of the opposite level for
/// initialization in |↑⟩.
fn same_and_other<T: Real>(params: &DynamicsParams<T>, t: T) -> (T, T) {
    let RatePair { r_plus, r_minus } = params.rates;
    let k = T::one() + params.leak_b;
    let r_bar = params.r_bar();
    let r_tilde = params.r_tilde();
    let half = T::lit(0.5);
    let slow = (-r_bar + r_tilde) * half;
    let fast = (-r_bar - r_tilde) * half;
    // C = e^{−R̄t/2} cosh(R̃t/2),  S = (2/R̃) e^{−R̄t/2} sinh(R̃t/2)
    let c = ((slow * t).exp() + (fast * t).exp()) * half;
    let s = if r_tilde > T::zero() {
        (slow * t).exp() * -(-r_tilde * t).exp_m1() / r_tilde
    } else {
        t * (-r_bar * t * half).exp()
    };
    let p_same = c - k * (r_minus - r_plus) * s * half;
    let p_other = r_minus * s;
    (p_same, p_other)
}

const FIRST_STEP_COUNT: usize = 8;
const MAX_STEP_COUNT: usize = 1 << 22;

/// Fixed-step RK4 integration with step halving until successive refinements
/// agree to `rel_tol` (relative to the largest population), followed by one
/// Richardson extrapolation.
pub fn evolve_numeric<T: Real>(
    params: &DynamicsParams<T>,
    init: PopulationState<T>,
    t: T,
    rel_tol: T,
) -> Result<PopulationState<T>> {
    init.validate()?;
    if !(t >= T::zero() && t.is_finite()) {
        return Err(Error::Domain(format!("time must be finite and >= 0, got {t}")));
    }
    if !(rel_tol >= T::lit(1e-14) && rel_tol <= T::lit(1e-6)) {
        return Err(Error::Domain(format!(
            "rel_tol must lie in [1e-14, 1e-6], got {rel_tol}"
        )));
    }
    if t == T::zero() {
        return Ok(init);
    }
    let start = init.as_array();
    let mut steps = FIRST_STEP_COUNT;
    let mut coarse = rk4(params, start, t, steps);
    loop {
        steps *= 2;
        let fine = rk4(params, start, t, steps);
        let scale = fine.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let diff = fine
            .iter()
            .zip(coarse)
            .fold(T::zero(), |m, (f, c)| m.max((*f - c).abs()));
        let finite = coarse.iter().chain(fine.iter()).all(|v| v.is_finite());
        if finite && diff <= rel_tol * scale {
            let fifteen = T::lit(15.0);
            let mut out = [T::zero(); 3];
            for i in 0..3 {
                out[i] = fine[i] + (fine[i] - coarse[i]) / fifteen;
            }
            return Ok(PopulationState::from_array(out));
        }
        if steps >= MAX_STEP_COUNT {
            return Err(Error::Integration {
                steps,
                coarse: coarse.map(Real::as_f64),
                fine: fine.map(Real::as_f64),
            });
        }
        coarse = fine;
    }
}

fn rk4<T: Real>(params: &DynamicsParams<T>, mut y: [T; 3], t: T, steps: usize) -> [T; 3] {
    let h = t / T::lit(steps as f64);
    let half = h * T::lit(0.5);
    let sixth = h / T::lit(6.0);
    let axpy = |y: [T; 3], a: T, k: [T; 3]| [y[0] + a * k[0], y[1] + a * k[1], y[2] + a * k[2]];
    for _ in 0..steps {
        let k1 = params.derivative(y);
        let k2 = params.derivative(axpy(y, half, k1));
        let k3 = params.derivative(axpy(y, half, k2));
        let k4 = params.derivative(axpy(y, h, k3));
        for i in 0..3 {
            y[i] = y[i] + sixth * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]);
        }
    }
    y
}

/// Spin-echo readout model: damped cosine at the differential light shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EchoParams<T> {
    pub contrast: T,
    pub offset: T,
    pub phase: T,
    pub decay_rate: T,
}

impl<T: Real> EchoParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.contrast >= T::zero() && self.contrast <= T::lit(0.5)) {
            return Err(Error::Domain(format!(
                "echo contrast must lie in [0, 0.5], got {}",
                self.contrast
            )));
        }
        if !(self.offset >= T::zero() && self.offset <= T::one()) {
            return Err(Error::Domain(format!(
                "echo offset must lie in [0, 1], got {}",
                self.offset
            )));
        }
        if !(self.phase.is_finite() && self.decay_rate.is_finite()) {
            return Err(Error::Domain("echo phase and decay rate must be finite".into()));
        }
        Ok(())
    }
}

/// Dark-event probability from [`spin_echo_signal`]. `valid` is false when
/// the unclamped model left [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EchoSignal<T> {
    pub value: T,
    pub valid: bool,
}

/// `offset + contrast·exp(−decay·t)·cos(stark·t + phase)`, clamped to [0, 1].
pub fn spin_echo_signal<T: Real>(
    stark: T,
    pulse_t: T,
    params: &EchoParams<T>,
) -> Result<EchoSignal<T>> {
    params.validate()?;
    let raw = echo_model(stark, pulse_t, params);
    let valid = raw >= T::zero() && raw <= T::one();
    Ok(EchoSignal {
        value: raw.max(T::zero()).min(T::one()),
        valid,
    })
}

pub(crate) fn echo_model<T: Real>(stark: T, pulse_t: T, p: &EchoParams<T>) -> T {
    p.offset + p.contrast * (-p.decay_rate * pulse_t).exp() * (stark * pulse_t + p.phase).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(rp: f64, rm: f64, b: f64) -> DynamicsParams<f64> {
        DynamicsParams::new(RatePair::new(rp, rm).unwrap(), b).unwrap()
    }

    #[test]
    fn initial_conditions() {
        let p = params(3000.0, 60.0, 0.206);
        assert_eq!(
            evolve_analytic(&p, Spin::Up, 0.0).unwrap(),
            PopulationState::pure(Spin::Up)
        );
        assert_eq!(
            evolve_analytic(&p, Spin::Down, 0.0).unwrap(),
            PopulationState::pure(Spin::Down)
        );
    }

    #[test]
    fn negative_time_rejected() {
        let p = params(1.0, 1.0, 0.0);
        assert!(matches!(evolve_analytic(&p, Spin::Up, -1.0), Err(Error::Domain(_))));
        assert!(evolve_numeric(&p, PopulationState::pure(Spin::Up), -1.0, 1e-9).is_err());
    }

    #[test]
    fn closed_system_steady_state() {
        let (rp, rm) = (800.0, 200.0);
        let p = params(rp, rm, 0.0);
        let s = evolve_analytic(&p, Spin::Up, 1.0).unwrap();
        assert!((s.p_up - rp / (rp + rm)).abs() < 1e-12);
        assert!((s.p_down - rm / (rp + rm)).abs() < 1e-12);
        assert!(s.p_sink.abs() < 1e-12);
    }

    #[test]
    fn reference_point_against_rk4() {
        let p = params(3000.0, 60.0, 0.206);
        let t = 500e-6;
        let a = evolve_analytic(&p, Spin::Down, t).unwrap();
        let n = evolve_numeric(&p, PopulationState::pure(Spin::Down), t, 1e-12).unwrap();
        assert!(a.max_abs_diff(&n) < 1e-9, "{a:?} vs {n:?}");
    }

    #[test]
    fn large_times_stay_finite() {
        let p = params(1e5, 1e5, 1.0);
        let s = evolve_analytic(&p, Spin::Up, 1e6).unwrap();
        assert_eq!(s.p_up, 0.0);
        assert_eq!(s.p_down, 0.0);
        assert_eq!(s.p_sink, 1.0);
    }

    #[test]
    fn zero_rates_freeze_state() {
        let p = params(0.0, 0.0, 0.5);
        let init = PopulationState::new(0.3, 0.6, 0.1).unwrap();
        let n = evolve_numeric(&p, init, 10.0, 1e-10).unwrap();
        assert_eq!(n, init);
        assert_eq!(
            evolve_analytic(&p, Spin::Up, 3.0).unwrap(),
            PopulationState::pure(Spin::Up)
        );
    }

    #[test]
    fn mirror_symmetry() {
        let p = params(2500.0, 40.0, 0.2);
        for &t in &[1e-5, 1e-4, 7e-4] {
            let down = evolve_analytic(&p, Spin::Down, t).unwrap();
            let mirrored_up = evolve_analytic(&p.mirrored(), Spin::Up, t).unwrap();
            assert_eq!(down.p_up, mirrored_up.p_down);
            assert_eq!(down.p_down, mirrored_up.p_up);
        }
    }

    #[test]
    fn integrator_reports_nonconvergence() {
        // Explicit RK4 stays unstable up to the step budget.
        let p = params(1e5, 1e5, 1.0);
        let err = evolve_numeric(&p, PopulationState::pure(Spin::Up), 100.0, 1e-14).unwrap_err();
        assert!(matches!(err, Error::Integration { .. }), "{err}");
    }

    #[test]
    fn rel_tol_range_enforced() {
        let p = params(1.0, 1.0, 0.0);
        let init = PopulationState::pure(Spin::Up);
        assert!(evolve_numeric(&p, init, 1.0, 1e-3).is_err());
        assert!(evolve_numeric(&p, init, 1.0, 1e-16).is_err());
    }

    #[test]
    fn f32_analytic_close_to_f64() {
        let p64 = params(3000.0, 60.0, 0.206);
        let p32 = DynamicsParams::new(RatePair::new(3000f32, 60f32).unwrap(), 0.206f32).unwrap();
        for &t in &[0.0, 1e-4, 5e-4, 2e-3] {
            let a = evolve_analytic(&p64, Spin::Up, t).unwrap();
            let b = evolve_analytic(&p32, Spin::Up, t as f32).unwrap();
            assert!((a.p_up - b.p_up as f64).abs() < 1e-5);
            assert!((a.p_down - b.p_down as f64).abs() < 1e-5);
        }
    }

    #[test]
    fn echo_examples() {
        let flat = EchoParams {
            contrast: 0.0,
            offset: 0.4,
            phase: 1.0,
            decay_rate: 1e4,
        };
        for t in [0.0, 1e-7, 3e-6] {
            assert_eq!(spin_echo_signal(1e6, t, &flat).unwrap().value, 0.4);
        }
        let p = EchoParams {
            contrast: 0.45,
            offset: 0.5,
            phase: 0.0,
            decay_rate: 0.0,
        };
        let stark = 2.0 * std::f64::consts::PI * 333e3;
        let s = spin_echo_signal(stark, std::f64::consts::PI / stark, &p).unwrap();
        assert!((s.value - 0.05).abs() < 1e-12);
        assert!(s.valid);
    }

    #[test]
    fn echo_period_count_on_scan_grid() {
        // 250 points spaced 120 ns span 30 µs.
        let window = 249.0 * 120e-9;
        let periods = |f_hz: f64| f_hz * window;
        assert!((periods(333e3) - 9.95).abs() < 0.05);
        let f40 = 40.0 / window;
        assert!((f40 / 1.33e6 - 1.0).abs() < 0.01);
    }

    #[test]
    fn echo_clamps_and_flags() {
        let p = EchoParams {
            contrast: 0.5,
            offset: 0.9,
            phase: 0.0,
            decay_rate: 0.0,
        };
        let s = spin_echo_signal(1.0, 0.0, &p).unwrap();
        assert_eq!(s.value, 1.0);
        assert!(!s.valid);
        let bad = EchoParams { contrast: 0.6, ..p };
        assert!(spin_echo_signal(1.0, 0.0, &bad).is_err());
    }
}
