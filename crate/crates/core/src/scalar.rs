//! Scalar abstraction for the closed-form physics and the rate-equation solvers.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the analytic kernels are written against: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal representable in scalar type")
    }

    /// Lossy conversion used for error payloads and I/O.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Tolerance for identities that must hold "to machine precision": `max(floor, 16 eps)`.
pub(crate) fn identity_tol<T: Real>(floor: f64) -> T {
    T::lit(floor).max(T::epsilon() * T::lit(16.0))
}
