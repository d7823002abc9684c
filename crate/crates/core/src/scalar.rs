use std::fmt::Debug;
use std::ops::Neg;

use num_traits::{FromPrimitive, Num};

/// Field element usable by the exact algebraic kernels: f32, f64, or a rational type.
pub trait Scalar: Num + Neg<Output = Self> + Copy + PartialOrd + Debug + FromPrimitive {}

impl<T> Scalar for T where T: Num + Neg<Output = T> + Copy + PartialOrd + Debug + FromPrimitive {}

#[inline]
pub(crate) fn lit<T: Scalar>(n: i32) -> T {
    T::from_i32(n).expect("small integer literal")
}
