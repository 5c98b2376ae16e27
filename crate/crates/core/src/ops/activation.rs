//! Elementwise activation functions and their derivatives.

use crate::element::Element;
use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// Exact erf form, `x·Φ(x)`.
    Gelu,
    Sigmoid,
    Silu,
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn sigmoid_scalar<T: Element>(x: T) -> T {
    // split on sign so exp never overflows
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn gelu_scalar<T: Element>(x: T) -> T {
    let half = T::from_f64(0.5);
    half * x * (T::one() + (x * T::from_f64(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

impl Activation {
    #[inline]
    pub fn apply<T: Element>(self, x: T) -> T {
        match self {
            Activation::Gelu => gelu_scalar(x),
            Activation::Sigmoid => sigmoid_scalar(x),
            Activation::Silu => x * sigmoid_scalar(x),
        }
    }

    #[inline]
    pub fn derivative<T: Element>(self, x: T) -> T {
        match self {
            Activation::Gelu => {
                let cdf = T::from_f64(0.5)
                    * (T::one() + (x * T::from_f64(std::f64::consts::FRAC_1_SQRT_2)).erf());
                let pdf = T::from_f64(FRAC_1_SQRT_2PI) * (-(x * x) * T::from_f64(0.5)).exp();
                cdf + x * pdf
            }
            Activation::Sigmoid => {
                let s = sigmoid_scalar(x);
                s * (T::one() - s)
            }
            Activation::Silu => {
                let s = sigmoid_scalar(x);
                s * (T::one() + x * (T::one() - s))
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Gelu => "gelu",
            Activation::Sigmoid => "sigmoid",
            Activation::Silu => "silu",
        }
    }

    pub fn forward<T: Element>(self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.map(self.name(), |v| self.apply(v))
    }

    /// `grad_out ⊙ f'(x)`.
    pub fn backward<T: Element>(self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        x.zip_map(grad_out, self.name(), |v, g| g * self.derivative(v))
    }
}

pub fn gelu<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    Activation::Gelu.forward(x)
}

pub fn sigmoid<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    Activation::Sigmoid.forward(x)
}

pub fn silu<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    Activation::Silu.forward(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_points() {
        assert_eq!(sigmoid_scalar(0.0f64), 0.5);
        assert_eq!(gelu_scalar(0.0f64), 0.0);
        assert_eq!(Activation::Silu.apply(0.0f64), 0.0);
        // e^-50 / (1 + e^-50) = 1.9287498479639178e-22
        let s = sigmoid_scalar(-50.0f64);
        assert!(s > 0.0 && s <= 2e-22);
        assert!((s - 1.928_749_847_963_917_8e-22).abs() < 1e-35);
        assert!(sigmoid_scalar(-800.0f64) >= 0.0);
        assert!(sigmoid_scalar(800.0f64) <= 1.0);
        // Φ(1) = 0.8413447460685429
        assert!((gelu_scalar(1.0f64) - 0.841_344_746_068_542_9).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_central_differences() {
        for act in [Activation::Gelu, Activation::Sigmoid, Activation::Silu] {
            for &x in &[-3.2f64, -0.7, 0.0, 0.4, 2.5] {
                let eps = 1e-6;
                let num = (act.apply(x + eps) - act.apply(x - eps)) / (2.0 * eps);
                assert!((act.derivative(x) - num).abs() < 1e-8, "{act:?} at {x}");
            }
        }
        assert_eq!(Activation::Sigmoid.derivative(0.0f64), 0.25);
    }
}
