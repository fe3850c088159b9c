//! Dense row-major tensors over f32 or f64.
//!
//! Training runs in f32; gradient verification instantiates the same
//! code paths in f64. The [`Scalar`] trait is the only abstraction over
//! the two, deliberately small.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Element type for tensors: f32 or f64.
pub trait Scalar:
    num_traits::Float
    + core::ops::AddAssign
    + core::ops::SubAssign
    + core::ops::MulAssign
    + fmt::Debug
    + fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TensorError {
    /// Data length does not match the product of the shape dims.
    DataLength { expected: usize, got: usize },
    /// Two tensors were expected to share a shape.
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    /// Operation requires a different rank or dim than the tensor has.
    BadShape { what: String, shape: Vec<usize> },
    /// A value was NaN or infinite where finite math is required.
    NonFinite { context: String },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::DataLength { expected, got } => {
                write!(f, "data length {got} does not match shape product {expected}")
            }
            TensorError::ShapeMismatch { left, right } => {
                write!(f, "shape mismatch: {left:?} vs {right:?}")
            }
            TensorError::BadShape { what, shape } => write!(f, "{what} (shape {shape:?})"),
            TensorError::NonFinite { context } => write!(f, "non-finite value in {context}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TensorError {}

/// Dense tensor with row-major (last dim fastest) layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self, TensorError> {
        let expected = shape.iter().product::<usize>();
        if data.len() != expected {
            return Err(TensorError::DataLength { expected, got: data.len() });
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn scalar(value: T) -> Self {
        Tensor { shape: Vec::new(), data: vec![value] }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: (0..n).map(&mut f).collect() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// True for rank 0 or any shape with a single element.
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn item(&self) -> Result<T, TensorError> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(TensorError::BadShape {
                what: String::from("expected a scalar tensor"),
                shape: self.shape.clone(),
            })
        }
    }

    /// Same data, new shape; element count must match.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(TensorError::DataLength { expected, got: self.data.len() });
        }
        Ok(Tensor { shape: shape.to_vec(), data: self.data.clone() })
    }

    pub fn same_shape(&self, other: &Self) -> Result<(), TensorError> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(TensorError::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            })
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self, TensorError> {
        self.same_shape(other)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Converts element type, rounding through f64.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_checks_data_length() {
        assert!(Tensor::<f32>::new(&[2, 3], vec![0.0; 6]).is_ok());
        assert_eq!(
            Tensor::<f32>::new(&[2, 3], vec![0.0; 5]),
            Err(TensorError::DataLength { expected: 6, got: 5 })
        );
    }

    #[test]
    fn scalar_item_and_rejection() {
        assert_eq!(Tensor::scalar(4.0f64).item().unwrap(), 4.0);
        assert!(Tensor::<f32>::zeros(&[2]).item().is_err());
    }

    #[test]
    fn reshape_preserves_data() {
        let t = Tensor::new(&[2, 3], vec![1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let r = t.reshaped(&[3, 2]).unwrap();
        assert_eq!(r.shape(), &[3, 2]);
        assert_eq!(r.data(), t.data());
        assert!(t.reshaped(&[4, 2]).is_err());
    }

    #[test]
    fn zip_map_requires_same_shape() {
        let a = Tensor::<f32>::zeros(&[2, 2]);
        let b = Tensor::<f32>::zeros(&[4]);
        assert!(a.zip_map(&b, |x, y| x + y).is_err());
    }

    #[test]
    fn finite_detection() {
        let mut t = Tensor::<f32>::zeros(&[3]);
        assert!(t.all_finite());
        t.data_mut()[1] = f32::NAN;
        assert!(!t.all_finite());
    }

    #[test]
    fn cast_round_trips_f32_values() {
        let t = Tensor::new(&[3], vec![0.5f32, -1.25, 3.0]).unwrap();
        let d: Tensor<f64> = t.cast();
        let back: Tensor<f32> = d.cast();
        assert_eq!(back, t);
    }
}
