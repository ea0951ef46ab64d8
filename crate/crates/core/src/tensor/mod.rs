//! Dense tensors and a small reverse-mode differentiation engine.
//!
//! Everything the translation model computes is expressed as operations on a
//! [`Tape`]: values are vectors or row-major matrices, parameters live in a
//! [`ParamSet`], and [`Tape::backward`] returns a [`Gradients`] bundle aligned
//! with the parameter set. Models are generic over [`Real`] so the same code
//! trains in `f32` and is gradient-checked in `f64`.

mod gradcheck;
mod lstm;
mod params;
mod tape;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

pub use gradcheck::{finite_diff_check, GradCheckOptions};
pub use lstm::{lstm_step, LstmParams};
pub use params::{Gradients, ParamId, ParamSet};
pub use tape::{Tape, Var};

/// Scalar type a model can be instantiated with.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable constant")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Shape(format!("zero extent in {dims:?}")));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!("dims {dims:?} hold {n} values, got {}", data.len())));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Tensor { dims: dims.to_vec(), data: vec![T::zero(); n] }
    }

    pub fn filled(dims: &[usize], value: T) -> Self {
        let n = dims.iter().product();
        Tensor { dims: dims.to_vec(), data: vec![value; n] }
    }

    pub fn vector(data: Vec<T>) -> Self {
        Tensor { dims: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    pub fn rows(&self) -> usize {
        self.dims[0]
    }

    /// Columns of a matrix; 1 for a vector.
    pub fn cols(&self) -> usize {
        if self.dims.len() > 1 {
            self.dims[1..].iter().product()
        } else {
            1
        }
    }

    pub fn row(&self, r: usize) -> &[T] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| U::of(v.f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Numerically stable softmax over the unmasked entries of `scores`.
///
/// `mask[i] == true` keeps entry `i`; masked entries come out exactly zero.
pub fn softmax<T: Real>(scores: &[T], mask: Option<&[bool]>) -> Result<Vec<T>> {
    if let Some(m) = mask {
        if m.len() != scores.len() {
            return Err(Error::Shape(format!("mask of {} for {} scores", m.len(), scores.len())));
        }
    }
    let keep = |i: usize| mask.is_none_or(|m| m[i]);
    let max = scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| keep(i))
        .map(|(_, &s)| s)
        .fold(None, |acc: Option<T>, s| Some(acc.map_or(s, |a| a.max(s))))
        .ok_or(Error::EmptySupport)?;
    let mut out: Vec<T> = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| if keep(i) { (s - max).exp() } else { T::zero() })
        .collect();
    let total: T = out.iter().copied().sum();
    for v in &mut out {
        *v = *v / total;
    }
    Ok(out)
}

/// `log(sum(exp(scores)))` over unmasked entries.
pub fn log_sum_exp<T: Real>(scores: &[T], mask: Option<&[bool]>) -> Result<T> {
    let keep = |i: usize| mask.is_none_or(|m| m[i]);
    let max = scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| keep(i))
        .map(|(_, &s)| s)
        .fold(None, |acc: Option<T>, s| Some(acc.map_or(s, |a| a.max(s))))
        .ok_or(Error::EmptySupport)?;
    let total: T = scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| keep(i))
        .map(|(_, &s)| (s - max).exp())
        .sum();
    Ok(max + total.ln())
}
