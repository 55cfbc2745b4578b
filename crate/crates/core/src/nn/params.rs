use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Named trainable parameters. Names are unique and shapes are fixed once
/// inserted; iteration order is lexical by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::InvalidArgument(format!(
                "parameter `{name}` already exists"
            )));
        }
        self.params.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Matrix> {
        self.params
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Matrix> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Matrix)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Matrix::len).sum()
    }

    /// A store with the same names and shapes, filled with zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            params: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), Matrix::zeros(v.rows(), v.cols())))
                .collect(),
        }
    }

    /// Overwrites every entry with a draw from U(-scale, scale). Parameters
    /// are visited in name order so the result depends only on `seed`.
    pub fn init_uniform(&mut self, scale: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for m in self.params.values_mut() {
            for x in m.as_mut_slice() {
                *x = if scale > 0.0 {
                    rng.gen_range(-scale..=scale)
                } else {
                    0.0
                };
            }
        }
    }

    /// `self += other`. Both stores must have identical layouts.
    pub fn accumulate(&mut self, other: &ParamStore) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.params.values_mut().zip(other.params.values()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    /// Accumulates `grad` into parameter `name`, creating nothing.
    pub fn add_to(&mut self, name: &str, grad: &Matrix) -> Result<()> {
        self.get_mut(name)?.add_assign(grad)
    }

    pub fn scale(&mut self, s: f64) {
        self.params.values_mut().for_each(|m| m.scale(s));
    }

    pub fn check_layout(&self, other: &ParamStore) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::Shape(format!(
                "parameter stores hold {} and {} entries",
                self.params.len(),
                other.params.len()
            )));
        }
        for ((ka, va), (kb, vb)) in self.params.iter().zip(&other.params) {
            if ka != kb || va.shape() != vb.shape() {
                return Err(Error::Shape(format!(
                    "parameter `{ka}` {:?} vs `{kb}` {:?}",
                    va.shape(),
                    vb.shape()
                )));
            }
        }
        Ok(())
    }

    /// Largest absolute entry over all parameters.
    pub fn max_abs(&self) -> f64 {
        self.params.values().fold(0.0, |m, p| m.max(p.max_abs()))
    }
}
