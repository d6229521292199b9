use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which part of a model a parameter belongs to.
///
/// `Global` parameters are candidates for federation; `Local` and
/// `Classifier` parameters belong to client-owned modules in the
/// personalized strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Global,
    Local,
    Classifier,
}

/// A flat parameter (or gradient) vector with a per-entry role tag.
///
/// Ordering is layer-major, weights (row-major) before bias, in module order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    values: Vec<f64>,
    roles: Vec<Role>,
}

impl ParameterVector {
    pub fn new(values: Vec<f64>, roles: Vec<Role>) -> Result<Self> {
        if values.len() != roles.len() {
            return Err(Error::dim("parameter roles", values.len(), roles.len()));
        }
        Ok(Self { values, roles })
    }

    /// Vector with every entry tagged `role`.
    pub fn uniform(values: Vec<f64>, role: Role) -> Self {
        let roles = vec![role; values.len()];
        Self { values, roles }
    }

    pub fn zeros_like(other: &ParameterVector) -> Self {
        Self {
            values: vec![0.0; other.len()],
            roles: other.roles.clone(),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn count_role(&self, role: Role) -> usize {
        self.roles.iter().filter(|r| **r == role).count()
    }

    /// Entries whose role is in `roles`, in order.
    pub fn subset(&self, roles: &[Role]) -> ParameterVector {
        let (values, kept): (Vec<f64>, Vec<Role>) = self
            .values
            .iter()
            .zip(&self.roles)
            .filter(|(_, r)| roles.contains(r))
            .map(|(v, r)| (*v, *r))
            .unzip();
        ParameterVector { values, roles: kept }
    }

    /// Writes `source` into the entries whose role is in `roles`, leaving all
    /// other entries bitwise untouched.
    pub fn scatter(&mut self, roles: &[Role], source: &[f64]) -> Result<()> {
        let expected = self.roles.iter().filter(|r| roles.contains(r)).count();
        if expected != source.len() {
            return Err(Error::dim("parameter scatter", expected, source.len()));
        }
        let mut it = source.iter();
        for (v, r) in self.values.iter_mut().zip(&self.roles) {
            if roles.contains(r) {
                *v = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    pub fn check_same_len(&self, other: &ParameterVector, context: &'static str) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::dim(context, self.len(), other.len()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self += scale * other`, elementwise.
    pub fn axpy(&mut self, scale: f64, other: &[f64]) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::dim("axpy", self.len(), other.len()));
        }
        for (a, b) in self.values.iter_mut().zip(other) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.values.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn distance(&self, other: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}
