//! Finite orthonormal-coordinate model of the Wiener space and the additive
//! channel `v = rho * a + z`.
//!
//! Everything is expressed in the step basis
//! `e_i(t) = 1[(i-1)dt, i dt)(t) / sqrt(dt)` of the Cameron-Martin derivative
//! space, so that the H-inner product is the Euclidean one, the noise
//! coordinates `z_i = <w, e_i>` are i.i.d. standard normal, and the time-like
//! projection family is a coordinate prefix.

use std::ops::{Deref, Index};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step basis on `[0, horizon]` with `n` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Basis {
    n: usize,
    horizon: f64,
}

impl Basis {
    pub fn new(n: usize, horizon: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidBasis("n must be at least 1".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidBasis(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        Ok(Self { n, horizon })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Width of one basis step.
    pub fn step(&self) -> f64 {
        self.horizon / self.n as f64
    }

    /// Left end point of step `i` (zero based).
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.step()
    }

    /// The i-th basis vector (zero based).
    pub fn unit(&self, i: usize) -> HVector {
        let mut c = vec![0.0; self.n];
        c[i] = 1.0;
        HVector(c)
    }

    /// Coefficients of the path whose derivative is `rate(t)`, sampled at the
    /// left end of each step: `a_i = rate(t_{i-1}) * sqrt(dt)`.
    pub fn from_rate(&self, rate: impl Fn(f64) -> f64) -> HVector {
        let sq = self.step().sqrt();
        HVector((0..self.n).map(|i| rate(self.time(i)) * sq).collect())
    }

    /// Coefficients of the constant-rate path `x'(t) = 1`.
    pub fn constant_shape(&self) -> HVector {
        self.from_rate(|_| 1.0)
    }
}

/// Element of the Cameron-Martin space in step-basis coordinates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HVector(Vec<f64>);

impl HVector {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self(coeffs)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `|h|_H^2`.
    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|c| s * c).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    /// Projection onto the coarser step basis obtained by merging blocks of
    /// `factor` consecutive steps.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        Ok(Self(coarsen_coords(&self.0, factor)?))
    }
}

impl Deref for HVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for HVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for HVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Realized noise coordinates `z_i = delta e_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCoords(Vec<f64>);

impl NoiseCoords {
    pub fn new(z: Vec<f64>) -> Self {
        Self(z)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        Ok(Self(coarsen_coords(&self.0, factor)?))
    }
}

/// Channel output `v = rho * a + z` together with its signal-to-noise scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    v: Vec<f64>,
    rho: f64,
}

impl Observation {
    /// Wraps raw observation coordinates, e.g. an arbitrary point of W.
    pub fn new(v: Vec<f64>, rho: f64) -> Result<Self> {
        check_rho(rho)?;
        Ok(Self { v, rho })
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn with_coords(&self, v: Vec<f64>) -> Self {
        Self { v, rho: self.rho }
    }
}

pub(crate) fn check_rho(rho: f64) -> Result<()> {
    if rho.is_finite() && rho >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidRho(rho))
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        })
    }
}

fn coarsen_coords(c: &[f64], factor: usize) -> Result<Vec<f64>> {
    if factor == 0 || !c.len().is_multiple_of(factor) {
        return Err(Error::InvalidArgument(format!(
            "cannot merge {} coordinates in blocks of {factor}",
            c.len()
        )));
    }
    let s = (factor as f64).sqrt().recip();
    Ok(c.chunks(factor)
        .map(|b| b.iter().sum::<f64>() * s)
        .collect())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// H-inner product `(a, b)_H`.
pub fn h_inner(a: &HVector, b: &HVector) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(dot(a, b))
}

/// The Wiener pairing `<<w, h>> = delta h` evaluated on noise coordinates.
pub fn pair(z: &[f64], h: &HVector) -> Result<f64> {
    check_dims(h.dim(), z.len())?;
    Ok(dot(z, h))
}

/// Draws `n` i.i.d. standard normal coordinates.
pub fn sample_noise<R: Rng + ?Sized>(basis: &Basis, rng: &mut R) -> NoiseCoords {
    NoiseCoords(
        (0..basis.n())
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
}

pub(crate) fn fill_noise<R: Rng + ?Sized>(out: &mut [f64], rng: &mut R) {
    for z in out {
        *z = rng.sample(StandardNormal);
    }
}

/// `v_i = rho * a_i + z_i`.
pub fn channel(a: &HVector, z: &NoiseCoords, rho: f64) -> Result<Observation> {
    check_rho(rho)?;
    check_dims(a.dim(), z.dim())?;
    let v = a
        .iter()
        .zip(z.as_slice())
        .map(|(a, z)| rho * a + z)
        .collect();
    Ok(Observation { v, rho })
}

/// Keeps coordinates `1..=floor(theta * n)` and zeroes the rest.
pub trait Truncate: Sized {
    fn truncate(&self, theta: f64) -> Result<Self>;
}

fn prefix_len(theta: f64, n: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::ThetaOutOfRange(theta));
    }
    Ok(((theta * n as f64).floor() as usize).min(n))
}

fn truncated(c: &[f64], theta: f64) -> Result<Vec<f64>> {
    let k = prefix_len(theta, c.len())?;
    let mut out = c.to_vec();
    out[k..].iter_mut().for_each(|x| *x = 0.0);
    Ok(out)
}

impl Truncate for HVector {
    fn truncate(&self, theta: f64) -> Result<Self> {
        Ok(Self(truncated(&self.0, theta)?))
    }
}

impl Truncate for Observation {
    fn truncate(&self, theta: f64) -> Result<Self> {
        Ok(self.with_coords(truncated(&self.v, theta)?))
    }
}
