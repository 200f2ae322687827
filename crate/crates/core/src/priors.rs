//! Signal laws on H.
//!
//! Atomic, diagonal-Gaussian and scaled-shape priors admit closed-form
//! likelihoods and posteriors. Sampler-only priors are usable on Monte-Carlo
//! paths only; anything that needs exactness returns an error for them.
//!
//! For sampler-only priors the caller is responsible for the exponential
//! moment condition `E exp(alpha (x, h)_H) < inf` for all real `alpha`;
//! it cannot be checked from samples.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::{self, McConfig};
use crate::wiener_space::{dot, HVector};

const WEIGHT_SUM_TOL: f64 = 1e-12;

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidPrior("at least one atom is required".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::InvalidPrior(format!(
            "weights must be positive, got {w}"
        )));
    }
    let s: f64 = weights.iter().sum();
    if (s - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidPrior(format!("weights sum to {s}, not 1")));
    }
    Ok(())
}

/// Index drawn from a categorical law by inversion.
pub(crate) fn draw_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut c = 0.0;
    for (k, w) in weights.iter().enumerate() {
        c += w;
        if u < c {
            return k;
        }
    }
    weights.len() - 1
}

/// One-dimensional amplitude law of a scaled-shape prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AmplitudeLaw {
    Atomic { values: Vec<f64>, weights: Vec<f64> },
    Gaussian { mean: f64, var: f64 },
}

impl AmplitudeLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Atomic { values, weights } => {
                if values.len() != weights.len() {
                    return Err(Error::InvalidPrior(
                        "amplitude values and weights differ in length".into(),
                    ));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidPrior(
                        "amplitude values must be finite".into(),
                    ));
                }
                check_weights(weights)
            }
            Self::Gaussian { mean, var } => {
                if mean.is_finite() && var.is_finite() && *var >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidPrior(format!(
                        "Gaussian amplitude needs finite mean and nonnegative variance, got ({mean}, {var})"
                    )))
                }
            }
        }
    }

    /// Equiprobable `{-a, +a}`.
    pub fn symmetric_binary(a: f64) -> Self {
        Self::Atomic {
            values: vec![a, -a],
            weights: vec![0.5, 0.5],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Atomic { values, weights } => values[draw_index(weights, rng)],
            Self::Gaussian { mean, var } => {
                mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal)
            }
        }
    }

    /// `(E A, E A^2)`.
    pub fn moments(&self) -> (f64, f64) {
        match self {
            Self::Atomic { values, weights } => values
                .iter()
                .zip(weights)
                .fold((0.0, 0.0), |(m1, m2), (v, w)| (m1 + w * v, m2 + w * v * v)),
            Self::Gaussian { mean, var } => (*mean, mean * mean + var),
        }
    }
}

/// Finite mixture of point masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicPrior {
    atoms: Vec<HVector>,
    weights: Vec<f64>,
}

impl AtomicPrior {
    pub fn new(atoms: Vec<HVector>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::InvalidPrior(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        check_weights(&weights)?;
        let n = atoms[0].dim();
        if n == 0 || atoms.iter().any(|a| a.dim() != n) {
            return Err(Error::InvalidPrior(
                "atoms must share a positive dimension".into(),
            ));
        }
        if atoms.iter().any(|a| a.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidPrior(
                "atom coordinates must be finite".into(),
            ));
        }
        Ok(Self { atoms, weights })
    }

    pub fn point_mass(a: HVector) -> Result<Self> {
        Self::new(vec![a], vec![1.0])
    }

    /// Random prior with `k` atoms whose coordinates are i.i.d. N(0, scale^2)
    /// and Dirichlet(1,...,1)-like weights.
    pub fn random<R: Rng + ?Sized>(n: usize, k: usize, scale: f64, rng: &mut R) -> Result<Self> {
        let atoms = (0..k)
            .map(|_| {
                HVector::new(
                    (0..n)
                        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                        .collect(),
                )
            })
            .collect();
        let raw: Vec<f64> = (0..k).map(|_| 0.05 + rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        // Put the rounding residue on the largest weight.
        let resid = 1.0 - weights.iter().sum::<f64>();
        if let Some(w) = weights.iter_mut().max_by(|a, b| a.total_cmp(b)) {
            *w += resid;
        }
        Self::new(atoms, weights)
    }

    pub fn atoms(&self) -> &[HVector] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].dim()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `sum_k p_k a_k`.
    pub fn mean(&self) -> HVector {
        let mut m = vec![0.0; self.dim()];
        for (a, p) in self.atoms.iter().zip(&self.weights) {
            for (mi, ai) in m.iter_mut().zip(a.iter()) {
                *mi += p * ai;
            }
        }
        HVector::new(m)
    }
}

/// Independent Gaussian coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianDiagonalPrior {
    mean: HVector,
    variances: Vec<f64>,
}

impl GaussianDiagonalPrior {
    pub fn new(mean: HVector, variances: Vec<f64>) -> Result<Self> {
        if mean.dim() == 0 || mean.dim() != variances.len() {
            return Err(Error::InvalidPrior(
                "mean and variances must have the same positive length".into(),
            ));
        }
        if variances.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidPrior("variances must be nonnegative".into()));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidPrior("mean must be finite".into()));
        }
        Ok(Self { mean, variances })
    }

    pub fn mean(&self) -> &HVector {
        &self.mean
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }
}

/// `x = A * shape` with a one-dimensional amplitude `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledShapePrior {
    shape: HVector,
    amplitude: AmplitudeLaw,
}

impl ScaledShapePrior {
    pub fn new(shape: HVector, amplitude: AmplitudeLaw) -> Result<Self> {
        if !(shape.norm_sq() > 0.0) || shape.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPrior(
                "shape must be finite and nonzero".into(),
            ));
        }
        amplitude.validate()?;
        Ok(Self { shape, amplitude })
    }

    pub fn shape(&self) -> &HVector {
        &self.shape
    }

    pub fn amplitude(&self) -> &AmplitudeLaw {
        &self.amplitude
    }

    /// Atomic reduction when the amplitude is atomic.
    pub fn to_atomic(&self) -> Option<AtomicPrior> {
        match &self.amplitude {
            AmplitudeLaw::Atomic { values, weights } => Some(AtomicPrior {
                atoms: values.iter().map(|a| self.shape.scaled(*a)).collect(),
                weights: weights.clone(),
            }),
            AmplitudeLaw::Gaussian { .. } => None,
        }
    }
}

type SampleFn = dyn Fn(&mut dyn RngCore) -> HVector + Send + Sync;

/// Prior known only through a sampler.
#[derive(Clone)]
pub struct SamplerPrior {
    dim: usize,
    sampler: Arc<SampleFn>,
}

impl SamplerPrior {
    pub fn new(
        dim: usize,
        sampler: impl Fn(&mut dyn RngCore) -> HVector + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            sampler: Arc::new(sampler),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl fmt::Debug for SamplerPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SamplerPrior")
            .field("dim", &self.dim)
            .finish()
    }
}

/// The signal law `mu_X`.
#[derive(Debug, Clone)]
pub enum SignalPrior {
    Atomic(AtomicPrior),
    GaussianDiagonal(GaussianDiagonalPrior),
    ScaledShape(ScaledShapePrior),
    SamplerOnly(SamplerPrior),
}

/// First two moments of a prior.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorMoments {
    pub mean: HVector,
    /// `E |x|_H^2`.
    pub energy: f64,
    pub energy_stderr: f64,
    pub exact: bool,
}

impl PriorMoments {
    /// `E |x - E x|_H^2`.
    pub fn variance_trace(&self) -> f64 {
        self.energy - self.mean.norm_sq()
    }
}

impl From<AtomicPrior> for SignalPrior {
    fn from(p: AtomicPrior) -> Self {
        Self::Atomic(p)
    }
}

impl From<GaussianDiagonalPrior> for SignalPrior {
    fn from(p: GaussianDiagonalPrior) -> Self {
        Self::GaussianDiagonal(p)
    }
}

impl From<ScaledShapePrior> for SignalPrior {
    fn from(p: ScaledShapePrior) -> Self {
        Self::ScaledShape(p)
    }
}

impl From<SamplerPrior> for SignalPrior {
    fn from(p: SamplerPrior) -> Self {
        Self::SamplerOnly(p)
    }
}

impl SignalPrior {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Atomic(_) => "atomic",
            Self::GaussianDiagonal(_) => "gaussian_diagonal",
            Self::ScaledShape(p) => match p.amplitude {
                AmplitudeLaw::Atomic { .. } => "scaled_shape_atomic",
                AmplitudeLaw::Gaussian { .. } => "scaled_shape_gaussian",
            },
            Self::SamplerOnly(_) => "sampler_only",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Atomic(p) => p.dim(),
            Self::GaussianDiagonal(p) => p.mean.dim(),
            Self::ScaledShape(p) => p.shape.dim(),
            Self::SamplerOnly(p) => p.dim,
        }
    }

    /// Whether likelihood and posterior have closed forms.
    pub fn is_closed_form(&self) -> bool {
        !matches!(self, Self::SamplerOnly(_))
    }

    /// Writes one draw into `out`.
    pub fn sample_into<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Self::Atomic(p) => {
                let k = draw_index(&p.weights, rng);
                out.copy_from_slice(&p.atoms[k]);
            }
            Self::GaussianDiagonal(p) => {
                for ((o, m), v) in out.iter_mut().zip(p.mean.iter()).zip(&p.variances) {
                    *o = m + v.sqrt() * rng.sample::<f64, _>(StandardNormal);
                }
            }
            Self::ScaledShape(p) => match &p.amplitude {
                // Same draw sequence and products as the atomic reduction.
                AmplitudeLaw::Atomic { values, weights } => {
                    let a = values[draw_index(weights, rng)];
                    for (o, s) in out.iter_mut().zip(p.shape.iter()) {
                        *o = a * s;
                    }
                }
                law => {
                    let a = law.sample(rng);
                    for (o, s) in out.iter_mut().zip(p.shape.iter()) {
                        *o = a * s;
                    }
                }
            },
            Self::SamplerOnly(p) => {
                let x = (p.sampler)(rng);
                out.copy_from_slice(&x);
            }
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> HVector {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(rng, &mut out);
        HVector::new(out)
    }

    /// Exact atomic form, if the prior is enumerable.
    pub fn to_atomic(&self) -> Result<AtomicPrior> {
        match self {
            Self::Atomic(p) => Ok(p.clone()),
            Self::ScaledShape(p) => p
                .to_atomic()
                .ok_or(Error::EnumerationUnavailable("scaled_shape_gaussian")),
            other => Err(Error::EnumerationUnavailable(other.kind())),
        }
    }

    /// The finite support with its weights.
    pub fn atoms(&self) -> Result<Vec<(HVector, f64)>> {
        let a = self.to_atomic()?;
        Ok(a.atoms.into_iter().zip(a.weights).collect())
    }

    /// Mean and energy, in closed form when available.
    pub fn moments(&self, mc: &McConfig) -> Result<PriorMoments> {
        match self {
            Self::Atomic(p) => Ok(PriorMoments {
                mean: p.mean(),
                energy: p
                    .atoms
                    .iter()
                    .zip(&p.weights)
                    .map(|(a, w)| w * a.norm_sq())
                    .sum(),
                energy_stderr: 0.0,
                exact: true,
            }),
            Self::GaussianDiagonal(p) => Ok(PriorMoments {
                mean: p.mean.clone(),
                energy: p.mean.norm_sq() + p.variances.iter().sum::<f64>(),
                energy_stderr: 0.0,
                exact: true,
            }),
            Self::ScaledShape(p) => {
                let (m1, m2) = p.amplitude.moments();
                Ok(PriorMoments {
                    mean: p.shape.scaled(m1),
                    energy: m2 * p.shape.norm_sq(),
                    energy_stderr: 0.0,
                    exact: true,
                })
            }
            Self::SamplerOnly(_) => {
                let n = self.dim();
                let bm = mc::run(mc, n + 1, |rng, out| {
                    let x = self.sample(rng);
                    out[..n].copy_from_slice(&x);
                    out[n] = dot(&x, &x);
                    Ok(())
                })?;
                let g = bm.grand();
                let e = bm.stat(n);
                Ok(PriorMoments {
                    mean: HVector::new(g[..n].to_vec()),
                    energy: e.value,
                    energy_stderr: e.stderr,
                    exact: false,
                })
            }
        }
    }

    /// Law of the projection onto the step basis with blocks of `factor`
    /// steps merged.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        Ok(match self {
            Self::Atomic(p) => Self::Atomic(AtomicPrior {
                atoms: p
                    .atoms
                    .iter()
                    .map(|a| a.coarsen(factor))
                    .collect::<Result<_>>()?,
                weights: p.weights.clone(),
            }),
            Self::GaussianDiagonal(p) => Self::GaussianDiagonal(GaussianDiagonalPrior {
                mean: p.mean.coarsen(factor)?,
                variances: p
                    .variances
                    .chunks(factor)
                    .map(|c| c.iter().sum::<f64>() / factor as f64)
                    .collect(),
            }),
            Self::ScaledShape(p) => Self::ScaledShape(ScaledShapePrior {
                shape: p.shape.coarsen(factor)?,
                amplitude: p.amplitude.clone(),
            }),
            Self::SamplerOnly(_) => return Err(Error::UnsupportedPrior("sampler_only")),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wiener_space::Basis;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hv(c: &[f64]) -> HVector {
        HVector::new(c.to_vec())
    }

    fn binary_shape(shape: &HVector) -> SignalPrior {
        ScaledShapePrior::new(shape.clone(), AmplitudeLaw::symmetric_binary(1.0))
            .unwrap()
            .into()
    }

    #[test]
    fn validation() {
        assert!(AtomicPrior::new(vec![hv(&[1.0])], vec![0.9]).is_err());
        assert!(AtomicPrior::new(vec![hv(&[1.0]), hv(&[2.0])], vec![1.0, 0.0]).is_err());
        assert!(AtomicPrior::new(vec![hv(&[1.0]), hv(&[2.0, 1.0])], vec![0.5, 0.5]).is_err());
        assert!(AtomicPrior::new(vec![], vec![]).is_err());
        assert!(GaussianDiagonalPrior::new(hv(&[0.0]), vec![-1.0]).is_err());
        assert!(
            ScaledShapePrior::new(HVector::zeros(3), AmplitudeLaw::symmetric_binary(1.0)).is_err()
        );
    }

    #[test]
    fn degenerate_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = hv(&[1.5, -2.0]);
        let p: SignalPrior = AtomicPrior::point_mass(a.clone()).unwrap().into();
        let g: SignalPrior = GaussianDiagonalPrior::new(a.clone(), vec![0.0, 0.0])
            .unwrap()
            .into();
        for _ in 0..10 {
            assert_eq!(p.sample(&mut rng), a);
            assert_eq!(g.sample(&mut rng), a);
        }
    }

    #[test]
    fn binary_shape_frequencies() {
        let s = hv(&[0.5, 1.0, -0.25]);
        let p = binary_shape(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = 100_000;
        let mut plus = 0usize;
        for _ in 0..m {
            let x = p.sample(&mut rng);
            if x == s {
                plus += 1;
            } else {
                assert_eq!(x, s.scaled(-1.0));
            }
        }
        let f = plus as f64 / m as f64;
        assert!((f - 0.5).abs() < 4.0 * (0.25 / m as f64).sqrt());
    }

    #[test]
    fn enumeration() {
        let (a, b) = (hv(&[1.0, 0.0]), hv(&[0.0, 2.0]));
        let p: SignalPrior = AtomicPrior::new(vec![a.clone(), b.clone()], vec![0.3, 0.7])
            .unwrap()
            .into();
        assert_eq!(p.atoms().unwrap(), vec![(a, 0.3), (b, 0.7)]);

        let s = hv(&[1.0, -1.0]);
        assert_eq!(
            binary_shape(&s).atoms().unwrap(),
            vec![(s.clone(), 0.5), (s.scaled(-1.0), 0.5)]
        );

        let g: SignalPrior = GaussianDiagonalPrior::new(hv(&[0.0]), vec![1.0])
            .unwrap()
            .into();
        assert!(matches!(g.atoms(), Err(Error::EnumerationUnavailable(_))));
    }

    #[test]
    fn closed_form_moments() {
        let mc = McConfig::new(3_000, 30, 0).unwrap();
        let s = hv(&[1.0, 2.0]);
        let m = binary_shape(&s).moments(&mc).unwrap();
        assert_eq!(m.mean, HVector::zeros(2));
        assert_eq!(m.energy, 5.0);
        assert!(m.exact);

        let g: SignalPrior = GaussianDiagonalPrior::new(HVector::zeros(3), vec![0.5, 1.0, 2.0])
            .unwrap()
            .into();
        assert_eq!(g.moments(&mc).unwrap().energy, 3.5);

        let basis = Basis::new(32, 1.0).unwrap();
        let rc: SignalPrior = ScaledShapePrior::new(
            basis.constant_shape(),
            AmplitudeLaw::Gaussian {
                mean: 0.0,
                var: 1.0,
            },
        )
        .unwrap()
        .into();
        assert!((rc.moments(&mc).unwrap().energy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_matches_moments() {
        let mc = McConfig::new(100_000, 50, 17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let atomic = AtomicPrior::random(3, 4, 1.0, &mut rng).unwrap();
        let exact = SignalPrior::Atomic(atomic.clone()).moments(&mc).unwrap();
        let sampler = SignalPrior::SamplerOnly(SamplerPrior::new(3, move |mut r| {
            SignalPrior::Atomic(atomic.clone()).sample(&mut r)
        }));
        let est = sampler.moments(&mc).unwrap();
        assert!(!est.exact);
        assert!(est.energy_stderr > 0.0);
        assert!((est.energy - exact.energy).abs() < 4.0 * est.energy_stderr);
    }

    #[test]
    fn atomic_reduction_samples_identically() {
        let s = hv(&[0.3, -0.7, 1.1]);
        let shape = binary_shape(&s);
        let atomic = SignalPrior::Atomic(shape.to_atomic().unwrap());
        let mut r1 = ChaCha8Rng::seed_from_u64(8);
        let mut r2 = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            assert_eq!(shape.sample(&mut r1), atomic.sample(&mut r2));
        }
    }

    #[test]
    fn coarsening() {
        let fine = Basis::new(16, 1.0).unwrap();
        let p: SignalPrior =
            ScaledShapePrior::new(fine.constant_shape(), AmplitudeLaw::symmetric_binary(1.0))
                .unwrap()
                .into();
        let c = p.coarsen(4).unwrap();
        assert_eq!(c.dim(), 4);
        let mc = McConfig::new(60, 30, 0).unwrap();
        assert!((c.moments(&mc).unwrap().energy - 1.0).abs() < 1e-12);
    }
}
