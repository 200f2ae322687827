//! Fixtures shared by the criterion benchmarks.

use immse_core::{AmplitudeLaw, AtomicPrior, Basis, ScaledShapePrior, SignalPrior};
use immse_core::{HVector, McConfig};

/// `k` deterministic atoms in `n` coordinates.
pub fn atomic_prior(n: usize, k: usize) -> SignalPrior {
    let atoms = (0..k)
        .map(|j| {
            HVector::new(
                (0..n)
                    .map(|i| ((i * 7 + j * 3) % 5) as f64 / 2.0 - 1.0)
                    .collect(),
            )
        })
        .collect();
    AtomicPrior::new(atoms, vec![1.0 / k as f64; k])
        .expect("valid atoms")
        .into()
}

/// Constant signal with a `+-1` amplitude on `n` steps of `[0, 1]`.
pub fn binary_constant(n: usize) -> SignalPrior {
    let basis = Basis::new(n, 1.0).expect("valid basis");
    ScaledShapePrior::new(basis.constant_shape(), AmplitudeLaw::symmetric_binary(1.0))
        .expect("valid shape")
        .into()
}

pub fn mc(samples: usize) -> McConfig {
    McConfig::new(samples, 32, 7).expect("valid mc config")
}
