//! Bundled reference models for the validation suites and the CLI.
//!
//! Every reference uses the nearest-neighbor kernel (total rate a = 1) with
//! α = ½ and a binary offspring law whose mean is calibrated to the critical
//! relation αf′(1) + (1−α)(1−h_d) = 1: mean 1 in the recurrent dimensions
//! (h₁ = h₂ = 0), mean 1 + h_d in the transient ones.  The degenerate
//! variant replaces the offspring law by f(s) = s — one child always — which
//! keeps the walk critical while switching every branching effect off; the
//! solvers must then collapse onto plain transition probabilities.

use crate::error::Result;
use crate::lattice::WalkKernel;
use crate::model::{required_mean, CbrwModel, OffspringLaw};

/// Critical nearest-neighbor reference model in dimension `d`.
pub fn reference_model(d: usize) -> Result<CbrwModel> {
    let kernel = WalkKernel::nearest_neighbor(d);
    let mean = required_mean(&kernel, 0.5)?;
    CbrwModel::new(kernel, 0.5, OffspringLaw::binary(mean)?)
}

/// Degenerate critical model in dimension `d`: f(s) = s, σ² = 0.
pub fn degenerate_model(d: usize) -> Result<CbrwModel> {
    CbrwModel::new(
        WalkKernel::nearest_neighbor(d),
        0.5,
        OffspringLaw::point_mass_one(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CRITICALITY_TOL;

    #[test]
    fn references_are_critical_in_every_bundled_dimension() {
        for d in 1..=5usize {
            let model = reference_model(d).unwrap();
            assert_eq!(model.dim(), d);
            assert!((model.alpha() - 0.5).abs() < 1e-15);
            assert!((model.kernel().total_rate() - 1.0).abs() < 1e-15);
            let mean = model.offspring().mean();
            if d <= 2 {
                assert!(
                    (mean - 1.0).abs() < 1e-12,
                    "recurrent d = {} wants mean 1, got {}",
                    d,
                    mean
                );
            } else {
                assert!(
                    (mean - (1.0 + model.escape_prob())).abs() < CRITICALITY_TOL,
                    "transient d = {} wants mean 1 + h_d",
                    d
                );
            }
        }
        // the d = 3 escape probability against its frozen quadrature value
        let m3 = reference_model(3).unwrap();
        assert!((m3.escape_prob() - 0.659462670361).abs() < 1e-9);
    }

    #[test]
    fn degenerate_model_switches_branching_off() {
        let model = degenerate_model(1).unwrap();
        assert!(model.is_degenerate());
        assert_eq!(model.sigma_sq(), 0.0);
        assert_eq!(model.offspring().mean(), 1.0);
        // h(q) = f(1−q) − 1 + q vanishes up to rounding in the pgf sum
        for q in [0.0, 0.3, 1.0] {
            assert!(model.h_func(q).abs() < 1e-15);
        }
    }
}
