//! The branching model at the catalyst.
//!
//! A particle at the origin waits an Exp(1) time, then either branches (with
//! probability α: it dies and leaves k children there with probability f_k)
//! or leaves (with probability 1−α: it jumps to v with probability a(v)/a).
//! Away from the origin particles perform the plain walk.  The model is
//! *critical* when
//!
//!   α·f'(1) + (1−α)(1−h_d) = 1,
//!
//! h_d being the probability the walk never returns to its start (zero for
//! d ≤ 2).  Criticality makes the expected local population neither grow nor
//! die exponentially, which is the regime everything in this crate studies.

use crate::error::{CbrwError, Result};
use crate::grid::{stieltjes_convolve, GridFunction, TimeGrid};
use crate::lattice::WalkKernel;
use crate::transition::escape_probability;

/// Tolerance on the criticality residual accepted by [`CbrwModel::new`].
pub const CRITICALITY_TOL: f64 = 1e-8;

/// Offspring number distribution {f_k}; index = number of children.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringLaw {
    probs: Vec<f64>,
}

impl OffspringLaw {
    /// Validates nonnegativity and total mass 1 (renormalizing drift below
    /// 1e-9 silently, rejecting anything larger).
    pub fn new(probs: &[f64]) -> Result<OffspringLaw> {
        if probs.is_empty() {
            return Err(CbrwError::InvalidParameter("empty offspring law".into()));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(CbrwError::InvalidParameter(
                "offspring probabilities must be finite and ≥ 0".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(CbrwError::InvalidParameter(format!(
                "offspring probabilities sum to {}, not 1",
                total
            )));
        }
        let mut probs: Vec<f64> = probs.iter().map(|&p| p / total).collect();
        while probs.len() > 1 && *probs.last().unwrap() == 0.0 {
            probs.pop();
        }
        Ok(OffspringLaw { probs })
    }

    /// Two-point law on {0, 2} with the given mean (needs mean ≤ 2).
    pub fn binary(mean: f64) -> Result<OffspringLaw> {
        if !(mean >= 0.0 && mean <= 2.0) {
            return Err(CbrwError::InfeasibleFamily {
                family: "binary",
                mean,
            });
        }
        OffspringLaw::new(&[1.0 - mean / 2.0, 0.0, mean / 2.0])
    }

    /// Geometric law f_k = (1−q)q^k with q = mean/(1+mean), truncated where
    /// the tail drops below 1e-12; the truncated mass and mean deficit are
    /// folded back into f_0 and the last kept term so the mean is exact.
    pub fn geometric(mean: f64) -> Result<OffspringLaw> {
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(CbrwError::InfeasibleFamily {
                family: "geometric",
                mean,
            });
        }
        let q = mean / (1.0 + mean);
        let mut probs = vec![1.0 - q];
        loop {
            let next = probs.last().unwrap() * q;
            if next < 1e-12 {
                break;
            }
            probs.push(next);
        }
        let k = probs.len() - 1;
        assert!(k >= 1, "mean too small to represent");
        let mass: f64 = probs.iter().sum();
        let cur_mean: f64 = probs.iter().enumerate().map(|(j, &p)| j as f64 * p).sum();
        // add ε at k and the rest of the missing mass at 0:
        // ε·k must absorb the mean deficit
        let eps = (mean - cur_mean) / k as f64;
        probs[k] += eps;
        probs[0] += 1.0 - mass - eps;
        let law = OffspringLaw { probs };
        assert!(law.probs.iter().all(|&p| p >= 0.0));
        assert!((law.mean() - mean).abs() < 1e-12);
        Ok(law)
    }

    /// The degenerate law: exactly one child, i.e. f(s) = s.  With this law
    /// branching events change nothing and the population is a single walker.
    pub fn point_mass_one() -> OffspringLaw {
        OffspringLaw {
            probs: vec![0.0, 1.0],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn max_children(&self) -> usize {
        self.probs.len() - 1
    }

    /// f'(1) = Σ k f_k.
    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, &p)| k as f64 * p).sum()
    }

    /// f''(1) = Σ k(k−1) f_k.
    pub fn second_factorial(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, &p)| (k * k.saturating_sub(1)) as f64 * p)
            .sum()
    }

    /// f(s) = Σ f_k s^k (Horner).
    pub fn pgf(&self, s: f64) -> f64 {
        self.probs.iter().rev().fold(0.0, |acc, &p| acc * s + p)
    }
}

/// Offspring families that [`calibrate_offspring`] can target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffspringFamily {
    Binary,
    Geometric,
}

/// Residual α·f'(1) + (1−α)(1−h_d) − 1; zero at criticality.
pub fn check_criticality(kernel: &WalkKernel, alpha: f64, offspring: &OffspringLaw) -> Result<f64> {
    let h_d = escape_probability(kernel)?;
    Ok(alpha * offspring.mean() + (1.0 - alpha) * (1.0 - h_d) - 1.0)
}

/// The offspring mean forced by criticality: f'(1) = 1 + (1−α)h_d/α.
pub fn required_mean(kernel: &WalkKernel, alpha: f64) -> Result<f64> {
    let h_d = escape_probability(kernel)?;
    Ok(1.0 + (1.0 - alpha) * h_d / alpha)
}

/// Builds an offspring law of the requested family whose mean makes the
/// model critical for this kernel and α.
pub fn calibrate_offspring(
    kernel: &WalkKernel,
    alpha: f64,
    family: OffspringFamily,
) -> Result<OffspringLaw> {
    let mean = required_mean(kernel, alpha)?;
    match family {
        OffspringFamily::Binary => OffspringLaw::binary(mean),
        OffspringFamily::Geometric => OffspringLaw::geometric(mean),
    }
}

/// A fully assembled critical model.
#[derive(Debug, Clone)]
pub struct CbrwModel {
    kernel: WalkKernel,
    alpha: f64,
    offspring: OffspringLaw,
    h_d: f64,
    sigma_sq: f64,
    beta_bar_c: f64,
}

impl CbrwModel {
    /// Rejects α outside (0,1) and any parameter set whose criticality
    /// residual exceeds [`CRITICALITY_TOL`].
    pub fn new(kernel: WalkKernel, alpha: f64, offspring: OffspringLaw) -> Result<CbrwModel> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(CbrwError::InvalidParameter(format!(
                "alpha {} must lie in (0,1)",
                alpha
            )));
        }
        let h_d = escape_probability(&kernel)?;
        let residual = alpha * offspring.mean() + (1.0 - alpha) * (1.0 - h_d) - 1.0;
        if residual.abs() > CRITICALITY_TOL {
            return Err(CbrwError::NotCritical { residual });
        }
        let sigma_sq = alpha * offspring.second_factorial();
        let beta_bar_c = (1.0 - alpha) * h_d;
        Ok(CbrwModel {
            kernel,
            alpha,
            offspring,
            h_d,
            sigma_sq,
            beta_bar_c,
        })
    }

    pub fn kernel(&self) -> &WalkKernel {
        &self.kernel
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn offspring(&self) -> &OffspringLaw {
        &self.offspring
    }

    /// h_d: never-return probability of the walk (0 for d ≤ 2).
    pub fn escape_prob(&self) -> f64 {
        self.h_d
    }

    /// σ² = α·f''(1), the branching variance parameter.
    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }

    /// β̄_c = (1−α)·h_d = f̄'(1), the critical net-growth coefficient.
    pub fn beta_bar_c(&self) -> f64 {
        self.beta_bar_c
    }

    /// True when the offspring law is the single-child point mass, i.e. the
    /// population never changes size (σ² = 0, pure walk dynamics).
    pub fn is_degenerate(&self) -> bool {
        self.offspring.probs() == [0.0, 1.0]
    }

    /// h(s) = α(f(1−s) − 1 + f'(1)·s): the nonlinearity of every survival
    /// equation here.  Nonnegative and convex on [0,1], h(0) = h'(0) = 0,
    /// h''(0) = σ².
    pub fn h_func(&self, s: f64) -> f64 {
        self.alpha * (self.offspring.pgf(1.0 - s) - 1.0 + self.offspring.mean() * s)
    }

    /// f̄(s) = α(f(s) − s); its slope at 1 is β̄_c under criticality.
    pub fn fbar(&self, s: f64) -> f64 {
        self.alpha * (self.offspring.pgf(s) - s)
    }

    /// Renewal kernel of visits to the origin:
    ///
    ///   K(t) = α f'(1)·G₁(t) + (1−α)·(G₁ ∗ dH⁻₀₀)(t),
    ///
    /// where G₁ = Exp(1) is the origin sojourn and H⁻₀₀ the return-time
    /// c.d.f. of the walk measured from departure.  Under criticality
    /// K(∞) = αf'(1) + (1−α)(1−h_d) = 1: K is a proper probability c.d.f.
    pub fn k_cdf_grid(&self, hminus00: &GridFunction) -> Result<GridFunction> {
        let g1 = exp_cdf(1.0, hminus00.grid);
        let conv = stieltjes_convolve(&g1, hminus00)?;
        let vals = g1
            .values
            .iter()
            .zip(&conv.values)
            .map(|(&g, &c)| self.alpha * self.offspring.mean() * g + (1.0 - self.alpha) * c)
            .collect();
        Ok(GridFunction::new(hminus00.grid, vals))
    }
}

/// Exp(rate) c.d.f. sampled on a grid.
pub fn exp_cdf(rate: f64, grid: TimeGrid) -> GridFunction {
    assert!(rate > 0.0);
    GridFunction::new(grid, grid.times().map(|t| 1.0 - (-rate * t).exp()).collect())
}
