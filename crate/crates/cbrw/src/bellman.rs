//! The auxiliary six-type age-dependent branching process carried by the
//! two-site skeleton {0, y} of the catalytic walk.
//!
//! Freeze the two catalytic observation sites and classify every particle by
//! where it sits in the skeleton: at the origin (type 1), at y (type 2), or
//! in transit — committed to reach y before 0 after leaving the origin
//! (type 3), the mirror passage y → 0 (type 4), an excursion 0 → 0 avoiding
//! y (type 5), or y → y avoiding 0 (type 6).  Particles that have left the
//! skeleton for good influence nothing and are dropped.  The six counts then
//! evolve as an age-dependent branching process whose ingredients are built
//! from three taboo hitting quantities of the free walk, all measured from
//! the moment of departure:
//!
//!   A  = H⁻₀ᵧ₀(0)   the first jump lands on y (instantaneous passage),
//!   R  = H⁻₀ᵧ₀(∞)   the walk reaches y before returning to 0,
//!   B₅ = H⁻₀₀ᵧ(∞)   the walk returns to 0 without touching y.
//!
//! Lifetimes: G₁ = 1 − e^{−t} and G₂ = 1 − e^{−at} for the sitting types,
//! and the normalized taboo c.d.f.s for the four transit types, with
//! G₃ ≡ G₄ and G₅ ≡ G₆ by the symmetry of the kernel.  Offspring maps:
//!
//!   f₁(s) = α f(s₁) + (1−α)(A s₂ + (R−A) s₃ + B₅ s₅ + (1−R−B₅)),
//!   f₂(s) = A s₁ + (R−A) s₄ + B₅ s₆ + (1−R−B₅),
//!   f₃ = s₂, f₄ = s₁, f₅ = s₁, f₆ = s₂.
//!
//! Criticality of the walk makes the Perron root of the mean matrix M
//! exactly 1, with closed-form eigenvectors and the quadratic coefficient
//! B = σ²(1−B₅)²/(2UV) governing the survival asymptotics.  This module
//! constructs the process, verifies its algebra (characteristic-polynomial
//! factorization, positive-summand form of R(1), eigenvector identities,
//! second-order expansion), and simulates it directly so the distributional
//! identity with the particle system can be checked end to end.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CbrwError, Result};
use crate::grid::GridFunction;
use crate::lattice::Point;
use crate::model::{CbrwModel, OffspringLaw};
use crate::rng::{AliasTable, CounterRng};
use crate::simulate::{McEstimate, RoleMoments, TotalF64};
use crate::taboo::{taboo_limit_with_cache, HittingClock, TabooCdf};
use crate::transition::GreenCache;

/// Channels whose mass falls below this are treated as exactly absent.
const MASS_EPS: f64 = 1e-12;

/// The three taboo masses the whole construction runs on.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TabooMasses {
    /// A = H⁻₀ᵧ₀(0): the departing jump itself lands on y.
    pub atom: f64,
    /// R = H⁻₀ᵧ₀(∞): y is reached before the walk returns to the origin.
    pub reach: f64,
    /// B₅ = H⁻₀₀ᵧ(∞): the walk returns to the origin without touching y.
    pub return_avoiding: f64,
}

impl TabooMasses {
    /// Exact masses from ruin/Green-function formulas, measured from the
    /// moment of departure.
    pub fn exact(model: &CbrwModel, y: &Point) -> Result<TabooMasses> {
        if y.is_zero() {
            return Err(CbrwError::InvalidParameter(
                "the marked site must differ from the origin".into(),
            ));
        }
        let kernel = model.kernel();
        let atom = kernel
            .support()
            .iter()
            .find(|(p, _)| p == y)
            .map_or(0.0, |(_, rate)| rate / kernel.total_rate());
        let zero = Point::zero(model.dim());
        let mut cache = GreenCache::new(kernel);
        let reach =
            taboo_limit_with_cache(&mut cache, &zero, y, Some(&zero), HittingClock::FromDeparture)?;
        let return_avoiding =
            taboo_limit_with_cache(&mut cache, &zero, &zero, Some(y), HittingClock::FromDeparture)?;
        let m = TabooMasses {
            atom,
            reach,
            return_avoiding,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.atom >= -MASS_EPS
            && self.atom <= self.reach + MASS_EPS
            && self.reach <= 1.0 + MASS_EPS
            && self.return_avoiding >= -MASS_EPS
            && self.reach + self.return_avoiding <= 1.0 + 1e-9;
        if !ok {
            return Err(CbrwError::InvalidParameter(format!(
                "inconsistent taboo masses: A = {}, R = {}, B₅ = {}",
                self.atom, self.reach, self.return_avoiding
            )));
        }
        Ok(())
    }

    /// Weight of the never-returning channel, clamped at 0 (recurrent walks
    /// exhaust the whole mass, so rounding may leave a tiny negative).
    pub fn escape(&self) -> f64 {
        (1.0 - self.reach - self.return_avoiding).max(0.0)
    }
}

/// Lifetime law of one type.
#[derive(Debug, Clone)]
pub enum Lifetime {
    Exponential(f64),
    /// Normalized c.d.f. on a time grid; mass beyond the horizon is drawn as
    /// +∞, which is exact for queries at or before the horizon.
    Empirical(GridFunction),
    /// Placeholder for a channel of weight exactly zero; drawing from it is
    /// a bug.
    Unsampled,
}

impl Lifetime {
    fn sample(&self, rng: &mut CounterRng) -> f64 {
        match self {
            Lifetime::Exponential(rate) => rng.exp(*rate),
            Lifetime::Empirical(g) => {
                let u = rng.uniform();
                let top = *g.values.last().expect("non-empty c.d.f.");
                if u >= top {
                    return f64::INFINITY;
                }
                let j = g.values.partition_point(|&v| v < u);
                if j == 0 {
                    return g.grid.time(0);
                }
                let (v0, v1) = (g.values[j - 1], g.values[j]);
                g.grid.time(j - 1) + g.grid.step() * (u - v0) / (v1 - v0)
            }
            Lifetime::Unsampled => unreachable!("sampled a zero-weight lifetime channel"),
        }
    }

    fn horizon(&self) -> f64 {
        match self {
            Lifetime::Exponential(_) | Lifetime::Unsampled => f64::INFINITY,
            Lifetime::Empirical(g) => g.grid.horizon(),
        }
    }
}

/// The constructed six-type process: offspring maps and lifetime laws.
#[derive(Debug, Clone)]
pub struct SixTypeSpec {
    pub alpha: f64,
    pub offspring: OffspringLaw,
    pub masses: TabooMasses,
    /// Total jump rate a of the walk (rate of G₂).
    pub total_rate: f64,
    /// G₁..G₆ indexed 0..6; G₃ ≡ G₄ and G₅ ≡ G₆ by kernel symmetry.
    pub lifetimes: [Lifetime; 6],
}

impl SixTypeSpec {
    /// The multivariate offspring generating map f_i(s), i ∈ 0..6.
    pub fn offspring_gen(&self, i: usize, s: &[f64; 6]) -> f64 {
        let TabooMasses {
            atom,
            reach,
            return_avoiding: b5,
        } = self.masses;
        let esc = self.masses.escape();
        match i {
            0 => {
                self.alpha * self.offspring.pgf(s[0])
                    + (1.0 - self.alpha)
                        * (atom * s[1] + (reach - atom) * s[2] + b5 * s[4] + esc)
            }
            1 => atom * s[0] + (reach - atom) * s[3] + b5 * s[5] + esc,
            2 => s[1],
            3 => s[0],
            4 => s[0],
            5 => s[1],
            _ => panic!("type index {} out of range", i),
        }
    }
}

/// Builds the six-type process from the masses and (optionally) the finite-t
/// taboo c.d.f.s H⁻₀ᵧ₀ and H⁻₀₀ᵧ needed to sample transit lifetimes.
/// Without them the algebraic checks still work but the process cannot be
/// simulated.  A channel whose exact mass is zero needs no c.d.f. — its
/// lifetime stays unsampled and its weight is exactly zero, so the d = 1
/// nearest-neighbor case (R = A) builds fine; the degenerate-normalizer
/// error fires only when a channel with positive mass has no usable c.d.f.
pub fn build_six_type(
    model: &CbrwModel,
    y: &Point,
    masses: &TabooMasses,
    travel: Option<(&TabooCdf, &TabooCdf)>,
) -> Result<SixTypeSpec> {
    if y.is_zero() || y.dim() != model.dim() {
        return Err(CbrwError::InvalidParameter(
            "the marked site must differ from the origin and match the model dimension".into(),
        ));
    }
    masses.validate()?;
    if 1.0 - masses.reach - masses.return_avoiding < -1e-9 {
        return Err(CbrwError::InvalidParameter(
            "taboo masses exceed 1: no probability left for escape".into(),
        ));
    }
    let normalized = |cdf: &TabooCdf, shift: f64, mass: f64, what: &str| -> Result<Lifetime> {
        let values: Vec<f64> = cdf
            .cdf
            .iter()
            .map(|&h| ((h - shift) / mass).clamp(0.0, 1.0))
            .collect();
        if *values.last().unwrap_or(&0.0) <= 0.0 {
            return Err(CbrwError::DegenerateNormalizer(format!(
                "{} carries no mass beyond its atom but its channel weight is {}",
                what, mass
            )));
        }
        Ok(Lifetime::Empirical(GridFunction {
            grid: cdf.grid,
            values,
        }))
    };
    let cross = masses.reach - masses.atom;
    let g3 = if cross <= MASS_EPS {
        Lifetime::Unsampled
    } else {
        match travel {
            Some((h_0y0, _)) => normalized(h_0y0, masses.atom, cross, "H⁻₀ᵧ₀")?,
            None => Lifetime::Unsampled,
        }
    };
    let g5 = if masses.return_avoiding <= MASS_EPS {
        Lifetime::Unsampled
    } else {
        match travel {
            Some((_, h_00y)) => normalized(h_00y, 0.0, masses.return_avoiding, "H⁻₀₀ᵧ")?,
            None => Lifetime::Unsampled,
        }
    };
    let spec = SixTypeSpec {
        alpha: model.alpha(),
        offspring: model.offspring().clone(),
        masses: *masses,
        total_rate: model.kernel().total_rate(),
        lifetimes: [
            Lifetime::Exponential(1.0),
            Lifetime::Exponential(model.kernel().total_rate()),
            g3.clone(),
            g3,
            g5.clone(),
            g5,
        ],
    };
    let ones = [1.0; 6];
    for i in 0..6 {
        let f1 = spec.offspring_gen(i, &ones);
        assert!(
            (f1 - 1.0).abs() <= 1e-12,
            "offspring map {} does not conserve mass: f(1) = {}",
            i + 1,
            f1
        );
    }
    Ok(spec)
}

/// Which types can appear at all, and whether the matrix powers are strictly
/// positive where the theory says they should be.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecomposabilityReport {
    /// Types reachable from type 1 through positive mean-matrix entries.
    /// Unreachable types are never produced and their rows/columns are
    /// irrelevant to the process actually running.
    pub active: [bool; 6],
    pub full_sixth_power_positive: bool,
    /// Strict positivity of M⁶ restricted to the active types.
    pub active_sixth_power_positive: bool,
    /// When the first-jump atom A is positive, the fourth power already
    /// suffices on the active block.
    pub active_fourth_power_positive: Option<bool>,
}

/// Mean offspring matrix M_ij = ∂f_i/∂s_j at s = (1,…,1).
#[derive(Debug, Clone)]
pub struct MeanMatrix {
    pub m: [[f64; 6]; 6],
    pub decomposability: DecomposabilityReport,
}

impl MeanMatrix {
    pub fn mul_vec(&self, x: &[f64; 6]) -> [f64; 6] {
        let mut out = [0.0; 6];
        for i in 0..6 {
            for j in 0..6 {
                out[i] += self.m[i][j] * x[j];
            }
        }
        out
    }

    pub fn vec_mul(&self, x: &[f64; 6]) -> [f64; 6] {
        let mut out = [0.0; 6];
        for j in 0..6 {
            for i in 0..6 {
                out[j] += x[i] * self.m[i][j];
            }
        }
        out
    }

    /// det(M − κI) by LU elimination with partial pivoting.
    pub fn det_shifted(&self, kappa: f64) -> f64 {
        let mut a = self.m;
        for i in 0..6 {
            a[i][i] -= kappa;
        }
        let mut det = 1.0;
        for col in 0..6 {
            let piv = (col..6)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            if a[piv][col] == 0.0 {
                return 0.0;
            }
            if piv != col {
                a.swap(piv, col);
                det = -det;
            }
            det *= a[col][col];
            for row in col + 1..6 {
                let f = a[row][col] / a[col][col];
                if f != 0.0 {
                    for k in col..6 {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
        det
    }
}

fn mat_mul(a: &[[f64; 6]; 6], b: &[[f64; 6]; 6]) -> [[f64; 6]; 6] {
    let mut c = [[0.0; 6]; 6];
    for i in 0..6 {
        for k in 0..6 {
            if a[i][k] == 0.0 {
                continue;
            }
            for j in 0..6 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

fn mat_pow(m: &[[f64; 6]; 6], n: usize) -> [[f64; 6]; 6] {
    let mut out = *m;
    for _ in 1..n {
        out = mat_mul(&out, m);
    }
    out
}

fn positive_on(p: &[[f64; 6]; 6], mask: &[bool; 6]) -> bool {
    for i in 0..6 {
        for j in 0..6 {
            if mask[i] && mask[j] && !(p[i][j] > 0.0) {
                return false;
            }
        }
    }
    true
}

/// Builds M from the closed-form partial derivatives and checks
/// indecomposability on the active types.  A model/site combination whose
/// active block fails strict positivity of M⁶ is rejected.
pub fn mean_matrix(spec: &SixTypeSpec) -> Result<MeanMatrix> {
    let TabooMasses {
        atom,
        reach,
        return_avoiding: b5,
    } = spec.masses;
    let al = spec.alpha;
    let afp = al * spec.offspring.mean();
    let m = [
        [
            afp,
            (1.0 - al) * atom,
            (1.0 - al) * (reach - atom),
            0.0,
            (1.0 - al) * b5,
            0.0,
        ],
        [atom, 0.0, 0.0, reach - atom, 0.0, b5],
        [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
    ];
    let bound = spec.offspring.mean().max(1.0) + 1e-12;
    for row in &m {
        for &e in row {
            assert!((-1e-15..=bound).contains(&e), "mean entry {} out of range", e);
        }
    }
    // reachability closure from type 1
    let mut active = [false; 6];
    active[0] = true;
    loop {
        let mut grew = false;
        for i in 0..6 {
            if !active[i] {
                continue;
            }
            for j in 0..6 {
                if m[i][j] > 0.0 && !active[j] {
                    active[j] = true;
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
    }
    let sixth = mat_pow(&m, 6);
    let full_sixth_power_positive = positive_on(&sixth, &[true; 6]);
    let active_sixth_power_positive = positive_on(&sixth, &active);
    let active_fourth_power_positive =
        (atom > 0.0).then(|| positive_on(&mat_pow(&m, 4), &active));
    if !active_sixth_power_positive {
        return Err(CbrwError::Decomposable(format!(
            "M⁶ restricted to the active types {:?} has a zero entry",
            active
        )));
    }
    Ok(MeanMatrix {
        m,
        decomposability: DecomposabilityReport {
            active,
            full_sixth_power_positive,
            active_sixth_power_positive,
            active_fourth_power_positive,
        },
    })
}

/// The cubic factor R(κ) of det(M − κI) = κ²(κ−1)R(κ).  The factorization
/// holds only under criticality of the walk.
pub fn r_cubic(model: &CbrwModel, masses: &TabooMasses, kappa: f64) -> f64 {
    let afp = model.alpha() * model.offspring().mean();
    let al = model.alpha();
    let TabooMasses {
        atom,
        reach,
        return_avoiding: b5,
    } = *masses;
    let c2 = 1.0 - afp;
    let c1 = 1.0 - afp - (2.0 - al) * b5 - (1.0 - al) * atom * atom;
    let c0 = (1.0 - al) * (reach - atom).powi(2) - (1.0 - al) * b5 * b5;
    ((kappa + c2) * kappa + c1) * kappa + c0
}

fn r_cubic_prime(model: &CbrwModel, masses: &TabooMasses, kappa: f64) -> f64 {
    let afp = model.alpha() * model.offspring().mean();
    let al = model.alpha();
    let c2 = 1.0 - afp;
    let c1 = 1.0 - afp - (2.0 - al) * masses.return_avoiding - (1.0 - al) * masses.atom.powi(2);
    3.0 * kappa * kappa + 2.0 * kappa * c2 + c1
}

/// 20 sample points in [−2, 2] that avoid the exact roots 0 and 1 of the
/// quartic prefactor.
pub fn default_kappa_samples() -> Vec<f64> {
    (0..20).map(|i| -2.0 + 0.2 * i as f64 + 0.1).collect()
}

/// Max relative residual of det(M − κI) = κ²(κ−1)R(κ) over the samples.
pub fn char_poly_check(
    matrix: &MeanMatrix,
    model: &CbrwModel,
    masses: &TabooMasses,
    kappa_samples: &[f64],
) -> f64 {
    let mut worst = 0.0_f64;
    for &kappa in kappa_samples {
        let det = matrix.det_shifted(kappa);
        let rhs = kappa * kappa * (kappa - 1.0) * r_cubic(model, masses, kappa);
        worst = worst.max((det - rhs).abs() / (1.0 + det.abs()));
    }
    worst
}

/// Everything the criticality identity asserts, evaluated numerically.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CriticalityReport {
    /// |αf′(1) − (1 − (1−α)(B₅ + R²/(1−B₅)))|.
    pub residual: f64,
    /// The four summands of the positive-summand form of R(1).  The first
    /// identity claims each is strictly positive; degenerate geometries can
    /// make individual summands vanish (d = 1 nearest-neighbor has R = A, so
    /// the second summand is exactly 0).
    pub summands: [f64; 4],
    pub r_at_one: f64,
    /// R′(κ) at κ ∈ {1, 1.5, 2, 5}; all must be positive.
    pub r_prime_samples: [(f64, f64); 4],
}

/// Residual of the rewritten criticality identity plus the R(1) > 0
/// bookkeeping.  Pure evaluation — callers decide what to assert.
pub fn criticality_algebra(model: &CbrwModel, masses: &TabooMasses) -> CriticalityReport {
    let al = model.alpha();
    let afp = al * model.offspring().mean();
    let TabooMasses {
        atom,
        reach,
        return_avoiding: b5,
    } = *masses;
    let rhs = 1.0 - (1.0 - al) * (b5 + reach * reach / (1.0 - b5));
    let summands = [
        (1.0 - b5) * ((1.0 - al) * b5 + 1.0),
        (1.0 - al) * reach * (reach - atom),
        (1.0 - al) * reach * (reach - atom * (1.0 - b5)) / (1.0 - b5),
        (1.0 - al) * reach * reach / (1.0 - b5),
    ];
    let kappas = [1.0, 1.5, 2.0, 5.0];
    let mut r_prime_samples = [(0.0, 0.0); 4];
    for (i, &k) in kappas.iter().enumerate() {
        r_prime_samples[i] = (k, r_cubic_prime(model, masses, k));
    }
    CriticalityReport {
        residual: (afp - rhs).abs(),
        summands,
        r_at_one: r_cubic(model, masses, 1.0),
        r_prime_samples,
    }
}

/// Perron eigenpair data: closed-form eigenvectors and the constants U, V, B.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EigenData {
    pub u: [f64; 6],
    pub v: [f64; 6],
    pub big_u: f64,
    pub big_v: f64,
    pub b: f64,
}

/// Residuals of the eigen identities for the closed-form vectors.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EigenResiduals {
    /// sup |Mu − u|
    pub right: f64,
    /// sup |vM − v|
    pub left: f64,
    /// |(u, 1) − 1|
    pub u_one: f64,
    /// |(v, u) − 1|
    pub v_u: f64,
}

pub fn eigen_residuals(matrix: &MeanMatrix, eigen: &EigenData) -> EigenResiduals {
    let mu = matrix.mul_vec(&eigen.u);
    let vm = matrix.vec_mul(&eigen.v);
    let sup = |a: &[f64; 6], b: &[f64; 6]| -> f64 {
        (0..6).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
    };
    let dot = |a: &[f64; 6], b: &[f64; 6]| -> f64 { (0..6).map(|i| a[i] * b[i]).sum() };
    EigenResiduals {
        right: sup(&mu, &eigen.u),
        left: sup(&vm, &eigen.v),
        u_one: (dot(&eigen.u, &[1.0; 6]) - 1.0).abs(),
        v_u: (dot(&eigen.v, &eigen.u) - 1.0).abs(),
    }
}

fn power_iterate(mul: impl Fn(&[f64; 6]) -> [f64; 6]) -> Result<([f64; 6], f64)> {
    let mut x = [1.0_f64; 6];
    let mut prev = f64::NAN;
    for _ in 0..10_000 {
        let y = mul(&x);
        let num: f64 = (0..6).map(|i| y[i] * x[i]).sum();
        let den: f64 = (0..6).map(|i| x[i] * x[i]).sum();
        let rayleigh = num / den;
        let norm: f64 = y.iter().map(|v| v.abs()).sum();
        if !(norm > 0.0) {
            return Err(CbrwError::NonConvergence(
                "power iteration collapsed to the zero vector".into(),
            ));
        }
        let mut xn = [0.0; 6];
        for i in 0..6 {
            xn[i] = y[i] / norm;
        }
        if (rayleigh - prev).abs() <= 1e-12 {
            return Ok((xn, rayleigh));
        }
        prev = rayleigh;
        x = xn;
    }
    Err(CbrwError::NonConvergence(
        "power iteration on the six-type mean matrix".into(),
    ))
}

/// Closed-form Perron eigenvectors, cross-checked against power iteration on
/// M and Mᵀ.  The closed forms hold exactly under criticality, so they are
/// asserted — never rescaled to fit.  The criticality defect of the input
/// masses enters the eigen residuals linearly: exact rational masses (d = 1
/// ruin values) sit at machine precision, while quadrature-calibrated masses
/// inherit the quadrature's consistency, so the constructor gates at 1e-8
/// and the d = 1 acceptance check separately demands 1e-10.
pub fn eigen_data(
    matrix: &MeanMatrix,
    model: &CbrwModel,
    masses: &TabooMasses,
) -> Result<EigenData> {
    let al = model.alpha();
    let afp = al * model.offspring().mean();
    let TabooMasses {
        atom,
        reach,
        return_avoiding: b5,
    } = *masses;
    if 1.0 - b5 <= MASS_EPS {
        return Err(CbrwError::DegenerateNormalizer(
            "1 − B₅ vanishes: the skeleton never escapes its origin loop".into(),
        ));
    }
    let big_u = 3.0 * (1.0 - b5 + reach);
    let big_v = 3.0 - 2.0 * afp - (2.0 - al) * b5
        + (1.0 - al) * ((reach - atom).powi(2) - atom * atom - b5 * b5);
    if big_u <= 0.0 || big_v <= 0.0 {
        return Err(CbrwError::DegenerateNormalizer(format!(
            "nonpositive normalizer: U = {}, V = {}",
            big_u, big_v
        )));
    }
    let u_site = (1.0 - b5) / big_u;
    let u_transit = reach / big_u;
    let u = [u_site, u_transit, u_transit, u_site, u_site, u_transit];
    let v2 = big_u * (1.0 - al) * reach / (big_v * (1.0 - b5));
    let v = [
        big_u / big_v,
        v2,
        big_u * (1.0 - al) * (reach - atom) / big_v,
        v2 * (reach - atom),
        big_u * (1.0 - al) * b5 / big_v,
        v2 * b5,
    ];
    let sigma_sq = model.sigma_sq();
    let b = sigma_sq * (1.0 - b5) * (1.0 - b5) / (2.0 * big_u * big_v);
    let eigen = EigenData {
        u,
        v,
        big_u,
        big_v,
        b,
    };
    // the closed forms must satisfy the eigen identities on the nose
    let res = eigen_residuals(matrix, &eigen);
    let closed_dev = res.right.max(res.left).max(res.u_one).max(res.v_u);
    if closed_dev > 1e-8 {
        return Err(CbrwError::EigenMismatch {
            deviation: closed_dev,
        });
    }
    // and agree with an independent numerical Perron pair
    let (pu, lambda_r) = power_iterate(|x| matrix.mul_vec(x))?;
    let (pv, lambda_l) = power_iterate(|x| matrix.vec_mul(x))?;
    let pu_sum: f64 = pu.iter().sum();
    let pv_dot_u: f64 = (0..6).map(|i| pv[i] * u[i]).sum();
    let mut dev = (lambda_r - 1.0).abs().max((lambda_l - 1.0).abs());
    for i in 0..6 {
        dev = dev.max((pu[i] / pu_sum - u[i]).abs());
        dev = dev.max((pv[i] / pv_dot_u - v[i]).abs());
    }
    if dev > 1e-8 {
        return Err(CbrwError::EigenMismatch { deviation: dev });
    }
    Ok(eigen)
}

/// Checks x − (v, 1 − f(1 − ux)) ~ B x² by evaluating the ratio to Bx² at
/// the samples; each must sit within 1 ± 5x.  Returns the worst |ratio − 1|.
#[allow(non_snake_case)]
pub fn verify_B_expansion(
    spec: &SixTypeSpec,
    eigen: &EigenData,
    x_samples: &[f64],
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for &x in x_samples {
        if !(x > 0.0 && x <= 0.05) {
            return Err(CbrwError::InvalidParameter(format!(
                "expansion sample x = {} outside (0, 0.05]",
                x
            )));
        }
        let mut s = [0.0; 6];
        for i in 0..6 {
            s[i] = 1.0 - eigen.u[i] * x;
        }
        let mut dot = 0.0;
        for i in 0..6 {
            dot += eigen.v[i] * (1.0 - spec.offspring_gen(i, &s));
        }
        let ratio = (x - dot) / (eigen.b * x * x);
        let dev = (ratio - 1.0).abs();
        worst = worst.max(dev);
        if dev > 5.0 * x {
            return Err(CbrwError::Instability(format!(
                "second-order expansion ratio {} at x = {} leaves the 1 ± 5x envelope",
                ratio, x
            )));
        }
    }
    Ok(worst)
}

/// Direct event-driven simulation of the six-type process from one type-1
/// particle, reporting the same per-role moments as
/// [`crate::simulate::simulate_role_moments`] so the distributional identity
/// can be checked estimate against estimate.
pub fn simulate_six_type(
    spec: &SixTypeSpec,
    times: &[f64],
    replicas: u64,
    seed: u64,
) -> Result<Vec<RoleMoments>> {
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) || times[0] <= 0.0 {
        return Err(CbrwError::InvalidParameter(
            "query times must be positive and strictly increasing".into(),
        ));
    }
    if replicas == 0 {
        return Err(CbrwError::InvalidParameter("zero replicas".into()));
    }
    let last_query = *times.last().unwrap();
    let cross = spec.masses.reach - spec.masses.atom;
    let needed: [(usize, f64); 2] = [(2, cross), (4, spec.masses.return_avoiding)];
    for (idx, mass) in needed {
        if mass > MASS_EPS {
            match &spec.lifetimes[idx] {
                Lifetime::Unsampled => {
                    return Err(CbrwError::InvalidParameter(format!(
                        "lifetime G{} has weight {} but no c.d.f. was supplied",
                        idx + 1,
                        mass
                    )));
                }
                l => {
                    if l.horizon() < last_query {
                        return Err(CbrwError::GridMismatch(format!(
                            "lifetime G{} horizon {} is shorter than the last query {}",
                            idx + 1,
                            l.horizon(),
                            last_query
                        )));
                    }
                }
            }
        }
    }
    const MAX_PARTICLES: usize = 1_000_000;
    let offspring_table = AliasTable::new(spec.offspring.probs());
    struct Partial {
        m1: Vec<[f64; 6]>,
        m2: Vec<[f64; 6]>,
        n: u64,
        excluded: u64,
    }
    let chunk = 4096u64;
    let n_chunks = (replicas + chunk - 1) / chunk;
    let partials: Vec<Partial> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let lo = ci * chunk;
            let hi = (lo + chunk).min(replicas);
            let mut acc = Partial {
                m1: vec![[0.0; 6]; times.len()],
                m2: vec![[0.0; 6]; times.len()],
                n: 0,
                excluded: 0,
            };
            'replica: for rep in lo..hi {
                let mut rng = CounterRng::new(seed, rep);
                // heap of (death time, birth order, type), earliest first
                let mut heap: BinaryHeap<(Reverse<TotalF64>, Reverse<u64>, u8)> =
                    BinaryHeap::new();
                let mut seq = 0u64;
                let push = |heap: &mut BinaryHeap<_>,
                                seq: &mut u64,
                                ty: usize,
                                death: f64| {
                    heap.push((Reverse(TotalF64(death)), Reverse(*seq), ty as u8));
                    *seq += 1;
                };
                let first = spec.lifetimes[0].sample(&mut rng);
                push(&mut heap, &mut seq, 0, first);
                let mut counts = vec![[0u64; 6]; times.len()];
                let mut next_query = 0usize;
                loop {
                    let event_time = heap.peek().map(|e| e.0 .0 .0);
                    while next_query < times.len()
                        && event_time.map_or(true, |et| et > times[next_query])
                    {
                        for &(_, _, ty) in heap.iter() {
                            counts[next_query][ty as usize] += 1;
                        }
                        next_query += 1;
                    }
                    if next_query >= times.len() {
                        break;
                    }
                    let Some((Reverse(TotalF64(now)), _, ty)) = heap.pop() else {
                        break;
                    };
                    let masses = &spec.masses;
                    match ty {
                        0 => {
                            if rng.bernoulli(spec.alpha) {
                                let k = offspring_table.sample(&mut rng);
                                if heap.len() + k > MAX_PARTICLES {
                                    acc.excluded += 1;
                                    continue 'replica;
                                }
                                for _ in 0..k {
                                    let dt = spec.lifetimes[0].sample(&mut rng);
                                    push(&mut heap, &mut seq, 0, now + dt);
                                }
                            } else {
                                let r = rng.uniform();
                                let child = if r < masses.atom {
                                    Some(1)
                                } else if r < masses.reach {
                                    Some(2)
                                } else if r < masses.reach + masses.return_avoiding {
                                    Some(4)
                                } else {
                                    None
                                };
                                if let Some(c) = child {
                                    let dt = spec.lifetimes[c].sample(&mut rng);
                                    push(&mut heap, &mut seq, c, now + dt);
                                }
                            }
                        }
                        1 => {
                            let r = rng.uniform();
                            let child = if r < masses.atom {
                                Some(0)
                            } else if r < masses.reach {
                                Some(3)
                            } else if r < masses.reach + masses.return_avoiding {
                                Some(5)
                            } else {
                                None
                            };
                            if let Some(c) = child {
                                let dt = spec.lifetimes[c].sample(&mut rng);
                                push(&mut heap, &mut seq, c, now + dt);
                            }
                        }
                        // transit types transform into the site they commit to
                        2 | 5 => {
                            let dt = spec.lifetimes[1].sample(&mut rng);
                            push(&mut heap, &mut seq, 1, now + dt);
                        }
                        3 | 4 => {
                            let dt = spec.lifetimes[0].sample(&mut rng);
                            push(&mut heap, &mut seq, 0, now + dt);
                        }
                        _ => unreachable!("type out of range"),
                    }
                }
                acc.n += 1;
                for qi in 0..times.len() {
                    for i in 0..6 {
                        let c = counts[qi][i] as f64;
                        acc.m1[qi][i] += c;
                        acc.m2[qi][i] += c * c;
                    }
                }
            }
            acc
        })
        .collect();
    let mut m1 = vec![[0.0; 6]; times.len()];
    let mut m2 = vec![[0.0; 6]; times.len()];
    let mut n = 0u64;
    let mut excluded = 0u64;
    for p in &partials {
        for qi in 0..times.len() {
            for i in 0..6 {
                m1[qi][i] += p.m1[qi][i];
                m2[qi][i] += p.m2[qi][i];
            }
        }
        n += p.n;
        excluded += p.excluded;
    }
    if n == 0 {
        return Err(CbrwError::InsufficientSurvivors { got: 0, need: 1 });
    }
    Ok(times
        .iter()
        .enumerate()
        .map(|(qi, &t)| {
            let mut roles = [McEstimate {
                value: 0.0,
                stderr: 0.0,
                n,
                m1: 0.0,
                m2: 0.0,
                excluded,
            }; 6];
            for i in 0..6 {
                let a1 = m1[qi][i] / n as f64;
                let a2 = m2[qi][i] / n as f64;
                let var = (a2 - a1 * a1).max(0.0);
                roles[i] = McEstimate {
                    value: a1,
                    stderr: (var / n as f64).sqrt(),
                    n,
                    m1: a1,
                    m2: a2,
                    excluded,
                };
            }
            RoleMoments {
                t,
                roles,
                censored: 0,
            }
        })
        .collect())
}

/// One-stop report over the whole algebra, built from exact taboo masses.
#[derive(Debug, Clone, Serialize)]
pub struct BellmanReport {
    pub masses: TabooMasses,
    pub mean_matrix: [[f64; 6]; 6],
    pub decomposability: DecomposabilityReport,
    pub criticality: CriticalityReport,
    pub char_poly_max_residual: f64,
    pub eigen: EigenData,
    pub eigen_residuals: EigenResiduals,
    pub b_expansion_max_deviation: f64,
}

/// Runs every check of this module for one model/site pair with exact
/// masses; the CLI serializes the result as JSON.
pub fn bellman_report(model: &CbrwModel, y: &Point) -> Result<BellmanReport> {
    let masses = TabooMasses::exact(model, y)?;
    let spec = build_six_type(model, y, &masses, None)?;
    let matrix = mean_matrix(&spec)?;
    let criticality = criticality_algebra(model, &masses);
    let char_poly_max_residual =
        char_poly_check(&matrix, model, &masses, &default_kappa_samples());
    let eigen = eigen_data(&matrix, model, &masses)?;
    let residuals = eigen_residuals(&matrix, &eigen);
    let b_expansion_max_deviation = verify_B_expansion(&spec, &eigen, &[1e-2, 1e-3])?;
    Ok(BellmanReport {
        masses,
        mean_matrix: matrix.m,
        decomposability: matrix.decomposability,
        criticality,
        char_poly_max_residual,
        eigen,
        eigen_residuals: residuals,
        b_expansion_max_deviation,
    })
}
