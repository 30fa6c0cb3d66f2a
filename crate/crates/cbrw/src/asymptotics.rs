//! Leading-order long-time formulas for the local observables of the
//! critical model — the mean m(t;x,y) = E_x μ(t;y) and the survival
//! probability q(t;x,y) = P_x(μ(t;y) > 0) — plus the conditional limit
//! transforms of μ(t;y) and the ratio-curve machinery that compares any
//! measured route against its asymptote.
//!
//! Every pair (dimension, catalyst site) selects exactly one row per family:
//!
//! mean      d=1: γ₁/√t                        d=2: γ₂/t
//!           d=3: G₀(x,0)G₀(0,y)/(2πγ₃√t)      d=4: G₀(x,0)G₀(0,y)/(γ₄ ln t)
//!           d≥5: (1−α)G₀(x,0)G₀(0,y)/(a G₀²(0,0) m_d)   (a constant limit);
//!           the catalyst site y = 0 picks up the return factor a/(1−α)
//!           in every dimension.
//! survival  d=1: 2(1−α)/(σ²γ₁ a √t ln t)
//!           d=2: (γ₂/t)(1 − aJ(0;y)/(1−α)),  at y = 0: (γ₂a/((1−α)t))(1 − J(0;0))
//!           d=3: 4πγ₃(1−α)G₀(x,0)/(σ² a G₀³(0,0) √t ln t)
//!           d=4: 3γ₄(1−α)G₀(x,0) ln t/(σ² a G₀³(0,0) t)
//!           d≥5: 2 m_d G₀(x,0)/(σ² G₀(0,0) t).
//! limit law of μ(t;y)/E_x(μ(t;y) | μ(t;y) > 0) given survival: exponential,
//!           Laplace transform 1/(λ+1), for d = 1, 3 and d ≥ 5; the mixture
//!           1/3 + (2/3)·2/(2+3λ) for d = 4; and in d = 2 — for μ(t;y)
//!           itself, unnormalized — a discrete law whose pgf is assembled
//!           from the planar quadrature constants J(s;y).
//!
//! The only inputs without a closed form are the planar J values; every
//! result depending on them is a [`ValueInterval`] carrying the propagated
//! error bar instead of a bare number.  In d = 4 the conditional mean grows
//! like c*·t/ln²t with c* = σ²aG₀³(0,0)G₀(0,y)/(3γ₄²(1−α)); the constant is
//! exported in the bundle so measured populations can be normalized without
//! re-deriving it.

use serde::Serialize;

use crate::error::{CbrwError, Result};
use crate::grid::GridFunction;
use crate::lattice::Point;
use crate::model::CbrwModel;
use crate::transition::{gamma_d, gamma_tilde, m_d_constant, GreenCache};
use crate::volterra::JEstimate;

/// Rows containing ln t are refused for t ≤ e so every logarithm is > 1 and
/// the displayed sign structure cannot flip.
const LN_THRESHOLD: f64 = std::f64::consts::E;

/// The three families of closed forms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Quantity {
    Mean,
    Survival,
    LimitTransform,
}

/// Shape class of the conditional limit law.  The class is a function of
/// (dimension, catalyst at origin?) alone — see [`limit_class_for`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LimitClass {
    /// d = 1, 3 or ≥ 5: exponential limit, Laplace transform 1/(λ+1).
    Exponential,
    /// d = 2, y ≠ 0: discrete limit, pgf ((1−α)s − a(J(0;y)−J(s;y)))/((1−α) − aJ(0;y)).
    PgfOffOrigin,
    /// d = 2, y = 0: discrete limit, pgf (s − (J(0;0)−J(s;0)))/(1 − J(0;0)).
    PgfAtOrigin,
    /// d = 4: mixture, Laplace transform 1/3 + (2/3)·2/(2+3λ).
    Mixture,
}

/// Argument of a limit transform; the variant must match the class.
#[derive(Clone, Copy, Debug)]
pub enum TransformArg {
    /// Laplace argument λ ≥ 0 (classes `Exponential` and `Mixture`).
    Lambda(f64),
    /// pgf argument s ∈ [0,1] (the planar classes).
    S(f64),
}

/// Total map (d, y = 0?) → limit class.
pub fn limit_class_for(dimension: usize, at_origin: bool) -> LimitClass {
    assert!(dimension >= 1, "lattice dimension must be positive");
    match dimension {
        2 if at_origin => LimitClass::PgfAtOrigin,
        2 => LimitClass::PgfOffOrigin,
        4 => LimitClass::Mixture,
        _ => LimitClass::Exponential,
    }
}

/// A value together with a symmetric numerical error bar.  Closed-form rows
/// return `half_width = 0`; rows built on the planar J quadratures propagate
/// the J error bars linearly.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ValueInterval {
    pub value: f64,
    pub half_width: f64,
}

impl ValueInterval {
    pub fn exact(value: f64) -> ValueInterval {
        ValueInterval {
            value,
            half_width: 0.0,
        }
    }

    pub fn lower(&self) -> f64 {
        self.value - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.value + self.half_width
    }
}

impl From<&JEstimate> for ValueInterval {
    fn from(j: &JEstimate) -> ValueInterval {
        ValueInterval {
            value: j.value,
            half_width: j.error_bar,
        }
    }
}

/// J(0;y) and J(s;y) for one planar transform evaluation.
#[derive(Clone, Copy, Debug)]
pub struct JPair {
    pub at_zero: JEstimate,
    pub at_arg: JEstimate,
}

/// Every constant the selected rows can draw on, fully evaluated for one
/// (model, x, y) triple.  Optional fields are populated exactly when the
/// selected family needs them (plus G₀(0,0), which the model has already
/// paid for through h_d).
#[derive(Clone, Debug, Serialize)]
pub struct ConstantsBundle {
    pub dimension: usize,
    pub alpha: f64,
    /// Total jump rate a.
    pub total_rate: f64,
    /// σ² = α·f″(1).
    pub sigma_sq: f64,
    /// γ_d, the constant of p(t;0,0) ~ γ_d t^{−d/2}.
    pub gamma_d: f64,
    /// γ̃_d(y−x), the second-order constant of p(t;0,0) − p(t;x,y).
    pub gamma_tilde_y_minus_x: f64,
    /// h_d = (a G₀(0,0))^{−1} for d ≥ 3; zero in the recurrent dimensions.
    pub h_d: f64,
    pub g0_x_to_origin: Option<f64>,
    pub g0_origin_to_y: Option<f64>,
    pub g0_origin: Option<f64>,
    /// Constant-limit normalizer, finite for d ≥ 5.
    pub m_d: Option<f64>,
    /// d = 4 conditional-mean scale: m/q ~ c*·t/ln²t.
    pub c_star: Option<f64>,
    /// J(0;y) with its error bar (planar rows only).
    pub j_at_zero: Option<ValueInterval>,
}

/// One selected row: which family, which case, and the constants it needs.
/// Selection is total over (d ≥ 1, y); the constants are validated finite at
/// construction, so evaluation cannot silently produce NaN.
#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticFormula {
    pub dimension: usize,
    pub quantity: Quantity,
    /// Whether the catalyst site y is the origin.
    pub at_origin: bool,
    /// Set when `quantity` is `LimitTransform`.
    pub limit_class: Option<LimitClass>,
    pub x: Vec<i32>,
    pub y: Vec<i32>,
    pub constants: ConstantsBundle,
}

impl AsymptoticFormula {
    /// Selects the row for (model, quantity, x, y) and evaluates its
    /// constants.  `j_at_zero` is required exactly for the planar (d = 2)
    /// survival and limit-transform rows.
    pub fn select(
        model: &CbrwModel,
        quantity: Quantity,
        x: &Point,
        y: &Point,
        j_at_zero: Option<&JEstimate>,
    ) -> Result<AsymptoticFormula> {
        let d = model.dim();
        if x.dim() != d || y.dim() != d {
            return Err(CbrwError::InvalidParameter(format!(
                "points of dimension {}/{} on a dimension-{} lattice",
                x.dim(),
                y.dim(),
                d
            )));
        }
        if model.is_degenerate() && quantity != Quantity::Mean {
            return Err(CbrwError::InvalidParameter(
                "survival and limit formulas need a branching offspring law (σ² > 0); \
                 the degenerate law keeps exactly one particle alive forever"
                    .into(),
            ));
        }
        let at_origin = y.is_zero();
        let kernel = model.kernel();
        let alpha = model.alpha();
        let a_rate = kernel.total_rate();
        let h_d = model.escape_prob();
        let gamma = gamma_d(kernel)?;
        let gamma_tilde_y_minus_x = gamma_tilde(kernel, &y.sub(x))?;

        // G₀(0,0) comes for free from the escape probability the model
        // computed at construction: h_d = (a G₀(0,0))⁻¹.
        let g0_origin = (d >= 3).then(|| 1.0 / (a_rate * h_d));
        let needs_c_star = d == 4 && quantity != Quantity::Survival;
        let mut cache = GreenCache::new(kernel);
        let mut g0_at = |p: &Point| -> Result<f64> {
            if p.is_zero() {
                Ok(g0_origin.expect("origin Green value exists for d ≥ 3"))
            } else {
                cache.g0(p)
            }
        };
        let g0_x_to_origin = if d >= 3 && quantity != Quantity::LimitTransform {
            Some(g0_at(x)?)
        } else {
            None
        };
        let g0_origin_to_y = if d >= 3 && (quantity == Quantity::Mean || needs_c_star) {
            Some(g0_at(y)?)
        } else {
            None
        };
        let m_d = if d >= 5 && quantity != Quantity::LimitTransform {
            Some(m_d_constant(kernel, alpha)?)
        } else {
            None
        };
        let sigma_sq = model.sigma_sq();
        let c_star = if needs_c_star {
            let g00 = g0_origin.expect("d = 4 is transient");
            let g0y = g0_origin_to_y.expect("computed above for the c* case");
            Some(sigma_sq * a_rate * g00.powi(3) * g0y / (3.0 * gamma * gamma * (1.0 - alpha)))
        } else {
            None
        };

        let needs_j = d == 2 && quantity != Quantity::Mean;
        let j_val = j_at_zero.map(ValueInterval::from);
        if needs_j && j_val.is_none() {
            return Err(CbrwError::InvalidParameter(format!(
                "the planar row needs the quadrature constant J(0;y) for y = {:?}; \
                 compute it first and pass it in",
                y.coords()
            )));
        }

        let formula = AsymptoticFormula {
            dimension: d,
            quantity,
            at_origin,
            limit_class: (quantity == Quantity::LimitTransform)
                .then(|| limit_class_for(d, at_origin)),
            x: x.coords().to_vec(),
            y: y.coords().to_vec(),
            constants: ConstantsBundle {
                dimension: d,
                alpha,
                total_rate: a_rate,
                sigma_sq,
                gamma_d: gamma,
                gamma_tilde_y_minus_x,
                h_d,
                g0_x_to_origin,
                g0_origin_to_y,
                g0_origin,
                m_d,
                c_star,
                j_at_zero: j_val,
            },
        };
        formula.check_finite()?;
        Ok(formula)
    }

    /// Every constant the selected row uses must be finite (and the scale
    /// factors positive); anything else means the calibration upstream broke.
    fn check_finite(&self) -> Result<()> {
        let c = &self.constants;
        let mut used: Vec<(&str, f64)> = vec![
            ("alpha", c.alpha),
            ("total_rate", c.total_rate),
            ("gamma_d", c.gamma_d),
            ("gamma_tilde", c.gamma_tilde_y_minus_x),
            ("h_d", c.h_d),
        ];
        if self.quantity != Quantity::Mean {
            used.push(("sigma_sq", c.sigma_sq));
        }
        for (name, opt) in [
            ("G0(x,0)", c.g0_x_to_origin),
            ("G0(0,y)", c.g0_origin_to_y),
            ("G0(0,0)", c.g0_origin),
            ("m_d", c.m_d),
            ("c_star", c.c_star),
        ] {
            if let Some(v) = opt {
                used.push((name, v));
            }
        }
        if let Some(j) = c.j_at_zero {
            used.push(("J(0;y)", j.value));
            used.push(("J error bar", j.half_width));
        }
        for (name, v) in used {
            if !v.is_finite() {
                return Err(CbrwError::InvalidParameter(format!(
                    "constant {} = {} is not finite",
                    name, v
                )));
            }
        }
        if !(c.gamma_d > 0.0) {
            return Err(CbrwError::SingularHessian);
        }
        Ok(())
    }

    /// Leading-order value at time t (mean and survival families).
    pub fn eval(&self, t: f64) -> Result<ValueInterval> {
        match self.quantity {
            Quantity::Mean => self.eval_mean(t).map(ValueInterval::exact),
            Quantity::Survival => self.eval_survival(t),
            Quantity::LimitTransform => Err(CbrwError::InvalidParameter(
                "a limit transform takes a transform argument; call `transform`".into(),
            )),
        }
    }

    fn eval_mean(&self, t: f64) -> Result<f64> {
        if !(t > 1.0) {
            return Err(CbrwError::InvalidParameter(format!(
                "mean asymptote needs t > 1, got {}",
                t
            )));
        }
        let c = &self.constants;
        let return_factor = c.total_rate / (1.0 - c.alpha);
        Ok(match self.dimension {
            1 => {
                if self.at_origin {
                    c.gamma_d * return_factor / t.sqrt()
                } else {
                    c.gamma_d / t.sqrt()
                }
            }
            2 => {
                if self.at_origin {
                    c.gamma_d * return_factor / t
                } else {
                    c.gamma_d / t
                }
            }
            3 => {
                let gx0 = c.g0_x_to_origin.expect("validated at selection");
                let g0y = c.g0_origin_to_y.expect("validated at selection");
                let base = gx0 * g0y / (2.0 * std::f64::consts::PI * c.gamma_d * t.sqrt());
                if self.at_origin {
                    base * return_factor
                } else {
                    base
                }
            }
            4 => {
                if !(t > LN_THRESHOLD) {
                    return Err(CbrwError::InvalidParameter(format!(
                        "the d = 4 mean row contains ln t and needs t > e, got {}",
                        t
                    )));
                }
                let gx0 = c.g0_x_to_origin.expect("validated at selection");
                let g0y = c.g0_origin_to_y.expect("validated at selection");
                let base = gx0 * g0y / (c.gamma_d * t.ln());
                if self.at_origin {
                    base * return_factor
                } else {
                    base
                }
            }
            _ => {
                // constant limit; t only gates the asymptotic regime
                let gx0 = c.g0_x_to_origin.expect("validated at selection");
                let g00 = c.g0_origin.expect("validated at selection");
                let m_d = c.m_d.expect("validated at selection");
                if self.at_origin {
                    gx0 / (g00 * m_d)
                } else {
                    let g0y = c.g0_origin_to_y.expect("validated at selection");
                    (1.0 - c.alpha) * gx0 * g0y / (c.total_rate * g00 * g00 * m_d)
                }
            }
        })
    }

    fn eval_survival(&self, t: f64) -> Result<ValueInterval> {
        if !(t > LN_THRESHOLD) {
            return Err(CbrwError::InvalidParameter(format!(
                "survival asymptote needs t > e, got {}",
                t
            )));
        }
        let c = &self.constants;
        Ok(match self.dimension {
            1 => ValueInterval::exact(
                2.0 * (1.0 - c.alpha)
                    / (c.sigma_sq * c.gamma_d * c.total_rate * t.sqrt() * t.ln()),
            ),
            2 => {
                let j = c.j_at_zero.expect("validated at selection");
                let (base, bracket, j_scale) = if self.at_origin {
                    let base = c.gamma_d * c.total_rate / ((1.0 - c.alpha) * t);
                    (base, 1.0 - j.value, 1.0)
                } else {
                    let base = c.gamma_d / t;
                    let scale = c.total_rate / (1.0 - c.alpha);
                    (base, 1.0 - scale * j.value, scale)
                };
                if bracket <= 0.0 {
                    return Err(CbrwError::Instability(format!(
                        "planar survival bracket {} ≤ 0: the supplied J(0;y) = {} violates \
                         its strict upper bound",
                        bracket, j.value
                    )));
                }
                ValueInterval {
                    value: base * bracket,
                    half_width: base * j_scale * j.half_width,
                }
            }
            3 => {
                let gx0 = c.g0_x_to_origin.expect("validated at selection");
                let g00 = c.g0_origin.expect("validated at selection");
                ValueInterval::exact(
                    4.0 * std::f64::consts::PI * c.gamma_d * (1.0 - c.alpha) * gx0
                        / (c.sigma_sq * c.total_rate * g00.powi(3) * t.sqrt() * t.ln()),
                )
            }
            4 => {
                let gx0 = c.g0_x_to_origin.expect("validated at selection");
                let g00 = c.g0_origin.expect("validated at selection");
                ValueInterval::exact(
                    3.0 * c.gamma_d * (1.0 - c.alpha) * gx0 * t.ln()
                        / (c.sigma_sq * c.total_rate * g00.powi(3) * t),
                )
            }
            _ => {
                let gx0 = c.g0_x_to_origin.expect("validated at selection");
                let g00 = c.g0_origin.expect("validated at selection");
                let m_d = c.m_d.expect("validated at selection");
                ValueInterval::exact(2.0 * m_d * gx0 / (c.sigma_sq * g00 * t))
            }
        })
    }

    /// Limit-transform family; `j_at_arg` supplies J(s;y) for the planar
    /// classes (J(0;y) already lives in the bundle).
    pub fn transform(&self, arg: TransformArg, j_at_arg: Option<&JEstimate>) -> Result<ValueInterval> {
        let class = self.limit_class.ok_or_else(|| {
            CbrwError::InvalidParameter(
                "mean/survival formulas are evaluated at a time; call `eval`".into(),
            )
        })?;
        transform_in_class(
            class,
            self.constants.alpha,
            self.constants.total_rate,
            arg,
            self.constants.j_at_zero,
            j_at_arg.map(ValueInterval::from),
        )
    }
}

/// Leading-order mean m(t;x,y) for the model's (d, y) row.
pub fn mean_asymptote(model: &CbrwModel, x: &Point, y: &Point, t: f64) -> Result<f64> {
    let formula = AsymptoticFormula::select(model, Quantity::Mean, x, y, None)?;
    Ok(formula.eval(t)?.value)
}

/// Leading-order survival probability q(t;x,y); the planar rows need
/// `j_at_zero` and return an interval reflecting its error bar.
pub fn survival_asymptote(
    model: &CbrwModel,
    x: &Point,
    y: &Point,
    t: f64,
    j_at_zero: Option<&JEstimate>,
) -> Result<ValueInterval> {
    AsymptoticFormula::select(model, Quantity::Survival, x, y, j_at_zero)?.eval(t)
}

/// Conditional limit transform for an explicitly chosen class.  Only the
/// planar classes read the model (α and a) and the J pair; the exponential
/// and mixture classes are universal.
pub fn limit_transform(
    model: &CbrwModel,
    class: LimitClass,
    arg: TransformArg,
    j: Option<&JPair>,
) -> Result<ValueInterval> {
    transform_in_class(
        class,
        model.alpha(),
        model.kernel().total_rate(),
        arg,
        j.map(|p| ValueInterval::from(&p.at_zero)),
        j.map(|p| ValueInterval::from(&p.at_arg)),
    )
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(CbrwError::InvalidParameter(format!(
            "Laplace argument λ = {} must be finite and ≥ 0",
            lambda
        )));
    }
    Ok(())
}

fn check_s(s: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&s) {
        return Err(CbrwError::InvalidParameter(format!(
            "pgf argument s = {} must lie in [0,1]",
            s
        )));
    }
    Ok(())
}

fn transform_in_class(
    class: LimitClass,
    alpha: f64,
    a_rate: f64,
    arg: TransformArg,
    j_at_zero: Option<ValueInterval>,
    j_at_arg: Option<ValueInterval>,
) -> Result<ValueInterval> {
    let require_j = |j: Option<ValueInterval>, which: &str| -> Result<ValueInterval> {
        j.ok_or_else(|| {
            CbrwError::InvalidParameter(format!(
                "the planar transform needs {}; compute it first and pass it in",
                which
            ))
        })
    };
    match (class, arg) {
        (LimitClass::Exponential, TransformArg::Lambda(l)) => {
            check_lambda(l)?;
            Ok(ValueInterval::exact(1.0 / (l + 1.0)))
        }
        (LimitClass::Mixture, TransformArg::Lambda(l)) => {
            check_lambda(l)?;
            Ok(ValueInterval::exact(
                1.0 / 3.0 + 2.0 / 3.0 * 2.0 / (2.0 + 3.0 * l),
            ))
        }
        (LimitClass::PgfOffOrigin, TransformArg::S(s)) => {
            check_s(s)?;
            let j0 = require_j(j_at_zero, "J(0;y)")?;
            let js = require_j(j_at_arg, "J(s;y)")?;
            let den = (1.0 - alpha) - a_rate * j0.value;
            if den <= 0.0 {
                return Err(CbrwError::Instability(format!(
                    "denominator (1−α) − aJ(0;y) = {} ≤ 0: J(0;y) violates its strict bound",
                    den
                )));
            }
            let value = ((1.0 - alpha) * s - a_rate * (j0.value - js.value)) / den;
            let half_width = (a_rate * (j0.half_width + js.half_width)
                + value.abs() * a_rate * j0.half_width)
                / den;
            Ok(ValueInterval { value, half_width })
        }
        (LimitClass::PgfAtOrigin, TransformArg::S(s)) => {
            check_s(s)?;
            let j0 = require_j(j_at_zero, "J(0;0)")?;
            let js = require_j(j_at_arg, "J(s;0)")?;
            let den = 1.0 - j0.value;
            if den <= 0.0 {
                return Err(CbrwError::Instability(format!(
                    "denominator 1 − J(0;0) = {} ≤ 0: J(0;0) violates its strict bound",
                    den
                )));
            }
            let value = (s - (j0.value - js.value)) / den;
            let half_width =
                (j0.half_width + js.half_width + value.abs() * j0.half_width) / den;
            Ok(ValueInterval { value, half_width })
        }
        (LimitClass::Exponential | LimitClass::Mixture, TransformArg::S(_)) => {
            Err(CbrwError::InvalidParameter(
                "this class is a Laplace transform in λ; got a pgf argument s".into(),
            ))
        }
        (LimitClass::PgfOffOrigin | LimitClass::PgfAtOrigin, TransformArg::Lambda(_)) => {
            Err(CbrwError::InvalidParameter(
                "the planar classes are pgfs in s; got a Laplace argument λ".into(),
            ))
        }
    }
}

/// One row of a ratio-to-asymptote table.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RatioRow {
    pub t: f64,
    pub observed: f64,
    pub asymptote: f64,
    pub ratio: f64,
    /// |ratio − 1|, the monotone-approach statistic.
    pub gap: f64,
}

/// Ratio table over a geometric time ladder.
#[derive(Clone, Debug, Serialize)]
pub struct RatioCurve {
    pub quantity: String,
    pub rows: Vec<RatioRow>,
    /// Whether |ratio − 1| strictly decreases along the ladder.
    pub gap_strictly_decreasing: bool,
}

/// A measured route to compare against an asymptote.
pub enum RouteValues<'a> {
    /// Dense solver output, sampled by linear interpolation.
    Dense(&'a GridFunction),
    /// Discrete (t, value) estimates, e.g. Monte Carlo; must contain every
    /// requested time exactly.
    Series(&'a [(f64, f64)]),
}

fn route_value(route: &RouteValues, t: f64) -> Result<f64> {
    match route {
        RouteValues::Dense(gf) => {
            let grid = gf.grid;
            if !(t >= 0.0) || t > grid.horizon() * (1.0 + 1e-9) {
                return Err(CbrwError::GridMismatch(format!(
                    "t = {} lies outside the solved horizon {}",
                    t,
                    grid.horizon()
                )));
            }
            let pos = (t / grid.step()).min((grid.len() - 1) as f64);
            let i = (pos.floor() as usize).min(grid.len() - 2);
            let frac = pos - i as f64;
            Ok(gf.values[i] * (1.0 - frac) + gf.values[i + 1] * frac)
        }
        RouteValues::Series(points) => points
            .iter()
            .find(|(tt, _)| (tt - t).abs() <= 1e-9 * t.max(1.0))
            .map(|&(_, v)| v)
            .ok_or_else(|| {
                CbrwError::GridMismatch(format!("the series has no sample at t = {}", t))
            }),
    }
}

/// Compares a measured route against an asymptote evaluator over a geometric
/// time ladder and reports ratio(t) = observed/asymptote together with the
/// approach statistic |ratio − 1|.
pub fn ratio_curve(
    quantity: &str,
    route: RouteValues,
    asymptote: &mut dyn FnMut(f64) -> Result<f64>,
    t_samples: &[f64],
) -> Result<RatioCurve> {
    if t_samples.len() < 2 {
        return Err(CbrwError::InvalidParameter(
            "a ratio curve needs at least two sample times".into(),
        ));
    }
    if !(t_samples[0] > 0.0) {
        return Err(CbrwError::InvalidParameter(format!(
            "sample times must be positive, got {}",
            t_samples[0]
        )));
    }
    let q0 = t_samples[1] / t_samples[0];
    if !(q0 > 1.0) {
        return Err(CbrwError::InvalidParameter(
            "sample times must increase geometrically".into(),
        ));
    }
    for w in t_samples.windows(2) {
        let q = w[1] / w[0];
        if !((q / q0 - 1.0).abs() <= 0.01) {
            return Err(CbrwError::InvalidParameter(format!(
                "sample times must form a geometric ladder; spacing {} breaks the ratio {}",
                q, q0
            )));
        }
    }
    let mut rows = Vec::with_capacity(t_samples.len());
    for &t in t_samples {
        let observed = route_value(&route, t)?;
        let asym = asymptote(t)?;
        if !(asym.is_finite() && asym != 0.0) {
            return Err(CbrwError::InvalidParameter(format!(
                "asymptote value {} at t = {} cannot anchor a ratio",
                asym, t
            )));
        }
        let ratio = observed / asym;
        rows.push(RatioRow {
            t,
            observed,
            asymptote: asym,
            ratio,
            gap: (ratio - 1.0).abs(),
        });
    }
    let gap_strictly_decreasing = rows.windows(2).all(|w| w[1].gap < w[0].gap);
    Ok(RatioCurve {
        quantity: quantity.to_string(),
        rows,
        gap_strictly_decreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::lattice::WalkKernel;
    use crate::model::{required_mean, CbrwModel, OffspringLaw};
    use crate::rng::CounterRng;
    use crate::volterra::{compute_J, SolverConfig};

    fn nn_model(d: usize, alpha: f64) -> CbrwModel {
        let kernel = WalkKernel::nearest_neighbor(d);
        let mean = required_mean(&kernel, alpha).unwrap();
        CbrwModel::new(kernel, alpha, OffspringLaw::binary(mean).unwrap()).unwrap()
    }

    fn synthetic_j(value: f64) -> JEstimate {
        JEstimate {
            value,
            error_bar: 1e-3,
            tail: 0.01,
            exponent: 2.0,
        }
    }

    const GAMMA_1: f64 = 0.3989422804014327;

    #[test]
    fn selects_exactly_one_row_for_every_dimension_and_catalyst() {
        for d in 1..=7usize {
            let model = nn_model(d, 0.5);
            let x = Point::zero(d);
            for y in [Point::zero(d), Point::unit(d, 0)] {
                let j = (d == 2).then(|| synthetic_j(0.1));
                let mean = AsymptoticFormula::select(&model, Quantity::Mean, &x, &y, None)
                    .unwrap_or_else(|e| panic!("mean selection failed for d = {}: {}", d, e));
                let surv =
                    AsymptoticFormula::select(&model, Quantity::Survival, &x, &y, j.as_ref())
                        .unwrap_or_else(|e| {
                            panic!("survival selection failed for d = {}: {}", d, e)
                        });
                let mv = mean.eval(50.0).unwrap().value;
                let sv = surv.eval(50.0).unwrap().value;
                assert!(
                    mv.is_finite() && mv > 0.0,
                    "mean row d = {} y = {:?} gave {}",
                    d,
                    y.coords(),
                    mv
                );
                assert!(
                    sv.is_finite() && sv > 0.0,
                    "survival row d = {} y = {:?} gave {}",
                    d,
                    y.coords(),
                    sv
                );
                if d >= 5 {
                    // constant mean limit and 1/t survival: t-scaling is exact
                    let m2 = mean.eval(1e6).unwrap().value;
                    assert_eq!(mv, m2, "d ≥ 5 mean must be t-independent");
                    let s2 = surv.eval(1e6).unwrap().value;
                    assert!(
                        (sv * 50.0 / (s2 * 1e6) - 1.0).abs() < 1e-12,
                        "d ≥ 5 survival row times t must be constant"
                    );
                    // the only d-dependence above d = 5 is through m_d and the
                    // Green values; the row shape is shared
                    assert!(surv.constants.m_d.unwrap() > 1.0);
                }
            }
        }
        // the limit-class map is total and matches the displayed case split
        assert_eq!(limit_class_for(1, false), LimitClass::Exponential);
        assert_eq!(limit_class_for(2, true), LimitClass::PgfAtOrigin);
        assert_eq!(limit_class_for(2, false), LimitClass::PgfOffOrigin);
        assert_eq!(limit_class_for(3, true), LimitClass::Exponential);
        assert_eq!(limit_class_for(4, false), LimitClass::Mixture);
        assert_eq!(limit_class_for(4, true), LimitClass::Mixture);
        for d in 5..=7 {
            assert_eq!(limit_class_for(d, false), LimitClass::Exponential);
            assert_eq!(limit_class_for(d, true), LimitClass::Exponential);
        }
    }

    #[test]
    fn mean_rows_match_frozen_values() {
        // d = 1 reference at t = 100: γ₁/10, and ×a/(1−α) = ×2 at the origin
        let m1 = nn_model(1, 0.5);
        let x = Point::zero(1);
        let y = Point::new(&[1]);
        let off = mean_asymptote(&m1, &x, &y, 100.0).unwrap();
        assert!((off - GAMMA_1 / 10.0).abs() < 1e-15, "got {}", off);
        assert!((off - 0.03989423).abs() < 5e-9);
        let at = mean_asymptote(&m1, &x, &Point::zero(1), 100.0).unwrap();
        assert!((at - 2.0 * off).abs() < 1e-15);

        // d = 2: γ₂ = 1/π
        let m2 = nn_model(2, 0.5);
        let off2 = mean_asymptote(&m2, &Point::zero(2), &Point::unit(2, 0), 100.0).unwrap();
        assert!((off2 - 1.0 / (100.0 * std::f64::consts::PI)).abs() < 1e-15);

        // d = 3 against the frozen Green values and γ₃
        let m3 = nn_model(3, 0.5);
        let v3 = mean_asymptote(&m3, &Point::zero(3), &Point::unit(3, 0), 100.0).unwrap();
        let expect3 = 1.516386059354 * 0.516386059109
            / (2.0 * std::f64::consts::PI * 0.329922610186159 * 10.0);
        assert!(
            (v3 / expect3 - 1.0).abs() < 1e-6,
            "d = 3 mean {} vs frozen {}",
            v3,
            expect3
        );

        // d = 5 with α near 1: m_d → 1, so the origin limit → G₀(x,0)/G₀(0,0)
        let m5 = nn_model(5, 0.999);
        let f5 = AsymptoticFormula::select(
            &m5,
            Quantity::Mean,
            &Point::unit(5, 0),
            &Point::zero(5),
            None,
        )
        .unwrap();
        let md = f5.constants.m_d.unwrap();
        assert!((md - 1.0).abs() < 0.01, "m_d = {} should be near 1", md);
        let limit = f5.eval(100.0).unwrap().value;
        let gx0 = f5.constants.g0_x_to_origin.unwrap();
        let g00 = f5.constants.g0_origin.unwrap();
        assert!((limit - gx0 / (g00 * md)).abs() < 1e-15);
        assert!((limit * g00 / gx0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn survival_rows_match_frozen_values() {
        // d = 1: q ~ C/(√t ln t) with C = 2(1−α)/(σ²γ₁a) = 2/γ₁ for the
        // reference (α = 1/2, σ² = 1/2, a = 1)
        let m1 = nn_model(1, 0.5);
        let x = Point::zero(1);
        let y = Point::new(&[1]);
        let v = survival_asymptote(&m1, &x, &y, 400.0, None).unwrap();
        assert_eq!(v.half_width, 0.0);
        let constant = v.value * 400f64.sqrt() * 400f64.ln();
        assert!((constant - 2.0 / GAMMA_1).abs() < 1e-12);
        assert!((constant - 5.013257).abs() < 1e-6);
        assert!((v.value - 0.0418).abs() < 1e-4, "got {}", v.value);
        // the d = 1 row is y- and x-independent as displayed
        let v_origin = survival_asymptote(&m1, &x, &Point::zero(1), 400.0, None).unwrap();
        let v_far = survival_asymptote(&m1, &Point::new(&[7]), &y, 400.0, None).unwrap();
        assert_eq!(v.value, v_origin.value);
        assert_eq!(v.value, v_far.value);

        // d = 2 with a synthetic J: exact interval arithmetic
        let m2 = nn_model(2, 0.5);
        let j = synthetic_j(0.1);
        let v2 = survival_asymptote(&m2, &Point::zero(2), &Point::unit(2, 0), 100.0, Some(&j))
            .unwrap();
        let base = 1.0 / std::f64::consts::PI / 100.0;
        assert!((v2.value - base * (1.0 - 2.0 * 0.1)).abs() < 1e-15);
        assert!((v2.half_width - base * 2.0 * 1e-3).abs() < 1e-18);
        let v2o = survival_asymptote(&m2, &Point::zero(2), &Point::zero(2), 100.0, Some(&j))
            .unwrap();
        assert!((v2o.value - base * 2.0 * (1.0 - 0.1)).abs() < 1e-15);
        // guards: missing J, and a J violating its strict bound
        assert!(matches!(
            survival_asymptote(&m2, &Point::zero(2), &Point::unit(2, 0), 100.0, None),
            Err(CbrwError::InvalidParameter(_))
        ));
        let bad = synthetic_j(0.6); // bound is (1−α)/a = 1/2
        assert!(matches!(
            survival_asymptote(&m2, &Point::zero(2), &Point::unit(2, 0), 100.0, Some(&bad)),
            Err(CbrwError::Instability(_))
        ));

        // d = 3 against the frozen constants (σ² = α·f″(1) = (1+h₃)/2)
        let m3 = nn_model(3, 0.5);
        let v3 = survival_asymptote(&m3, &Point::zero(3), &Point::unit(3, 0), 100.0, None)
            .unwrap()
            .value;
        let g00 = 1.516386059354f64;
        let sigma_sq = (1.0 + 0.659462670361) / 2.0;
        let expect3 = 4.0 * std::f64::consts::PI * 0.329922610186159 * 0.5 * g00
            / (sigma_sq * g00.powi(3) * 10.0 * 100f64.ln());
        assert!(
            (v3 / expect3 - 1.0).abs() < 1e-6,
            "d = 3 survival {} vs frozen {}",
            v3,
            expect3
        );
    }

    #[test]
    fn origin_row_is_off_origin_row_times_return_factor() {
        // substituting y = 0 into the general row and multiplying by the
        // return factor a/(1−α) reproduces the displayed origin row — the
        // bundle makes the factor checkable symbolically in every dimension
        for d in 1..=5usize {
            let model = nn_model(d, 0.5);
            let x = Point::zero(d);
            let y = Point::unit(d, 0);
            let t = 50.0;
            let at = mean_asymptote(&model, &x, &Point::zero(d), t).unwrap();
            let formula_off =
                AsymptoticFormula::select(&model, Quantity::Mean, &x, &y, None).unwrap();
            let off = formula_off.eval(t).unwrap().value;
            let c = &formula_off.constants;
            let mut factor = c.total_rate / (1.0 - c.alpha);
            if d >= 3 {
                // the general row carries G₀(0,y); at y = 0 it becomes G₀(0,0)
                factor *= c.g0_origin.unwrap() / c.g0_origin_to_y.unwrap();
            }
            assert!(
                (at / (off * factor) - 1.0).abs() < 1e-12,
                "d = {}: origin row {} vs off-origin {} × factor {}",
                d,
                at,
                off,
                factor
            );
        }
        // d = 4 ln-t guard sits between the generic t > 1 gate and e
        let m4 = nn_model(4, 0.5);
        let x4 = Point::zero(4);
        let y4 = Point::unit(4, 0);
        assert!(mean_asymptote(&m4, &x4, &y4, 2.0).is_err());
        assert!(mean_asymptote(&m4, &x4, &y4, 3.0).is_ok());
        // survival rows above d = 2 do not depend on the catalyst site
        let s_off = survival_asymptote(&m4, &x4, &y4, 50.0, None).unwrap();
        let s_at = survival_asymptote(&m4, &x4, &Point::zero(4), 50.0, None).unwrap();
        assert_eq!(s_off.value, s_at.value);
    }

    #[test]
    fn limit_transform_classes_and_identities() {
        let model = nn_model(1, 0.5);
        let half = limit_transform(&model, LimitClass::Exponential, TransformArg::Lambda(1.0), None)
            .unwrap();
        assert!((half.value - 0.5).abs() < 1e-15);
        let one = limit_transform(&model, LimitClass::Mixture, TransformArg::Lambda(0.0), None)
            .unwrap();
        assert!((one.value - 1.0).abs() < 1e-15);

        // the mixture row is (1/3)·1 + (2/3)·r/(r+λ) with r = 2/3
        let mut rng = CounterRng::new(0xA57, 0);
        for _ in 0..10 {
            let lambda = 5.0 * rng.uniform();
            let got = limit_transform(&model, LimitClass::Mixture, TransformArg::Lambda(lambda), None)
                .unwrap()
                .value;
            let r = 2.0 / 3.0;
            let mixture = 1.0 / 3.0 + 2.0 / 3.0 * (r / (r + lambda));
            assert!(
                (got - mixture).abs() < 1e-12,
                "λ = {}: {} vs {}",
                lambda,
                got,
                mixture
            );
        }

        // complete monotonicity on a λ grid: (−1)^n Δⁿf ≥ 0
        for class in [LimitClass::Exponential, LimitClass::Mixture] {
            let h = 0.4;
            let f: Vec<f64> = (0..8)
                .map(|i| {
                    limit_transform(&model, class, TransformArg::Lambda(h * i as f64), None)
                        .unwrap()
                        .value
                })
                .collect();
            let mut diffs = f;
            for order in 1..=5 {
                diffs = diffs.windows(2).map(|w| w[1] - w[0]).collect();
                let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
                assert!(
                    diffs.iter().all(|&dv| sign * dv >= -1e-12),
                    "{:?} violates complete monotonicity at order {}",
                    class,
                    order
                );
            }
        }

        // class mismatches and domain guards
        assert!(matches!(
            limit_transform(&model, LimitClass::Exponential, TransformArg::S(0.5), None),
            Err(CbrwError::InvalidParameter(_))
        ));
        assert!(matches!(
            limit_transform(&model, LimitClass::PgfOffOrigin, TransformArg::Lambda(1.0), None),
            Err(CbrwError::InvalidParameter(_))
        ));
        assert!(limit_transform(&model, LimitClass::Exponential, TransformArg::Lambda(-0.1), None)
            .is_err());
        assert!(limit_transform(&model, LimitClass::Mixture, TransformArg::Lambda(f64::NAN), None)
            .is_err());
        let j = synthetic_j(0.1);
        let pair = JPair {
            at_zero: j,
            at_arg: j,
        };
        assert!(matches!(
            limit_transform(&model, LimitClass::PgfOffOrigin, TransformArg::S(1.5), Some(&pair)),
            Err(CbrwError::InvalidParameter(_))
        ));
        assert!(matches!(
            limit_transform(&model, LimitClass::PgfOffOrigin, TransformArg::S(0.5), None),
            Err(CbrwError::InvalidParameter(_))
        ));
    }

    #[test]
    fn planar_transforms_with_real_j_are_pgfs() {
        let model = nn_model(2, 0.5);
        let grid = TimeGrid::with_horizon(0.1, 300.0);
        let cfg = SolverConfig::default();
        let s_grid = [0.0, 0.25, 0.5, 0.75, 1.0];
        for (y, class) in [
            (Point::unit(2, 0), LimitClass::PgfOffOrigin),
            (Point::zero(2), LimitClass::PgfAtOrigin),
        ] {
            let j0 = compute_J(&model, &y, 0.0, grid, &cfg).unwrap();
            // the strict bound holds with margin beyond the error bar
            let bound = if y.is_zero() {
                1.0
            } else {
                (1.0 - model.alpha()) / model.kernel().total_rate()
            };
            assert!(j0.value + j0.error_bar < bound);

            let mut values = Vec::new();
            let mut bars = Vec::new();
            for &s in &s_grid {
                let js = compute_J(&model, &y, s, grid, &cfg).unwrap();
                let v = limit_transform(
                    &model,
                    class,
                    TransformArg::S(s),
                    Some(&JPair {
                        at_zero: j0,
                        at_arg: js,
                    }),
                )
                .unwrap();
                values.push(v.value);
                bars.push(v.half_width);
            }
            let slack = 4.0 * bars.iter().cloned().fold(0.0, f64::max) + 1e-9;
            // a conditional pgf given survival: fixes 0 at s = 0 and 1 at
            // s = 1, increasing and convex in between
            assert!(values[0].abs() < 1e-12, "pgf(0) = {}", values[0]);
            assert!(
                (values[4] - 1.0).abs() < slack,
                "pgf(1) = {} (slack {})",
                values[4],
                slack
            );
            let first: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
            assert!(
                first.iter().all(|&dv| dv > -slack),
                "{:?} not increasing: {:?}",
                class,
                values
            );
            let second: Vec<f64> = first.windows(2).map(|w| w[1] - w[0]).collect();
            assert!(
                second.iter().all(|&dv| dv > -2.0 * slack),
                "{:?} not convex: {:?}",
                class,
                values
            );
        }
    }

    #[test]
    fn ratio_curve_flags_monotone_approach() {
        // a synthetic route with a 1/(8t) correction, as the heat-kernel
        // comparison produces
        let ts: [f64; 4] = [125.0, 250.0, 500.0, 1000.0];
        let series: Vec<(f64, f64)> = ts
            .iter()
            .map(|&t| (t, GAMMA_1 / t.sqrt() * (1.0 + 1.0 / (8.0 * t))))
            .collect();
        let mut asym = |t: f64| Ok(GAMMA_1 / t.sqrt());
        let curve = ratio_curve("mean", RouteValues::Series(&series), &mut asym, &ts).unwrap();
        assert_eq!(curve.rows.len(), 4);
        assert!(curve.gap_strictly_decreasing);
        assert!(curve.rows[3].gap <= 1e-3);
        for (row, &t) in curve.rows.iter().zip(&ts) {
            assert!((row.ratio - (1.0 + 1.0 / (8.0 * t))).abs() < 1e-12);
        }
        assert_eq!(curve.quantity, "mean");

        // dense route: same curve sampled through interpolation
        let grid = TimeGrid::with_horizon(0.5, 1000.0);
        let values: Vec<f64> = grid
            .times()
            .map(|t| {
                if t == 0.0 {
                    0.0
                } else {
                    GAMMA_1 / t.sqrt() * (1.0 + 1.0 / (8.0 * t))
                }
            })
            .collect();
        let gf = GridFunction::new(grid, values);
        let curve2 = ratio_curve("mean", RouteValues::Dense(&gf), &mut asym, &ts).unwrap();
        assert!(curve2.gap_strictly_decreasing);
        for (a, b) in curve.rows.iter().zip(&curve2.rows) {
            assert!((a.ratio - b.ratio).abs() < 1e-6);
        }
    }

    #[test]
    fn ratio_curve_and_formula_guards() {
        let mut asym = |t: f64| Ok(1.0 / t);
        let series = [(10.0, 0.1), (20.0, 0.05)];
        // non-geometric, too-short, non-positive ladders
        assert!(ratio_curve("q", RouteValues::Series(&series), &mut asym, &[10.0]).is_err());
        assert!(
            ratio_curve("q", RouteValues::Series(&series), &mut asym, &[10.0, 20.0, 50.0])
                .is_err()
        );
        assert!(
            ratio_curve("q", RouteValues::Series(&series), &mut asym, &[-1.0, 2.0]).is_err()
        );
        // missing series sample
        assert!(matches!(
            ratio_curve("q", RouteValues::Series(&series), &mut asym, &[10.0, 20.0, 40.0]),
            Err(CbrwError::GridMismatch(_))
        ));
        // vanishing asymptote cannot anchor a ratio
        let mut zero_asym = |_: f64| Ok(0.0);
        assert!(
            ratio_curve("q", RouteValues::Series(&series), &mut zero_asym, &[10.0, 20.0])
                .is_err()
        );

        let m1 = nn_model(1, 0.5);
        let x = Point::zero(1);
        let y = Point::new(&[1]);
        // t-domain gates: mean needs t > 1, survival needs t > e
        assert!(mean_asymptote(&m1, &x, &y, 1.0).is_err());
        assert!(mean_asymptote(&m1, &x, &y, 1.5).is_ok());
        assert!(survival_asymptote(&m1, &x, &y, 2.5, None).is_err());
        assert!(survival_asymptote(&m1, &x, &y, 2.8, None).is_ok());
        // family mix-ups
        let f = AsymptoticFormula::select(&m1, Quantity::LimitTransform, &x, &y, None).unwrap();
        assert!(f.eval(10.0).is_err());
        assert!(f.transform(TransformArg::Lambda(1.0), None).is_ok());
        let g = AsymptoticFormula::select(&m1, Quantity::Mean, &x, &y, None).unwrap();
        assert!(g.transform(TransformArg::Lambda(1.0), None).is_err());
        // dimension mismatch and the degenerate-law guard
        assert!(AsymptoticFormula::select(&m1, Quantity::Mean, &Point::zero(2), &y, None)
            .is_err());
        let degenerate = CbrwModel::new(
            WalkKernel::nearest_neighbor(1),
            0.5,
            OffspringLaw::point_mass_one(),
        )
        .unwrap();
        assert!(mean_asymptote(&degenerate, &x, &y, 10.0).is_ok());
        assert!(survival_asymptote(&degenerate, &x, &y, 10.0, None).is_err());
    }
}
