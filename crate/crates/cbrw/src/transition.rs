//! Transition probabilities, Green's functions and walk-level constants via
//! Fourier inversion on the dual torus.
//!
//! The symbol of the walk is φ(θ) = Σ_v a(v)cos(v,θ) − a, θ ∈ [−π,π]^d, and
//!
//!   p(t;x,y) = (2π)^{−d} ∫ e^{tφ(θ)} cos((y−x),θ) dθ.
//!
//! The integrand is analytic and periodic, so the uniform trapezoid rule is
//! spectrally accurate; by Poisson summation an N-point rule returns exactly
//! Σ_k p(t; 0, z + kN), i.e. the only error is the walk mass beyond distance
//! N/2, which decays like a Gaussian tail once N ≳ 8√(at).  Every evaluation
//! self-validates by doubling N until two successive values agree to 1e-10.
//!
//! For axis-aligned kernels (all jumps along coordinate axes) e^{tφ}
//! factorizes over axes and every quantity reduces to products of
//! one-dimensional quadratures; this is the fast path used by all bundled
//! models.  Non-axis-aligned kernels fall back to a full tensor rule.

use crate::error::{CbrwError, Result};
use crate::lattice::{Point, WalkKernel};

/// Absolute agreement demanded between successive grid doublings.
const REFINE_TOL: f64 = 1e-10;

/// Hard cap on tensor-product quadrature nodes (memory/time guard).
const MAX_TENSOR_NODES: u64 = 1 << 27;

/// Points-per-axis for the torus quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpectralGrid {
    n: usize,
}

impl SpectralGrid {
    pub fn new(n: usize) -> SpectralGrid {
        assert!(n >= 8, "spectral grid needs at least 8 points per axis");
        SpectralGrid { n }
    }

    /// Default resolution for horizon `t`: the integrand e^{tφ} concentrates
    /// on a scale 1/√(at), and aliasing needs N well beyond the diffusive
    /// range, so take max(64, ⌈8√(at)⌉ + 4·(support radius)).
    pub fn for_time(kernel: &WalkKernel, t: f64) -> SpectralGrid {
        let a = kernel.total_rate();
        let n = 64usize
            .max((8.0 * (a * t.max(0.0)).sqrt()).ceil() as usize + 4 * kernel.max_abs_support() as usize);
        SpectralGrid::new(n.next_power_of_two())
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }
}

/// φ(θ) = Σ_v a(v)cos(v,θ) − a.  Total function: φ(0) = 0 and φ ≤ 0.
pub fn symbol(kernel: &WalkKernel, theta: &[f64]) -> f64 {
    assert_eq!(theta.len(), kernel.dim());
    let mut s = -kernel.total_rate();
    for &(v, r) in kernel.support() {
        let dot: f64 = v
            .coords()
            .iter()
            .zip(theta)
            .map(|(&vi, &ti)| vi as f64 * ti)
            .sum();
        s += r * dot.cos();
    }
    s
}

/// One-dimensional torus quadrature for a single axis of an axis-aligned
/// kernel: returns (p, p·weighted-by-φ) at displacement `m`, i.e.
/// (1/N) Σ_k e^{tφ_ax(θ_k)} cos(mθ_k) and (1/N) Σ_k φ_ax e^{tφ_ax} cos(mθ_k),
/// where φ_ax(θ) = Σ_j r_j (cos(jθ) − 1).
fn axis_pair(rates: &[(i32, f64)], t: f64, m: i32, n: usize) -> (f64, f64) {
    let mut sp = 0.0;
    let mut spp = 0.0;
    for k in 0..n {
        let th = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let mut phi = 0.0;
        for &(j, r) in rates {
            phi += r * ((j as f64 * th).cos() - 1.0);
        }
        let e = (t * phi).exp() * (m as f64 * th).cos();
        sp += e;
        spp += phi * e;
    }
    (sp / n as f64, spp / n as f64)
}

/// Doubles the axis rule until the probability stabilizes; returns the
/// accepted N.
fn axis_resolution(rates: &[(i32, f64)], t: f64, m: i32, start: usize) -> Result<usize> {
    let mut n = start.max(8);
    let mut prev = axis_pair(rates, t, m, n).0;
    loop {
        let next_n = n * 2;
        if next_n > (1 << 22) {
            return Err(CbrwError::GridTooCoarse {
                t,
                disagreement: f64::NAN,
            });
        }
        let cur = axis_pair(rates, t, m, next_n).0;
        if (cur - prev).abs() <= REFINE_TOL {
            return Ok(next_n);
        }
        prev = cur;
        n = next_n;
    }
}

/// Full tensor-product quadrature.  `weight(φ)` post-multiplies the cosine
/// term: identity for p, φ for ∂_t p, 1/(λ−φ) for the resolvent.
fn tensor_quadrature<F: Fn(f64) -> f64>(
    kernel: &WalkKernel,
    dz: &Point,
    n: usize,
    weight: F,
) -> Result<f64> {
    let d = kernel.dim();
    let total_nodes = (n as u64).checked_pow(d as u32).unwrap_or(u64::MAX);
    if total_nodes > MAX_TENSOR_NODES {
        return Err(CbrwError::GridTooCoarse {
            t: f64::NAN,
            disagreement: f64::NAN,
        });
    }
    let thetas: Vec<f64> = (0..n)
        .map(|k| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * k as f64 / n as f64)
        .collect();
    let mut idx = vec![0usize; d];
    let mut theta = vec![thetas[0]; d];
    let mut sum = 0.0;
    loop {
        let phi = symbol(kernel, &theta);
        let dot: f64 = dz
            .coords()
            .iter()
            .zip(&theta)
            .map(|(&zi, &ti)| zi as f64 * ti)
            .sum();
        sum += weight(phi) * dot.cos();
        // odometer increment
        let mut axis = 0;
        loop {
            if axis == d {
                return Ok(sum / (n as f64).powi(d as i32));
            }
            idx[axis] += 1;
            if idx[axis] < n {
                theta[axis] = thetas[idx[axis]];
                break;
            }
            idx[axis] = 0;
            theta[axis] = thetas[0];
            axis += 1;
        }
    }
}

/// Tensor quadrature with N-doubling self-check.
fn tensor_refined<F: Fn(f64) -> f64 + Copy>(
    kernel: &WalkKernel,
    dz: &Point,
    start: usize,
    t_label: f64,
    weight: F,
) -> Result<f64> {
    let mut n = start.max(8);
    let mut prev = tensor_quadrature(kernel, dz, n, weight)?;
    loop {
        n *= 2;
        let cur = match tensor_quadrature(kernel, dz, n, weight) {
            Ok(v) => v,
            Err(CbrwError::GridTooCoarse { .. }) => {
                return Err(CbrwError::GridTooCoarse {
                    t: t_label,
                    disagreement: f64::NAN,
                })
            }
            Err(e) => return Err(e),
        };
        if (cur - prev).abs() <= REFINE_TOL {
            return Ok(cur);
        }
        prev = cur;
    }
}

/// p(t;x,y) ∈ [0,1]; symmetric and translation invariant.
pub fn transition_probability(
    kernel: &WalkKernel,
    t: f64,
    x: &Point,
    y: &Point,
    grid: &SpectralGrid,
) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(CbrwError::InvalidParameter(format!("time {} must be ≥ 0", t)));
    }
    let dz = y.sub(x);
    if t == 0.0 {
        return Ok(if dz.is_zero() { 1.0 } else { 0.0 });
    }
    let v = if kernel.is_axis_aligned() {
        let mut prod = 1.0;
        for axis in 0..kernel.dim() {
            let rates = kernel.axis_rates(axis);
            let n = axis_resolution(&rates, t, dz.get(axis), grid.points_per_axis())?;
            prod *= axis_pair(&rates, t, dz.get(axis), n).0;
        }
        prod
    } else {
        tensor_refined(kernel, &dz, grid.points_per_axis(), t, |phi| (t * phi).exp())?
    };
    Ok(v.clamp(0.0, 1.0))
}

/// ∂_t p(t;x,y).  At t = 0 this is the exact generator entry
/// a(y−x) − a·δ_x(y); for t > 0 it is the quadrature with weight φ.
pub fn derivative_transition(
    kernel: &WalkKernel,
    t: f64,
    x: &Point,
    y: &Point,
    grid: &SpectralGrid,
) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(CbrwError::InvalidParameter(format!("time {} must be ≥ 0", t)));
    }
    let dz = y.sub(x);
    if t == 0.0 {
        return Ok(if dz.is_zero() {
            -kernel.total_rate()
        } else {
            kernel.rate(&dz)
        });
    }
    if kernel.is_axis_aligned() {
        let d = kernel.dim();
        let mut ps = vec![0.0; d];
        let mut pps = vec![0.0; d];
        for axis in 0..d {
            let rates = kernel.axis_rates(axis);
            let n = axis_resolution(&rates, t, dz.get(axis), grid.points_per_axis())?;
            let (p, pp) = axis_pair(&rates, t, dz.get(axis), n);
            ps[axis] = p;
            pps[axis] = pp;
        }
        // product rule: (Π p_i)' = Σ_j p'_j Π_{i≠j} p_i
        let mut total = 0.0;
        for j in 0..d {
            let mut term = pps[j];
            for (i, p) in ps.iter().enumerate() {
                if i != j {
                    term *= p;
                }
            }
            total += term;
        }
        Ok(total)
    } else {
        tensor_refined(kernel, &dz, grid.points_per_axis(), t, |phi| phi * (t * phi).exp())
    }
}

/// p and ∂_t p along a whole (sorted, nonnegative) time array, sharing the
/// exponentials.  This is what the Volterra solvers consume; the resolution
/// is fixed by the largest time and validated there by doubling.
pub fn transition_tables(
    kernel: &WalkKernel,
    dz: &Point,
    times: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    assert!(!times.is_empty());
    assert!(
        times.windows(2).all(|w| w[0] <= w[1]) && times[0] >= 0.0,
        "times must be sorted and nonnegative"
    );
    let t_max = *times.last().unwrap();
    let nt = times.len();
    let exact0 = |p: &mut Vec<f64>, pp: &mut Vec<f64>| {
        for (i, &t) in times.iter().enumerate() {
            if t == 0.0 {
                p[i] = if dz.is_zero() { 1.0 } else { 0.0 };
                pp[i] = if dz.is_zero() {
                    -kernel.total_rate()
                } else {
                    kernel.rate(dz)
                };
            }
        }
    };
    if kernel.is_axis_aligned() {
        let d = kernel.dim();
        let mut axis_p = vec![vec![0.0; nt]; d];
        let mut axis_pp = vec![vec![0.0; nt]; d];
        for axis in 0..d {
            let rates = kernel.axis_rates(axis);
            let hint = SpectralGrid::for_time(kernel, t_max).points_per_axis();
            let n = if t_max > 0.0 {
                axis_resolution(&rates, t_max, dz.get(axis), hint)?
            } else {
                hint
            };
            let thetas: Vec<(f64, f64, f64)> = (0..n)
                .map(|k| {
                    let th = -std::f64::consts::PI
                        + 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    let mut phi = 0.0;
                    for &(j, r) in &rates {
                        phi += r * ((j as f64 * th).cos() - 1.0);
                    }
                    (phi, (dz.get(axis) as f64 * th).cos(), th)
                })
                .collect();
            let (pa, ppa) = (&mut axis_p[axis], &mut axis_pp[axis]);
            for &(phi, c, _) in &thetas {
                for (i, &t) in times.iter().enumerate() {
                    let e = (t * phi).exp() * c;
                    pa[i] += e;
                    ppa[i] += phi * e;
                }
            }
            for i in 0..nt {
                pa[i] /= n as f64;
                ppa[i] /= n as f64;
            }
        }
        let mut p = vec![0.0; nt];
        let mut pp = vec![0.0; nt];
        for i in 0..nt {
            let mut prod = 1.0;
            for pa in axis_p.iter() {
                prod *= pa[i];
            }
            p[i] = prod.clamp(0.0, 1.0);
            let mut dsum = 0.0;
            for j in 0..d {
                let mut term = axis_pp[j][i];
                for (k, pa) in axis_p.iter().enumerate() {
                    if k != j {
                        term *= pa[i];
                    }
                }
                dsum += term;
            }
            pp[i] = dsum;
        }
        exact0(&mut p, &mut pp);
        Ok((p, pp))
    } else {
        let grid = SpectralGrid::for_time(kernel, t_max);
        let mut p = vec![0.0; nt];
        let mut pp = vec![0.0; nt];
        for (i, &t) in times.iter().enumerate() {
            if t > 0.0 {
                p[i] = transition_probability(kernel, t, &Point::zero(kernel.dim()), dz, &grid)?;
                pp[i] = derivative_transition(kernel, t, &Point::zero(kernel.dim()), dz, &grid)?;
            }
        }
        exact0(&mut p, &mut pp);
        Ok((p, pp))
    }
}

/// −φ''(0): the (positive semidefinite) second-moment matrix Σ_v a(v)·v vᵀ.
fn neg_hessian(kernel: &WalkKernel) -> Vec<Vec<f64>> {
    let d = kernel.dim();
    let mut h = vec![vec![0.0; d]; d];
    for &(v, r) in kernel.support() {
        for i in 0..d {
            for j in 0..d {
                h[i][j] += r * v.get(i) as f64 * v.get(j) as f64;
            }
        }
    }
    h
}

/// LU decomposition with partial pivoting on a small dense matrix; returns
/// the determinant and optionally solves A x = b in place.
fn lu_det_solve(mut a: Vec<Vec<f64>>, mut b: Option<&mut Vec<f64>>) -> f64 {
    let n = a.len();
    let mut det = 1.0;
    for col in 0..n {
        let (piv, piv_val) = (col..n)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if piv_val == 0.0 {
            return 0.0;
        }
        if piv != col {
            a.swap(piv, col);
            det = -det;
            if let Some(b) = b.as_deref_mut() {
                b.swap(piv, col);
            }
        }
        det *= a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            if let Some(b) = b.as_deref_mut() {
                b[r] -= f * b[col];
            }
        }
    }
    if let Some(b) = b {
        for col in (0..n).rev() {
            b[col] /= a[col][col];
            let v = b[col];
            for r in 0..col {
                b[r] -= a[r][col] * v;
            }
        }
    }
    det
}

/// γ_d = ((2π)^d |det φ''(0)|)^{−1/2}, the constant of p(t;0,0) ~ γ_d t^{−d/2}.
pub fn gamma_d(kernel: &WalkKernel) -> Result<f64> {
    let det = lu_det_solve(neg_hessian(kernel), None);
    if det <= 0.0 {
        return Err(CbrwError::SingularHessian);
    }
    let d = kernel.dim() as i32;
    Ok(((2.0 * std::f64::consts::PI).powi(d) * det).powf(-0.5))
}

/// γ̃_d(z): Gaussian moment closed form γ_d·(z,(−φ''(0))^{−1}z)/2; symmetric
/// under z ↔ −z and zero at z = 0.
pub fn gamma_tilde(kernel: &WalkKernel, z: &Point) -> Result<f64> {
    assert_eq!(z.dim(), kernel.dim());
    let h = neg_hessian(kernel);
    let mut b: Vec<f64> = z.coords().iter().map(|&c| c as f64).collect();
    let det = lu_det_solve(h, Some(&mut b));
    if det <= 0.0 {
        return Err(CbrwError::SingularHessian);
    }
    let quad: f64 = z.coords().iter().zip(&b).map(|(&zi, &xi)| zi as f64 * xi).sum();
    Ok(gamma_d(kernel)? * quad / 2.0)
}

/// ∫_0^T f dt by the trapezoid rule with one Richardson halving (O(h⁴)).
/// `f` is sampled on a uniform grid of step h covering [0, T].
fn refined_trapezoid(values_h: &[f64], h: f64, upto: usize) -> f64 {
    // coarse sum over every other node, fine sum over all nodes up to `upto`
    // (an even index).
    debug_assert!(upto % 2 == 0 && upto < values_h.len());
    let mut fine = 0.5 * (values_h[0] + values_h[upto]);
    for v in &values_h[1..upto] {
        fine += v;
    }
    fine *= h;
    let mut coarse = 0.5 * (values_h[0] + values_h[upto]);
    let mut i = 2;
    while i < upto {
        coarse += values_h[i];
        i += 2;
    }
    coarse *= 2.0 * h;
    (4.0 * fine - coarse) / 3.0
}

/// Split point and step for the divergence-free tail extrapolation.
const TAIL_SPLIT: f64 = 150.0;
const TAIL_STEP: f64 = 0.02;

/// Removes the power-law tail of ∫_0^∞ w(t)p(t;0,z) dt where the integrand
/// behaves like γ_d·t^{−tail_exp} for large t with tail_exp > 1.  `values`
/// samples w·p on the uniform grid of step TAIL_STEP up to 4·TAIL_SPLIT.
/// E(T) := ∫_0^T + γ_d T^{1−e}/(e−1) then differs from the true integral by
/// C·T^{−e} + D·T^{−e−1} + …, and a three-point fit at T, 2T, 4T removes
/// both correction terms.
fn tail_extrapolated_integral(values: &[f64], gamma: f64, tail_exp: f64) -> Result<f64> {
    let n4 = values.len() - 1;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for k in 0..3 {
        let tk = TAIL_SPLIT * (1u32 << k) as f64;
        let upto = (n4 >> (2 - k)).min(n4);
        let quad = refined_trapezoid(values, TAIL_STEP, upto);
        b.push(quad + gamma * tk.powf(1.0 - tail_exp) / (tail_exp - 1.0));
        a.push(vec![1.0, tk.powf(-tail_exp), tk.powf(-tail_exp - 1.0)]);
    }
    let det = lu_det_solve(a, Some(&mut b));
    if det == 0.0 {
        return Err(CbrwError::NonConvergence("power-law tail extrapolation".into()));
    }
    Ok(b[0])
}

/// Transition table on the uniform grid [0, 4·TAIL_SPLIT] used by the
/// tail-extrapolated integrals.
fn tail_table(kernel: &WalkKernel, dz: &Point) -> Result<(Vec<f64>, Vec<f64>)> {
    let n4 = (4.0 * TAIL_SPLIT / TAIL_STEP) as usize;
    let times: Vec<f64> = (0..=n4).map(|i| i as f64 * TAIL_STEP).collect();
    let (p, _) = transition_tables(kernel, dz, &times)?;
    Ok((times, p))
}

/// G_0(0,z) = ∫_0^∞ p(t;0,z) dt for d ≥ 3 (integrand tail γ_d t^{−d/2}).
fn green_zero(kernel: &WalkKernel, dz: &Point) -> Result<f64> {
    let d = kernel.dim();
    assert!(d >= 3);
    let (_, p) = tail_table(kernel, dz)?;
    tail_extrapolated_integral(&p, gamma_d(kernel)?, d as f64 / 2.0)
}

/// ∫_0^∞ e^{−λt} p(t;0,z) dt by time-domain quadrature with step halving
/// until the Richardson-extrapolated value stabilizes.
fn green_laplace(kernel: &WalkKernel, lambda: f64, dz: &Point) -> Result<f64> {
    let horizon = 40.0 / lambda.min(1.0);
    let mut h = 0.02f64.min(horizon / 64.0);
    let mut prev: Option<f64> = None;
    for _ in 0..8 {
        let n = ((horizon / h).ceil() as usize + 1) & !1usize; // even
        let times: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
        let (p, _) = transition_tables(kernel, dz, &times)?;
        let vals: Vec<f64> = times
            .iter()
            .zip(&p)
            .map(|(&t, &pv)| (-lambda * t).exp() * pv)
            .collect();
        let quad = refined_trapezoid(&vals, h, n);
        if let Some(pr) = prev {
            if (quad - pr).abs() <= 1e-10 {
                return Ok(quad);
            }
        }
        prev = Some(quad);
        h /= 2.0;
    }
    Err(CbrwError::NonConvergence(
        "Laplace-transform quadrature for the Green function".into(),
    ))
}

/// G_λ(x,y) = ∫_0^∞ e^{−λt} p(t;x,y) dt.
///
/// λ > 0: resolvent quadrature (d ≤ 2 or non-axis-aligned d = 3) or
/// time-domain Laplace quadrature (axis-aligned d ≥ 3).  λ = 0 requires
/// d ≥ 3 and uses the tail-extrapolated time split.
pub fn green(kernel: &WalkKernel, lambda: f64, x: &Point, y: &Point, grid: &SpectralGrid) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(CbrwError::InvalidParameter(format!("lambda {} must be ≥ 0", lambda)));
    }
    let dz = y.sub(x);
    if lambda == 0.0 {
        if kernel.dim() <= 2 {
            return Err(CbrwError::GreenDivergent { d: kernel.dim() });
        }
        return green_zero(kernel, &dz);
    }
    if kernel.dim() >= 3 && kernel.is_axis_aligned() {
        green_laplace(kernel, lambda, &dz)
    } else {
        tensor_refined(kernel, &dz, grid.points_per_axis(), 0.0, |phi| {
            1.0 / (lambda - phi)
        })
    }
}

/// Memo for G_0 values keyed by displacement (G_0 is even in dz, so keys are
/// sign-canonicalized).  Worth having because each fresh value costs a full
/// long-horizon transition table.
#[derive(Debug)]
pub struct GreenCache {
    kernel: WalkKernel,
    map: std::collections::HashMap<Point, f64>,
}

impl GreenCache {
    pub fn new(kernel: &WalkKernel) -> GreenCache {
        GreenCache {
            kernel: kernel.clone(),
            map: std::collections::HashMap::new(),
        }
    }

    pub fn kernel(&self) -> &WalkKernel {
        &self.kernel
    }

    /// G_0(0, dz) (d ≥ 3 only).
    pub fn g0(&mut self, dz: &Point) -> Result<f64> {
        if self.kernel.dim() <= 2 {
            return Err(CbrwError::GreenDivergent {
                d: self.kernel.dim(),
            });
        }
        let key = (*dz).min(dz.neg());
        if let Some(&v) = self.map.get(&key) {
            return Ok(v);
        }
        let v = green_zero(&self.kernel, &key)?;
        self.map.insert(key, v);
        Ok(v)
    }
}

/// h_d = (a·G_0(0,0))^{−1} for d ≥ 3; zero for the recurrent dimensions.
pub fn escape_probability(kernel: &WalkKernel) -> Result<f64> {
    if kernel.dim() <= 2 {
        return Ok(0.0);
    }
    let zero = Point::zero(kernel.dim());
    Ok(1.0 / (kernel.total_rate() * green_zero(kernel, &zero)?))
}

/// m_d = 1 − (1−α)/a + 2(1−α) a^{−1} G_0^{−2}(0,0) ∫_0^∞ t·p(t;0,0) dt,
/// finite for d ≥ 5.  The time integral is split at T with a γ_d-asymptote
/// tail and the same three-point extrapolation as `green_zero`.
pub fn m_d_constant(kernel: &WalkKernel, alpha: f64) -> Result<f64> {
    let d = kernel.dim();
    if d < 5 {
        return Err(CbrwError::DimensionUnsupported {
            what: "m_d",
            requirement: "d ≥ 5",
            d,
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CbrwError::InvalidParameter(format!("alpha {} not in (0,1)", alpha)));
    }
    let zero = Point::zero(d);
    let gamma = gamma_d(kernel)?;
    let half = d as f64 / 2.0;
    // one table serves both the Green function and the t-weighted integral
    let (times, p) = tail_table(kernel, &zero)?;
    let g0 = tail_extrapolated_integral(&p, gamma, half)?;
    let weighted: Vec<f64> = times.iter().zip(&p).map(|(&t, &pv)| t * pv).collect();
    let integral = tail_extrapolated_integral(&weighted, gamma, half - 1.0)?;
    let a_rate = kernel.total_rate();
    Ok(1.0 - (1.0 - alpha) / a_rate + 2.0 * (1.0 - alpha) / a_rate / (g0 * g0) * integral)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Modified Bessel function I_k(t) summed as a power series (all terms
    /// positive, no cancellation); oracle for the d=1 nearest-neighbor walk:
    /// p(t;0,k) = e^{−t} I_k(t).
    fn bessel_i(k: u32, t: f64) -> f64 {
        let half = t / 2.0;
        let mut term = half.powi(k as i32);
        for j in 1..=k {
            term /= j as f64;
        }
        let mut sum = term;
        let mut m = 1.0;
        loop {
            term *= half * half / (m * (m + k as f64));
            sum += term;
            if term < sum * 1e-17 {
                return sum;
            }
            m += 1.0;
        }
    }

    fn nn(d: usize) -> WalkKernel {
        WalkKernel::nearest_neighbor(d)
    }

    #[test]
    fn symbol_values() {
        let k1 = nn(1);
        assert_eq!(symbol(&k1, &[0.0]), 0.0);
        assert!((symbol(&k1, &[std::f64::consts::PI]) + 2.0).abs() < 1e-14);
        let k2 = nn(2);
        assert!((symbol(&k2, &[std::f64::consts::PI, std::f64::consts::PI]) + 2.0).abs() < 1e-14);
        // φ ≤ 0 on a sample of the torus
        for i in 0..40 {
            let th = -std::f64::consts::PI + i as f64 * 0.157;
            assert!(symbol(&k1, &[th]) <= 1e-15);
        }
    }

    #[test]
    fn matches_bessel_oracle() {
        let k = nn(1);
        let zero = Point::zero(1);
        for &t in &[0.1, 1.0, 5.0, 10.0, 50.0] {
            for m in 0..3u32 {
                let grid = SpectralGrid::for_time(&k, t);
                let y = Point::new(&[m as i32]);
                let p = transition_probability(&k, t, &zero, &y, &grid).unwrap();
                let oracle = (-t).exp() * bessel_i(m, t);
                assert!(
                    (p - oracle).abs() <= 1e-8 * oracle,
                    "p({};0,{}) = {} vs {}",
                    t,
                    m,
                    p,
                    oracle
                );
            }
        }
        // frozen spot value: e^{−1}I_0(1)
        let p = transition_probability(&k, 1.0, &zero, &zero, &SpectralGrid::new(64)).unwrap();
        assert!((p - 0.4657596075936404).abs() < 1e-10);
    }

    #[test]
    fn conservation_and_symmetry() {
        let k = nn(2);
        let grid = SpectralGrid::for_time(&k, 2.0);
        let mut total = 0.0;
        let r = 16i32;
        for i in -r..=r {
            for j in -r..=r {
                total += transition_probability(&k, 2.0, &Point::zero(2), &Point::new(&[i, j]), &grid)
                    .unwrap();
            }
        }
        assert!((total - 1.0).abs() < 1e-10, "mass over box = {}", total);

        let x = Point::new(&[1, -2]);
        let y = Point::new(&[0, 3]);
        let pxy = transition_probability(&k, 1.5, &x, &y, &grid).unwrap();
        let pyx = transition_probability(&k, 1.5, &y, &x, &grid).unwrap();
        let p0 = transition_probability(&k, 1.5, &Point::zero(2), &y.sub(&x), &grid).unwrap();
        assert!((pxy - pyx).abs() < 1e-14);
        assert!((pxy - p0).abs() < 1e-14);
    }

    #[test]
    fn chapman_kolmogorov() {
        let k = nn(1);
        let grid = SpectralGrid::new(128);
        let (s, t) = (0.7, 1.1);
        let y = Point::new(&[2]);
        let mut conv = 0.0;
        for z in -40..=40 {
            let pz = transition_probability(&k, s, &Point::zero(1), &Point::new(&[z]), &grid).unwrap();
            let pzy = transition_probability(&k, t, &Point::new(&[z]), &y, &grid).unwrap();
            conv += pz * pzy;
        }
        let direct = transition_probability(&k, s + t, &Point::zero(1), &y, &grid).unwrap();
        assert!((conv - direct).abs() < 1e-8);
    }

    #[test]
    fn derivative_at_zero_is_generator_and_negative_on_diagonal() {
        let k = nn(1);
        let grid = SpectralGrid::new(64);
        let zero = Point::zero(1);
        let one = Point::new(&[1]);
        assert_eq!(derivative_transition(&k, 0.0, &zero, &zero, &grid).unwrap(), -1.0);
        assert_eq!(derivative_transition(&k, 0.0, &zero, &one, &grid).unwrap(), 0.5);
        // frozen oracle: d/dt e^{−t}I_0(t) at t=1 equals e^{−1}(I_1(1) − I_0(1))
        let dp = derivative_transition(&k, 1.0, &zero, &zero, &grid).unwrap();
        assert!((dp - (-0.257849192243932)).abs() < 1e-10, "p'(1;0,0) = {}", dp);
        for i in 1..=20 {
            let t = 0.5 * i as f64;
            assert!(derivative_transition(&k, t, &zero, &zero, &grid).unwrap() <= 0.0);
        }
    }

    #[test]
    fn derivative_integrates_back_to_p() {
        let k = nn(2);
        let grid = SpectralGrid::new(64);
        let y = Point::new(&[1, 0]);
        let t_end = 2.0;
        let n = 400;
        let h = t_end / n as f64;
        let times: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
        let (_, pp) = transition_tables(&k, &y, &times).unwrap();
        let integral = refined_trapezoid(&pp, h, n);
        let direct = transition_probability(&k, t_end, &Point::zero(2), &y, &grid).unwrap();
        assert!((integral - direct).abs() < 1e-6, "{} vs {}", integral, direct);
    }

    #[test]
    fn tables_agree_with_pointwise() {
        let k = nn(3);
        let grid = SpectralGrid::for_time(&k, 10.0);
        let dz = Point::new(&[1, 1, 0]);
        let times = [0.0, 0.3, 1.7, 4.4, 10.0];
        let (p, pp) = transition_tables(&k, &dz, &times).unwrap();
        for (i, &t) in times.iter().enumerate() {
            let pd = transition_probability(&k, t, &Point::zero(3), &dz, &grid).unwrap();
            let ppd = derivative_transition(&k, t, &Point::zero(3), &dz, &grid).unwrap();
            assert!((p[i] - pd).abs() < 1e-12);
            assert!((pp[i] - ppd).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_constants() {
        assert!((gamma_d(&nn(1)).unwrap() - 0.3989422804014327).abs() < 1e-14);
        assert!((gamma_d(&nn(2)).unwrap() - 1.0 / std::f64::consts::PI).abs() < 1e-14);
        // (d/(2π))^{d/2} for the simple kernel
        assert!((gamma_d(&nn(3)).unwrap() - 0.329922610186159).abs() < 1e-12);
        assert!((gamma_d(&nn(4)).unwrap() - 0.405284734569351).abs() < 1e-12);
        assert!((gamma_d(&nn(5)).unwrap() - 0.564904897541995).abs() < 1e-12);
    }

    #[test]
    fn walk_asymptotics_approach_gamma() {
        // t^{d/2} p(t;0,0) → γ_d with |ratio − 1| shrinking as t doubles.
        for d in 1..=3usize {
            let k = nn(d);
            let g = gamma_d(&k).unwrap();
            let mut prev_dev = f64::INFINITY;
            for &t in &[125.0, 250.0, 500.0] {
                let grid = SpectralGrid::for_time(&k, t);
                let p = transition_probability(&k, t, &Point::zero(d), &Point::zero(d), &grid).unwrap();
                let ratio = t.powf(d as f64 / 2.0) * p / g;
                let dev = (ratio - 1.0).abs();
                assert!(dev < prev_dev, "d={} t={} dev={} prev={}", d, t, dev, prev_dev);
                prev_dev = dev;
            }
            assert!(prev_dev < 0.01);
        }
    }

    #[test]
    fn gamma_tilde_closed_form_and_symmetry() {
        let k = nn(1);
        assert_eq!(gamma_tilde(&k, &Point::zero(1)).unwrap(), 0.0);
        let v = gamma_tilde(&k, &Point::new(&[1])).unwrap();
        assert!((v - 0.19947114020071635).abs() < 1e-14); // 1/(2√(2π))
        let k3 = nn(3);
        let z = Point::new(&[2, -1, 3]);
        let a = gamma_tilde(&k3, &z).unwrap();
        let b = gamma_tilde(&k3, &z.neg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gamma_tilde_matches_difference_asymptotics() {
        // t^{1+d/2}(p(t;0,0) − p(t;0,z)) → γ̃_d(z)
        let k = nn(1);
        let z = Point::new(&[1]);
        let gt = gamma_tilde(&k, &z).unwrap();
        let mut prev_dev = f64::INFINITY;
        for &t in &[125.0, 250.0, 500.0] {
            let grid = SpectralGrid::for_time(&k, t);
            let p0 = transition_probability(&k, t, &Point::zero(1), &Point::zero(1), &grid).unwrap();
            let pz = transition_probability(&k, t, &Point::zero(1), &z, &grid).unwrap();
            let ratio = t.powf(1.5) * (p0 - pz) / gt;
            let dev = (ratio - 1.0).abs();
            assert!(dev < prev_dev);
            prev_dev = dev;
        }
        assert!(prev_dev < 0.02);
    }

    #[test]
    fn green_lambda_positive() {
        // Laplace transform of e^{−t}I_0(t) is (λ² + 2λ)^{−1/2}
        let k = nn(1);
        let grid = SpectralGrid::new(128);
        let zero = Point::zero(1);
        let g = green(&k, 1.0, &zero, &zero, &grid).unwrap();
        assert!((g - 1.0 / 3.0f64.sqrt()).abs() < 1e-9, "G_1(0,0) = {}", g);
        // symmetry
        let x = Point::new(&[2]);
        let gxy = green(&k, 0.5, &zero, &x, &grid).unwrap();
        let gyx = green(&k, 0.5, &x, &zero, &grid).unwrap();
        assert!((gxy - gyx).abs() < 1e-12);
    }

    #[test]
    fn green_lambda_positive_d3_time_domain() {
        // the axis-aligned d ≥ 3 path (time-domain) must agree with the
        // tensor resolvent on the same kernel
        let k = nn(3);
        let zero = Point::zero(3);
        let y = Point::new(&[1, 0, 0]);
        let td = green(&k, 0.8, &zero, &y, &SpectralGrid::new(32)).unwrap();
        let tensor = tensor_refined(&k, &y, 32, 0.0, |phi| 1.0 / (0.8 - phi)).unwrap();
        assert!((td - tensor).abs() < 1e-8, "{} vs {}", td, tensor);
    }

    #[test]
    fn green_zero_watson_oracle() {
        // d=3 nearest-neighbor lattice Green function values (Watson-type
        // integrals, frozen from an independent quadrature)
        let k = nn(3);
        let grid = SpectralGrid::new(64);
        let zero = Point::zero(3);
        let cases = [
            (Point::new(&[0, 0, 0]), 1.516386059354),
            (Point::new(&[1, 0, 0]), 0.516386059109),
            (Point::new(&[1, 1, 0]), 0.331148602035),
            (Point::new(&[2, 0, 0]), 0.257335887652),
        ];
        for (z, oracle) in cases {
            let g = green(&k, 0.0, &zero, &z, &grid).unwrap();
            assert!((g - oracle).abs() < 5e-7, "G_0(0,{}) = {} vs {}", z, g, oracle);
        }
        // deeper dimensions
        assert!((green(&nn(4), 0.0, &Point::zero(4), &Point::zero(4), &grid).unwrap()
            - 1.239467121855)
            .abs()
            < 5e-7);
        assert!((green(&nn(5), 0.0, &Point::zero(5), &Point::zero(5), &grid).unwrap()
            - 1.156308124840)
            .abs()
            < 5e-7);
    }

    #[test]
    fn green_zero_divergent_in_low_dimension() {
        let grid = SpectralGrid::new(64);
        for d in 1..=2usize {
            let e = green(&nn(d), 0.0, &Point::zero(d), &Point::zero(d), &grid);
            assert!(matches!(e, Err(CbrwError::GreenDivergent { .. })));
        }
    }

    #[test]
    fn escape_probabilities() {
        assert_eq!(escape_probability(&nn(1)).unwrap(), 0.0);
        assert_eq!(escape_probability(&nn(2)).unwrap(), 0.0);
        let h3 = escape_probability(&nn(3)).unwrap();
        assert!((h3 - 0.659462670361).abs() < 5e-7, "h_3 = {}", h3);
    }

    #[test]
    fn m_d_value_and_affinity() {
        let k = nn(5);
        let m = m_d_constant(&k, 0.5).unwrap();
        assert!((m - 1.9471737352).abs() < 1e-5, "m_5(0.5) = {}", m);
        assert!(matches!(
            m_d_constant(&nn(4), 0.5),
            Err(CbrwError::DimensionUnsupported { .. })
        ));
        // affine in (1−α): m(α) = 1 + (1−α)·c
        let m25 = m_d_constant(&k, 0.25).unwrap();
        let m75 = m_d_constant(&k, 0.75).unwrap();
        let c1 = (m25 - 1.0) / 0.75;
        let c2 = (m75 - 1.0) / 0.25;
        let c3 = (m - 1.0) / 0.5;
        assert!((c1 - c2).abs() < 1e-9 && (c2 - c3).abs() < 1e-9);
        // α → 1 limit is 1
        assert!((m_d_constant(&k, 0.999999).unwrap() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn non_axis_aligned_tensor_path() {
        // diagonal+axis kernel in d=2: checks the tensor fallback against
        // conservation and symmetry
        let k = WalkKernel::new(
            2,
            &[
                (Point::new(&[1, 1]), 0.2),
                (Point::new(&[-1, -1]), 0.2),
                (Point::new(&[1, 0]), 0.3),
                (Point::new(&[-1, 0]), 0.3),
            ],
        )
        .unwrap();
        assert!(!k.is_axis_aligned());
        let grid = SpectralGrid::new(64);
        let mut total = 0.0;
        for i in -14..=14 {
            for j in -14..=14 {
                total +=
                    transition_probability(&k, 1.0, &Point::zero(2), &Point::new(&[i, j]), &grid)
                        .unwrap();
            }
        }
        assert!((total - 1.0).abs() < 1e-9);
    }
}
