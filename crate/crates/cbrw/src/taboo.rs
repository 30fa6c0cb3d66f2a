//! Hitting and taboo probabilities of the plain walk.
//!
//! H_{x,z}(t) is the chance the walk started at x has visited z by time t;
//! the taboo variant H_{x,z,r}(t) additionally requires the path to avoid r
//! strictly before reaching z.  Two clock conventions appear in the renewal
//! algebra: `FromStart` counts from time zero (including the sojourn at x,
//! with the convention H_{x,x} ≡ 1), while `FromDeparture` starts the clock
//! at the moment the walk leaves x — so the first jump happens at time 0 and
//! a jump straight onto the target puts an atom of size a(z−x)/a at zero.
//!
//! Monte Carlo estimates land in a [`TabooCdf`] built from exact integer
//! counts: hit times binned on a grid, paths that reach the taboo site (a
//! definitive failure), and paths still unresolved at the horizon (censored —
//! either a late hit or, in transient dimensions, a true escape).
//!
//! Everything here is about the walk alone; the catalyst plays no role.

use crate::error::{CbrwError, Result};
use crate::grid::{stieltjes_convolve, GridFunction, TimeGrid};
use crate::lattice::{Point, WalkKernel};
use crate::model::exp_cdf;
use crate::rng::{AliasTable, CounterRng};
use crate::transition::GreenCache;

/// Where the hitting-time clock starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HittingClock {
    /// From time zero, sojourn at the starting site included.
    FromStart,
    /// From the walk's first departure; the first jump occurs at time 0.
    FromDeparture,
}

/// Monte Carlo c.d.f. of a (possibly taboo-restricted) hitting time.
#[derive(Debug, Clone)]
pub struct TabooCdf {
    pub grid: TimeGrid,
    /// P(hit by t_i), one value per grid node.
    pub cdf: Vec<f64>,
    /// Binomial standard error of each c.d.f. value.
    pub stderr: Vec<f64>,
    /// Fraction of paths that reached the taboo site first (never hit).
    pub mass_infinity: f64,
    /// Fraction unresolved at the horizon.
    pub censored_mass: f64,
    pub replicas: u64,
}

impl TabooCdf {
    fn from_counts(grid: TimeGrid, counts: &[u64], taboo_first: u64, censored: u64, replicas: u64) -> TabooCdf {
        assert_eq!(counts.len(), grid.len());
        let total_hits: u64 = counts.iter().sum();
        assert_eq!(total_hits + taboo_first + censored, replicas);
        let r = replicas as f64;
        let mut cdf = Vec::with_capacity(counts.len());
        let mut stderr = Vec::with_capacity(counts.len());
        let mut acc = 0u64;
        for &c in counts {
            acc += c;
            let p = acc as f64 / r;
            cdf.push(p);
            stderr.push((p * (1.0 - p) / r).sqrt());
        }
        TabooCdf {
            grid,
            cdf,
            stderr,
            mass_infinity: taboo_first as f64 / r,
            censored_mass: censored as f64 / r,
            replicas,
        }
    }

    /// Builds a c.d.f. from exact (noise-free) values — used to feed the
    /// renewal solver with smooth synthetic inputs when measuring its
    /// quadrature order.
    pub fn from_exact(grid: TimeGrid, cdf: Vec<f64>, mass_infinity: f64) -> TabooCdf {
        assert_eq!(cdf.len(), grid.len());
        let n = cdf.len();
        TabooCdf {
            grid,
            cdf,
            stderr: vec![0.0; n],
            mass_infinity,
            censored_mass: 0.0,
            replicas: 0,
        }
    }

    /// Total hit mass seen inside the horizon.
    pub fn hit_mass(&self) -> f64 {
        *self.cdf.last().unwrap()
    }

    pub fn to_grid_function(&self) -> GridFunction {
        GridFunction::new(self.grid, self.cdf.clone())
    }
}

enum WalkOutcome {
    Hit(f64),
    TabooFirst,
    Censored,
}

fn run_replica(
    jumps: &[Point],
    alias: &AliasTable,
    total_rate: f64,
    x: &Point,
    z: &Point,
    taboo: Option<&Point>,
    clock: HittingClock,
    horizon: f64,
    rng: &mut CounterRng,
) -> WalkOutcome {
    let mut pos = *x;
    if clock == HittingClock::FromStart && pos == *z {
        return WalkOutcome::Hit(0.0);
    }
    let mut t = 0.0;
    let mut first = clock == HittingClock::FromDeparture;
    loop {
        if !first {
            t += rng.exp(total_rate);
            if t > horizon {
                return WalkOutcome::Censored;
            }
        }
        first = false;
        pos = pos.add(&jumps[alias.sample(rng)]);
        if pos == *z {
            return WalkOutcome::Hit(t);
        }
        if taboo == Some(&pos) {
            return WalkOutcome::TabooFirst;
        }
    }
}

fn simulate(
    kernel: &WalkKernel,
    x: &Point,
    z: &Point,
    taboo: Option<&Point>,
    clock: HittingClock,
    grid: TimeGrid,
    replicas: u64,
    seed: u64,
) -> Result<TabooCdf> {
    assert_eq!(x.dim(), kernel.dim());
    assert_eq!(z.dim(), kernel.dim());
    if let Some(r) = taboo {
        assert_eq!(r.dim(), kernel.dim());
        if r == z {
            return Err(CbrwError::InvalidParameter(
                "taboo site coincides with the target".into(),
            ));
        }
    }
    if replicas == 0 {
        return Err(CbrwError::InvalidParameter("need at least one replica".into()));
    }
    let jumps: Vec<Point> = kernel.support().iter().map(|&(v, _)| v).collect();
    let weights: Vec<f64> = kernel.support().iter().map(|&(_, r)| r).collect();
    let alias = AliasTable::new(&weights);
    let horizon = grid.horizon();
    let step = grid.step();
    let mut counts = vec![0u64; grid.len()];
    let mut taboo_first = 0u64;
    let mut censored = 0u64;
    for rep in 0..replicas {
        let mut rng = CounterRng::new(seed, rep);
        match run_replica(&jumps, &alias, kernel.total_rate(), x, z, taboo, clock, horizon, &mut rng)
        {
            WalkOutcome::Hit(tau) => {
                // τ ∈ (t_{i−1}, t_i] lands in bin i; τ = 0 in bin 0
                let idx = ((tau - 1e-12) / step).ceil().max(0.0) as usize;
                counts[idx.min(grid.len() - 1)] += 1;
            }
            WalkOutcome::TabooFirst => taboo_first += 1,
            WalkOutcome::Censored => censored += 1,
        }
    }
    Ok(TabooCdf::from_counts(grid, &counts, taboo_first, censored, replicas))
}

/// Plain hitting-time c.d.f. H_{x,z} by Monte Carlo.
pub fn simulate_hitting(
    kernel: &WalkKernel,
    x: &Point,
    z: &Point,
    clock: HittingClock,
    grid: TimeGrid,
    replicas: u64,
    seed: u64,
) -> Result<TabooCdf> {
    simulate(kernel, x, z, None, clock, grid, replicas, seed)
}

/// Taboo hitting-time c.d.f. H_{x,z,taboo} by Monte Carlo.
pub fn simulate_taboo(
    kernel: &WalkKernel,
    x: &Point,
    z: &Point,
    taboo: &Point,
    clock: HittingClock,
    grid: TimeGrid,
    replicas: u64,
    seed: u64,
) -> Result<TabooCdf> {
    simulate(kernel, x, z, Some(taboo), clock, grid, replicas, seed)
}

/// P_w(reach z before r) for the walk started at w, with u(z) = 1, u(r) = 0.
///
/// d = 1 nearest-neighbor: the ruin formula — linear between r and z, 0 or 1
/// outside.  d ≥ 3: the two-point Green identity
///
///   u(w) = (F(w,z) − F(w,r)·F(r,z)) / (1 − F(z,r)·F(r,z)),
///
/// F(u,v) = G_0(u,v)/G_0(v,v).  Remaining recurrent cases fall back to a
/// bracketed relaxation on growing boxes and report failure honestly when the
/// bracket cannot close (its width shrinks only like 1/ln L for d = 2).
fn hit_before_taboo(cache: &mut GreenCache, w: &Point, z: &Point, r: &Point) -> Result<f64> {
    if w == z {
        return Ok(1.0);
    }
    if w == r {
        return Ok(0.0);
    }
    let kernel = cache.kernel().clone();
    let d = kernel.dim();
    if d == 1 && kernel.max_abs_support() == 1 {
        let (wc, zc, rc) = (w.get(0) as f64, z.get(0) as f64, r.get(0) as f64);
        let lo = zc.min(rc);
        let hi = zc.max(rc);
        if wc > lo && wc < hi {
            return Ok((wc - rc) / (zc - rc));
        }
        // outside the interval the walk must cross the nearer endpoint first
        let nearer_is_z = (wc - zc).abs() < (wc - rc).abs();
        return Ok(if nearer_is_z { 1.0 } else { 0.0 });
    }
    if d >= 3 {
        let g00 = cache.g0(&Point::zero(d))?;
        let f = |cache: &mut GreenCache, from: &Point, to: &Point| -> Result<f64> {
            Ok(cache.g0(&to.sub(from))? / g00)
        };
        let fwz = f(cache, w, z)?;
        let fwr = f(cache, w, r)?;
        let fzr = f(cache, z, r)?;
        let frz = f(cache, r, z)?; // = fzr by symmetry; kept for clarity
        return Ok((fwz - fwr * frz) / (1.0 - fzr * frz));
    }
    boxed_two_point(&kernel, w, z, r)
}

/// Bracketed SOR relaxation for P_w(reach z before r) on growing boxes: the
/// boundary condition is unknown, so solve once with absorbing-0 and once
/// with absorbing-1 edges; the truth lies between.  Succeeds only if the
/// bracket closes below 1e-6 before the box budget runs out.
fn boxed_two_point(kernel: &WalkKernel, w: &Point, z: &Point, r: &Point) -> Result<f64> {
    let d = kernel.dim();
    let spread = w.max_abs().max(z.max_abs()).max(r.max_abs()) as i64;
    let mut l: i64 = 32.max(4 * spread);
    let max_l: i64 = if d == 1 { 1 << 14 } else { 256 };
    while l <= max_l {
        let lo = solve_box(kernel, w, z, r, l, 0.0);
        let hi = solve_box(kernel, w, z, r, l, 1.0);
        if hi - lo < 1e-6 {
            return Ok((lo + hi) / 2.0);
        }
        l *= 2;
    }
    Err(CbrwError::NonConvergence(format!(
        "two-point hitting bracket on a box of side {} in d = {} (recurrent dimension: \
         the boundary influence decays too slowly)",
        max_l, d
    )))
}

/// SOR sweep for the harmonic two-point problem on [−L,L]^d with the given
/// boundary value at the box edge.
fn solve_box(kernel: &WalkKernel, w: &Point, z: &Point, r: &Point, l: i64, edge: f64) -> f64 {
    let d = kernel.dim();
    let side = (2 * l + 1) as usize;
    let total = side.pow(d as u32);
    let to_index = |p: &Point| -> Option<usize> {
        let mut idx = 0usize;
        for i in 0..d {
            let c = p.get(i) as i64;
            if c.abs() > l {
                return None;
            }
            idx = idx * side + (c + l) as usize;
        }
        Some(idx)
    };
    let mut u = vec![edge; total];
    let zi = to_index(z).expect("target inside box");
    let ri = to_index(r).expect("taboo inside box");
    u[zi] = 1.0;
    u[ri] = 0.0;
    let probs: Vec<(Point, f64)> = kernel
        .support()
        .iter()
        .map(|&(v, rate)| (v, rate / kernel.total_rate()))
        .collect();
    let omega = 2.0 / (1.0 + std::f64::consts::PI / (l as f64 + 1.0));
    // enumerate interior points once
    let mut coords = vec![-l; d];
    let mut interior: Vec<(usize, Point)> = Vec::new();
    'outer: loop {
        let c32: Vec<i32> = coords.iter().map(|&c| c as i32).collect();
        let p = Point::new(&c32);
        if coords.iter().all(|&c| c.abs() < l) {
            let idx = to_index(&p).unwrap();
            if idx != zi && idx != ri {
                interior.push((idx, p));
            }
        }
        for i in 0..d {
            coords[i] += 1;
            if coords[i] <= l {
                continue 'outer;
            }
            coords[i] = -l;
        }
        break;
    }
    for _ in 0..200_000 {
        let mut worst: f64 = 0.0;
        for &(idx, p) in &interior {
            let mut avg = 0.0;
            for (v, q) in &probs {
                let nb = p.add(v);
                avg += q * match to_index(&nb) {
                    Some(j) => u[j],
                    None => edge,
                };
            }
            let new = (1.0 - omega) * u[idx] + omega * avg;
            worst = worst.max((new - u[idx]).abs());
            u[idx] = new;
        }
        if worst < 1e-12 {
            break;
        }
    }
    u[to_index(w).expect("start inside box")]
}

/// Exact t → ∞ limit of the (taboo) hitting probability, honoring the clock
/// conventions of the simulators.  `taboo = None` gives the plain limit:
/// 1 in recurrent dimensions, Green-function ratios for d ≥ 3.
pub fn taboo_limit_exact(
    kernel: &WalkKernel,
    x: &Point,
    z: &Point,
    taboo: Option<&Point>,
    clock: HittingClock,
) -> Result<f64> {
    let mut cache = GreenCache::new(kernel);
    taboo_limit_with_cache(&mut cache, x, z, taboo, clock)
}

/// Same as [`taboo_limit_exact`] but reusing a Green-value cache across calls.
pub fn taboo_limit_with_cache(
    cache: &mut GreenCache,
    x: &Point,
    z: &Point,
    taboo: Option<&Point>,
    clock: HittingClock,
) -> Result<f64> {
    let kernel = cache.kernel().clone();
    let d = kernel.dim();
    if let Some(r) = taboo {
        if r == z {
            return Err(CbrwError::InvalidParameter(
                "taboo site coincides with the target".into(),
            ));
        }
    }
    let value_at = |cache: &mut GreenCache, w: &Point| -> Result<f64> {
        match taboo {
            Some(r) => hit_before_taboo(cache, w, z, r),
            None => {
                if d <= 2 {
                    Ok(1.0)
                } else if w == z {
                    Ok(1.0)
                } else {
                    Ok(cache.g0(&z.sub(w))? / cache.g0(&Point::zero(d))?)
                }
            }
        }
    };
    let first_step = |cache: &mut GreenCache| -> Result<f64> {
        let mut acc = 0.0;
        for &(v, rate) in kernel.support() {
            acc += rate / kernel.total_rate() * value_at(cache, &x.add(&v))?;
        }
        Ok(acc)
    };
    match clock {
        HittingClock::FromDeparture => first_step(cache),
        HittingClock::FromStart => {
            if x == z {
                Ok(1.0)
            } else if taboo == Some(x) {
                // sitting on the taboo site is allowed; re-entering it is not
                first_step(cache)
            } else {
                value_at(cache, x)
            }
        }
    }
}

/// One checkpoint of a convolution-identity verification.
#[derive(Debug, Clone)]
pub struct IdentityCheck {
    pub checkpoint: f64,
    /// Directly simulated composite c.d.f. value.
    pub lhs: f64,
    /// Value assembled from Stieltjes convolutions of the taboo pieces.
    pub rhs: f64,
    /// Conservative combined Monte Carlo error (sum of component errors).
    pub stderr: f64,
}

impl IdentityCheck {
    pub fn discrepancy(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

/// Verification report for the two first-passage decompositions.
#[derive(Debug, Clone)]
pub struct IdentityReport {
    /// Return-time split by visits to y:
    /// H⁻_{0,0} = H⁻_{0,0,y} + H⁻_{0,y,0} ∗ Σ_k (G₂∗H⁻_{y,y,0})^{∗k} ∗ (G₂∗H⁻_{y,0,y}).
    pub return_split: Vec<IdentityCheck>,
    /// First-passage split by returns to 0:
    /// H⁻_{0,y} = Σ_k (G₂∗H⁻_{0,0,y})^{∗k} ∗ H⁻_{0,y,0}.
    pub passage_split: Vec<IdentityCheck>,
    /// Terms of the k-sums actually accumulated.
    pub terms_used: usize,
    /// Size of the first dropped term at the largest checkpoint — a bound
    /// on the truncation error of both k-sums.
    pub remainder: f64,
}

impl IdentityReport {
    /// Worst |lhs − rhs| across both identities.
    pub fn worst_discrepancy(&self) -> f64 {
        self.return_split
            .iter()
            .chain(&self.passage_split)
            .map(IdentityCheck::discrepancy)
            .fold(0.0, f64::max)
    }
}

/// Simulates every taboo piece appearing in the excursion decompositions of
/// the walk around {0, y} and checks the two convolution identities at the
/// given checkpoints.  All pieces are departure-clocked; the Exp(a) sojourn
/// c.d.f. G₂ restores the waiting time where a piece starts with a stay.
pub fn verify_convolution_identities(
    kernel: &WalkKernel,
    y: &Point,
    grid: TimeGrid,
    replicas: u64,
    checkpoints: &[f64],
    seed: u64,
) -> Result<IdentityReport> {
    assert!(!y.is_zero(), "catalyst offset must differ from the origin");
    for &cp in checkpoints {
        assert!(
            cp <= grid.horizon() / 4.0 + 1e-9,
            "checkpoint {} too close to the horizon {} (convolution tails would be truncated)",
            cp,
            grid.horizon()
        );
    }
    let zero = Point::zero(kernel.dim());
    let dep = HittingClock::FromDeparture;
    let mut tag = 0u64;
    let mut sim = |x: &Point, z: &Point, taboo: Option<&Point>| -> Result<TabooCdf> {
        tag += 1;
        simulate(kernel, x, z, taboo, dep, grid, replicas, seed ^ (tag << 56))
    };
    let h00 = sim(&zero, &zero, None)?; // H⁻_{0,0}
    let h0y = sim(&zero, y, None)?; // H⁻_{0,y}
    let h00_y = sim(&zero, &zero, Some(y))?; // H⁻_{0,0,y}
    let h0y_0 = sim(&zero, y, Some(&zero))?; // H⁻_{0,y,0}
    let hyy_0 = sim(y, y, Some(&zero))?; // H⁻_{y,y,0}
    let hy0_y = sim(y, &zero, Some(y))?; // H⁻_{y,0,y}

    let g2 = exp_cdf(kernel.total_rate(), grid);
    let with_sojourn = |piece: &TabooCdf| -> Result<GridFunction> {
        stieltjes_convolve(&g2, &piece.to_grid_function())
    };
    let s_hyy0 = with_sojourn(&hyy_0)?;
    let s_hy0y = with_sojourn(&hy0_y)?;
    let s_h00y = with_sojourn(&h00_y)?;

    let max_cp = checkpoints.iter().cloned().fold(0.0, f64::max);
    // k-sum for the return split: term_k = H⁻_{0,y,0} ∗ (G₂H⁻_{y,y,0})^k ∗ G₂H⁻_{y,0,y}
    let mut return_sum = GridFunction::zero(grid);
    let mut passage_sum = GridFunction::zero(grid);
    let mut ret_term = stieltjes_convolve(&h0y_0.to_grid_function(), &s_hy0y)?;
    let mut pas_term = h0y_0.to_grid_function();
    let mut terms_used = 0;
    let mut remainder = f64::INFINITY;
    for _ in 0..200 {
        terms_used += 1;
        for i in 0..grid.len() {
            return_sum.values[i] += ret_term.values[i];
            passage_sum.values[i] += pas_term.values[i];
        }
        ret_term = stieltjes_convolve(&ret_term, &s_hyy0)?;
        pas_term = stieltjes_convolve(&pas_term, &s_h00y)?;
        remainder = ret_term.value_at(max_cp).max(pas_term.value_at(max_cp));
        if remainder < 1e-7 {
            break;
        }
    }

    let component_se = |t: f64| -> f64 {
        [&h00, &h0y, &h00_y, &h0y_0, &hyy_0, &hy0_y]
            .iter()
            .map(|c| {
                let i = ((t / grid.step()).round() as usize).min(grid.len() - 1);
                c.stderr[i]
            })
            .sum()
    };
    let mut return_split = Vec::new();
    let mut passage_split = Vec::new();
    for &cp in checkpoints {
        let se = component_se(cp);
        return_split.push(IdentityCheck {
            checkpoint: cp,
            lhs: h00.to_grid_function().value_at(cp),
            rhs: h00_y.to_grid_function().value_at(cp) + return_sum.value_at(cp),
            stderr: se,
        });
        passage_split.push(IdentityCheck {
            checkpoint: cp,
            lhs: h0y.to_grid_function().value_at(cp),
            rhs: passage_sum.value_at(cp),
            stderr: se,
        });
    }
    Ok(IdentityReport {
        return_split,
        passage_split,
        terms_used,
        remainder,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nn(d: usize) -> WalkKernel {
        WalkKernel::nearest_neighbor(d)
    }

    fn e1(d: usize) -> Point {
        Point::unit(d, 0)
    }

    #[test]
    fn ruin_limits_d1() {
        let k = nn(1);
        let zero = Point::zero(1);
        let y = e1(1);
        // departure-clocked: first jump decides everything
        let v = taboo_limit_exact(&k, &zero, &y, Some(&zero), HittingClock::FromDeparture).unwrap();
        assert!((v - 0.5).abs() < 1e-14);
        let v = taboo_limit_exact(&k, &y, &zero, Some(&y), HittingClock::FromDeparture).unwrap();
        assert!((v - 0.5).abs() < 1e-14);
        // interior ruin value: start 1, target 4, taboo 0
        let v = taboo_limit_exact(
            &k,
            &Point::new(&[1]),
            &Point::new(&[4]),
            Some(&zero),
            HittingClock::FromStart,
        )
        .unwrap();
        assert!((v - 0.25).abs() < 1e-14);
        // outside the bracket: must pass the target first
        let v = taboo_limit_exact(
            &k,
            &Point::new(&[7]),
            &Point::new(&[4]),
            Some(&zero),
            HittingClock::FromStart,
        )
        .unwrap();
        assert!((v - 1.0).abs() < 1e-14);
        // recurrent, no taboo: mass 1
        let v = taboo_limit_exact(&k, &Point::new(&[3]), &zero, None, HittingClock::FromStart).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn departure_atom_is_exact_in_d1() {
        // H⁻_{0,y,0} in d = 1 is a pure atom of 1/2 at zero: the only way to
        // reach +1 before returning to 0 is the immediate jump.
        let k = nn(1);
        let grid = TimeGrid::with_horizon(0.05, 20.0);
        let h = simulate_taboo(
            &k,
            &Point::zero(1),
            &e1(1),
            &Point::zero(1),
            HittingClock::FromDeparture,
            grid,
            40_000,
            11,
        )
        .unwrap();
        let se = 4.0 * h.stderr[0] + 1e-9;
        assert!((h.cdf[0] - 0.5).abs() < se, "atom = {}", h.cdf[0]);
        // and the c.d.f. never grows past the atom
        assert!((h.hit_mass() - h.cdf[0]).abs() < 1e-15);
        // failures split between resolved (taboo hit) and censored
        assert!((h.mass_infinity + h.censored_mass + h.hit_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn interval_ruin_matches_simulation() {
        let k = nn(1);
        let grid = TimeGrid::with_horizon(0.1, 60.0);
        let h = simulate_taboo(
            &k,
            &Point::new(&[1]),
            &Point::new(&[4]),
            &Point::zero(1),
            HittingClock::FromStart,
            grid,
            40_000,
            12,
        )
        .unwrap();
        // 60 time units ≫ the interval mixing time: censoring is negligible
        assert!(h.censored_mass < 1e-3, "censored = {}", h.censored_mass);
        assert!((h.hit_mass() - 0.25).abs() < 4.0 * h.stderr.last().unwrap() + 1e-3);
        assert!(h.cdf.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn transient_masses_match_green_formulas() {
        // d = 3: the atom of H⁻_{0,y,0} is a(y)/a = 1/6 and the total mass is
        // the Green two-point value ≈ 0.25403; the taboo-first mass equals
        // the mirrored experiment's success probability.
        let k = nn(3);
        let zero = Point::zero(3);
        let y = e1(3);
        let reach =
            taboo_limit_exact(&k, &zero, &y, Some(&zero), HittingClock::FromDeparture).unwrap();
        assert!((reach - 0.2540304712).abs() < 2e-6, "R = {}", reach);
        let ret = taboo_limit_exact(&k, &zero, &zero, Some(&y), HittingClock::FromDeparture).unwrap();
        assert!((ret - 0.2540304712).abs() < 2e-6, "B = {}", ret);

        let grid = TimeGrid::with_horizon(0.1, 50.0);
        let h = simulate_taboo(
            &k,
            &zero,
            &y,
            &zero,
            HittingClock::FromDeparture,
            grid,
            60_000,
            13,
        )
        .unwrap();
        assert!((h.cdf[0] - 1.0 / 6.0).abs() < 4.0 * h.stderr[0]);
        // hits keep trickling in beyond any horizon, so compare with slack
        assert!(h.hit_mass() < reach + 4.0 * h.stderr.last().unwrap());
        assert!(reach - h.hit_mass() < h.censored_mass + 0.01);
        // paths that return to 0 first realize the mirrored success event;
        // within the horizon they can only undercount it, and the deficit
        // must sit in the censored pool
        let se_mirror = 4.0 * (ret * (1.0 - ret) / 60_000.0f64).sqrt();
        assert!(
            h.mass_infinity < ret + se_mirror,
            "taboo-first mass {} exceeds mirrored limit {}",
            h.mass_infinity,
            ret
        );
        assert!(
            ret - h.mass_infinity < h.censored_mass + se_mirror,
            "late-return deficit {} not covered by censored mass {}",
            ret - h.mass_infinity,
            h.censored_mass
        );
    }

    #[test]
    fn plain_hitting_conventions() {
        let k = nn(2);
        let grid = TimeGrid::with_horizon(0.1, 5.0);
        let zero = Point::zero(2);
        // x = z from the start: H ≡ 1
        let h = simulate_hitting(&k, &zero, &zero, HittingClock::FromStart, grid, 500, 1).unwrap();
        assert!(h.cdf.iter().all(|&c| c == 1.0));
        // limit conventions
        assert_eq!(
            taboo_limit_exact(&k, &zero, &zero, None, HittingClock::FromStart).unwrap(),
            1.0
        );
        // transient return probability from departure = 1 − h_3
        let k3 = nn(3);
        let z3 = Point::zero(3);
        let ret =
            taboo_limit_exact(&k3, &z3, &z3, None, HittingClock::FromDeparture).unwrap();
        assert!((ret - (1.0 - 0.659462670361)).abs() < 2e-6);
    }

    #[test]
    fn two_point_bracket_honest_about_d2() {
        let k = nn(2);
        let r = taboo_limit_exact(
            &k,
            &Point::zero(2),
            &Point::new(&[1, 0]),
            Some(&Point::zero(2)),
            HittingClock::FromDeparture,
        );
        assert!(
            matches!(r, Err(CbrwError::NonConvergence(_))),
            "d = 2 bracket should fail to close, got {:?}",
            r
        );
    }

    #[test]
    fn convolution_identities_hold_in_d1() {
        let k = nn(1);
        let grid = TimeGrid::with_horizon(0.05, 20.0);
        let report =
            verify_convolution_identities(&k, &e1(1), grid, 30_000, &[1.0, 5.0], 2026).unwrap();
        assert!(report.terms_used >= 5, "k-sum too short: {}", report.terms_used);
        for check in report.return_split.iter().chain(&report.passage_split) {
            assert!(
                check.discrepancy() < 4.0 * check.stderr + 0.01,
                "identity off at t = {}: lhs {} rhs {} (se {})",
                check.checkpoint,
                check.lhs,
                check.rhs,
                check.stderr
            );
        }
    }
}
