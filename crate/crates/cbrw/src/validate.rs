//! Desk-scale validation suites tying every route together.
//!
//! Each numbered criterion measures real quantities — spectral transition
//! probabilities against Bessel values, Green/escape constants, the six-type
//! mean algebra, Monte Carlo against convolution solutions, taboo splitting
//! identities, renewal-route equivalence, trend statistics toward the proved
//! asymptotes, and grid-convergence rates — and reports the measured values
//! beside a strict pass/fail verdict.  Nothing here relaxes a bound to make
//! a run pass: a criterion that fails reports exactly what was measured and
//! why the bound was missed.
//!
//! The criteria are grouped into four suites so the harness can run cheap
//! checks separately from the long Monte Carlo/trend runs:
//!
//! * `oracle`     — 1, 2, 3: closed-form oracles for the driving walk,
//! * `algebra`    — 4, 5: the six-type mean algebra and its expansion,
//! * `crossroute` — 6, 7, 8, 9, 13: independent routes must agree,
//! * `trend`      — 10, 11, 12: slow drifts toward the proved limits.
//!
//! Criterion 14 (same-seed reruns produce byte-identical artifacts) lives at
//! the harness level: it is checked by running the CLI twice and comparing
//! output bytes, not by anything in-process here.

use serde::Serialize;

use crate::asymptotics::{
    limit_transform, ratio_curve, survival_asymptote, LimitClass, RouteValues, TransformArg,
};
use crate::bellman::{
    build_six_type, char_poly_check, criticality_algebra, default_kappa_samples, eigen_data,
    eigen_residuals, mean_matrix, verify_B_expansion, TabooMasses,
};
use crate::error::{CbrwError, Result};
use crate::grid::TimeGrid;
use crate::lattice::{Point, WalkKernel};
use crate::reference::{degenerate_model, reference_model};
use crate::rng::CounterRng;
use crate::simulate::{run_simulation, SimConfig};
use crate::taboo::{simulate_hitting, verify_convolution_identities, HittingClock, TabooCdf};
use crate::transition::{
    escape_probability, gamma_d, transition_probability, GreenCache, SpectralGrid,
};
use crate::volterra::{
    compute_J, conditional_transform, extend_m_general, extend_q_general, m_backward_form,
    solve_m_at_origin_target, solve_q_origin, solve_q_pgf, solve_q_renewal_d4, SolverConfig,
};

/// Which block of criteria to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Oracle,
    Algebra,
    CrossRoute,
    Trend,
    All,
}

impl Suite {
    pub fn parse(name: &str) -> Result<Suite> {
        match name.to_ascii_lowercase().as_str() {
            "oracle" => Ok(Suite::Oracle),
            "algebra" => Ok(Suite::Algebra),
            "crossroute" => Ok(Suite::CrossRoute),
            "trend" => Ok(Suite::Trend),
            "all" => Ok(Suite::All),
            other => Err(CbrwError::Parse(format!(
                "unknown suite '{}' (expected oracle, algebra, crossroute, trend or all)",
                other
            ))),
        }
    }

    /// Criterion ids the suite runs, in execution order.
    pub fn criteria(self) -> &'static [u32] {
        match self {
            Suite::Oracle => &[1, 2, 3],
            Suite::Algebra => &[4, 5],
            Suite::CrossRoute => &[6, 7, 8, 9, 13],
            Suite::Trend => &[10, 11, 12],
            Suite::All => &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Suite::Oracle => "oracle",
            Suite::Algebra => "algebra",
            Suite::CrossRoute => "crossroute",
            Suite::Trend => "trend",
            Suite::All => "all",
        }
    }
}

/// Short machine-readable name of a criterion (1 ..= 14).
pub fn criterion_name(id: u32) -> &'static str {
    match id {
        1 => "bessel-oracle",
        2 => "walk-asymptotics",
        3 => "green-escape-oracle",
        4 => "six-type-algebra",
        5 => "perturbation-expansion",
        6 => "degenerate-collapse",
        7 => "mc-volterra-crossroute",
        8 => "taboo-convolution-identities",
        9 => "renewal-route-equivalence",
        10 => "survival-trend",
        11 => "conditional-limit-trend",
        12 => "planar-functional-bound",
        13 => "grid-convergence",
        14 => "determinism",
        _ => "unknown",
    }
}

/// Tuning knobs for a validation run.  The defaults are the contract scale;
/// `replica_scale` shrinks every Monte Carlo replica count proportionally and
/// `trend_horizon` shortens the long survival/transform ladders, both meant
/// for quick smoke runs only.
#[derive(Debug, Clone, Copy)]
pub struct ValidateOptions {
    pub seed: u64,
    pub replica_scale: f64,
    pub trend_horizon: f64,
}

impl Default for ValidateOptions {
    fn default() -> ValidateOptions {
        ValidateOptions {
            seed: 1,
            replica_scale: 1.0,
            trend_horizon: 2000.0,
        }
    }
}

impl ValidateOptions {
    fn scaled(&self, base: u64) -> u64 {
        ((base as f64 * self.replica_scale).round() as u64).max(100)
    }
}

/// Numeric table attached to a criterion so the harness can write it as CSV.
#[derive(Debug, Clone, Serialize)]
pub struct CsvTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    fn new(columns: &[&str]) -> CsvTable {
        CsvTable {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }
}

/// Outcome of one criterion: verdict, human-readable measurement summary and
/// the measured numbers themselves.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub details: String,
    pub table: Option<CsvTable>,
}

impl CriterionResult {
    fn new(id: u32, passed: bool, details: String, table: Option<CsvTable>) -> CriterionResult {
        CriterionResult {
            id,
            name: criterion_name(id).to_string(),
            passed,
            details,
            table,
        }
    }
}

/// Everything one suite run produced.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub replica_scale: f64,
    pub results: Vec<CriterionResult>,
    pub all_passed: bool,
}

/// Runs one criterion by id (1 ..= 13).  Criterion 14 is harness-level (CLI
/// rerun comparison) and is rejected here.
pub fn criterion(id: u32, opts: &ValidateOptions) -> Result<CriterionResult> {
    match id {
        1 => c01_bessel_oracle(opts),
        2 => c02_walk_asymptotics(opts),
        3 => c03_green_escape_oracle(opts),
        4 => c04_six_type_algebra(opts),
        5 => c05_perturbation_expansion(opts),
        6 => c06_degenerate_collapse(opts),
        7 => c07_mc_volterra_crossroute(opts),
        8 => c08_taboo_convolution_identities(opts),
        9 => c09_renewal_route_equivalence(opts),
        10 => c10_survival_trend(opts),
        11 => c11_conditional_limit_trend(opts),
        12 => c12_planar_functional_bound(opts),
        13 => c13_grid_convergence(opts),
        14 => Err(CbrwError::InvalidParameter(
            "criterion 14 is checked by rerunning the harness with the same seed and \
             comparing artifact bytes; it has no in-process form"
                .into(),
        )),
        other => Err(CbrwError::InvalidParameter(format!(
            "no criterion {}",
            other
        ))),
    }
}

/// Runs every criterion of a suite.  A criterion whose computation errors is
/// reported as failed with the error text; it never aborts the other
/// criteria and is never masked by the aggregate.
pub fn run_suite(suite: Suite, opts: &ValidateOptions) -> SuiteReport {
    let mut results = Vec::new();
    for &id in suite.criteria() {
        let result = match criterion(id, opts) {
            Ok(r) => r,
            Err(e) => CriterionResult::new(id, false, format!("criterion errored: {}", e), None),
        };
        results.push(result);
    }
    let all_passed = results.iter().all(|r| r.passed);
    SuiteReport {
        suite: suite.name().to_string(),
        seed: opts.seed,
        replica_scale: opts.replica_scale,
        results,
        all_passed,
    }
}

/// e^{−t} I_k(t) summed from the ascending series.  Every term is positive,
/// so the sum carries no cancellation and is accurate to a few ulps; the
/// largest term for t ≤ 50 stays far below the overflow threshold.
fn scaled_bessel_i(k: u32, t: f64) -> f64 {
    let half = t / 2.0;
    let mut term = 1.0;
    for j in 1..=k {
        term *= half / j as f64;
    }
    let mut sum = term;
    let mut m = 1.0;
    loop {
        term *= half * half / (m * (m + k as f64));
        let next = sum + term;
        if next == sum {
            break;
        }
        sum = next;
        m += 1.0;
        assert!(m < 2000.0, "Bessel series failed to converge");
    }
    sum * (-t).exp()
}

/// Criterion 1: the d = 1 nearest-neighbor transition probabilities computed
/// through the spectral quadrature must match e^{−t} I_k(t) to 1e-8 relative
/// at k ∈ {0, 1, 2}, t ∈ {0.1, 1, 5, 10, 50}.
fn c01_bessel_oracle(_opts: &ValidateOptions) -> Result<CriterionResult> {
    let kernel = WalkKernel::nearest_neighbor(1);
    let zero = Point::zero(1);
    let mut table = CsvTable::new(&["k", "t", "computed", "oracle", "rel_err"]);
    let mut worst = 0.0_f64;
    for k in 0..=2u32 {
        let target = Point::scaled_unit(1, 0, k as i32);
        for &t in &[0.1, 1.0, 5.0, 10.0, 50.0] {
            let grid = SpectralGrid::for_time(&kernel, t);
            let p = transition_probability(&kernel, t, &zero, &target, &grid)?;
            let oracle = scaled_bessel_i(k, t);
            let rel = (p / oracle - 1.0).abs();
            worst = worst.max(rel);
            table.rows.push(vec![k as f64, t, p, oracle, rel]);
        }
    }
    let passed = worst <= 1e-8;
    let details = format!(
        "p(t;0,k) vs e^(-t)I_k(t) over k in 0..=2, t in {{0.1,1,5,10,50}}: worst relative error {:.3e} (bound 1e-8)",
        worst
    );
    Ok(CriterionResult::new(1, passed, details, Some(table)))
}

/// Criterion 2: t^{d/2} p(t;0,0)/γ_d must sit in [0.99, 1.01] at t = 500 for
/// d = 1, 2, 3, with |ratio − 1| strictly decreasing over t ∈ {125, 250, 500}.
fn c02_walk_asymptotics(_opts: &ValidateOptions) -> Result<CriterionResult> {
    let ts = [125.0, 250.0, 500.0];
    let mut table = CsvTable::new(&["d", "t", "observed", "asymptote", "ratio", "gap"]);
    let mut passed = true;
    let mut summary = Vec::new();
    for d in 1..=3usize {
        let kernel = WalkKernel::nearest_neighbor(d);
        let gamma = gamma_d(&kernel)?;
        let zero = Point::zero(d);
        let mut series = Vec::new();
        for &t in &ts {
            let grid = SpectralGrid::for_time(&kernel, t);
            series.push((t, transition_probability(&kernel, t, &zero, &zero, &grid)?));
        }
        let curve = ratio_curve(
            "return probability vs local CLT",
            RouteValues::Series(&series),
            &mut |t| Ok(gamma / t.powf(d as f64 / 2.0)),
            &ts,
        )?;
        let last = curve.rows.last().unwrap();
        let in_window = (0.99..=1.01).contains(&last.ratio);
        passed &= in_window && curve.gap_strictly_decreasing;
        summary.push(format!(
            "d={}: ratio(500)={:.6} monotone={}",
            d, last.ratio, curve.gap_strictly_decreasing
        ));
        for row in &curve.rows {
            table
                .rows
                .push(vec![d as f64, row.t, row.observed, row.asymptote, row.ratio, row.gap]);
        }
    }
    let details = format!(
        "t^(d/2) p(t;0,0)/gamma_d at t in {{125,250,500}}; window [0.99,1.01] at t=500 plus strict gap decrease. {}",
        summary.join("; ")
    );
    Ok(CriterionResult::new(2, passed, details, Some(table)))
}

/// Criterion 3: the d = 3 nearest-neighbor Green value G₀(0,0) and the
/// escape probability h₃ must match their lattice constants to ±5e-4.
fn c03_green_escape_oracle(_opts: &ValidateOptions) -> Result<CriterionResult> {
    let kernel = WalkKernel::nearest_neighbor(3);
    let mut cache = GreenCache::new(&kernel);
    let g = cache.g0(&Point::zero(3))?;
    let h = escape_probability(&kernel)?;
    let g_err = (g - 1.51639).abs();
    let h_err = (h - 0.65946).abs();
    let passed = g_err <= 5e-4 && h_err <= 5e-4;
    let mut table = CsvTable::new(&["green_origin", "green_err", "escape", "escape_err"]);
    table.rows.push(vec![g, g_err, h, h_err]);
    let details = format!(
        "G0(0,0) = {:.6} (target 1.51639, err {:.2e}); h3 = {:.6} (target 0.65946, err {:.2e}); bound 5e-4",
        g, g_err, h, h_err
    );
    Ok(CriterionResult::new(3, passed, details, Some(table)))
}

/// Criterion 4: the full six-type mean algebra for the d = 1 reference model
/// at y = 1 with exact ruin masses.  U = 3, V = 1, uᵢ = 1/6 and B = 1/48
/// within 1e-8; eigen residuals within 1e-10; characteristic-polynomial
/// residual within 1e-9 over the κ samples; criticality residual within
/// 1e-8; and all four summands of R(1) strictly positive.  The last check
/// fails structurally in this geometry: R = A = ½ (the only route from the
/// origin to y that avoids returning is the direct jump), so the second
/// summand (1−α)R(R−A) is exactly zero.
fn c04_six_type_algebra(_opts: &ValidateOptions) -> Result<CriterionResult> {
    let model = reference_model(1)?;
    let y = Point::unit(1, 0);
    let masses = TabooMasses::exact(&model, &y)?;
    let spec = build_six_type(&model, &y, &masses, None)?;
    let matrix = mean_matrix(&spec)?;
    let eigen = eigen_data(&matrix, &model, &masses)?;
    let res = eigen_residuals(&matrix, &eigen);
    let char_poly = char_poly_check(&matrix, &model, &masses, &default_kappa_samples());
    let crit = criticality_algebra(&model, &masses);

    let u_dev = (eigen.big_u - 3.0).abs();
    let v_dev = (eigen.big_v - 1.0).abs();
    let uvec_dev = eigen
        .u
        .iter()
        .map(|ui| (ui - 1.0 / 6.0).abs())
        .fold(0.0, f64::max);
    let b_dev = (eigen.b - 1.0 / 48.0).abs();
    let closed_form_ok = u_dev <= 1e-8 && v_dev <= 1e-8 && uvec_dev <= 1e-8 && b_dev <= 1e-8;
    let eigen_ok =
        res.right <= 1e-10 && res.left <= 1e-10 && res.u_one <= 1e-10 && res.v_u <= 1e-10;
    let char_ok = char_poly <= 1e-9;
    let crit_ok = crit.residual <= 1e-8;
    let positivity_ok = crit.summands.iter().all(|&s| s > 0.0);
    let passed = closed_form_ok && eigen_ok && char_ok && crit_ok && positivity_ok;

    let mut table = CsvTable::new(&[
        "U", "V", "u_dev", "B_dev", "right", "left", "u_one", "v_u", "char_poly", "criticality",
        "T1", "T2", "T3", "T4",
    ]);
    table.rows.push(vec![
        eigen.big_u,
        eigen.big_v,
        uvec_dev,
        b_dev,
        res.right,
        res.left,
        res.u_one,
        res.v_u,
        char_poly,
        crit.residual,
        crit.summands[0],
        crit.summands[1],
        crit.summands[2],
        crit.summands[3],
    ]);
    let details = format!(
        "U={:.10} V={:.10} max|u-1/6|={:.2e} |B-1/48|={:.2e}; eigen residuals {:.2e}/{:.2e}/{:.2e}/{:.2e}; \
         char-poly {:.2e}; criticality {:.2e}; R(1) summands [{:.6}, {:.6}, {:.6}, {:.6}] — \
         strict positivity of the second summand fails structurally here: R = A = 1/2 in the \
         one-dimensional nearest-neighbor geometry, so (1-alpha)R(R-A) is exactly 0",
        eigen.big_u,
        eigen.big_v,
        uvec_dev,
        b_dev,
        res.right,
        res.left,
        res.u_one,
        res.v_u,
        char_poly,
        crit.residual,
        crit.summands[0],
        crit.summands[1],
        crit.summands[2],
        crit.summands[3],
    );
    Ok(CriterionResult::new(4, passed, details, Some(table)))
}

/// Criterion 5: the second-order expansion x − (v, 1 − F(1 − ux)) = Bx²(1 + O(x))
/// must hold with ratio within 1 ± 5x at x ∈ {1e-2, 1e-3} for both the d = 1
/// and the d = 3 reference constructions.
fn c05_perturbation_expansion(_opts: &ValidateOptions) -> Result<CriterionResult> {
    let mut table = CsvTable::new(&["d", "x", "deviation", "envelope"]);
    let mut passed = true;
    let mut notes = Vec::new();
    for d in [1usize, 3] {
        let model = reference_model(d)?;
        let y = Point::unit(d, 0);
        let masses = TabooMasses::exact(&model, &y)?;
        let spec = build_six_type(&model, &y, &masses, None)?;
        let matrix = mean_matrix(&spec)?;
        let eigen = eigen_data(&matrix, &model, &masses)?;
        for &x in &[1e-2, 1e-3] {
            match verify_B_expansion(&spec, &eigen, &[x]) {
                Ok(dev) => {
                    table.rows.push(vec![d as f64, x, dev, 5.0 * x]);
                    notes.push(format!("d={} x={:.0e}: dev {:.2e}", d, x, dev));
                }
                Err(e) => {
                    passed = false;
                    table.rows.push(vec![d as f64, x, f64::NAN, 5.0 * x]);
                    notes.push(format!("d={} x={:.0e}: {}", d, x, e));
                }
            }
        }
    }
    let details = format!(
        "(x - (v, 1-F(1-ux)))/(Bx^2) within 1 +/- 5x: {}",
        notes.join("; ")
    );
    Ok(CriterionResult::new(5, passed, details, Some(table)))
}

/// Criterion 6: with the degenerate offspring law f(s) = s the survival and
/// mean solvers must coincide node by node to 1e-10, and every simulated
/// replica must hold exactly one particle at every query time.
fn c06_degenerate_collapse(opts: &ValidateOptions) -> Result<CriterionResult> {
    let model = degenerate_model(1)?;
    let y = Point::unit(1, 0);
    let grid = TimeGrid::with_horizon(0.05, 20.0);
    let cfg = SolverConfig::default();
    let q = solve_q_origin(&model, &y, grid, &cfg)?;
    let m = solve_m_at_origin_target(&model, &y, grid)?;
    let sup = q.sup_distance(&m)?;

    let times = [1.0, 5.0, 10.0];
    let sim_cfg = SimConfig {
        replicas: opts.scaled(50_000),
        seed: opts.seed,
        ..SimConfig::default()
    };
    let out = run_simulation(&model, &Point::zero(1), &[y], &times, &sim_cfg)?;
    let mut table = CsvTable::new(&["t", "total_mean", "total_stderr", "unit_mass_fraction"]);
    let mut unit_mass = true;
    for (i, &t) in times.iter().enumerate() {
        let est = out.total_mean(t);
        let ones = out.total[i].counts.get(&1).copied().unwrap_or(0);
        let frac = ones as f64 / (out.replicas - out.excluded) as f64;
        unit_mass &= out.total[i].counts.len() == 1 && frac == 1.0;
        unit_mass &= est.value == 1.0 && est.stderr == 0.0;
        table.rows.push(vec![t, est.value, est.stderr, frac]);
    }
    let passed = sup <= 1e-10 && unit_mass && out.excluded == 0;
    let details = format!(
        "sup|q - m| over [0,20] = {:.3e} (bound 1e-10); total population identically 1 across {} replicas: {}",
        sup,
        out.replicas,
        unit_mass
    );
    Ok(CriterionResult::new(6, passed, details, Some(table)))
}

/// Criterion 7: event-driven Monte Carlo and the convolution solvers must
/// agree within 3 standard errors on the local mean and the survival
/// probability at t ∈ {5, 10, 20, 40} for x ∈ {0, 2}, y = 1 in d = 1.
fn c07_mc_volterra_crossroute(opts: &ValidateOptions) -> Result<CriterionResult> {
    let model = reference_model(1)?;
    let y = Point::unit(1, 0);
    let times = [5.0, 10.0, 20.0, 40.0];
    let grid = TimeGrid::with_horizon(0.05, 40.0);
    let cfg = SolverConfig::default();
    let q0 = solve_q_origin(&model, &y, grid, &cfg)?;

    let mut table = CsvTable::new(&[
        "x", "t", "mc_mean", "mean_stderr", "volterra_mean", "mc_surv", "surv_stderr",
        "volterra_surv",
    ]);
    let mut passed = true;
    let mut worst_sigma = 0.0_f64;
    for (idx, x) in [Point::zero(1), Point::scaled_unit(1, 0, 2)].iter().enumerate() {
        let m_curve = extend_m_general(&model, x, &y, grid)?;
        let q_curve = extend_q_general(&model, x, &y, 0.0, &q0)?;
        let sim_cfg = SimConfig {
            replicas: opts.scaled(1_000_000),
            seed: opts.seed.wrapping_add(17 * idx as u64),
            ..SimConfig::default()
        };
        let out = run_simulation(&model, x, &[y], &times, &sim_cfg)?;
        for &t in &times {
            let mc_m = out.local_mean(t, &y);
            let mc_q = out.survival(t, &y);
            let vm = m_curve.value_at(t);
            let vq = q_curve.value_at(t);
            let sig_m = (mc_m.value - vm).abs() / mc_m.stderr;
            let sig_q = (mc_q.value - vq).abs() / mc_q.stderr;
            worst_sigma = worst_sigma.max(sig_m).max(sig_q);
            passed &= sig_m <= 3.0 && sig_q <= 3.0;
            table.rows.push(vec![
                x.get(0) as f64,
                t,
                mc_m.value,
                mc_m.stderr,
                vm,
                mc_q.value,
                mc_q.stderr,
                vq,
            ]);
        }
    }
    let details = format!(
        "16 comparisons (mean and survival, x in {{0,2}}, t in {{5,10,20,40}}) at {} replicas: worst deviation {:.2} sigma (bound 3)",
        opts.scaled(1_000_000),
        worst_sigma
    );
    Ok(CriterionResult::new(7, passed, details, Some(table)))
}

/// Criterion 8: the Stieltjes-convolution splitting identities for taboo
/// hitting times must hold within 3 combined standard errors at checkpoints
/// t ∈ {1, 5, 10} in d = 1 and d = 2, with k-sum truncation remainder below
/// 1e-6.
fn c08_taboo_convolution_identities(opts: &ValidateOptions) -> Result<CriterionResult> {
    let checkpoints = [1.0, 5.0, 10.0];
    let grid = TimeGrid::with_horizon(0.05, 40.0);
    let mut table = CsvTable::new(&["d", "identity", "checkpoint", "lhs", "rhs", "stderr"]);
    let mut passed = true;
    let mut notes = Vec::new();
    for d in [1usize, 2] {
        let kernel = WalkKernel::nearest_neighbor(d);
        let y = Point::unit(d, 0);
        let report = verify_convolution_identities(
            &kernel,
            &y,
            grid,
            opts.scaled(150_000),
            &checkpoints,
            opts.seed.wrapping_add(d as u64),
        )?;
        let mut worst = 0.0_f64;
        for (identity, checks) in [(0.0, &report.return_split), (1.0, &report.passage_split)] {
            for c in checks {
                let sigmas = c.discrepancy() / c.stderr;
                worst = worst.max(sigmas);
                passed &= sigmas <= 3.0;
                table
                    .rows
                    .push(vec![d as f64, identity, c.checkpoint, c.lhs, c.rhs, c.stderr]);
            }
        }
        passed &= report.remainder < 1e-6;
        notes.push(format!(
            "d={}: worst {:.2} sigma, {} k-terms, remainder {:.1e}",
            d, worst, report.terms_used, report.remainder
        ));
    }
    let details = format!(
        "return and first-passage splits at t in {{1,5,10}}: {}",
        notes.join("; ")
    );
    Ok(CriterionResult::new(8, passed, details, Some(table)))
}

/// Criterion 9: in d = 4 the renewal-equation route driven by simulated
/// hitting-time c.d.f.s must match the direct pgf solver within
/// max(10Δ², 3·propagated stderr) at every node of [0, 20].
fn c09_renewal_route_equivalence(opts: &ValidateOptions) -> Result<CriterionResult> {
    let model = reference_model(4)?;
    let y = Point::unit(4, 0);
    let zero = Point::zero(4);
    let step = 0.05;
    let grid = TimeGrid::with_horizon(step, 20.0);
    let replicas = opts.scaled(500_000);
    let h0y = simulate_hitting(
        model.kernel(),
        &zero,
        &y,
        HittingClock::FromDeparture,
        grid,
        replicas,
        opts.seed.wrapping_add(901),
    )?;
    let h00 = simulate_hitting(
        model.kernel(),
        &zero,
        &zero,
        HittingClock::FromDeparture,
        grid,
        replicas,
        opts.seed.wrapping_add(902),
    )?;
    let cfg = SolverConfig::default();
    let renewal = solve_q_renewal_d4(&model, &h0y, &h00, &cfg)?;
    let direct = solve_q_origin(&model, &y, grid, &cfg)?;

    let floor = 10.0 * step * step;
    let mut passed = true;
    let mut worst_diff = 0.0_f64;
    let mut worst_slack = f64::INFINITY;
    let mut table = CsvTable::new(&["t", "renewal", "direct", "stderr", "tolerance"]);
    for i in 0..grid.len() {
        let diff = (renewal.q.values[i] - direct.values[i]).abs();
        let tol = floor.max(3.0 * renewal.stderr[i]);
        passed &= diff <= tol;
        worst_diff = worst_diff.max(diff);
        worst_slack = worst_slack.min(tol - diff);
        if i % 20 == 0 || i + 1 == grid.len() {
            table.rows.push(vec![
                grid.time(i),
                renewal.q.values[i],
                direct.values[i],
                renewal.stderr[i],
                tol,
            ]);
        }
    }
    let details = format!(
        "renewal vs direct survival in d=4 on [0,20], step {}: worst |diff| {:.3e}, minimum tolerance slack {:.3e}, {} replicas per c.d.f.",
        step, worst_diff, worst_slack, replicas
    );
    Ok(CriterionResult::new(9, passed, details, Some(table)))
}

/// Criterion 10: the d = 1 survival probability times its proved asymptote
/// inverse, r(t) = q(t)·σ²γ₁a·√t·ln t / (2(1−α)), sampled at
/// t = horizon·{1/8, 1/4, 1/2, 1}: |r − 1| must strictly decrease and the
/// final r must lie in [0.6, 1.4].
fn c10_survival_trend(opts: &ValidateOptions) -> Result<CriterionResult> {
    let model = reference_model(1)?;
    let y = Point::unit(1, 0);
    let zero = Point::zero(1);
    let horizon = opts.trend_horizon;
    let grid = TimeGrid::with_horizon(0.05, horizon);
    let cfg = SolverConfig::default();
    let q = solve_q_origin(&model, &y, grid, &cfg)?;
    let ts: Vec<f64> = [0.125, 0.25, 0.5, 1.0].iter().map(|f| f * horizon).collect();
    let curve = ratio_curve(
        "survival vs proved asymptote",
        RouteValues::Dense(&q),
        &mut |t| survival_asymptote(&model, &zero, &y, t, None).map(|vi| vi.value),
        &ts,
    )?;
    let mut table = CsvTable::new(&["t", "observed", "asymptote", "ratio", "gap"]);
    for row in &curve.rows {
        table
            .rows
            .push(vec![row.t, row.observed, row.asymptote, row.ratio, row.gap]);
    }
    let last = curve.rows.last().unwrap();
    let in_window = (0.6..=1.4).contains(&last.ratio);
    let passed = curve.gap_strictly_decreasing && in_window;
    let ladder: Vec<String> = curve
        .rows
        .iter()
        .map(|r| format!("r({}) = {:.4}", r.t, r.ratio))
        .collect();
    let details = format!(
        "{}; |r-1| strictly decreasing: {}; final ratio in [0.6,1.4]: {} — the correction to the \
         sqrt(t)*ln(t) law decays only like 1/ln(t), so the window is not reached at this horizon",
        ladder.join(", "),
        curve.gap_strictly_decreasing,
        in_window
    );
    Ok(CriterionResult::new(10, passed, details, Some(table)))
}

/// Criterion 11: the conditional transform at λ = 1 must drift monotonically
/// toward its proved limit 1/(λ+1) = 1/2 along t = horizon·{1/8,1/4,1/2,1},
/// and the d = 4 mixture evaluator must satisfy
/// 1/3 + (2/3)·r/(r+λ) with r = 2/3 at ten pseudo-random λ to 1e-12.
fn c11_conditional_limit_trend(opts: &ValidateOptions) -> Result<CriterionResult> {
    let model = reference_model(1)?;
    let y = Point::unit(1, 0);
    let zero = Point::zero(1);
    let horizon = opts.trend_horizon;
    let grid = TimeGrid::with_horizon(0.05, horizon);
    let cfg = SolverConfig::default();
    let ts: Vec<f64> = [0.125, 0.25, 0.5, 1.0].iter().map(|f| f * horizon).collect();
    let mut table = CsvTable::new(&["t", "transform", "gap"]);
    let mut gaps = Vec::new();
    let mut above = true;
    for &t in &ts {
        let v = conditional_transform(&model, &zero, &y, 1.0, t, grid, &cfg)?;
        let gap = (v - 0.5).abs();
        above &= v > 0.5;
        gaps.push(gap);
        table.rows.push(vec![t, v, gap]);
    }
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);

    let model4 = reference_model(4)?;
    let r = 2.0 / 3.0;
    let mut rng = CounterRng::new(opts.seed, 0xA57);
    let mut worst_mix = 0.0_f64;
    for _ in 0..10 {
        let lambda = 10.0 * rng.uniform();
        let got = limit_transform(
            &model4,
            LimitClass::Mixture,
            TransformArg::Lambda(lambda),
            None,
        )?
        .value;
        let want = 1.0 / 3.0 + (2.0 / 3.0) * r / (r + lambda);
        worst_mix = worst_mix.max((got - want).abs());
    }
    let mixture_ok = worst_mix <= 1e-12;

    let passed = monotone && mixture_ok;
    let ladder: Vec<String> = ts
        .iter()
        .zip(&gaps)
        .map(|(t, g)| format!("|v({}) - 1/2| = {:.4}", t, g))
        .collect();
    let details = format!(
        "{}; strictly decreasing: {} (approach from above: {}); mixture identity worst deviation {:.2e} over 10 lambdas (bound 1e-12)",
        ladder.join(", "),
        monotone,
        above,
        worst_mix
    );
    Ok(CriterionResult::new(11, passed, details, Some(table)))
}

/// Criterion 12: in d = 2 the functional J(0;y) must respect its strict
/// bound aJ(0;y)/(1−α) < 1 with margin larger than the propagated error bar,
/// for y ∈ {e₁, 2e₁}.
fn c12_planar_functional_bound(_opts: &ValidateOptions) -> Result<CriterionResult> {
    let model = reference_model(2)?;
    let grid = TimeGrid::with_horizon(0.1, 300.0);
    let cfg = SolverConfig::default();
    let bound = (1.0 - model.alpha()) / model.kernel().total_rate();
    let mut table = CsvTable::new(&["y_offset", "j_value", "error_bar", "bound", "margin"]);
    let mut passed = true;
    let mut notes = Vec::new();
    for k in [1i32, 2] {
        let y = Point::scaled_unit(2, 0, k);
        let j = compute_J(&model, &y, 0.0, grid, &cfg)?;
        let margin = bound - j.value;
        passed &= margin > j.error_bar;
        table
            .rows
            .push(vec![k as f64, j.value, j.error_bar, bound, margin]);
        notes.push(format!(
            "y={}e1: J={:.6} +/- {:.1e}, margin {:.4}",
            k, j.value, j.error_bar, margin
        ));
    }
    let details = format!(
        "strict bound J(0;y) < (1-alpha)/a = {}: {}",
        bound,
        notes.join("; ")
    );
    Ok(CriterionResult::new(12, passed, details, Some(table)))
}

/// Smooth synthetic hitting c.d.f. used to probe the renewal solver's grid
/// convergence without Monte Carlo noise.
fn synthetic_cdf(grid: TimeGrid, scale: f64, rate: f64) -> TabooCdf {
    let cdf = grid
        .times()
        .map(|t| scale * (1.0 - (-rate * t).exp()))
        .collect();
    TabooCdf::from_exact(grid, cdf, 1.0 - scale)
}

/// Criterion 13: every convolution solver must converge at the trapezoidal
/// O(Δ²) rate — Richardson ratios (v(Δ) − v(Δ/2))/(v(Δ/2) − v(Δ/4)) in
/// [3.5, 4.5] at Δ = 0.1, measured on the value at t = 10.
fn c13_grid_convergence(_opts: &ValidateOptions) -> Result<CriterionResult> {
    let model = reference_model(1)?;
    let y = Point::unit(1, 0);
    let x2 = Point::scaled_unit(1, 0, 2);
    let cfg = SolverConfig::default();
    let end = |g: crate::grid::GridFunction| *g.values.last().unwrap();

    type Route<'a> = (&'static str, Box<dyn Fn(TimeGrid) -> Result<f64> + 'a>);
    let routes: Vec<Route> = vec![
        (
            "mean-origin-target",
            Box::new(|g| solve_m_at_origin_target(&model, &y, g).map(end)),
        ),
        (
            "mean-general-start",
            Box::new(|g| extend_m_general(&model, &x2, &y, g).map(end)),
        ),
        (
            "mean-backward-form",
            Box::new(|g| {
                let m0y = solve_m_at_origin_target(&model, &y, g)?;
                m_backward_form(&model, &x2, &y, &m0y).map(end)
            }),
        ),
        (
            "survival-origin-start",
            Box::new(|g| solve_q_origin(&model, &y, g, &cfg).map(end)),
        ),
        (
            "pgf-half",
            Box::new(|g| solve_q_pgf(&model, &y, 0.5, g, &cfg).map(end)),
        ),
        (
            "survival-general-start",
            Box::new(|g| {
                let q0 = solve_q_origin(&model, &y, g, &cfg)?;
                extend_q_general(&model, &x2, &y, 0.0, &q0).map(end)
            }),
        ),
        (
            "renewal-synthetic-forcing",
            Box::new(|g| {
                let h0y = synthetic_cdf(g, 0.6, 0.8);
                let h00 = synthetic_cdf(g, 0.5, 1.0);
                solve_q_renewal_d4(&model, &h0y, &h00, &cfg).map(|r| *r.q.values.last().unwrap())
            }),
        ),
    ];

    let mut table = CsvTable::new(&["route", "v_coarse", "v_mid", "v_fine", "richardson_ratio"]);
    let mut passed = true;
    let mut notes = Vec::new();
    for (idx, (name, solve)) in routes.iter().enumerate() {
        let v1 = solve(TimeGrid::with_horizon(0.1, 10.0))?;
        let v2 = solve(TimeGrid::with_horizon(0.05, 10.0))?;
        let v3 = solve(TimeGrid::with_horizon(0.025, 10.0))?;
        let ratio = (v1 - v2) / (v2 - v3);
        let ok = (3.5..=4.5).contains(&ratio);
        passed &= ok;
        table.rows.push(vec![idx as f64, v1, v2, v3, ratio]);
        notes.push(format!("{}: {:.3}", name, ratio));
    }
    let details = format!(
        "Richardson ratios at t = 10 under step 0.1 -> 0.05 -> 0.025 (window [3.5, 4.5]): {}",
        notes.join("; ")
    );
    Ok(CriterionResult::new(13, passed, details, Some(table)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_partition_the_criteria_and_parse_by_name() {
        let mut seen: Vec<u32> = Vec::new();
        for s in [Suite::Oracle, Suite::Algebra, Suite::CrossRoute, Suite::Trend] {
            seen.extend_from_slice(s.criteria());
        }
        seen.sort_unstable();
        assert_eq!(seen, (1..=13).collect::<Vec<_>>());
        assert_eq!(Suite::parse("ORACLE").unwrap(), Suite::Oracle);
        assert_eq!(Suite::parse("all").unwrap(), Suite::All);
        assert!(Suite::parse("everything").is_err());
        let opts = ValidateOptions::default();
        let err = criterion(14, &opts).unwrap_err().to_string();
        assert!(err.contains("rerunning"), "got: {}", err);
        assert!(criterion(0, &opts).is_err());
        for id in 1..=14 {
            assert_ne!(criterion_name(id), "unknown");
        }
    }

    #[test]
    fn bessel_and_green_oracles_pass() {
        let opts = ValidateOptions::default();
        let c1 = criterion(1, &opts).unwrap();
        assert!(c1.passed, "{}", c1.details);
        assert_eq!(c1.table.as_ref().unwrap().rows.len(), 15);
        let c3 = criterion(3, &opts).unwrap();
        assert!(c3.passed, "{}", c3.details);
    }

    #[test]
    fn walk_asymptotics_criterion_passes() {
        let opts = ValidateOptions::default();
        let c2 = criterion(2, &opts).unwrap();
        assert!(c2.passed, "{}", c2.details);
        assert_eq!(c2.table.as_ref().unwrap().rows.len(), 9);
    }

    #[test]
    fn six_type_algebra_reports_the_structural_zero_summand() {
        let opts = ValidateOptions::default();
        let c4 = criterion(4, &opts).unwrap();
        assert!(!c4.passed, "the strict-positivity check cannot hold in d=1");
        assert!(c4.details.contains("exactly 0"), "{}", c4.details);
        // everything except the positivity check is tight
        let row = &c4.table.as_ref().unwrap().rows[0];
        assert!((row[0] - 3.0).abs() <= 1e-8, "U = {}", row[0]);
        assert!((row[1] - 1.0).abs() <= 1e-8, "V = {}", row[1]);
        assert!(row[8] <= 1e-9, "char-poly residual {}", row[8]);
        assert_eq!(row[11], 0.0, "second summand must vanish identically");
    }

    #[test]
    fn expansion_and_grid_convergence_pass() {
        let opts = ValidateOptions::default();
        let c5 = criterion(5, &opts).unwrap();
        assert!(c5.passed, "{}", c5.details);
        let c13 = criterion(13, &opts).unwrap();
        assert!(c13.passed, "{}", c13.details);
        for row in &c13.table.as_ref().unwrap().rows {
            assert!((3.5..=4.5).contains(&row[4]), "ratio {}", row[4]);
        }
    }

    #[test]
    fn degenerate_collapse_passes_at_smoke_scale() {
        let opts = ValidateOptions {
            replica_scale: 0.02,
            ..ValidateOptions::default()
        };
        let c6 = criterion(6, &opts).unwrap();
        assert!(c6.passed, "{}", c6.details);
    }

    #[test]
    fn planar_bound_criterion_passes() {
        let opts = ValidateOptions::default();
        let c12 = criterion(12, &opts).unwrap();
        assert!(c12.passed, "{}", c12.details);
    }

    #[test]
    fn suite_runner_never_masks_individual_failures() {
        let report = run_suite(Suite::Algebra, &ValidateOptions::default());
        assert_eq!(report.results.len(), 2);
        assert!(!report.all_passed, "criterion 4 fails structurally");
        assert!(report.results.iter().any(|r| r.id == 4 && !r.passed));
        assert!(report.results.iter().any(|r| r.id == 5 && r.passed));
    }
}
