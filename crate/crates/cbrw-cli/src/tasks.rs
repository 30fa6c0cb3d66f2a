//! The eight harness tasks.
//!
//! Every task builds its inputs from the resolved configuration, computes
//! through the library and emits CSV/JSON artifacts plus a manifest.  CSV
//! files always carry a header and render floats with round-trip precision;
//! site-valued columns are comma-joined coordinates (quoted per RFC rules).

use std::time::Instant;

use anyhow::Result;
use cbrw::asymptotics::{
    mean_asymptote, ratio_curve, survival_asymptote, AsymptoticFormula, Quantity, RouteValues,
};
use cbrw::bellman::bellman_report;
use cbrw::grid::TimeGrid;
use cbrw::lattice::Point;
use cbrw::simulate::{run_simulation, SimConfig};
use cbrw::taboo::{simulate_hitting, simulate_taboo, HittingClock};
use cbrw::transition::{gamma_d, transition_tables};
use cbrw::validate::{criterion, CriterionResult, Suite, SuiteReport, ValidateOptions};
use cbrw::volterra::{
    compute_J, extend_m_general, extend_q_general, solve_q_origin, JEstimate, SolverConfig,
};
use serde::Serialize;

use crate::artifacts::{sha256_hex, Cell, Csv, Emitter};
use crate::config::{ConfigError, ResolvedConfig};

fn fmt_site(coords: &[i32]) -> String {
    coords
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_clock(name: &str) -> Result<HittingClock> {
    match name {
        "start" => Ok(HittingClock::FromStart),
        "departure" => Ok(HittingClock::FromDeparture),
        other => Err(ConfigError(format!(
            "task.clock: unknown clock '{}' (expected start or departure)",
            other
        ))
        .into()),
    }
}

fn parse_quantity(name: &str) -> Result<Quantity> {
    match name {
        "mean" => Ok(Quantity::Mean),
        "survival" => Ok(Quantity::Survival),
        other => Err(ConfigError(format!(
            "task.quantity: unknown quantity '{}' (expected mean or survival)",
            other
        ))
        .into()),
    }
}

/// J(0;y), computed on the configured grid when the planar survival family
/// needs it.
fn planar_j(cfg: &ResolvedConfig, model: &cbrw::model::CbrwModel, y: &Point) -> Result<Option<JEstimate>> {
    if model.dim() <= 2 && !model.is_degenerate() {
        let grid = TimeGrid::with_horizon(cfg.run.grid_step, cfg.run.horizon);
        Ok(Some(compute_J(model, y, 0.0, grid, &SolverConfig::default())?))
    } else {
        Ok(None)
    }
}

fn finish(em: Emitter, cfg: &ResolvedConfig) -> Result<()> {
    let hash = sha256_hex(cfg.canonical_json().as_bytes());
    let outputs = em.finish(&hash, cfg.run.seed)?;
    println!(
        "wrote {} artifact(s) + manifest to {} (seed {})",
        outputs.len(),
        cfg.run.out,
        cfg.run.seed
    );
    Ok(())
}

/// `walk`: transition probabilities of the driving walk on the time grid,
/// with the local-CLT ratio t^{d/2} p(t;0,0)/γ_d as a convergence monitor.
pub fn walk(cfg: &ResolvedConfig) -> Result<i32> {
    let kernel = cfg.build_kernel()?;
    let y = cfg.site("y", &cfg.task.y)?;
    let zero = Point::zero(kernel.dim());
    let grid = TimeGrid::with_horizon(cfg.run.grid_step, cfg.run.horizon);
    let times: Vec<f64> = grid.times().collect();
    let (p00, _) = transition_tables(&kernel, &zero, &times)?;
    let (p0y, _) = transition_tables(&kernel, &y, &times)?;
    let gamma = gamma_d(&kernel)?;
    let half_d = kernel.dim() as f64 / 2.0;

    let mut csv = Csv::new(&["t", "p_origin", "p_target", "clt_ratio"]);
    for (i, &t) in times.iter().enumerate() {
        csv.row(&[
            Cell::Num(t),
            Cell::Num(p00[i]),
            Cell::Num(p0y[i]),
            Cell::Num(p00[i] * t.powf(half_d) / gamma),
        ]);
    }
    let mut em = Emitter::new(&cfg.run.out)?;
    em.write("walk.csv", &csv.into_bytes())?;
    finish(em, cfg)?;
    Ok(0)
}

/// `simulate`: event-driven Monte Carlo estimates of the local mean, the
/// survival probability and the pgf at the configured times.
pub fn simulate(cfg: &ResolvedConfig) -> Result<i32> {
    let model = cfg.build_model()?;
    let x = cfg.site("x", &cfg.task.x)?;
    let y = cfg.site("y", &cfg.task.y)?;
    let sim_cfg = SimConfig {
        replicas: cfg.run.replicas,
        seed: cfg.run.seed,
        ..SimConfig::default()
    };
    let out = run_simulation(&model, &x, &[y], &cfg.task.times, &sim_cfg)?;

    let xs = fmt_site(&cfg.task.x);
    let ys = fmt_site(&cfg.task.y);
    let mut csv = Csv::new(&[
        "x", "y", "t", "s", "mean", "mean_stderr", "survival", "survival_stderr", "pgf",
        "pgf_stderr", "n", "excluded",
    ]);
    for &t in &cfg.task.times {
        let m = out.local_mean(t, &y);
        let q = out.survival(t, &y);
        let g = out.pgf(cfg.task.s, t, &y);
        csv.row(&[
            Cell::Text(&xs),
            Cell::Text(&ys),
            Cell::Num(t),
            Cell::Num(cfg.task.s),
            Cell::Num(m.value),
            Cell::Num(m.stderr),
            Cell::Num(q.value),
            Cell::Num(q.stderr),
            Cell::Num(g.value),
            Cell::Num(g.stderr),
            Cell::Int(m.n as i64),
            Cell::Int(out.excluded as i64),
        ]);
    }
    let mut em = Emitter::new(&cfg.run.out)?;
    em.write("simulate.csv", &csv.into_bytes())?;
    finish(em, cfg)?;
    Ok(0)
}

#[derive(Serialize)]
struct TabooSummary {
    clock: String,
    mass_infinity: f64,
    censored_mass: f64,
    hit_mass: f64,
    replicas: u64,
}

/// `taboo`: Monte Carlo c.d.f. of the (optionally taboo-restricted) hitting
/// time of z from x.
pub fn taboo(cfg: &ResolvedConfig) -> Result<i32> {
    let kernel = cfg.build_kernel()?;
    let x = cfg.site("x", &cfg.task.x)?;
    let z = match &cfg.task.z {
        Some(z) => cfg.site("z", z)?,
        None => Point::zero(kernel.dim()),
    };
    let clock = parse_clock(&cfg.task.clock)?;
    let grid = TimeGrid::with_horizon(cfg.run.grid_step, cfg.run.horizon);
    let cdf = match &cfg.task.taboo {
        Some(taboo) => {
            let taboo = cfg.site("taboo", taboo)?;
            simulate_taboo(&kernel, &x, &z, &taboo, clock, grid, cfg.run.replicas, cfg.run.seed)?
        }
        None => simulate_hitting(&kernel, &x, &z, clock, grid, cfg.run.replicas, cfg.run.seed)?,
    };

    let mut csv = Csv::new(&["t", "cdf", "stderr"]);
    for i in 0..grid.len() {
        csv.row(&[
            Cell::Num(grid.time(i)),
            Cell::Num(cdf.cdf[i]),
            Cell::Num(cdf.stderr[i]),
        ]);
    }
    let mut em = Emitter::new(&cfg.run.out)?;
    em.write("taboo.csv", &csv.into_bytes())?;
    em.write_json(
        "taboo.json",
        &TabooSummary {
            clock: cfg.task.clock.clone(),
            mass_infinity: cdf.mass_infinity,
            censored_mass: cdf.censored_mass,
            hit_mass: cdf.hit_mass(),
            replicas: cdf.replicas,
        },
    )?;
    finish(em, cfg)?;
    Ok(0)
}

/// `solve`: convolution-equation solutions — local mean m(t;x,y) and
/// survival probability q(t;x,y) — on the configured time grid.
pub fn solve(cfg: &ResolvedConfig) -> Result<i32> {
    let model = cfg.build_model()?;
    let x = cfg.site("x", &cfg.task.x)?;
    let y = cfg.site("y", &cfg.task.y)?;
    let grid = TimeGrid::with_horizon(cfg.run.grid_step, cfg.run.horizon);
    let solver = SolverConfig::default();
    let m = extend_m_general(&model, &x, &y, grid)?;
    let q0 = solve_q_origin(&model, &y, grid, &solver)?;
    let q = extend_q_general(&model, &x, &y, 0.0, &q0)?;

    let mut csv = Csv::new(&["t", "mean", "survival"]);
    for i in 0..grid.len() {
        csv.row(&[
            Cell::Num(grid.time(i)),
            Cell::Num(m.values[i]),
            Cell::Num(q.values[i]),
        ]);
    }
    let mut em = Emitter::new(&cfg.run.out)?;
    em.write("solve.csv", &csv.into_bytes())?;
    finish(em, cfg)?;
    Ok(0)
}

/// `bellman-harris`: the six-type decomposition report (taboo masses, mean
/// matrix, criticality and eigen algebra, expansion check) as JSON.
pub fn bellman_harris(cfg: &ResolvedConfig) -> Result<i32> {
    let model = cfg.build_model()?;
    let y = cfg.site("y", &cfg.task.y)?;
    let report = bellman_report(&model, &y)?;
    let mut em = Emitter::new(&cfg.run.out)?;
    em.write_json("bellman_harris.json", &report)?;
    finish(em, cfg)?;
    Ok(0)
}

#[derive(Serialize)]
struct AsymRow {
    t: f64,
    value: f64,
    half_width: f64,
}

#[derive(Serialize)]
struct AsymBundle {
    formula: AsymptoticFormula,
    rows: Vec<AsymRow>,
}

/// `asym`: selects the asymptotic family for (model, x, y) and the requested
/// quantity, then emits the fully evaluated constants bundle plus the row
/// values at the configured times as JSON.
pub fn asym(cfg: &ResolvedConfig) -> Result<i32> {
    let model = cfg.build_model()?;
    let x = cfg.site("x", &cfg.task.x)?;
    let y = cfg.site("y", &cfg.task.y)?;
    let quantity = parse_quantity(&cfg.task.quantity)?;
    let j = if quantity == Quantity::Survival {
        planar_j(cfg, &model, &y)?
    } else {
        None
    };
    let formula = AsymptoticFormula::select(&model, quantity, &x, &y, j.as_ref())?;
    let mut rows = Vec::new();
    for &t in &cfg.task.times {
        let vi = formula.eval(t)?;
        rows.push(AsymRow {
            t,
            value: vi.value,
            half_width: vi.half_width,
        });
    }
    let mut em = Emitter::new(&cfg.run.out)?;
    em.write_json("asym.json", &AsymBundle { formula, rows })?;
    finish(em, cfg)?;
    Ok(0)
}

/// `ratio`: solves the requested quantity on the grid and emits the
/// observed/asymptote ratio ladder at the configured times as CSV.
pub fn ratio(cfg: &ResolvedConfig) -> Result<i32> {
    let model = cfg.build_model()?;
    let x = cfg.site("x", &cfg.task.x)?;
    let y = cfg.site("y", &cfg.task.y)?;
    let quantity = parse_quantity(&cfg.task.quantity)?;
    let grid = TimeGrid::with_horizon(cfg.run.grid_step, cfg.run.horizon);
    let solver = SolverConfig::default();

    let observed = match quantity {
        Quantity::Mean => extend_m_general(&model, &x, &y, grid)?,
        _ => {
            let q0 = solve_q_origin(&model, &y, grid, &solver)?;
            extend_q_general(&model, &x, &y, 0.0, &q0)?
        }
    };
    let j = if quantity == Quantity::Survival {
        planar_j(cfg, &model, &y)?
    } else {
        None
    };
    let curve = ratio_curve(
        &cfg.task.quantity,
        RouteValues::Dense(&observed),
        &mut |t| match quantity {
            Quantity::Mean => mean_asymptote(&model, &x, &y, t),
            _ => survival_asymptote(&model, &x, &y, t, j.as_ref()).map(|vi| vi.value),
        },
        &cfg.task.times,
    )?;

    let mut csv = Csv::new(&["t", "observed", "asymptote", "ratio"]);
    for row in &curve.rows {
        csv.row(&[
            Cell::Num(row.t),
            Cell::Num(row.observed),
            Cell::Num(row.asymptote),
            Cell::Num(row.ratio),
        ]);
    }
    let mut em = Emitter::new(&cfg.run.out)?;
    em.write("ratio.csv", &csv.into_bytes())?;
    finish(em, cfg)?;
    Ok(0)
}

/// `validate`: runs the requested suite, prints one verdict line per
/// criterion, writes the report plus per-criterion tables and exits
/// non-zero if any criterion failed.
pub fn validate(cfg: &ResolvedConfig) -> Result<i32> {
    let suite = Suite::parse(&cfg.task.suite)
        .map_err(|e| ConfigError(format!("task.suite: {}", e)))?;
    let opts = ValidateOptions {
        seed: cfg.run.seed,
        replica_scale: cfg.task.replica_scale,
        trend_horizon: cfg.task.trend_horizon,
    };

    let mut em = Emitter::new(&cfg.run.out)?;
    let mut results: Vec<CriterionResult> = Vec::new();
    for &id in suite.criteria() {
        let started = Instant::now();
        let result = match criterion(id, &opts) {
            Ok(r) => r,
            Err(e) => CriterionResult {
                id,
                name: cbrw::validate::criterion_name(id).to_string(),
                passed: false,
                details: format!("criterion errored: {}", e),
                table: None,
            },
        };
        println!(
            "criterion {:02} {} {} ({:.1} s) — {}",
            id,
            result.name,
            if result.passed { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64(),
            result.details
        );
        if let Some(table) = &result.table {
            let cols: Vec<&str> = table.columns.iter().map(|c| c.as_str()).collect();
            let mut csv = Csv::new(&cols);
            for row in &table.rows {
                let cells: Vec<Cell<'_>> = row.iter().map(|&v| Cell::Num(v)).collect();
                csv.row(&cells);
            }
            em.write(&format!("criterion_{:02}.csv", id), &csv.into_bytes())?;
        }
        results.push(result);
    }
    let all_passed = results.iter().all(|r| r.passed);
    let report = SuiteReport {
        suite: suite.name().to_string(),
        seed: opts.seed,
        replica_scale: opts.replica_scale,
        results,
        all_passed,
    };
    em.write_json("report.json", &report)?;
    finish(em, cfg)?;
    Ok(if all_passed { 0 } else { 1 })
}
