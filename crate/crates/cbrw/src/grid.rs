//! Uniform time grids and grid-sampled functions of time.
//!
//! Every convolution solver marches on a [`TimeGrid`] and returns a
//! [`GridFunction`]; Monte Carlo c.d.f.s are binned to the same grids, so all
//! cross-route comparisons happen node by node.

use crate::error::{CbrwError, Result};

/// Uniform grid t_i = i·Δ, i = 0..n−1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    step: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(step: f64, n: usize) -> TimeGrid {
        assert!(step > 0.0 && step.is_finite(), "grid step must be positive");
        assert!(n >= 2, "grid needs at least two nodes");
        TimeGrid { step, n }
    }

    /// Grid covering [0, horizon] with the given step; the horizon is rounded
    /// to the nearest node.
    pub fn with_horizon(step: f64, horizon: f64) -> TimeGrid {
        assert!(horizon > 0.0);
        let n = (horizon / step).round() as usize + 1;
        TimeGrid::new(step, n.max(2))
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> f64 {
        self.step * (self.n - 1) as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        debug_assert!(i < self.n);
        self.step * i as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.time(i))
    }

    /// Index of the node nearest to `t`, if it lies on the grid (within a
    /// relative tolerance of 1e-9).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let i = (t / self.step).round();
        if i < 0.0 || i as usize >= self.n {
            return None;
        }
        let i = i as usize;
        if (self.time(i) - t).abs() <= 1e-9 * self.step.max(t.abs()) {
            Some(i)
        } else {
            None
        }
    }

    /// Same horizon, half the step.
    pub fn refined(&self) -> TimeGrid {
        TimeGrid::new(self.step / 2.0, 2 * self.n - 1)
    }

    /// Grid truncated to the first `n` nodes.
    pub fn prefix(&self, n: usize) -> TimeGrid {
        assert!(n >= 2 && n <= self.n);
        TimeGrid::new(self.step, n)
    }
}

/// A real function sampled on a [`TimeGrid`].
#[derive(Debug, Clone)]
pub struct GridFunction {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> GridFunction {
        assert_eq!(values.len(), grid.len(), "value vector must match the grid");
        assert!(
            values.iter().all(|v| v.is_finite()),
            "grid function must be finite everywhere"
        );
        GridFunction { grid, values }
    }

    pub fn zero(grid: TimeGrid) -> GridFunction {
        GridFunction {
            values: vec![0.0; grid.len()],
            grid,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Linear interpolation between nodes; clamps beyond the horizon.
    pub fn value_at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.values[0];
        }
        let x = t / self.grid.step();
        let i = x.floor() as usize;
        if i + 1 >= self.len() {
            return *self.values.last().unwrap();
        }
        let w = x - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    /// Sup-norm distance on a shared grid.
    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64> {
        if self.grid != other.grid {
            return Err(CbrwError::GridMismatch(format!(
                "sup_distance: {:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Sup-norm distance against a refinement of this grid: `finer` must have
    /// step Δ/2^k; the comparison runs over the coarse nodes.
    pub fn sup_distance_to_refinement(&self, finer: &GridFunction) -> Result<f64> {
        let ratio = self.grid.step() / finer.grid.step();
        let r = ratio.round() as usize;
        if r == 0 || (ratio - r as f64).abs() > 1e-9 || (self.grid.len() - 1) * r + 1 > finer.grid.len()
        {
            return Err(CbrwError::GridMismatch(
                "refinement step must divide the coarse step and cover its horizon".into(),
            ));
        }
        Ok(self
            .values
            .iter()
            .enumerate()
            .map(|(i, a)| (a - finer.values[i * r]).abs())
            .fold(0.0, f64::max))
    }

    /// Serialize as two-column CSV `t,value` at full (round-trip) precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 24);
        out.push_str("t,value\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.grid.time(i), v));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<GridFunction> {
        let mut ts = Vec::new();
        let mut vs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("t,")) {
                continue;
            }
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| CbrwError::Parse(format!("line {}: expected `t,value`", lineno + 1)))?;
            let t: f64 = a
                .trim()
                .parse()
                .map_err(|e| CbrwError::Parse(format!("line {}: {}", lineno + 1, e)))?;
            let v: f64 = b
                .trim()
                .parse()
                .map_err(|e| CbrwError::Parse(format!("line {}: {}", lineno + 1, e)))?;
            ts.push(t);
            vs.push(v);
        }
        if ts.len() < 2 {
            return Err(CbrwError::Parse("need at least two rows".into()));
        }
        let step = ts[1] - ts[0];
        if step <= 0.0 {
            return Err(CbrwError::Parse("time column must increase".into()));
        }
        for (i, t) in ts.iter().enumerate() {
            if (t - step * i as f64).abs() > 1e-9 * step.max(t.abs()) {
                return Err(CbrwError::Parse(format!("row {} is off the uniform grid", i + 1)));
            }
        }
        Ok(GridFunction::new(TimeGrid::new(step, ts.len()), vs))
    }
}

/// Stieltjes convolution (S ∗ dF)(t) = ∫_{[0,t]} S(t−u) dF(u) of two grid
/// functions on the same grid, midpoint-weighting each increment of F:
///
///   (S∗F)(t_i) = S(t_i)·F(0) + Σ_{j≤i} (F(t_j)−F(t_{j−1}))·(S(t_i−t_j)+S(t_i−t_{j−1}))/2.
///
/// The F(0) term carries an atom of F at zero exactly.  F only needs bounded
/// variation (monotonicity is not assumed), so the same routine serves
/// distribution functions and signed mass functions alike.  O(n²).
pub fn stieltjes_convolve(s: &GridFunction, f: &GridFunction) -> Result<GridFunction> {
    if s.grid != f.grid {
        return Err(CbrwError::GridMismatch(
            "stieltjes_convolve needs both functions on one grid".into(),
        ));
    }
    let n = s.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut acc = s.values[i] * f.values[0];
        for j in 1..=i {
            acc += (f.values[j] - f.values[j - 1]) * (s.values[i - j] + s.values[i - j + 1]) / 2.0;
        }
        out[i] = acc;
    }
    Ok(GridFunction::new(s.grid, out))
}
