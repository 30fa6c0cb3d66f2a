//! Lattice points and finite-support symmetric jump kernels on Z^d.
//!
//! A [`WalkKernel`] is the off-diagonal part of the generator of a symmetric
//! continuous-time random walk: nonnegative rates a(v) on a finite set of
//! nonzero vectors with a(v) = a(−v), total rate a = Σ_v a(v), and diagonal
//! entry a(0) = −a.  Finite support keeps irreducibility and box-truncation
//! checks exact; it is a deliberate restriction of the admissible
//! finite-variance kernels.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{CbrwError, Result};

/// Maximum supported dimension; points store fixed-size coordinate arrays so
/// they stay `Copy` and hashable.
pub const MAX_DIM: usize = 8;

/// A point of Z^d for d ≤ [`MAX_DIM`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    dim: u8,
    c: [i32; MAX_DIM],
}

impl Point {
    pub fn new(coords: &[i32]) -> Point {
        assert!(
            !coords.is_empty() && coords.len() <= MAX_DIM,
            "dimension must be in 1..={}",
            MAX_DIM
        );
        let mut c = [0i32; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Point {
            dim: coords.len() as u8,
            c,
        }
    }

    pub fn zero(dim: usize) -> Point {
        Point::new(&vec![0; dim])
    }

    /// k·e_axis.
    pub fn scaled_unit(dim: usize, axis: usize, k: i32) -> Point {
        assert!(axis < dim);
        let mut p = Point::zero(dim);
        p.c[axis] = k;
        p
    }

    pub fn unit(dim: usize, axis: usize) -> Point {
        Point::scaled_unit(dim, axis, 1)
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[i32] {
        &self.c[..self.dim as usize]
    }

    pub fn get(&self, i: usize) -> i32 {
        self.coords()[i]
    }

    pub fn is_zero(&self) -> bool {
        self.coords().iter().all(|&x| x == 0)
    }

    pub fn neg(&self) -> Point {
        let mut p = *self;
        for i in 0..self.dim() {
            p.c[i] = -p.c[i];
        }
        p
    }

    pub fn add(&self, other: &Point) -> Point {
        assert_eq!(self.dim, other.dim);
        let mut p = *self;
        for i in 0..self.dim() {
            p.c[i] += other.c[i];
        }
        p
    }

    pub fn sub(&self, other: &Point) -> Point {
        self.add(&other.neg())
    }

    pub fn norm1(&self) -> i64 {
        self.coords().iter().map(|&x| (x as i64).abs()).sum()
    }

    pub fn max_abs(&self) -> i32 {
        self.coords().iter().map(|&x| x.abs()).max().unwrap_or(0)
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Point({})", self)
    }
}

/// Points print as colon-joined coordinates, e.g. `0:0:1` — the format used
/// in CSV output and accepted back by [`FromStr`].
impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for x in self.coords() {
            if !first {
                write!(f, ":")?;
            }
            write!(f, "{}", x)?;
            first = false;
        }
        Ok(())
    }
}

impl FromStr for Point {
    type Err = CbrwError;

    fn from_str(s: &str) -> Result<Point> {
        let coords: std::result::Result<Vec<i32>, _> =
            s.split(':').map(|p| p.trim().parse::<i32>()).collect();
        let coords = coords.map_err(|e| CbrwError::Parse(format!("bad point `{}`: {}", s, e)))?;
        if coords.is_empty() || coords.len() > MAX_DIM {
            return Err(CbrwError::Parse(format!(
                "point `{}` must have 1..={} coordinates",
                s, MAX_DIM
            )));
        }
        Ok(Point::new(&coords))
    }
}

/// Symmetric finite-support jump-rate function on Z^d.
#[derive(Debug, Clone)]
pub struct WalkKernel {
    dim: usize,
    /// Support sorted lexicographically; rates strictly positive.
    support: Vec<(Point, f64)>,
    total_rate: f64,
    axis_aligned: bool,
}

impl WalkKernel {
    pub fn new(dim: usize, rates: &[(Point, f64)]) -> Result<WalkKernel> {
        if dim == 0 || dim > MAX_DIM {
            return Err(CbrwError::KernelInvalid(format!(
                "dimension must be in 1..={}",
                MAX_DIM
            )));
        }
        let mut support: Vec<(Point, f64)> = Vec::new();
        for &(v, r) in rates {
            if v.dim() != dim {
                return Err(CbrwError::KernelInvalid(format!(
                    "support vector {} has dimension {}, kernel has {}",
                    v,
                    v.dim(),
                    dim
                )));
            }
            if v.is_zero() {
                return Err(CbrwError::KernelInvalid("rate at the origin is implicit (−a)".into()));
            }
            if !(r.is_finite() && r >= 0.0) {
                return Err(CbrwError::KernelInvalid(format!("rate at {} must be ≥ 0", v)));
            }
            if r > 0.0 {
                support.push((v, r));
            }
        }
        support.sort_by(|a, b| a.0.cmp(&b.0));
        for w in support.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(CbrwError::KernelInvalid(format!("duplicate support vector {}", w[0].0)));
            }
        }
        if support.is_empty() {
            return Err(CbrwError::KernelInvalid("empty support".into()));
        }
        // Symmetry a(v) = a(−v).
        for &(v, r) in &support {
            let rn = support
                .binary_search_by(|probe| probe.0.cmp(&v.neg()))
                .map(|i| support[i].1)
                .unwrap_or(0.0);
            if (r - rn).abs() > 1e-12 * r.max(rn).max(1e-300) {
                return Err(CbrwError::KernelInvalid(format!(
                    "asymmetric: a({}) = {} but a({}) = {}",
                    v,
                    r,
                    v.neg(),
                    rn
                )));
            }
        }
        let total_rate: f64 = support.iter().map(|&(_, r)| r).sum();
        let axis_aligned = support
            .iter()
            .all(|(v, _)| v.coords().iter().filter(|&&x| x != 0).count() == 1);
        let kernel = WalkKernel {
            dim,
            support,
            total_rate,
            axis_aligned,
        };
        kernel.check_irreducible()?;
        Ok(kernel)
    }

    /// Breadth-first reachability on a bounded box: the support must generate
    /// Z^d as a group, which we certify by reaching every unit vector ±e_i
    /// without leaving a box a few support-diameters wide.
    fn check_irreducible(&self) -> Result<()> {
        let radius = 4 * self.max_abs_support().max(1) + 4;
        let mut seen: HashSet<Point> = HashSet::new();
        let start = Point::zero(self.dim);
        let mut frontier = vec![start];
        seen.insert(start);
        let mut targets: HashSet<Point> = HashSet::new();
        for axis in 0..self.dim {
            targets.insert(Point::unit(self.dim, axis));
            targets.insert(Point::unit(self.dim, axis).neg());
        }
        while !frontier.is_empty() && !targets.is_subset(&seen) {
            let mut next = Vec::new();
            for p in frontier {
                for &(v, _) in &self.support {
                    let q = p.add(&v);
                    if q.max_abs() <= radius && seen.insert(q) {
                        next.push(q);
                    }
                }
            }
            frontier = next;
        }
        if targets.is_subset(&seen) {
            Ok(())
        } else {
            Err(CbrwError::KernelInvalid(
                "support does not generate Z^d (walk is reducible)".into(),
            ))
        }
    }

    /// Simple nearest-neighbor kernel: rate 1/(2d) at each ±e_i, total rate 1.
    pub fn nearest_neighbor(dim: usize) -> WalkKernel {
        let r = 1.0 / (2 * dim) as f64;
        let mut rates = Vec::new();
        for axis in 0..dim {
            rates.push((Point::unit(dim, axis), r));
            rates.push((Point::unit(dim, axis).neg(), r));
        }
        WalkKernel::new(dim, &rates).expect("nearest-neighbor kernel is always valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total off-origin rate a = Σ_v a(v); the generator diagonal is −a.
    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    pub fn support(&self) -> &[(Point, f64)] {
        &self.support
    }

    pub fn rate(&self, v: &Point) -> f64 {
        self.support
            .binary_search_by(|probe| probe.0.cmp(v))
            .map(|i| self.support[i].1)
            .unwrap_or(0.0)
    }

    pub fn max_abs_support(&self) -> i32 {
        self.support.iter().map(|(v, _)| v.max_abs()).max().unwrap_or(0)
    }

    /// True when every jump moves along a single coordinate axis, in which
    /// case e^{tφ} factorizes and transition probabilities are products of
    /// one-dimensional quadratures.
    pub fn is_axis_aligned(&self) -> bool {
        self.axis_aligned
    }

    /// Offsets and rates along one axis (meaningful for axis-aligned kernels).
    pub fn axis_rates(&self, axis: usize) -> Vec<(i32, f64)> {
        assert!(axis < self.dim);
        self.support
            .iter()
            .filter(|(v, _)| {
                v.get(axis) != 0 && v.coords().iter().enumerate().all(|(i, &x)| i == axis || x == 0)
            })
            .map(|&(v, r)| (v.get(axis), r))
            .collect()
    }

    /// Parse the kernel description format: a line `d=<int>`, then one line
    /// `v1 v2 ... vd rate` per support vector.  Blank lines and `#` comments
    /// are skipped.  With `mirror` set, missing opposite vectors are filled
    /// in; otherwise asymmetric input is rejected.
    pub fn parse(text: &str, mirror: bool) -> Result<WalkKernel> {
        let mut dim: Option<usize> = None;
        let mut rates: Vec<(Point, f64)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if dim.is_none() {
                let rest = line
                    .strip_prefix("d=")
                    .or_else(|| line.strip_prefix("d ="))
                    .or_else(|| line.strip_prefix("d= "))
                    .map(str::trim)
                    .ok_or_else(|| {
                        CbrwError::Parse(format!("line {}: expected `d=<int>` first", lineno + 1))
                    })?;
                let d: usize = rest
                    .parse()
                    .map_err(|e| CbrwError::Parse(format!("line {}: {}", lineno + 1, e)))?;
                dim = Some(d);
                continue;
            }
            let d = dim.unwrap();
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != d + 1 {
                return Err(CbrwError::Parse(format!(
                    "line {}: expected {} coordinates and a rate",
                    lineno + 1,
                    d
                )));
            }
            let coords: std::result::Result<Vec<i32>, _> =
                fields[..d].iter().map(|f| f.parse::<i32>()).collect();
            let coords =
                coords.map_err(|e| CbrwError::Parse(format!("line {}: {}", lineno + 1, e)))?;
            let rate: f64 = fields[d]
                .parse()
                .map_err(|e| CbrwError::Parse(format!("line {}: {}", lineno + 1, e)))?;
            rates.push((Point::new(&coords), rate));
        }
        let dim = dim.ok_or_else(|| CbrwError::Parse("missing `d=<int>` line".into()))?;
        if mirror {
            let mut mirrored = rates.clone();
            for &(v, r) in &rates {
                if !rates.iter().any(|&(w, _)| w == v.neg()) {
                    mirrored.push((v.neg(), r));
                }
            }
            rates = mirrored;
        }
        WalkKernel::new(dim, &rates)
    }

    pub fn from_file(path: &std::path::Path, mirror: bool) -> Result<WalkKernel> {
        let text = std::fs::read_to_string(path)?;
        WalkKernel::parse(&text, mirror)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_display_round_trip() {
        let p = Point::new(&[0, -3, 7]);
        assert_eq!(p.to_string(), "0:-3:7");
        let q: Point = "0:-3:7".parse().unwrap();
        assert_eq!(p, q);
        assert_eq!(p.sub(&q), Point::zero(3));
        assert_eq!(p.norm1(), 10);
    }

    #[test]
    fn nearest_neighbor_kernel() {
        let k = WalkKernel::nearest_neighbor(3);
        assert_eq!(k.dim(), 3);
        assert!((k.total_rate() - 1.0).abs() < 1e-15);
        assert_eq!(k.support().len(), 6);
        assert!(k.is_axis_aligned());
        assert_eq!(k.axis_rates(1), vec![(-1, 1.0 / 6.0), (1, 1.0 / 6.0)]);
        assert!((k.rate(&Point::unit(3, 0)) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(k.rate(&Point::new(&[1, 1, 0])), 0.0);
    }

    #[test]
    fn rejects_asymmetric_and_reducible() {
        let d1 = |x: i32| Point::new(&[x]);
        assert!(WalkKernel::new(1, &[(d1(1), 0.5), (d1(-1), 0.4)]).is_err());
        // ±2 steps only: generates 2Z, not Z.
        assert!(WalkKernel::new(1, &[(d1(2), 0.5), (d1(-2), 0.5)]).is_err());
        // ±1 and ±2 is fine.
        assert!(WalkKernel::new(1, &[(d1(1), 0.3), (d1(-1), 0.3), (d1(2), 0.2), (d1(-2), 0.2)]).is_ok());
    }

    #[test]
    fn parse_and_mirror() {
        let text = "# two-dimensional kernel\nd=2\n1 0 0.25\n-1 0 0.25\n0 1 0.25\n0 -1 0.25\n";
        let k = WalkKernel::parse(text, false).unwrap();
        assert_eq!(k.dim(), 2);
        assert!((k.total_rate() - 1.0).abs() < 1e-15);

        // mirror completes the missing halves
        let half = "d=2\n1 0 0.25\n0 1 0.25\n";
        let k2 = WalkKernel::parse(half, true).unwrap();
        assert_eq!(k2.support().len(), 4);
        // without mirroring the same text is rejected
        assert!(WalkKernel::parse(half, false).is_err());
    }

    #[test]
    fn diagonal_kernel_is_not_axis_aligned() {
        let k = WalkKernel::new(
            2,
            &[
                (Point::new(&[1, 1]), 0.25),
                (Point::new(&[-1, -1]), 0.25),
                (Point::new(&[1, 0]), 0.25),
                (Point::new(&[-1, 0]), 0.25),
            ],
        )
        .unwrap();
        assert!(!k.is_axis_aligned());
    }
}
