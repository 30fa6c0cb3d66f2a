//! Counter-based random numbers for reproducible, order-independent
//! simulation.
//!
//! Each replica owns a stream derived from (master seed, replica index); the
//! i-th draw of a stream is a pure function of (base, i), so replicas can be
//! scheduled on any thread in any order and still produce bit-identical
//! results.  Derived substreams (keyed by an event tag) let late consumers —
//! e.g. a lineage resolved only when a query fires — draw randomness that
//! does not depend on how much the parent stream has already consumed.
//!
//! The generator is the splitmix64 finalizer over a Weyl sequence, which
//! passes standard statistical batteries and needs no state beyond two u64s.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer: a bijective avalanche on u64.
#[inline]
fn mix(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z
}

/// A stateless-in-spirit stream: draw i is mix(base + i·GOLDEN).
#[derive(Debug, Clone)]
pub struct CounterRng {
    base: u64,
    counter: u64,
}

impl CounterRng {
    /// Stream for one replica of one experiment.
    pub fn new(master_seed: u64, replica: u64) -> CounterRng {
        CounterRng {
            base: mix(master_seed ^ replica.wrapping_mul(GOLDEN)),
            counter: 0,
        }
    }

    /// A child stream keyed by `tag`, independent of how many draws the
    /// parent has made (it depends on the parent's base only).
    pub fn substream(&self, tag: u64) -> CounterRng {
        CounterRng {
            base: mix(self.base ^ mix(tag.wrapping_mul(GOLDEN) ^ 0x5851_F42D_4C95_7F2D)),
            counter: 0,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.base.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform on [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Exp(rate) via inversion; uses 1−u so the result is strictly positive.
    #[inline]
    pub fn exp(&mut self, rate: f64) -> f64 {
        debug_assert!(rate > 0.0);
        -(1.0 - self.uniform()).ln() / rate
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer in [0, n) by 128-bit multiply (Lemire reduction; the
    /// modulo bias is < n/2⁶⁴, far below anything observable here).
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }
}

/// Walker/Vose alias table: O(1) sampling from a fixed discrete law.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    pub fn new(weights: &[f64]) -> AliasTable {
        assert!(!weights.is_empty(), "alias table needs at least one weight");
        assert!(
            weights.iter().all(|&w| w >= 0.0 && w.is_finite()),
            "weights must be finite and ≥ 0"
        );
        let total: f64 = weights.iter().sum();
        assert!(total > 0.0, "weights must not all vanish");
        let n = weights.len();
        let mut scaled: Vec<f64> = weights.iter().map(|&w| w * n as f64 / total).collect();
        let mut prob = vec![1.0; n];
        let mut alias: Vec<usize> = (0..n).collect();
        let mut small: Vec<usize> = (0..n).filter(|&i| scaled[i] < 1.0).collect();
        let mut large: Vec<usize> = (0..n).filter(|&i| scaled[i] >= 1.0).collect();
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding
        AliasTable { prob, alias }
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    #[inline]
    pub fn sample(&self, rng: &mut CounterRng) -> usize {
        let i = rng.below(self.prob.len() as u64) as usize;
        if rng.uniform() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_replica_independent() {
        let mut a = CounterRng::new(42, 0);
        let mut b = CounterRng::new(42, 0);
        let seq_a: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let seq_b: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_eq!(seq_a, seq_b);
        let mut c = CounterRng::new(42, 1);
        assert!((0..8).map(|_| c.next_u64()).ne(seq_a.into_iter()));
    }

    #[test]
    fn substreams_ignore_parent_consumption() {
        let mut parent = CounterRng::new(7, 3);
        let before: Vec<u64> = {
            let mut s = parent.substream(99);
            (0..4).map(|_| s.next_u64()).collect()
        };
        for _ in 0..1000 {
            parent.next_u64();
        }
        let after: Vec<u64> = {
            let mut s = parent.substream(99);
            (0..4).map(|_| s.next_u64()).collect()
        };
        assert_eq!(before, after);
        let other: Vec<u64> = {
            let mut s = parent.substream(100);
            (0..4).map(|_| s.next_u64()).collect()
        };
        assert_ne!(before, other);
    }

    #[test]
    fn uniform_and_exponential_moments() {
        let mut rng = CounterRng::new(2024, 5);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut esum = 0.0;
        for _ in 0..n {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
            sum += u;
            sum_sq += u * u;
            esum += rng.exp(2.0);
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!((mean - 0.5).abs() < 0.003, "uniform mean {}", mean);
        assert!((var - 1.0 / 12.0).abs() < 0.003, "uniform var {}", var);
        assert!((esum / n as f64 - 0.5).abs() < 0.005, "exp mean {}", esum / n as f64);
    }

    #[test]
    fn below_is_in_range_and_roughly_uniform() {
        let mut rng = CounterRng::new(1, 1);
        let mut counts = [0u32; 7];
        for _ in 0..70_000 {
            counts[rng.below(7) as usize] += 1;
        }
        for &c in &counts {
            assert!((c as f64 - 10_000.0).abs() < 400.0, "counts {:?}", counts);
        }
    }

    #[test]
    fn alias_table_reproduces_weights() {
        let weights = [0.5, 0.125, 0.25, 0.125];
        let table = AliasTable::new(&weights);
        let mut rng = CounterRng::new(77, 0);
        let n = 400_000;
        let mut counts = [0u32; 4];
        for _ in 0..n {
            counts[table.sample(&mut rng)] += 1;
        }
        for (i, &w) in weights.iter().enumerate() {
            let freq = counts[i] as f64 / n as f64;
            assert!((freq - w / 1.0).abs() < 0.004, "weight {} freq {}", w, freq);
        }
        // single-outcome table
        let one = AliasTable::new(&[3.0]);
        assert_eq!(one.sample(&mut rng), 0);
    }
}
