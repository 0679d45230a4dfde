//! Compensated (Kahan) summation.

/// Kahan accumulator. Word sums run per lexicographic chunk with one of
/// these; chunk partials merge in chunk order, so totals do not depend on
/// the worker count.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let y = value - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    /// Folds another accumulator in, compensation first.
    #[inline]
    pub fn merge(&mut self, other: Kahan) {
        self.add(-other.comp);
        self.add(other.sum);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensates_small_terms() {
        let mut k = Kahan::new();
        k.add(1.0);
        for _ in 0..10_000_000 {
            k.add(1e-16);
        }
        let expected = 1.0 + 1e-16 * 1e7;
        assert!((k.value() - expected).abs() < 1e-12);
        // Naive summation loses all of the small terms.
        let mut naive = 1.0f64;
        for _ in 0..100 {
            naive += 1e-16;
        }
        assert_eq!(naive, 1.0);
    }

    #[test]
    fn merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 1e-3).collect();
        let mut whole = Kahan::new();
        for &x in &xs {
            whole.add(x);
        }
        let mut left = Kahan::new();
        let mut right = Kahan::new();
        for &x in &xs[..500] {
            left.add(x);
        }
        for &x in &xs[500..] {
            right.add(x);
        }
        left.merge(right);
        assert!((left.value() - whole.value()).abs() < 1e-12);
    }
}
