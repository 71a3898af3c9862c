//! Compensated accumulation (Neumaier's variant of Kahan summation).

/// Running sum with protection against catastrophic cancellation.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    s: f64,
    c: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.s + self.c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cancellation_rescue() {
        let mut acc = NeumaierSum::new();
        acc.add(1.0);
        acc.add(1e100);
        acc.add(1.0);
        acc.add(-1e100);
        assert_eq!(acc.total(), 2.0);
    }

    #[test]
    fn many_small_terms() {
        let mut acc = NeumaierSum::new();
        for _ in 0..10_000_000 {
            acc.add(0.1);
        }
        assert!((acc.total() - 1e6).abs() < 1e-7);
    }
}
