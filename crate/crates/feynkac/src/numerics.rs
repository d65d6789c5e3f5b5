//! Small numeric helpers shared across modules.

/// Neumaier compensated sum.
///
/// Path-space sums accumulate many same-sign terms of widely varying
/// magnitude; plain summation loses low-order bits that the exact-comparison
/// tests (absolute tolerance 1e-12) need.
pub fn ksum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut acc = NeumaierAcc::new();
    for t in terms {
        acc.add(t);
    }
    acc.value()
}

/// Incremental Neumaier accumulator for sums built across many call sites,
/// where a single-pass [`ksum`] does not fit.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierAcc {
    sum: f64,
    comp: f64,
}

impl NeumaierAcc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, t: f64) {
        let next = self.sum + t;
        if self.sum.abs() >= t.abs() {
            self.comp += (self.sum - next) + t;
        } else {
            self.comp += (t - next) + self.sum;
        }
        self.sum = next;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::ksum;

    #[test]
    fn matches_plain_sum_on_small_inputs() {
        assert_eq!(ksum([1.0, 2.0, 3.0]), 6.0);
    }

    #[test]
    fn keeps_low_order_mass() {
        // Adding 2^-60 to 1.0 a million times: plain summation drops every
        // increment, compensation recovers them.
        let tiny = (2.0f64).powi(-60);
        let terms = std::iter::once(1.0).chain(std::iter::repeat_n(tiny, 1 << 20));
        let s = ksum(terms);
        let expected = 1.0 + tiny * (1 << 20) as f64;
        assert!((s - expected).abs() < 1e-30, "ksum lost compensation mass");
    }
}
