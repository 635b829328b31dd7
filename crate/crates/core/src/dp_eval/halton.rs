//! Halton low-discrepancy sequences.

/// Radical-inverse of `index` in the given base; index starts at 1.
pub fn halton(index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    let b = base as f64;
    while i > 0 {
        f /= b;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_two_prefix() {
        let seq: Vec<f64> = (1..=4).map(|i| halton(i, 2)).collect();
        assert_eq!(seq, vec![0.5, 0.25, 0.75, 0.125]);
    }

    #[test]
    fn base_three_prefix() {
        let seq: Vec<f64> = (1..=3).map(|i| halton(i, 3)).collect();
        assert!((seq[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((seq[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((seq[2] - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn values_in_unit_interval() {
        for base in [2, 3, 5, 7] {
            for i in 1..200 {
                let v = halton(i, base);
                assert!((0.0..1.0).contains(&v));
            }
        }
    }
}
