//! Small shared helpers.

/// Formats a float with 17 significant digits, the documented on-disk
/// representation for CSV artifacts. Round-trips through `str::parse`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Evenly spaced grid over `[lo, hi]`; a single point collapses to the
/// midpoint.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![0.5 * (lo + hi)];
    }
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| lo + step * i as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for &x in &[0.0, 1.0, -1.5, 3.141592653589793, 1e-300, -2.2250738585072014e-308, 6.02e23] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn linspace_endpoints() {
        let g = linspace(-1.0, 1.0, 5);
        assert_eq!(g, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(linspace(2.0, 4.0, 1), vec![3.0]);
    }
}
