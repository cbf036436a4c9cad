//! Least-squares line fits and deterministic numeric formatting for reports.

#[derive(Clone, Copy, Debug)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares fit y = slope * x + intercept.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two points");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LinearFit {
        slope,
        intercept,
        r_squared,
    }
}

/// Slope of log(y) against log2(x); the usual way scaling exponents are read
/// off a dyadic parameter sweep. Returns the fit in log2-log units so the
/// slope is directly the exponent of 2.
pub fn log2_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let lx: Vec<f64> = xs.iter().map(|x| x.log2()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.log2()).collect();
    linear_fit(&lx, &ly)
}

/// Format a float with 15 significant digits, deterministically.
pub fn fmt15(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    format!("{:.*e}", 14, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| -2.5 * x + 0.75).collect();
        let fit = linear_fit(&xs, &ys);
        assert!((fit.slope + 2.5).abs() < 1e-13);
        assert!((fit.intercept - 0.75).abs() < 1e-13);
        assert!((fit.r_squared - 1.0).abs() < 1e-13);
    }

    #[test]
    fn log2_fit_reads_power_law() {
        let xs = [4.0f64, 8.0, 16.0, 32.0];
        let ys: Vec<f64> = xs.iter().map(|&x| 3.0 / x).collect();
        let fit = log2_fit(&xs, &ys);
        assert!((fit.slope + 1.0).abs() < 1e-12);
    }

    #[test]
    fn formatting_is_stable() {
        assert_eq!(fmt15(0.0), "0");
        assert_eq!(fmt15(1.0), "1.00000000000000e0");
        assert_eq!(fmt15(-0.5), "-5.00000000000000e-1");
    }
}
