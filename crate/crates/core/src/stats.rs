//! Deterministic reductions and straight-line fits.

/// Sum with a fixed binary tree whose shape depends only on `values.len()`,
/// so the result is bitwise reproducible regardless of how the values were
/// produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 8;
    if values.len() <= LEAF {
        return values.iter().fold(0.0, |acc, &v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean and standard error (sample standard deviation over `√len`).
/// The standard error of a single value is 0.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let len = values.len();
    assert!(len > 0, "mean of empty sample");
    let mean = pairwise_sum(values) / len as f64;
    if len == 1 {
        return (mean, 0.0);
    }
    let squares: Vec<f64> = values.iter().map(|&v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&squares) / (len - 1) as f64;
    (mean, (var / len as f64).sqrt())
}

/// Median; averages the two middle values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty sample");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// Weighted residual sum of squares (plain RSS for unweighted fits).
    pub chi2: f64,
}

/// Ordinary least squares; the slope error is estimated from residuals.
pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let w = vec![1.0; x.len()];
    let fit = weighted_core(x, y, &w);
    let dof = x.len().saturating_sub(2);
    let scale = if dof > 0 { fit.chi2 / dof as f64 } else { 0.0 };
    LineFit { slope_stderr: (fit.slope_var * scale).sqrt(), ..fit.line() }
}

/// Weighted least squares with weights `1/σ²`. The slope variance is the
/// analytic `(Σw)/(ΣwΣwx² − (Σwx)²)`, inflated by the reduced χ² when that
/// exceeds one (model misfit).
pub fn fit_line_weighted(x: &[f64], y: &[f64], w: &[f64]) -> LineFit {
    let fit = weighted_core(x, y, w);
    let dof = x.len().saturating_sub(2);
    let reduced = if dof > 0 { fit.chi2 / dof as f64 } else { 0.0 };
    LineFit { slope_stderr: (fit.slope_var * reduced.max(1.0)).sqrt(), ..fit.line() }
}

struct Core {
    slope: f64,
    intercept: f64,
    slope_var: f64,
    chi2: f64,
}

impl Core {
    fn line(&self) -> LineFit {
        LineFit { slope: self.slope, intercept: self.intercept, slope_stderr: 0.0, chi2: self.chi2 }
    }
}

fn weighted_core(x: &[f64], y: &[f64], w: &[f64]) -> Core {
    assert!(x.len() == y.len() && x.len() == w.len() && x.len() >= 2);
    let sw: f64 = w.iter().sum();
    let xm = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for ((&xi, &yi), &wi) in x.iter().zip(y).zip(w) {
        sxx += wi * (xi - xm) * (xi - xm);
        sxy += wi * (xi - xm) * (yi - ym);
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let chi2 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((&xi, &yi), &wi)| {
            let r = yi - intercept - slope * xi;
            wi * r * r
        })
        .sum();
    Core { slope, intercept, slope_var: 1.0 / sxx, chi2 }
}
