//! Small descriptive statistics used by the Monte Carlo studies.

/// Mean and standard error of the mean (sample variance, `n - 1`).
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Batch-means estimate for a correlated series: mean and standard error
/// from `batches` contiguous block averages.
pub fn batch_means(xs: &[f64], batches: usize) -> (f64, f64) {
    let batches = batches.max(2).min(xs.len().max(2));
    let len = xs.len() / batches;
    if len == 0 {
        return mean_and_stderr(xs);
    }
    let blocks: Vec<f64> = (0..batches)
        .map(|b| xs[b * len..(b + 1) * len].iter().sum::<f64>() / len as f64)
        .collect();
    mean_and_stderr(&blocks)
}

/// Ordinary least squares `y = a + b x`; returns `(b, stderr(b))`.
pub fn linear_fit_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    if x.len() <= 2 {
        return (slope, f64::NAN);
    }
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    (slope, (rss / (n - 2.0) / sxx).sqrt())
}
