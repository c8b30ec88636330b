//! Small descriptive statistics shared by the patch and superpixel features.

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Median of sorted values; the lower middle element for even counts.
pub fn median_sorted(sorted: &[f64]) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    sorted[(sorted.len() - 1) / 2]
}

/// Nearest-rank percentile of sorted values: the ceil(p·n/100)-th order
/// statistic (1-based), with p in whole percent.
pub fn percentile_nearest_rank(sorted: &[f64], percent: u32) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let n = sorted.len();
    let rank = (percent as usize * n).div_ceil(100).max(1);
    sorted[rank.min(n) - 1]
}

/// Mean, population std, skewness and non-excess kurtosis. Skewness and
/// kurtosis are 0 when the std is 0.
pub fn moments(values: &[f64]) -> [f64; 4] {
    if values.is_empty() {
        return [0.0; 4];
    }
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in values {
        let d = v - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let sd = m2.sqrt();
    // Relative cutoff so round-off on constant inputs reads as zero spread.
    if sd <= 1e-12 * m.abs().max(1.0) {
        return [m, 0.0, 0.0, 0.0];
    }
    [m, sd, m3 / (sd * sd * sd), m4 / (m2 * m2)]
}

/// Mean, lower median and population std.
pub fn mean_median_std(values: &[f64]) -> [f64; 3] {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    [mean(values), median_sorted(&sorted), std_dev(values)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_takes_lower_middle() {
        assert_eq!(median_sorted(&[1.0, 2.0, 3.0, 4.0]), 2.0);
        assert_eq!(median_sorted(&[1.0, 2.0, 3.0]), 2.0);
    }

    #[test]
    fn nearest_rank_on_four_values() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile_nearest_rank(&v, 20), 1.0);
        assert_eq!(percentile_nearest_rank(&v, 30), 2.0);
        assert_eq!(percentile_nearest_rank(&v, 50), 2.0);
        assert_eq!(percentile_nearest_rank(&v, 90), 4.0);
    }

    #[test]
    fn nearest_rank_avoids_float_ceil_error() {
        // 0.7 * 10 is 7.000000000000001 in floating point
        let v: Vec<f64> = (1..=10).map(|x| x as f64).collect();
        assert_eq!(percentile_nearest_rank(&v, 70), 7.0);
    }

    #[test]
    fn constant_has_zero_higher_moments() {
        assert_eq!(moments(&[0.3; 7]), [0.3, 0.0, 0.0, 0.0]);
    }
}
