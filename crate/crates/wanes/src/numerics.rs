//! Small numerical helpers shared across modules.

/// Complementary error function, rational Chebyshev fit (fractional error
/// below 1.2e-7 everywhere, which is plenty for the moment formulas that
/// use it).
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t * (-z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807
                            + t * (-1.13520398
                                + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Hurwitz zeta `sum_{k>=0} (a+k)^{-s}` for `s > 1`, `a > 0`, by
/// Euler-Maclaurin with enough correction terms for ~1e-12 relative error.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    assert!(s > 1.0 && a > 0.0);
    let n = 24usize;
    let mut sum = 0.0;
    for k in 0..n {
        sum += (a + k as f64).powf(-s);
    }
    let an = a + n as f64;
    sum += an.powf(1.0 - s) / (s - 1.0);
    sum += 0.5 * an.powf(-s);
    // Bernoulli correction terms B2, B4, B6, B8.
    let bern = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0];
    let mut fact = s;
    let mut pow = an.powf(-s - 1.0);
    for (j, b) in bern.iter().enumerate() {
        sum += b / factorial(2 * (j + 1)) as f64 * fact * pow;
        // Extend the falling product s(s+1)...(s+2j+1) by two and shift the
        // power accordingly.
        fact *= (s + (2 * j + 1) as f64) * (s + (2 * j + 2) as f64);
        pow /= an * an;
    }
    sum
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product::<u64>().max(1)
}

/// Wilson 95% score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    assert!(trials > 0);
    let z = 1.959963984540054_f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Least-squares slope of y against x.
pub fn regression_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx: f64 = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my: f64 = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erfc_reference_values() {
        assert!((erfc(0.0) - 1.0).abs() < 1e-6);
        assert!((erfc(1.0) - 0.157_299_207_050_285).abs() < 1e-6);
        assert!((erfc(-1.0) - 1.842_700_792_949_715).abs() < 1e-6);
    }

    #[test]
    fn hurwitz_zeta_matches_riemann() {
        // zeta(2) = pi^2/6, zeta(1.5) = 2.612375348685488...
        let z2 = hurwitz_zeta(2.0, 1.0);
        assert!((z2 - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-10);
        let z15 = hurwitz_zeta(1.5, 1.0);
        assert!((z15 - 2.612_375_348_685_488).abs() < 1e-9);
        // Tail identity: zeta(s, a+1) = zeta(s, a) - a^{-s}.
        let a = 3.7;
        let s = 1.6;
        assert!((hurwitz_zeta(s, a + 1.0) - (hurwitz_zeta(s, a) - a.powf(-s))).abs() < 1e-10);
    }

    #[test]
    fn hurwitz_zeta_matches_direct_sum() {
        let s = 1.5;
        let a = 2.0;
        let direct: f64 = (0..4_000_000).map(|k| (a + k as f64).powf(-s)).sum::<f64>()
            + (a + 4_000_000.0).powf(1.0 - s) / (s - 1.0);
        assert!((hurwitz_zeta(s, a) - direct).abs() / direct < 1e-8);
    }

    #[test]
    fn wilson_interval_brackets_point_estimate() {
        let (lo, hi) = wilson_interval(90, 100);
        assert!(lo < 0.9 && 0.9 < hi);
        assert!(lo > 0.8 && hi < 0.96);
    }

    #[test]
    fn regression_slope_recovers_line() {
        let pts: Vec<(f64, f64)> = (1..50).map(|i| (i as f64, 3.0 - 0.25 * i as f64)).collect();
        assert!((regression_slope(&pts) + 0.25).abs() < 1e-12);
    }
}
