//! Small-sample statistics for aggregating runs: Student-t quantiles,
//! per-grid-point confidence intervals over latency series, and scalar
//! mean/interval summaries.

use crate::{CliError, Result};

/// Spacing of the common resampling grid, in seconds.
pub const GRID_STEP_S: f64 = 0.1;

// ===========================================================================
// Student-t quantile
// ===========================================================================

/// ln Γ(x) via the Lanczos approximation (g = 7, 9 terms).
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula keeps the series argument above 0.5.
        let pi = std::f64::consts::PI;
        (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = COEF[0];
        for (i, c) in COEF.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + 7.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

/// Continued fraction for the incomplete beta (modified Lentz iteration).
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
fn betai(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * betacf(a, b, x) / a
    } else {
        1.0 - front * betacf(b, a, 1.0 - x) / b
    }
}

/// Quantile of Student's t distribution: the value q with P(T <= q) = p.
///
/// Inverts I_x(df/2, 1/2) = 2(1 - p) with x = df / (df + q^2), by bisection
/// refined to machine precision.
pub fn t_quantile(p: f64, df: u64) -> Result<f64> {
    if df == 0 {
        return Err(CliError::Other("t quantile requires at least 1 degree of freedom".into()));
    }
    if !(0.5..1.0).contains(&p) {
        return Err(CliError::Other(format!(
            "t quantile probability {p} must lie in [0.5, 1)"
        )));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let nu = df as f64;
    let target = 2.0 * (1.0 - p);
    // betai(nu/2, 1/2, x) is increasing in x; bisect on x in (0, 1).
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if betai(nu / 2.0, 0.5, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-17 {
            break;
        }
    }
    let x = 0.5 * (lo + hi);
    Ok((nu * (1.0 - x) / x).sqrt())
}

// ===========================================================================
// Aggregation over runs
// ===========================================================================

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregatePoint {
    pub t_s: f64,
    pub mean: f64,
    /// Absent when only one run was aggregated: a single sample has no
    /// interval.
    pub ci_half: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSeries {
    pub level: f64,
    pub run_count: usize,
    pub points: Vec<AggregatePoint>,
}

/// Last value at or before `t`; the first value when `t` precedes the series.
fn sample_lvcf(series: &[(f64, f64)], t: f64) -> f64 {
    let idx = series.partition_point(|(time, _)| *time <= t + 1e-12);
    if idx == 0 {
        series[0].1
    } else {
        series[idx - 1].1
    }
}

/// Mean and Student-t confidence half-width of `values` at `level`.
pub fn mean_ci(values: &[f64], level: f64) -> Result<(f64, Option<f64>)> {
    if values.is_empty() {
        return Err(CliError::Other("cannot aggregate zero values".into()));
    }
    if !(0.0..1.0).contains(&level) {
        return Err(CliError::Other(format!(
            "confidence level {level} must lie in [0, 1)"
        )));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok((mean, None));
    }
    if level == 0.0 {
        return Ok((mean, Some(0.0)));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = t_quantile(0.5 * (1.0 + level), (n - 1) as u64)?;
    Ok((mean, Some(t * (var / n as f64).sqrt())))
}

/// Aggregate several time series onto the common 0.1 s grid: per grid point,
/// the mean and Student-t interval across runs, each run resampled by
/// last-value-carried-forward.
pub fn aggregate_ci(runs: &[Vec<(f64, f64)>], level: f64) -> Result<AggregateSeries> {
    if runs.is_empty() {
        return Err(CliError::Other("cannot aggregate zero runs".into()));
    }
    if runs.iter().any(|r| r.is_empty()) {
        return Err(CliError::Other("cannot aggregate an empty series".into()));
    }
    if !(0.0..1.0).contains(&level) {
        return Err(CliError::Other(format!(
            "confidence level {level} must lie in [0, 1)"
        )));
    }
    let end = runs
        .iter()
        .map(|r| r.last().expect("non-empty").0)
        .fold(f64::NEG_INFINITY, f64::max);
    let steps = (end / GRID_STEP_S).floor() as u64;
    let mut points = Vec::with_capacity(steps as usize + 1);
    let mut values = vec![0.0f64; runs.len()];
    for k in 0..=steps {
        let t = k as f64 / 10.0;
        for (slot, run) in values.iter_mut().zip(runs) {
            *slot = sample_lvcf(run, t);
        }
        let (mean, ci_half) = mean_ci(&values, level)?;
        points.push(AggregatePoint { t_s: t, mean, ci_half });
    }
    Ok(AggregateSeries {
        level,
        run_count: runs.len(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Student-t density for the quadrature oracle.
    fn t_pdf(x: f64, nu: f64) -> f64 {
        let ln_c = ln_gamma((nu + 1.0) / 2.0)
            - ln_gamma(nu / 2.0)
            - 0.5 * (nu * std::f64::consts::PI).ln();
        (ln_c - 0.5 * (nu + 1.0) * (1.0 + x * x / nu).ln()).exp()
    }

    /// P(T <= q) by Simpson quadrature over [0, q], independent of the
    /// incomplete-beta path used by `t_quantile`.
    fn t_cdf_quadrature(q: f64, nu: f64) -> f64 {
        assert!(q >= 0.0);
        let n = 40_000usize; // even
        let h = q / n as f64;
        let mut acc = t_pdf(0.0, nu) + t_pdf(q, nu);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * t_pdf(i as f64 * h, nu);
        }
        0.5 + acc * h / 3.0
    }

    #[test]
    fn frozen_table_value() {
        // Classic two-sided 90% quantile at 4 degrees of freedom.
        let q = t_quantile(0.95, 4).unwrap();
        assert!((q - 2.131_846_786_326_65).abs() < 1e-10, "{q}");
    }

    #[test]
    fn quantile_inverts_the_quadrature_cdf() {
        for &df in &[1u64, 2, 4, 9, 29, 120] {
            for &p in &[0.75, 0.9, 0.95, 0.975, 0.995] {
                let q = t_quantile(p, df).unwrap();
                let cdf = t_cdf_quadrature(q, df as f64);
                assert!(
                    (cdf - p).abs() < 1e-9,
                    "df={df} p={p}: quantile {q} has cdf {cdf}"
                );
            }
        }
    }

    #[test]
    fn quantile_edge_cases() {
        assert_eq!(t_quantile(0.5, 7).unwrap(), 0.0);
        assert!(t_quantile(0.95, 0).is_err());
        assert!(t_quantile(1.0, 5).is_err());
        assert!(t_quantile(0.2, 5).is_err());
        // More degrees of freedom pull the quantile towards the normal one.
        let wide = t_quantile(0.975, 2).unwrap();
        let narrow = t_quantile(0.975, 200).unwrap();
        assert!(wide > narrow);
        assert!((narrow - 1.96).abs() < 0.02, "{narrow}");
    }

    #[test]
    fn hand_computed_interval() {
        // Five values 1..5 at 90%: mean 3, s = sqrt(2.5),
        // half-width = t(0.95, 4) * s / sqrt(5).
        let (mean, half) = mean_ci(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.90).unwrap();
        assert_eq!(mean, 3.0);
        let expected = t_quantile(0.95, 4).unwrap() * 2.5f64.sqrt() / 5.0f64.sqrt();
        assert!((half.unwrap() - expected).abs() < 1e-12);
        assert!((half.unwrap() - 1.507_443_319_062_322).abs() < 1e-9);
    }

    #[test]
    fn degenerate_aggregations() {
        // Identical series: zero half-width everywhere.
        let series = vec![(0.0, 1.0), (0.5, 2.0)];
        let runs = vec![series.clone(), series.clone(), series];
        let agg = aggregate_ci(&runs, 0.9).unwrap();
        assert!(agg.points.iter().all(|p| p.ci_half == Some(0.0)));

        // Single run: mean present, interval absent.
        let one = aggregate_ci(&runs[..1], 0.9).unwrap();
        assert!(one.points.iter().all(|p| p.ci_half.is_none()));
        assert!(one.points.iter().all(|p| p.mean > 0.0));

        // Level zero: half-width zero by definition.
        let zero = aggregate_ci(&runs, 0.0).unwrap();
        assert!(zero.points.iter().all(|p| p.ci_half == Some(0.0)));

        assert!(aggregate_ci(&[], 0.9).is_err());
        assert!(aggregate_ci(&runs, 1.0).is_err());
    }

    #[test]
    fn lvcf_resamples_unaligned_series() {
        let a = vec![(0.0, 1.0), (0.25, 2.0), (1.0, 3.0)];
        let b = vec![(0.0, 5.0), (0.31, 7.0), (0.9, 9.0)];
        let agg = aggregate_ci(&[a, b], 0.0).unwrap();
        // Grid 0.0 .. 1.0 in 0.1 steps.
        assert_eq!(agg.points.len(), 11);
        let at = |t: f64| {
            agg.points
                .iter()
                .find(|p| (p.t_s - t).abs() < 1e-12)
                .unwrap()
                .mean
        };
        assert_eq!(at(0.0), 3.0); // (1 + 5) / 2
        assert_eq!(at(0.2), 3.0); // 0.25 and 0.31 both lie ahead; first values carry
        assert_eq!(at(0.3), 3.5); // (2, 5 carried)
        assert_eq!(at(0.4), 4.5); // (2, 7)
        assert_eq!(at(1.0), 6.0); // (3, 9)
    }

    #[test]
    fn grid_points_sit_on_exact_tenths() {
        let runs = vec![vec![(0.0, 1.0), (2.0, 1.0)]];
        let agg = aggregate_ci(&runs, 0.0).unwrap();
        for (k, p) in agg.points.iter().enumerate() {
            assert_eq!(p.t_s, k as f64 / 10.0);
        }
    }
}
