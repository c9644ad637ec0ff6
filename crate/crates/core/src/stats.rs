//! Paired significance testing and multiple-comparison correction.

use statrs::function::beta::beta_reg;

use crate::error::StatsError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    /// Two-sided.
    pub p: f64,
    /// One-sided for the alternative mean(a - b) > 0.
    pub p_greater: f64,
    pub df: usize,
    pub mean_diff: f64,
    /// Differences had zero variance: all zero gives `t = 0, p = 1`,
    /// otherwise `t = ±inf, p = 0`.
    pub degenerate: bool,
}

/// Two-sided p-value of Student's t with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Paired t-test on `a[i] - b[i]`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples(n));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    if var == 0.0 {
        let (t, p) = if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean), 0.0)
        };
        let p_greater = if mean > 0.0 {
            0.0
        } else if mean < 0.0 {
            1.0
        } else {
            0.5
        };
        return Ok(TTest {
            t,
            p,
            p_greater,
            df,
            mean_diff: mean,
            degenerate: true,
        });
    }
    let t = mean / (var / n as f64).sqrt();
    let p = t_two_sided_p(t, df as f64);
    let p_greater = if t > 0.0 { p / 2.0 } else { 1.0 - p / 2.0 };
    Ok(TTest {
        t,
        p,
        p_greater,
        df,
        mean_diff: mean,
        degenerate: false,
    })
}

fn check_p(p: &[f64]) -> Result<(), StatsError> {
    match p.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(i) => Err(StatsError::PValueOutOfRange(i)),
        None => Ok(()),
    }
}

/// Holm step-down adjusted p-values, in input order.
pub fn holm_correction(p: &[f64]) -> Result<Vec<f64>, StatsError> {
    check_p(p)?;
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p[i].total_cmp(&p[j]).then(i.cmp(&j)));
    let mut out = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &i) in order.iter().enumerate() {
        running = running.max(((m - rank) as f64 * p[i]).min(1.0));
        out[i] = running;
    }
    Ok(out)
}

/// Bonferroni adjusted p-values, in input order.
pub fn bonferroni_correction(p: &[f64]) -> Result<Vec<f64>, StatsError> {
    check_p(p)?;
    let m = p.len() as f64;
    Ok(p.iter().map(|v| (v * m).min(1.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300) || (a - b).abs() <= 1e-15
    }

    /// Two-sided p by composite Simpson integration of the t density
    /// over [0, |t|].
    fn p_by_quadrature(t: f64, df: f64) -> f64 {
        let ln_c = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
        let pdf = |x: f64| (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
        let n = 20_000;
        let h = t.abs() / n as f64;
        let mut s = pdf(0.0) + pdf(t.abs());
        for i in 1..n {
            s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        1.0 - 2.0 * s * h / 3.0
    }

    /// Stirling series with upward shift; adequate for test tolerances.
    fn ln_gamma(x: f64) -> f64 {
        let mut x = x;
        let mut acc = 0.0;
        while x < 10.0 {
            acc -= x.ln();
            x += 1.0;
        }
        acc + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
            - 1.0 / (360.0 * x.powi(3))
            + 1.0 / (1260.0 * x.powi(5))
    }

    #[test]
    fn reference_paired_example() {
        let a = [2.1, 1.9, 2.3, 2.5, 1.8];
        let b = [1.5, 1.4, 1.9, 2.0, 1.3];
        let r = paired_t_test(&a, &b).unwrap();
        assert_eq!(r.df, 4);
        assert!(close(r.t, 15.811388300841884, 1e-8), "{}", r.t);
        assert!(close(r.p, 9.349274639994492e-05, 1e-6), "{}", r.p);
        assert!(close(r.p_greater, 9.349274639994492e-05 / 2.0, 1e-6));
        assert!(!r.degenerate);
    }

    #[test]
    fn reference_p_table() {
        let table: [(f64, [f64; 4]); 3] = [
            (1.0, [1.0, 0.49999999999999956, 0.2951672353008664, 0.20483276469913345]),
            (5.0, [1.0, 0.36321746764912255, 0.10193947882985828, 0.03009924789746257]),
            (30.0, [1.0, 0.32530861542602985, 0.0546250449629831, 0.005389964065651944]),
        ];
        for (df, row) in table {
            for (t, want) in row.iter().enumerate() {
                let got = t_two_sided_p(t as f64, df);
                assert!(close(got, *want, 1e-9), "df={df} t={t}: {got} vs {want}");
                let quad = p_by_quadrature(t as f64, df);
                assert!((got - quad).abs() < 1e-9, "df={df} t={t}: {got} vs {quad}");
            }
        }
    }

    #[test]
    fn degenerate_differences() {
        let r = paired_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((r.t, r.p, r.degenerate), (0.0, 1.0, true));
        let r = paired_t_test(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((r.t, r.p, r.p_greater, r.degenerate), (f64::INFINITY, 0.0, 0.0, true));
        assert_eq!(paired_t_test(&[1.0], &[1.0]), Err(StatsError::TooFewSamples(1)));
        assert_eq!(paired_t_test(&[1.0, 2.0], &[1.0]), Err(StatsError::LengthMismatch(2, 1)));
    }

    #[test]
    fn holm_reference() {
        let adj = holm_correction(&[0.01, 0.04, 0.03]).unwrap();
        for (got, want) in adj.iter().zip([0.03, 0.06, 0.06]) {
            assert!((got - want).abs() < 1e-12, "{adj:?}");
        }
        assert_eq!(holm_correction(&[]).unwrap(), Vec::<f64>::new());
        assert_eq!(holm_correction(&[0.5, 0.6]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(holm_correction(&[0.1, 1.5]), Err(StatsError::PValueOutOfRange(1)));
        assert_eq!(holm_correction(&[f64::NAN]), Err(StatsError::PValueOutOfRange(0)));
        let b = bonferroni_correction(&[0.01, 0.04, 0.03]).unwrap();
        assert!((b[0] - 0.03).abs() < 1e-12 && b[1] == 0.12f64.min(1.0).max(b[1]) && (b[2] - 0.09).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn swapping_samples_negates_t(
            pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..40)
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let ab = paired_t_test(&a, &b).unwrap();
            let ba = paired_t_test(&b, &a).unwrap();
            prop_assert!((ab.t + ba.t).abs() <= 1e-9 * ab.t.abs().max(1.0));
            prop_assert!((ab.p - ba.p).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab.p));
        }

        #[test]
        fn holm_dominates_raw_and_is_bounded_by_bonferroni(
            p in prop::collection::vec(0.0f64..=1.0, 0..30)
        ) {
            let h = holm_correction(&p).unwrap();
            let b = bonferroni_correction(&p).unwrap();
            for i in 0..p.len() {
                prop_assert!(h[i] >= p[i] && h[i] <= b[i] + 1e-15 && h[i] <= 1.0);
            }
            // monotone in the raw p order
            for i in 0..p.len() {
                for j in 0..p.len() {
                    if p[i] < p[j] {
                        prop_assert!(h[i] <= h[j]);
                    }
                }
            }
        }
    }
}
