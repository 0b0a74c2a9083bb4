//! One-way ANOVA and Bonferroni-adjusted pairwise t-tests.
//!
//! Tail probabilities of the F and Student t distributions are evaluated
//! through the regularized incomplete beta function, computed with the
//! modified Lentz continued fraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn beta_reg(a: f64, b: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // The continued fraction converges fast for x < (a + 1) / (a + b + 2);
    // otherwise use the symmetry I_x(a, b) = 1 - I_{1-x}(b, a).
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
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
    for m in 1..=10_000 {
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

/// Upper tail `P(F > f)` of the F distribution.
pub fn f_sf(f: f64, df1: f64, df2: f64) -> f64 {
    if f.is_nan() {
        return f64::NAN;
    }
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    beta_reg(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))
}

/// Two-sided `P(|T| > |t|)` of Student's t distribution.
pub fn t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p: f64,
    pub ss_between: f64,
    pub ss_within: f64,
    /// Set when every group has zero spread; `f` and `p` are then fixed by
    /// convention (infinite / 0 with between-group differences, 0 / 1
    /// without).
    pub degenerate_variance: bool,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn check_groups(groups: &[Vec<f64>]) -> Result<usize> {
    if groups.len() < 2 {
        return Err(Error::invalid("need at least two groups"));
    }
    if groups.iter().any(Vec::is_empty) {
        return Err(Error::invalid("every group needs at least one observation"));
    }
    if groups.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::invalid("observations must be finite"));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    if n <= groups.len() {
        return Err(Error::invalid("within-group degrees of freedom must be at least 1"));
    }
    Ok(n)
}

/// Classic between/within decomposition with an F upper-tail p-value.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<AnovaResult> {
    let n = check_groups(groups)?;
    let k = groups.len();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = mean(g);
        ss_between += g.len() as f64 * (m - grand) * (m - grand);
        ss_within += g.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    }
    let df_between = k - 1;
    let df_within = n - k;
    // Spread below this is rounding noise in the group means.
    let scale = groups.iter().flatten().map(|x| x * x).sum::<f64>().max(1e-300);
    let noise = 1e-24 * scale;
    let degenerate = ss_within <= noise;
    let (f, p) = if degenerate {
        if ss_between <= noise {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, 0.0)
        }
    } else {
        let f = (ss_between / df_between as f64) / (ss_within / df_within as f64);
        (f, f_sf(f, df_between as f64, df_within as f64))
    };
    Ok(AnovaResult {
        f,
        df_between,
        df_within,
        p,
        ss_between,
        ss_within,
        degenerate_variance: degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub group_a: usize,
    pub group_b: usize,
    pub mean_difference: f64,
    pub t: f64,
    pub df: usize,
    pub p_raw: f64,
    pub p_adjusted: f64,
}

/// Pooled-variance two-sample t-tests for every pair of groups, with p
/// multiplied by the number of comparisons and capped at 1.
pub fn posthoc_bonferroni(groups: &[Vec<f64>]) -> Result<Vec<PairwiseTest>> {
    check_groups(groups)?;
    let k = groups.len();
    let comparisons = (k * (k - 1) / 2) as f64;
    let mut out = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let (a, b) = (&groups[i], &groups[j]);
            let (na, nb) = (a.len() as f64, b.len() as f64);
            let (ma, mb) = (mean(a), mean(b));
            let ss: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>()
                + b.iter().map(|x| (x - mb).powi(2)).sum::<f64>();
            let df = a.len() + b.len() - 2;
            let diff = ma - mb;
            let (t, p_raw) = if df == 0 {
                (f64::NAN, 1.0)
            } else {
                let pooled = ss / df as f64;
                let se = (pooled * (1.0 / na + 1.0 / nb)).sqrt();
                if se <= 1e-12 * (ma.abs() + mb.abs()).max(1e-300) {
                    if diff == 0.0 {
                        (0.0, 1.0)
                    } else {
                        (diff.signum() * f64::INFINITY, 0.0)
                    }
                } else {
                    let t = diff / se;
                    (t, t_two_sided(t, df as f64))
                }
            };
            out.push(PairwiseTest {
                group_a: i,
                group_b: j,
                mean_difference: diff,
                t,
                df,
                p_raw,
                p_adjusted: (p_raw * comparisons).min(1.0),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Composite Simpson integration of the beta density, as an independent
    /// route to `I_x(a, b)` for `a, b >= 1`.
    fn beta_reg_quadrature(a: f64, b: f64, x: f64) -> f64 {
        let n = 20_000;
        let h = x / n as f64;
        let dens = |t: f64| t.powf(a - 1.0) * (1.0 - t).powf(b - 1.0);
        let mut s = dens(0.0) + dens(x);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * dens(i as f64 * h);
        }
        let integral = s * h / 3.0;
        let ln_b = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
        integral / ln_b.exp()
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn beta_reg_matches_quadrature() {
        for &(a, b, x) in &[(1.0, 1.0, 0.3), (2.0, 3.0, 0.4), (21.0, 1.0, 0.8), (5.5, 2.5, 0.9), (1.5, 7.0, 0.05)] {
            let got = beta_reg(a, b, x);
            let want = beta_reg_quadrature(a, b, x);
            assert!((got - want).abs() < 1e-8, "I_{x}({a},{b}) = {got} vs {want}");
        }
        assert_eq!(beta_reg(2.0, 3.0, 0.0), 0.0);
        assert_eq!(beta_reg(2.0, 3.0, 1.0), 1.0);
    }

    #[test]
    fn f_tail_anchor() {
        let p = f_sf(4.991, 2.0, 42.0);
        assert!((p - 0.011).abs() <= 0.001, "p = {p}");
        assert_eq!(f_sf(0.0, 2.0, 42.0), 1.0);
    }

    #[test]
    fn hand_fixture_f_equals_eight() {
        let r = anova_oneway(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!((r.df_between, r.df_within), (1, 2));
        assert!((r.ss_between - 4.0).abs() < 1e-12 && (r.ss_within - 1.0).abs() < 1e-12);
        assert!((r.f - 8.0).abs() < 1e-12);
    }

    #[test]
    fn identical_groups() {
        let g = vec![vec![1.0, 2.0, 4.0]; 3];
        let r = anova_oneway(&g).unwrap();
        assert_eq!(r.f, 0.0);
        assert_eq!(r.p, 1.0);
        for t in posthoc_bonferroni(&g).unwrap() {
            assert_eq!(t.p_adjusted, 1.0);
        }
    }

    #[test]
    fn degenerate_variance() {
        let r = anova_oneway(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        assert!(r.degenerate_variance);
        assert_eq!(r.p, 0.0);
        let r = anova_oneway(&[vec![3.0, 3.0], vec![3.0, 3.0, 3.0]]).unwrap();
        assert!(r.degenerate_variance);
        assert_eq!((r.f, r.p), (0.0, 1.0));
    }

    #[test]
    fn input_validation() {
        assert!(anova_oneway(&[vec![1.0, 2.0]]).is_err());
        assert!(anova_oneway(&[vec![1.0], vec![]]).is_err());
        assert!(anova_oneway(&[vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn two_groups_need_no_adjustment() {
        let tests = posthoc_bonferroni(&[vec![1.0, 2.0, 3.5], vec![2.0, 4.0, 5.0, 6.5]]).unwrap();
        assert_eq!(tests.len(), 1);
        assert_eq!(tests[0].p_raw, tests[0].p_adjusted);
    }

    #[test]
    fn three_groups_hand_sized() {
        // A = {1,2,3}, B = {2,3,4}, C = {6,7,8}: every group has SS = 2, so
        // each pair has pooled variance 1, se = sqrt(2/3) and df = 4.
        let g = vec![vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![6.0, 7.0, 8.0]];
        let tests = posthoc_bonferroni(&g).unwrap();
        let se = (2.0f64 / 3.0).sqrt();
        let expect_t = [-1.0 / se, -5.0 / se, -4.0 / se];
        for (t, want) in tests.iter().zip(expect_t) {
            assert!((t.t - want).abs() < 1e-12);
            assert_eq!(t.df, 4);
            // df = 4: P(|T| > t) = 1 - t (6 + t^2) / (t^2 + 4)^{3/2}
            let tt = want.abs();
            let closed = 1.0 - tt * (6.0 + tt * tt) / (tt * tt + 4.0).powf(1.5);
            assert!((t.p_raw - closed).abs() < 1e-12, "{} vs {closed}", t.p_raw);
            assert!((t.p_adjusted - (3.0 * closed).min(1.0)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn f_invariant_to_shift_and_scale(
            groups in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 2..6), 2..5),
            shift in -100.0f64..100.0,
            scale in 0.1f64..10.0,
        ) {
            let base = anova_oneway(&groups).unwrap();
            prop_assume!(!base.degenerate_variance);
            let moved: Vec<Vec<f64>> = groups
                .iter()
                .map(|g| g.iter().map(|x| scale * x + shift).collect())
                .collect();
            let r = anova_oneway(&moved).unwrap();
            prop_assert!((r.f - base.f).abs() <= 1e-7 * (1.0 + base.f));
            prop_assert!((0.0..=1.0).contains(&r.p));
        }

        #[test]
        fn p_values_in_unit_interval(f in 0.0f64..1e3, d1 in 1u32..20, d2 in 1u32..200) {
            let p = f_sf(f, d1 as f64, d2 as f64);
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
