//! One-sample Kolmogorov-Smirnov test against U(0, 1).

use serde::{Deserialize, Serialize};

/// Sample sizes below this use the exact distribution of `D_m`.
pub const EXACT_BELOW: usize = 35;

/// Asymptotic 95% band constant.
pub const ASYMPTOTIC_95: f64 = 1.358;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub m: usize,
    pub statistic: f64,
    pub p_value: f64,
    /// Half-width of the 95% confidence band around the identity.
    pub band: f64,
    /// Whether the exact small-sample distribution was used.
    pub exact: bool,
}

impl KsTest {
    pub fn rejects_at(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// `D_m = sup_u |F̂(u) − u|` of a sample on [0, 1].
pub fn ks_statistic(sample: &[f64]) -> f64 {
    let mut u = sample.to_vec();
    u.sort_by(f64::total_cmp);
    let m = u.len() as f64;
    u.iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / m).max((i + 1) as f64 / m - x))
        .fold(0.0, f64::max)
}

/// Test of uniformity; exact for `m < 35`, asymptotic with Stephens'
/// small-sample correction otherwise.
pub fn ks_uniform(sample: &[f64]) -> KsTest {
    let m = sample.len();
    let statistic = ks_statistic(sample);
    let exact = m > 0 && m < EXACT_BELOW;
    let p_value = if m == 0 {
        1.0
    } else if exact {
        (1.0 - kolmogorov_cdf_exact(m, statistic)).clamp(0.0, 1.0)
    } else {
        let sm = (m as f64).sqrt();
        kolmogorov_survival((sm + 0.12 + 0.11 / sm) * statistic)
    };
    KsTest {
        m,
        statistic,
        p_value,
        band: ks_band(m, 0.95),
        exact,
    }
}

/// Half-width of the `level` confidence band for the empirical CDF of `m`
/// uniforms: exact quantile of `D_m` for small `m`, `1.358/√m` otherwise
/// (at level 0.95).
pub fn ks_band(m: usize, level: f64) -> f64 {
    if m == 0 {
        return f64::INFINITY;
    }
    if m < EXACT_BELOW {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if kolmogorov_cdf_exact(m, mid) < level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return hi;
    }
    let c = if (level - 0.95).abs() < 1e-12 {
        ASYMPTOTIC_95
    } else {
        kolmogorov_quantile(level)
    };
    c / (m as f64).sqrt()
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        let pi2 = std::f64::consts::PI.powi(2);
        let mut s = 0.0;
        for k in 1..=20 {
            let j = (2 * k - 1) as f64;
            s += (-j * j * pi2 / (8.0 * x * x)).exp();
        }
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn kolmogorov_quantile(level: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 5.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if 1.0 - kolmogorov_survival(mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// `P(D_n < d)` by the Marsaglia-Tsang-Wang matrix method.
pub fn kolmogorov_cdf_exact(n: usize, d: f64) -> f64 {
    if d <= 0.5 / n as f64 {
        return 0.0;
    }
    if d >= 1.0 {
        return 1.0;
    }
    let nf = n as f64;
    let k = (nf * d).floor() as usize + 1;
    let m = 2 * k - 1;
    let h = k as f64 - nf * d;
    let mut hm = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            hm[i * m + j] = if i + 1 >= j { 1.0 } else { 0.0 };
        }
    }
    for i in 0..m {
        hm[i * m] -= h.powi(i as i32 + 1);
        hm[(m - 1) * m + i] -= h.powi((m - i) as i32);
    }
    if 2.0 * h - 1.0 > 0.0 {
        hm[(m - 1) * m] += (2.0 * h - 1.0).powi(m as i32);
    }
    for i in 0..m {
        for j in 0..m {
            if i + 1 > j {
                for g in 1..=(i + 1 - j) {
                    hm[i * m + j] /= g as f64;
                }
            }
        }
    }
    let (q, eq) = matrix_power(&hm, m, n);
    let mut s = q[(k - 1) * m + k - 1];
    let mut es = eq;
    for i in 1..=n {
        s = s * i as f64 / nf;
        if s < 1e-140 {
            s *= 1e140;
            es -= 140;
        }
    }
    s * 10f64.powi(es)
}

fn matmul(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * m];
    for i in 0..m {
        for l in 0..m {
            let x = a[i * m + l];
            if x != 0.0 {
                for j in 0..m {
                    c[i * m + j] += x * b[l * m + j];
                }
            }
        }
    }
    c
}

/// `a^n` as a scaled matrix and a base-10 exponent.
fn matrix_power(a: &[f64], m: usize, n: usize) -> (Vec<f64>, i32) {
    if n == 1 {
        return (a.to_vec(), 0);
    }
    let (half, e) = matrix_power(a, m, n / 2);
    let mut b = matmul(&half, &half, m);
    let mut eb = 2 * e;
    if n % 2 == 1 {
        b = matmul(a, &b, m);
    }
    if b[(m / 2) * m + m / 2] > 1e140 {
        b.iter_mut().for_each(|v| *v *= 1e-140);
        eb += 140;
    }
    (b, eb)
}
