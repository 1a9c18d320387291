//! BFGS maximisation with a strong-Wolfe line search.

use crate::model::OptimizerSettings;

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_EVALS: usize = 40;

/// Result of [`bfgs`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimOutcome {
    pub x: Vec<f64>,
    /// Objective (to be maximised) at `x`.
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub message: String,
    /// Objective at the start and after every accepted iteration.
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Trial {
    alpha: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    slope: f64,
}

/// Maximises `objective`, which returns the value and gradient. Stops when
/// `‖∇‖∞ < gtol · max(1, |f|)` or the relative change of `f` drops below
/// `ftol`. Non-finite values are treated as infeasible and the line search
/// backs off.
pub fn bfgs<F>(mut objective: F, x0: &[f64], settings: &OptimizerSettings) -> OptimOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    // Minimise the negated objective.
    let mut eval = |x: &[f64]| {
        let (f, g) = objective(x);
        (-f, g.into_iter().map(|v| -v).collect::<Vec<f64>>())
    };
    let mut x = x0.to_vec();
    let (mut f, mut g) = eval(&x);
    let mut trace = vec![-f];
    let finish =
        |x: Vec<f64>, f: f64, g: Vec<f64>, it, converged, message: &str, trace| OptimOutcome {
            x,
            value: -f,
            gradient: g.into_iter().map(|v: f64| -v).collect(),
            iterations: it,
            converged,
            message: message.to_string(),
            trace,
        };
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return finish(
            x,
            f,
            g,
            0,
            false,
            "objective not finite at the starting point",
            trace,
        );
    }
    if n == 0 {
        return finish(x, f, g, 0, true, "no free parameters", trace);
    }
    let gtest = |f: f64, g: &[f64]| inf_norm(g) < settings.gtol * f.abs().max(1.0);
    if gtest(f, &g) {
        return finish(x, f, g, 0, true, "gradient tolerance reached", trace);
    }
    // Inverse Hessian approximation, row-major.
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    let mut first = true;
    for it in 1..=settings.max_iterations {
        let mut d: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            // Not a descent direction: reset to steepest descent.
            h.iter_mut()
                .enumerate()
                .for_each(|(k, v)| *v = f64::from(u8::from(k % (n + 1) == 0)));
            d = g.iter().map(|v| -v).collect();
            slope = dot(&d, &g);
            first = true;
        }
        let alpha0 = if first {
            (1.0 / inf_norm(&g)).min(1.0)
        } else {
            1.0
        };
        let Some(trial) = line_search(&mut eval, &x, f, &d, slope, alpha0) else {
            let converged = gtest(f, &g);
            return finish(
                x,
                f,
                g,
                it - 1,
                converged,
                "line search failed to make progress",
                trace,
            );
        };
        let s: Vec<f64> = trial.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = trial.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let f_old = f;
        x = trial.x;
        f = trial.f;
        g = trial.g;
        trace.push(-f);
        if gtest(f, &g) {
            return finish(x, f, g, it, true, "gradient tolerance reached", trace);
        }
        if (f_old - f).abs() <= settings.ftol * f.abs().max(1.0) {
            return finish(
                x,
                f,
                g,
                it,
                true,
                "relative objective change below tolerance",
                trace,
            );
        }
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if first {
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
                first = false;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
    }
    let converged = gtest(f, &g);
    finish(
        x,
        f,
        g,
        settings.max_iterations,
        converged,
        "iteration limit reached",
        trace,
    )
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    let coef = (1.0 + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

fn line_search<E>(
    eval: &mut E,
    x: &[f64],
    f0: f64,
    d: &[f64],
    slope0: f64,
    alpha0: f64,
) -> Option<Trial>
where
    E: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut probe = |alpha: f64| {
        let xt: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
        let (f, g) = eval(&xt);
        let ok = f.is_finite() && g.iter().all(|v| v.is_finite());
        let slope = if ok { dot(&g, d) } else { f64::NAN };
        Trial {
            alpha,
            x: xt,
            f: if ok { f } else { f64::INFINITY },
            g,
            slope,
        }
    };
    let armijo = |t: &Trial| t.f <= f0 + C1 * t.alpha * slope0;
    let mut best: Option<Trial> = None;
    let keep = |best: &mut Option<Trial>, t: &Trial| {
        if t.f < f0 && armijo(t) && best.as_ref().is_none_or(|b| t.f < b.f) {
            *best = Some(Trial {
                alpha: t.alpha,
                x: t.x.clone(),
                f: t.f,
                g: t.g.clone(),
                slope: t.slope,
            });
        }
    };
    let mut lo = (0.0, f0, slope0);
    let mut alpha = alpha0;
    let mut evals = 0;
    let mut hi: Option<(f64, f64, f64)> = None;
    // Bracketing phase.
    while evals < MAX_LINE_EVALS {
        let t = probe(alpha);
        evals += 1;
        keep(&mut best, &t);
        if !armijo(&t) || t.f >= lo.1 && evals > 1 {
            hi = Some((t.alpha, t.f, t.slope));
            break;
        }
        if t.slope.abs() <= -C2 * slope0 {
            return Some(t);
        }
        if t.slope >= 0.0 {
            hi = Some(lo);
            lo = (t.alpha, t.f, t.slope);
            break;
        }
        lo = (t.alpha, t.f, t.slope);
        alpha *= 2.0;
    }
    let Some(mut hi) = hi else {
        return best;
    };
    // Zoom phase.
    while evals < MAX_LINE_EVALS {
        let a = interpolate(lo, hi);
        let t = probe(a);
        evals += 1;
        keep(&mut best, &t);
        if !armijo(&t) || t.f >= lo.1 {
            hi = (t.alpha, t.f, t.slope);
        } else {
            if t.slope.abs() <= -C2 * slope0 {
                return Some(t);
            }
            if t.slope * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (t.alpha, t.f, t.slope);
        }
        if (hi.0 - lo.0).abs() <= 1e-16 * lo.0.abs().max(1e-300) {
            break;
        }
    }
    best
}

/// Safeguarded cubic (or bisection) step between bracket ends
/// `(alpha, f, slope)`.
fn interpolate(lo: (f64, f64, f64), hi: (f64, f64, f64)) -> f64 {
    let (a0, f0, d0) = lo;
    let (a1, f1, d1) = hi;
    let width = a1 - a0;
    let mid = a0 + 0.5 * width;
    if !(f1.is_finite() && d1.is_finite()) {
        return a0 + 0.25 * width;
    }
    let d1c = d0 + d1 - 3.0 * (f0 - f1) / (a0 - a1);
    let rad = d1c * d1c - d0 * d1;
    if rad < 0.0 {
        return mid;
    }
    let d2c = rad.sqrt() * width.signum();
    let a = a1 - width * (d1 + d2c - d1c) / (d1 - d0 + 2.0 * d2c);
    let (lo_b, hi_b) = if width > 0.0 {
        (a0 + 0.1 * width, a1 - 0.1 * width)
    } else {
        (a1 - 0.1 * width, a0 + 0.1 * width)
    };
    if a.is_finite() && a >= lo_b && a <= hi_b {
        a
    } else {
        mid
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ];
        (-f, g.into_iter().map(|v| -v).collect())
    }

    #[test]
    fn maximises_negated_rosenbrock() {
        let s = OptimizerSettings {
            max_iterations: 500,
            gtol: 1e-10,
            ftol: 0.0,
        };
        let out = bfgs(rosenbrock, &[-1.2, 1.0], &s);
        assert!(out.converged, "{}", out.message);
        assert!(
            (out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6,
            "{:?}",
            out.x
        );
        assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn quadratic_converges_quickly() {
        let f = |x: &[f64]| {
            let v = -(x[0] - 3.0).powi(2) - 10.0 * (x[1] + 1.0).powi(2);
            (v, vec![-2.0 * (x[0] - 3.0), -20.0 * (x[1] + 1.0)])
        };
        let out = bfgs(f, &[0.0, 0.0], &OptimizerSettings::default());
        assert!(out.converged);
        assert!((out.x[0] - 3.0).abs() < 1e-6 && (out.x[1] + 1.0).abs() < 1e-6);
        assert!(out.iterations < 20);
    }

    #[test]
    fn infeasible_region_is_avoided() {
        // log-barrier: maximise log(x) - x, optimum at 1, undefined for x <= 0.
        let f = |x: &[f64]| {
            if x[0] <= 0.0 {
                (f64::NEG_INFINITY, vec![f64::NAN])
            } else {
                (x[0].ln() - x[0], vec![1.0 / x[0] - 1.0])
            }
        };
        let out = bfgs(f, &[5.0], &OptimizerSettings::default());
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn iteration_limit_is_reported() {
        let s = OptimizerSettings {
            max_iterations: 2,
            gtol: 1e-12,
            ftol: 0.0,
        };
        let out = bfgs(rosenbrock, &[-1.2, 1.0], &s);
        assert!(!out.converged);
        assert_eq!(out.iterations, 2);
        assert_eq!(out.message, "iteration limit reached");
    }
}
