//! Gauss rules and adaptive integration.

use crate::error::{Error, Result};
use crate::special::ln_gamma;

pub const MAX_LAGUERRE_ORDER: usize = 64;

/// Gauss–Laguerre rule for the weight `t^alpha e^{-t}` on `(0, inf)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub order: usize,
    pub alpha: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Sum of `w_p f(ζ_p)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Standard Gauss–Laguerre rule (weight `e^{-t}`).
pub fn gauss_laguerre(order: usize) -> Result<QuadratureRule> {
    gauss_laguerre_generalized(order, 0.0)
}

/// Generalized Gauss–Laguerre rule with weight `t^alpha e^{-t}`.
///
/// Nodes are found by Newton iteration on the three-term recurrence,
/// seeded with the usual asymptotic guesses.
pub fn gauss_laguerre_generalized(order: usize, alpha: f64) -> Result<QuadratureRule> {
    if order == 0 || order > MAX_LAGUERRE_ORDER {
        return Err(Error::InvalidArgument(format!(
            "quadrature order {order} outside 1..={MAX_LAGUERRE_ORDER}"
        )));
    }
    if !(alpha > -1.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Laguerre parameter {alpha} must exceed -1"
        )));
    }
    let n = order;
    let nf = n as f64;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let ln_norm = ln_gamma(alpha + nf) - ln_gamma(nf);
    let mut z = 0.0;
    for i in 0..n {
        z = match i {
            0 => (1.0 + alpha) * (3.0 + 0.92 * alpha) / (1.0 + 2.4 * nf + 1.8 * alpha),
            1 => z + (15.0 + 6.25 * alpha) / (1.0 + 0.9 * alpha + 2.5 * nf),
            _ => {
                let ai = (i - 1) as f64;
                z + ((1.0 + 2.55 * ai) / (1.9 * ai) + 1.26 * ai * alpha / (1.0 + 3.5 * ai))
                    * (z - nodes[i - 2])
                    / (1.0 + 0.3 * alpha)
            }
        };
        let mut last_step = f64::INFINITY;
        for _ in 0..100 {
            let (p1, p2) = laguerre_pair(n, alpha, z);
            let pp = (nf * p1 - (nf + alpha) * p2) / z;
            let z1 = z;
            z = z1 - p1 / pp;
            last_step = (z - z1).abs();
            if last_step <= 4.0 * f64::EPSILON * z.abs().max(1.0) {
                break;
            }
        }
        if !z.is_finite() || last_step > 1e-10 * z.abs().max(1.0) {
            return Err(Error::Numeric(format!(
                "Laguerre root {i} of order {n} did not converge"
            )));
        }
        let (p1, p2) = laguerre_pair(n, alpha, z);
        let pp = (nf * p1 - (nf + alpha) * p2) / z;
        nodes[i] = z;
        weights[i] = -(ln_norm.exp()) / (pp * nf * p2);
    }
    Ok(QuadratureRule {
        order,
        alpha,
        nodes,
        weights,
    })
}

/// `(L_n^alpha(z), L_{n-1}^alpha(z))` by the upward recurrence.
fn laguerre_pair(n: usize, alpha: f64, z: f64) -> (f64, f64) {
    let mut p1 = 1.0;
    let mut p2 = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = ((2.0 * jf - 1.0 + alpha - z) * p2 - (jf - 1.0 + alpha) * p3) / jf;
    }
    (p1, p2)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre order must be positive");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            dp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / dp;
            if (z - z1).abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Composite Gauss–Legendre rule over the panels delimited by `edges`.
#[derive(Debug, Clone)]
pub struct PanelRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PanelRule {
    pub fn from_edges(edges: &[f64], points: usize) -> Self {
        let (gx, gw) = gauss_legendre(points);
        let mut nodes = Vec::with_capacity(points * edges.len());
        let mut weights = Vec::with_capacity(points * edges.len());
        for pair in edges.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            if hi <= lo {
                continue;
            }
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (&x, &w) in gx.iter().zip(&gw) {
                nodes.push(mid + half * x);
                weights.push(half * w);
            }
        }
        PanelRule { nodes, weights }
    }

    /// Panels on `[lo, hi]`. When `lo == 0` the mesh is graded geometrically
    /// from `fine` up to a unit-scale panel before switching to uniform panels.
    pub fn graded(lo: f64, hi: f64, fine: f64, linear_panels: usize, points: usize) -> Self {
        let mut edges = Vec::new();
        if lo <= 0.0 {
            let lin0 = (hi / linear_panels as f64).min(1.0);
            edges.push(0.0);
            let mut x = fine.min(lin0);
            while x < lin0 {
                edges.push(x);
                x *= 2.0;
            }
            edges.push(lin0);
            for i in 1..=linear_panels {
                edges.push(lin0 + (hi - lin0) * i as f64 / linear_panels as f64);
            }
        } else {
            for i in 0..=linear_panels {
                edges.push(lo + (hi - lo) * i as f64 / linear_panels as f64);
            }
        }
        Self::from_edges(&edges, points)
    }
}

const GK_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = GK_WK[7] * fc;
    let mut g = GK_WG[3] * fc;
    for j in 0..7 {
        let dx = h * GK_X[j];
        let s = f(c - dx) + f(c + dx);
        k += GK_WK[j] * s;
        if j % 2 == 1 {
            g += GK_WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive Gauss–Kronrod (7/15) integration on `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    const MAX_INTERVALS: usize = 4000;
    let (v, e) = gk15(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if !total.is_finite() {
            return Err(Error::Numeric("non-finite integrand".into()));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::Numeric(format!(
                "adaptive quadrature did not converge (error estimate {err:e})"
            )));
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// Adaptive integration on `[a, inf)` via `x = a + u / (1 - u)`.
pub fn integrate_to_inf<F: Fn(f64) -> f64>(f: F, a: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    integrate(
        |u: f64| {
            if u >= 1.0 {
                return 0.0;
            }
            let one_m = 1.0 - u;
            let v = f(a + u / one_m) / (one_m * one_m);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_one_rule() {
        let q = gauss_laguerre(1).unwrap();
        assert!((q.nodes[0] - 1.0).abs() < 1e-14);
        assert!((q.weights[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn order_two_rule_matches_hand_solution() {
        let q = gauss_laguerre(2).unwrap();
        let s = 2f64.sqrt();
        assert!((q.nodes[0] - (2.0 - s)).abs() < 1e-14);
        assert!((q.nodes[1] - (2.0 + s)).abs() < 1e-14);
        assert!((q.weights[0] - (2.0 + s) / 4.0).abs() < 1e-14);
        assert!((q.weights[1] - (2.0 - s) / 4.0).abs() < 1e-14);
    }

    #[test]
    fn order_32_second_moment() {
        let q = gauss_laguerre(32).unwrap();
        assert!((q.integrate(|t| t * t) - 2.0).abs() < 1e-9);
        assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((q.integrate(|t| t) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn exact_for_polynomials_up_to_2n_minus_1() {
        for &n in &[4usize, 10, 20, 32, 64] {
            let q = gauss_laguerre(n).unwrap();
            let mut fact = 1.0f64;
            for k in 0..(2 * n) {
                if k > 0 {
                    fact *= k as f64;
                }
                let v = q.integrate(|t| t.powi(k as i32));
                assert!(((v - fact) / fact).abs() < 1e-9, "n={n} k={k} v={v} exact={fact}");
            }
            assert!(q.nodes.windows(2).all(|w| w[0] < w[1]) && q.nodes[0] > 0.0);
        }
    }

    #[test]
    fn generalized_rule_moments() {
        let alpha = 4.5;
        let q = gauss_laguerre_generalized(32, alpha).unwrap();
        for k in 0..20 {
            let exact = (ln_gamma(alpha + 1.0 + k as f64)).exp();
            let v = q.integrate(|t| t.powi(k));
            assert!(((v - exact) / exact).abs() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn rejects_bad_order() {
        assert!(gauss_laguerre(0).is_err());
        assert!(gauss_laguerre(65).is_err());
    }

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(16);
        let v: f64 = x.iter().zip(&w).map(|(&x, &w)| w * x.powi(30)).sum();
        assert!((v - 2.0 / 31.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_semi_infinite() {
        let v = integrate_to_inf(|t| (-t).exp() / (1.0 + t), 0.0, 1e-14, 1e-13).unwrap();
        assert!((v - 0.596_347_362_323_194_1).abs() < 1e-12);
        let v = integrate(|x| x.sqrt(), 0.0, 1.0, 1e-14, 1e-13).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
    }
}
