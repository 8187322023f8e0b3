//! Small numerical helpers: Gauss-Legendre rules, radial integrals over R^d,
//! and order-fixed pairwise summation for schedule-independent reductions.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(order, x);
            dp = if d.is_finite() { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integrates `f` over `[a, b]` split into `pieces` equal subintervals.
    pub fn integrate(&self, a: f64, b: f64, pieces: usize, f: impl Fn(f64) -> f64) -> f64 {
        let pieces = pieces.max(1);
        let h = (b - a) / pieces as f64;
        let mut total = Vec::with_capacity(pieces);
        for p in 0..pieces {
            let lo = a + h * p as f64;
            let mid = lo + 0.5 * h;
            let s: f64 = self
                .nodes
                .iter()
                .zip(&self.weights)
                .map(|(x, w)| w * f(mid + 0.5 * h * x))
                .sum();
            total.push(0.5 * h * s);
        }
        pairwise_sum(&total)
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Surface area of the unit sphere S^{d-1} in R^d.
pub fn unit_sphere_area(dim: usize) -> f64 {
    2.0 * PI.powf(dim as f64 / 2.0) / gamma_half_integer(dim)
}

/// Gamma(d/2) for a positive integer d.
fn gamma_half_integer(dim: usize) -> f64 {
    // Gamma(1/2) = sqrt(pi), Gamma(1) = 1, Gamma(x+1) = x Gamma(x).
    let (mut value, mut x) = if dim % 2 == 0 {
        (1.0, 1.0)
    } else {
        (PI.sqrt(), 0.5)
    };
    let target = dim as f64 / 2.0;
    while x < target - 1e-12 {
        value *= x;
        x += 1.0;
    }
    value
}

/// Integral of a radial function `F(|xi|)` over the shell `{r0 < |xi| < r1}` of R^d,
/// computed in the log-radius variable (the integrand is smooth there for the
/// power-law and Gaussian densities of interest).
pub fn radial_shell_integral(dim: usize, r0: f64, r1: f64, f: impl Fn(f64) -> f64) -> f64 {
    assert!(r0 > 0.0 && r1 > r0);
    let area = unit_sphere_area(dim);
    let (y0, y1) = (r0.ln(), r1.ln());
    let pieces = ((y1 - y0) * 8.0).ceil().max(4.0) as usize;
    let rule = GaussLegendre::new(12);
    area * rule.integrate(y0, y1, pieces, |y| {
        let r = y.exp();
        r.powi(dim as i32) * f(r)
    })
}

/// Pairwise (cascade) summation with a fixed split, so the rounding pattern
/// depends only on the input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean and standard error of the mean, both via pairwise sums.
pub fn mean_and_standard_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}
