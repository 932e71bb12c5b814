//! Quadrature rules on the reference triangle.
//!
//! Points are barycentric triples and weights are normalised to sum to one, so
//! an element integral is `|T| Σ_q w_q f(x_q)`.

/// A quadrature rule on the reference triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
    degree: usize,
}

impl QuadratureRule {
    /// The symmetric 7-point rule of degree 5 (Radon).
    pub fn degree5() -> Self {
        let s15 = 15f64.sqrt();
        let a = (6.0 - s15) / 21.0;
        let b = (6.0 + s15) / 21.0;
        let wa = (155.0 - s15) / 1200.0;
        let wb = (155.0 + s15) / 1200.0;
        let third = 1.0 / 3.0;
        let points = vec![
            [third, third, third],
            [a, a, 1.0 - 2.0 * a],
            [a, 1.0 - 2.0 * a, a],
            [1.0 - 2.0 * a, a, a],
            [b, b, 1.0 - 2.0 * b],
            [b, 1.0 - 2.0 * b, b],
            [1.0 - 2.0 * b, b, b],
        ];
        let weights = vec![0.225, wa, wa, wa, wb, wb, wb];
        Self {
            points,
            weights,
            degree: 5,
        }
    }

    /// Collapsed (Duffy) tensor Gauss–Legendre rule exact up to `degree`.
    pub fn collapsed_gauss(degree: usize) -> Self {
        // The Duffy Jacobian adds one degree in the collapsed direction.
        let n = (degree + 3) / 2;
        let (nodes, weights_1d) = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (s, ws) in nodes.iter().zip(&weights_1d) {
            for (t, wt) in nodes.iter().zip(&weights_1d) {
                let xi = *s;
                let eta = t * (1.0 - s);
                points.push([1.0 - xi - eta, xi, eta]);
                // Reference triangle area is ½; normalise to unit total weight.
                weights.push(2.0 * ws * wt * (1.0 - s));
            }
        }
        Self {
            points,
            weights,
            degree,
        }
    }

    /// The cheapest built-in rule reaching at least `degree`.
    pub fn with_degree(degree: usize) -> Self {
        if degree <= 5 {
            Self::degree5()
        } else {
            Self::collapsed_gauss(degree)
        }
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::degree5()
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
