//! Reference-element shape functions and tensor Gauss quadrature on `[-1,1]^2`.
//!
//! Basis functions are tensor-product Lagrange polynomials numbered
//! lexicographically with `x` running fastest: Q2 node `(a, b)` with
//! `a, b in {0,1,2}` has index `3b + a` and sits at `(-1 + a, -1 + b)`; Q1
//! node `(a, b)` with `a, b in {0,1}` has index `2b + a` and sits at
//! `(-1 + 2a, -1 + 2b)`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("unsupported Gauss rule order {0} (expected 1..=6)")]
    UnsupportedOrder(usize),
    #[error("element side must be positive, got {0}")]
    NonPositiveSide(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(*p)).sum()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` with `k` points.
fn gauss_legendre_1d(k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; k];
    let mut weights = vec![0.0; k];
    for i in 0..k {
        // Newton iteration on P_k from the Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for n in 2..=k {
                let nf = n as f64;
                let p2 = ((2.0 * nf - 1.0) * x * p1 - (nf - 1.0) * p0) / nf;
                p0 = p1;
                p1 = p2;
            }
            dp = k as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

/// Tensor-product `k x k` Gauss rule; exact for per-variable degree `<= 2k - 1`.
pub fn gauss_rule(k: usize) -> Result<QuadratureRule, BasisError> {
    if !(1..=6).contains(&k) {
        return Err(BasisError::UnsupportedOrder(k));
    }
    let (x, w) = gauss_legendre_1d(k);
    let mut points = Vec::with_capacity(k * k);
    let mut weights = Vec::with_capacity(k * k);
    for j in 0..k {
        for i in 0..k {
            points.push([x[i], x[j]]);
            weights.push(w[i] * w[j]);
        }
    }
    Ok(QuadratureRule { points, weights })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Space {
    Q1,
    Q2,
}

impl Space {
    pub fn num_basis(self) -> usize {
        match self {
            Space::Q1 => 4,
            Space::Q2 => 9,
        }
    }

    pub fn nodes(self) -> Vec<[f64; 2]> {
        match self {
            Space::Q1 => (0..4).map(|k| [-1.0 + 2.0 * (k % 2) as f64, -1.0 + 2.0 * (k / 2) as f64]).collect(),
            Space::Q2 => (0..9).map(|k| [-1.0 + (k % 3) as f64, -1.0 + (k / 3) as f64]).collect(),
        }
    }

    /// Value and reference gradient of basis `i` at `xi`.
    pub fn eval(self, i: usize, xi: [f64; 2]) -> (f64, [f64; 2]) {
        let (a, b) = match self {
            Space::Q1 => (i % 2, i / 2),
            Space::Q2 => (i % 3, i / 3),
        };
        let (lx, dlx) = lagrange_1d(self, a, xi[0]);
        let (ly, dly) = lagrange_1d(self, b, xi[1]);
        (lx * ly, [dlx * ly, lx * dly])
    }
}

fn lagrange_1d(space: Space, a: usize, x: f64) -> (f64, f64) {
    match (space, a) {
        (Space::Q1, 0) => (0.5 * (1.0 - x), -0.5),
        (Space::Q1, _) => (0.5 * (1.0 + x), 0.5),
        (Space::Q2, 0) => (0.5 * x * (x - 1.0), x - 0.5),
        (Space::Q2, 1) => (1.0 - x * x, -2.0 * x),
        (Space::Q2, _) => (0.5 * x * (x + 1.0), x + 0.5),
    }
}

/// Basis values and reference gradients tabulated at a set of points.
#[derive(Debug, Clone)]
pub struct ShapeTable {
    pub space: Space,
    pub num_points: usize,
    values: Vec<f64>,
    gradients: Vec<[f64; 2]>,
}

impl ShapeTable {
    pub fn at_points(space: Space, points: &[[f64; 2]]) -> Self {
        let nb = space.num_basis();
        let mut values = Vec::with_capacity(points.len() * nb);
        let mut gradients = Vec::with_capacity(points.len() * nb);
        for p in points {
            for i in 0..nb {
                let (v, g) = space.eval(i, *p);
                values.push(v);
                gradients.push(g);
            }
        }
        Self { space, num_points: points.len(), values, gradients }
    }

    pub fn num_basis(&self) -> usize {
        self.space.num_basis()
    }

    #[inline]
    pub fn value(&self, q: usize, i: usize) -> f64 {
        self.values[q * self.num_basis() + i]
    }

    #[inline]
    pub fn gradient(&self, q: usize, i: usize) -> [f64; 2] {
        self.gradients[q * self.num_basis() + i]
    }

    /// Basis values at point `q`.
    #[inline]
    pub fn values_at(&self, q: usize) -> &[f64] {
        let nb = self.num_basis();
        &self.values[q * nb..(q + 1) * nb]
    }

    #[inline]
    pub fn gradients_at(&self, q: usize) -> &[[f64; 2]] {
        let nb = self.num_basis();
        &self.gradients[q * nb..(q + 1) * nb]
    }
}

pub fn tabulate(space: Space, rule: &QuadratureRule) -> ShapeTable {
    ShapeTable::at_points(space, &rule.points)
}

/// Physical gradients on an axis-aligned square of the given side: the
/// reference gradients scaled by `2/side`. Indexed like the table.
pub fn physical_gradients(table: &ShapeTable, side: f64) -> Result<Vec<[f64; 2]>, BasisError> {
    if side <= 0.0 || side.is_nan() {
        return Err(BasisError::NonPositiveSide(side));
    }
    let scale = 2.0 / side;
    Ok(table.gradients.iter().map(|g| [scale * g[0], scale * g[1]]).collect())
}
