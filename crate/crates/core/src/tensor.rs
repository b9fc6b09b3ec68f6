//! Symmetric 2x2 tensors stored by their three independent components.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// Weights of the Frobenius product on the component vector `(xx, xy, yy)`.
///
/// `T:S = T11*S11 + 2*T12*S12 + T22*S22` for symmetric tensors.
pub const FROBENIUS_WEIGHTS: [f64; 3] = [1.0, 2.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymTensor {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl SymTensor {
    pub const ZERO: SymTensor = SymTensor { xx: 0.0, xy: 0.0, yy: 0.0 };

    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub const fn diag(xx: f64, yy: f64) -> Self {
        Self { xx, xy: 0.0, yy }
    }

    pub fn from_components(c: [f64; 3]) -> Self {
        Self::new(c[0], c[1], c[2])
    }

    pub fn components(&self) -> [f64; 3] {
        [self.xx, self.xy, self.yy]
    }

    /// Symmetric part of a full gradient `g[i][j] = d_j v_i`.
    pub fn sym_grad(g: [[f64; 2]; 2]) -> Self {
        Self::new(g[0][0], 0.5 * (g[0][1] + g[1][0]), g[1][1])
    }

    /// Frobenius product `self : other`.
    pub fn dot(&self, other: &SymTensor) -> f64 {
        self.xx * other.xx + 2.0 * self.xy * other.xy + self.yy * other.yy
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn deviator(&self) -> Self {
        let m = 0.5 * self.trace();
        Self::new(self.xx - m, self.xy, self.yy - m)
    }
}

impl Add for SymTensor {
    type Output = SymTensor;
    fn add(self, o: SymTensor) -> SymTensor {
        SymTensor::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }
}

impl AddAssign for SymTensor {
    fn add_assign(&mut self, o: SymTensor) {
        self.xx += o.xx;
        self.xy += o.xy;
        self.yy += o.yy;
    }
}

impl Sub for SymTensor {
    type Output = SymTensor;
    fn sub(self, o: SymTensor) -> SymTensor {
        SymTensor::new(self.xx - o.xx, self.xy - o.xy, self.yy - o.yy)
    }
}

impl Neg for SymTensor {
    type Output = SymTensor;
    fn neg(self) -> SymTensor {
        SymTensor::new(-self.xx, -self.xy, -self.yy)
    }
}

impl Mul<SymTensor> for f64 {
    type Output = SymTensor;
    fn mul(self, t: SymTensor) -> SymTensor {
        SymTensor::new(self * t.xx, self * t.xy, self * t.yy)
    }
}

impl Mul<f64> for SymTensor {
    type Output = SymTensor;
    fn mul(self, s: f64) -> SymTensor {
        s * self
    }
}
