//! Closed-form exact solutions and the right-hand sides that make them exact.
//!
//! Both cases share the pressure `p = -(cos 2πx + cos 2πy)/4` and the stress
//! `T = diag(c, -c)` with `c = (cos 2πx - cos 2πy)/4`. Case 1 uses the
//! Taylor–Green velocity on the unit square; Case 2 a rotational field whose
//! second derivatives are singular at the reentrant corner of the L-shape.

use std::f64::consts::PI;

use thiserror::Error;

use crate::constitutive::{flux, flux_jacobian, ConstitutiveModel};
use crate::mesh::Domain;
use crate::tensor::SymTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseId {
    Case1,
    Case2,
}

impl CaseId {
    pub fn domain(self) -> Domain {
        match self {
            CaseId::Case1 => Domain::UnitSquare,
            CaseId::Case2 => Domain::LShape,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManufacturedError {
    #[error("point ({0}, {1}) lies outside the domain")]
    OutsideDomain(f64, f64),
    #[error("forcing is singular at ({0}, {1})")]
    Singular(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactFields {
    pub u: [f64; 2],
    pub p: f64,
    pub t: SymTensor,
}

/// A manufactured solution bound to constitutive parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedCase {
    pub id: CaseId,
    pub model: ConstitutiveModel,
}

const DOMAIN_TOL: f64 = 1e-12;

impl ManufacturedCase {
    pub fn new(id: CaseId, model: ConstitutiveModel) -> Self {
        Self { id, model }
    }

    pub fn domain(&self) -> Domain {
        self.id.domain()
    }

    fn check(&self, x: [f64; 2]) -> Result<(), ManufacturedError> {
        if self.domain().contains(x, DOMAIN_TOL) {
            Ok(())
        } else {
            Err(ManufacturedError::OutsideDomain(x[0], x[1]))
        }
    }

    pub fn eval_exact(&self, x: [f64; 2]) -> Result<ExactFields, ManufacturedError> {
        self.check(x)?;
        Ok(ExactFields { u: self.velocity(x), p: pressure(x), t: stress(x) })
    }

    /// `alpha T + gamma mu(|T|) T - D(u)`
    pub fn eval_g(&self, x: [f64; 2]) -> Result<SymTensor, ManufacturedError> {
        self.check(x)?;
        Ok(self.g(x))
    }

    /// `(u.grad)u - (1/alpha) div D(u) + grad p + (gamma/alpha) div(mu(|T|) T)`
    pub fn eval_f(&self, x: [f64; 2]) -> Result<[f64; 2], ManufacturedError> {
        self.check(x)?;
        if self.id == CaseId::Case2 && x[0] == 0.0 && x[1] == 0.0 {
            return Err(ManufacturedError::Singular(x[0], x[1]));
        }
        Ok(self.f(x))
    }

    /// Unchecked `g`, for quadrature points known to be interior.
    pub(crate) fn g(&self, x: [f64; 2]) -> SymTensor {
        let t = stress(x);
        self.model.apply_map(&t) - SymTensor::sym_grad(self.velocity_gradient(x))
    }

    /// Unchecked `f`, for quadrature points known to be interior.
    pub(crate) fn f(&self, x: [f64; 2]) -> [f64; 2] {
        let ConstitutiveModel { alpha, gamma } = self.model;
        let u = self.velocity(x);
        let g = self.velocity_gradient(x);
        let h = self.velocity_hessian(x);
        let gp = pressure_gradient(x);
        // div D(u)_i = sum_j (d_j d_j u_i + d_i d_j u_j) / 2
        let mut div_d = [0.0; 2];
        for (i, out) in div_d.iter_mut().enumerate() {
            for j in 0..2 {
                *out += 0.5 * (h[i][j][j] + h[j][i][j]);
            }
        }
        let div_flux = if gamma == 0.0 { [0.0; 2] } else { flux_divergence(x) };
        let mut f = [0.0; 2];
        for i in 0..2 {
            f[i] = u[0] * g[i][0] + u[1] * g[i][1] - div_d[i] / alpha + gp[i] + gamma / alpha * div_flux[i];
        }
        f
    }

    pub fn velocity(&self, x: [f64; 2]) -> [f64; 2] {
        let [x, y] = x;
        match self.id {
            CaseId::Case1 => {
                let (sx, cx) = (PI * x).sin_cos();
                let (sy, cy) = (PI * y).sin_cos();
                [-cx * sy, sx * cy]
            }
            CaseId::Case2 => {
                let r = (x * x + y * y).cbrt();
                [y * r, -x * r]
            }
        }
    }

    /// `g[i][j] = d_j u_i`
    pub fn velocity_gradient(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        let [x, y] = x;
        match self.id {
            CaseId::Case1 => {
                let (sx, cx) = (PI * x).sin_cos();
                let (sy, cy) = (PI * y).sin_cos();
                [[PI * sx * sy, -PI * cx * cy], [PI * cx * cy, -PI * sx * sy]]
            }
            CaseId::Case2 => {
                let rho = x * x + y * y;
                if rho == 0.0 {
                    return [[0.0; 2]; 2];
                }
                let r = rho.cbrt();
                let q = 2.0 / 3.0 / (r * r);
                [[q * x * y, r + q * y * y], [-r - q * x * x, -q * x * y]]
            }
        }
    }

    /// `h[i][j][k] = d_j d_k u_i`
    pub fn velocity_hessian(&self, x: [f64; 2]) -> [[[f64; 2]; 2]; 2] {
        let [x, y] = x;
        match self.id {
            CaseId::Case1 => {
                let (sx, cx) = (PI * x).sin_cos();
                let (sy, cy) = (PI * y).sin_cos();
                let p2 = PI * PI;
                [
                    [[p2 * cx * sy, p2 * sx * cy], [p2 * sx * cy, p2 * cx * sy]],
                    [[-p2 * sx * cy, -p2 * cx * sy], [-p2 * cx * sy, -p2 * sx * cy]],
                ]
            }
            CaseId::Case2 => {
                let rho = x * x + y * y;
                let r = rho.cbrt();
                let q = 1.0 / (r * r); // rho^{-2/3}
                let s = q / rho; // rho^{-5/3}
                let c = 8.0 / 9.0;
                let u1xx = 2.0 / 3.0 * y * q - c * x * x * y * s;
                let u1xy = 2.0 / 3.0 * x * q - c * x * y * y * s;
                let u1yy = 2.0 * y * q - c * y * y * y * s;
                let u2xx = -2.0 * x * q + c * x * x * x * s;
                let u2xy = -2.0 / 3.0 * y * q + c * x * x * y * s;
                let u2yy = -2.0 / 3.0 * x * q + c * x * y * y * s;
                [[[u1xx, u1xy], [u1xy, u1yy]], [[u2xx, u2xy], [u2xy, u2yy]]]
            }
        }
    }

    pub fn pressure(&self, x: [f64; 2]) -> f64 {
        pressure(x)
    }

    pub fn pressure_gradient(&self, x: [f64; 2]) -> [f64; 2] {
        pressure_gradient(x)
    }

    pub fn stress(&self, x: [f64; 2]) -> SymTensor {
        stress(x)
    }

    /// `[d_x T, d_y T]`
    pub fn stress_gradient(&self, x: [f64; 2]) -> [SymTensor; 2] {
        stress_gradient(x)
    }
}

fn pressure(x: [f64; 2]) -> f64 {
    -((2.0 * PI * x[0]).cos() + (2.0 * PI * x[1]).cos()) / 4.0
}

fn pressure_gradient(x: [f64; 2]) -> [f64; 2] {
    [0.5 * PI * (2.0 * PI * x[0]).sin(), 0.5 * PI * (2.0 * PI * x[1]).sin()]
}

fn stress(x: [f64; 2]) -> SymTensor {
    let c = ((2.0 * PI * x[0]).cos() - (2.0 * PI * x[1]).cos()) / 4.0;
    SymTensor::diag(c, -c)
}

fn stress_gradient(x: [f64; 2]) -> [SymTensor; 2] {
    let cx = -0.5 * PI * (2.0 * PI * x[0]).sin();
    let cy = 0.5 * PI * (2.0 * PI * x[1]).sin();
    [SymTensor::diag(cx, -cx), SymTensor::diag(cy, -cy)]
}

/// `div(mu(|T|) T)` by the chain rule through the flux Jacobian, which is
/// continuous at `T = 0`.
fn flux_divergence(x: [f64; 2]) -> [f64; 2] {
    let t = stress(x);
    let j = flux_jacobian(&t);
    let dt = stress_gradient(x);
    let mut dg = [[0.0; 3]; 2];
    for (d, out) in dg.iter_mut().enumerate() {
        let c = dt[d].components();
        for a in 0..3 {
            out[a] = (0..3).map(|b| j[a][b] * c[b]).sum();
        }
    }
    // components are (xx, xy, yy)
    [dg[0][0] + dg[1][1], dg[0][1] + dg[1][2]]
}

/// `mu(|T|) T` of the exact stress.
pub fn exact_flux(x: [f64; 2]) -> SymTensor {
    flux(&stress(x))
}
