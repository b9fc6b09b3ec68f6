//! Element kernels and global assembly of the discrete forms.
//!
//! All elements of a mesh are congruent squares, so every constant element
//! matrix is computed once per mesh. Velocity forms are assembled on the
//! unconstrained (free) DOFs; constrained values enter through residuals
//! evaluated on full coefficient vectors.

use rayon::prelude::*;

use crate::basis::{gauss_rule, physical_gradients, tabulate, ShapeTable, Space};
use crate::constitutive::{flux, flux_jacobian, ConstitutiveModel};
use crate::dofs::{build_spaces, DirichletData, SystemSpaces, PRES_PER_ELEMENT, STRESS_PER_ELEMENT, VEL_PER_ELEMENT};
use crate::mesh::QuadMesh;
use crate::sparse::{CsrMatrix, LinalgError, LuFactorization, TripletBuilder};
use crate::tensor::{SymTensor, FROBENIUS_WEIGHTS};

/// Gauss points per direction for assembled forms (exact on these elements).
pub const ASSEMBLY_ORDER: usize = 4;
/// Gauss points per direction for forcing terms and error integrals.
pub const ERROR_ORDER: usize = 5;

const NV: usize = VEL_PER_ELEMENT;
const NP: usize = PRES_PER_ELEMENT;
const NT: usize = STRESS_PER_ELEMENT;

type VelMatrix = [[f64; NV]; NV];

/// Symmetric gradient of velocity basis function `2k + d`, given `grad phi_k`.
#[inline]
fn basis_strain(d: usize, g: [f64; 2]) -> SymTensor {
    if d == 0 {
        SymTensor::new(g[0], 0.5 * g[1], 0.0)
    } else {
        SymTensor::new(0.0, 0.5 * g[0], g[1])
    }
}

/// Element stress space: 3 components times the 9 scalar Q2 functions.
#[derive(Debug, Clone)]
pub struct StressElement {
    /// Physical quadrature weights at the assembly points.
    weights: Vec<f64>,
    /// Q2 values at the assembly points.
    values: Vec<[f64; 9]>,
    mass: [[f64; 9]; 9],
    mass_inv: [[f64; 9]; 9],
    area: f64,
}

/// Moments `int mu(|T|) T : Phi_i` and optionally their Jacobian.
pub struct FluxMoments {
    pub moments: [f64; NT],
    pub jacobian: Option<Box<[[f64; NT]; NT]>>,
}

impl StressElement {
    fn new(table: &ShapeTable, weights: Vec<f64>, area: f64) -> Self {
        let values: Vec<[f64; 9]> = (0..table.num_points)
            .map(|q| {
                let mut v = [0.0; 9];
                v.copy_from_slice(table.values_at(q));
                v
            })
            .collect();
        let mut mass = [[0.0; 9]; 9];
        for (w, v) in weights.iter().zip(&values) {
            for k in 0..9 {
                for l in 0..9 {
                    mass[k][l] += w * v[k] * v[l];
                }
            }
        }
        let mut mass_inv = [[0.0; 9]; 9];
        for k in 0..9 {
            let mut e = [0.0; 9];
            e[k] = 1.0;
            let col = crate::constitutive::dense_solve(&mass, &e).expect("Q2 mass matrix is SPD");
            for l in 0..9 {
                mass_inv[l][k] = col[l];
            }
        }
        Self { weights, values, mass, mass_inv, area }
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn num_points(&self) -> usize {
        self.weights.len()
    }

    /// Scalar 9x9 Q2 mass matrix of the element.
    pub fn scalar_mass(&self) -> &[[f64; 9]; 9] {
        &self.mass
    }

    /// Stress tensor at assembly point `q`.
    #[inline]
    pub fn tensor_at(&self, coeffs: &[f64], q: usize) -> SymTensor {
        let v = &self.values[q];
        let mut c = [0.0; 3];
        for (comp, out) in c.iter_mut().enumerate() {
            let block = &coeffs[9 * comp..9 * comp + 9];
            *out = v.iter().zip(block).map(|(a, b)| a * b).sum();
        }
        SymTensor::from_components(c)
    }

    /// Stress mass matrix (Frobenius-weighted block diagonal) times `coeffs`.
    pub fn mass_apply(&self, coeffs: &[f64; NT]) -> [f64; NT] {
        let mut out = [0.0; NT];
        for c in 0..3 {
            for k in 0..9 {
                let mut s = 0.0;
                for l in 0..9 {
                    s += self.mass[k][l] * coeffs[9 * c + l];
                }
                out[9 * c + k] = FROBENIUS_WEIGHTS[c] * s;
            }
        }
        out
    }

    /// Inverse of [`Self::mass_apply`]: coefficients of the element `L2`
    /// projection whose moments are `moments`.
    pub fn mass_solve(&self, moments: &[f64]) -> [f64; NT] {
        let mut out = [0.0; NT];
        for c in 0..3 {
            for k in 0..9 {
                let mut s = 0.0;
                for l in 0..9 {
                    s += self.mass_inv[k][l] * moments[9 * c + l];
                }
                out[9 * c + k] = s / FROBENIUS_WEIGHTS[c];
            }
        }
        out
    }

    /// Writes `scale * M` (the 27x27 stress mass matrix) into `out`.
    pub fn mass_matrix_into(&self, scale: f64, out: &mut [[f64; NT]; NT]) {
        for row in out.iter_mut() {
            row.fill(0.0);
        }
        for c in 0..3 {
            for k in 0..9 {
                for l in 0..9 {
                    out[9 * c + k][9 * c + l] = scale * FROBENIUS_WEIGHTS[c] * self.mass[k][l];
                }
            }
        }
    }

    /// `L2(E)` norm of the Riesz representative of a moment vector.
    pub fn dual_norm(&self, moments: &[f64; NT]) -> f64 {
        let rep = self.mass_solve(moments);
        rep.iter().zip(moments).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
    }

    /// `int_E |T|^2`
    pub fn l2_norm_sq(&self, coeffs: &[f64]) -> f64 {
        let mut s = 0.0;
        for c in 0..3 {
            let t = &coeffs[9 * c..9 * c + 9];
            let mut q = 0.0;
            for k in 0..9 {
                for l in 0..9 {
                    q += t[k] * self.mass[k][l] * t[l];
                }
            }
            s += FROBENIUS_WEIGHTS[c] * q;
        }
        s
    }

    pub fn flux_moments(&self, coeffs: &[f64; NT], with_jacobian: bool) -> FluxMoments {
        let mut moments = [0.0; NT];
        let mut jacobian = with_jacobian.then(|| Box::new([[0.0; NT]; NT]));
        for (q, (&w, v)) in self.weights.iter().zip(&self.values).enumerate() {
            let t = self.tensor_at(coeffs, q);
            let g = flux(&t).components();
            for c in 0..3 {
                let f = w * FROBENIUS_WEIGHTS[c] * g[c];
                for k in 0..9 {
                    moments[9 * c + k] += f * v[k];
                }
            }
            if let Some(j) = jacobian.as_mut() {
                let dg = flux_jacobian(&t);
                for c in 0..3 {
                    for d in 0..3 {
                        let f = w * FROBENIUS_WEIGHTS[c] * dg[c][d];
                        if f == 0.0 {
                            continue;
                        }
                        for k in 0..9 {
                            let fk = f * v[k];
                            let row = &mut j[9 * c + k];
                            for l in 0..9 {
                                row[9 * d + l] += fk * v[l];
                            }
                        }
                    }
                }
            }
        }
        FluxMoments { moments, jacobian }
    }
}

/// Reference data and constant element matrices shared by all elements.
#[derive(Debug, Clone)]
pub struct ElementKernel {
    pub side: f64,
    /// Physical weights of the assembly rule.
    pub weights: Vec<f64>,
    pub q2: ShapeTable,
    pub q2_grad: Vec<[f64; 2]>,
    pub q1: ShapeTable,
    /// Reference points and physical weights of the error/forcing rule.
    pub fine_points: Vec<[f64; 2]>,
    pub fine_weights: Vec<f64>,
    pub fine_q2: ShapeTable,
    pub fine_q2_grad: Vec<[f64; 2]>,
    pub fine_q1: ShapeTable,
    /// `int D(phi_i):D(phi_j)`
    pub viscous: VelMatrix,
    /// `int grad phi_i : grad phi_j`
    pub stiffness: VelMatrix,
    /// `-int q_k div phi_j`
    pub divergence: [[f64; NV]; NP],
    pub pressure_mass: [[f64; NP]; NP],
    /// `int Phi_i : D(phi_j)` (stress test function against velocity basis).
    pub strain_moments: Box<[[f64; NV]; NT]>,
    pub stress: StressElement,
}

impl ElementKernel {
    pub fn new(side: f64) -> Self {
        let det = 0.25 * side * side;
        let rule = gauss_rule(ASSEMBLY_ORDER).expect("supported order");
        let fine = gauss_rule(ERROR_ORDER).expect("supported order");
        let q2 = tabulate(Space::Q2, &rule);
        let q1 = tabulate(Space::Q1, &rule);
        let q2_grad = physical_gradients(&q2, side).expect("positive side");
        let weights: Vec<f64> = rule.weights.iter().map(|w| w * det).collect();
        let fine_q2 = tabulate(Space::Q2, &fine);
        let fine_q1 = tabulate(Space::Q1, &fine);
        let fine_q2_grad = physical_gradients(&fine_q2, side).expect("positive side");
        let fine_weights = fine.weights.iter().map(|w| w * det).collect();

        let mut viscous = [[0.0; NV]; NV];
        let mut stiffness = [[0.0; NV]; NV];
        let mut divergence = [[0.0; NV]; NP];
        let mut pressure_mass = [[0.0; NP]; NP];
        let mut strain_moments = Box::new([[0.0; NV]; NT]);
        for (q, &w) in weights.iter().enumerate() {
            let g = &q2_grad[q * 9..q * 9 + 9];
            let pv = q1.values_at(q);
            let sv = q2.values_at(q);
            for a in 0..NV {
                let (ka, da) = (a / 2, a % 2);
                let sa = basis_strain(da, g[ka]);
                for b in 0..NV {
                    let (kb, db) = (b / 2, b % 2);
                    let sb = basis_strain(db, g[kb]);
                    viscous[a][b] += w * sa.dot(&sb);
                    if da == db {
                        stiffness[a][b] += w * (g[ka][0] * g[kb][0] + g[ka][1] * g[kb][1]);
                    }
                }
                let div = g[ka][da];
                for k in 0..NP {
                    divergence[k][a] -= w * pv[k] * div;
                }
                let sc = sa.components();
                for c in 0..3 {
                    for k in 0..9 {
                        strain_moments[9 * c + k][a] += w * FROBENIUS_WEIGHTS[c] * sv[k] * sc[c];
                    }
                }
            }
            for k in 0..NP {
                for l in 0..NP {
                    pressure_mass[k][l] += w * pv[k] * pv[l];
                }
            }
        }
        let stress = StressElement::new(&q2, weights.clone(), side * side);
        Self {
            side,
            weights,
            q2,
            q2_grad,
            q1,
            fine_points: fine.points,
            fine_weights,
            fine_q2,
            fine_q2_grad,
            fine_q1,
            viscous,
            stiffness,
            divergence,
            pressure_mass,
            strain_moments,
            stress,
        }
    }

    pub fn num_points(&self) -> usize {
        self.weights.len()
    }
}

/// A mesh with its spaces, element kernel and the solution-independent
/// global matrices.
#[derive(Debug)]
pub struct Discretization {
    pub mesh: QuadMesh,
    pub spaces: SystemSpaces,
    pub kernel: ElementKernel,
    /// Free x free block of `int D(u):D(v)` (unit coefficient).
    pub viscous: CsrMatrix,
    /// Pressure x free block of `-int q div v`.
    pub divergence: CsrMatrix,
    /// Full Q1 mass matrix.
    pub pressure_mass: CsrMatrix,
    pub pressure_mass_lu: LuFactorization,
    /// Full vector-Laplacian stiffness `int grad u : grad v` (for norms).
    pub velocity_stiffness: CsrMatrix,
}

impl Discretization {
    pub fn new(mesh: QuadMesh) -> Result<Self, LinalgError> {
        let spaces = build_spaces(&mesh);
        let kernel = ElementKernel::new(mesh.side());
        let viscous = assemble_free_block(&spaces, &kernel.viscous);
        let divergence = {
            let mut b = TripletBuilder::with_capacity(spaces.n_p, spaces.n_free(), spaces.n_elements() * NP * NV);
            for e in 0..spaces.n_elements() {
                let vm = &spaces.velocity_map[e];
                let pm = &spaces.pressure_map[e];
                for (k, row) in kernel.divergence.iter().enumerate() {
                    for (a, &v) in row.iter().enumerate() {
                        if let Some(j) = spaces.free_index(vm[a]) {
                            b.push(pm[k], j, v);
                        }
                    }
                }
            }
            b.build()
        };
        let pressure_mass = assemble_pressure_mass(&spaces, &kernel);
        let pressure_mass_lu = LuFactorization::new(&pressure_mass)?;
        let velocity_stiffness = {
            let mut b = TripletBuilder::with_capacity(spaces.n_u, spaces.n_u, spaces.n_elements() * NV * NV);
            for vm in &spaces.velocity_map {
                for a in 0..NV {
                    for bb in 0..NV {
                        let v = kernel.stiffness[a][bb];
                        if v != 0.0 {
                            b.push(vm[a], vm[bb], v);
                        }
                    }
                }
            }
            b.build()
        };
        Ok(Self { mesh, spaces, kernel, viscous, divergence, pressure_mass, pressure_mass_lu, velocity_stiffness })
    }

    pub fn n_elements(&self) -> usize {
        self.spaces.n_elements()
    }

    #[inline]
    pub fn element_velocity(&self, u: &[f64], e: usize) -> [f64; NV] {
        let vm = &self.spaces.velocity_map[e];
        let mut out = [0.0; NV];
        for a in 0..NV {
            out[a] = u[vm[a]];
        }
        out
    }

    #[inline]
    pub fn element_pressure(&self, p: &[f64], e: usize) -> [f64; NP] {
        let pm = &self.spaces.pressure_map[e];
        [p[pm[0]], p[pm[1]], p[pm[2]], p[pm[3]]]
    }

    #[inline]
    pub fn element_stress<'a>(&self, t: &'a [f64], e: usize) -> &'a [f64] {
        &t[NT * e..NT * (e + 1)]
    }

    /// Full-length `K u` where `K` is a constant element matrix.
    fn element_matrix_action(&self, m: &VelMatrix, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.spaces.n_u];
        for e in 0..self.n_elements() {
            let ue = self.element_velocity(u, e);
            let vm = &self.spaces.velocity_map[e];
            for a in 0..NV {
                let s: f64 = m[a].iter().zip(&ue).map(|(x, y)| x * y).sum();
                out[vm[a]] += s;
            }
        }
        out
    }

    /// Free rows of `int D(u):D(v_i)` for a full velocity vector.
    pub fn viscous_residual(&self, u: &[f64]) -> Vec<f64> {
        self.spaces.restrict_to_free(&self.element_matrix_action(&self.kernel.viscous, u))
    }

    /// `-int q_k div u` for a full velocity vector.
    pub fn divergence_action(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.spaces.n_p];
        for e in 0..self.n_elements() {
            let ue = self.element_velocity(u, e);
            let pm = &self.spaces.pressure_map[e];
            for k in 0..NP {
                out[pm[k]] += self.kernel.divergence[k].iter().zip(&ue).map(|(x, y)| x * y).sum::<f64>();
            }
        }
        out
    }

    /// `B^T p` on the free velocity DOFs.
    pub fn gradient_action(&self, p: &[f64]) -> Vec<f64> {
        self.divergence.mul_transpose_vec(p)
    }

    /// `||grad u||_{L2}`
    pub fn velocity_grad_norm(&self, u: &[f64]) -> f64 {
        crate::sparse::dot(u, &self.velocity_stiffness.mul_vec(u)).max(0.0).sqrt()
    }

    /// `||D(u)||_{L2}`
    pub fn strain_norm(&self, u: &[f64]) -> f64 {
        crate::sparse::dot(u, &self.element_matrix_action(&self.kernel.viscous, u)).max(0.0).sqrt()
    }

    pub fn pressure_norm(&self, p: &[f64]) -> f64 {
        crate::sparse::dot(p, &self.pressure_mass.mul_vec(p)).max(0.0).sqrt()
    }

    pub fn pressure_mean(&self, p: &[f64]) -> f64 {
        self.pressure_mass.mul_vec(p).iter().sum::<f64>() / self.mesh.area()
    }

    /// Shifts `p` to zero mean.
    pub fn center_pressure(&self, p: &mut [f64]) {
        let m = self.pressure_mean(p);
        p.iter_mut().for_each(|v| *v -= m);
    }

    pub fn stress_norm(&self, t: &[f64]) -> f64 {
        (0..self.n_elements())
            .map(|e| self.kernel.stress.l2_norm_sq(self.element_stress(t, e)))
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    }

    /// Physical coordinates of the error-rule points on element `e`.
    pub fn fine_points(&self, e: usize) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.kernel.fine_points.iter().map(move |xi| self.mesh.map_point(e, *xi))
    }
}

fn assemble_free_block(spaces: &SystemSpaces, m: &VelMatrix) -> CsrMatrix {
    let n = spaces.n_free();
    let mut b = TripletBuilder::with_capacity(n, n, spaces.n_elements() * NV * NV);
    for vm in &spaces.velocity_map {
        push_free_block(&mut b, spaces, vm, m);
    }
    b.build()
}

fn push_free_block(b: &mut TripletBuilder, spaces: &SystemSpaces, vm: &[usize; NV], m: &VelMatrix) {
    for a in 0..NV {
        let Some(i) = spaces.free_index(vm[a]) else { continue };
        for c in 0..NV {
            let v = m[a][c];
            if v == 0.0 {
                continue;
            }
            if let Some(j) = spaces.free_index(vm[c]) {
                b.push(i, j, v);
            }
        }
    }
}

/// Saddle-point data `[A B^T; B 0][U; P] = [F; G]` on the free velocity DOFs.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    pub a: CsrMatrix,
    pub b: CsrMatrix,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

/// Viscous block `(1/alpha) int D(u):D(v)`, divergence block `-int q div v`,
/// and the boundary lift moved to the right-hand sides.
pub fn assemble_viscous_divergence(disc: &Discretization, dirichlet: &DirichletData, alpha: f64) -> SaddleSystem {
    let lift = dirichlet.lift(disc.spaces.n_u);
    let f = disc.viscous_residual(&lift).iter().map(|v| -v / alpha).collect();
    let g = disc.divergence_action(&lift).iter().map(|v| -v).collect();
    SaddleSystem { a: disc.viscous.scaled(1.0 / alpha), b: disc.divergence.clone(), f, g }
}

pub fn assemble_pressure_mass(spaces: &SystemSpaces, kernel: &ElementKernel) -> CsrMatrix {
    let mut b = TripletBuilder::with_capacity(spaces.n_p, spaces.n_p, spaces.n_elements() * NP * NP);
    for pm in &spaces.pressure_map {
        for k in 0..NP {
            for l in 0..NP {
                b.push(pm[k], pm[l], kernel.pressure_mass[k][l]);
            }
        }
    }
    b.build()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvectionMode {
    Residual,
    Jacobian,
}

#[derive(Debug, Clone)]
pub enum ConvectionOutput {
    Residual(Vec<f64>),
    Jacobian(CsrMatrix),
}

/// Element contributions of `d(u; u, v)` and of its derivative
/// `w -> d(w; u, v) + d(u; w, v)`, with
/// `d(a; b, c) = 1/2 int ((a.grad) b).c - 1/2 int ((a.grad) c).b`.
fn convection_element(kernel: &ElementKernel, ue: &[f64; NV], want_jac: bool) -> ([f64; NV], Option<Box<VelMatrix>>) {
    let mut res = [0.0; NV];
    let mut jac = want_jac.then(|| Box::new([[0.0; NV]; NV]));
    for (q, &w) in kernel.weights.iter().enumerate() {
        let phi = kernel.q2.values_at(q);
        let g = &kernel.q2_grad[q * 9..q * 9 + 9];
        let mut u = [0.0; 2];
        let mut grad = [[0.0; 2]; 2];
        for k in 0..9 {
            for i in 0..2 {
                let c = ue[2 * k + i];
                u[i] += phi[k] * c;
                grad[i][0] += g[k][0] * c;
                grad[i][1] += g[k][1] * c;
            }
        }
        let adv = [u[0] * grad[0][0] + u[1] * grad[0][1], u[0] * grad[1][0] + u[1] * grad[1][1]];
        // u . grad(phi_k)
        let mut udg = [0.0; 9];
        for k in 0..9 {
            udg[k] = u[0] * g[k][0] + u[1] * g[k][1];
        }
        let hw = 0.5 * w;
        for k in 0..9 {
            for d in 0..2 {
                res[2 * k + d] += hw * (adv[d] * phi[k] - udg[k] * u[d]);
            }
        }
        if let Some(j) = jac.as_mut() {
            for k in 0..9 {
                for d in 0..2 {
                    let row = &mut j[2 * k + d];
                    for kp in 0..9 {
                        for dp in 0..2 {
                            let mut v = phi[k] * phi[kp] * grad[d][dp] - phi[kp] * g[k][dp] * u[d];
                            if d == dp {
                                v += udg[kp] * phi[k] - udg[k] * phi[kp];
                            }
                            row[2 * kp + dp] += hw * v;
                        }
                    }
                }
            }
        }
    }
    (res, jac)
}

/// Skew-symmetric convection on the free test functions: either the vector
/// `d(u; u, v_i)` or its Jacobian (free x free) at the full velocity `u`.
pub fn assemble_convection(disc: &Discretization, u: &[f64], mode: ConvectionMode) -> ConvectionOutput {
    let spaces = &disc.spaces;
    match mode {
        ConvectionMode::Residual => {
            let locals: Vec<[f64; NV]> = (0..disc.n_elements())
                .into_par_iter()
                .map(|e| convection_element(&disc.kernel, &disc.element_velocity(u, e), false).0)
                .collect();
            let mut full = vec![0.0; spaces.n_u];
            for (e, r) in locals.iter().enumerate() {
                for (a, &dof) in spaces.velocity_map[e].iter().enumerate() {
                    full[dof] += r[a];
                }
            }
            ConvectionOutput::Residual(spaces.restrict_to_free(&full))
        }
        ConvectionMode::Jacobian => ConvectionOutput::Jacobian(assemble_convection_jacobian(disc, u, None)),
    }
}

/// Convection Jacobian at `u`, optionally added to `base` (free x free).
pub fn assemble_convection_jacobian(disc: &Discretization, u: &[f64], base: Option<(&VelMatrix, f64)>) -> CsrMatrix {
    let spaces = &disc.spaces;
    let n = spaces.n_free();
    let chunks: Vec<TripletBuilder> = (0..disc.n_elements())
        .into_par_iter()
        .fold(
            || TripletBuilder::new(n, n),
            |mut b, e| {
                let (_, j) = convection_element(&disc.kernel, &disc.element_velocity(u, e), true);
                let mut m = *j.expect("jacobian requested");
                if let Some((base, scale)) = base {
                    for a in 0..NV {
                        for c in 0..NV {
                            m[a][c] += scale * base[a][c];
                        }
                    }
                }
                push_free_block(&mut b, spaces, &spaces.velocity_map[e], &m);
                b
            },
        )
        .collect();
    let mut all = TripletBuilder::with_capacity(n, n, disc.n_elements() * NV * NV);
    for c in chunks {
        all.extend(c);
    }
    all.build()
}

/// `d(a; b, c)` for full velocity vectors, evaluated element by element.
pub fn convection_form(disc: &Discretization, a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let kernel = &disc.kernel;
    (0..disc.n_elements())
        .into_par_iter()
        .map(|e| {
            let (ae, be, ce) = (disc.element_velocity(a, e), disc.element_velocity(b, e), disc.element_velocity(c, e));
            let mut s = 0.0;
            for (q, &w) in kernel.weights.iter().enumerate() {
                let phi = kernel.q2.values_at(q);
                let g = &kernel.q2_grad[q * 9..q * 9 + 9];
                let mut av = [0.0; 2];
                let mut bv = [0.0; 2];
                let mut cv = [0.0; 2];
                let mut gb = [[0.0; 2]; 2];
                let mut gc = [[0.0; 2]; 2];
                for k in 0..9 {
                    for i in 0..2 {
                        av[i] += phi[k] * ae[2 * k + i];
                        bv[i] += phi[k] * be[2 * k + i];
                        cv[i] += phi[k] * ce[2 * k + i];
                        for j in 0..2 {
                            gb[i][j] += g[k][j] * be[2 * k + i];
                            gc[i][j] += g[k][j] * ce[2 * k + i];
                        }
                    }
                }
                for i in 0..2 {
                    let adb = av[0] * gb[i][0] + av[1] * gb[i][1];
                    let adc = av[0] * gc[i][0] + av[1] * gc[i][1];
                    s += 0.5 * w * (adb * cv[i] - adc * bv[i]);
                }
            }
            s
        })
        .sum()
}

/// Free rows of `(gamma/alpha) int mu(|T|) T : D(v_i)`.
pub fn assemble_stress_coupling_rhs(disc: &Discretization, t: &[f64], model: &ConstitutiveModel) -> Vec<f64> {
    let spaces = &disc.spaces;
    if model.gamma == 0.0 {
        return vec![0.0; spaces.n_free()];
    }
    let scale = model.gamma / model.alpha;
    let kernel = &disc.kernel;
    let locals: Vec<[f64; NV]> = (0..disc.n_elements())
        .into_par_iter()
        .map(|e| {
            let te = disc.element_stress(t, e);
            let mut r = [0.0; NV];
            for (q, &w) in kernel.weights.iter().enumerate() {
                let gq = flux(&kernel.stress.tensor_at(te, q));
                let g = &kernel.q2_grad[q * 9..q * 9 + 9];
                for a in 0..NV {
                    r[a] += scale * w * gq.dot(&basis_strain(a % 2, g[a / 2]));
                }
            }
            r
        })
        .collect();
    let mut full = vec![0.0; spaces.n_u];
    for (e, r) in locals.iter().enumerate() {
        for (a, &dof) in spaces.velocity_map[e].iter().enumerate() {
            full[dof] += r[a];
        }
    }
    spaces.restrict_to_free(&full)
}

/// Free rows of `int f . v_i` by the fine rule.
pub fn assemble_forcing(disc: &Discretization, f: impl Fn([f64; 2]) -> [f64; 2] + Sync) -> Vec<f64> {
    let spaces = &disc.spaces;
    let kernel = &disc.kernel;
    let locals: Vec<[f64; NV]> = (0..disc.n_elements())
        .into_par_iter()
        .map(|e| {
            let mut r = [0.0; NV];
            for (q, x) in disc.fine_points(e).enumerate() {
                let fx = f(x);
                let w = kernel.fine_weights[q];
                let phi = kernel.fine_q2.values_at(q);
                for k in 0..9 {
                    r[2 * k] += w * fx[0] * phi[k];
                    r[2 * k + 1] += w * fx[1] * phi[k];
                }
            }
            r
        })
        .collect();
    let mut full = vec![0.0; spaces.n_u];
    for (e, r) in locals.iter().enumerate() {
        for (a, &dof) in spaces.velocity_map[e].iter().enumerate() {
            full[dof] += r[a];
        }
    }
    spaces.restrict_to_free(&full)
}

/// Moments `int_E Phi_i : D(u_h)` for all elements (exact).
pub fn strain_moments(disc: &Discretization, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; disc.spaces.n_t];
    for e in 0..disc.n_elements() {
        let ue = disc.element_velocity(u, e);
        let block = &mut out[NT * e..NT * (e + 1)];
        for (i, row) in disc.kernel.strain_moments.iter().enumerate() {
            block[i] = row.iter().zip(&ue).map(|(a, b)| a * b).sum();
        }
    }
    out
}

/// Moments `int_E Phi_i : g` of a tensor field, by the fine rule.
pub fn tensor_field_moments(disc: &Discretization, g: impl Fn([f64; 2]) -> SymTensor + Sync) -> Vec<f64> {
    let kernel = &disc.kernel;
    let blocks: Vec<[f64; NT]> = (0..disc.n_elements())
        .into_par_iter()
        .map(|e| {
            let mut m = [0.0; NT];
            for (q, x) in disc.fine_points(e).enumerate() {
                let gc = g(x).components();
                let w = kernel.fine_weights[q];
                let phi = kernel.fine_q2.values_at(q);
                for c in 0..3 {
                    for k in 0..9 {
                        m[9 * c + k] += w * FROBENIUS_WEIGHTS[c] * gc[c] * phi[k];
                    }
                }
            }
            m
        })
        .collect();
    blocks.into_iter().flatten().collect()
}

/// Per-element right-hand-side data of the stress equations.
#[derive(Debug, Clone)]
pub struct StressLocalLoads {
    /// `int_E Phi_i : D(u_h)`
    pub strain: Vec<f64>,
    /// `int_E Phi_i : g`
    pub extra: Vec<f64>,
}

impl StressLocalLoads {
    /// Moments of `D(u_h) + g` on element `e`.
    pub fn combined(&self, e: usize) -> [f64; NT] {
        let mut out = [0.0; NT];
        let s = &self.strain[NT * e..NT * (e + 1)];
        let g = &self.extra[NT * e..NT * (e + 1)];
        for i in 0..NT {
            out[i] = s[i] + g[i];
        }
        out
    }
}

/// Loads for the stress equations given the velocity and the precomputed
/// moments of the manufactured tensor `g`.
pub fn compute_stress_local_loads(disc: &Discretization, u: &[f64], g_moments: &[f64]) -> StressLocalLoads {
    StressLocalLoads { strain: strain_moments(disc, u), extra: g_moments.to_vec() }
}

/// Element-wise `L2` projection of a moment vector onto the stress space.
pub fn project_moments(disc: &Discretization, moments: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; disc.spaces.n_t];
    for e in 0..disc.n_elements() {
        let c = disc.kernel.stress.mass_solve(&moments[NT * e..NT * (e + 1)]);
        out[NT * e..NT * (e + 1)].copy_from_slice(&c);
    }
    out
}

/// Nodal interpolant of a tensor field in the stress space.
pub fn interpolate_stress(disc: &Discretization, t: impl Fn([f64; 2]) -> SymTensor) -> Vec<f64> {
    let nodes = Space::Q2.nodes();
    let mut out = vec![0.0; disc.spaces.n_t];
    for e in 0..disc.n_elements() {
        for (k, xi) in nodes.iter().enumerate() {
            let c = t(disc.mesh.map_point(e, *xi)).components();
            for comp in 0..3 {
                out[SystemSpaces::stress_dof(e, comp, k)] = c[comp];
            }
        }
    }
    out
}
