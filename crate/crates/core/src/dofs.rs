//! Global degree-of-freedom numbering for velocity (continuous Q2 vector),
//! pressure (continuous Q1) and stress (element-discontinuous symmetric Q2
//! tensor), plus Dirichlet data for the velocity.

use crate::mesh::{LocalEdge, QuadMesh};

/// Velocity DOFs per element: 9 Q2 nodes times 2 components, ordered `2k + c`.
pub const VEL_PER_ELEMENT: usize = 18;
/// Pressure DOFs per element (Q1 vertices in lexicographic local order).
pub const PRES_PER_ELEMENT: usize = 4;
/// Stress DOFs per element: 3 tensor components times 9 Q2 functions, ordered `9c + k`.
pub const STRESS_PER_ELEMENT: usize = 27;

#[derive(Debug, Clone)]
pub struct SystemSpaces {
    pub velocity_map: Vec<[usize; VEL_PER_ELEMENT]>,
    pub pressure_map: Vec<[usize; PRES_PER_ELEMENT]>,
    pub n_u: usize,
    pub n_p: usize,
    pub n_t: usize,
    /// Coordinates of the Q2 nodes; velocity DOF `2i + c` lives on node `i`.
    pub velocity_nodes: Vec<[f64; 2]>,
    /// Coordinates of the pressure DOFs (the mesh vertices).
    pub pressure_nodes: Vec<[f64; 2]>,
    /// Per velocity DOF, its index among the unconstrained DOFs.
    free_index: Vec<Option<usize>>,
    free_dofs: Vec<usize>,
    boundary_dofs: Vec<usize>,
}

impl SystemSpaces {
    pub fn n_elements(&self) -> usize {
        self.velocity_map.len()
    }

    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.free_index[dof]
    }

    /// Velocity DOFs not on the boundary, ascending.
    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    /// Velocity DOFs on the boundary, ascending.
    pub fn boundary_dofs(&self) -> &[usize] {
        &self.boundary_dofs
    }

    pub fn is_boundary_dof(&self, dof: usize) -> bool {
        self.free_index[dof].is_none()
    }

    /// Global stress DOF of component `c` (0: xx, 1: xy, 2: yy), local function `k` on element `e`.
    #[inline]
    pub fn stress_dof(e: usize, c: usize, k: usize) -> usize {
        STRESS_PER_ELEMENT * e + 9 * c + k
    }

    /// Gathers the free entries of a full velocity vector.
    pub fn restrict_to_free(&self, full: &[f64]) -> Vec<f64> {
        self.free_dofs.iter().map(|&d| full[d]).collect()
    }

    /// Adds a free-DOF vector into a full velocity vector.
    pub fn add_free(&self, full: &mut [f64], free: &[f64]) {
        for (&d, v) in self.free_dofs.iter().zip(free) {
            full[d] += v;
        }
    }

    /// Scatters a free-DOF vector into a full vector with zero boundary values.
    pub fn extend_free(&self, free: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_u];
        self.add_free(&mut full, free);
        full
    }

    /// Nodal interpolant of a vector field in the velocity space.
    pub fn interpolate_velocity(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_u];
        for (i, x) in self.velocity_nodes.iter().enumerate() {
            let v = f(*x);
            out[2 * i] = v[0];
            out[2 * i + 1] = v[1];
        }
        out
    }

    /// Nodal interpolant of a scalar field in the pressure space.
    pub fn interpolate_pressure(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        self.pressure_nodes.iter().map(|x| f(*x)).collect()
    }
}

/// Nodes of the element edge in local Q2 numbering.
fn edge_q2_nodes(edge: LocalEdge) -> [usize; 3] {
    match edge {
        LocalEdge::Bottom => [0, 1, 2],
        LocalEdge::Right => [2, 5, 8],
        LocalEdge::Top => [6, 7, 8],
        LocalEdge::Left => [0, 3, 6],
    }
}

pub fn build_spaces(mesh: &QuadMesh) -> SystemSpaces {
    let n = mesh.grid_cells();
    let stride = 2 * n + 1;
    let ne = mesh.num_elements();

    // Q2 nodes live on the half-grid; mark the used ones, then number them
    // lexicographically by (y, x).
    let mut used = vec![false; stride * stride];
    for e in 0..ne {
        let [i, j] = mesh.cell(e);
        for b in 0..3 {
            for a in 0..3 {
                used[(2 * j + b) * stride + 2 * i + a] = true;
            }
        }
    }
    let mut node_id = vec![usize::MAX; stride * stride];
    let mut velocity_nodes = Vec::new();
    let origin = mesh.domain().origin();
    let half = 0.5 * mesh.side();
    for jj in 0..stride {
        for ii in 0..stride {
            if used[jj * stride + ii] {
                node_id[jj * stride + ii] = velocity_nodes.len();
                velocity_nodes.push([origin[0] + ii as f64 * half, origin[1] + jj as f64 * half]);
            }
        }
    }

    let mut velocity_map = Vec::with_capacity(ne);
    let mut pressure_map = Vec::with_capacity(ne);
    for e in 0..ne {
        let [i, j] = mesh.cell(e);
        let mut vm = [0usize; VEL_PER_ELEMENT];
        for k in 0..9 {
            let (a, b) = (k % 3, k / 3);
            let node = node_id[(2 * j + b) * stride + 2 * i + a];
            vm[2 * k] = 2 * node;
            vm[2 * k + 1] = 2 * node + 1;
        }
        velocity_map.push(vm);
        let v = mesh.elements[e];
        // element vertices are counter-clockwise; Q1 local order is lexicographic
        pressure_map.push([v[0], v[1], v[3], v[2]]);
    }

    let n_u = 2 * velocity_nodes.len();
    let mut on_boundary = vec![false; n_u];
    for be in &mesh.boundary_edges {
        for k in edge_q2_nodes(be.edge) {
            on_boundary[velocity_map[be.element][2 * k]] = true;
            on_boundary[velocity_map[be.element][2 * k + 1]] = true;
        }
    }
    let mut free_index = vec![None; n_u];
    let mut free_dofs = Vec::new();
    let mut boundary_dofs = Vec::new();
    for d in 0..n_u {
        if on_boundary[d] {
            boundary_dofs.push(d);
        } else {
            free_index[d] = Some(free_dofs.len());
            free_dofs.push(d);
        }
    }

    SystemSpaces {
        velocity_map,
        pressure_map,
        n_u,
        n_p: mesh.num_vertices(),
        n_t: STRESS_PER_ELEMENT * ne,
        velocity_nodes,
        pressure_nodes: mesh.vertices.clone(),
        free_index,
        free_dofs,
        boundary_dofs,
    }
}

/// Prescribed values of the constrained (boundary) velocity DOFs.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletData {
    pub dofs: Vec<usize>,
    pub values: Vec<f64>,
}

impl DirichletData {
    pub fn homogeneous(spaces: &SystemSpaces) -> Self {
        Self { dofs: spaces.boundary_dofs().to_vec(), values: vec![0.0; spaces.boundary_dofs().len()] }
    }

    /// Overwrites the constrained entries of a full velocity vector.
    pub fn apply(&self, u: &mut [f64]) {
        for (&d, &v) in self.dofs.iter().zip(&self.values) {
            u[d] = v;
        }
    }

    /// Full velocity vector holding the boundary values and zero elsewhere.
    pub fn lift(&self, n_u: usize) -> Vec<f64> {
        let mut u = vec![0.0; n_u];
        self.apply(&mut u);
        u
    }
}

/// Nodal interpolation of `u_exact` at the boundary velocity nodes.
pub fn interpolate_dirichlet(spaces: &SystemSpaces, u_exact: impl Fn([f64; 2]) -> [f64; 2]) -> DirichletData {
    let dofs = spaces.boundary_dofs().to_vec();
    let values = dofs
        .iter()
        .map(|&d| {
            let v = u_exact(spaces.velocity_nodes[d / 2]);
            v[d % 2]
        })
        .collect();
    DirichletData { dofs, values }
}
