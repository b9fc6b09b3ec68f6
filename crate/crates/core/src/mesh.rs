//! Structured meshes of axis-aligned square elements.
//!
//! Two domains are supported: the unit square `(0,1)^2` and the L-shaped
//! domain `(-1,1)^2 \ [0,1)^2`. At refinement level `n` every element is a
//! square of side `1/2^n`. Vertices and elements are numbered
//! lexicographically by `(y, x)`.

use thiserror::Error;

/// Largest refinement level accepted by [`MeshSpec::new`].
pub const MAX_LEVEL: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    UnitSquare,
    LShape,
}

impl Domain {
    pub fn area(self) -> f64 {
        match self {
            Domain::UnitSquare => 1.0,
            Domain::LShape => 3.0,
        }
    }

    /// Lower-left corner of the bounding box.
    pub fn origin(self) -> [f64; 2] {
        match self {
            Domain::UnitSquare => [0.0, 0.0],
            Domain::LShape => [-1.0, -1.0],
        }
    }

    /// Whether `x` lies in the closure of the domain (up to `tol`).
    pub fn contains(self, x: [f64; 2], tol: f64) -> bool {
        match self {
            Domain::UnitSquare => x[0] >= -tol && x[0] <= 1.0 + tol && x[1] >= -tol && x[1] <= 1.0 + tol,
            Domain::LShape => {
                let in_box = x[0] >= -1.0 - tol && x[0] <= 1.0 + tol && x[1] >= -1.0 - tol && x[1] <= 1.0 + tol;
                in_box && !(x[0] > tol && x[1] > tol)
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("refinement level {0} outside 1..={MAX_LEVEL}")]
    InvalidLevel(u32),
    #[error("element index {index} out of range (mesh has {count} elements)")]
    ElementOutOfRange { index: usize, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshSpec {
    domain: Domain,
    level: u32,
}

impl MeshSpec {
    pub fn new(domain: Domain, level: u32) -> Result<Self, MeshError> {
        if level == 0 || level > MAX_LEVEL {
            return Err(MeshError::InvalidLevel(level));
        }
        Ok(Self { domain, level })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn side(&self) -> f64 {
        1.0 / f64::from(1u32 << self.level)
    }

    /// Element diameter `sqrt(2) / 2^n`.
    pub fn diameter(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.side()
    }
}

/// Local edge numbering of a square element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LocalEdge {
    Bottom = 0,
    Right = 1,
    Top = 2,
    Left = 3,
}

impl LocalEdge {
    pub const ALL: [LocalEdge; 4] = [LocalEdge::Bottom, LocalEdge::Right, LocalEdge::Top, LocalEdge::Left];

    /// Offset of the neighbouring cell across this edge.
    fn neighbour_offset(self) -> (i64, i64) {
        match self {
            LocalEdge::Bottom => (0, -1),
            LocalEdge::Right => (1, 0),
            LocalEdge::Top => (0, 1),
            LocalEdge::Left => (-1, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub element: usize,
    pub edge: LocalEdge,
}

#[derive(Debug, Clone)]
pub struct QuadMesh {
    spec: MeshSpec,
    /// Number of cells per direction of the bounding grid.
    grid_cells: usize,
    pub vertices: Vec<[f64; 2]>,
    /// Counter-clockwise vertex indices: lower-left, lower-right, upper-right, upper-left.
    pub elements: Vec<[usize; 4]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Integer grid position `(i, j)` of each element's lower-left corner.
    cells: Vec<[usize; 2]>,
    pub h: f64,
}

impl QuadMesh {
    pub fn spec(&self) -> MeshSpec {
        self.spec
    }

    pub fn domain(&self) -> Domain {
        self.spec.domain
    }

    pub fn level(&self) -> u32 {
        self.spec.level
    }

    pub fn side(&self) -> f64 {
        self.spec.side()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn area(&self) -> f64 {
        self.domain().area()
    }

    /// Cells per direction of the bounding grid.
    pub fn grid_cells(&self) -> usize {
        self.grid_cells
    }

    /// Integer grid position of the element's lower-left corner.
    pub fn cell(&self, e: usize) -> [usize; 2] {
        self.cells[e]
    }

    /// Lower-left corner and side length of element `e`.
    ///
    /// The map `x = origin + (side/2)(xi + 1)` (componentwise) takes the
    /// reference square `[-1,1]^2` onto the element.
    pub fn element_geometry(&self, e: usize) -> Result<([f64; 2], f64), MeshError> {
        if e >= self.elements.len() {
            return Err(MeshError::ElementOutOfRange { index: e, count: self.elements.len() });
        }
        Ok((self.element_origin(e), self.side()))
    }

    pub(crate) fn element_origin(&self, e: usize) -> [f64; 2] {
        let o = self.domain().origin();
        let s = self.side();
        let [i, j] = self.cells[e];
        [o[0] + i as f64 * s, o[1] + j as f64 * s]
    }

    /// Maps a reference point of `[-1,1]^2` into element `e`.
    pub fn map_point(&self, e: usize, xi: [f64; 2]) -> [f64; 2] {
        let o = self.element_origin(e);
        let half = 0.5 * self.side();
        [o[0] + half * (xi[0] + 1.0), o[1] + half * (xi[1] + 1.0)]
    }

    /// Determinant of the (constant) reference-to-physical Jacobian.
    pub fn jacobian_det(&self) -> f64 {
        let s = self.side();
        0.25 * s * s
    }

    /// Element containing `x`, if any (ties resolved towards the lower-left cell).
    pub fn locate(&self, x: [f64; 2]) -> Option<usize> {
        let o = self.domain().origin();
        let s = self.side();
        let n = self.grid_cells;
        let fi = ((x[0] - o[0]) / s).floor();
        let fj = ((x[1] - o[1]) / s).floor();
        let clamp = |v: f64| -> Option<usize> {
            if v < -1.0 || v > n as f64 {
                None
            } else {
                Some((v.max(0.0) as usize).min(n - 1))
            }
        };
        let (i, j) = (clamp(fi)?, clamp(fj)?);
        self.cells.iter().position(|c| *c == [i, j])
    }
}

fn cell_in_domain(domain: Domain, n: usize, i: i64, j: i64) -> bool {
    let n = n as i64;
    if i < 0 || j < 0 || i >= n || j >= n {
        return false;
    }
    match domain {
        Domain::UnitSquare => true,
        Domain::LShape => !(i >= n / 2 && j >= n / 2),
    }
}

/// Builds the structured mesh described by `spec`.
pub fn build_mesh(spec: MeshSpec) -> QuadMesh {
    let per_unit = 1usize << spec.level;
    let n = match spec.domain {
        Domain::UnitSquare => per_unit,
        Domain::LShape => 2 * per_unit,
    };
    let inside = |i: i64, j: i64| cell_in_domain(spec.domain, n, i, j);

    let mut vertex_id = vec![usize::MAX; (n + 1) * (n + 1)];
    let mut vertices = Vec::new();
    let o = spec.domain.origin();
    let s = spec.side();
    for j in 0..=n {
        for i in 0..=n {
            let (ii, jj) = (i as i64, j as i64);
            let used = inside(ii - 1, jj - 1) || inside(ii, jj - 1) || inside(ii - 1, jj) || inside(ii, jj);
            if used {
                vertex_id[j * (n + 1) + i] = vertices.len();
                vertices.push([o[0] + i as f64 * s, o[1] + j as f64 * s]);
            }
        }
    }

    let mut elements = Vec::new();
    let mut cells = Vec::new();
    let mut boundary_edges = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if !inside(i as i64, j as i64) {
                continue;
            }
            let v = |a: usize, b: usize| vertex_id[(j + b) * (n + 1) + i + a];
            let e = elements.len();
            elements.push([v(0, 0), v(1, 0), v(1, 1), v(0, 1)]);
            cells.push([i, j]);
            for edge in LocalEdge::ALL {
                let (di, dj) = edge.neighbour_offset();
                if !inside(i as i64 + di, j as i64 + dj) {
                    boundary_edges.push(BoundaryEdge { element: e, edge });
                }
            }
        }
    }

    QuadMesh { spec, grid_cells: n, vertices, elements, boundary_edges, cells, h: spec.diameter() }
}
