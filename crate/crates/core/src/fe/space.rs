use std::sync::Arc;

use super::reference::ReferenceElement;
use super::FeError;
use crate::mesh::Mesh;

/// Affine map from the reference triangle onto a mesh triangle.
#[derive(Debug, Clone, Copy)]
pub struct AffineMap {
    pub origin: [f64; 2],
    /// Columns are the edge vectors `x1 - x0`, `x2 - x0`.
    pub jac: [[f64; 2]; 2],
    pub det: f64,
    /// Inverse-transpose, maps reference gradients to physical ones.
    pub inv_t: [[f64; 2]; 2],
}

impl AffineMap {
    pub fn new(p: [[f64; 2]; 3]) -> Self {
        let jac = [
            [p[1][0] - p[0][0], p[2][0] - p[0][0]],
            [p[1][1] - p[0][1], p[2][1] - p[0][1]],
        ];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv_t = [
            [jac[1][1] / det, -jac[1][0] / det],
            [-jac[0][1] / det, jac[0][0] / det],
        ];
        Self {
            origin: p[0],
            jac,
            det,
            inv_t,
        }
    }

    pub fn to_physical(&self, xr: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.jac[0][0] * xr[0] + self.jac[0][1] * xr[1],
            self.origin[1] + self.jac[1][0] * xr[0] + self.jac[1][1] * xr[1],
        ]
    }

    pub fn to_reference(&self, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        // J^{-1} = (J^{-T})^T
        [
            self.inv_t[0][0] * d[0] + self.inv_t[1][0] * d[1],
            self.inv_t[0][1] * d[0] + self.inv_t[1][1] * d[1],
        ]
    }

    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv_t[0][0] * g[0] + self.inv_t[0][1] * g[1],
            self.inv_t[1][0] * g[0] + self.inv_t[1][1] * g[1],
        ]
    }
}

/// Lagrange finite element space on a mesh, scalar or 2-vector valued.
///
/// Vector dofs are blocked: component `c` of node `i` is dof `c * n_nodes + i`.
#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    element: ReferenceElement,
    components: usize,
    n_nodes: usize,
    cell_nodes: Vec<Vec<usize>>,
    node_coords: Vec<[f64; 2]>,
    dirichlet: Vec<bool>,
    zero_mean: bool,
    free: Vec<usize>,
    free_index: Vec<Option<usize>>,
}

impl FeSpace {
    pub fn new(
        mesh: Arc<Mesh>,
        degree: usize,
        components: usize,
        homogeneous_dirichlet: bool,
        zero_mean: bool,
    ) -> Result<Self, FeError> {
        let element = ReferenceElement::new(degree)?;
        if !(components == 1 || components == 2) {
            return Err(FeError::Components(components));
        }
        // number used vertices first, then edges
        let mut vertex_node = vec![usize::MAX; mesh.n_vertices()];
        let mut node_coords = Vec::new();
        let mut node_boundary = Vec::new();
        for v in 0..mesh.n_vertices() {
            if mesh.is_used_vertex(v) {
                vertex_node[v] = node_coords.len();
                node_coords.push(mesh.vertices()[v]);
                node_boundary.push(mesh.is_boundary_vertex(v));
            }
        }
        let edge_base = node_coords.len();
        if degree == 2 {
            for (e, [a, b]) in mesh.edges().iter().enumerate() {
                let (pa, pb) = (mesh.vertices()[*a], mesh.vertices()[*b]);
                node_coords.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                node_boundary.push(mesh.is_boundary_edge(e));
            }
        }
        let cell_nodes = (0..mesh.n_triangles())
            .map(|t| {
                let tri = mesh.triangles()[t];
                let mut nodes: Vec<usize> = tri.iter().map(|&v| vertex_node[v]).collect();
                if degree == 2 {
                    nodes.extend(mesh.triangle_edges(t).iter().map(|&e| edge_base + e));
                }
                nodes
            })
            .collect();
        let n_nodes = node_coords.len();
        let dirichlet: Vec<bool> = (0..components)
            .flat_map(|_| node_boundary.iter().map(|&b| b && homogeneous_dirichlet))
            .collect();
        let mut free = Vec::new();
        let mut free_index = vec![None; dirichlet.len()];
        for (d, &fixed) in dirichlet.iter().enumerate() {
            if !fixed {
                free_index[d] = Some(free.len());
                free.push(d);
            }
        }
        Ok(Self {
            mesh,
            element,
            components,
            n_nodes,
            cell_nodes,
            node_coords,
            dirichlet,
            zero_mean,
            free,
            free_index,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn element(&self) -> &ReferenceElement {
        &self.element
    }

    pub fn degree(&self) -> usize {
        self.element.degree()
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_dofs(&self) -> usize {
        self.n_nodes * self.components
    }

    pub fn cell_nodes(&self, t: usize) -> &[usize] {
        &self.cell_nodes[t]
    }

    pub fn node_coords(&self) -> &[[f64; 2]] {
        &self.node_coords
    }

    pub fn dof(&self, component: usize, node: usize) -> usize {
        component * self.n_nodes + node
    }

    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet
    }

    pub fn zero_mean(&self) -> bool {
        self.zero_mean
    }

    /// Global indices of unconstrained dofs, increasing.
    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.free_index[dof]
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn affine_map(&self, t: usize) -> AffineMap {
        AffineMap::new(self.mesh.triangle_coords(t))
    }

    /// Restrict a full coefficient vector to the free dofs.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| full[d]).collect()
    }

    /// Expand free-dof values to a full vector with zeros on constrained dofs.
    pub fn extend(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_dofs()];
        for (r, &d) in reduced.iter().zip(&self.free) {
            full[d] = *r;
        }
        full
    }

    /// Nodal interpolant of `g`, which returns one value per component.
    /// Constrained dofs are set to zero.
    pub fn interpolate(&self, g: impl Fn(f64, f64) -> [f64; 2]) -> Vec<f64> {
        let mut c = vec![0.0; self.n_dofs()];
        for (i, p) in self.node_coords.iter().enumerate() {
            let v = g(p[0], p[1]);
            for comp in 0..self.components {
                let d = self.dof(comp, i);
                if !self.dirichlet[d] {
                    c[d] = v[comp];
                }
            }
        }
        c
    }

    /// Value and physical gradient of every component of the FE function
    /// `coeffs` at reference point `xr` of cell `t`.
    pub fn eval_in_cell(&self, coeffs: &[f64], t: usize, xr: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        let map = self.affine_map(t);
        let b = self.element.eval(xr[0], xr[1]);
        let mut val = [0.0; 2];
        let mut grad = [[0.0; 2]; 2];
        for (l, &node) in self.cell_nodes[t].iter().enumerate() {
            let g = map.grad(b.grads[l]);
            for comp in 0..self.components {
                let c = coeffs[self.dof(comp, node)];
                val[comp] += c * b.values[l];
                grad[comp][0] += c * g[0];
                grad[comp][1] += c * g[1];
            }
        }
        (val, grad)
    }

    /// Find a cell containing `x` (brute force) and its reference coordinates.
    pub fn locate(&self, x: [f64; 2]) -> Option<(usize, [f64; 2])> {
        const EPS: f64 = 1e-12;
        (0..self.mesh.n_triangles()).find_map(|t| {
            let xr = self.affine_map(t).to_reference(x);
            let inside = xr[0] >= -EPS && xr[1] >= -EPS && xr[0] + xr[1] <= 1.0 + EPS;
            inside.then_some((t, xr))
        })
    }
}

pub fn build_space(
    mesh: Arc<Mesh>,
    degree: usize,
    components: usize,
    homogeneous_dirichlet: bool,
    zero_mean: bool,
) -> Result<FeSpace, FeError> {
    FeSpace::new(mesh, degree, components, homogeneous_dirichlet, zero_mean)
}
