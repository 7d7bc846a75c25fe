//! Dense reference implementation of the first three levels of the scheme.
//!
//! Written against the mesh only: own node numbering, barycentric Lagrange
//! bases on the physical triangle, collapsed Gauss-Legendre quadrature and
//! dense nalgebra factorizations.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};

pub type Field = fn(f64, f64) -> [f64; 2];
/// Forcing given as `a(x, y) + t b(x, y)`.
pub type Forcing = (Field, Field);

/// Gauss-Legendre rule on [0, 1] from the Jacobi matrix eigenproblem.
fn gauss_legendre_01(n: usize) -> Vec<(f64, f64)> {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut rule: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (0.5 * (eig.eigenvalues[i] + 1.0), v0 * v0)
        })
        .collect();
    rule.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    rule
}

struct Cell {
    /// Global node index of each local basis function.
    nodes: Vec<usize>,
    /// Barycentric index pair per local function; equal indices mean a vertex function.
    pairs: Vec<(usize, usize)>,
    inv: Matrix3<f64>,
    /// Quadrature points (x, y, weight) on this cell.
    quad: Vec<(f64, f64, f64)>,
}

impl Cell {
    fn lambda(&self, x: f64, y: f64) -> Vector3<f64> {
        self.inv * Vector3::new(1.0, x, y)
    }

    fn dlambda(&self, i: usize) -> [f64; 2] {
        [self.inv[(i, 1)], self.inv[(i, 2)]]
    }

    fn basis(&self, degree: usize, x: f64, y: f64) -> (Vec<f64>, Vec<[f64; 2]>) {
        let l = self.lambda(x, y);
        let mut v = Vec::new();
        let mut g = Vec::new();
        for &(i, j) in &self.pairs {
            let (di, dj) = (self.dlambda(i), self.dlambda(j));
            if degree == 1 {
                v.push(l[i]);
                g.push(di);
            } else if i == j {
                v.push(l[i] * (2.0 * l[i] - 1.0));
                let c = 4.0 * l[i] - 1.0;
                g.push([c * di[0], c * di[1]]);
            } else {
                v.push(4.0 * l[i] * l[j]);
                g.push([4.0 * (di[0] * l[j] + l[i] * dj[0]), 4.0 * (di[1] * l[j] + l[i] * dj[1])]);
            }
        }
        (v, g)
    }
}

pub struct DenseSpace {
    pub degree: usize,
    pub coords: Vec<[f64; 2]>,
    cells: Vec<Cell>,
}

fn key(p: [f64; 2]) -> (i64, i64) {
    ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64)
}

impl DenseSpace {
    pub fn new(vertices: &[[f64; 2]], triangles: &[[usize; 3]], degree: usize) -> Self {
        let gl = gauss_legendre_01(7);
        let mut ids: HashMap<(i64, i64), usize> = HashMap::new();
        let mut coords = Vec::new();
        let mut node = |p: [f64; 2]| -> usize {
            *ids.entry(key(p)).or_insert_with(|| {
                coords.push(p);
                coords.len() - 1
            })
        };
        let mut cells = Vec::new();
        for tri in triangles {
            let p: Vec<[f64; 2]> = tri.iter().map(|&v| vertices[v]).collect();
            let mut pairs: Vec<(usize, usize)> = (0..3).map(|i| (i, i)).collect();
            if degree == 2 {
                pairs.extend([(0, 1), (1, 2), (0, 2)]);
            }
            let nodes = pairs
                .iter()
                .map(|&(i, j)| node([0.5 * (p[i][0] + p[j][0]), 0.5 * (p[i][1] + p[j][1])]))
                .collect();
            let m = Matrix3::new(1.0, 1.0, 1.0, p[0][0], p[1][0], p[2][0], p[0][1], p[1][1], p[2][1]);
            let inv = m.try_inverse().expect("degenerate triangle");
            let det = ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])).abs();
            let mut quad = Vec::new();
            for &(xi, wx) in &gl {
                for &(eta, wy) in &gl {
                    let s = xi;
                    let t = eta * (1.0 - xi);
                    let x = p[0][0] + s * (p[1][0] - p[0][0]) + t * (p[2][0] - p[0][0]);
                    let y = p[0][1] + s * (p[1][1] - p[0][1]) + t * (p[2][1] - p[0][1]);
                    quad.push((x, y, wx * wy * (1.0 - xi) * det));
                }
            }
            cells.push(Cell { nodes, pairs, inv, quad });
        }
        Self { degree, coords, cells }
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn on_boundary(&self, i: usize) -> bool {
        let [x, y] = self.coords[i];
        let e = 1e-12;
        x < e || y < e || x > 1.0 - e || y > 1.0 - e
    }

    /// Calls `f(node_a, node_b, value_a, value_b, grad_a, grad_b, x, y, weight)`.
    fn each_pair(&self, mut f: impl FnMut(usize, usize, f64, f64, [f64; 2], [f64; 2], f64, f64, f64)) {
        for c in &self.cells {
            for &(x, y, w) in &c.quad {
                let (v, g) = c.basis(self.degree, x, y);
                for a in 0..v.len() {
                    for b in 0..v.len() {
                        f(c.nodes[a], c.nodes[b], v[a], v[b], g[a], g[b], x, y, w);
                    }
                }
            }
        }
    }

    fn eval(&self, coeffs: &[f64], cell: &Cell, x: f64, y: f64) -> (f64, [f64; 2]) {
        let (v, g) = cell.basis(self.degree, x, y);
        let mut val = 0.0;
        let mut grad = [0.0; 2];
        for (a, &n) in cell.nodes.iter().enumerate() {
            val += coeffs[n] * v[a];
            grad[0] += coeffs[n] * g[a][0];
            grad[1] += coeffs[n] * g[a][1];
        }
        (val, grad)
    }
}

/// Matrices of the velocity space (component-blocked: dof `c * n + node`)
/// and the pressure space.
pub struct DenseOperators {
    pub vel: DenseSpace,
    pub pre: DenseSpace,
    pub m_u: DMatrix<f64>,
    pub a_u: DMatrix<f64>,
    /// `G[(c,a)][q] = (phi_a e_c, grad psi_q)`
    pub g: DMatrix<f64>,
    /// `D[q][(c,a)] = (psi_q, d_c phi_a)`
    pub d: DMatrix<f64>,
    pub n_p: DMatrix<f64>,
    pub m_p: DMatrix<f64>,
    pub free: Vec<usize>,
}

impl DenseOperators {
    pub fn new(vertices: &[[f64; 2]], triangles: &[[usize; 3]], k: usize, l: usize) -> Self {
        let vel = DenseSpace::new(vertices, triangles, k);
        let pre = DenseSpace::new(vertices, triangles, l);
        let (nu, np) = (vel.n(), pre.n());
        let mut m1 = DMatrix::zeros(nu, nu);
        let mut a1 = DMatrix::zeros(nu, nu);
        vel.each_pair(|i, j, vi, vj, gi, gj, _, _, w| {
            m1[(i, j)] += w * vi * vj;
            a1[(i, j)] += w * (gi[0] * gj[0] + gi[1] * gj[1]);
        });
        let mut n_p = DMatrix::zeros(np, np);
        let mut m_p = DMatrix::zeros(np, np);
        pre.each_pair(|i, j, vi, vj, gi, gj, _, _, w| {
            m_p[(i, j)] += w * vi * vj;
            n_p[(i, j)] += w * (gi[0] * gj[0] + gi[1] * gj[1]);
        });
        let mut m_u = DMatrix::zeros(2 * nu, 2 * nu);
        let mut a_u = DMatrix::zeros(2 * nu, 2 * nu);
        for c in 0..2 {
            m_u.view_mut((c * nu, c * nu), (nu, nu)).copy_from(&m1);
            a_u.view_mut((c * nu, c * nu), (nu, nu)).copy_from(&a1);
        }
        let mut g = DMatrix::zeros(2 * nu, np);
        let mut d = DMatrix::zeros(np, 2 * nu);
        for (cu, cp) in vel.cells.iter().zip(&pre.cells) {
            for &(x, y, w) in &cu.quad {
                let (vu, gu) = cu.basis(k, x, y);
                let (vp, gp) = cp.basis(l, x, y);
                for a in 0..vu.len() {
                    for b in 0..vp.len() {
                        for c in 0..2 {
                            let i = c * nu + cu.nodes[a];
                            let q = cp.nodes[b];
                            g[(i, q)] += w * vu[a] * gp[b][c];
                            d[(q, i)] += w * vp[b] * gu[a][c];
                        }
                    }
                }
            }
        }
        let free = (0..2 * nu).filter(|&i| !vel.on_boundary(i % nu)).collect();
        Self {
            vel,
            pre,
            m_u,
            a_u,
            g,
            d,
            n_p,
            m_p,
            free,
        }
    }

    fn nu(&self) -> usize {
        self.vel.n()
    }

    /// `(g, phi_i)` for every velocity dof.
    pub fn load(&self, g: impl Fn(f64, f64) -> [f64; 2]) -> DVector<f64> {
        let nu = self.nu();
        let mut out = DVector::zeros(2 * nu);
        for c in &self.vel.cells {
            for &(x, y, w) in &c.quad {
                let (v, _) = c.basis(self.vel.degree, x, y);
                let gv = g(x, y);
                for (a, &n) in c.nodes.iter().enumerate() {
                    out[n] += w * gv[0] * v[a];
                    out[nu + n] += w * gv[1] * v[a];
                }
            }
        }
        out
    }

    /// `b(w, phi_a, phi_b) = ((w . grad) phi_a + 1/2 div w phi_a, phi_b)`, row = test.
    pub fn convection(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let nu = self.nu();
        let (w0, w1) = (w.rows(0, nu).clone_owned(), w.rows(nu, nu).clone_owned());
        let mut b1 = DMatrix::zeros(nu, nu);
        for c in &self.vel.cells {
            for &(x, y, wt) in &c.quad {
                let (v, g) = c.basis(self.vel.degree, x, y);
                let (a0, g0) = self.vel.eval(w0.as_slice(), c, x, y);
                let (a1, g1) = self.vel.eval(w1.as_slice(), c, x, y);
                let div = g0[0] + g1[1];
                for a in 0..v.len() {
                    let adv = a0 * g[a][0] + a1 * g[a][1] + 0.5 * div * v[a];
                    for b in 0..v.len() {
                        b1[(c.nodes[b], c.nodes[a])] += wt * adv * v[b];
                    }
                }
            }
        }
        let mut b = DMatrix::zeros(2 * nu, 2 * nu);
        for comp in 0..2 {
            b.view_mut((comp * nu, comp * nu), (nu, nu)).copy_from(&b1);
        }
        b
    }

    fn restrict_mat(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let f = &self.free;
        DMatrix::from_fn(f.len(), f.len(), |i, j| m[(f[i], f[j])])
    }

    fn solve_free(&self, k: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
        let f = &self.free;
        let mut out = DVector::zeros(rhs.len());
        if f.is_empty() {
            return out;
        }
        let kf = self.restrict_mat(k);
        let rf = DVector::from_fn(f.len(), |i, _| rhs[f[i]]);
        let x = kf.lu().solve(&rf).expect("singular momentum matrix");
        for (i, &d) in f.iter().enumerate() {
            out[d] = x[i];
        }
        out
    }

    /// `N x = rhs` with `1^T M_p x = 0`, through the bordered system.
    fn poisson(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let np = self.pre.n();
        let mean = &self.m_p * DVector::from_element(np, 1.0);
        let mut a = DMatrix::zeros(np + 1, np + 1);
        a.view_mut((0, 0), (np, np)).copy_from(&self.n_p);
        for i in 0..np {
            a[(i, np)] = mean[i];
            a[(np, i)] = mean[i];
        }
        let mut r = DVector::zeros(np + 1);
        r.rows_mut(0, np).copy_from(rhs);
        let x = a.lu().solve(&r).expect("singular bordered Poisson matrix");
        x.rows(0, np).clone_owned()
    }

    /// `(base + grad phi, phi_i)`
    fn inner(&self, base: &DVector<f64>, phi: &DVector<f64>) -> DVector<f64> {
        &self.m_u * base + &self.g * phi
    }
}

/// Fields of one level: `u~`, projected velocity `(base, phi)` and `p`.
#[derive(Debug, Clone)]
pub struct Level {
    pub utilde: DVector<f64>,
    pub base: DVector<f64>,
    pub phi: DVector<f64>,
    pub p: DVector<f64>,
}

/// Init, one backward Euler step and one BDF2 step.
pub fn three_levels(ops: &DenseOperators, dt: f64, mu: f64, u0: Field, f: Forcing) -> [Level; 3] {
    let mass_free = ops.m_u.clone();
    let l0 = ops.load(u0);
    let ut0 = ops.solve_free(&mass_free, &l0);
    let p0 = ops.poisson(&(ops.g.transpose() * &ut0 / dt));
    let lev0 = Level {
        utilde: ut0.clone(),
        base: ut0.clone(),
        phi: -dt * &p0,
        p: p0.clone(),
    };
    let forcing = |level: usize| {
        let tm = level as f64 * dt;
        ops.load(|x, y| {
            let (a, b) = (f.0(x, y), f.1(x, y));
            [a[0] + tm * b[0], a[1] + tm * b[1]]
        })
    };

    let k1 = &ops.m_u / dt + ops.convection(&ut0) + mu * &ops.a_u;
    let rhs1 = ops.inner(&lev0.base, &lev0.phi) / dt + ops.d.transpose() * &p0 + forcing(1);
    let ut1 = ops.solve_free(&k1, &rhs1);
    let dp1 = ops.poisson(&(-(&ops.d * &ut1) / dt));
    let lev1 = Level {
        utilde: ut1.clone(),
        base: ut1.clone(),
        phi: -dt * &dp1,
        p: &p0 + &dp1,
    };

    let w = 2.0 * &ut1 - &ut0;
    let k2 = 1.5 * &ops.m_u / dt + ops.convection(&w) + mu * &ops.a_u;
    let rhs2 = (4.0 * ops.inner(&lev1.base, &lev1.phi) - ops.inner(&lev0.base, &lev0.phi)) / (2.0 * dt)
        + ops.d.transpose() * &lev1.p
        + forcing(2);
    let ut2 = ops.solve_free(&k2, &rhs2);
    let dp2 = ops.poisson(&(-1.5 * (&ops.d * &ut2) / dt));
    let lev2 = Level {
        utilde: ut2.clone(),
        base: ut2,
        phi: -(2.0 * dt / 3.0) * &dp2,
        p: &lev1.p + &dp2,
    };
    [lev0, lev1, lev2]
}

/// Position of each of `coords` in the oracle numbering.
pub fn match_nodes(space: &DenseSpace, coords: &[[f64; 2]]) -> Vec<usize> {
    let ids: HashMap<(i64, i64), usize> = space.coords.iter().enumerate().map(|(i, p)| (key(*p), i)).collect();
    coords.iter().map(|p| ids[&key(*p)]).collect()
}

#[cfg(test)]
#[test]
fn gauss_legendre_integrates_monomials() {
    let r = gauss_legendre_01(7);
    for p in 0..14 {
        let s: f64 = r.iter().map(|(x, w)| w * x.powi(p)).sum();
        assert!((s - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "degree {p}: {s}");
    }
}
