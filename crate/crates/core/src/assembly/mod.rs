//! Sparse operators of the scheme.
//!
//! Every Gram matrix is assembled over the full dof set of its space,
//! constrained dofs included; callers restrict to free dofs where needed.

mod sparse;

use thiserror::Error;

pub use sparse::SparseMatrix;

use crate::fe::{assembly_quadrature_degree, quad_rule, AffineMap, FeError, FeSpace, QuadratureRule, ReferenceElement};
use crate::linsolve::{self, SolveError};

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("spaces live on different meshes")]
    MeshMismatch,
    #[error("expected a {expected}-component space")]
    Components { expected: usize },
    #[error("empty time window [{lo}, {hi}]")]
    TimeWindow { lo: f64, hi: f64 },
    #[error(transparent)]
    Fe(#[from] FeError),
    #[error("mass solve failed: {0}")]
    Solve(#[from] SolveError),
}

/// Reference basis tabulated at the points of a quadrature rule.
struct Tabulation {
    rule: QuadratureRule,
    values: Vec<Vec<f64>>,
    grads: Vec<Vec<[f64; 2]>>,
}

impl Tabulation {
    fn new(element: &ReferenceElement, rule: QuadratureRule) -> Self {
        let (values, grads) = rule
            .points
            .iter()
            .map(|p| {
                let b = element.eval(p[0], p[1]);
                (b.values, b.grads)
            })
            .unzip();
        Self { rule, values, grads }
    }

    /// Physical gradients of the basis at quadrature point `q`.
    fn phys_grads(&self, map: &AffineMap, q: usize) -> Vec<[f64; 2]> {
        self.grads[q].iter().map(|g| map.grad(*g)).collect()
    }
}

/// Scalar-valued local matrix assembled into every component block.
fn scatter_blocks(
    space: &FeSpace,
    t: usize,
    local: &[Vec<f64>],
    triplets: &mut Vec<(usize, usize, f64)>,
) {
    let nodes = space.cell_nodes(t);
    for c in 0..space.components() {
        for (a, &na) in nodes.iter().enumerate() {
            for (b, &nb) in nodes.iter().enumerate() {
                triplets.push((space.dof(c, na), space.dof(c, nb), local[a][b]));
            }
        }
    }
}

fn default_degree(space: &FeSpace) -> usize {
    let k = space.degree();
    assembly_quadrature_degree(k, k)
}

fn block_form(
    space: &FeSpace,
    degree: usize,
    integrand: impl Fn(&[f64], &[[f64; 2]], usize, usize) -> f64,
) -> Result<SparseMatrix, AssemblyError> {
    let tab = Tabulation::new(space.element(), quad_rule(degree)?);
    let nloc = space.element().n_nodes();
    let mesh = space.mesh();
    let mut triplets = Vec::with_capacity(mesh.n_triangles() * nloc * nloc * space.components());
    let mut local = vec![vec![0.0; nloc]; nloc];
    for t in 0..mesh.n_triangles() {
        let map = space.affine_map(t);
        local.iter_mut().for_each(|r| r.iter_mut().for_each(|v| *v = 0.0));
        for q in 0..tab.rule.len() {
            let w = tab.rule.weights[q] * map.det.abs();
            let g = tab.phys_grads(&map, q);
            for a in 0..nloc {
                for b in 0..nloc {
                    local[a][b] += w * integrand(&tab.values[q], &g, a, b);
                }
            }
        }
        scatter_blocks(space, t, &local, &mut triplets);
    }
    Ok(SparseMatrix::from_triplets(space.n_dofs(), space.n_dofs(), triplets))
}

/// Gram matrix `(phi_i, phi_j)` (block diagonal for vector spaces).
pub fn assemble_mass(space: &FeSpace) -> Result<SparseMatrix, AssemblyError> {
    block_form(space, default_degree(space), |v, _, a, b| v[a] * v[b])
}

/// `(grad phi_i, grad phi_j)`; for vector spaces the componentwise sum.
pub fn assemble_stiffness(space: &FeSpace) -> Result<SparseMatrix, AssemblyError> {
    block_form(space, default_degree(space), |_, g, a, b| {
        g[a][0] * g[b][0] + g[a][1] * g[b][1]
    })
}

/// Matrix of the skew-symmetric convection form for advecting field `w`:
/// `v^T B(w) u = b(w, u, v) = ((w . grad) u, v) + 1/2 (div w u, v)`.
pub fn assemble_convection(space_u: &FeSpace, w: &[f64]) -> Result<SparseMatrix, AssemblyError> {
    if space_u.components() != 2 {
        return Err(AssemblyError::Components { expected: 2 });
    }
    if w.len() != space_u.n_dofs() {
        return Err(AssemblyError::Dimension {
            expected: space_u.n_dofs(),
            got: w.len(),
        });
    }
    let k = space_u.degree();
    let tab = Tabulation::new(space_u.element(), quad_rule(3 * k - 1)?);
    let nloc = space_u.element().n_nodes();
    let mesh = space_u.mesh();
    let mut triplets = Vec::with_capacity(mesh.n_triangles() * nloc * nloc * 2);
    let mut local = vec![vec![0.0; nloc]; nloc];
    for t in 0..mesh.n_triangles() {
        let map = space_u.affine_map(t);
        let nodes = space_u.cell_nodes(t);
        let w0: Vec<f64> = nodes.iter().map(|&n| w[space_u.dof(0, n)]).collect();
        let w1: Vec<f64> = nodes.iter().map(|&n| w[space_u.dof(1, n)]).collect();
        local.iter_mut().for_each(|r| r.iter_mut().for_each(|v| *v = 0.0));
        for q in 0..tab.rule.len() {
            let wt = tab.rule.weights[q] * map.det.abs();
            let vals = &tab.values[q];
            let g = tab.phys_grads(&map, q);
            let mut wq = [0.0; 2];
            let mut div = 0.0;
            for l in 0..nloc {
                wq[0] += w0[l] * vals[l];
                wq[1] += w1[l] * vals[l];
                div += w0[l] * g[l][0] + w1[l] * g[l][1];
            }
            // row = test function b, column = trial function a
            for b in 0..nloc {
                for a in 0..nloc {
                    let adv = wq[0] * g[a][0] + wq[1] * g[a][1];
                    local[b][a] += wt * (adv + 0.5 * div * vals[a]) * vals[b];
                }
            }
        }
        scatter_blocks(space_u, t, &local, &mut triplets);
    }
    Ok(SparseMatrix::from_triplets(space_u.n_dofs(), space_u.n_dofs(), triplets))
}

/// Velocity-pressure couplings on the same mesh.
///
/// Returns `(D, G)` with `D[q][i] = (psi_q, div phi_i)` of shape
/// `dim P x dim U` and `G[i][q] = (phi_i, grad psi_q)` of shape `dim U x dim P`.
/// For velocity dofs in `H^1_0`, integration by parts gives `D = -G^T`.
pub fn assemble_couplings(
    space_u: &FeSpace,
    space_p: &FeSpace,
) -> Result<(SparseMatrix, SparseMatrix), AssemblyError> {
    if !std::sync::Arc::ptr_eq(space_u.mesh(), space_p.mesh()) && space_u.mesh() != space_p.mesh() {
        return Err(AssemblyError::MeshMismatch);
    }
    if space_u.components() != 2 {
        return Err(AssemblyError::Components { expected: 2 });
    }
    let degree = assembly_quadrature_degree(space_u.degree(), space_p.degree());
    let rule = quad_rule(degree)?;
    let tu = Tabulation::new(space_u.element(), rule.clone());
    let tp = Tabulation::new(space_p.element(), rule);
    let (nu, np) = (space_u.element().n_nodes(), space_p.element().n_nodes());
    let mesh = space_u.mesh();
    let mut dtrip = Vec::with_capacity(mesh.n_triangles() * nu * np * 2);
    let mut gtrip = Vec::with_capacity(dtrip.capacity());
    for t in 0..mesh.n_triangles() {
        let map = space_u.affine_map(t);
        let un = space_u.cell_nodes(t);
        let pn = space_p.cell_nodes(t);
        // local[c][a][b]: c = velocity component, a = velocity node, b = pressure node
        let mut ld = vec![vec![vec![0.0; np]; nu]; 2];
        let mut lg = vec![vec![vec![0.0; np]; nu]; 2];
        for q in 0..tu.rule.len() {
            let w = tu.rule.weights[q] * map.det.abs();
            let gu = tu.phys_grads(&map, q);
            let gp = tp.phys_grads(&map, q);
            for c in 0..2 {
                for a in 0..nu {
                    for b in 0..np {
                        ld[c][a][b] += w * tp.values[q][b] * gu[a][c];
                        lg[c][a][b] += w * tu.values[q][a] * gp[b][c];
                    }
                }
            }
        }
        for c in 0..2 {
            for a in 0..nu {
                let i = space_u.dof(c, un[a]);
                for b in 0..np {
                    let qd = space_p.dof(0, pn[b]);
                    dtrip.push((qd, i, ld[c][a][b]));
                    gtrip.push((i, qd, lg[c][a][b]));
                }
            }
        }
    }
    let (ndu, ndp) = (space_u.n_dofs(), space_p.n_dofs());
    Ok((
        SparseMatrix::from_triplets(ndp, ndu, dtrip),
        SparseMatrix::from_triplets(ndu, ndp, gtrip),
    ))
}

/// Three-point Gauss-Legendre nodes and weights on [-1, 1].
const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// Time-average weights of `f` over `[t_lo, t_hi]` with `f = 0` beyond `t_final`:
/// a list of `(t, weight)` such that the average is `sum weight * f(t)`.
pub fn time_average_nodes(t_lo: f64, t_hi: f64, t_final: f64) -> Result<Vec<(f64, f64)>, AssemblyError> {
    if !(t_lo < t_hi) {
        return Err(AssemblyError::TimeWindow { lo: t_lo, hi: t_hi });
    }
    let top = t_hi.min(t_final);
    if top <= t_lo {
        return Ok(Vec::new());
    }
    let half = 0.5 * (top - t_lo);
    let mid = 0.5 * (top + t_lo);
    let len = t_hi - t_lo;
    Ok(GAUSS3
        .iter()
        .map(|&(x, w)| (mid + half * x, w * half / len))
        .collect())
}

/// Load vector `(f_avg, phi_i)` where `f_avg` is the time average of `f`
/// over `[t_lo, t_hi]`, clipped at `t_final`.
pub fn assemble_load(
    space_u: &FeSpace,
    f: &dyn Fn(f64, f64, f64) -> [f64; 2],
    t_lo: f64,
    t_hi: f64,
    t_final: f64,
) -> Result<Vec<f64>, AssemblyError> {
    let nodes = time_average_nodes(t_lo, t_hi, t_final)?;
    if nodes.is_empty() {
        return Ok(vec![0.0; space_u.n_dofs()]);
    }
    let avg = |x: f64, y: f64| {
        nodes.iter().fold([0.0; 2], |acc, &(t, w)| {
            let v = f(t, x, y);
            [acc[0] + w * v[0], acc[1] + w * v[1]]
        })
    };
    load_from_function(space_u, &avg)
}

/// `(g, phi_i)` for a space function `g`, integrated with the highest-order rule.
pub fn load_from_function(
    space: &FeSpace,
    g: &dyn Fn(f64, f64) -> [f64; 2],
) -> Result<Vec<f64>, AssemblyError> {
    let tab = Tabulation::new(space.element(), quad_rule(crate::fe::MAX_DEGREE)?);
    let mut out = vec![0.0; space.n_dofs()];
    for t in 0..space.mesh().n_triangles() {
        let map = space.affine_map(t);
        let nodes = space.cell_nodes(t);
        for q in 0..tab.rule.len() {
            let w = tab.rule.weights[q] * map.det.abs();
            let x = map.to_physical(tab.rule.points[q]);
            let gv = g(x[0], x[1]);
            for (l, &n) in nodes.iter().enumerate() {
                for c in 0..space.components() {
                    out[space.dof(c, n)] += w * gv[c] * tab.values[q][l];
                }
            }
        }
    }
    Ok(out)
}

/// `||g||^2_{L^2}` of a vector-valued function, by the highest-order rule.
pub fn function_norm_sq(space: &FeSpace, g: &dyn Fn(f64, f64) -> [f64; 2]) -> Result<f64, AssemblyError> {
    let rule = quad_rule(crate::fe::MAX_DEGREE)?;
    let mut s = 0.0;
    for t in 0..space.mesh().n_triangles() {
        let map = space.affine_map(t);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let x = map.to_physical(*p);
            let v = g(x[0], x[1]);
            s += w * map.det.abs() * (v[0] * v[0] + v[1] * v[1]);
        }
    }
    Ok(s)
}

/// L2-orthogonal projection onto `U_h` (coefficients, zero on constrained dofs).
pub fn project_l2_onto_uh(
    space_u: &FeSpace,
    mass: &SparseMatrix,
    g: &dyn Fn(f64, f64) -> [f64; 2],
    tol: f64,
) -> Result<Vec<f64>, AssemblyError> {
    let free = space_u.free_dofs();
    if free.is_empty() {
        return Ok(vec![0.0; space_u.n_dofs()]);
    }
    let rhs = space_u.restrict(&load_from_function(space_u, g)?);
    let m = mass.submatrix(free, free);
    let sol = linsolve::solve_spd(&m, &rhs, None, tol)?;
    Ok(space_u.extend(&sol.x))
}

/// All fixed operators of the scheme for a velocity/pressure space pair.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    /// Vector mass on `U_h`.
    pub m_u: SparseMatrix,
    /// Vector stiffness on `U_h` (viscosity not included).
    pub a_u: SparseMatrix,
    /// `D[q][i] = (psi_q, div phi_i)`.
    pub d: SparseMatrix,
    /// `G[i][q] = (phi_i, grad psi_q)`.
    pub g: SparseMatrix,
    /// Pressure stiffness `(grad psi_q, grad psi_r)`.
    pub n_p: SparseMatrix,
    /// Scalar pressure mass.
    pub m_p: SparseMatrix,
}

impl OperatorSet {
    pub fn assemble(space_u: &FeSpace, space_p: &FeSpace) -> Result<Self, AssemblyError> {
        let degree = assembly_quadrature_degree(space_u.degree(), space_p.degree());
        let mass = |v: &[f64], _: &[[f64; 2]], a: usize, b: usize| v[a] * v[b];
        let stiff = |_: &[f64], g: &[[f64; 2]], a: usize, b: usize| g[a][0] * g[b][0] + g[a][1] * g[b][1];
        let (d, g) = assemble_couplings(space_u, space_p)?;
        Ok(Self {
            m_u: block_form(space_u, degree, mass)?,
            a_u: block_form(space_u, degree, stiff)?,
            d,
            g,
            n_p: block_form(space_p, degree, stiff)?,
            m_p: block_form(space_p, degree, mass)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn spaces(n: usize, k: usize, l: usize) -> (FeSpace, FeSpace) {
        let m = Arc::new(Mesh::structured_unit_square(n).unwrap());
        (
            FeSpace::new(m.clone(), k, 2, true, false).unwrap(),
            FeSpace::new(m, l, 1, false, true).unwrap(),
        )
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn zero_constrained(space: &FeSpace, v: &mut [f64]) {
        for (d, &fixed) in space.dirichlet_mask().iter().enumerate() {
            if fixed {
                v[d] = 0.0;
            }
        }
    }

    #[test]
    fn p1_mass_single_triangle() {
        let m = Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], None, false).unwrap();
        let s = FeSpace::new(Arc::new(m), 1, 1, false, false).unwrap();
        let mm = assemble_mass(&s).unwrap().to_dense();
        // symbolic oracle: (area / 12) [[2,1,1],[1,2,1],[1,1,2]]
        let area = 0.5;
        for i in 0..3 {
            for j in 0..3 {
                let want = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                assert!((mm[i][j] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mass_row_sums_and_constant() {
        for k in [1, 2] {
            let m = Arc::new(Mesh::structured_unit_square(3).unwrap());
            let s = FeSpace::new(m, k, 1, false, false).unwrap();
            let mm = assemble_mass(&s).unwrap();
            let ones = vec![1.0; s.n_dofs()];
            let rows = mm.mul_vec(&ones);
            assert!((rows.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!((mm.bilinear(&ones, &ones) - 1.0).abs() < 1e-14);
            assert!(mm.symmetry_defect() < 1e-13);
        }
    }

    #[test]
    fn stiffness_kernel_and_linear() {
        for k in [1, 2] {
            let m = Arc::new(Mesh::structured_unit_square(4).unwrap());
            let s = FeSpace::new(m, k, 1, false, false).unwrap();
            let a = assemble_stiffness(&s).unwrap();
            let ones = vec![1.0; s.n_dofs()];
            assert!(a.mul_vec(&ones).iter().all(|v| v.abs() < 1e-13));
            let x: Vec<f64> = s.node_coords().iter().map(|p| p[0]).collect();
            assert!((a.bilinear(&x, &x) - 1.0).abs() < 1e-13);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for _ in 0..20 {
                let v = rand_vec(&mut rng, s.n_dofs());
                assert!(a.bilinear(&v, &v) >= 0.0);
            }
        }
    }

    #[test]
    fn convection_skew_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in [1, 2] {
            let (su, _) = spaces(3, k, 1);
            let zero = assemble_convection(&su, &vec![0.0; su.n_dofs()]).unwrap();
            assert_eq!(zero.max_abs(), 0.0);
            for _ in 0..10 {
                let mut w = rand_vec(&mut rng, su.n_dofs());
                let mut u = rand_vec(&mut rng, su.n_dofs());
                let mut v = rand_vec(&mut rng, su.n_dofs());
                zero_constrained(&su, &mut w);
                zero_constrained(&su, &mut u);
                zero_constrained(&su, &mut v);
                let b = assemble_convection(&su, &w).unwrap();
                let scale = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                let vv: f64 = v.iter().map(|x| x * x).sum();
                assert!(b.bilinear(&v, &v).abs() <= 1e-12 * scale * vv);
                let uv = b.bilinear(&v, &u);
                let vu = b.bilinear(&u, &v);
                assert!((uv + vu).abs() < 1e-12);
            }
        }
        let (su, _) = spaces(2, 1, 1);
        assert!(matches!(
            assemble_convection(&su, &[0.0; 3]),
            Err(AssemblyError::Dimension { .. })
        ));
    }

    #[test]
    fn couplings_integrate_by_parts() {
        for (k, l) in [(1, 1), (2, 1), (2, 2), (1, 2)] {
            let (su, sp) = spaces(4, k, l);
            let (d, g) = assemble_couplings(&su, &sp).unwrap();
            let gt = g.transpose();
            let free = su.free_dofs();
            let all_p: Vec<usize> = (0..sp.n_dofs()).collect();
            let ds = d.submatrix(&all_p, free);
            let gs = gt.submatrix(&all_p, free);
            let sum = ds.lin_comb(1.0, &gs, 1.0);
            assert!(sum.frobenius_norm() <= 1e-13 * ds.frobenius_norm());
            // gradient of a constant vanishes
            let ones = vec![1.0; sp.n_dofs()];
            assert!(g.mul_vec(&ones).iter().all(|v| v.abs() < 1e-13));
        }
    }

    #[test]
    fn coupling_against_direct_quadrature() {
        let (su, sp) = spaces(4, 2, 1);
        let (_, g) = assemble_couplings(&su, &sp).unwrap();
        let uh = su.interpolate(|_, y| [y, 0.0]);
        let gu = g.mul_vec_t(&uh);
        // oracle: midpoint-refined quadrature on each cell using the
        // degree-6 rule and explicit FE evaluation
        let rule = quad_rule(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let q = rng.gen_range(0..sp.n_dofs());
            let mut psi = vec![0.0; sp.n_dofs()];
            psi[q] = 1.0;
            let mut s = 0.0;
            for t in 0..su.mesh().n_triangles() {
                let map = su.affine_map(t);
                for (p, w) in rule.points.iter().zip(&rule.weights) {
                    let (u, _) = su.eval_in_cell(&uh, t, *p);
                    let (_, gp) = sp.eval_in_cell(&psi, t, *p);
                    s += w * map.det * (u[0] * gp[0][0] + u[1] * gp[0][1]);
                }
            }
            assert!((s - gu[q]).abs() < 1e-14);
        }
    }

    #[test]
    fn load_time_average() {
        let (su, _) = spaces(2, 2, 1);
        let zero = assemble_load(&su, &|_, _, _| [0.0, 0.0], 0.0, 0.1, 1.0).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
        let c = |_: f64, _: f64, _: f64| [2.0, -1.0];
        let a = assemble_load(&su, &c, 0.1, 0.2, 1.0).unwrap();
        let b = assemble_load(&su, &c, 0.5, 0.7, 1.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        // straddling T: scaled by (T - t_lo) / (t_hi - t_lo)
        let s = assemble_load(&su, &c, 0.9, 1.2, 1.0).unwrap();
        for (x, y) in s.iter().zip(&a) {
            assert!((x - y * (0.1 / 0.3)).abs() < 1e-15);
        }
        let beyond = assemble_load(&su, &c, 1.0, 1.2, 1.0).unwrap();
        assert!(beyond.iter().all(|v| *v == 0.0));
        // quadratic in time averaged exactly
        let quad = |t: f64, _: f64, _: f64| [t * t, 0.0];
        let l = assemble_load(&su, &quad, 0.0, 0.3, 1.0).unwrap();
        let cst = assemble_load(&su, &|_, _, _| [0.03, 0.0], 0.0, 0.3, 1.0).unwrap();
        for (x, y) in l.iter().zip(&cst) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn l2_projection_properties() {
        let (su, _) = spaces(4, 2, 1);
        let mass = assemble_mass(&su).unwrap();
        // idempotent on U_h
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut c = rand_vec(&mut rng, su.n_dofs());
        zero_constrained(&su, &mut c);
        let lookup = |x: f64, y: f64| su.locate([x, y]).map(|(t, xr)| su.eval_in_cell(&c, t, xr).0).unwrap();
        let p = project_l2_onto_uh(&su, &mass, &lookup, 1e-14).unwrap();
        for (a, b) in p.iter().zip(&c) {
            assert!((a - b).abs() < 1e-12);
        }

        use std::f64::consts::PI;
        let g = |x: f64, y: f64| [(PI * x).sin() * (PI * y).sin(), 0.0];
        let p = project_l2_onto_uh(&su, &mass, &g, 1e-14).unwrap();
        let pn = mass.bilinear(&p, &p);
        let gn = function_norm_sq(&su, &g).unwrap();
        assert!((gn - 0.25).abs() < 1e-6);
        assert!(pn <= gn);
        // orthogonality against every basis function of U_h
        let load = load_from_function(&su, &g).unwrap();
        let mp = mass.mul_vec(&p);
        for &i in su.free_dofs() {
            assert!((load[i] - mp[i]).abs() < 1e-11);
        }
    }

    #[test]
    fn operator_set_invariants() {
        for (k, l) in [(1, 1), (2, 1), (2, 2)] {
            let (su, sp) = spaces(3, k, l);
            let ops = OperatorSet::assemble(&su, &sp).unwrap();
            for m in [&ops.m_u, &ops.a_u, &ops.n_p, &ops.m_p] {
                assert!(m.symmetry_defect() < 1e-13);
            }
            assert_eq!(ops.d.shape(), (sp.n_dofs(), su.n_dofs()));
            assert_eq!(ops.g.shape(), (su.n_dofs(), sp.n_dofs()));
            assert!(linsolve::cholesky_check(&ops.m_p));
            let free = su.free_dofs();
            assert!(linsolve::cholesky_check(&ops.m_u.submatrix(free, free)));
            assert!(linsolve::cholesky_check(&ops.m_u));
        }
    }
}
