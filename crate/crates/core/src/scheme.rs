//! Time stepping: initial projection, a backward Euler start step and the
//! BDF2 incremental pressure-correction loop.
//!
//! Projected velocities live in `Y_h = U_h + grad P_h` and are stored as a
//! pair `(base, phi)` representing `base + grad phi`. They only ever enter
//! the computation through inner products, which the operator set gives in
//! closed form, so no basis of `Y_h` is built.

use std::sync::Arc;

use thiserror::Error;

use crate::assembly::{self, AssemblyError, OperatorSet, SparseMatrix};
use crate::diagnostics::{self, EnergyLedger, LedgerRow};
use crate::fe::{FeError, FeSpace};
use crate::linsolve::{self, MomentumSolver, SolveError};
use crate::mesh::{Mesh, MeshError};

pub type VectorField = Arc<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>;
pub type Forcing = Arc<dyn Fn(f64, f64, f64) -> [f64; 2] + Send + Sync>;

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("coupling condition violated: h^(k+1) = {lhs:e} > {c} * dt = {rhs:e}")]
    Coupling { lhs: f64, c: f64, rhs: f64 },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fe(#[from] FeError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("step {step} (t = {t}): {source}")]
    Solve {
        step: usize,
        t: f64,
        #[source]
        source: SolveError,
    },
    #[error("step {step} (t = {t}): non-finite values in solution")]
    NonFinite { step: usize, t: f64 },
    #[error("step {step} (t = {t}): {check} check failed, value {value:e} > {tol:e}")]
    Check {
        step: usize,
        t: f64,
        check: &'static str,
        value: f64,
        tol: f64,
    },
    #[error("trajectory error: {0}")]
    Trajectory(String),
}

/// Gates for the per-step postconditions.
#[derive(Debug, Clone, Copy)]
pub struct CheckTolerances {
    pub identity: f64,
    pub pythagoras: f64,
    pub divergence: f64,
    pub skew: f64,
}

impl Default for CheckTolerances {
    fn default() -> Self {
        Self {
            identity: 1e-9,
            pythagoras: 1e-10,
            divergence: 1e-10,
            skew: 1e-12,
        }
    }
}

#[derive(Clone)]
pub struct SchemeConfig {
    pub dt: f64,
    pub t_final: f64,
    pub mu: f64,
    /// Cells per side of the structured unit-square mesh.
    pub mesh_n: usize,
    pub degree_u: usize,
    pub degree_p: usize,
    pub tol_poisson: f64,
    pub tol_momentum: f64,
    pub store_every: usize,
    pub u0: VectorField,
    /// `None` means `f = 0`.
    pub forcing: Option<Forcing>,
    /// Treat `f` as zero beyond `T` in the time averages. Turn off when the
    /// forcing is defined past the final time.
    pub clip_forcing: bool,
    /// If set to `c`, require `h^(k+1) <= c * dt`.
    pub coupling: Option<f64>,
    pub checks: CheckTolerances,
    /// Abort on the first failed per-step check instead of only recording it.
    pub strict: bool,
}

impl std::fmt::Debug for SchemeConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SchemeConfig")
            .field("dt", &self.dt)
            .field("t_final", &self.t_final)
            .field("mu", &self.mu)
            .field("mesh_n", &self.mesh_n)
            .field("degree_u", &self.degree_u)
            .field("degree_p", &self.degree_p)
            .field("tol_poisson", &self.tol_poisson)
            .field("tol_momentum", &self.tol_momentum)
            .field("store_every", &self.store_every)
            .field("forced", &self.forcing.is_some())
            .field("clip_forcing", &self.clip_forcing)
            .field("coupling", &self.coupling)
            .field("strict", &self.strict)
            .finish()
    }
}

impl SchemeConfig {
    pub fn new(dt: f64, t_final: f64, mu: f64, mesh_n: usize, u0: VectorField) -> Self {
        Self {
            dt,
            t_final,
            mu,
            mesh_n,
            degree_u: 2,
            degree_p: 1,
            tol_poisson: 1e-12,
            tol_momentum: 1e-12,
            store_every: 1,
            u0,
            forcing: None,
            clip_forcing: true,
            coupling: None,
            checks: CheckTolerances::default(),
            strict: true,
        }
    }

    pub fn with_forcing(mut self, f: Forcing) -> Self {
        self.forcing = Some(f);
        self
    }

    pub fn with_degrees(mut self, k: usize, l: usize) -> Self {
        self.degree_u = k;
        self.degree_p = l;
        self
    }

    pub fn validate(&self) -> Result<(), SchemeError> {
        let bad = |m: &str| Err(SchemeError::Config(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad("mu must be positive");
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad("T must be positive");
        }
        if self.t_final < self.dt * (1.0 - 1e-12) {
            return bad("T must be at least dt");
        }
        if self.mesh_n == 0 {
            return bad("mesh_n must be at least 1");
        }
        for (name, d) in [("degree_u", self.degree_u), ("degree_p", self.degree_p)] {
            if !(d == 1 || d == 2) {
                return Err(SchemeError::Config(format!("{name} must be 1 or 2, got {d}")));
            }
        }
        if !(self.tol_poisson > 0.0 && self.tol_momentum > 0.0) {
            return bad("solver tolerances must be positive");
        }
        if self.store_every == 0 {
            return bad("store_every must be at least 1");
        }
        Ok(())
    }

    /// Number of steps and the step actually used: `dt` is reduced to
    /// `T / ceil(T / dt)` when `T / dt` is not an integer.
    pub fn time_grid(&self) -> (usize, f64, Option<String>) {
        let ratio = self.t_final / self.dt;
        let nearest = ratio.round();
        if nearest >= 1.0 && (ratio - nearest).abs() <= 1e-9 * ratio.max(1.0) {
            let n = nearest as usize;
            return (n, self.t_final / n as f64, None);
        }
        let n = ratio.ceil().max(1.0) as usize;
        let dt = self.t_final / n as f64;
        let msg = format!(
            "T/dt = {ratio} is not an integer; dt adjusted from {} to {dt} ({n} steps)",
            self.dt
        );
        (n, dt, Some(msg))
    }
}

/// `base + grad phi` with `base` in `U_h` and `phi` in `P_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct YhElement {
    pub base: Vec<f64>,
    pub phi: Vec<f64>,
}

impl YhElement {
    pub fn zero(n_u: usize, n_p: usize) -> Self {
        Self {
            base: vec![0.0; n_u],
            phi: vec![0.0; n_p],
        }
    }

    pub fn from_base(base: Vec<f64>, n_p: usize) -> Self {
        Self {
            base,
            phi: vec![0.0; n_p],
        }
    }

    /// `sum_i c_i y_i`
    pub fn combine(terms: &[(f64, &YhElement)]) -> Self {
        let (_, first) = terms[0];
        let mut out = Self::zero(first.base.len(), first.phi.len());
        for (c, y) in terms {
            for (o, v) in out.base.iter_mut().zip(&y.base) {
                *o += c * v;
            }
            for (o, v) in out.phi.iter_mut().zip(&y.phi) {
                *o += c * v;
            }
        }
        out
    }

    /// `||base + grad phi||^2 = b^T M b + 2 b^T G phi + phi^T N phi`
    pub fn norm_sq(&self, ops: &OperatorSet) -> f64 {
        ops.m_u.bilinear(&self.base, &self.base)
            + 2.0 * ops.g.bilinear(&self.base, &self.phi)
            + ops.n_p.bilinear(&self.phi, &self.phi)
    }

    /// Vector of `(y, phi_i)` over all velocity basis functions.
    pub fn inner_with_basis(&self, ops: &OperatorSet) -> Vec<f64> {
        let mut v = ops.m_u.mul_vec(&self.base);
        for (a, b) in v.iter_mut().zip(ops.g.mul_vec(&self.phi)) {
            *a += b;
        }
        v
    }

    /// Vector of `(y, grad psi_q)` over all pressure basis functions.
    pub fn weak_divergence(&self, ops: &OperatorSet) -> Vec<f64> {
        let mut v = ops.g.mul_vec_t(&self.base);
        for (a, b) in v.iter_mut().zip(ops.n_p.mul_vec(&self.phi)) {
            *a += b;
        }
        v
    }

    /// `u - y` for `u` in `U_h`.
    pub fn subtract_from(&self, u: &[f64]) -> Self {
        Self {
            base: u.iter().zip(&self.base).map(|(a, b)| a - b).collect(),
            phi: self.phi.iter().map(|p| -p).collect(),
        }
    }
}

/// Two consecutive time levels.
#[derive(Debug, Clone)]
pub struct State {
    pub m: usize,
    pub t: f64,
    pub utilde_m: Vec<f64>,
    pub utilde_mm1: Vec<f64>,
    pub u_m: YhElement,
    pub u_mm1: YhElement,
    pub p_m: Vec<f64>,
    pub p_mm1: Vec<f64>,
}

/// Fields of a single time level as stored in a trajectory.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub m: usize,
    pub t: f64,
    pub utilde: Vec<f64>,
    pub u: YhElement,
    pub p: Vec<f64>,
}

impl State {
    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            m: self.m,
            t: self.t,
            utilde: self.utilde_m.clone(),
            u: self.u_m.clone(),
            p: self.p_m.clone(),
        }
    }
}

/// Check values of one step.
#[derive(Debug, Clone, Default)]
pub struct StepReport {
    pub m: usize,
    pub t: f64,
    /// `(f^m, phi_i)` for all velocity dofs (zero at m = 0).
    pub load: Vec<f64>,
    pub f_norm_sq: f64,
    pub identity: f64,
    pub pythagoras: f64,
    pub divergence: f64,
    /// `NaN` where not applicable (m = 0).
    pub skew: f64,
}

/// Spaces and fixed operators of one run.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Arc<Mesh>,
    pub space_u: FeSpace,
    pub space_p: FeSpace,
    pub ops: OperatorSet,
    grad_basis_norms: Vec<f64>,
}

impl Discretization {
    pub fn new(mesh: Arc<Mesh>, degree_u: usize, degree_p: usize) -> Result<Self, SchemeError> {
        let space_u = FeSpace::new(mesh.clone(), degree_u, 2, true, false)?;
        let space_p = FeSpace::new(mesh.clone(), degree_p, 1, false, true)?;
        let ops = OperatorSet::assemble(&space_u, &space_p)?;
        let grad_basis_norms = ops.n_p.diagonal().iter().map(|d| d.max(0.0).sqrt()).collect();
        Ok(Self {
            mesh,
            space_u,
            space_p,
            ops,
            grad_basis_norms,
        })
    }

    pub fn structured(n: usize, degree_u: usize, degree_p: usize) -> Result<Self, SchemeError> {
        Self::new(Arc::new(Mesh::structured_unit_square(n)?), degree_u, degree_p)
    }

    pub fn n_u(&self) -> usize {
        self.space_u.n_dofs()
    }

    pub fn n_p(&self) -> usize {
        self.space_p.n_dofs()
    }

    /// `max_q |(y, grad psi_q)| / (||y|| ||grad psi_q||)`
    pub fn divergence_residual(&self, y: &YhElement) -> f64 {
        let r = y.weak_divergence(&self.ops);
        let norm = y.norm_sq(&self.ops).max(0.0).sqrt();
        r.iter()
            .zip(&self.grad_basis_norms)
            .map(|(v, g)| {
                if *v == 0.0 {
                    0.0
                } else {
                    v.abs() / (norm * g)
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Output of [`Scheme::run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Vec<Snapshot>,
    pub ledger: EnergyLedger,
    pub reports: Vec<StepReport>,
    pub dt: f64,
    pub n_steps: usize,
    pub store_every: usize,
    pub warnings: Vec<String>,
}

pub struct Scheme {
    pub config: SchemeConfig,
    pub disc: Arc<Discretization>,
    /// Step actually used (after the nearest-divisor adjustment).
    pub dt: f64,
    pub n_steps: usize,
    pub warnings: Vec<String>,
    solver: MomentumSolver,
    /// `c M + mu A` on free dofs, for `c = 1/dt` and `3/(2dt)`.
    base_be: SparseMatrix,
    base_bdf2: SparseMatrix,
}

impl Scheme {
    pub fn new(config: SchemeConfig) -> Result<Self, SchemeError> {
        config.validate()?;
        let disc = Discretization::structured(config.mesh_n, config.degree_u, config.degree_p)?;
        Self::with_discretization(config, Arc::new(disc))
    }

    /// Use prebuilt spaces; `config.mesh_n` and degrees are ignored.
    pub fn with_discretization(config: SchemeConfig, disc: Arc<Discretization>) -> Result<Self, SchemeError> {
        config.validate()?;
        let (n_steps, dt, warning) = config.time_grid();
        if let Some(c) = config.coupling {
            let lhs = disc.mesh.h().powi(disc.space_u.degree() as i32 + 1);
            if lhs > c * dt {
                return Err(SchemeError::Coupling { lhs, c, rhs: c * dt });
            }
        }
        let free = disc.space_u.free_dofs();
        let m = disc.ops.m_u.submatrix(free, free);
        let a = disc.ops.a_u.submatrix(free, free);
        let base_be = m.lin_comb(1.0 / dt, &a, config.mu);
        let base_bdf2 = m.lin_comb(1.5 / dt, &a, config.mu);
        Ok(Self {
            config,
            disc,
            dt,
            n_steps,
            warnings: warning.into_iter().collect(),
            solver: MomentumSolver::new(),
            base_be,
            base_bdf2,
        })
    }

    fn ops(&self) -> &OperatorSet {
        &self.disc.ops
    }

    /// Load of the time-averaged forcing for level `level >= 1`, averaged
    /// over `[t^(level-1/2), t^(level+1/2)]`, together with its squared L2 norm.
    pub fn forcing_load(&self, level: usize) -> Result<(Vec<f64>, f64), SchemeError> {
        let n = self.disc.n_u();
        let Some(f) = &self.config.forcing else {
            return Ok((vec![0.0; n], 0.0));
        };
        let lo = (level as f64 - 0.5) * self.dt;
        let hi = (level as f64 + 0.5) * self.dt;
        let t_cut = if self.config.clip_forcing {
            self.config.t_final
        } else {
            f64::INFINITY
        };
        let nodes = assembly::time_average_nodes(lo, hi, t_cut)?;
        if nodes.is_empty() {
            return Ok((vec![0.0; n], 0.0));
        }
        let avg = |x: f64, y: f64| {
            nodes.iter().fold([0.0; 2], |acc, &(t, w)| {
                let v = f(t, x, y);
                [acc[0] + w * v[0], acc[1] + w * v[1]]
            })
        };
        let load = assembly::load_from_function(&self.disc.space_u, &avg)?;
        let norm = assembly::function_norm_sq(&self.disc.space_u, &avg)?;
        Ok((load, norm))
    }

    fn solve_err(&self, step: usize, source: SolveError) -> SchemeError {
        SchemeError::Solve {
            step,
            t: step as f64 * self.dt,
            source,
        }
    }

    fn gate(&self, step: usize, check: &'static str, value: f64, tol: f64) -> Result<(), SchemeError> {
        if self.config.strict && !(value <= tol) {
            return Err(SchemeError::Check {
                step,
                t: step as f64 * self.dt,
                check,
                value,
                tol,
            });
        }
        Ok(())
    }

    fn finite(&self, step: usize, vs: &[&[f64]]) -> Result<(), SchemeError> {
        if vs.iter().all(|v| v.iter().all(|x| x.is_finite())) {
            Ok(())
        } else {
            Err(SchemeError::NonFinite {
                step,
                t: step as f64 * self.dt,
            })
        }
    }

    /// Zero-mean solution of `N x = rhs`.
    fn poisson(&self, step: usize, rhs: &[f64]) -> Result<Vec<f64>, SchemeError> {
        let ops = self.ops();
        linsolve::solve_spd(&ops.n_p, rhs, Some(&ops.m_p), self.config.tol_poisson)
            .map(|s| s.x)
            .map_err(|e| self.solve_err(step, e))
    }

    fn momentum(&mut self, step: usize, matrix: &SparseMatrix, rhs_full: &[f64]) -> Result<Vec<f64>, SchemeError> {
        let space = &self.disc.space_u;
        let rhs = space.restrict(rhs_full);
        let tol = self.config.tol_momentum;
        let x = self
            .solver
            .solve(matrix, &rhs, tol)
            .map_err(|e| SchemeError::Solve {
                step,
                t: step as f64 * self.dt,
                source: e,
            })?;
        Ok(self.disc.space_u.extend(&x.x))
    }

    fn common_checks(&self, step: usize, ut: &[f64], u: &YhElement) -> Result<(f64, f64), SchemeError> {
        let ops = self.ops();
        let pyth = diagnostics::pythagoras_residual(ops, ut, u);
        let div = self.disc.divergence_residual(u);
        self.gate(step, "pythagoras", pyth, self.config.checks.pythagoras)?;
        self.gate(step, "weak divergence", div, self.config.checks.divergence)?;
        Ok((pyth, div))
    }

    /// `u~0 = P_Uh u0`, `dt (grad p0, grad q) = (u~0, grad q)`, `u0 = u~0 - dt grad p0`.
    pub fn init_states(&self) -> Result<(State, StepReport), SchemeError> {
        let disc = &self.disc;
        let ops = self.ops();
        let u0 = self.config.u0.clone();
        let ut0 = assembly::project_l2_onto_uh(&disc.space_u, &ops.m_u, &|x, y| u0(x, y), 1e-14)
            .map_err(|e| match e {
                AssemblyError::Solve(s) => self.solve_err(0, s),
                other => other.into(),
            })?;
        let rhs: Vec<f64> = ops.g.mul_vec_t(&ut0).iter().map(|v| v / self.dt).collect();
        let p0 = self.poisson(0, &rhs)?;
        let u = YhElement {
            base: ut0.clone(),
            phi: p0.iter().map(|p| -self.dt * p).collect(),
        };
        self.finite(0, &[&ut0, &p0])?;
        let identity = diagnostics::init_identity_residual(ops, self.dt, &ut0, &u, &p0);
        self.gate(0, "initial energy identity", identity, self.config.checks.identity)?;
        let (pythagoras, divergence) = self.common_checks(0, &ut0, &u)?;
        let state = State {
            m: 0,
            t: 0.0,
            utilde_mm1: ut0.clone(),
            utilde_m: ut0,
            u_mm1: u.clone(),
            u_m: u,
            p_mm1: p0.clone(),
            p_m: p0,
        };
        let report = StepReport {
            m: 0,
            t: 0.0,
            load: vec![0.0; disc.n_u()],
            f_norm_sq: 0.0,
            identity,
            pythagoras,
            divergence,
            skew: f64::NAN,
        };
        Ok((state, report))
    }

    fn convection_free(&self, w: &[f64]) -> Result<(SparseMatrix, SparseMatrix), SchemeError> {
        let b = assembly::assemble_convection(&self.disc.space_u, w)?;
        let free = self.disc.space_u.free_dofs();
        let bf = b.submatrix(free, free);
        Ok((b, bf))
    }

    /// `|u^T B(w) u| / (|w|_inf ||u||^2)`, with the sup norm taken over coefficients.
    fn skew_residual(&self, b: &SparseMatrix, w: &[f64], u: &[f64]) -> f64 {
        let v = b.bilinear(u, u);
        if v == 0.0 {
            return 0.0;
        }
        let w_inf = w.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        v.abs() / (w_inf * self.ops().m_u.bilinear(u, u))
    }

    /// First step with backward Euler, from the state at m = 0.
    pub fn first_step_backward_euler(&mut self, s0: &State) -> Result<(State, StepReport), SchemeError> {
        if s0.m != 0 {
            return Err(SchemeError::Trajectory(format!("first step needs m = 0, got {}", s0.m)));
        }
        let dt = self.dt;
        let (load, f_norm_sq) = self.forcing_load(1)?;
        let (b_full, b_free) = self.convection_free(&s0.utilde_m)?;
        let k = self.base_be.lin_comb(1.0, &b_free, 1.0);
        let ops = &self.disc.ops;
        let mut rhs: Vec<f64> = s0.u_m.inner_with_basis(ops).iter().map(|v| v / dt).collect();
        for (r, (dp, f)) in rhs.iter_mut().zip(ops.d.mul_vec_t(&s0.p_m).iter().zip(&load)) {
            *r += dp + f;
        }
        let ut1 = self.momentum(1, &k, &rhs)?;
        let ops = &self.disc.ops;
        let prhs: Vec<f64> = ops.d.mul_vec(&ut1).iter().map(|v| -v / dt).collect();
        let dp = self.poisson(1, &prhs)?;
        self.finite(1, &[&ut1, &dp])?;
        let ops = &self.disc.ops;
        let p1: Vec<f64> = s0.p_m.iter().zip(&dp).map(|(a, b)| a + b).collect();
        let u1 = YhElement {
            base: ut1.clone(),
            phi: dp.iter().map(|v| -dt * v).collect(),
        };
        let skew = self.skew_residual(&b_full, &s0.utilde_m, &ut1);
        self.gate(1, "convection skew-symmetry", skew, self.config.checks.skew)?;
        let identity = diagnostics::first_step_identity_residual(
            ops,
            dt,
            self.config.mu,
            &s0.u_m,
            &s0.p_m,
            &ut1,
            &u1,
            &p1,
            &load,
        );
        self.gate(1, "first-step energy identity", identity, self.config.checks.identity)?;
        let (pythagoras, divergence) = self.common_checks(1, &ut1, &u1)?;
        let state = State {
            m: 1,
            t: dt,
            utilde_m: ut1,
            utilde_mm1: s0.utilde_m.clone(),
            u_m: u1,
            u_mm1: s0.u_m.clone(),
            p_m: p1,
            p_mm1: s0.p_m.clone(),
        };
        let report = StepReport {
            m: 1,
            t: dt,
            load,
            f_norm_sq,
            identity,
            pythagoras,
            divergence,
            skew,
        };
        Ok((state, report))
    }

    /// One BDF2 pressure-correction step from a state with m >= 1.
    pub fn bdf2_step(&mut self, s: &State) -> Result<(State, StepReport), SchemeError> {
        if s.m == 0 {
            return Err(SchemeError::Trajectory("BDF2 step needs m >= 1".into()));
        }
        let dt = self.dt;
        let m1 = s.m + 1;
        let (load, f_norm_sq) = self.forcing_load(m1)?;
        let w: Vec<f64> = s
            .utilde_m
            .iter()
            .zip(&s.utilde_mm1)
            .map(|(a, b)| 2.0 * a - b)
            .collect();
        let (b_full, b_free) = self.convection_free(&w)?;
        let k = self.base_bdf2.lin_comb(1.0, &b_free, 1.0);
        let ops = &self.disc.ops;
        let um = s.u_m.inner_with_basis(ops);
        let umm1 = s.u_mm1.inner_with_basis(ops);
        let dp_m = ops.d.mul_vec_t(&s.p_m);
        let rhs: Vec<f64> = (0..um.len())
            .map(|i| (4.0 * um[i] - umm1[i]) / (2.0 * dt) + dp_m[i] + load[i])
            .collect();
        let ut = self.momentum(m1, &k, &rhs)?;
        let ops = &self.disc.ops;
        let prhs: Vec<f64> = ops.d.mul_vec(&ut).iter().map(|v| -1.5 * v / dt).collect();
        let dp = self.poisson(m1, &prhs)?;
        self.finite(m1, &[&ut, &dp])?;
        let ops = &self.disc.ops;
        let p: Vec<f64> = s.p_m.iter().zip(&dp).map(|(a, b)| a + b).collect();
        let u = YhElement {
            base: ut.clone(),
            phi: dp.iter().map(|v| -2.0 * dt / 3.0 * v).collect(),
        };
        let skew = self.skew_residual(&b_full, &w, &ut);
        self.gate(m1, "convection skew-symmetry", skew, self.config.checks.skew)?;
        let identity = diagnostics::step_identity_residual(
            ops,
            dt,
            self.config.mu,
            &s.u_mm1,
            &s.u_m,
            &u,
            &ut,
            &s.p_m,
            &p,
            &load,
        );
        self.gate(m1, "BDF2 energy identity", identity, self.config.checks.identity)?;
        let (pythagoras, divergence) = self.common_checks(m1, &ut, &u)?;
        let state = State {
            m: m1,
            t: m1 as f64 * dt,
            utilde_m: ut,
            utilde_mm1: s.utilde_m.clone(),
            u_m: u,
            u_mm1: s.u_m.clone(),
            p_m: p,
            p_mm1: s.p_m.clone(),
        };
        let report = StepReport {
            m: m1,
            t: m1 as f64 * dt,
            load,
            f_norm_sq,
            identity,
            pythagoras,
            divergence,
            skew,
        };
        Ok((state, report))
    }

    /// Init, one backward Euler step and BDF2 steps up to T.
    pub fn run(&mut self) -> Result<RunOutput, SchemeError> {
        let every = self.config.store_every;
        let u0 = self.config.u0.clone();
        let u0_norm_sq = assembly::function_norm_sq(&self.disc.space_u, &|x, y| u0(x, y))?;
        let mut ledger = EnergyLedger::new(self.dt, self.config.mu, u0_norm_sq);
        let mut trajectory = Vec::new();
        let mut reports = Vec::new();

        let (mut state, report) = self.init_states()?;
        let mut prev2: Option<YhElement> = None;
        let push = |state: &State,
                        report: &StepReport,
                        prev2: &Option<YhElement>,
                        ledger: &mut EnergyLedger,
                        disc: &Discretization| {
            ledger.push(LedgerRow::from_state(&disc.ops, ledger.dt, state, prev2.as_ref(), report));
        };
        push(&state, &report, &prev2, &mut ledger, &self.disc);
        trajectory.push(state.snapshot());
        reports.push(report);

        let (s1, report) = self.first_step_backward_euler(&state)?;
        ledger.first_jump_sq = state.u_m.subtract_from(&s1.utilde_m).norm_sq(&self.disc.ops);
        state = s1;
        push(&state, &report, &prev2, &mut ledger, &self.disc);
        if every == 1 || self.n_steps == 1 {
            trajectory.push(state.snapshot());
        }
        reports.push(report);

        for m in 1..self.n_steps {
            let (next, report) = self.bdf2_step(&state)?;
            prev2 = Some(state.u_mm1.clone());
            state = next;
            push(&state, &report, &prev2, &mut ledger, &self.disc);
            if (m + 1) % every == 0 || m + 1 == self.n_steps {
                trajectory.push(state.snapshot());
            }
            reports.push(report);
        }
        Ok(RunOutput {
            trajectory,
            ledger,
            reports,
            dt: self.dt,
            n_steps: self.n_steps,
            store_every: every,
            warnings: self.warnings.clone(),
        })
    }
}

/// Build a scheme from `config` and run it.
pub fn run(config: SchemeConfig) -> Result<RunOutput, SchemeError> {
    Scheme::new(config)?.run()
}
