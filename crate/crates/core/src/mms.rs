//! Manufactured solutions, error norms and convergence studies.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::fe::{quad_rule, MAX_DEGREE};
use crate::scheme::{self, Discretization, RunOutput, SchemeConfig, SchemeError, Snapshot};

type Field2 = Arc<dyn Fn(f64, f64, f64) -> [f64; 2] + Send + Sync>;
type Field1 = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Exact solution of the forced Navier-Stokes problem on the unit square.
#[derive(Clone)]
pub struct ManufacturedCase {
    pub name: String,
    pub mu: f64,
    pub u_exact: Field2,
    /// Gradient `[[du1/dx, du1/dy], [du2/dx, du2/dy]]`.
    pub grad_u_exact: Arc<dyn Fn(f64, f64, f64) -> [[f64; 2]; 2] + Send + Sync>,
    pub p_exact: Field1,
    pub f: Field2,
}

impl std::fmt::Debug for ManufacturedCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManufacturedCase")
            .field("name", &self.name)
            .field("mu", &self.mu)
            .finish()
    }
}

// s(x) = sin^2(pi x) and its derivatives
fn s0(x: f64) -> f64 {
    (PI * x).sin().powi(2)
}
fn s1(x: f64) -> f64 {
    PI * (2.0 * PI * x).sin()
}
fn s2(x: f64) -> f64 {
    2.0 * PI * PI * (2.0 * PI * x).cos()
}
fn s3(x: f64) -> f64 {
    -4.0 * PI.powi(3) * (2.0 * PI * x).sin()
}

/// Stream function `psi = sin^2(pi x) sin^2(pi y) cos t`, `u = (psi_y, -psi_x)`,
/// `p = cos(pi x) cos(pi y) cos t`.
pub fn stream_vortex_case(mu: f64) -> ManufacturedCase {
    let u = |t: f64, x: f64, y: f64| {
        let c = t.cos();
        [s0(x) * s1(y) * c, -s1(x) * s0(y) * c]
    };
    let grad = |t: f64, x: f64, y: f64| {
        let c = t.cos();
        [
            [s1(x) * s1(y) * c, s0(x) * s2(y) * c],
            [-s2(x) * s0(y) * c, -s1(x) * s1(y) * c],
        ]
    };
    let f = move |t: f64, x: f64, y: f64| {
        let (c, dc) = (t.cos(), -t.sin());
        let uv = u(t, x, y);
        let g = grad(t, x, y);
        let lap = [
            (s2(x) * s1(y) + s0(x) * s3(y)) * c,
            -(s3(x) * s0(y) + s1(x) * s2(y)) * c,
        ];
        let dp = [
            -PI * (PI * x).sin() * (PI * y).cos() * c,
            -PI * (PI * x).cos() * (PI * y).sin() * c,
        ];
        let dt = [s0(x) * s1(y) * dc, -s1(x) * s0(y) * dc];
        let mut out = [0.0; 2];
        for i in 0..2 {
            out[i] = dt[i] + uv[0] * g[i][0] + uv[1] * g[i][1] - mu * lap[i] + dp[i];
        }
        out
    };
    ManufacturedCase {
        name: "stream_vortex".into(),
        mu,
        u_exact: Arc::new(u),
        grad_u_exact: Arc::new(grad),
        p_exact: Arc::new(|t, x, y| (PI * x).cos() * (PI * y).cos() * t.cos()),
        f: Arc::new(f),
    }
}

/// Unforced decay from the vortex initial field.
pub fn vortex_decay_config(dt: f64, t_final: f64, mu: f64, mesh_n: usize) -> SchemeConfig {
    let case = stream_vortex_case(mu);
    let u = case.u_exact.clone();
    SchemeConfig::new(dt, t_final, mu, mesh_n, Arc::new(move |x, y| u(0.0, x, y)))
}

impl ManufacturedCase {
    /// Scheme configuration with `u_0 = u(0)` and this forcing, which is
    /// defined for all times and therefore not clipped at `T`.
    pub fn config(&self, dt: f64, t_final: f64, mesh_n: usize) -> SchemeConfig {
        let u = self.u_exact.clone();
        let mut cfg = SchemeConfig::new(dt, t_final, self.mu, mesh_n, Arc::new(move |x, y| u(0.0, x, y)))
            .with_forcing(self.f.clone());
        cfg.clip_forcing = false;
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    /// `||u(T) - u_h^N||` with `u_h` the projected field.
    pub u_l2: f64,
    /// `||u(T) - u~^N||`
    pub utilde_l2: f64,
    /// `|u(T) - u~^N|_{H1}`
    pub utilde_h1: f64,
    /// `(dt sum_{m=1}^N ||u(t^m) - u_h^m||^2)^{1/2}`; `NaN` if the
    /// trajectory is thinned.
    pub u_l2l2: f64,
    pub p_l2: f64,
}

/// Errors of one stored level against the exact fields at time `t`.
pub fn level_errors(disc: &Discretization, s: &Snapshot, case: &ManufacturedCase) -> (f64, f64, f64, f64) {
    // degree-6 rule: at least two above the element degree
    let rule = quad_rule(MAX_DEGREE).expect("quadrature rule");
    let (mut eu, mut eut, mut eh1, mut ep) = (0.0, 0.0, 0.0, 0.0);
    let t = s.t;
    for c in 0..disc.mesh.n_triangles() {
        let map = disc.space_u.affine_map(c);
        let det = map.det.abs();
        for (xr, w) in rule.points.iter().zip(&rule.weights) {
            let x = map.to_physical(*xr);
            let ue = (case.u_exact)(t, x[0], x[1]);
            let ge = (case.grad_u_exact)(t, x[0], x[1]);
            let pe = (case.p_exact)(t, x[0], x[1]);
            let (ut, gut) = disc.space_u.eval_in_cell(&s.utilde, c, *xr);
            let (ub, _) = disc.space_u.eval_in_cell(&s.u.base, c, *xr);
            let (_, gphi) = disc.space_p.eval_in_cell(&s.u.phi, c, *xr);
            let (ph, _) = disc.space_p.eval_in_cell(&s.p, c, *xr);
            let wd = w * det;
            for i in 0..2 {
                eu += wd * (ue[i] - ub[i] - gphi[0][i]).powi(2);
                eut += wd * (ue[i] - ut[i]).powi(2);
                for j in 0..2 {
                    eh1 += wd * (ge[i][j] - gut[i][j]).powi(2);
                }
            }
            ep += wd * (pe - ph[0]).powi(2);
        }
    }
    (eu, eut, eh1, ep)
}

pub fn error_norms(disc: &Discretization, out: &RunOutput, case: &ManufacturedCase) -> ErrorNorms {
    let last = out.trajectory.last().expect("non-empty trajectory");
    let (eu, eut, eh1, ep) = level_errors(disc, last, case);
    let full = out.trajectory.iter().enumerate().all(|(i, s)| s.m == i);
    let u_l2l2 = if full {
        let s: f64 = out.trajectory[1..]
            .par_iter()
            .map(|s| level_errors(disc, s, case).0)
            .sum();
        (out.dt * s).sqrt()
    } else {
        f64::NAN
    };
    ErrorNorms {
        u_l2: eu.sqrt(),
        utilde_l2: eut.sqrt(),
        utilde_h1: eh1.sqrt(),
        u_l2l2,
        p_l2: ep.sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyMode {
    Temporal,
    Spatial,
    Coupled,
}

impl std::str::FromStr for StudyMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "temporal" => Ok(Self::Temporal),
            "spatial" => Ok(Self::Spatial),
            "coupled" => Ok(Self::Coupled),
            other => Err(format!("unknown mode '{other}' (temporal | spatial | coupled)")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GridPoint {
    pub mesh_n: usize,
    pub n_steps: usize,
    pub degree_u: usize,
    pub degree_p: usize,
}

/// Study parameters; `grid` is filled by [`StudyConfig::standard`].
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub mode: StudyMode,
    pub t_final: f64,
    pub mu: f64,
    pub grid: Vec<GridPoint>,
}

impl StudyConfig {
    /// Default grids: temporal `n = 32, k = 2, N = 40..320`; spatial
    /// `n = 4..32` with `N = 400`; coupled `k = 1` with `N = 10 n`.
    pub fn standard(mode: StudyMode, t_final: f64, mu: f64) -> Self {
        let grid = match mode {
            StudyMode::Temporal => [40, 80, 160, 320]
                .iter()
                .map(|&n_steps| GridPoint {
                    mesh_n: 32,
                    n_steps,
                    degree_u: 2,
                    degree_p: 1,
                })
                .collect(),
            StudyMode::Spatial => [4, 8, 16, 32]
                .iter()
                .map(|&mesh_n| GridPoint {
                    mesh_n,
                    n_steps: 400,
                    degree_u: 2,
                    degree_p: 1,
                })
                .collect(),
            StudyMode::Coupled => [4, 8, 16, 32]
                .iter()
                .map(|&mesh_n| GridPoint {
                    mesh_n,
                    n_steps: 10 * mesh_n,
                    degree_u: 1,
                    degree_p: 1,
                })
                .collect(),
        };
        Self { mode, t_final, mu, grid }
    }
}

#[derive(Debug, Clone)]
pub struct StudyRow {
    pub mesh_n: usize,
    pub dt: f64,
    pub errors: ErrorNorms,
    pub splitting_l2l2_sq: f64,
    pub max_identity_residual: f64,
    /// Rates against the previous row; `None` on the first.
    pub rate_u: Option<f64>,
    pub rate_p: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RateTable {
    pub mode: StudyMode,
    pub rows: Vec<StudyRow>,
    /// Rows whose velocity error did not decrease.
    pub non_monotone: Vec<usize>,
}

pub const RATE_CSV_HEADER: &str = "n,dt,err_u_L2,err_u_H1,err_p_L2,rate_u,rate_p";

impl RateTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(RATE_CSV_HEADER);
        s.push('\n');
        let opt = |r: Option<f64>| r.map_or(String::new(), |v| format!("{v:.6}"));
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{},{}\n",
                r.mesh_n,
                r.dt,
                r.errors.u_l2,
                r.errors.utilde_h1,
                r.errors.p_l2,
                opt(r.rate_u),
                opt(r.rate_p)
            ));
        }
        s
    }

    pub fn finest_rate_u(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.rate_u)
    }
}

pub fn observed_rate(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

/// Run every grid point (in parallel) and tabulate errors and rates.
pub fn convergence_study(study: &StudyConfig, case: &ManufacturedCase) -> Result<RateTable, SchemeError> {
    let results: Vec<Result<StudyRow, SchemeError>> = study
        .grid
        .par_iter()
        .map(|g| {
            let dt = study.t_final / g.n_steps as f64;
            let cfg = case.config(dt, study.t_final, g.mesh_n).with_degrees(g.degree_u, g.degree_p);
            let disc = Arc::new(Discretization::structured(g.mesh_n, g.degree_u, g.degree_p)?);
            let mut sch = scheme::Scheme::with_discretization(cfg, disc.clone())?;
            let out = sch.run()?;
            let errors = error_norms(&disc, &out, case);
            let splitting = crate::diagnostics::interpolant_difference_norms(&out.trajectory, &disc.ops, out.dt)
                .map(|n| n.u_minus_utilde)
                .unwrap_or(f64::NAN);
            Ok(StudyRow {
                mesh_n: g.mesh_n,
                dt: out.dt,
                errors,
                splitting_l2l2_sq: splitting,
                max_identity_residual: out.ledger.max_identity_residual(),
                rate_u: None,
                rate_p: None,
            })
        })
        .collect();
    let mut rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut non_monotone = Vec::new();
    for i in 1..rows.len() {
        let (a, b) = (rows[i - 1].errors, rows[i].errors);
        rows[i].rate_u = Some(observed_rate(a.u_l2, b.u_l2));
        rows[i].rate_p = Some(observed_rate(a.p_l2, b.p_l2));
        if !(b.u_l2 < a.u_l2) {
            non_monotone.push(i);
        }
    }
    Ok(RateTable {
        mode: study.mode,
        rows,
        non_monotone,
    })
}
