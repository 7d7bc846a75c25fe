//! Stability diagnostics: the energy ledger, residuals of the discrete
//! energy identities, the traced energy inequality, interpolant-difference
//! norms, the L2 time modulus and the discrete Gronwall bound.

use std::collections::HashMap;

use thiserror::Error;

use crate::assembly::OperatorSet;
use crate::scheme::{Snapshot, State, StepReport, YhElement};

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("trajectory is thinned or incomplete: {0}")]
    Trajectory(String),
    #[error("time shift tau = {tau} must satisfy 0 <= tau < T = {t_final}")]
    Shift { tau: f64, t_final: f64 },
    #[error("Gronwall bound needs 1 - nu*dt > 0 (nu = {nu}, dt = {dt})")]
    Gronwall { nu: f64, dt: f64 },
    #[error("sequence b must be nonnegative")]
    NegativeData,
}

/// `|sum(terms) - rhs| / max(|terms|, |rhs|)`, zero when everything vanishes.
pub fn relative_residual(terms: &[f64], rhs: f64) -> f64 {
    let lhs: f64 = terms.iter().sum();
    let scale = terms.iter().fold(rhs.abs(), |m, t| m.max(t.abs()));
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).abs() / scale
    }
}

fn grad_sq(ops: &OperatorSet, p: &[f64]) -> f64 {
    ops.n_p.bilinear(p, p)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `||u~||^2 - ||u||^2 - ||u - u~||^2`, relative.
pub fn pythagoras_residual(ops: &OperatorSet, utilde: &[f64], u: &YhElement) -> f64 {
    let a = ops.m_u.bilinear(utilde, utilde);
    let b = u.norm_sq(ops);
    let c = u.subtract_from(utilde).norm_sq(ops);
    relative_residual(&[a, -b, -c], 0.0)
}

/// `||u0||^2 + dt^2 ||grad p0||^2 = ||u~0||^2`, relative.
pub fn init_identity_residual(ops: &OperatorSet, dt: f64, utilde0: &[f64], u0: &YhElement, p0: &[f64]) -> f64 {
    relative_residual(
        &[u0.norm_sq(ops), dt * dt * grad_sq(ops, p0)],
        ops.m_u.bilinear(utilde0, utilde0),
    )
}

/// Residual of the first-step identity
/// `(||u1||^2 + ||u~1 - u0||^2 - ||u0||^2)/dt + dt(||grad p1||^2 - ||grad p0||^2)
///  + 2 mu ||grad u~1||^2 = 2 (f1, u~1)`.
#[allow(clippy::too_many_arguments)]
pub fn first_step_identity_residual(
    ops: &OperatorSet,
    dt: f64,
    mu: f64,
    u0: &YhElement,
    p0: &[f64],
    utilde1: &[f64],
    u1: &YhElement,
    p1: &[f64],
    load1: &[f64],
) -> f64 {
    let terms = [
        u1.norm_sq(ops) / dt,
        u0.subtract_from(utilde1).norm_sq(ops) / dt,
        -u0.norm_sq(ops) / dt,
        dt * grad_sq(ops, p1),
        -dt * grad_sq(ops, p0),
        2.0 * mu * ops.a_u.bilinear(utilde1, utilde1),
    ];
    relative_residual(&terms, 2.0 * dot(load1, utilde1))
}

/// Residual of the per-step BDF2 identity relating levels `m-1, m, m+1`.
#[allow(clippy::too_many_arguments)]
pub fn step_identity_residual(
    ops: &OperatorSet,
    dt: f64,
    mu: f64,
    u_mm1: &YhElement,
    u_m: &YhElement,
    u_mp1: &YhElement,
    utilde_mp1: &[f64],
    p_m: &[f64],
    p_mp1: &[f64],
    load: &[f64],
) -> f64 {
    let n = |y: YhElement| y.norm_sq(ops);
    let terms = [
        u_mp1.norm_sq(ops) / dt,
        -u_m.norm_sq(ops) / dt,
        n(YhElement::combine(&[(2.0, u_mp1), (-1.0, u_m)])) / dt,
        -n(YhElement::combine(&[(2.0, u_m), (-1.0, u_mm1)])) / dt,
        n(YhElement::combine(&[(1.0, u_mp1), (-2.0, u_m), (1.0, u_mm1)])) / dt,
        3.0 * u_mp1.subtract_from(utilde_mp1).norm_sq(ops) / dt,
        4.0 * dt / 3.0 * grad_sq(ops, p_mp1),
        -4.0 * dt / 3.0 * grad_sq(ops, p_m),
        4.0 * mu * ops.a_u.bilinear(utilde_mp1, utilde_mp1),
    ];
    relative_residual(&terms, 4.0 * dot(load, utilde_mp1))
}

/// One ledger row per time level `m`.
///
/// At `m = 0` the level `u^{-1}` is taken as `u^0`; second differences are
/// zero for `m < 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub step: usize,
    pub t: f64,
    pub norm_u_sq: f64,
    pub norm_2u_minus_um1_sq: f64,
    /// `(4 dt^2 / 3) ||grad p^m||^2`
    pub dt2_gradp_sq: f64,
    pub e_h: f64,
    /// `||u~^m - u^m||^2`
    pub split_err_sq: f64,
    /// `||u^m - 2u^{m-1} + u^{m-2}||^2`
    pub second_diff_sq: f64,
    pub grad_utilde_sq: f64,
    pub f_dot_utilde: f64,
    pub residual_identity: f64,
    pub residual_pythagoras: f64,
    pub residual_divergence: f64,
    pub residual_skew: f64,
    /// `||f^m||^2` of the time-averaged forcing.
    pub f_norm_sq: f64,
    pub utilde_sq: f64,
}

impl LedgerRow {
    pub fn from_state(
        ops: &OperatorSet,
        dt: f64,
        s: &State,
        u_mm2: Option<&YhElement>,
        report: &StepReport,
    ) -> Self {
        let norm_u_sq = s.u_m.norm_sq(ops);
        let norm_2u_minus_um1_sq = YhElement::combine(&[(2.0, &s.u_m), (-1.0, &s.u_mm1)]).norm_sq(ops);
        let dt2_gradp_sq = 4.0 * dt * dt / 3.0 * grad_sq(ops, &s.p_m);
        let second_diff_sq = match u_mm2 {
            Some(u2) if s.m >= 2 => {
                YhElement::combine(&[(1.0, &s.u_m), (-2.0, &s.u_mm1), (1.0, u2)]).norm_sq(ops)
            }
            _ => 0.0,
        };
        Self {
            step: s.m,
            t: s.t,
            norm_u_sq,
            norm_2u_minus_um1_sq,
            dt2_gradp_sq,
            e_h: norm_u_sq + norm_2u_minus_um1_sq + dt2_gradp_sq,
            split_err_sq: s.u_m.subtract_from(&s.utilde_m).norm_sq(ops),
            second_diff_sq,
            grad_utilde_sq: ops.a_u.bilinear(&s.utilde_m, &s.utilde_m),
            f_dot_utilde: dot(&report.load, &s.utilde_m),
            residual_identity: report.identity,
            residual_pythagoras: report.pythagoras,
            residual_divergence: report.divergence,
            residual_skew: report.skew,
            f_norm_sq: report.f_norm_sq,
            utilde_sq: ops.m_u.bilinear(&s.utilde_m, &s.utilde_m),
        }
    }
}

pub const LEDGER_CSV_HEADER: &str = "step,t,norm_u_sq,norm_2u_minus_um1_sq,dt2_gradp_sq,E_h,split_err_sq,second_diff_sq,grad_utilde_sq,f_dot_utilde,residual_identity,residual_pythagoras";

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    pub rows: Vec<LedgerRow>,
    pub dt: f64,
    pub mu: f64,
    /// `||u_0||^2` of the continuous initial data.
    pub u0_norm_sq: f64,
    /// `||u~^1 - u^0||^2`
    pub first_jump_sq: f64,
}

impl EnergyLedger {
    pub fn new(dt: f64, mu: f64, u0_norm_sq: f64) -> Self {
        Self {
            rows: Vec::new(),
            dt,
            mu,
            u0_norm_sq,
            first_jump_sq: 0.0,
        }
    }

    pub fn push(&mut self, row: LedgerRow) {
        self.rows.push(row);
    }

    pub fn max_identity_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual_identity).fold(0.0, f64::max)
    }

    pub fn max_pythagoras_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual_pythagoras).fold(0.0, f64::max)
    }

    pub fn max_divergence_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual_divergence).fold(0.0, f64::max)
    }

    pub fn max_skew_residual(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.residual_skew)
            .filter(|v| !v.is_nan())
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(LEDGER_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                r.step,
                r.t,
                r.norm_u_sq,
                r.norm_2u_minus_um1_sq,
                r.dt2_gradp_sq,
                r.e_h,
                r.split_err_sq,
                r.second_diff_sq,
                r.grad_utilde_sq,
                r.f_dot_utilde,
                r.residual_identity,
                r.residual_pythagoras
            ));
        }
        s
    }
}

/// Energy inequality for one final index `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBound {
    pub m: usize,
    /// Left side with the coefficients of the Gronwall step.
    pub lhs_traced: f64,
    /// `b_M (1 - 2 dt)^{-M}`
    pub rhs_traced: f64,
    /// Left side with the final coefficients (2 on splitting errors, 3 on the first jump).
    pub lhs: f64,
    /// `C e^{3 M dt} (||u0||^2 + dt sum ||f^m||^2)`, `C = 10 + 14 dt`.
    pub rhs: f64,
    pub utilde_sq: f64,
    pub utilde_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub bounds: Vec<EnergyBound>,
    pub max_ratio_traced: f64,
    /// `None` when `dt > 1/6`, where the exponential form is not implied.
    pub max_ratio: Option<f64>,
    pub max_utilde_ratio: f64,
    /// Whether `E_h^M` is non-increasing for `M >= 1` (meaningful for `f = 0`).
    pub energy_monotone: bool,
    pub violations: Vec<String>,
}

impl EnergyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Replays the chain of estimates behind the global energy inequality on a
/// completed run and checks every link for all `M`.
///
/// With `S_m = ||u~^m - u^m||^2`, `J = ||u~^1 - u^0||^2` and `F_m = ||f^m||^2`:
///
/// ```text
/// LHS'_M = E^M + sum_{m=2}^M ||u^m - 2u^{m-1} + u^{m-2}||^2 + (3 - 2dt) sum_{m=2}^M S_m
///          + 4 mu dt sum_{m=1}^M ||grad u~^m||^2 + (7 - 14 dt) J
/// b_M    = (10 + 14 dt) ||u_0||^2 + 2 dt sum_{m=1}^M F_m + 5 dt F_1
/// LHS'_M <= b_M (1 - 2 dt)^{-M}
/// ```
///
/// and for `dt <= 1/6` the exponential form with `C = 10 + 14 dt`.
pub fn energy_inequality_check(ledger: &EnergyLedger) -> EnergyReport {
    let dt = ledger.dt;
    let mu = ledger.mu;
    let u0 = ledger.u0_norm_sq;
    let j = ledger.first_jump_sq;
    let rows = &ledger.rows;
    let mut bounds = Vec::new();
    let mut violations = Vec::new();
    let (mut sd, mut split, mut grad, mut fsum) = (0.0, 0.0, 0.0, 0.0);
    let f1 = rows.get(1).map_or(0.0, |r| r.f_norm_sq);
    let growth = 1.0 / (1.0 - 2.0 * dt);
    let exp_form = dt <= 1.0 / 6.0;
    let tol = 1e-12;
    let mut rhs1 = 0.0;
    for (mm, r) in rows.iter().enumerate().skip(1) {
        if mm >= 2 {
            sd += r.second_diff_sq;
            split += r.split_err_sq;
        }
        grad += r.grad_utilde_sq;
        fsum += r.f_norm_sq;
        let lhs_traced = r.e_h + sd + (3.0 - 2.0 * dt) * split + 4.0 * mu * dt * grad + (7.0 - 14.0 * dt) * j;
        let b = (10.0 + 14.0 * dt) * u0 + 2.0 * dt * fsum + 5.0 * dt * f1;
        let rhs_traced = b * growth.powi(mm as i32);
        let lhs = r.e_h + sd + 2.0 * split + 4.0 * mu * dt * grad + 3.0 * j;
        let rhs = (10.0 + 14.0 * dt) * (3.0 * mm as f64 * dt).exp() * (u0 + dt * fsum);
        if mm == 1 {
            rhs1 = rhs_traced;
        }
        let utilde_bound = if mm == 1 { rhs1 + 2.0 * u0 } else { rhs_traced };
        let slack = |x: f64| x * (1.0 + tol) + tol * u0.max(f64::MIN_POSITIVE);
        if !(lhs_traced <= slack(rhs_traced)) {
            violations.push(format!("M = {mm}: traced bound {lhs_traced:e} > {rhs_traced:e}"));
        }
        if exp_form && !(lhs <= slack(rhs)) {
            violations.push(format!("M = {mm}: exponential bound {lhs:e} > {rhs:e}"));
        }
        if !(r.utilde_sq <= slack(utilde_bound)) {
            violations.push(format!("M = {mm}: ||u~^M||^2 = {:e} > {utilde_bound:e}", r.utilde_sq));
        }
        bounds.push(EnergyBound {
            m: mm,
            lhs_traced,
            rhs_traced,
            lhs,
            rhs,
            utilde_sq: r.utilde_sq,
            utilde_bound,
        });
    }
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else if a > 0.0 { f64::INFINITY } else { 0.0 };
    let max_ratio_traced = bounds.iter().map(|b| ratio(b.lhs_traced, b.rhs_traced)).fold(0.0, f64::max);
    let max_ratio = exp_form.then(|| bounds.iter().map(|b| ratio(b.lhs, b.rhs)).fold(0.0, f64::max));
    let max_utilde_ratio = bounds.iter().map(|b| ratio(b.utilde_sq, b.utilde_bound)).fold(0.0, f64::max);
    let e1 = rows.get(1).map_or(0.0, |r| r.e_h);
    let energy_monotone = rows
        .windows(2)
        .skip(1)
        .all(|w| w[1].e_h <= w[0].e_h + 1e-12 * e1);
    if dt >= 0.5 {
        violations.push(format!("dt = {dt} >= 1/2: Gronwall step not applicable"));
    }
    EnergyReport {
        bounds,
        max_ratio_traced,
        max_ratio,
        max_utilde_ratio,
        energy_monotone,
        violations,
    }
}

/// Bound on `||u_h - u~_h||^2_{L2(L2)}` from the traced energy inequality:
/// `dt (RHS'_N / 2 + 2 ||u_0||^2 + (2/3) RHS'_1)`, valid for `dt <= 1/6`.
pub fn splitting_error_bound(report: &EnergyReport, ledger: &EnergyLedger) -> f64 {
    let rhs_n = report.bounds.last().map_or(0.0, |b| b.rhs_traced);
    let rhs_1 = report.bounds.first().map_or(0.0, |b| b.rhs_traced);
    ledger.dt * (0.5 * rhs_n + 2.0 * ledger.u0_norm_sq + 2.0 / 3.0 * rhs_1)
}

/// Squared `L2(0,T;L2)` norms of differences of the piecewise-constant
/// interpolants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolantNorms {
    /// `||u_h - u~_h||^2`
    pub u_minus_utilde: f64,
    /// `||u_h - ubar_h||^2`
    pub u_minus_ubar: f64,
    /// `||ubar_h - uhat_h||^2`
    pub ubar_minus_uhat: f64,
}

fn check_full(trajectory: &[Snapshot]) -> Result<(), DiagnosticsError> {
    if trajectory.len() < 2 {
        return Err(DiagnosticsError::Trajectory("need at least levels 0 and 1".into()));
    }
    for (i, s) in trajectory.iter().enumerate() {
        if s.m != i {
            return Err(DiagnosticsError::Trajectory(format!(
                "position {i} holds level {}; run with store_every = 1",
                s.m
            )));
        }
    }
    Ok(())
}

pub fn interpolant_difference_norms(
    trajectory: &[Snapshot],
    ops: &OperatorSet,
    dt: f64,
) -> Result<InterpolantNorms, DiagnosticsError> {
    check_full(trajectory)?;
    let n = trajectory.len() - 1;
    let tr = trajectory;
    let split = |m: usize| tr[m].u.subtract_from(&tr[m].utilde).norm_sq(ops);
    let u_minus_utilde = dt * (1..=n).map(split).sum::<f64>();
    let u_minus_ubar = dt
        * (1..n)
            .map(|m| YhElement::combine(&[(1.0, &tr[m + 1].u), (-1.0 * 2.0, &tr[m].u), (1.0, &tr[m - 1].u)]).norm_sq(ops))
            .sum::<f64>();
    let hat = |m: usize| {
        // 2u^m - u^{m-1} - (2u~^m - u~^{m-1})
        let mut y = YhElement::combine(&[(2.0, &tr[m].u), (-1.0, &tr[m - 1].u)]);
        for (i, b) in y.base.iter_mut().enumerate() {
            *b -= 2.0 * tr[m].utilde[i] - tr[m - 1].utilde[i];
        }
        y.norm_sq(ops)
    };
    let ubar_minus_uhat = dt * (split(1) + (1..n).map(hat).sum::<f64>());
    Ok(InterpolantNorms {
        u_minus_utilde,
        u_minus_ubar,
        ubar_minus_uhat,
    })
}

/// `omega(tau) = int_0^{T - tau} ||u~_h(t + tau) - u~_h(t)||^2 dt` for the
/// piecewise-constant interpolant `u~_h = u~^{m+1}` on `(t^m, t^{m+1}]`,
/// `u~_h = u~^0` for `t <= 0`. Exact: the integrand is constant between the
/// breakpoints `t^m` and `t^m - tau`.
pub fn time_modulus(trajectory: &[Snapshot], ops: &OperatorSet, dt: f64, tau: f64) -> Result<f64, DiagnosticsError> {
    check_full(trajectory)?;
    let n = trajectory.len() - 1;
    let t_final = n as f64 * dt;
    if !(tau >= 0.0 && tau < t_final) {
        return Err(DiagnosticsError::Shift { tau, t_final });
    }
    if tau == 0.0 {
        return Ok(0.0);
    }
    let end = t_final - tau;
    let mut pts = vec![0.0, end];
    for m in 0..=n {
        let a = m as f64 * dt;
        for p in [a, a - tau] {
            if p > 0.0 && p < end {
                pts.push(p);
            }
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * t_final);
    let level = |t: f64| -> usize {
        if t <= 0.0 {
            0
        } else {
            ((t / dt).floor() as usize + 1).min(n)
        }
    };
    let mut cache: HashMap<(usize, usize), f64> = HashMap::new();
    let mut total = 0.0;
    for w in pts.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let (a, b) = (level(mid + tau), level(mid));
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        let v = *cache.entry(key).or_insert_with(|| {
            let d: Vec<f64> = trajectory[a]
                .utilde
                .iter()
                .zip(&trajectory[b].utilde)
                .map(|(x, y)| x - y)
                .collect();
            ops.m_u.bilinear(&d, &d)
        });
        total += len * v;
    }
    Ok(total)
}

fn gronwall_check(nu: f64, dt: f64, b: &[f64]) -> Result<f64, DiagnosticsError> {
    if !(1.0 - nu * dt > 0.0) || nu < 0.0 || dt <= 0.0 {
        return Err(DiagnosticsError::Gronwall { nu, dt });
    }
    if b.iter().any(|v| !(*v >= 0.0)) {
        return Err(DiagnosticsError::NegativeData);
    }
    Ok(1.0 / (1.0 - nu * dt))
}

/// Right side of the discrete Gronwall inequality: for `a_{n+1} <= b_{n+1} +
/// nu dt sum_{j=0}^{n} a_{j+1}`, returns bounds on `a_1, a_2, ...` given
/// `b = [b_1, b_2, ...]`:
/// `a_{n+1} <= b_{n+1} + nu dt / (1 - nu dt) sum_{j=0}^{n} r^{n-j} b_{j+1}`,
/// `r = 1 / (1 - nu dt)`.
pub fn discrete_gronwall_bound(b: &[f64], nu: f64, dt: f64) -> Result<Vec<f64>, DiagnosticsError> {
    let r = gronwall_check(nu, dt, b)?;
    let c = nu * dt * r;
    // s_n = sum_{j=0}^{n} r^{n-j} b_{j+1}, s_n = r s_{n-1} + b_{n+1}
    let mut s = 0.0;
    Ok(b.iter()
        .map(|&bn| {
            s = r * s + bn;
            bn + c * s
        })
        .collect())
}

/// Closed form `b_n r^n` for non-decreasing `b`.
pub fn gronwall_closed_form(b: &[f64], nu: f64, dt: f64) -> Result<Vec<f64>, DiagnosticsError> {
    let r = gronwall_check(nu, dt, b)?;
    Ok(b.iter().enumerate().map(|(i, bn)| bn * r.powi(i as i32 + 1)).collect())
}

/// Extremal sequence: the hypothesis taken with equality,
/// `a_{n+1} = b_{n+1} + nu dt sum_{j=0}^{n} a_{j+1}`.
pub fn gronwall_recursion(b: &[f64], nu: f64, dt: f64) -> Result<Vec<f64>, DiagnosticsError> {
    gronwall_check(nu, dt, b)?;
    let mut sum = 0.0;
    Ok(b.iter()
        .map(|&bn| {
            let a = (bn + nu * dt * sum) / (1.0 - nu * dt);
            sum += a;
            a
        })
        .collect())
}
