//! Configuration files and output writers (legacy VTK, CSV).
//!
//! Config grammar: one `key = value` per line, `#` starts a comment.
//!
//! | key | default |
//! |---|---|
//! | `mesh_n`, `dt`, `T`, `mu` | required |
//! | `degree_u` | 2 |
//! | `degree_p` | 1 |
//! | `case` | `stream_vortex` (forced manufactured solution) or `custom` (unforced vortex decay) |
//! | `store_every` | 1 |
//! | `tol_poisson`, `tol_momentum` | 1e-12 |
//! | `out_dir` | `out` |

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::diagnostics::EnergyLedger;
use crate::mms::{self, RateTable};
use crate::scheme::{Discretization, SchemeConfig, Snapshot};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("missing required key '{0}'")]
    Missing(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    StreamVortex,
    Custom,
}

/// A validated configuration file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scheme: SchemeConfig,
    pub case: CaseKind,
    pub out_dir: PathBuf,
    pub warnings: Vec<String>,
}

impl RunConfig {
    pub fn manufactured_case(&self) -> mms::ManufacturedCase {
        mms::stream_vortex_case(self.scheme.mu)
    }
}

const KEYS: [&str; 11] = [
    "mesh_n",
    "degree_u",
    "degree_p",
    "dt",
    "T",
    "mu",
    "case",
    "store_every",
    "tol_poisson",
    "tol_momentum",
    "out_dir",
];

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let mut values: HashMap<&str, (usize, String)> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |msg: String| ConfigError::Line { line, msg };
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected 'key = value', got '{content}'")))?;
        let (k, v) = (k.trim(), v.trim());
        let key = KEYS
            .iter()
            .find(|&&known| known == k)
            .ok_or_else(|| err(format!("unknown key '{k}'")))?;
        if values.insert(key, (line, v.to_string())).is_some() {
            return Err(err(format!("duplicate key '{k}'")));
        }
    }

    fn num<T: std::str::FromStr>(values: &HashMap<&str, (usize, String)>, key: &'static str) -> Result<Option<(usize, T)>, ConfigError> {
        match values.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(|x| Some((*line, x))).map_err(|_| ConfigError::Line {
                line: *line,
                msg: format!("invalid value '{v}' for {key}"),
            }),
        }
    }
    let required = |key: &'static str| -> Result<(usize, f64), ConfigError> {
        num::<f64>(&values, key)?.ok_or(ConfigError::Missing(key))
    };
    let positive = |key: &'static str| -> Result<f64, ConfigError> {
        let (line, v) = required(key)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(ConfigError::Line {
                line,
                msg: format!("{key} must be positive, got {v}"),
            });
        }
        Ok(v)
    };
    let dt = positive("dt")?;
    let t_final = positive("T")?;
    let mu = positive("mu")?;
    let (n_line, mesh_n) = num::<usize>(&values, "mesh_n")?.ok_or(ConfigError::Missing("mesh_n"))?;
    if mesh_n == 0 {
        return Err(ConfigError::Line {
            line: n_line,
            msg: "mesh_n must be at least 1".into(),
        });
    }
    let degree = |key: &'static str, default: usize| -> Result<usize, ConfigError> {
        match num::<usize>(&values, key)? {
            None => Ok(default),
            Some((_, d)) if d == 1 || d == 2 => Ok(d),
            Some((line, d)) => Err(ConfigError::Line {
                line,
                msg: format!("{key} must be 1 or 2, got {d}"),
            }),
        }
    };
    let degree_u = degree("degree_u", 2)?;
    let degree_p = degree("degree_p", 1)?;
    let store_every = match num::<usize>(&values, "store_every")? {
        None => 1,
        Some((line, 0)) => {
            return Err(ConfigError::Line {
                line,
                msg: "store_every must be at least 1".into(),
            })
        }
        Some((_, s)) => s,
    };
    let tol = |key: &'static str| -> Result<f64, ConfigError> {
        match num::<f64>(&values, key)? {
            None => Ok(1e-12),
            Some((_, t)) if t > 0.0 && t < 1.0 => Ok(t),
            Some((line, t)) => Err(ConfigError::Line {
                line,
                msg: format!("{key} must lie in (0, 1), got {t}"),
            }),
        }
    };
    let tol_poisson = tol("tol_poisson")?;
    let tol_momentum = tol("tol_momentum")?;
    let case = match values.get("case") {
        None => CaseKind::StreamVortex,
        Some((_, v)) if v == "stream_vortex" => CaseKind::StreamVortex,
        Some((_, v)) if v == "custom" => CaseKind::Custom,
        Some((line, v)) => {
            return Err(ConfigError::Line {
                line: *line,
                msg: format!("unknown case '{v}' (stream_vortex | custom)"),
            })
        }
    };
    let out_dir = values
        .get("out_dir")
        .map_or_else(|| PathBuf::from("out"), |(_, v)| PathBuf::from(v));

    if t_final < dt {
        let line = values["T"].0;
        return Err(ConfigError::Line {
            line,
            msg: format!("T = {t_final} is smaller than dt = {dt}"),
        });
    }
    let mut scheme = match case {
        CaseKind::StreamVortex => mms::stream_vortex_case(mu).config(dt, t_final, mesh_n),
        CaseKind::Custom => mms::vortex_decay_config(dt, t_final, mu, mesh_n),
    };
    scheme.degree_u = degree_u;
    scheme.degree_p = degree_p;
    scheme.store_every = store_every;
    scheme.tol_poisson = tol_poisson;
    scheme.tol_momentum = tol_momentum;
    let mut warnings = Vec::new();
    let (_, dt_used, warning) = scheme.time_grid();
    if let Some(w) = warning {
        warnings.push(w);
        scheme.dt = dt_used;
    }
    Ok(RunConfig {
        scheme,
        case,
        out_dir,
        warnings,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ConfigError + '_ {
    move |source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), ConfigError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn write_ledger_csv(ledger: &EnergyLedger, path: &Path) -> Result<(), ConfigError> {
    write_text(path, &ledger.to_csv())
}

pub fn write_rate_csv(table: &RateTable, path: &Path) -> Result<(), ConfigError> {
    write_text(path, &table.to_csv())
}

/// Node of each mesh vertex in a Lagrange space (vertex nodes coincide
/// with mesh vertices); `None` for vertices no cell uses.
fn vertex_nodes(disc: &Discretization, space: &crate::fe::FeSpace) -> Vec<Option<usize>> {
    let mut map = vec![None; disc.mesh.n_vertices()];
    for (t, tri) in disc.mesh.triangles().iter().enumerate() {
        for (l, &v) in tri.iter().enumerate() {
            map[v] = Some(space.cell_nodes(t)[l]);
        }
    }
    map
}

/// Legacy ASCII VTK of one level: point vectors `u_tilde` and `u_proj`
/// and scalar `p`. The gradient part of `u_proj` is discontinuous; at
/// vertices it is the area-weighted average over incident cells. With
/// `cell_data`, the per-cell values of `grad phi` are written as well.
pub fn vtk_string(disc: &Discretization, s: &Snapshot, cell_data: bool) -> String {
    let mesh = &disc.mesh;
    let su = &disc.space_u;
    let sp = &disc.space_p;
    let nv = mesh.n_vertices();
    let un = vertex_nodes(disc, su);
    let pn = vertex_nodes(disc, sp);
    let mut grad_sum = vec![[0.0; 2]; nv];
    let mut area_sum = vec![0.0; nv];
    let mut cell_grads = Vec::with_capacity(mesh.n_triangles());
    const CORNERS: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(t);
        let mut cell_avg = [0.0; 2];
        for (l, &v) in tri.iter().enumerate() {
            let (_, g) = sp.eval_in_cell(&s.u.phi, t, CORNERS[l]);
            grad_sum[v][0] += area * g[0][0];
            grad_sum[v][1] += area * g[0][1];
            area_sum[v] += area;
            cell_avg[0] += g[0][0] / 3.0;
            cell_avg[1] += g[0][1] / 3.0;
        }
        cell_grads.push(cell_avg);
    }
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(out, "bdf2proj level {} t={:e}", s.m, s.t);
    out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {nv} double");
    for p in mesh.vertices() {
        let _ = writeln!(out, "{:e} {:e} 0", p[0], p[1]);
    }
    let nt = mesh.n_triangles();
    let _ = writeln!(out, "CELLS {nt} {}", 4 * nt);
    for tri in mesh.triangles() {
        let _ = writeln!(out, "3 {} {} {}", tri[0], tri[1], tri[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {nt}");
    for _ in 0..nt {
        out.push_str("5\n");
    }
    let _ = writeln!(out, "POINT_DATA {nv}");
    let vec_at = |c: &[f64], v: usize| -> [f64; 2] {
        un[v].map_or([0.0; 2], |n| [c[su.dof(0, n)], c[su.dof(1, n)]])
    };
    out.push_str("VECTORS u_tilde double\n");
    for v in 0..nv {
        let u = vec_at(&s.utilde, v);
        let _ = writeln!(out, "{:e} {:e} 0", u[0], u[1]);
    }
    out.push_str("VECTORS u_proj double\n");
    for v in 0..nv {
        let b = vec_at(&s.u.base, v);
        let g = if area_sum[v] > 0.0 {
            [grad_sum[v][0] / area_sum[v], grad_sum[v][1] / area_sum[v]]
        } else {
            [0.0; 2]
        };
        let _ = writeln!(out, "{:e} {:e} 0", b[0] + g[0], b[1] + g[1]);
    }
    out.push_str("SCALARS p double 1\nLOOKUP_TABLE default\n");
    for v in 0..nv {
        let p = pn[v].map_or(0.0, |n| s.p[sp.dof(0, n)]);
        let _ = writeln!(out, "{p:e}");
    }
    if cell_data {
        let _ = writeln!(out, "CELL_DATA {nt}");
        out.push_str("VECTORS grad_phi double\n");
        for g in &cell_grads {
            let _ = writeln!(out, "{:e} {:e} 0", g[0], g[1]);
        }
    }
    out
}

pub fn write_vtk(disc: &Discretization, s: &Snapshot, path: &Path, cell_data: bool) -> Result<(), ConfigError> {
    write_text(path, &vtk_string(disc, s, cell_data))
}
