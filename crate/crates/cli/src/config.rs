//! Run configuration: TOML file schema plus construction of the built-in
//! and expression-defined systems.

use std::sync::Arc;

use serde::Deserialize;

use holomech::geometry::ConstraintSpec;
use holomech::lagrangian::ConstrainedSystem;
use holomech::numeric::{Mat, Tolerances};
use holomech::rigid_body::InertiaData;
use holomech::sphere::SphereSystem;

use crate::expr::Expr;

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub system: Option<SystemSection>,
    pub run: Option<RunSection>,
    pub initial: Option<InitialSection>,
    pub tolerances: Option<ToleranceSection>,
    pub output: Option<OutputSection>,
    pub liouville: Option<LiouvilleSection>,
}

#[derive(Debug, Deserialize, Default, Clone)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub name: Option<String>,
    pub mass: Option<f64>,
    pub radius: Option<f64>,
    pub inertia: Option<[f64; 3]>,
    pub g: Option<[f64; 3]>,
    pub coordinates: Option<Vec<String>>,
    pub constraints: Option<Vec<String>>,
    pub mass_matrix: Option<Vec<Vec<String>>>,
    pub potential: Option<String>,
}

#[derive(Debug, Deserialize, Default, Clone)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub method: Option<String>,
    pub t_end: Option<f64>,
    pub sample_dt: Option<f64>,
    pub order: Option<usize>,
    pub step: Option<f64>,
}

#[derive(Debug, Deserialize, Default, Clone)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub q: Option<Vec<f64>>,
    pub p: Option<Vec<f64>>,
    pub omega: Option<[f64; 3]>,
}

#[derive(Debug, Deserialize, Default, Clone)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    pub newton_tol: Option<f64>,
    pub newton_max_iter: Option<usize>,
    pub fd_step: Option<f64>,
    pub quad_tol: Option<f64>,
    pub invariant_tol: Option<f64>,
}

#[derive(Debug, Deserialize, Default, Clone)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<String>,
    pub format: Option<String>,
}

#[derive(Debug, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct LiouvilleSection {
    pub h: String,
    pub f: String,
    pub energy: f64,
    pub constant: f64,
    pub b_x: Option<f64>,
    pub b_y: Option<f64>,
    pub seed_momenta: [f64; 2],
    pub seed_position: Option<[f64; 2]>,
    pub t_end: f64,
    pub sample_dt: f64,
}

impl ToleranceSection {
    pub fn build(&self) -> Result<Tolerances, String> {
        let defaults = Tolerances::default();
        let tol = Tolerances {
            newton_tol: self.newton_tol.unwrap_or(defaults.newton_tol),
            newton_max_iter: self.newton_max_iter.unwrap_or(defaults.newton_max_iter),
            fd_step: self.fd_step.unwrap_or(defaults.fd_step),
            quad_tol: self.quad_tol.unwrap_or(defaults.quad_tol),
            invariant_tol: self.invariant_tol.unwrap_or(defaults.invariant_tol),
        };
        tol.validate().map_err(|e| e.to_string())?;
        Ok(tol)
    }
}

pub fn load_file(path: &str) -> Result<FileConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config '{path}': {e}"))?;
    toml::from_str(&text).map_err(|e| format!("cannot parse config '{path}': {e}"))
}

/// A fully constructed simulation target.
pub enum SystemKind {
    Sphere(SphereSystem),
    RigidBody(InertiaData),
    Custom {
        system: Arc<ConstrainedSystem>,
        name: String,
    },
}

impl SystemKind {
    pub fn name(&self) -> String {
        match self {
            SystemKind::Sphere(_) => "sphere".into(),
            SystemKind::RigidBody(_) => "rigid_body".into(),
            SystemKind::Custom { name, .. } => name.clone(),
        }
    }

    /// The generic constrained-system view used by the reduction routes.
    pub fn constrained(&self) -> Result<Arc<ConstrainedSystem>, String> {
        match self {
            SystemKind::Sphere(s) => Ok(s.constrained_system()),
            SystemKind::RigidBody(inertia) => {
                holomech::rigid_body::constrained_system(inertia).map_err(|e| e.to_string())
            }
            SystemKind::Custom { system, .. } => Ok(Arc::clone(system)),
        }
    }
}

pub fn build_system(section: &SystemSection) -> Result<SystemKind, String> {
    let name = section.name.as_deref().unwrap_or("sphere");
    match name {
        "sphere" => {
            let mass = section.mass.unwrap_or(1.0);
            let radius = section.radius.unwrap_or(1.0);
            let s = SphereSystem::new(mass, radius).map_err(|e| e.to_string())?;
            Ok(SystemKind::Sphere(s))
        }
        "rigid_body" | "rigid-body" => {
            let inertia = if let Some(g) = section.g {
                InertiaData::from_g_diag(g).map_err(|e| e.to_string())?
            } else if let Some(i) = section.inertia {
                InertiaData::from_principal_inertia(i).map_err(|e| e.to_string())?
            } else {
                InertiaData::from_g_diag([1.0, 2.0, 3.0]).map_err(|e| e.to_string())?
            };
            Ok(SystemKind::RigidBody(inertia))
        }
        "custom" => build_custom(section),
        other => Err(format!(
            "unknown system '{other}' (expected sphere, rigid_body or custom)"
        )),
    }
}

fn build_custom(section: &SystemSection) -> Result<SystemKind, String> {
    let coords = section
        .coordinates
        .clone()
        .ok_or("custom system needs [system] coordinates")?;
    let n = coords.len();
    if n < 2 {
        return Err("custom system needs at least two coordinates".into());
    }
    let constraint_srcs = section
        .constraints
        .clone()
        .ok_or("custom system needs [system] constraints")?;
    let count = constraint_srcs.len();
    if count == 0 || count >= n {
        return Err(format!(
            "need between 1 and {} constraints, got {count}",
            n - 1
        ));
    }
    let mass_srcs = section
        .mass_matrix
        .clone()
        .ok_or("custom system needs [system] mass_matrix")?;
    if mass_srcs.len() != n || mass_srcs.iter().any(|row| row.len() != n) {
        return Err(format!("mass_matrix must be {n}x{n} expression strings"));
    }
    let potential_src = section.potential.clone().unwrap_or_else(|| "0".into());

    // Parse everything once; derivatives are symbolic.
    let constraint_exprs: Vec<Expr> = constraint_srcs
        .iter()
        .map(|s| Expr::parse(s, &coords).map_err(|e| e.to_string()))
        .collect::<Result<_, String>>()?;
    let jac_exprs: Vec<Vec<Expr>> = constraint_exprs
        .iter()
        .map(|g| {
            (0..n)
                .map(|a| g.diff(a).map_err(|e| e.to_string()))
                .collect::<Result<Vec<_>, String>>()
        })
        .collect::<Result<_, String>>()?;
    let hess_exprs: Vec<Vec<Vec<Expr>>> = jac_exprs
        .iter()
        .map(|row| {
            row.iter()
                .map(|d| {
                    (0..n)
                        .map(|b| d.diff(b).map_err(|e| e.to_string()))
                        .collect::<Result<Vec<_>, String>>()
                })
                .collect::<Result<Vec<_>, String>>()
        })
        .collect::<Result<_, String>>()?;
    let mass_exprs: Vec<Vec<Expr>> = mass_srcs
        .iter()
        .map(|row| {
            row.iter()
                .map(|s| Expr::parse(s, &coords).map_err(|e| e.to_string()))
                .collect::<Result<Vec<_>, String>>()
        })
        .collect::<Result<_, String>>()?;
    let mass_diff: Vec<Vec<Vec<Expr>>> = mass_exprs
        .iter()
        .map(|row| {
            row.iter()
                .map(|entry| {
                    (0..n)
                        .map(|e| entry.diff(e).map_err(|err| err.to_string()))
                        .collect::<Result<Vec<_>, String>>()
                })
                .collect::<Result<Vec<_>, String>>()
        })
        .collect::<Result<_, String>>()?;
    let potential_expr = Expr::parse(&potential_src, &coords).map_err(|e| e.to_string())?;
    let potential_grad: Vec<Expr> = (0..n)
        .map(|a| potential_expr.diff(a).map_err(|e| e.to_string()))
        .collect::<Result<_, String>>()?;

    let g_exprs = constraint_exprs;
    let spec = ConstraintSpec::new(n, count, move |q: &[f64]| {
        g_exprs.iter().map(|g| g.eval(q)).collect()
    })
    .with_jacobian(move |q: &[f64]| {
        Mat::from_fn(count, n, |alpha, a| jac_exprs[alpha][a].eval(q))
    })
    .with_hessians(move |q: &[f64]| {
        hess_exprs
            .iter()
            .map(|h| Mat::from_fn(n, n, |a, b| h[a][b].eval(q)))
            .collect()
    });

    let mass_for_eval = mass_exprs;
    let system = ConstrainedSystem::new(
        coords,
        move |q: &[f64]| Mat::from_fn(n, n, |i, j| mass_for_eval[i][j].eval(q)),
        move |q: &[f64]| potential_expr.eval(q),
        spec,
    )
    .map_err(|e| e.to_string())?
    .with_mass_partials(move |q: &[f64], e: usize| {
        Mat::from_fn(n, n, |i, j| mass_diff[i][j][e].eval(q))
    })
    .with_potential_gradient(move |q: &[f64]| potential_grad.iter().map(|g| g.eval(q)).collect());
    Ok(SystemKind::Custom {
        system: Arc::new(system),
        name: section.name.clone().unwrap_or_else(|| "custom".into()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn custom_sphere_matches_builtin_values() {
        let section = SystemSection {
            name: Some("custom".into()),
            coordinates: Some(vec!["x".into(), "y".into(), "z".into()]),
            constraints: Some(vec!["x^2 + y^2 + z^2 - 1".into()]),
            mass_matrix: Some(vec![
                vec!["1".into(), "0".into(), "0".into()],
                vec!["0".into(), "1".into(), "0".into()],
                vec!["0".into(), "0".into(), "1".into()],
            ]),
            potential: Some("0".into()),
            ..Default::default()
        };
        let built = build_system(&section).unwrap();
        let sys = built.constrained().unwrap();
        let tol = Tolerances::default();
        let q = [0.3, -0.4, 0.866];
        let jac = sys.constraints().jacobian(&q, &tol).unwrap();
        for (a, qa) in q.iter().enumerate() {
            assert!((jac.get(0, a) - 2.0 * qa).abs() < 1e-14);
        }
        let hess = sys.constraints().hessians(&q, &tol).unwrap();
        assert!((hess[0].get(1, 1) - 2.0).abs() < 1e-14);
        assert!(hess[0].get(0, 1).abs() < 1e-14);
    }

    #[test]
    fn bad_mass_matrix_shape_is_rejected() {
        let section = SystemSection {
            name: Some("custom".into()),
            coordinates: Some(vec!["x".into(), "y".into()]),
            constraints: Some(vec!["x".into()]),
            mass_matrix: Some(vec![vec!["1".into()]]),
            ..Default::default()
        };
        assert!(build_system(&section).is_err());
    }
}
