//! Simulation drivers: produce a Trajectory for a (system, method) pair.

use std::sync::Arc;

use holomech::lagrangian::{ConstrainedSystem, FullPhaseState};
use holomech::lie::lie_solve;
use holomech::numeric::mat::vecops;
use holomech::numeric::rk::rk_drive;
use holomech::numeric::{Mat, Tolerances};
use holomech::reduction::{
    project_onto_surface, project_tangent_momenta, reduce_alternative, reduce_dirac,
    reduce_intermediate, reduced_flow, ReducedSystem,
};
use holomech::rigid_body::{self, BodyMethod, InertiaData};
use holomech::traj::Trajectory;
use holomech::Error as CoreError;

use crate::config::SystemKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rk,
    LieSeries,
    MultiplierOde,
    Dirac,
    Alternative,
}

impl Method {
    pub fn parse(name: &str) -> Result<Self, String> {
        match name {
            "rk" => Ok(Method::Rk),
            "lie_series" | "lie-series" | "lie" => Ok(Method::LieSeries),
            "multiplier_ode" | "multiplier-ode" | "multiplier" => Ok(Method::MultiplierOde),
            "dirac" => Ok(Method::Dirac),
            "alternative" => Ok(Method::Alternative),
            other => Err(format!(
                "unknown method '{other}' (rk, lie_series, multiplier_ode, dirac, alternative)"
            )),
        }
    }
}

pub struct RunPlan {
    pub method: Method,
    pub t_end: f64,
    pub sample_dt: f64,
    pub order: Option<usize>,
    pub step: Option<f64>,
    pub tol: Tolerances,
    pub q0: Option<Vec<f64>>,
    pub p0: Option<Vec<f64>>,
    pub omega0: Option<[f64; 3]>,
}

pub enum RunError {
    Config(String),
    Numerical(String),
}

impl From<CoreError> for RunError {
    fn from(e: CoreError) -> Self {
        RunError::Numerical(e.to_string())
    }
}

fn series_params(plan: &RunPlan) -> Result<(usize, f64), RunError> {
    let order = plan
        .order
        .ok_or_else(|| RunError::Config("lie_series needs --order".into()))?;
    let step = plan
        .step
        .ok_or_else(|| RunError::Config("lie_series needs --step".into()))?;
    if order < 2 || step <= 0.0 {
        return Err(RunError::Config(
            "lie_series needs order >= 2 and step > 0".into(),
        ));
    }
    Ok((order, step))
}

pub fn run(system: &SystemKind, plan: &RunPlan) -> Result<Trajectory, RunError> {
    if plan.t_end <= 0.0 {
        return Err(RunError::Config("t_end must be positive".into()));
    }
    if plan.sample_dt <= 0.0 {
        return Err(RunError::Config("sample_dt must be positive".into()));
    }
    match (system, plan.method) {
        (SystemKind::RigidBody(inertia), Method::Rk) => {
            let omega0 = plan.omega0.unwrap_or([1.0, 1.0, 1.0]);
            Ok(rigid_body::simulate_body(
                inertia,
                &omega0,
                plan.t_end,
                plan.sample_dt,
                BodyMethod::Rk,
                &plan.tol,
            )?)
        }
        (SystemKind::RigidBody(inertia), Method::LieSeries) => {
            let omega0 = plan.omega0.unwrap_or([1.0, 1.0, 1.0]);
            let (order, step) = series_params(plan)?;
            Ok(rigid_body::simulate_body(
                inertia,
                &omega0,
                plan.t_end,
                plan.sample_dt,
                BodyMethod::LieSeries { order, step },
                &plan.tol,
            )?)
        }
        (SystemKind::RigidBody(inertia), method) => {
            let sys = rigid_body::constrained_system(inertia)
                .map_err(|e| RunError::Config(e.to_string()))?;
            let full0 = rigid_initial(inertia, plan)?;
            route_trajectory(&sys, method, &full0, plan)
        }
        (kind, method) => {
            let sys = kind.constrained().map_err(RunError::Config)?;
            let full0 = generic_initial(kind, &sys, plan)?;
            route_trajectory(&sys, method, &full0, plan)
        }
    }
}

fn rigid_initial(inertia: &InertiaData, plan: &RunPlan) -> Result<FullPhaseState, RunError> {
    if let (Some(q), Some(p)) = (&plan.q0, &plan.p0) {
        return Ok(FullPhaseState::new(q.clone(), p.clone()));
    }
    let omega0 = plan.omega0.unwrap_or([1.0, 1.0, 1.0]);
    // Universal initial conditions: R = 1, p = Ṙ g with Ṙ = −(ε·Ω).
    let w = Mat::from_fn(3, 3, |m, j| {
        -(0..3)
            .map(|k| rigid_body::eps(m, j, k) * omega0[k])
            .sum::<f64>()
    });
    let p = w.matmul(&inertia.g);
    Ok(FullPhaseState::new(
        Mat::identity(3).data().to_vec(),
        p.data().to_vec(),
    ))
}

fn generic_initial(
    kind: &SystemKind,
    sys: &Arc<ConstrainedSystem>,
    plan: &RunPlan,
) -> Result<FullPhaseState, RunError> {
    let (q_raw, p_raw) = match (&plan.q0, &plan.p0) {
        (Some(q), Some(p)) => (q.clone(), p.clone()),
        _ => match kind {
            SystemKind::Sphere(s) => {
                let q = vec![0.0, 0.0, s.radius];
                let p = vec![1.0, 0.0, 0.0];
                (q, p)
            }
            _ => {
                return Err(RunError::Config(
                    "custom systems need [initial] q and p".into(),
                ))
            }
        },
    };
    if q_raw.len() != sys.dim() || p_raw.len() != sys.dim() {
        return Err(RunError::Config(format!(
            "initial data must have {} components",
            sys.dim()
        )));
    }
    let q = project_onto_surface(sys, &q_raw, &plan.tol)?;
    let p = project_tangent_momenta(sys, &q, &p_raw, &plan.tol)?;
    Ok(FullPhaseState::new(q, p))
}

fn route_trajectory(
    sys: &Arc<ConstrainedSystem>,
    method: Method,
    full0: &FullPhaseState,
    plan: &RunPlan,
) -> Result<Trajectory, RunError> {
    match method {
        Method::Rk => reduced_route(reduce_intermediate(sys, plan.tol), full0, plan),
        Method::Dirac => reduced_route(reduce_dirac(sys, plan.tol), full0, plan),
        Method::Alternative => reduced_route(reduce_alternative(sys, plan.tol), full0, plan),
        Method::MultiplierOde => multiplier_trajectory(sys, full0, plan),
        Method::LieSeries => lie_reduced_trajectory(sys, full0, plan),
    }
}

fn reduced_route(
    rs: ReducedSystem,
    full0: &FullPhaseState,
    plan: &RunPlan,
) -> Result<Trajectory, RunError> {
    let z0 = rs.project(full0)?;
    Ok(reduced_flow(&rs, &z0, plan.t_end, plan.sample_dt, &plan.tol)?)
}

fn multiplier_trajectory(
    sys: &Arc<ConstrainedSystem>,
    full0: &FullPhaseState,
    plan: &RunPlan,
) -> Result<Trajectory, RunError> {
    let n = sys.dim();
    let tol = plan.tol;
    let v0 = sys.legendre_velocity(full0)?;
    let field = sys.multiplier_field(tol);
    let mut labels: Vec<String> = sys.labels().to_vec();
    labels.extend((1..=n).map(|i| format!("p{i}")));
    let mut traj = Trajectory::new(
        labels,
        vec![
            "constraint_residual".into(),
            "energy_drift".into(),
            "tangency_residual".into(),
        ],
    );
    let e0 = sys.energy(&full0.q, &v0);
    let mut z = full0.q.clone();
    z.extend(&v0);
    let push = |traj: &mut Trajectory, t: f64, z: &[f64]| -> Result<(), RunError> {
        let (q, qdot) = z.split_at(n);
        let g = sys.constraints().values(q);
        let jac = sys.constraints().jacobian(q, &tol)?;
        let gdot = jac.matvec(qdot);
        let p = sys.legendre_momentum(q, qdot);
        let mut state = q.to_vec();
        state.extend(p);
        traj.push(
            t,
            state,
            vec![
                vecops::norm_inf(&g),
                (sys.energy(q, qdot) - e0).abs(),
                vecops::norm_inf(&gdot),
            ],
        );
        Ok(())
    };
    let steps = (plan.t_end / plan.sample_dt).ceil() as usize;
    let mut t = 0.0;
    push(&mut traj, t, &z)?;
    for _ in 0..steps {
        let t_next = (t + plan.sample_dt).min(plan.t_end);
        z = rk_drive(&field, &z, t, t_next, &tol, &mut |_, _| {})?;
        t = t_next;
        push(&mut traj, t, &z)?;
    }
    Ok(traj)
}

fn lie_reduced_trajectory(
    sys: &Arc<ConstrainedSystem>,
    full0: &FullPhaseState,
    plan: &RunPlan,
) -> Result<Trajectory, RunError> {
    let (order, step) = series_params(plan)?;
    let n = sys.dim();
    let rs = reduce_intermediate(sys, plan.tol);
    let z0 = rs.project(full0)?;
    let field = rs.vector_field(&z0.chart);
    let steps = (plan.t_end / plan.sample_dt).ceil() as usize;
    let mut grid: Vec<f64> = (0..steps).map(|i| i as f64 * plan.sample_dt).collect();
    grid.push(plan.t_end);
    let raw = lie_solve(&field, &z0.packed(), plan.t_end, order, step, &grid)?;
    let mut labels: Vec<String> = sys.labels().to_vec();
    labels.extend((1..=n).map(|i| format!("p{i}")));
    let mut traj = Trajectory::new(
        labels,
        vec!["constraint_residual".into(), "energy_drift".into()],
    );
    let h0 = rs.reduced_hamiltonian(&z0)?;
    for s in &raw.samples {
        let state = holomech::reduction::ReducedPhaseState {
            q: s.state[..n].to_vec(),
            momenta: s.state[n..].to_vec(),
            chart: z0.chart.clone(),
        };
        let full = rs.reconstruct(&state)?;
        let g = sys.constraints().values(&state.q);
        let h = rs.reduced_hamiltonian(&state)?;
        traj.push(
            s.t,
            full.packed(),
            vec![vecops::norm_inf(&g), (h - h0).abs()],
        );
    }
    Ok(traj)
}
