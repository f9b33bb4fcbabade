//! Vector fields z ↦ h(z) consumed by the Runge-Kutta oracle and the
//! Lie-series engine.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::mat::vecops;
use crate::numeric::Mat;

/// A smooth first-order right-hand side.
///
/// `flow_series` returns Taylor coefficients of the local solution through
/// the given point; the default computes them by nested central differences
/// along the field and is noise-limited around order 6. Fields with
/// polynomial right-hand sides override it with an exact recurrence.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, z: &[f64]) -> Result<Vec<f64>>;

    fn label(&self) -> &str {
        "field"
    }

    /// Coefficients c_0..c_order with z(t) = Σ c_n t^n locally.
    fn flow_series(&self, z: &[f64], order: usize) -> Result<Vec<Vec<f64>>> {
        nested_fd_flow_series(self, z, order)
    }
}

type FieldFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// Wrap a closure as a vector field.
pub struct FnField {
    dim: usize,
    f: FieldFn,
    label: String,
}

impl FnField {
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        f: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        FnField {
            dim,
            f: Arc::new(f),
            label: label.into(),
        }
    }
}

impl VectorField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        let v = (self.f)(z)?;
        if v.len() != self.dim {
            return Err(Error::Dimension(format!(
                "field '{}' returned {} components, expected {}",
                self.label,
                v.len(),
                self.dim
            )));
        }
        Ok(v)
    }

    fn label(&self) -> &str {
        &self.label
    }
}

/// Right-hand side h_i(z) = a_i + B_ij z_j + z^T C^i z, with the exact
/// Taylor recurrence for the local flow (Cauchy products of the series).
pub struct QuadraticField {
    constant: Vec<f64>,
    linear: Mat,
    quadratic: Vec<Mat>,
    label: String,
}

impl QuadraticField {
    pub fn new(constant: Vec<f64>, linear: Mat, quadratic: Vec<Mat>, label: impl Into<String>) -> Self {
        let dim = constant.len();
        assert_eq!(linear.rows(), dim);
        assert_eq!(linear.cols(), dim);
        assert_eq!(quadratic.len(), dim);
        for c in &quadratic {
            assert_eq!(c.rows(), dim);
            assert_eq!(c.cols(), dim);
        }
        QuadraticField {
            constant,
            linear,
            quadratic,
            label: label.into(),
        }
    }

    pub fn linear_only(b: Mat, label: impl Into<String>) -> Self {
        let dim = b.rows();
        QuadraticField::new(
            vec![0.0; dim],
            b,
            (0..dim).map(|_| Mat::zeros(dim, dim)).collect(),
            label,
        )
    }

    pub fn constant_only(a: Vec<f64>, label: impl Into<String>) -> Self {
        let dim = a.len();
        QuadraticField::new(
            a,
            Mat::zeros(dim, dim),
            (0..dim).map(|_| Mat::zeros(dim, dim)).collect(),
            label,
        )
    }

    fn quadratic_form(&self, i: usize, x: &[f64], y: &[f64]) -> f64 {
        let c = &self.quadratic[i];
        let mut s = 0.0;
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            s += xj * vecops::dot(c.row(j), y);
        }
        s
    }
}

impl VectorField for QuadraticField {
    fn dim(&self) -> usize {
        self.constant.len()
    }

    fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.linear.matvec(z);
        for i in 0..out.len() {
            out[i] += self.constant[i] + self.quadratic_form(i, z, z);
        }
        Ok(out)
    }

    fn label(&self) -> &str {
        &self.label
    }

    fn flow_series(&self, z: &[f64], order: usize) -> Result<Vec<Vec<f64>>> {
        let dim = self.dim();
        let mut coeffs: Vec<Vec<f64>> = Vec::with_capacity(order + 1);
        coeffs.push(z.to_vec());
        for n in 0..order {
            let mut rhs = self.linear.matvec(&coeffs[n]);
            if n == 0 {
                for (r, a) in rhs.iter_mut().zip(&self.constant) {
                    *r += a;
                }
            }
            for i in 0..dim {
                let mut conv = 0.0;
                for m in 0..=n {
                    conv += self.quadratic_form(i, &coeffs[m], &coeffs[n - m]);
                }
                rhs[i] += conv;
            }
            let next: Vec<f64> = rhs.iter().map(|v| v / (n as f64 + 1.0)).collect();
            coeffs.push(next);
        }
        Ok(coeffs)
    }
}

/// Iterated directional derivative (h·∂)^n z by central differences,
/// one level at a time, with the per-level step widened to trade
/// truncation against amplified roundoff.
fn lie_tower(field: &(impl VectorField + ?Sized), y: &[f64], n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(y.to_vec());
    }
    if n == 1 {
        return field.eval(y);
    }
    let h = field.eval(y)?;
    let hnorm = vecops::norm2(&h);
    if hnorm < 1e-300 {
        return Ok(vec![0.0; y.len()]);
    }
    let u = vecops::scaled(&h, 1.0 / hnorm);
    let scale = 1.0 + vecops::norm2(y);
    let delta = f64::EPSILON.powf(1.0 / (n as f64 + 2.0)) * scale;
    let fp = lie_tower(field, &vecops::axpy(delta, &u, y), n - 1)?;
    let fm = lie_tower(field, &vecops::axpy(-delta, &u, y), n - 1)?;
    Ok(fp
        .iter()
        .zip(&fm)
        .map(|(p, m)| (p - m) * hnorm / (2.0 * delta))
        .collect())
}

pub fn nested_fd_flow_series(
    field: &(impl VectorField + ?Sized),
    z: &[f64],
    order: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut coeffs = Vec::with_capacity(order + 1);
    let mut factorial = 1.0;
    for n in 0..=order {
        if n > 0 {
            factorial *= n as f64;
        }
        let t = lie_tower(field, z, n)?;
        coeffs.push(vecops::scaled(&t, 1.0 / factorial));
    }
    Ok(coeffs)
}

/// Evaluate a truncated series Σ c_n t^n by Horner's scheme.
pub fn eval_series(coeffs: &[Vec<f64>], t: f64) -> Vec<f64> {
    let dim = coeffs[0].len();
    let mut out = vec![0.0; dim];
    for c in coeffs.iter().rev() {
        for i in 0..dim {
            out[i] = out[i] * t + c[i];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_field_series_matches_exponential() {
        // zdot = z: coefficients z0/n!.
        let f = QuadraticField::linear_only(Mat::identity(1), "exp");
        let c = f.flow_series(&[2.0], 10).unwrap();
        let mut fact = 1.0;
        for (n, cn) in c.iter().enumerate() {
            if n > 0 {
                fact *= n as f64;
            }
            assert!((cn[0] - 2.0 / fact).abs() < 1e-14);
        }
    }

    #[test]
    fn nested_fd_series_low_order_exponential() {
        let f = FnField::new(1, "exp", |z| Ok(vec![z[0]]));
        let c = nested_fd_flow_series(&f, &[1.0], 4).unwrap();
        let expect = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0];
        for (cn, e) in c.iter().zip(expect) {
            assert!((cn[0] - e).abs() < 1e-4, "{} vs {}", cn[0], e);
        }
    }

    #[test]
    fn series_evaluation_horner() {
        let coeffs = vec![vec![1.0], vec![2.0], vec![3.0]];
        let v = eval_series(&coeffs, 0.5);
        assert!((v[0] - (1.0 + 1.0 + 0.75)).abs() < 1e-15);
    }
}
