//! Matrix-free application and Jacobi-preconditioned CG solves of
//! `T^{-1} - div*(A grad)` on the torus or on a Dirichlet ball.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{field::dot, ScalarField, TorusLattice};
use crate::random_fields::CoefficientField;

/// Default relative residual for solves.
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Domain {
    Periodic,
    /// Unknowns pinned to zero outside `{|x| < radius}` around the origin.
    DirichletBall(f64),
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub tolerance: f64,
    pub seconds: f64,
}

/// `u -> tinv * u - div*(A grad u)` for a fixed coefficient field.
#[derive(Clone, Debug)]
pub struct EllipticOperator<'a> {
    coefficients: &'a CoefficientField,
    tinv: f64,
    domain: Domain,
    interior: Option<Vec<bool>>,
}

impl<'a> EllipticOperator<'a> {
    pub fn periodic(coefficients: &'a CoefficientField, tinv: f64) -> Result<Self> {
        Self::new(coefficients, tinv, Domain::Periodic)
    }

    pub fn new(coefficients: &'a CoefficientField, tinv: f64, domain: Domain) -> Result<Self> {
        if !(tinv >= 0.0 && tinv.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "zero-order weight must be finite and nonnegative, got {tinv}"
            )));
        }
        let lat = *coefficients.lattice();
        let interior = match domain {
            Domain::Periodic => None,
            Domain::DirichletBall(radius) => {
                if radius.is_nan() || radius <= 0.0 || 2.0 * radius >= lat.side() as f64 {
                    return Err(Error::BallTooLarge {
                        radius,
                        side: lat.side(),
                    });
                }
                let r2 = radius * radius;
                Some(
                    (0..lat.num_sites())
                        .map(|x| (lat.dist2(x, 0) as f64) < r2)
                        .collect(),
                )
            }
        };
        Ok(Self {
            coefficients,
            tinv,
            domain,
            interior,
        })
    }

    pub fn lattice(&self) -> &TorusLattice {
        self.coefficients.lattice()
    }

    pub fn coefficients(&self) -> &CoefficientField {
        self.coefficients
    }

    pub fn tinv(&self) -> f64 {
        self.tinv
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Sites where the Dirichlet problem is posed; `None` on the torus.
    pub fn interior(&self) -> Option<&[bool]> {
        self.interior.as_deref()
    }

    pub fn apply(&self, u: &ScalarField) -> ScalarField {
        let lat = *self.lattice();
        let mut out = vec![0.0; lat.num_sites()];
        let mut scratch = vec![0.0; lat.num_sites()];
        self.apply_into(u.values(), &mut out, &mut scratch);
        ScalarField::from_raw(lat, out)
    }

    /// `out = Op u`; `scratch` holds one site-sized temporary.
    pub(crate) fn apply_into(&self, u: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        let lat = self.lattice();
        for (o, &v) in out.iter_mut().zip(u) {
            *o = self.tinv * v;
        }
        for i in 0..lat.dim() {
            lat.forward_diff_axis(u, i, scratch);
            for (s, &a) in scratch.iter_mut().zip(self.coefficients.component(i)) {
                *s *= a;
            }
            lat.add_backward_diff_axis(scratch, i, -1.0, out);
        }
        if let Some(interior) = &self.interior {
            for (o, &inside) in out.iter_mut().zip(interior) {
                if !inside {
                    *o = 0.0;
                }
            }
        }
    }

    /// Diagonal of the operator; zero outside a Dirichlet ball.
    pub fn diagonal(&self) -> Vec<f64> {
        let lat = self.lattice();
        let mut diag = vec![self.tinv; lat.num_sites()];
        for i in 0..lat.dim() {
            let a = self.coefficients.component(i);
            for x in 0..lat.num_sites() {
                diag[x] += a[x] + a[lat.backward(x, i)];
            }
        }
        if let Some(interior) = &self.interior {
            for (d, &inside) in diag.iter_mut().zip(interior) {
                if !inside {
                    *d = 0.0;
                }
            }
        }
        diag
    }

    /// Iteration cap, `50 N d`.
    pub fn max_iterations(&self) -> usize {
        50 * self.lattice().side() * self.lattice().dim()
    }
}

/// Solves `Op x = rhs` to relative residual `tol` by Jacobi-preconditioned CG.
///
/// With `tinv = 0` on the torus the right-hand side must have zero mass and
/// the returned solution has zero mean. On a Dirichlet ball the right-hand
/// side is ignored outside the ball and the solution vanishes there.
pub fn solve(
    op: &EllipticOperator<'_>,
    rhs: &ScalarField,
    tol: f64,
) -> Result<(ScalarField, SolveReport)> {
    let start = Instant::now();
    let lat = *op.lattice();
    if rhs.lattice() != &lat {
        return Err(Error::LatticeMismatch);
    }
    let n = lat.num_sites();
    let singular = op.tinv == 0.0 && op.interior.is_none();

    let mut b = rhs.values().to_vec();
    if let Some(interior) = &op.interior {
        for (v, &inside) in b.iter_mut().zip(interior) {
            if !inside {
                *v = 0.0;
            }
        }
    }
    if singular {
        let mass: f64 = b.iter().sum();
        let scale: f64 = b.iter().map(|v| v.abs()).sum();
        if mass.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::IncompatibleRhs { mass });
        }
    }

    let b_norm = dot(&b, &b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok((
            ScalarField::from_raw(lat, x),
            SolveReport {
                iterations: 0,
                relative_residual: 0.0,
                tolerance: tol,
                seconds: start.elapsed().as_secs_f64(),
            },
        ));
    }

    let inv_diag: Vec<f64> = op
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 0.0 })
        .collect();
    let mut r = b;
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut residual = 1.0;
    let cap = op.max_iterations();

    let mut iterations = 0;
    while iterations < cap {
        op.apply_into(&p, &mut ap, &mut scratch);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let step = rz / pap;
        let mut rr = 0.0;
        for k in 0..n {
            x[k] += step * p[k];
            r[k] -= step * ap[k];
            rr += r[k] * r[k];
        }
        iterations += 1;
        residual = rr.sqrt() / b_norm;
        if residual <= tol {
            break;
        }
        let mut rz_new = 0.0;
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
            rz_new += r[k] * z[k];
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    if residual > tol {
        return Err(Error::NoConvergence {
            iterations,
            residual,
        });
    }
    if singular {
        let mean = x.iter().sum::<f64>() / n as f64;
        x.iter_mut().for_each(|v| *v -= mean);
    }
    Ok((
        ScalarField::from_raw(lat, x),
        SolveReport {
            iterations,
            relative_residual: residual,
            tolerance: tol,
            seconds: start.elapsed().as_secs_f64(),
        },
    ))
}

/// `G_T(., y)`: solves `(T^{-1} - div* A grad) G = delta_y` on the torus.
pub fn green(coefficients: &CoefficientField, t: f64, y: usize) -> Result<ScalarField> {
    green_with_tol(coefficients, t, y, DEFAULT_TOL).map(|(g, _)| g)
}

pub fn green_with_tol(
    coefficients: &CoefficientField,
    t: f64,
    y: usize,
    tol: f64,
) -> Result<(ScalarField, SolveReport)> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "Green function needs 0 < T < inf, got {t}"
        )));
    }
    let op = EllipticOperator::periodic(coefficients, 1.0 / t)?;
    solve(&op, &ScalarField::delta(*coefficients.lattice(), y), tol)
}

/// Solves `(T^{-1} - div* A grad) u = rhs` in `{|x| < R}` with `u = 0` outside.
/// `t = f64::INFINITY` drops the zero-order term.
pub fn solve_dirichlet(
    coefficients: &CoefficientField,
    t: f64,
    radius: f64,
    rhs: &ScalarField,
    tol: f64,
) -> Result<(ScalarField, SolveReport)> {
    if t.is_nan() || t <= 0.0 {
        return Err(Error::InvalidArgument(format!("T must be positive, got {t}")));
    }
    let op = EllipticOperator::new(coefficients, 1.0 / t, Domain::DirichletBall(radius))?;
    solve(&op, rhs, tol)
}

/// One row of the solver run log.
pub fn log_row(operation: &str, lattice: &TorusLattice, t: f64, report: &SolveReport) -> String {
    format!(
        "{operation},{},{},{t},{},{:e},{:.6}",
        lattice.dim(),
        lattice.side(),
        report.iterations,
        report.relative_residual,
        report.seconds
    )
}

pub const LOG_HEADER: &str = "operation,d,N,T,iterations,residual,seconds";
