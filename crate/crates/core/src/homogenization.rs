//! Regularized correctors, their energy density and the masked energy
//! estimator `xi . A_{L,T} xi` of the homogenized coefficient.

use crate::error::{Error, Result};
use crate::lattice::{divergence_star, gradient, AveragingMask, ScalarField, VectorField};
use crate::random_fields::CoefficientField;
use crate::solver::{solve, EllipticOperator, SolveReport};

/// Periodic solution of `T^{-1} phi - div* A (grad phi + xi) = 0`.
#[derive(Clone, Debug)]
pub struct CorrectorSolution<'a> {
    pub coefficients: &'a CoefficientField,
    pub phi: ScalarField,
    pub grad: VectorField,
    pub t: f64,
    pub xi: Vec<f64>,
    pub report: SolveReport,
}

/// `eps(x) = T^{-1} phi(x)^2 + (grad phi(x) + xi) . A(x) (grad phi(x) + xi)`.
#[derive(Clone, Debug)]
pub struct EnergyDensityField {
    pub values: ScalarField,
}

fn tinv_of(t: f64) -> f64 {
    if t.is_infinite() {
        0.0
    } else {
        1.0 / t
    }
}

/// `div*(A xi)`, the forcing of the corrector equation.
pub fn corrector_rhs(coefficients: &CoefficientField, xi: &[f64]) -> ScalarField {
    let lat = *coefficients.lattice();
    let n = lat.num_sites();
    let mut flux = VectorField::zeros(lat);
    for (i, &xi_i) in xi.iter().enumerate() {
        for (f, &a) in flux.values_mut()[i * n..(i + 1) * n]
            .iter_mut()
            .zip(coefficients.component(i))
        {
            *f = a * xi_i;
        }
    }
    divergence_star(&flux)
}

fn check_direction(d: usize, xi: &[f64]) -> Result<()> {
    if xi.len() != d {
        return Err(Error::InvalidArgument(format!(
            "direction has {} components on a {d}-dimensional lattice",
            xi.len()
        )));
    }
    let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "direction must be a unit vector, |xi| = {norm}"
        )));
    }
    Ok(())
}

/// Solves the regularized corrector equation on the torus. `t = inf` drops
/// the zero-order term and returns the zero-mean periodic corrector.
pub fn corrector<'a>(
    coefficients: &'a CoefficientField,
    t: f64,
    xi: &[f64],
    tol: f64,
) -> Result<CorrectorSolution<'a>> {
    if t.is_nan() || t <= 0.0 {
        return Err(Error::InvalidArgument(format!("T must be positive, got {t}")));
    }
    check_direction(coefficients.lattice().dim(), xi)?;
    let op = EllipticOperator::periodic(coefficients, tinv_of(t))?;
    let rhs = corrector_rhs(coefficients, xi);
    let (phi, report) = solve(&op, &rhs, tol)?;
    let grad = gradient(&phi);
    Ok(CorrectorSolution {
        coefficients,
        phi,
        grad,
        t,
        xi: xi.to_vec(),
        report,
    })
}

impl CorrectorSolution<'_> {
    pub fn tinv(&self) -> f64 {
        tinv_of(self.t)
    }

    /// `||T^{-1} phi - div* A (grad phi + xi)|| / ||div*(A xi)||`, recomputed.
    pub fn relative_residual(&self) -> f64 {
        let rhs = corrector_rhs(self.coefficients, &self.xi);
        let norm = rhs.norm();
        if norm == 0.0 {
            return self.phi.norm();
        }
        let op = EllipticOperator::periodic(self.coefficients, self.tinv())
            .expect("validated at construction");
        let applied = op.apply(&self.phi);
        applied
            .values()
            .iter()
            .zip(rhs.values())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
            / norm
    }

    /// `T^{-1} avg(phi^2) + avg(|grad phi|^2)`.
    pub fn energy_bound_lhs(&self) -> f64 {
        let n = self.phi.values().len() as f64;
        (self.tinv() * self.phi.dot(&self.phi) + self.grad.dot(&self.grad)) / n
    }

    /// Spatial mean of `phi`, monitored as a diagnostic only.
    pub fn mean_phi(&self) -> f64 {
        self.phi.mean()
    }

    /// Hard checks run on every Monte Carlo sample: equation residual,
    /// zero-mean gradient, and the a priori bound with ceiling `beta^2/alpha^2`.
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |what: String| {
            Err(Error::InvariantViolation {
                what,
                lineage: self.coefficients.origin(),
            })
        };
        let res = self.relative_residual();
        if res > 10.0 * self.report.tolerance.max(1e-13) {
            return fail(format!("corrector residual {res:e}"));
        }
        let n = self.phi.values().len() as f64;
        let scale = (self.grad.dot(&self.grad) / n).sqrt().max(1.0);
        for i in 0..self.xi.len() {
            let mean = self.grad.component(i).iter().sum::<f64>() / n;
            if mean.abs() > 1e-10 * scale {
                return fail(format!("gradient component {i} has mean {mean:e}"));
            }
        }
        let (alpha, beta) = (self.coefficients.alpha(), self.coefficients.beta());
        let lhs = self.energy_bound_lhs();
        if lhs > (beta * beta) / (alpha * alpha) * (1.0 + 1e-9) {
            return fail(format!("a priori energy {lhs} exceeds beta^2/alpha^2"));
        }
        Ok(())
    }
}

pub fn energy_density(sol: &CorrectorSolution<'_>) -> EnergyDensityField {
    let lat = *sol.phi.lattice();
    let tinv = sol.tinv();
    let mut eps: Vec<f64> = sol.phi.values().iter().map(|p| tinv * p * p).collect();
    for (i, &xi_i) in sol.xi.iter().enumerate() {
        let a = sol.coefficients.component(i);
        for ((e, &g), &ai) in eps.iter_mut().zip(sol.grad.component(i)).zip(a) {
            let s = g + xi_i;
            *e += ai * s * s;
        }
    }
    EnergyDensityField {
        values: ScalarField::from_raw(lat, eps),
    }
}

impl EnergyDensityField {
    /// Nonnegativity and `eps >= alpha |grad phi + xi|^2` at every site.
    pub fn check_lower_bound(&self, sol: &CorrectorSolution<'_>) -> Result<()> {
        let alpha = sol.coefficients.alpha();
        for x in 0..self.values.values().len() {
            let shifted: f64 = (0..sol.xi.len())
                .map(|i| (sol.grad.get(x, i) + sol.xi[i]).powi(2))
                .sum();
            let e = self.values.get(x);
            if e < 0.0 || e < alpha * shifted * (1.0 - 1e-12) {
                return Err(Error::InvariantViolation {
                    what: format!("energy density {e} below alpha |grad phi + xi|^2 at site {x}"),
                    lineage: sol.coefficients.origin(),
                });
            }
        }
        Ok(())
    }
}

/// `xi . A_{L,T} xi = sum_x eps(x) eta_L(x)`.
pub fn estimate_a_lt(sol: &CorrectorSolution<'_>, mask: &AveragingMask) -> Result<f64> {
    if mask.lattice() != sol.phi.lattice() {
        return Err(Error::LatticeMismatch);
    }
    Ok(mask.average(&energy_density(sol).values))
}

/// `sum_x phi_T(x)^2 eta_L(x)`, the zero-order contribution tracked alongside
/// the estimator.
pub fn masked_phi_square(sol: &CorrectorSolution<'_>, mask: &AveragingMask) -> f64 {
    sol.phi
        .values()
        .iter()
        .zip(mask.weights().values())
        .map(|(p, w)| p * p * w)
        .sum()
}

/// Exact one-dimensional corrector gradient at `T = inf`, `xi = 1`:
/// `grad phi = 1 / (a <a^{-1}>) - 1` with the spatial harmonic average.
pub fn corrector_1d_exact(coefficients: &CoefficientField) -> Result<VectorField> {
    let lat = *coefficients.lattice();
    if lat.dim() != 1 {
        return Err(Error::WrongDimension {
            expected: 1,
            actual: lat.dim(),
        });
    }
    let a = coefficients.component(0);
    let mean_inv = a.iter().map(|v| 1.0 / v).sum::<f64>() / a.len() as f64;
    let values = a.iter().map(|v| 1.0 / (v * mean_inv) - 1.0).collect();
    Ok(VectorField::from_raw(lat, values))
}

/// Spatial average of `(grad phi_{2T} - grad phi_T) . A (grad phi_{2T} - grad phi_T)`.
///
/// The corrector at `T = inf` is not the object being approximated here; the
/// Richardson difference between `T` and `2T` is a computable surrogate for
/// the systematic error of the regularization.
pub fn systematic_error_probe(
    coefficients: &CoefficientField,
    xi: &[f64],
    t: f64,
    tol: f64,
) -> Result<f64> {
    let coarse = corrector(coefficients, t, xi, tol)?;
    let fine = corrector(coefficients, 2.0 * t, xi, tol)?;
    let n = coefficients.lattice().num_sites();
    let mut total = 0.0;
    for i in 0..xi.len() {
        let a = coefficients.component(i);
        for ((&g2, &g1), &ai) in fine.grad.component(i).iter().zip(coarse.grad.component(i)).zip(a) {
            total += ai * (g2 - g1).powi(2);
        }
    }
    Ok(total / n as f64)
}
