//! Small-contrast theory: the constant-coefficient Green function, linearized
//! correctors, and the two exact variance identities they satisfy.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiments::stats::{jackknife, McEstimate};
use crate::fourier::{laplacian_symbol, solve_constant};
use crate::lattice::{divergence_star, gradient, AveragingMask, ScalarField, TorusLattice, VectorField};
use crate::random_fields::{sample, CoefficientField, CoefficientLaw, SeedLineage};

/// `G_T(x) = G_T(x, 0)` for `T^{-1} - Laplacian`. At `T = inf` the zero mode is
/// dropped, i.e. `-Laplacian G = delta_0 - N^{-d}` with zero mean.
#[derive(Clone, Debug)]
pub struct ConstGreen {
    pub t: f64,
    pub values: ScalarField,
}

fn tinv_of(t: f64) -> f64 {
    if t.is_infinite() {
        0.0
    } else {
        1.0 / t
    }
}

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("T must be positive, got {t}")))
    }
}

fn check_torus_rule(lattice: &TorusLattice, t: f64) -> Result<()> {
    if (lattice.side() as f64) < 8.0 * t.sqrt() {
        return Err(Error::TorusTooSmall {
            side: lattice.side(),
            t,
        });
    }
    Ok(())
}

pub fn const_green(lattice: TorusLattice, t: f64) -> Result<ConstGreen> {
    check_t(t)?;
    let delta = ScalarField::delta(lattice, 0);
    let values = solve_constant(&lattice, tinv_of(t), delta.values());
    Ok(ConstGreen {
        t,
        values: ScalarField::from_raw(lattice, values),
    })
}

impl ConstGreen {
    pub fn at(&self, x: usize) -> f64 {
        self.values.get(x)
    }
}

/// `sum_x G_T(x)^2` by direct summation over the torus.
pub fn sum_green_sq(lattice: TorusLattice, t: f64) -> Result<f64> {
    check_t(t)?;
    check_torus_rule(&lattice, t)?;
    let g = const_green(lattice, t)?;
    Ok(g.values.dot(&g.values))
}

/// Same sum with the constant Fourier mode removed: `T^2 N^{-d}` less than
/// [`sum_green_sq`]. This is the torus form of the sum entering the
/// corrector-difference identity, where zero-mean correctors carry no
/// constant mode.
pub fn sum_green_sq_nonzero_modes(lattice: TorusLattice, t: f64) -> Result<f64> {
    check_t(t)?;
    let tinv = tinv_of(t);
    let symbol = laplacian_symbol(&lattice);
    let n = lattice.num_sites() as f64;
    Ok(symbol
        .iter()
        .filter(|&&s| s > 0.0)
        .map(|s| (tinv + s).powi(-2))
        .sum::<f64>()
        / n)
}

#[derive(Clone, Debug)]
pub struct LinearizedCorrector {
    /// Solution with the zero-order term `T^{-1}`.
    pub phibar_t: ScalarField,
    /// Zero-mean solution without the zero-order term.
    pub phibar: ScalarField,
    pub direction: usize,
    pub t: f64,
}

/// `div*((a_i - <a>) e_i)`, the linearized forcing in direction `i`.
pub fn linearized_rhs(coefficients: &CoefficientField, i: usize, mean_a: f64) -> ScalarField {
    let lat = *coefficients.lattice();
    let n = lat.num_sites();
    let mut h = VectorField::zeros(lat);
    for (v, &a) in h.values_mut()[i * n..(i + 1) * n]
        .iter_mut()
        .zip(coefficients.component(i))
    {
        *v = a - mean_a;
    }
    divergence_star(&h)
}

/// Solves `T^{-1} u - Laplacian u = div*((A - <A>) e_i)` and the same
/// equation without the zero-order term, by Fourier diagonalization.
pub fn linearized_corrector(
    coefficients: &CoefficientField,
    t: f64,
    i: usize,
    mean_a: f64,
) -> Result<LinearizedCorrector> {
    check_t(t)?;
    let lat = *coefficients.lattice();
    if i >= lat.dim() {
        return Err(Error::InvalidArgument(format!(
            "direction {i} out of range for dimension {}",
            lat.dim()
        )));
    }
    let rhs = linearized_rhs(coefficients, i, mean_a);
    let phibar = solve_constant(&lat, 0.0, rhs.values());
    let phibar_t = if t.is_infinite() {
        phibar.clone()
    } else {
        solve_constant(&lat, 1.0 / t, rhs.values())
    };
    Ok(LinearizedCorrector {
        phibar_t: ScalarField::from_raw(lat, phibar_t),
        phibar: ScalarField::from_raw(lat, phibar),
        direction: i,
        t,
    })
}

/// Outcome of one Monte Carlo identity check.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// 95% half-width on `lhs`.
    pub ci_half_width: f64,
    pub ratio: f64,
    pub samples: usize,
}

impl IdentityCheck {
    /// `|lhs - rhs| <= k * CI` (exact agreement when both sides vanish).
    pub fn within(&self, k: f64) -> bool {
        (self.lhs - self.rhs).abs() <= k * self.ci_half_width
    }

    /// `|lhs / rhs - 1|` measured in units of the relative CI half-width.
    pub fn ratio_within(&self, k: f64) -> bool {
        if self.rhs == 0.0 {
            return self.lhs == 0.0;
        }
        (self.ratio - 1.0).abs() <= k * self.ci_half_width / self.rhs.abs()
    }
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs == 0.0 {
        if lhs == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        lhs / rhs
    }
}

/// Per-sample statistics `A_ij = sum_x (delta_ij (a_i - <a>) + 2 d_j phibar_i) eta`
/// for all `(i, j)`, row-major.
pub fn append_statistics(
    coefficients: &CoefficientField,
    mask: &AveragingMask,
    mean_a: f64,
) -> Result<Vec<f64>> {
    let lat = *coefficients.lattice();
    let d = lat.dim();
    let eta = mask.weights().values();
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        let lc = linearized_corrector(coefficients, f64::INFINITY, i, mean_a)?;
        let g = gradient(&lc.phibar);
        for j in 0..d {
            let mut s: f64 = g
                .component(j)
                .iter()
                .zip(eta)
                .map(|(gj, w)| 2.0 * gj * w)
                .sum();
            if i == j {
                s += coefficients
                    .component(i)
                    .iter()
                    .zip(eta)
                    .map(|(a, w)| (a - mean_a) * w)
                    .sum::<f64>();
            }
            out.push(s);
        }
    }
    Ok(out)
}

/// `sum_ij var[A_ij]` against `d var[a] sum eta^2`. The CI on the left side
/// comes from a jackknife over samples.
pub fn append_identity_1(
    law: &CoefficientLaw,
    lattice: TorusLattice,
    mask: &AveragingMask,
    samples: usize,
    seed: u64,
) -> Result<IdentityCheck> {
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    let moments = law.moments();
    let lineage = SeedLineage::new(seed, 0, "append-1");
    let stats: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let a = sample(law, lattice, &lineage.with_index(k as u64))?;
            append_statistics(&a, mask, moments.mean)
        })
        .collect::<Result<_>>()?;
    let m = lattice.dim() * lattice.dim();
    let sum_of_variances = |rows: &[&Vec<f64>]| -> f64 {
        (0..m)
            .map(|c| {
                let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
                McEstimate::from_samples(&col).variance
            })
            .sum()
    };
    let rows: Vec<&Vec<f64>> = stats.iter().collect();
    let (lhs, se) = jackknife(&rows, |sub| sum_of_variances(sub));
    let rhs = lattice.dim() as f64 * moments.variance * mask.sum_squares();
    Ok(IdentityCheck {
        name: "append-1".into(),
        lhs,
        rhs,
        ci_half_width: 1.96 * se,
        ratio: ratio(lhs, rhs),
        samples,
    })
}

/// Per-sample `sum_i avg_x |grad phibar_{T,i} - grad phibar_i|^2`.
pub fn corrector_difference_energy(
    coefficients: &CoefficientField,
    t: f64,
    mean_a: f64,
) -> Result<f64> {
    let lat = *coefficients.lattice();
    let n = lat.num_sites() as f64;
    let mut total = 0.0;
    for i in 0..lat.dim() {
        let lc = linearized_corrector(coefficients, t, i, mean_a)?;
        let diff: Vec<f64> = lc
            .phibar_t
            .values()
            .iter()
            .zip(lc.phibar.values())
            .map(|(a, b)| a - b)
            .collect();
        let g = gradient(&ScalarField::from_raw(lat, diff));
        total += g.dot(&g) / n;
    }
    Ok(total)
}

/// Result of the corrector-difference identity. `rhs` is
/// `var[a] T^{-2} sum G_T^2`; `rhs_torus` drops the constant mode, which
/// is what zero-mean correctors on a finite torus satisfy exactly.
#[derive(Clone, Debug, Serialize)]
pub struct DifferenceIdentity {
    #[serde(flatten)]
    pub check: IdentityCheck,
    pub rhs_torus: f64,
    pub mean: McEstimate,
}

pub fn append_identity_2(
    law: &CoefficientLaw,
    lattice: TorusLattice,
    t: f64,
    samples: usize,
    seed: u64,
) -> Result<DifferenceIdentity> {
    check_t(t)?;
    check_torus_rule(&lattice, t)?;
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    let moments = law.moments();
    let lineage = SeedLineage::new(seed, 0, "append-2");
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let a = sample(law, lattice, &lineage.with_index(k as u64))?;
            corrector_difference_energy(&a, t, moments.mean)
        })
        .collect::<Result<_>>()?;
    let est = McEstimate::from_samples(&values);
    let rhs = moments.variance * sum_green_sq(lattice, t)? / (t * t);
    let rhs_torus = moments.variance * sum_green_sq_nonzero_modes(lattice, t)? / (t * t);
    Ok(DifferenceIdentity {
        check: IdentityCheck {
            name: "append-2".into(),
            lhs: est.mean,
            rhs,
            ci_half_width: est.ci_half_width,
            ratio: ratio(est.mean, rhs),
            samples,
        },
        rhs_torus,
        mean: est,
    })
}

/// Expected `avg_x |grad phibar_{2T,i} - grad phibar_{T,i}|^2` for the
/// linearized corrector in direction `i`, summed exactly over Fourier modes.
pub fn richardson_difference_exact(lattice: TorusLattice, variance: f64, t: f64, i: usize) -> f64 {
    let symbol = laplacian_symbol(&lattice);
    let n = lattice.side() as f64;
    let (t1, t2) = (1.0 / t, 0.5 / t);
    let total: f64 = (0..lattice.num_sites())
        .map(|x| {
            let k = lattice.coords(x)[i] as f64;
            let s_i = 4.0 * (std::f64::consts::PI * k / n).sin().powi(2);
            let s = symbol[x];
            if s == 0.0 {
                return 0.0;
            }
            let m = 1.0 / (t2 + s) - 1.0 / (t1 + s);
            s_i * s * m * m
        })
        .sum();
    variance * total / lattice.num_sites() as f64
}
