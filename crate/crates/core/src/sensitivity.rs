//! Derivatives of correctors and Green functions with respect to single edge
//! conductivities, their finite-difference oracles, the enumeration check of
//! the variance (spectral-gap) inequality, and ensemble moment statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiments::stats::McEstimate;
use crate::homogenization::{corrector, estimate_a_lt, CorrectorSolution};
use crate::lattice::{AveragingMask, ScalarField, TorusLattice, VectorField};
use crate::random_fields::{sample, CoefficientField, CoefficientLaw, SeedLineage};
use crate::solver::green_with_tol;

/// Tolerance used by every solve inside a finite-difference oracle.
pub const FD_SOLVE_TOL: f64 = 1e-12;

/// The edge `[site, site + e_dir]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct EdgeRef {
    pub site: usize,
    pub dir: usize,
}

impl EdgeRef {
    pub fn new(lattice: &TorusLattice, site: usize, dir: usize) -> Result<Self> {
        if site >= lattice.num_sites() || dir >= lattice.dim() {
            return Err(Error::InvalidArgument(format!(
                "edge ({site}, {dir}) outside the lattice"
            )));
        }
        Ok(Self { site, dir })
    }

    /// Linear edge-slot index `dir * N^d + site`.
    pub fn slot(&self, lattice: &TorusLattice) -> usize {
        self.dir * lattice.num_sites() + self.site
    }

    pub fn from_slot(lattice: &TorusLattice, slot: usize) -> Self {
        let n = lattice.num_sites();
        Self {
            site: slot % n,
            dir: slot / n,
        }
    }

    fn head(&self, lattice: &TorusLattice) -> usize {
        lattice.forward(self.site, self.dir)
    }
}

/// `u(z + e_i) - u(z)` across the edge.
fn edge_difference(u: &ScalarField, e: EdgeRef) -> f64 {
    u.get(e.head(u.lattice())) - u.get(e.site)
}

/// `d phi_T(x) / d a(e) = -(grad_i phi_T(z) + xi_i) grad_{z_i} G_T(z, x)`,
/// with `green_x = G_T(., x)` (one solve with the source at `x`, using the
/// symmetry of the Green function).
pub fn dphi_da(sol: &CorrectorSolution<'_>, green_x: &ScalarField, e: EdgeRef) -> f64 {
    let flux = sol.grad.get(e.site, e.dir) + sol.xi[e.dir];
    -flux * edge_difference(green_x, e)
}

/// `d G_T(x, y) / d a(e) = -grad_{z_i} G_T(x, z) grad_{z_i} G_T(z, y)`.
pub fn dgreen_da(green_x: &ScalarField, green_y: &ScalarField, e: EdgeRef) -> f64 {
    -edge_difference(green_x, e) * edge_difference(green_y, e)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FdScheme {
    /// `(f(a+h) - f(a-h)) / 2h`.
    Central,
    /// `(-3 f(a) + 4 f(a+h) - f(a+2h)) / 2h`, second order, stays above `a`.
    Forward,
    /// Mirror image of `Forward`, stays below `a`.
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StepPolicy {
    /// Always central. The perturbed value may leave `[alpha, beta]`; the
    /// operator stays elliptic as long as `a(e) - h > 0`.
    Central,
    /// Central when `a(e) +- h` stays in `[alpha, beta]`, otherwise the
    /// one-sided second-order stencil pointing into the support.
    WithinSupport,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FdValue {
    pub value: f64,
    pub step: f64,
    pub scheme: FdScheme,
}

fn choose_scheme(
    coefficients: &CoefficientField,
    e: EdgeRef,
    h: f64,
    policy: StepPolicy,
) -> Result<FdScheme> {
    if h < 1e-8 {
        return Err(Error::StepUnderflow { step: h });
    }
    let a = coefficients.get(e.site, e.dir);
    let scheme = match policy {
        StepPolicy::Central => FdScheme::Central,
        StepPolicy::WithinSupport => {
            let (lo, hi) = (coefficients.alpha(), coefficients.beta());
            if a - h >= lo && a + h <= hi {
                FdScheme::Central
            } else if a + 2.0 * h <= hi {
                FdScheme::Forward
            } else if a - 2.0 * h >= lo {
                FdScheme::Backward
            } else {
                return Err(Error::InvalidArgument(format!(
                    "support [{lo}, {hi}] too narrow for step {h}"
                )));
            }
        }
    };
    if a - 2.0 * h <= 0.0 && scheme != FdScheme::Forward {
        return Err(Error::InvalidArgument(format!(
            "step {h} would make the conductivity nonpositive"
        )));
    }
    Ok(scheme)
}

fn finite_difference(
    coefficients: &CoefficientField,
    e: EdgeRef,
    h: f64,
    scheme: FdScheme,
    f: impl Fn(&CoefficientField) -> Result<f64>,
) -> Result<f64> {
    let a = coefficients.get(e.site, e.dir);
    let at = |v: f64| f(&coefficients.with_edge(e.site, e.dir, v));
    Ok(match scheme {
        FdScheme::Central => (at(a + h)? - at(a - h)?) / (2.0 * h),
        FdScheme::Forward => (-3.0 * f(coefficients)? + 4.0 * at(a + h)? - at(a + 2.0 * h)?) / (2.0 * h),
        FdScheme::Backward => (3.0 * f(coefficients)? - 4.0 * at(a - h)? + at(a - 2.0 * h)?) / (2.0 * h),
    })
}

/// Finite-difference derivative of `phi_T(x)` in `a(e)`.
pub fn fd_dphi_da(
    coefficients: &CoefficientField,
    t: f64,
    xi: &[f64],
    e: EdgeRef,
    x: usize,
    h: f64,
    policy: StepPolicy,
) -> Result<FdValue> {
    let scheme = choose_scheme(coefficients, e, h, policy)?;
    let value = finite_difference(coefficients, e, h, scheme, |a| {
        Ok(corrector(a, t, xi, FD_SOLVE_TOL)?.phi.get(x))
    })?;
    Ok(FdValue {
        value,
        step: h,
        scheme,
    })
}

/// Finite-difference derivative of `G_T(x, y)` in `a(e)`.
pub fn fd_dgreen_da(
    coefficients: &CoefficientField,
    t: f64,
    x: usize,
    y: usize,
    e: EdgeRef,
    h: f64,
    policy: StepPolicy,
) -> Result<FdValue> {
    let scheme = choose_scheme(coefficients, e, h, policy)?;
    let value = finite_difference(coefficients, e, h, scheme, |a| {
        Ok(green_with_tol(a, t, y, FD_SOLVE_TOL)?.0.get(x))
    })?;
    Ok(FdValue {
        value,
        step: h,
        scheme,
    })
}

/// One analytic-versus-finite-difference comparison.
#[derive(Clone, Debug, Serialize)]
pub struct SusceptibilityReport {
    pub quantity: &'static str,
    pub edge: EdgeRef,
    pub x: usize,
    pub y: Option<usize>,
    pub analytic: f64,
    pub finite_difference: f64,
    pub step: f64,
    pub scheme: FdScheme,
    pub relative_error: f64,
}

impl SusceptibilityReport {
    pub const CSV_HEADER: &'static str =
        "quantity,edge_site,edge_dir,x,y,analytic,finite_difference,step,scheme,relative_error";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:e},{:e},{:e},{:?},{:e}",
            self.quantity,
            self.edge.site,
            self.edge.dir,
            self.x,
            self.y.map(|v| v.to_string()).unwrap_or_default(),
            self.analytic,
            self.finite_difference,
            self.step,
            self.scheme,
            self.relative_error
        )
    }
}

fn relative_error(analytic: f64, fd: f64) -> f64 {
    let scale = analytic.abs().max(fd.abs());
    if scale == 0.0 {
        0.0
    } else {
        (analytic - fd).abs() / scale
    }
}

/// Parameters of a randomized susceptibility battery.
#[derive(Clone, Debug)]
pub struct BatteryConfig {
    pub t: f64,
    pub cases: usize,
    /// Points are drawn within this sup-distance of the edge's tail.
    pub radius: i64,
    pub policy: StepPolicy,
    pub seed: u64,
}

fn random_case(lattice: &TorusLattice, radius: i64, rng: &mut ChaCha8Rng) -> (EdgeRef, usize) {
    let d = lattice.dim();
    let site = rng.random_range(0..lattice.num_sites());
    let dir = rng.random_range(0..d);
    let c = lattice.coords(site);
    let off: Vec<i64> = (0..d)
        .map(|k| c[k] as i64 + rng.random_range(-radius..=radius))
        .collect();
    (EdgeRef { site, dir }, lattice.index(&off))
}

/// Compares `dphi_da` with `fd_dphi_da` on random `(edge, point)` pairs, with
/// `xi = e_1` and `h = 1e-4 (beta - alpha)`.
pub fn phi_battery(
    coefficients: &CoefficientField,
    cfg: &BatteryConfig,
) -> Result<Vec<SusceptibilityReport>> {
    let lat = *coefficients.lattice();
    let mut xi = vec![0.0; lat.dim()];
    xi[0] = 1.0;
    let h = fd_step(coefficients);
    let sol = corrector(coefficients, cfg.t, &xi, FD_SOLVE_TOL)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cases: Vec<(EdgeRef, usize)> = (0..cfg.cases)
        .map(|_| random_case(&lat, cfg.radius, &mut rng))
        .collect();
    cases
        .into_par_iter()
        .map(|(e, x)| {
            let (gx, _) = green_with_tol(coefficients, cfg.t, x, FD_SOLVE_TOL)?;
            let analytic = dphi_da(&sol, &gx, e);
            let fd = fd_dphi_da(coefficients, cfg.t, &xi, e, x, h, cfg.policy)?;
            Ok(SusceptibilityReport {
                quantity: "dphi_da",
                edge: e,
                x,
                y: None,
                analytic,
                finite_difference: fd.value,
                step: fd.step,
                scheme: fd.scheme,
                relative_error: relative_error(analytic, fd.value),
            })
        })
        .collect()
}

/// Compares `dgreen_da` with `fd_dgreen_da` on random `(edge, x, y)` triples.
pub fn green_battery(
    coefficients: &CoefficientField,
    cfg: &BatteryConfig,
) -> Result<Vec<SusceptibilityReport>> {
    let lat = *coefficients.lattice();
    let h = fd_step(coefficients);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let cases: Vec<(EdgeRef, usize, usize)> = (0..cfg.cases)
        .map(|_| {
            let (e, x) = random_case(&lat, cfg.radius, &mut rng);
            let (_, y) = random_case(&lat, cfg.radius, &mut rng);
            // y near the same edge
            let cy = lat.coords(y);
            let ce = lat.coords(e.site);
            let cx = lat.coords(x);
            let shift: Vec<i64> = (0..lat.dim())
                .map(|k| ce[k] as i64 + (cy[k] as i64 - cx[k] as i64).rem_euclid(2 * cfg.radius + 1) - cfg.radius)
                .collect();
            (e, x, lat.index(&shift))
        })
        .collect();
    cases
        .into_par_iter()
        .map(|(e, x, y)| {
            let (gx, _) = green_with_tol(coefficients, cfg.t, x, FD_SOLVE_TOL)?;
            let (gy, _) = green_with_tol(coefficients, cfg.t, y, FD_SOLVE_TOL)?;
            let analytic = dgreen_da(&gx, &gy, e);
            let fd = fd_dgreen_da(coefficients, cfg.t, x, y, e, h, cfg.policy)?;
            Ok(SusceptibilityReport {
                quantity: "dgreen_da",
                edge: e,
                x,
                y: Some(y),
                analytic,
                finite_difference: fd.value,
                step: fd.step,
                scheme: fd.scheme,
                relative_error: relative_error(analytic, fd.value),
            })
        })
        .collect()
}

/// `h = 1e-4 (beta - alpha)`, or `1e-4 alpha` for a constant field.
pub fn fd_step(coefficients: &CoefficientField) -> f64 {
    let spread = coefficients.beta() - coefficients.alpha();
    1e-4 * if spread > 0.0 { spread } else { coefficients.alpha() }
}

/// `max_grid |grad_{z_i} G_T(z, x)| / |grad_{z_i} G_T(z, x)|` with `a(e)`
/// swept over `points` values in `[alpha, beta]`.
pub fn green_gradient_sup_ratio(
    coefficients: &CoefficientField,
    t: f64,
    x: usize,
    e: EdgeRef,
    points: usize,
    tol: f64,
) -> Result<f64> {
    let (lo, hi) = (coefficients.alpha(), coefficients.beta());
    let current = edge_difference(&green_with_tol(coefficients, t, x, tol)?.0, e).abs();
    let mut sup: f64 = 0.0;
    for k in 0..points {
        let v = lo + (hi - lo) * k as f64 / (points - 1).max(1) as f64;
        let g = green_with_tol(&coefficients.with_edge(e.site, e.dir, v), t, x, tol)?.0;
        sup = sup.max(edge_difference(&g, e).abs());
    }
    Ok(sup / current)
}

/// Functionals of the coefficient field whose variance is checked by enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Statistic {
    /// The value of one edge slot.
    SingleEdge(usize),
    /// Sum over all edge slots.
    EdgeSum,
    /// `phi_T(0)` for `xi = e_1`.
    PhiAtOrigin { t: f64 },
    /// `xi . A_{L,T} xi` for `xi = e_1` with the uniform mask.
    UniformMaskEnergy { t: f64 },
}

impl Statistic {
    pub fn name(&self) -> String {
        match self {
            Self::SingleEdge(k) => format!("edge[{k}]"),
            Self::EdgeSum => "edge-sum".into(),
            Self::PhiAtOrigin { t } => format!("phi_T(0),T={t}"),
            Self::UniformMaskEnergy { t } => format!("A_LT(uniform),T={t}"),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Self::SingleEdge(_) | Self::EdgeSum)
    }

    pub fn evaluate(&self, a: &CoefficientField) -> Result<f64> {
        let lat = *a.lattice();
        let mut xi = vec![0.0; lat.dim()];
        xi[0] = 1.0;
        match *self {
            Self::SingleEdge(k) => Ok(a.edges().values()[k]),
            Self::EdgeSum => Ok(a.edges().values().iter().sum()),
            Self::PhiAtOrigin { t } => Ok(corrector(a, t, &xi, 1e-13)?.phi.get(0)),
            Self::UniformMaskEnergy { t } => {
                let sol = corrector(a, t, &xi, 1e-13)?;
                estimate_a_lt(&sol, &AveragingMask::uniform(lat))
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralGapReport {
    pub statistic: String,
    pub dim: usize,
    pub side: usize,
    pub configurations: usize,
    /// Exact `var[X]` by enumeration.
    pub lhs: f64,
    /// `<sum_i sup_{a_i} |dX/da_i|^2> var[a]` with the sup on a 9-point grid.
    pub rhs: f64,
    /// Same with a 17-point grid, for the refinement delta.
    pub rhs_refined: f64,
    pub holds: bool,
}

/// Largest enumeration accepted, in configurations.
pub const MAX_CONFIGURATIONS: f64 = (1u64 << 20) as f64;

/// Enumerates every coefficient configuration of a tiny torus under an
/// atomic law and compares both sides of the variance inequality.
pub fn spectral_gap_verify(
    lattice: TorusLattice,
    law: &CoefficientLaw,
    statistic: Statistic,
) -> Result<SpectralGapReport> {
    let (atoms, probs) = law
        .atoms()
        .ok_or_else(|| Error::InvalidLaw("enumeration needs an atomic law".into()))?;
    let edges = lattice.num_edges();
    let m = atoms.len();
    let count = (m as f64).powi(edges as i32);
    if edges > 20 || count > MAX_CONFIGURATIONS {
        return Err(Error::EnumerationTooLarge {
            configurations: count,
        });
    }
    let count = count as usize;
    let (alpha, beta) = (law.alpha(), law.beta());
    let variance = law.moments().variance;

    let configuration = |code: usize| -> (Vec<f64>, f64) {
        let mut rest = code;
        let mut values = Vec::with_capacity(edges);
        let mut p = 1.0;
        for _ in 0..edges {
            values.push(atoms[rest % m]);
            p *= probs[rest % m];
            rest /= m;
        }
        (values, p)
    };
    let field = |values: Vec<f64>| {
        CoefficientField::with_bounds(VectorField::new(lattice, values)?, alpha, beta)
    };
    let sup_slope_sq = |values: &[f64], grid: usize| -> Result<f64> {
        let mut total = 0.0;
        for i in 0..edges {
            let mut prev: Option<f64> = None;
            let mut best: f64 = 0.0;
            let dx = (beta - alpha) / (grid - 1) as f64;
            for k in 0..grid {
                let mut v = values.to_vec();
                v[i] = alpha + dx * k as f64;
                let x = statistic.evaluate(&field(v)?)?;
                if let Some(p) = prev {
                    best = best.max(((x - p) / dx).abs());
                }
                prev = Some(x);
            }
            total += best * best;
        }
        Ok(total)
    };

    let rows: Vec<(f64, f64, f64, f64)> = (0..count)
        .into_par_iter()
        .map(|code| {
            let (values, p) = configuration(code);
            let x = statistic.evaluate(&field(values.clone())?)?;
            let (coarse, fine) = if beta > alpha {
                (sup_slope_sq(&values, 9)?, sup_slope_sq(&values, 17)?)
            } else {
                (0.0, 0.0)
            };
            Ok((p, x, coarse, fine))
        })
        .collect::<Result<_>>()?;

    let mean: f64 = rows.iter().map(|r| r.0 * r.1).sum();
    let lhs: f64 = rows.iter().map(|r| r.0 * (r.1 - mean).powi(2)).sum();
    let rhs = variance * rows.iter().map(|r| r.0 * r.2).sum::<f64>();
    let rhs_refined = variance * rows.iter().map(|r| r.0 * r.3).sum::<f64>();
    Ok(SpectralGapReport {
        statistic: statistic.name(),
        dim: lattice.dim(),
        side: lattice.side(),
        configurations: count,
        lhs,
        rhs,
        rhs_refined,
        holds: lhs <= rhs * (1.0 + 1e-6),
    })
}

/// Ratio `<phi^n (|grad phi|^2 + |grad* phi|^2)> / <phi^n>` with a bootstrap CI.
#[derive(Clone, Debug, Serialize)]
pub struct CaccioppoliEstimate {
    pub n: u32,
    pub ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: usize,
}

/// Per-sample spatial averages `(numerator, denominator)`.
pub fn caccioppoli_terms(sol: &CorrectorSolution<'_>, n: u32) -> (f64, f64) {
    let lat = sol.phi.lattice();
    let phi = sol.phi.values();
    let sites = phi.len();
    let mut num = 0.0;
    let mut den = 0.0;
    for x in 0..sites {
        let w = phi[x].powi(n as i32);
        let mut g2 = 0.0;
        for i in 0..lat.dim() {
            let fwd = sol.grad.get(x, i);
            let bwd = phi[x] - phi[lat.backward(x, i)];
            g2 += fwd * fwd + bwd * bwd;
        }
        num += w * g2;
        den += w;
    }
    (num / sites as f64, den / sites as f64)
}

fn ratio_of_sums(terms: &[(f64, f64)]) -> f64 {
    let num: f64 = terms.iter().map(|t| t.0).sum();
    let den: f64 = terms.iter().map(|t| t.1).sum();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Ensemble ratio from precomputed per-sample terms, bootstrap over samples.
pub fn caccioppoli_from_terms(terms: &[(f64, f64)], n: u32, seed: u64) -> CaccioppoliEstimate {
    let ratio = ratio_of_sums(terms);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reps = 1000;
    let mut boot: Vec<f64> = (0..reps)
        .map(|_| {
            let resampled: Vec<(f64, f64)> = (0..terms.len())
                .map(|_| terms[rng.random_range(0..terms.len())])
                .collect();
            ratio_of_sums(&resampled)
        })
        .collect();
    boot.sort_by(|a, b| a.total_cmp(b));
    CaccioppoliEstimate {
        n,
        ratio,
        ci_low: boot[(0.025 * reps as f64) as usize],
        ci_high: boot[(0.975 * reps as f64) as usize - 1],
        samples: terms.len(),
    }
}

pub fn caccioppoli_check(samples: &[CorrectorSolution<'_>], n: u32) -> Result<CaccioppoliEstimate> {
    if ![0, 2, 4].contains(&n) {
        return Err(Error::InvalidArgument(format!("moment order must be 0, 2 or 4, got {n}")));
    }
    let terms: Vec<(f64, f64)> = samples.iter().map(|s| caccioppoli_terms(s, n)).collect();
    Ok(caccioppoli_from_terms(&terms, n, 0xcacc))
}

/// One row of a moment-growth table.
#[derive(Clone, Debug, Serialize)]
pub struct MomentRow {
    pub t: f64,
    pub side: usize,
    pub estimate: McEstimate,
}

#[derive(Clone, Debug)]
pub struct MomentGrowthConfig {
    pub dim: usize,
    /// Torus side used for each `T`.
    pub sides: Vec<usize>,
    pub t_grid: Vec<f64>,
    pub q: u32,
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
}

/// `<|phi_T(0)|^q>` per `T`, estimated over samples and over torus sites.
pub fn moment_growth(law: &CoefficientLaw, cfg: &MomentGrowthConfig) -> Result<Vec<MomentRow>> {
    if ![2, 4].contains(&cfg.q) {
        return Err(Error::InvalidArgument(format!("q must be 2 or 4, got {}", cfg.q)));
    }
    if cfg.sides.len() != cfg.t_grid.len() {
        return Err(Error::InvalidArgument("one torus side per T is required".into()));
    }
    let mut xi = vec![0.0; cfg.dim];
    xi[0] = 1.0;
    cfg.t_grid
        .iter()
        .zip(&cfg.sides)
        .map(|(&t, &side)| {
            let lattice = TorusLattice::new(cfg.dim, side)?;
            let lineage = SeedLineage::new(cfg.seed, 0, format!("moments/T={t}"));
            let values: Vec<f64> = (0..cfg.samples)
                .into_par_iter()
                .map(|k| {
                    let a = sample(law, lattice, &lineage.with_index(k as u64))?;
                    let sol = corrector(&a, t, &xi, cfg.tol)?;
                    sol.check_invariants()?;
                    let n = sol.phi.values().len() as f64;
                    Ok(sol.phi.values().iter().map(|p| p.abs().powi(cfg.q as i32)).sum::<f64>() / n)
                })
                .collect::<Result<_>>()?;
            Ok(MomentRow {
                t,
                side,
                estimate: McEstimate::from_samples(&values).with_lineage(lineage),
            })
        })
        .collect()
}
