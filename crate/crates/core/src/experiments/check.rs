//! The invariant and oracle battery behind `homoglat check`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::homogenization::{corrector, corrector_1d_exact};
use crate::lattice::{divergence_star, gradient, AveragingMask, ScalarField, TorusLattice, VectorField};
use crate::linearized::{append_identity_1, append_identity_2, const_green};
use crate::random_fields::{sample, CoefficientField, CoefficientLaw, SeedLineage};
use crate::sensitivity::{
    green_battery, phi_battery, spectral_gap_verify, BatteryConfig, Statistic, StepPolicy,
};
use crate::solver::{green_with_tol, solve, EllipticOperator};

#[derive(Clone, Debug, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckItem {
    /// Passes when `value <= tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

/// Largest `|sum grad u . g + sum u div* g|` over random pairs, relative to
/// `||grad u|| ||g||`.
pub fn ibp_defect(lattice: TorusLattice, pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let u = ScalarField::from_fn(lattice, |_| rng.random_range(-1.0..1.0));
        let g = VectorField::new(
            lattice,
            (0..lattice.num_edges()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .expect("finite values");
        let gu = gradient(&u);
        let lhs = gu.dot(&g);
        let rhs = -u.dot(&divergence_star(&g));
        let scale = gu.norm() * g.norm();
        worst = worst.max((lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE));
    }
    worst
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GreenDefects {
    /// `max_y |sum_x G(x, y) / T - 1|`.
    pub mass: f64,
    /// `max |G(x, y) - G(y, x)| / max G` over pairs of sources.
    pub symmetry: f64,
}

pub fn green_defects(coefficients: &CoefficientField, t: f64, sources: &[usize], tol: f64) -> Result<GreenDefects> {
    let greens: Vec<ScalarField> = sources
        .iter()
        .map(|&y| Ok(green_with_tol(coefficients, t, y, tol)?.0))
        .collect::<Result<_>>()?;
    let mass = greens.iter().map(|g| (g.sum() / t - 1.0).abs()).fold(0.0, f64::max);
    let scale = greens.iter().map(|g| g.max()).fold(0.0, f64::max);
    let mut symmetry: f64 = 0.0;
    for (a, &ya) in sources.iter().enumerate() {
        for (b, &yb) in sources.iter().enumerate().skip(a + 1) {
            symmetry = symmetry.max((greens[b].get(ya) - greens[a].get(yb)).abs() / scale);
        }
    }
    Ok(GreenDefects { mass, symmetry })
}

/// `max |G_CG - G_Fourier| / max G` for unit coefficients.
pub fn fourier_vs_cg(lattice: TorusLattice, t: f64, tol: f64) -> Result<f64> {
    let ones = CoefficientField::constant(lattice, 1.0)?;
    let (cg, _) = green_with_tol(&ones, t, 0, tol)?;
    let fourier = const_green(lattice, t)?;
    let scale = fourier.values.max();
    Ok(cg
        .values()
        .iter()
        .zip(fourier.values.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale)
}

/// `max |a grad phi - mean| / mean` for the exact one-dimensional flux.
pub fn flux_defect_1d(coefficients: &CoefficientField) -> Result<f64> {
    let g = corrector_1d_exact(coefficients)?;
    let flux: Vec<f64> = coefficients
        .component(0)
        .iter()
        .zip(g.component(0))
        .map(|(a, g)| a * (g + 1.0))
        .collect();
    let mean = flux.iter().sum::<f64>() / flux.len() as f64;
    Ok(flux.iter().map(|f| (f - mean).abs()).fold(0.0, f64::max) / mean)
}

/// Relative error of CG on a manufactured solution `u`, `rhs = Op u`.
fn manufactured_error(coefficients: &CoefficientField, tinv: f64, seed: u64) -> Result<f64> {
    let lat = *coefficients.lattice();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = ScalarField::from_fn(lat, |_| rng.random_range(-1.0..1.0));
    let op = EllipticOperator::periodic(coefficients, tinv)?;
    let (x, _) = solve(&op, &op.apply(&u), 1e-13)?;
    let diff: f64 = x.values().iter().zip(u.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(diff / u.norm())
}

/// Runs every check; the battery passes when all items pass.
pub fn run_check_battery() -> Result<Vec<CheckItem>> {
    let law = CoefficientLaw::default_experiment();
    let mut items = Vec::new();

    for (d, n) in [(1, 64), (2, 16), (3, 8)] {
        let lat = TorusLattice::new(d, n)?;
        items.push(CheckItem::at_most(format!("ibp-adjointness-d{d}"), ibp_defect(lat, 100, 1), 1e-10));
    }

    let lat2 = TorusLattice::new(2, 32)?;
    let a = sample(&law, lat2, &SeedLineage::new(1, 0, "check"))?;
    let g = green_defects(&a, 64.0, &[0, 17, 300, 1000], 1e-13)?;
    items.push(CheckItem::at_most("green-mass", g.mass, 1e-8));
    items.push(CheckItem::at_most("green-symmetry", g.symmetry, 1e-9));
    items.push(CheckItem::at_most("fourier-vs-cg", fourier_vs_cg(lat2, 64.0, 1e-13)?, 1e-9));
    items.push(CheckItem::at_most("manufactured-solution", manufactured_error(&a, 1.0 / 64.0, 2)?, 1e-9));

    let sol = corrector(&a, 64.0, &[1.0, 0.0], 1e-10)?;
    let ok = sol.check_invariants().is_ok();
    items.push(CheckItem::at_most("corrector-invariants", if ok { 0.0 } else { 1.0 }, 0.0));

    let chain = sample(&law, TorusLattice::new(1, 256)?, &SeedLineage::new(1, 0, "check-1d"))?;
    items.push(CheckItem::at_most("exact-1d-flux", flux_defect_1d(&chain)?, 1e-12));

    let small = sample(&law, TorusLattice::new(2, 16)?, &SeedLineage::new(2, 0, "check-fd"))?;
    let bc = BatteryConfig {
        t: 32.0,
        cases: 5,
        radius: 3,
        policy: StepPolicy::Central,
        seed: 3,
    };
    let mut reports = phi_battery(&small, &bc)?;
    reports.extend(green_battery(&small, &bc)?);
    let worst = reports.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    items.push(CheckItem::at_most("susceptibility-fd", worst, 1e-4));

    for lat in [TorusLattice::new(1, 4)?, TorusLattice::new(2, 2)?] {
        for s in [
            Statistic::SingleEdge(0),
            Statistic::EdgeSum,
            Statistic::PhiAtOrigin { t: 8.0 },
            Statistic::UniformMaskEnergy { t: 8.0 },
        ] {
            let r = spectral_gap_verify(lat, &law, s)?;
            let excess = (r.lhs / r.rhs - 1.0).max(0.0);
            items.push(CheckItem::at_most(
                format!("spectral-gap-d{}-{}", lat.dim(), r.statistic),
                excess,
                1e-6,
            ));
        }
    }

    let lat32 = TorusLattice::new(2, 32)?;
    let mask = AveragingMask::raised_cosine(lat32, 4)?;
    let first = append_identity_1(&law, lat32, &mask, 400, 5)?;
    items.push(CheckItem::at_most(
        "append-1",
        (first.lhs - first.rhs).abs() / first.ci_half_width,
        3.0,
    ));
    let second = append_identity_2(&law, TorusLattice::new(2, 64)?, 16.0, 200, 6)?;
    items.push(CheckItem::at_most(
        "append-2",
        (second.check.lhs - second.rhs_torus).abs() / second.check.ci_half_width,
        3.0,
    ));
    Ok(items)
}
