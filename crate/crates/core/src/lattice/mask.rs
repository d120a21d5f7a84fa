use std::f64::consts::PI;

use super::{ScalarField, TorusLattice};
use crate::error::{Error, Result};

/// Nonnegative, unit-mass averaging weights centered at the origin.
#[derive(Clone, Debug)]
pub struct AveragingMask {
    half_width: usize,
    weights: ScalarField,
    gradient_constant: f64,
}

impl AveragingMask {
    /// Tensor product of raised-cosine bumps `1 + cos(pi t / L)` on `|t| < L`,
    /// normalized to unit mass. Support lies in the open box `(-L, L)^d`.
    pub fn raised_cosine(lattice: TorusLattice, half_width: usize) -> Result<Self> {
        let n = lattice.side();
        if 2 * half_width + 1 > n {
            return Err(Error::MaskTooLarge {
                half_width,
                side: n,
            });
        }
        if half_width < 2 {
            return Err(Error::InvalidArgument(format!(
                "mask half-width must be at least 2, got {half_width}"
            )));
        }
        let l = half_width as f64;
        let profile: Vec<f64> = (0..n)
            .map(|c| {
                let t = lattice.wrap_coordinate(c) as f64;
                if t.abs() < l {
                    1.0 + (PI * t / l).cos()
                } else {
                    0.0
                }
            })
            .collect();
        let d = lattice.dim();
        let mut weights = ScalarField::from_fn(lattice, |x| {
            let c = lattice.coords(x);
            c[..d].iter().map(|&ci| profile[ci]).product()
        });
        let mass = weights.sum();
        weights.values_mut().iter_mut().for_each(|w| *w /= mass);
        let grad_max = super::gradient(&weights)
            .values()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Self {
            half_width,
            gradient_constant: grad_max * l.powi(d as i32 + 1),
            weights,
        })
    }

    /// Uniform weights `N^{-d}` on the whole torus.
    pub fn uniform(lattice: TorusLattice) -> Self {
        let n = lattice.num_sites() as f64;
        Self {
            half_width: lattice.side(),
            weights: ScalarField::constant(lattice, 1.0 / n),
            gradient_constant: 0.0,
        }
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn lattice(&self) -> &TorusLattice {
        self.weights.lattice()
    }

    pub fn weights(&self) -> &ScalarField {
        &self.weights
    }

    /// `max_edges |grad eta| * L^{d+1}`.
    pub fn gradient_constant(&self) -> f64 {
        self.gradient_constant
    }

    pub fn sum_squares(&self) -> f64 {
        self.weights.dot(&self.weights)
    }

    /// `sum_x f(x) eta(x)`.
    pub fn average(&self, f: &ScalarField) -> f64 {
        f.dot(&self.weights)
    }
}

/// `sum_{R < |x - center| <= 2R} |u(x)|^q` with distances taken on the
/// shortest periodic representative. The outer sphere must fit in the
/// fundamental domain, `4R <= N`.
pub fn annulus_sum(u: &ScalarField, center: usize, radius: usize, q: f64) -> Result<f64> {
    let lat = u.lattice();
    if 4 * radius > lat.side() {
        return Err(Error::AnnulusWraps {
            radius,
            side: lat.side(),
        });
    }
    let inner = (radius * radius) as i64;
    let outer = 4 * inner;
    Ok((0..lat.num_sites())
        .filter(|&x| {
            let r2 = lat.dist2(x, center);
            r2 > inner && r2 <= outer
        })
        .map(|x| u.get(x).abs().powf(q))
        .sum())
}
