use super::TorusLattice;
use crate::error::{Error, Result};

/// One real value per site.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    lattice: TorusLattice,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(lattice: TorusLattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.num_sites() {
            return Err(Error::InvalidArgument(format!(
                "scalar field needs {} values, got {}",
                lattice.num_sites(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite field value {v}")));
        }
        Ok(Self { lattice, values })
    }

    /// Wraps values already known to be valid (length and finiteness).
    pub(crate) fn from_raw(lattice: TorusLattice, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), lattice.num_sites());
        Self { lattice, values }
    }

    pub fn zeros(lattice: TorusLattice) -> Self {
        Self::constant(lattice, 0.0)
    }

    pub fn constant(lattice: TorusLattice, c: f64) -> Self {
        Self {
            lattice,
            values: vec![c; lattice.num_sites()],
        }
    }

    /// Unit point mass at `site`.
    pub fn delta(lattice: TorusLattice, site: usize) -> Self {
        let mut f = Self::zeros(lattice);
        f.values[site] = 1.0;
        f
    }

    pub fn from_fn(lattice: TorusLattice, mut f: impl FnMut(usize) -> f64) -> Self {
        let values = (0..lattice.num_sites()).map(&mut f).collect();
        Self { lattice, values }
    }

    #[inline]
    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, site: usize) -> f64 {
        self.values[site]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    pub fn dot(&self, other: &ScalarField) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `d` values per site; component `i` at `x` lives on the edge `[x, x + e_i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    lattice: TorusLattice,
    values: Vec<f64>,
}

impl VectorField {
    pub fn new(lattice: TorusLattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.num_edges() {
            return Err(Error::InvalidArgument(format!(
                "vector field needs {} values, got {}",
                lattice.num_edges(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite field value {v}")));
        }
        Ok(Self { lattice, values })
    }

    pub(crate) fn from_raw(lattice: TorusLattice, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), lattice.num_edges());
        Self { lattice, values }
    }

    pub fn zeros(lattice: TorusLattice) -> Self {
        Self {
            lattice,
            values: vec![0.0; lattice.num_edges()],
        }
    }

    /// The same vector `c` at every site.
    pub fn constant(lattice: TorusLattice, c: &[f64]) -> Self {
        assert_eq!(c.len(), lattice.dim());
        let n = lattice.num_sites();
        let values = c.iter().flat_map(|&ci| std::iter::repeat_n(ci, n)).collect();
        Self { lattice, values }
    }

    #[inline]
    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn component(&self, i: usize) -> &[f64] {
        let n = self.lattice.num_sites();
        &self.values[i * n..(i + 1) * n]
    }

    #[inline]
    pub fn component_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.lattice.num_sites();
        &mut self.values[i * n..(i + 1) * n]
    }

    #[inline]
    pub fn get(&self, site: usize, i: usize) -> f64 {
        self.values[i * self.lattice.num_sites() + site]
    }

    /// Sum over sites of `g(x) . h(x)`.
    pub fn dot(&self, other: &VectorField) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Per-site Euclidean norm squared, `|g(x)|^2`.
    pub fn squared_magnitude(&self) -> ScalarField {
        let n = self.lattice.num_sites();
        let mut out = vec![0.0; n];
        for i in 0..self.lattice.dim() {
            for (o, &g) in out.iter_mut().zip(self.component(i)) {
                *o += g * g;
            }
        }
        ScalarField::from_raw(self.lattice, out)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Forward differences: component `i` at `x` is `u(x + e_i) - u(x)`.
pub fn gradient(u: &ScalarField) -> VectorField {
    let lat = *u.lattice();
    let n = lat.num_sites();
    let mut values = vec![0.0; lat.num_edges()];
    for (i, out) in values.chunks_exact_mut(n).enumerate() {
        lat.forward_diff_axis(u.values(), i, out);
    }
    VectorField::from_raw(lat, values)
}

/// `(div* g)(x) = sum_i g_i(x) - g_i(x - e_i)`, the negative adjoint of [`gradient`].
pub fn divergence_star(g: &VectorField) -> ScalarField {
    let lat = *g.lattice();
    let mut out = vec![0.0; lat.num_sites()];
    for i in 0..lat.dim() {
        lat.add_backward_diff_axis(g.component(i), i, 1.0, &mut out);
    }
    ScalarField::from_raw(lat, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gradient_of_constant_vanishes() {
        let lat = TorusLattice::new(3, 5).unwrap();
        let g = gradient(&ScalarField::constant(lat, 2.5));
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_1d_direct() {
        let lat = TorusLattice::new(1, 4).unwrap();
        let u = ScalarField::new(lat, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(gradient(&u).values(), &[1.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn divergence_1d_direct() {
        let lat = TorusLattice::new(1, 4).unwrap();
        let g = VectorField::new(lat, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(divergence_star(&g).values(), &[1.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn divergence_of_constant_vanishes() {
        let lat = TorusLattice::new(2, 6).unwrap();
        let d = divergence_star(&VectorField::constant(lat, &[0.3, -1.7]));
        assert!(d.values().iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn gradient_matches_pointwise_definition() {
        let lat = TorusLattice::new(3, 4).unwrap();
        let u = ScalarField::from_fn(lat, |x| (x as f64 * 0.37).sin());
        let g = gradient(&u);
        for x in 0..lat.num_sites() {
            for i in 0..3 {
                let expect = u.get(lat.forward(x, i)) - u.get(x);
                assert_eq!(g.get(x, i), expect);
            }
        }
    }

    #[test]
    fn integration_by_parts_random_pairs() {
        let lat = TorusLattice::new(3, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let h = ScalarField::from_fn(lat, |_| rng.random_range(-1.0..1.0));
            let mut gv = vec![0.0; lat.num_edges()];
            gv.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            let g = VectorField::new(lat, gv).unwrap();
            let lhs = h.dot(&divergence_star(&g));
            let rhs = gradient(&h).dot(&g);
            assert!((lhs + rhs).abs() <= 1e-10 * h.norm() * g.norm());
        }
    }

    proptest! {
        #[test]
        fn gradient_components_telescope(
            d in 1usize..=3,
            n in 2usize..7,
            seed in any::<u64>(),
        ) {
            let lat = TorusLattice::new(d, n).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = ScalarField::from_fn(lat, |_| rng.random_range(-10.0..10.0));
            let g = gradient(&u);
            for i in 0..d {
                let s: f64 = g.component(i).iter().sum();
                prop_assert!(s.abs() < 1e-11);
            }
        }
    }
}
