//! Discrete Fourier diagonalization of the constant-coefficient operator
//! `T^{-1} - Laplacian` on the torus.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::lattice::TorusLattice;

/// In-place multidimensional FFT (unnormalized in both directions).
pub fn fft_nd(lattice: &TorusLattice, data: &mut [Complex64], inverse: bool) {
    let n = lattice.side();
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut line = vec![Complex64::default(); n];
    for axis in 0..lattice.dim() {
        let s = lattice.stride(axis);
        if s == 1 {
            for chunk in data.chunks_exact_mut(n) {
                fft.process_with_scratch(chunk, &mut scratch);
            }
            continue;
        }
        let block = n * s;
        for b in (0..data.len()).step_by(block) {
            for inner in 0..s {
                let base = b + inner;
                for (c, l) in line.iter_mut().enumerate() {
                    *l = data[base + c * s];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (c, l) in line.iter().enumerate() {
                    data[base + c * s] = *l;
                }
            }
        }
    }
}

/// Symbol of `-Laplacian` at each wave vector, `sum_i 4 sin^2(pi k_i / N)`.
pub fn laplacian_symbol(lattice: &TorusLattice) -> Vec<f64> {
    let n = lattice.side();
    let d = lattice.dim();
    let s1: Vec<f64> = (0..n)
        .map(|k| 4.0 * (PI * k as f64 / n as f64).sin().powi(2))
        .collect();
    (0..lattice.num_sites())
        .map(|x| {
            let c = lattice.coords(x);
            c[..d].iter().map(|&k| s1[k]).sum()
        })
        .collect()
}

/// Symbol of the forward difference along `axis`, `exp(2 pi i k / N) - 1`.
pub fn forward_symbol(lattice: &TorusLattice, axis: usize) -> Vec<Complex64> {
    let n = lattice.side();
    (0..lattice.num_sites())
        .map(|x| {
            let k = lattice.coords(x)[axis];
            Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64) - 1.0
        })
        .collect()
}

/// Applies the Fourier multiplier `m(k)` to a real field.
pub fn apply_multiplier(lattice: &TorusLattice, u: &[f64], m: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut buf: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(lattice, &mut buf, false);
    for (k, b) in buf.iter_mut().enumerate() {
        *b *= m(k);
    }
    fft_nd(lattice, &mut buf, true);
    let scale = 1.0 / lattice.num_sites() as f64;
    buf.iter().map(|c| c.re * scale).collect()
}

/// Solves `(tinv - Laplacian) u = rhs`. With `tinv = 0` the zero mode is
/// dropped, which returns the zero-mean solution for mass-free `rhs`.
pub fn solve_constant(lattice: &TorusLattice, tinv: f64, rhs: &[f64]) -> Vec<f64> {
    let symbol = laplacian_symbol(lattice);
    apply_multiplier(lattice, rhs, |k| {
        let s = tinv + symbol[k];
        if s == 0.0 {
            0.0
        } else {
            1.0 / s
        }
    })
}
