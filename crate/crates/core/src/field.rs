//! Real and spectral vector fields and the core field algebra.
//!
//! Spectral coefficients follow the discrete analysis convention
//! `û_k = n⁻³ Σ_j u(x_j) e^{-ik·x_j}`, so the zero mode is the spatial mean and
//! `∫|u|² dx = (2π)³ Σ_k |û_k|²`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::{fft3d, Direction};
use crate::grid::GridSpec;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Tolerance for the Hermitian-symmetry check in [`inverse_transform`],
/// relative to the largest coefficient.
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

#[inline]
pub(crate) fn box_volume() -> f64 {
    (2.0 * PI).powi(3)
}

/// Velocity-like field sampled on the uniform grid `x_j = 2πj/n`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealField {
    grid: GridSpec,
    comps: [Vec<f64>; 3],
}

impl RealField {
    pub fn zeros(grid: GridSpec) -> Self {
        let len = grid.len();
        Self { grid, comps: [vec![0.0; len], vec![0.0; len], vec![0.0; len]] }
    }

    /// Sample `f(x, y, z)` at every grid point.
    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 3]) -> [f64; 3] + Sync) -> Self {
        let n = grid.n_points();
        let mut out = Self::zeros(grid);
        let values: Vec<[f64; 3]> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let (ix, iy, iz) = grid.unravel(idx);
                f([grid.coordinate(ix), grid.coordinate(iy), grid.coordinate(iz)])
            })
            .collect();
        debug_assert_eq!(values.len(), n * n * n);
        for (idx, v) in values.into_iter().enumerate() {
            for c in 0..3 {
                out.comps[c][idx] = v[c];
            }
        }
        out
    }

    pub fn from_components(grid: GridSpec, comps: [Vec<f64>; 3]) -> Result<Self> {
        if comps.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::InvalidArgument(format!(
                "component length must be n³ = {}",
                grid.len()
            )));
        }
        Ok(Self { grid, comps })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.comps[c]
    }

    pub fn into_components(self) -> [Vec<f64>; 3] {
        self.comps
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    /// Grid-sampled sup-norm of the pointwise Euclidean magnitude.
    pub fn max_magnitude(&self) -> f64 {
        let [a, b, c] = &self.comps;
        a.iter()
            .zip(b)
            .zip(c)
            .map(|((x, y), z)| (x * x + y * y + z * z).sqrt())
            .fold(0.0, |m, v| if v > m || v.is_nan() { v } else { m })
    }

    /// Midpoint-rule quadrature of `∫|u|² dx`.
    pub fn quadrature_l2_sq(&self) -> f64 {
        let cell = self.grid.dx().powi(3);
        let sum: f64 = self.comps.iter().flat_map(|c| c.iter()).map(|v| v * v).sum();
        cell * sum
    }
}

/// Fourier coefficients of a real 3-component field, stored per component in
/// FFT order with `k_x` slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    comps: [Vec<Complex64>; 3],
}

impl SpectralField {
    pub fn zeros(grid: GridSpec) -> Self {
        let len = grid.len();
        Self { grid, comps: [vec![ZERO; len], vec![ZERO; len], vec![ZERO; len]] }
    }

    pub fn from_components(grid: GridSpec, comps: [Vec<Complex64>; 3]) -> Result<Self> {
        if comps.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::InvalidArgument(format!(
                "component length must be n³ = {}",
                grid.len()
            )));
        }
        Ok(Self { grid, comps })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        &self.comps[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        &mut self.comps[c]
    }

    pub fn into_components(self) -> [Vec<Complex64>; 3] {
        self.comps
    }

    /// Coefficient vector at wavevector `k`, if representable.
    pub fn mode(&self, k: [i64; 3]) -> Option<[Complex64; 3]> {
        let idx = self.mode_index(k)?;
        Some([self.comps[0][idx], self.comps[1][idx], self.comps[2][idx]])
    }

    /// Set the coefficient at `k` and its conjugate partner at `-k`.
    pub fn set_mode(&mut self, k: [i64; 3], value: [Complex64; 3]) -> Result<()> {
        let bad = || Error::InvalidArgument(format!("wavevector {k:?} not representable"));
        let idx = self.mode_index(k).ok_or_else(bad)?;
        let neg = self.mode_index([-k[0], -k[1], -k[2]]).ok_or_else(bad)?;
        for c in 0..3 {
            self.comps[c][idx] = value[c];
            self.comps[c][neg] = value[c].conj();
        }
        if idx == neg {
            for c in 0..3 {
                self.comps[c][idx] = Complex64::new(value[c].re, 0.0);
            }
        }
        Ok(())
    }

    fn mode_index(&self, k: [i64; 3]) -> Option<usize> {
        let g = self.grid;
        Some(g.index(g.index_of(k[0])?, g.index_of(k[1])?, g.index_of(k[2])?))
    }

    fn check_grid(&self, other: &SpectralField) -> Result<()> {
        if self.grid.n_points() != other.grid.n_points() {
            return Err(Error::GridMismatch {
                left: self.grid.n_points(),
                right: other.grid.n_points(),
            });
        }
        Ok(())
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.comps.iter_mut().flat_map(|c| c.iter_mut()).for_each(|v| *v *= a);
        out
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &SpectralField) -> Result<()> {
        self.check_grid(other)?;
        for (dst, src) in self.comps.iter_mut().zip(&other.comps) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s * a);
        }
        Ok(())
    }

    pub fn sub(&self, other: &SpectralField) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().flat_map(|c| c.iter()).all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// `max_k |û_k|` with the componentwise Euclidean magnitude.
    pub fn max_coefficient(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| self.comps.iter().map(|c| c[i].norm_sqr()).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// `max_k |k·û_k|`, using derivative wavenumbers.
    pub fn max_divergence(&self) -> f64 {
        let g = self.grid;
        (0..g.len())
            .map(|i| {
                let k = g.derivative_wavevector(i);
                (self.comps[0][i] * k[0] + self.comps[1][i] * k[1] + self.comps[2][i] * k[2]).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `max_k |û_k − conj(û_{−k})|`.
    pub fn hermitian_defect(&self) -> f64 {
        let g = self.grid;
        let mut defect: f64 = 0.0;
        for idx in 0..g.len() {
            let (ix, iy, iz) = g.unravel(idx);
            let neg = g.index(g.conjugate_index(ix), g.conjugate_index(iy), g.conjugate_index(iz));
            for c in &self.comps {
                defect = defect.max((c[idx] - c[neg].conj()).norm());
            }
        }
        defect
    }

    /// Real part of `Σ_k û_k · conj(v̂_k)`, summed over components.
    pub fn inner_product(&self, other: &SpectralField) -> Result<f64> {
        self.check_grid(other)?;
        let mut acc = 0.0;
        for (a, b) in self.comps.iter().zip(&other.comps) {
            acc += a.iter().zip(b).map(|(x, y)| (x * y.conj()).re).sum::<f64>();
        }
        Ok(acc)
    }

    /// Copy the modes common to both lattices onto `target`; the Nyquist plane
    /// of either grid is never transferred.
    pub fn resample(&self, target: GridSpec) -> SpectralField {
        let src = self.grid;
        let limit = (src.n_points().min(target.n_points()) / 2) as i64;
        let mut out = SpectralField::zeros(target);
        for idx in 0..src.len() {
            let k = src.wavevector(idx);
            if k.iter().any(|ki| ki.abs() >= limit) {
                continue;
            }
            let t = target.index(
                target.index_of(k[0]).unwrap(),
                target.index_of(k[1]).unwrap(),
                target.index_of(k[2]).unwrap(),
            );
            for c in 0..3 {
                out.comps[c][t] = self.comps[c][idx];
            }
        }
        out
    }
}

/// Inverse-transform up to three real scalars per two complex FFTs by packing
/// pairs as `a + i b`. Inputs must be Hermitian.
pub(crate) fn scalars_to_physical(grid: GridSpec, inputs: &[&[Complex64]]) -> Vec<Vec<f64>> {
    let n = grid.n_points();
    let mut out = Vec::with_capacity(inputs.len());
    for pair in inputs.chunks(2) {
        let mut buf: Vec<Complex64> = match pair {
            [a, b] => a.iter().zip(b.iter()).map(|(x, y)| x + Complex64::i() * y).collect(),
            [a] => a.to_vec(),
            _ => unreachable!(),
        };
        fft3d(&mut buf, n, Direction::Inverse);
        out.push(buf.iter().map(|v| v.re).collect());
        if pair.len() == 2 {
            out.push(buf.iter().map(|v| v.im).collect());
        }
    }
    out
}

/// Forward-transform real scalars two at a time, separating each packed pair
/// through Hermitian symmetry. Applies the `1/n³` normalization.
pub(crate) fn scalars_to_spectral(grid: GridSpec, inputs: &[&[f64]]) -> Vec<Vec<Complex64>> {
    let n = grid.n_points();
    let norm = 1.0 / grid.len() as f64;
    let mut out = Vec::with_capacity(inputs.len());
    for pair in inputs.chunks(2) {
        match pair {
            [a, b] => {
                let mut buf: Vec<Complex64> =
                    a.iter().zip(b.iter()).map(|(x, y)| Complex64::new(*x, *y)).collect();
                fft3d(&mut buf, n, Direction::Forward);
                let mut first = vec![ZERO; buf.len()];
                let mut second = vec![ZERO; buf.len()];
                first
                    .par_iter_mut()
                    .zip(second.par_iter_mut())
                    .enumerate()
                    .for_each(|(idx, (f, s))| {
                        let (ix, iy, iz) = grid.unravel(idx);
                        let neg = grid.index(
                            grid.conjugate_index(ix),
                            grid.conjugate_index(iy),
                            grid.conjugate_index(iz),
                        );
                        let z = buf[idx];
                        let zc = buf[neg].conj();
                        *f = (z + zc) * (0.5 * norm);
                        *s = (z - zc) * Complex64::new(0.0, -0.5 * norm);
                    });
                out.push(first);
                out.push(second);
            }
            [a] => {
                let mut buf: Vec<Complex64> = a.iter().map(|x| Complex64::new(*x, 0.0)).collect();
                fft3d(&mut buf, n, Direction::Forward);
                buf.iter_mut().for_each(|v| *v *= norm);
                out.push(buf);
            }
            _ => unreachable!(),
        }
    }
    out
}

/// Physical → spectral with `1/n³` normalization.
pub fn forward_transform(f: &RealField) -> Result<SpectralField> {
    if !f.is_finite() {
        return Err(Error::NonFinite("forward_transform input"));
    }
    let comps = scalars_to_spectral(f.grid, &[&f.comps[0], &f.comps[1], &f.comps[2]]);
    let [a, b, c]: [Vec<Complex64>; 3] = comps.try_into().expect("three components");
    Ok(SpectralField { grid: f.grid, comps: [a, b, c] })
}

/// Spectral → physical. Rejects inputs whose Hermitian defect exceeds
/// [`HERMITIAN_TOLERANCE`] relative to the largest coefficient.
pub fn inverse_transform(s: &SpectralField) -> Result<RealField> {
    let defect = s.hermitian_defect();
    let tolerance = HERMITIAN_TOLERANCE * s.max_coefficient();
    if defect > tolerance || defect.is_nan() {
        return Err(Error::SymmetryViolated { defect, tolerance });
    }
    Ok(inverse_unchecked(s))
}

pub(crate) fn inverse_unchecked(s: &SpectralField) -> RealField {
    let comps = scalars_to_physical(s.grid, &[&s.comps[0], &s.comps[1], &s.comps[2]]);
    let [a, b, c]: [Vec<f64>; 3] = comps.try_into().expect("three components");
    RealField { grid: s.grid, comps: [a, b, c] }
}

/// Per-mode `I − kk^T/|k|²`; the mean mode passes through.
pub fn leray_project(s: &SpectralField) -> SpectralField {
    let g = s.grid;
    let mut out = s.clone();
    let [ox, oy, oz] = &mut out.comps;
    ox.par_iter_mut()
        .zip(oy.par_iter_mut())
        .zip(oz.par_iter_mut())
        .enumerate()
        .for_each(|(idx, ((ux, uy), uz))| {
            let k = g.derivative_wavevector(idx);
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if k2 == 0.0 {
                return;
            }
            let kdotu = (*ux * k[0] + *uy * k[1] + *uz * k[2]) / k2;
            *ux -= kdotu * k[0];
            *uy -= kdotu * k[1];
            *uz -= kdotu * k[2];
        });
    out
}

/// Zero every mode with some `|k_i| > k_max`.
pub fn dealias(s: &SpectralField) -> SpectralField {
    let mut out = s.clone();
    dealias_in_place(&mut out);
    out
}

pub(crate) fn dealias_in_place(s: &mut SpectralField) {
    let g = s.grid;
    for c in s.comps.iter_mut() {
        c.par_iter_mut().enumerate().for_each(|(idx, v)| {
            if !g.retains(g.wavevector(idx)) {
                *v = ZERO;
            }
        });
    }
}

/// Spectral curl `ω̂_k = i k × û_k`.
pub fn curl(s: &SpectralField) -> SpectralField {
    let g = s.grid;
    let mut out = SpectralField::zeros(g);
    let [u, v, w] = &s.comps;
    let [ox, oy, oz] = &mut out.comps;
    ox.par_iter_mut()
        .zip(oy.par_iter_mut())
        .zip(oz.par_iter_mut())
        .enumerate()
        .for_each(|(idx, ((wx, wy), wz))| {
            let k = g.derivative_wavevector(idx);
            let i = Complex64::i();
            *wx = i * (w[idx] * k[1] - v[idx] * k[2]);
            *wy = i * (u[idx] * k[2] - w[idx] * k[0]);
            *wz = i * (v[idx] * k[0] - u[idx] * k[1]);
        });
    out
}

fn weighted_sum(s: &SpectralField, weight: impl Fn([i64; 3]) -> f64) -> f64 {
    let g = s.grid;
    let mut acc = 0.0;
    for idx in 0..g.len() {
        let m: f64 = s.comps.iter().map(|c| c[idx].norm_sqr()).sum();
        if m != 0.0 {
            acc += weight(g.wavevector(idx)) * m;
        }
    }
    acc
}

#[inline]
fn k_sq(k: [i64; 3]) -> f64 {
    (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64
}

/// `∫|u|² dx = (2π)³ Σ_k |û_k|²`.
pub fn l2_norm_sq(s: &SpectralField) -> f64 {
    box_volume() * weighted_sum(s, |_| 1.0)
}

/// `∫|∇u|² dx = (2π)³ Σ_k |k|² |û_k|²`.
pub fn grad_norm_sq(s: &SpectralField) -> f64 {
    box_volume() * weighted_sum(s, k_sq)
}

/// Discrete `H^s` norm `((2π)³ Σ_k (1+|k|²)^s |û_k|²)^{1/2}`.
pub fn sobolev_norm(s: &SpectralField, order: f64) -> Result<f64> {
    if !(order >= 0.0) {
        return Err(Error::InvalidArgument(format!("sobolev order must be >= 0, got {order}")));
    }
    if order == 0.0 {
        return Ok(l2_norm_sq(s).sqrt());
    }
    Ok((box_volume() * weighted_sum(s, |k| (1.0 + k_sq(k)).powf(order))).sqrt())
}
