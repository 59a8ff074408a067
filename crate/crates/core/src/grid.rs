//! Uniform periodic grid on the box `[0, 2π)³` and its Fourier lattice.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which modes survive after a nonlinear product.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DealiasRule {
    /// Keep `|k_i| <= floor(n/3)`.
    TwoThirds,
    /// Keep everything except the Nyquist plane.
    None,
}

impl DealiasRule {
    pub fn as_str(self) -> &'static str {
        match self {
            DealiasRule::TwoThirds => "two_thirds",
            DealiasRule::None => "none",
        }
    }
}

/// Grid description. Cheap to copy; the domain length is always 2π.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    n: usize,
    dealias: DealiasRule,
}

impl GridSpec {
    pub fn new(n_points: usize, dealias: DealiasRule) -> Result<Self> {
        if n_points < 4 {
            return Err(Error::InvalidGrid(format!("n_points must be >= 4, got {n_points}")));
        }
        if n_points % 2 != 0 {
            return Err(Error::InvalidGrid(format!("n_points must be even, got {n_points}")));
        }
        Ok(Self { n: n_points, dealias })
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn dealias_rule(&self) -> DealiasRule {
        self.dealias
    }

    pub fn domain_length(&self) -> f64 {
        2.0 * PI
    }

    pub fn dx(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Largest retained `|k_i|` after dealiasing.
    pub fn k_max(&self) -> usize {
        match self.dealias {
            DealiasRule::TwoThirds => self.n / 3,
            DealiasRule::None => self.n / 2 - 1,
        }
    }

    /// Number of lattice points per component, `n³`.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.n + iy) * self.n + iz
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        let iz = idx % self.n;
        let iy = (idx / self.n) % self.n;
        let ix = idx / (self.n * self.n);
        (ix, iy, iz)
    }

    /// Signed wavenumber stored at FFT index `i` (0, 1, …, n/2−1, −n/2, …, −1).
    #[inline]
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Wavenumber used for odd-order derivatives; the Nyquist entry is zero so
    /// that derivatives of real fields stay real.
    #[inline]
    pub fn derivative_wavenumber(&self, i: usize) -> f64 {
        if i == self.n / 2 {
            0.0
        } else {
            self.wavenumber(i) as f64
        }
    }

    /// FFT index holding signed wavenumber `k`, if it is representable.
    #[inline]
    pub fn index_of(&self, k: i64) -> Option<usize> {
        let half = (self.n / 2) as i64;
        if k >= -half && k < half {
            Some(k.rem_euclid(self.n as i64) as usize)
        } else {
            None
        }
    }

    /// Index of `-k` for FFT index `i`.
    #[inline]
    pub fn conjugate_index(&self, i: usize) -> usize {
        (self.n - i) % self.n
    }

    #[inline]
    pub fn wavevector(&self, idx: usize) -> [i64; 3] {
        let (ix, iy, iz) = self.unravel(idx);
        [self.wavenumber(ix), self.wavenumber(iy), self.wavenumber(iz)]
    }

    #[inline]
    pub fn derivative_wavevector(&self, idx: usize) -> [f64; 3] {
        let (ix, iy, iz) = self.unravel(idx);
        [
            self.derivative_wavenumber(ix),
            self.derivative_wavenumber(iy),
            self.derivative_wavenumber(iz),
        ]
    }

    #[inline]
    pub fn retains(&self, k: [i64; 3]) -> bool {
        let km = self.k_max() as i64;
        k.iter().all(|ki| ki.abs() <= km)
    }

    /// Physical coordinate of grid index `j`: `2πj/n`.
    #[inline]
    pub fn coordinate(&self, j: usize) -> f64 {
        self.dx() * j as f64
    }
}
