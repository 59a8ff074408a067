//! Cached 3D complex FFTs over the `(x, y, z)` row-major lattice.
//!
//! Transforms are unnormalized; callers apply the `1/n³` factor.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Direction {
    Forward,
    Inverse,
}

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> PlanPair {
    static CACHE: OnceLock<Mutex<HashMap<usize, PlanPair>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (
                planner.plan_fft(n, FftDirection::Forward),
                planner.plan_fft(n, FftDirection::Inverse),
            )
        })
        .clone()
}

fn lines(data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>, n: usize) {
    let scratch_len = fft.get_inplace_scratch_len();
    data.par_chunks_mut(n * n).for_each_init(
        || vec![Complex64::new(0.0, 0.0); scratch_len],
        |scratch, block| fft.process_with_scratch(block, scratch),
    );
}

/// In-place 3D FFT of an `n³` buffer.
pub(crate) fn fft3d(data: &mut [Complex64], n: usize, dir: Direction) {
    debug_assert_eq!(data.len(), n * n * n);
    let (fwd, inv) = plans(n);
    let fft = match dir {
        Direction::Forward => fwd,
        Direction::Inverse => inv,
    };
    let scratch_len = fft.get_inplace_scratch_len();

    // z: contiguous lines
    lines(data, &fft, n);

    // y: strided within each x-plane
    data.par_chunks_mut(n * n).for_each_init(
        || (vec![Complex64::new(0.0, 0.0); n], vec![Complex64::new(0.0, 0.0); scratch_len]),
        |(line, scratch), plane| {
            for iz in 0..n {
                for iy in 0..n {
                    line[iy] = plane[iy * n + iz];
                }
                fft.process_with_scratch(line, scratch);
                for iy in 0..n {
                    plane[iy * n + iz] = line[iy];
                }
            }
        },
    );

    // x: transpose to make x contiguous, transform, transpose back
    let nn = n * n;
    let mut t = vec![Complex64::new(0.0, 0.0); data.len()];
    {
        let src: &[Complex64] = data;
        t.par_chunks_mut(n).enumerate().for_each(|(yz, line)| {
            for (ix, v) in line.iter_mut().enumerate() {
                *v = src[ix * nn + yz];
            }
        });
    }
    lines(&mut t, &fft, n);
    data.par_chunks_mut(nn).enumerate().for_each(|(ix, plane)| {
        for (yz, v) in plane.iter_mut().enumerate() {
            *v = t[yz * n + ix];
        }
    });
}
