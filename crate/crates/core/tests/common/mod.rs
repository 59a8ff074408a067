#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectral_ns::{dealias, forward_transform, leray_project, DealiasRule, GridSpec, RealField, SpectralField};

pub fn grid(n: usize) -> GridSpec {
    GridSpec::new(n, DealiasRule::TwoThirds).unwrap()
}

pub fn random_physical(g: GridSpec, seed: u64) -> RealField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps = [(); 3].map(|_| (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>());
    RealField::from_components(g, comps).unwrap()
}

pub fn random_spectral(g: GridSpec, seed: u64) -> SpectralField {
    forward_transform(&random_physical(g, seed)).unwrap()
}

/// Dealiased, divergence-free random field.
pub fn random_admissible(g: GridSpec, seed: u64) -> SpectralField {
    leray_project(&dealias(&random_spectral(g, seed)))
}

/// Unit vector orthogonal to `k`.
fn transverse(k: [i64; 3]) -> [f64; 3] {
    let kf = k.map(|v| v as f64);
    let a = if k[1] == 0 && k[2] == 0 { [0.0, 1.0, 0.0] } else { [1.0, 0.0, 0.0] };
    let c = [kf[1] * a[2] - kf[2] * a[1], kf[2] * a[0] - kf[0] * a[2], kf[0] * a[1] - kf[1] * a[0]];
    let norm = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    c.map(|v| v / norm)
}

/// Divergence-free field with `|û_k| = amplitude · e^{−δ|k|}` on every
/// retained mode.
pub fn envelope_field(g: GridSpec, amplitude: f64, delta: f64) -> SpectralField {
    let mut u = SpectralField::zeros(g);
    for idx in 0..g.len() {
        let k = g.wavevector(idx);
        if k == [0, 0, 0] || !g.retains(k) {
            continue;
        }
        let r = ((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64).sqrt();
        let e = transverse(k);
        let m = amplitude * (-delta * r).exp();
        u.set_mode(k, e.map(|v| Complex64::new(v * m, 0.0))).unwrap();
    }
    u
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
