//! Test-data profiles: compactly supported bumps, smooth cutoffs, and random
//! band-limited fields.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lattice::{Field, Layout, Representation, SpaceTimeLattice};

/// `exp(-1/(1 - r^2))` on `|r| < 1`, zero elsewhere.
pub fn bump(r: f64) -> f64 {
    if r.abs() < 1.0 {
        (-1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

/// Smooth monotone step: 0 for `x <= 0`, 1 for `x >= 1`.
pub fn smooth_step(x: f64) -> f64 {
    let e = |y: f64| if y > 0.0 { (-1.0 / y).exp() } else { 0.0 };
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        e(x) / (e(x) + e(1.0 - x))
    }
}

/// 0 below `a`, rises on `[a, b]`, 1 on `[b, c]`, falls on `[c, d]`, 0 above `d`.
pub fn smooth_plateau(x: f64, a: f64, b: f64, c: f64, d: f64) -> f64 {
    if x < b {
        smooth_step((x - a) / (b - a))
    } else if x <= c {
        1.0
    } else {
        1.0 - smooth_step((x - c) / (d - c))
    }
}

/// Random real field whose spectrum is confined to modes with
/// `|k_i| <= band * n_i / 2` on every axis, with zero mean in every slice.
/// Deterministic in `seed`.
pub fn band_limited_field(lattice: &Arc<SpaceTimeLattice>, layout: Layout, band: f64, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = Field::zeros(lattice.clone(), layout, Representation::Frequency);
    let n = lattice.n_space_total();
    let in_band: Vec<bool> = (0..n)
        .map(|j| {
            j != 0
                && lattice.multi_index(j).iter().zip(lattice.n_space()).all(|(i, m)| {
                    let s = (*i).min(m - i);
                    (s as f64) <= band * (*m as f64) / 2.0 && 2 * s < *m
                })
        })
        .collect();
    for k in 0..f.n_slices() {
        let slice = f.slice_mut(k);
        for j in 0..n {
            let mj = lattice.mirror(j);
            if !in_band[j] || j > mj {
                continue;
            }
            if j == mj {
                slice[j] = Complex64::new(rng.random_range(-1.0..1.0), 0.0);
            } else {
                let v = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                slice[j] = v;
                slice[mj] = v.conj();
            }
        }
    }
    f.real_part()
}

/// A band-limited field restricted to the integrand slices `0..n_time`
/// (the final slice, which carries no quadrature weight, is zeroed).
pub fn band_limited_integrand(lattice: &Arc<SpaceTimeLattice>, band: f64, seed: u64) -> Field {
    let mut f = band_limited_field(lattice, Layout::SpaceTime, band, seed);
    let last = lattice.n_time();
    f.slice_mut(last).iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
    f
}
