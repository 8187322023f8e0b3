//! Spectral heat solvers on the lattice.
//!
//! Per mode, with `a = e^{-lambda dt}` and `w = (1 - a)/lambda` (`w = dt` at
//! `lambda = 0`):
//!
//! * forward, `h_t = Δh + f`, `h(0) = 0`: `h_{k+1} = a h_k + w f_k`
//!   (forcing at left endpoints);
//! * backward, `-p_t - Δp = e`, `p(T) = 0`: `p_k = a p_{k+1} + w e_{k+1}`
//!   (forcing at right endpoints).
//!
//! With these choices `<forward(f), e>` under the right-endpoint rule equals
//! `<f, backward(e)>` under the left-endpoint rule exactly.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{norm0, Field, Layout, Representation, SpaceTimeLattice};
use crate::spectral::SpectralMeasure;

/// Per-mode one-step decay factors and forcing weights.
#[derive(Debug, Clone)]
pub struct HeatPropagator {
    lattice: Arc<SpaceTimeLattice>,
    decay: Vec<f64>,
    weight: Vec<f64>,
}

/// `(1 - e^{-lambda tau}) / lambda`, continuous at `lambda = 0`.
pub fn semigroup_integral(lambda: f64, tau: f64) -> f64 {
    let x = lambda * tau;
    if x < 1e-8 {
        tau * (1.0 - 0.5 * x)
    } else {
        -(-x).exp_m1() / lambda
    }
}

impl HeatPropagator {
    pub fn new(lattice: &Arc<SpaceTimeLattice>) -> Self {
        let dt = lattice.dt();
        let decay = lattice.lambda().iter().map(|l| (-l * dt).exp()).collect();
        let weight = lattice.lambda().iter().map(|l| semigroup_integral(*l, dt)).collect();
        Self {
            lattice: lattice.clone(),
            decay,
            weight,
        }
    }

    pub fn lattice(&self) -> &Arc<SpaceTimeLattice> {
        &self.lattice
    }
    pub fn decay(&self) -> &[f64] {
        &self.decay
    }
    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    fn check(&self, f: &Field) -> Result<()> {
        f.require_layout(Layout::SpaceTime)?;
        if **f.lattice() != *self.lattice {
            return Err(Error::LatticeMismatch);
        }
        Ok(())
    }

    /// `h_t = Δh + f`, `h(0) = 0`; slice `n_time` of `f` is not used.
    pub fn solve_forward(&self, forcing: &Field) -> Result<Field> {
        self.check(forcing)?;
        let src = forcing.to_frequency();
        let mut out = Field::zeros(forcing.lattice().clone(), Layout::SpaceTime, Representation::Frequency);
        for k in 0..self.lattice.n_time() {
            let (head, tail) = out.values_mut().split_at_mut((k + 1) * self.lattice.n_space_total());
            let prev = &head[k * self.lattice.n_space_total()..];
            let next = &mut tail[..self.lattice.n_space_total()];
            for (j, v) in next.iter_mut().enumerate() {
                *v = prev[j] * self.decay[j] + src.slice(k)[j] * self.weight[j];
            }
        }
        Ok(restore(out, forcing.representation()))
    }

    /// `-p_t - Δp = e`, `p(T) = 0`; slice 0 of `e` is not used.
    pub fn solve_backward(&self, source: &Field) -> Result<Field> {
        self.check(source)?;
        let src = source.to_frequency();
        let n = self.lattice.n_space_total();
        let mut out = Field::zeros(source.lattice().clone(), Layout::SpaceTime, Representation::Frequency);
        for k in (0..self.lattice.n_time()).rev() {
            let (head, tail) = out.values_mut().split_at_mut((k + 1) * n);
            let cur = &mut head[k * n..];
            let next = &tail[..n];
            for (j, v) in cur.iter_mut().enumerate() {
                *v = next[j] * self.decay[j] + src.slice(k + 1)[j] * self.weight[j];
            }
        }
        Ok(restore(out, source.representation()))
    }

    /// Forcing that [`solve_forward`](Self::solve_forward) maps to `h`:
    /// `f_k = (h_{k+1} - a h_k) / w`. Requires `h(0) = 0` for an exact inverse.
    pub fn forcing_from_solution(&self, h: &Field) -> Result<Field> {
        self.check(h)?;
        let src = h.to_frequency();
        let mut out = Field::zeros(h.lattice().clone(), Layout::SpaceTime, Representation::Frequency);
        for k in 0..self.lattice.n_time() {
            let (cur, next) = (src.slice(k), src.slice(k + 1));
            for (j, v) in out.slice_mut(k).iter_mut().enumerate() {
                *v = (next[j] - cur[j] * self.decay[j]) / self.weight[j];
            }
        }
        Ok(restore(out, h.representation()))
    }
}

fn restore(f: Field, representation: Representation) -> Field {
    match representation {
        Representation::Frequency => f,
        Representation::Physical => f.to_physical(),
    }
}

pub fn solve_forward(forcing: &Field) -> Result<Field> {
    HeatPropagator::new(forcing.lattice()).solve_forward(forcing)
}

pub fn solve_backward(source: &Field) -> Result<Field> {
    HeatPropagator::new(source.lattice()).solve_backward(source)
}

/// Requires `f` to vanish within `margin` cells of the time ends and of the
/// spatial cut `x_i = 0 ≡ L_i`.
pub fn check_support_margin(f: &Field, margin: usize) -> Result<()> {
    let lat = f.lattice();
    let p = f.to_physical();
    let scale = p.max_abs();
    if scale == 0.0 {
        return Ok(());
    }
    let n = lat.n_space_total();
    for k in 0..p.n_slices() {
        for (j, v) in p.slice(k).iter().enumerate().take(n) {
            if v.norm() <= 1e-14 * scale {
                continue;
            }
            if k < margin || k + margin > lat.n_time() {
                return Err(Error::SupportViolation(format!(
                    "nonzero at time slice {k}, within {margin} steps of the time boundary"
                )));
            }
            let idx = lat.multi_index(j);
            if idx.iter().zip(lat.n_space()).any(|(i, m)| *i < margin || *i + margin > *m) {
                return Err(Error::SupportViolation(format!(
                    "nonzero at spatial index {idx:?}, within {margin} cells of the domain edge"
                )));
            }
        }
    }
    Ok(())
}

/// `max (1 + |xi|^2) |F p(t, xi)|` for `p` the backward solution driven by `e`.
pub fn fourier_bound(source: &Field) -> Result<f64> {
    check_support_margin(source, 4)?;
    let p = solve_backward(source)?.to_frequency();
    let lat = source.lattice();
    let n = lat.n_space_total();
    Ok(p.values()
        .par_chunks(n)
        .map(|s| {
            s.iter()
                .zip(lat.lambda())
                .map(|(v, l)| (1.0 + l) * v.norm())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FourierBoundReport {
    pub n_hat: f64,
    pub n_hat_refined: f64,
    pub drift: f64,
    pub stable: bool,
}

/// Evaluates [`fourier_bound`] for a profile on `lattice` and on its one-step refinement.
pub fn fourier_bound_check(
    lattice: &Arc<SpaceTimeLattice>,
    profile: &(dyn Fn(f64, &[f64]) -> f64 + Sync),
) -> Result<FourierBoundReport> {
    let fine = Arc::new(lattice.refined(2)?);
    let coarse_hat = fourier_bound(&Field::from_fn(lattice.clone(), Layout::SpaceTime, profile))?;
    let fine_hat = fourier_bound(&Field::from_fn(fine, Layout::SpaceTime, profile))?;
    let drift = if coarse_hat == 0.0 && fine_hat == 0.0 {
        0.0
    } else {
        (fine_hat - coarse_hat).abs() / coarse_hat.max(fine_hat)
    };
    Ok(FourierBoundReport {
        n_hat: coarse_hat,
        n_hat_refined: fine_hat,
        drift,
        stable: coarse_hat.is_finite() && fine_hat.is_finite() && drift <= 0.1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiemannRow {
    pub level: usize,
    pub n_space: usize,
    pub n_time: usize,
    pub norm0_error: f64,
    pub observed_order: Option<f64>,
}

/// Riemann-sum approximations of `p(s, y) = ∫_s^T ∫ G(t - s, x - y) e(t, x) dx dt`.
///
/// Level `n` partitions `[0, T] × [0, L)^d` into `n` time cells and `n` cells per
/// axis, samples `e` at right-endpoint times and cell centers, and places a heat
/// kernel there. The sums are formed in Fourier space on `reference`, where the
/// exact `p` is the backward solution, and compared in `||.||_0`.
pub fn riemann_convergence_study(
    reference: &Arc<SpaceTimeLattice>,
    profile: &(dyn Fn(f64, &[f64]) -> f64 + Sync),
    levels: &[usize],
    m: &SpectralMeasure,
) -> Result<Vec<RiemannRow>> {
    if levels.len() < 3 {
        return Err(Error::OutOfRange(format!(
            "refinement study needs at least 3 levels, got {}",
            levels.len()
        )));
    }
    if levels.iter().any(|n| *n == 0) {
        return Err(Error::OutOfRange("refinement levels must be positive".into()));
    }
    let exact = solve_backward(&Field::from_fn(reference.clone(), Layout::SpaceTime, profile))?.to_frequency();
    let errors = levels
        .iter()
        .map(|&n| {
            let approx = riemann_sum(reference, profile, n)?;
            norm0(&approx.combine(1.0, &exact, -1.0)?, m)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(levels
        .iter()
        .enumerate()
        .map(|(i, &n)| RiemannRow {
            level: i,
            n_space: n,
            n_time: n,
            norm0_error: errors[i],
            observed_order: (i > 0 && errors[i] > 0.0 && errors[i - 1] > 0.0).then(|| {
                (errors[i - 1] / errors[i]).ln() / (n as f64 / levels[i - 1] as f64).ln()
            }),
        })
        .collect())
}

fn riemann_sum(
    reference: &Arc<SpaceTimeLattice>,
    profile: &(dyn Fn(f64, &[f64]) -> f64 + Sync),
    n: usize,
) -> Result<Field> {
    let lat = reference;
    let d = lat.dim();
    let t_max = lat.t_max();
    let cell_volume: f64 = lat.extent().iter().map(|l| l / n as f64).product::<f64>() * (t_max / n as f64);
    let c_d = (2.0 * PI).powf(-(d as f64) / 2.0);
    let modes = lat.n_space_total();
    let freqs: Vec<Vec<f64>> = (0..modes).map(|j| lat.frequency(j)).collect();
    let n_cells = n.pow(d as u32);
    let centers: Vec<Vec<f64>> = (0..n_cells)
        .map(|c| {
            let mut rem = c;
            let mut x = vec![0.0; d];
            for axis in (0..d).rev() {
                x[axis] = (rem % n) as f64 * lat.extent()[axis] / n as f64 + 0.5 * lat.extent()[axis] / n as f64;
                rem /= n;
            }
            x
        })
        .collect();
    let times: Vec<f64> = (0..n).map(|m| (m + 1) as f64 * t_max / n as f64).collect();
    // A_m(xi) = c_d |Q| sum_cells e^{-i xi.x_c} e(t_m, x_c)
    let amplitudes: Vec<Vec<Complex64>> = times
        .par_iter()
        .map(|&t| {
            let samples: Vec<(usize, f64)> = centers
                .iter()
                .enumerate()
                .map(|(c, x)| (c, profile(t, x)))
                .filter(|(_, v)| *v != 0.0)
                .collect();
            freqs
                .iter()
                .map(|xi| {
                    let mut s = Complex64::new(0.0, 0.0);
                    for (c, v) in &samples {
                        let phase: f64 = xi.iter().zip(&centers[*c]).map(|(a, b)| a * b).sum();
                        s += Complex64::from_polar(*v, -phase);
                    }
                    s * (c_d * cell_volume)
                })
                .collect()
        })
        .collect();
    let mut out = Field::zeros(lat.clone(), Layout::SpaceTime, Representation::Frequency);
    let dt = lat.dt();
    out.values_mut()
        .par_chunks_mut(modes)
        .enumerate()
        .for_each(|(k, slice)| {
            let s = k as f64 * dt;
            for (m, t) in times.iter().enumerate() {
                if *t <= s + 1e-12 * t_max {
                    continue;
                }
                for (j, v) in slice.iter_mut().enumerate() {
                    *v += amplitudes[m][j] * (-(t - s) * lat.lambda()[j]).exp();
                }
            }
        });
    Ok(out)
}
