//! The reproducing kernel Hilbert space of the solution.
//!
//! An element is a triple `(h, phi1, phi)`: `phi` is the integrand, `phi1` is
//! `g(-Δ) phi` (the forcing), and `h` solves `h_t = Δh + phi1`, `h(0) = 0`.
//! Then `h(t, x) = E[M(phi) u(t, x)] = <phi, g_{t,x}>_0` and
//! `<h, h'>_{H^u} = <phi, phi'>_0`. For Bessel measures `phi1 = (1 - Δ)^{-alpha/2} phi`,
//! for `Riesz(4k)` it is `I^{2k}(J phi)`.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_field;
use crate::lattice::{
    apply_symbol_table, inner0, inner_l2, norm0, norm_l2, symbol_table, Field, Layout, Representation,
    SpaceTimeLattice, TimeRule,
};
use crate::pde::{semigroup_integral, HeatPropagator};
use crate::profiles::band_limited_integrand;
use crate::quadrature::{pairwise_sum, GaussLegendre};
use crate::spectral::{KernelFamily, SpectralMeasure};

#[derive(Debug, Clone)]
pub struct RkhsElement {
    pub h: Field,
    pub phi1: Field,
    pub phi: Field,
    pub measure: SpectralMeasure,
    /// Whether the measure is covered by a germ-Markov theorem.
    pub markov_guarantee: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeReport {
    pub probes: usize,
    /// Largest `|h_solver - h_quadrature| / max |h|` over the probes.
    pub max_relative_deviation: f64,
}

fn check_measure(f: &Field, m: &SpectralMeasure) -> Result<()> {
    if m.dim() != f.lattice().dim() {
        return Err(Error::DimensionMismatch {
            measure: m.dim(),
            lattice: f.lattice().dim(),
        });
    }
    Ok(())
}

fn density_table(lat: &SpaceTimeLattice, m: &SpectralMeasure, invert: bool) -> Result<Vec<Complex64>> {
    symbol_table(lat, |mode| {
        let g = m.density_sq(mode.lambda).value_or_zero();
        match (invert, g == 0.0) {
            (false, _) => Some(Complex64::new(g, 0.0)),
            (true, true) => None,
            (true, false) => Some(Complex64::new(1.0 / g, 0.0)),
        }
    })
}

impl RkhsElement {
    /// Builds the element with integrand `phi`.
    pub fn from_integrand(phi: &Field, m: &SpectralMeasure) -> Result<Self> {
        phi.require_layout(Layout::SpaceTime)?;
        check_measure(phi, m)?;
        let phi = phi.real_part();
        let table = density_table(phi.lattice(), m, false)?;
        let phi1 = apply_symbol_table(&phi, &table).real_part();
        let h = HeatPropagator::new(phi.lattice()).solve_forward(&phi1)?.real_part();
        Ok(Self {
            h,
            phi1,
            phi,
            measure: m.clone(),
            markov_guarantee: m.markov_guarantee(),
        })
    }

    /// Builds the element whose first component is `h` (which must vanish at `t = 0`):
    /// `phi1 = h_t - Δh` in the discrete sense, `phi = phi1 / g(-Δ)`.
    pub fn from_solution(h: &Field, m: &SpectralMeasure) -> Result<Self> {
        h.require_layout(Layout::SpaceTime)?;
        check_measure(h, m)?;
        if h.to_physical().slice(0).iter().any(|v| v.norm() != 0.0) {
            return Err(Error::SupportViolation("an RKHS element must vanish at t = 0".into()));
        }
        let h = h.real_part();
        let phi1 = HeatPropagator::new(h.lattice()).forcing_from_solution(&h)?.real_part();
        let table = density_table(h.lattice(), m, true)?;
        let phi = apply_symbol_table(&phi1, &table).real_part();
        Ok(Self {
            h,
            phi1,
            phi,
            measure: m.clone(),
            markov_guarantee: m.markov_guarantee(),
        })
    }

    pub fn lattice(&self) -> &Arc<SpaceTimeLattice> {
        self.h.lattice()
    }

    /// Scales all three components.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            h: self.h.scaled(c),
            phi1: self.phi1.scaled(c),
            phi: self.phi.scaled(c),
            measure: self.measure.clone(),
            markov_guarantee: self.markov_guarantee,
        }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        same_measure(self, other)?;
        Ok(Self {
            h: self.h.combine(a, &other.h, b)?,
            phi1: self.phi1.combine(a, &other.phi1, b)?,
            phi: self.phi.combine(a, &other.phi, b)?,
            measure: self.measure.clone(),
            markov_guarantee: self.markov_guarantee,
        })
    }

    /// `||h||_{H^u} = ||phi||_0`.
    pub fn norm(&self) -> Result<f64> {
        norm0(&self.phi, &self.measure)
    }
}

/// Deterministic probe points `(time slice, spatial index)` spread over the lattice.
pub fn probe_points(lat: &SpaceTimeLattice, count: usize) -> Vec<(usize, usize)> {
    let n = lat.n_space_total();
    (0..count)
        .map(|i| {
            let k = 1 + (i * lat.n_time()) / count.max(1);
            let j = (i * 7919 + 3 * i * i + 1) % n;
            (k.min(lat.n_time()), j)
        })
        .collect()
}

/// `h(t_n, x_j)` by direct quadrature of
/// `∫_0^t ∫ F phi(s, xi) c_d e^{i xi.x - (t - s) lambda} mu(dxi) ds`,
/// with `phi` piecewise constant on the time steps and Gauss-Legendre in `s`.
pub fn representer_quadrature(phi: &Field, m: &SpectralMeasure, k: usize, j: usize) -> Result<f64> {
    check_measure(phi, m)?;
    let lat = phi.lattice();
    let spectrum = phi.to_frequency();
    let dt = lat.dt();
    let t = lat.time(k);
    let x = lat.position(j);
    let dxi = lat.frequency_cell_volume();
    let c_d = (2.0 * PI).powf(-(lat.dim() as f64) / 2.0);
    let rule = GaussLegendre::new(8);
    let terms: Vec<f64> = (0..lat.n_space_total())
        .into_par_iter()
        .map(|mode| {
            let l = lat.lambda()[mode];
            let g = m.density_sq(l).value_or_zero();
            if g == 0.0 {
                return 0.0;
            }
            let xi = lat.frequency(mode);
            let phase: f64 = xi.iter().zip(&x).map(|(a, b)| a * b).sum();
            let pieces = (l * dt).ceil() as usize + 1;
            let mut acc = Complex64::new(0.0, 0.0);
            for step in 0..k {
                let lo = lat.time(step);
                let weight = rule.integrate(lo, lo + dt, pieces, |s| (-(t - s) * l).exp());
                acc += spectrum.slice(step)[mode] * weight;
            }
            (acc * Complex64::from_polar(c_d * g * dxi, phase)).re
        })
        .collect();
    Ok(pairwise_sum(&terms))
}

/// Compares the solver's `h` with [`representer_quadrature`] at `count` probe points.
pub fn probe_check(a: &RkhsElement, count: usize) -> Result<ProbeReport> {
    let lat = a.lattice().clone();
    let h = a.h.to_physical();
    let scale = h.max_abs();
    let n = lat.n_space_total();
    let mut worst: f64 = 0.0;
    for (k, j) in probe_points(&lat, count) {
        let direct = representer_quadrature(&a.phi, &a.measure, k, j)?;
        let solver = h.values()[k * n + j].re;
        let dev = (direct - solver).abs();
        worst = worst.max(if scale > 0.0 { dev / scale } else { dev });
    }
    Ok(ProbeReport {
        probes: count,
        max_relative_deviation: worst,
    })
}

/// Builds the element with integrand `phi` and audits `h` against direct
/// quadrature at 8 probe points (relative tolerance `1e-8`).
pub fn representer(phi: &Field, m: &SpectralMeasure) -> Result<(RkhsElement, ProbeReport)> {
    let a = RkhsElement::from_integrand(phi, m)?;
    let report = probe_check(&a, 8)?;
    if !(report.max_relative_deviation <= 1e-8) {
        return Err(Error::invariant(
            "representer probe deviation",
            format!("{:e} exceeds 1e-8", report.max_relative_deviation),
        ));
    }
    Ok((a, report))
}

fn same_measure(a: &RkhsElement, b: &RkhsElement) -> Result<()> {
    if a.measure != b.measure {
        return Err(Error::InvalidMeasure(format!(
            "measure mismatch: {} vs {}",
            a.measure, b.measure
        )));
    }
    Ok(())
}

/// `<h, h'>_{H^u} = <phi, phi'>_0`.
pub fn rkhs_inner(a: &RkhsElement, b: &RkhsElement) -> Result<f64> {
    same_measure(a, b)?;
    Ok(inner0(&a.phi, &b.phi, &a.measure)?.re)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualityReport {
    /// `<h, eta>_{L_2}` (right-endpoint rule).
    pub lhs: f64,
    /// `<phi, p>_0` with `p` the backward solution driven by `eta`.
    pub rhs: f64,
    /// `|lhs - rhs| / (||h|| ||eta||)`.
    pub gap: f64,
}

pub fn duality_check(a: &RkhsElement, eta: &Field) -> Result<DualityReport> {
    let p = HeatPropagator::new(a.lattice()).solve_backward(eta)?;
    let lhs = inner_l2(&a.h, eta, TimeRule::Right)?.re;
    let rhs = inner0(&a.phi, &p, &a.measure)?.re;
    let scale = norm_l2(&a.h, TimeRule::Right)? * norm_l2(eta, TimeRule::Right)?;
    let gap = if scale == 0.0 { (lhs - rhs).abs() } else { (lhs - rhs).abs() / scale };
    Ok(DualityReport { lhs, rhs, gap })
}

fn bessel_order(m: &SpectralMeasure) -> Result<u32> {
    if m.family() != KernelFamily::Bessel {
        return Err(Error::UnsupportedMeasure(format!("Krylov norm needs a Bessel measure, got {m}")));
    }
    let k = m.alpha() / 2.0;
    if (k - k.round()).abs() > 1e-12 || k.round() < 1.0 {
        return Err(Error::UnsupportedMeasure(format!(
            "Krylov norm needs alpha = 2k, got alpha = {}",
            m.alpha()
        )));
    }
    Ok(k.round() as u32)
}

fn weighted_time_norm(f: &Field, rule: TimeRule, weight: impl Fn(f64) -> f64) -> f64 {
    let lat = f.lattice();
    let spectrum = f.to_frequency();
    let dxi = lat.frequency_cell_volume();
    let w: Vec<f64> = lat.lambda().iter().map(|l| weight(*l) * dxi).collect();
    let slices = match rule {
        TimeRule::Left => 0..lat.n_time(),
        TimeRule::Right => 1..lat.n_slices(),
    };
    let per: Vec<f64> = slices
        .map(|k| {
            let row: Vec<f64> = spectrum.slice(k).iter().zip(&w).map(|(v, w)| v.norm_sqr() * w).collect();
            pairwise_sum(&row) * lat.dt()
        })
        .collect();
    pairwise_sum(&per).sqrt()
}

/// `||h_xx||_{L_2(H^k)} + ||phi1||_{L_2(H^k)}` for a Bessel measure of order `2k`.
pub fn krylov_norm(a: &RkhsElement) -> Result<f64> {
    let k = bessel_order(&a.measure)? as i32;
    let hxx = weighted_time_norm(&a.h, TimeRule::Right, |l| l * l * (1.0 + l).powi(k));
    let forcing = weighted_time_norm(&a.phi1, TimeRule::Left, |l| (1.0 + l).powi(k));
    Ok(hxx + forcing)
}

/// `||h|| + ||∇h|| + ||D^2 h|| + ||h_t||` in `L_2((0,T) × R^d)`, with `h_t` as a
/// forward difference.
pub fn w12_norm(a: &RkhsElement) -> Result<f64> {
    let h = &a.h;
    let base = weighted_time_norm(h, TimeRule::Right, |_| 1.0);
    let grad = weighted_time_norm(h, TimeRule::Right, |l| l);
    let hess = weighted_time_norm(h, TimeRule::Right, |l| l * l);
    let lat = h.lattice();
    let hp = h.to_physical();
    let mut dt_field = Field::zeros(lat.clone(), Layout::SpaceTime, Representation::Physical);
    for k in 0..lat.n_time() {
        let (a0, a1) = (hp.slice(k).to_vec(), hp.slice(k + 1).to_vec());
        for (v, (x, y)) in dt_field.slice_mut(k).iter_mut().zip(a0.iter().zip(&a1)) {
            *v = (y - x) / lat.dt();
        }
    }
    Ok(base + grad + hess + norm_l2(&dt_field, TimeRule::Left)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormEquivalenceReport {
    pub samples: usize,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub spread: f64,
}

/// Ratio `krylov_norm / ||.||_{H^u}` over random band-limited integrands.
pub fn norm_equivalence_study(
    lattice: &Arc<SpaceTimeLattice>,
    m: &SpectralMeasure,
    samples: usize,
    seed: u64,
) -> Result<NormEquivalenceReport> {
    bessel_order(m)?;
    if samples < 100 {
        return Err(Error::OutOfRange(format!("norm equivalence needs at least 100 samples, got {samples}")));
    }
    let ratios = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let phi = band_limited_integrand(lattice, 0.5, seed.wrapping_add(i));
            let a = RkhsElement::from_integrand(&phi, m)?;
            Ok(krylov_norm(&a)? / a.norm()?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let ratio_min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio_max = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(NormEquivalenceReport {
        samples,
        ratio_min,
        ratio_max,
        spread: ratio_max / ratio_min,
    })
}

/// Time weighting of a discretized heat-kernel column `g_{t,x}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnWeighting {
    /// `<phi, g_{t,x}>_0` reproduces the solver's `h(t, x)` exactly.
    Duhamel,
    /// `<g_{t,x}, g_{s,y}>_0` equals the covariance `R` exactly.
    Isometric,
}

/// `F g_{t_n, x_j}(t_k, xi) = c_d e^{-i xi.x_j} e^{-(n-1-k) lambda dt} gamma` for `k < n`.
pub fn heat_kernel_column(lat: &Arc<SpaceTimeLattice>, n: usize, j: usize, weighting: ColumnWeighting) -> Result<Field> {
    if n > lat.n_time() || j >= lat.n_space_total() {
        return Err(Error::OutOfRange(format!("column ({n}, {j}) outside the lattice")));
    }
    let dt = lat.dt();
    let c_d = (2.0 * PI).powf(-(lat.dim() as f64) / 2.0);
    let x = lat.position(j);
    let modes = lat.n_space_total();
    let mut f = Field::zeros(lat.clone(), Layout::SpaceTime, Representation::Frequency);
    for mode in 0..modes {
        let l = lat.lambda()[mode];
        let a = (-l * dt).exp();
        let gamma = match weighting {
            ColumnWeighting::Duhamel => semigroup_integral(l, dt) / dt,
            ColumnWeighting::Isometric => (semigroup_integral(2.0 * l, dt) / dt).sqrt(),
        };
        let phase: f64 = lat.frequency(mode).iter().zip(&x).map(|(a, b)| a * b).sum();
        let base = Complex64::from_polar(c_d * gamma, -phase);
        let mut decay = 1.0;
        for k in (0..n).rev() {
            f.slice_mut(k)[mode] = base * decay;
            decay *= a;
        }
    }
    Ok(f)
}

#[derive(Debug, Serialize, Deserialize)]
struct ElementManifest {
    measure: SpectralMeasure,
    markov_guarantee: bool,
    files: [String; 3],
}

/// Writes `h.field`, `phi1.field`, `phi.field` and `element.json` into `dir`.
pub fn write_element(dir: &Path, a: &RkhsElement) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_field(dir.join("h.field"), &a.h)?;
    write_field(dir.join("phi1.field"), &a.phi1)?;
    write_field(dir.join("phi.field"), &a.phi)?;
    let manifest = ElementManifest {
        measure: a.measure.clone(),
        markov_guarantee: a.markov_guarantee,
        files: ["h.field".into(), "phi1.field".into(), "phi.field".into()],
    };
    fs::write(dir.join("element.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracops::operator_j;
    use crate::profiles::band_limited_field;

    fn lat(l: f64, n: usize, nt: usize) -> Arc<SpaceTimeLattice> {
        Arc::new(SpaceTimeLattice::new_1d(l, n, 1.0, nt).unwrap())
    }

    fn sine_phi(l: &Arc<SpaceTimeLattice>) -> Field {
        Field::from_fn(l.clone(), Layout::SpaceTime, |_, x| x[0].sin())
    }

    #[test]
    fn single_mode_oracles() {
        let l = lat(2.0 * PI, 32, 64);
        for (m, factor) in [(SpectralMeasure::white(1), 1.0), (SpectralMeasure::bessel(2.0, 1).unwrap(), 0.5)] {
            let (a, report) = representer(&sine_phi(&l), &m).unwrap();
            assert!(report.max_relative_deviation <= 1e-8);
            let h = a.h.real_values();
            for k in 0..l.n_slices() {
                let t = l.time(k);
                for j in 0..32 {
                    let x = l.position(j)[0];
                    let expected = factor * (1.0 - (-t).exp()) * x.sin();
                    assert!((h[k * 32 + j] - expected).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn zero_integrand() {
        let l = lat(8.0, 16, 8);
        let z = Field::zeros(l, Layout::SpaceTime, Representation::Physical);
        let (a, _) = representer(&z, &SpectralMeasure::bessel(2.0, 1).unwrap()).unwrap();
        assert_eq!(a.h.max_abs(), 0.0);
    }

    #[test]
    fn flags_measures_without_theorem() {
        let l = lat(8.0, 16, 8);
        let phi = band_limited_integrand(&l, 0.5, 1);
        let (a, _) = representer(&phi, &SpectralMeasure::bessel(3.0, 1).unwrap()).unwrap();
        assert!(!a.markov_guarantee);
        let (b, _) = representer(&phi, &SpectralMeasure::bessel(2.0, 1).unwrap()).unwrap();
        assert!(b.markov_guarantee);
        assert!(a.h.slice(0).iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn reproducing_identity_with_columns() {
        let l = lat(8.0, 16, 32);
        let m = SpectralMeasure::bessel(2.0, 1).unwrap();
        let a = RkhsElement::from_integrand(&band_limited_integrand(&l, 0.5, 4), &m).unwrap();
        let h = a.h.real_values();
        let scale = a.h.max_abs();
        for (k, j) in probe_points(&l, 8) {
            let col = heat_kernel_column(&l, k, j, ColumnWeighting::Duhamel).unwrap();
            let b = RkhsElement::from_integrand(&col.to_physical(), &m).unwrap();
            let v = rkhs_inner(&a, &b).unwrap();
            assert!((v - h[k * 16 + j]).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn inner_product_algebra() {
        let l = lat(8.0, 32, 64);
        let m = SpectralMeasure::bessel(2.0, 1).unwrap();
        let a = RkhsElement::from_integrand(&band_limited_integrand(&l, 0.5, 1), &m).unwrap();
        let b = RkhsElement::from_integrand(&band_limited_integrand(&l, 0.5, 2), &m).unwrap();
        let c = RkhsElement::from_integrand(&band_limited_integrand(&l, 0.5, 3), &m).unwrap();
        let aa = rkhs_inner(&a, &a).unwrap();
        assert!((aa - a.norm().unwrap().powi(2)).abs() <= 1e-12 * aa);
        let lin = rkhs_inner(&a.combine(2.0, &b, -0.5).unwrap(), &c).unwrap();
        let sep = 2.0 * rkhs_inner(&a, &c).unwrap() - 0.5 * rkhs_inner(&b, &c).unwrap();
        let scale = a.norm().unwrap().max(b.norm().unwrap()) * c.norm().unwrap();
        assert!((lin - sep).abs() <= 1e-12 * scale);
        // Against phi1 weighted by (1 + |xi|^2)^{alpha/2}.
        let (fa, fb) = (a.phi1.to_frequency(), b.phi1.to_frequency());
        let dxi = l.frequency_cell_volume();
        let mut direct = 0.0;
        for k in 0..l.n_time() {
            for (j, (x, y)) in fa.slice(k).iter().zip(fb.slice(k)).enumerate() {
                direct += (x * y.conj()).re * (1.0 + l.lambda()[j]) * dxi * l.dt();
            }
        }
        let ab = rkhs_inner(&a, &b).unwrap();
        assert!((ab - direct).abs() <= 1e-12 * scale);
        let other = RkhsElement::from_integrand(&band_limited_integrand(&l, 0.5, 1), &SpectralMeasure::white(1)).unwrap();
        assert!(rkhs_inner(&a, &other).is_err());
    }

    #[test]
    fn representer_is_linear() {
        let l = lat(8.0, 16, 16);
        let m = SpectralMeasure::bessel(2.0, 1).unwrap();
        let p = band_limited_integrand(&l, 0.5, 1);
        let q = band_limited_integrand(&l, 0.5, 2);
        let a = RkhsElement::from_integrand(&p.combine(3.0, &q, -1.0).unwrap(), &m).unwrap();
        let b = RkhsElement::from_integrand(&p, &m).unwrap();
        let c = RkhsElement::from_integrand(&q, &m).unwrap();
        let d = b.combine(3.0, &c, -1.0).unwrap();
        let diff = a.h.combine(1.0, &d.h, -1.0).unwrap().max_abs();
        assert!(diff <= 1e-12 * a.h.max_abs());
    }

    #[test]
    fn duality_gaps() {
        let l = lat(8.0, 32, 64);
        for m in [SpectralMeasure::bessel(2.0, 1).unwrap(), SpectralMeasure::white(1)] {
            let a = RkhsElement::from_integrand(&band_limited_integrand(&l, 0.5, 7), &m).unwrap();
            let eta = band_limited_field(&l, Layout::SpaceTime, 0.5, 8);
            assert!(duality_check(&a, &eta).unwrap().gap <= 1e-8);
            let z = Field::zeros(l.clone(), Layout::SpaceTime, Representation::Physical);
            assert_eq!(duality_check(&a, &z).unwrap().gap, 0.0);
        }
    }

    #[test]
    fn krylov_norm_examples() {
        let l = lat(2.0 * PI, 32, 64);
        let m = SpectralMeasure::bessel(2.0, 1).unwrap();
        let z = RkhsElement::from_integrand(&Field::zeros(l.clone(), Layout::SpaceTime, Representation::Physical), &m).unwrap();
        assert_eq!(krylov_norm(&z).unwrap(), 0.0);

        // Single mode sin(x): |F h|^2 summed over +-1 with lambda = 1, k = 1.
        let a = RkhsElement::from_integrand(&sine_phi(&l), &m).unwrap();
        let fh = a.h.to_frequency();
        let fp = a.phi1.to_frequency();
        let dxi = l.frequency_cell_volume();
        let (mut sh, mut sp) = (0.0, 0.0);
        for k in 1..l.n_slices() {
            sh += 2.0 * fh.slice(k)[1].norm_sqr() * 2.0 * dxi * l.dt();
        }
        for k in 0..l.n_time() {
            sp += 2.0 * fp.slice(k)[1].norm_sqr() * 2.0 * dxi * l.dt();
        }
        assert!((krylov_norm(&a).unwrap() - (sh.sqrt() + sp.sqrt())).abs() < 1e-10);

        assert!(krylov_norm(&RkhsElement::from_integrand(&sine_phi(&l), &SpectralMeasure::white(1)).unwrap()).is_err());
        assert!(w12_norm(&a).unwrap() > 0.0);
    }

    #[test]
    fn krylov_triangle_inequality() {
        let l = lat(8.0, 32, 32);
        let m = SpectralMeasure::bessel(2.0, 1).unwrap();
        for s in 0..5 {
            let a = RkhsElement::from_integrand(&band_limited_integrand(&l, 0.5, s), &m).unwrap();
            let b = RkhsElement::from_integrand(&band_limited_integrand(&l, 0.5, 50 + s), &m).unwrap();
            let sum = a.combine(1.0, &b, 1.0).unwrap();
            assert!(krylov_norm(&sum).unwrap() <= krylov_norm(&a).unwrap() + krylov_norm(&b).unwrap() + 1e-12);
        }
    }

    #[test]
    fn norm_equivalence_bounded_and_scale_free() {
        let l = lat(8.0, 32, 64);
        let m = SpectralMeasure::bessel(2.0, 1).unwrap();
        let r = norm_equivalence_study(&l, &m, 200, 17).unwrap();
        assert!(r.spread <= 20.0, "{r:?}");
        let a = RkhsElement::from_integrand(&band_limited_integrand(&l, 0.5, 3), &m).unwrap();
        let s = a.scaled(-7.5);
        let r1 = krylov_norm(&a).unwrap() / a.norm().unwrap();
        let r2 = krylov_norm(&s).unwrap() / s.norm().unwrap();
        assert!((r1 - r2).abs() < 1e-12 * r1);
        assert!(norm_equivalence_study(&l, &SpectralMeasure::white(1), 200, 1).is_err());
    }

    #[test]
    fn riesz_chain_isometry() {
        let l = Arc::new(SpaceTimeLattice::new_1d(8.0, 32, 1.0, 16).unwrap());
        let m = SpectralMeasure::riesz_formal(4.0, 1).unwrap();
        let a = RkhsElement::from_integrand(&band_limited_integrand(&l, 0.5, 9), &m).unwrap();
        let j = operator_j(&a.phi, &m).unwrap();
        let lhs = a.norm().unwrap();
        assert!((lhs - norm_l2(&j, TimeRule::Left).unwrap()).abs() <= 1e-10 * lhs);
        // phi1 = I^{2k}(J phi).
        let chain = crate::fracops::apply(crate::fracops::OperatorSpec::RieszPotential(2.0), &j).unwrap();
        assert!(chain.combine(1.0, &a.phi1, -1.0).unwrap().max_abs() <= 1e-10 * a.phi1.max_abs());
    }

    #[test]
    fn from_solution_round_trip() {
        let l = lat(8.0, 32, 32);
        let m = SpectralMeasure::bessel(2.0, 1).unwrap();
        let a = RkhsElement::from_integrand(&band_limited_integrand(&l, 0.5, 5), &m).unwrap();
        let b = RkhsElement::from_solution(&a.h, &m).unwrap();
        assert!(b.phi.combine(1.0, &a.phi, -1.0).unwrap().max_abs() <= 1e-9 * a.phi.max_abs());
    }
}
