//! Radial spectral measures `mu(dxi) = g(|xi|^2) dxi` and their covariance kernels.
//!
//! The kernel paired with a measure is `f(x) = (2 pi)^{-d} ∫ e^{i xi.x} g(|xi|^2) dxi`,
//! the normalization under which `<phi, psi>_0` equals
//! `∫∫ phi(t,x) f(x-y) psi(t,y) dx dy dt` for the transform in [`crate::lattice`]
//! (white noise then has `f = delta`).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Field, Layout, Representation, SpaceTimeLattice};
use crate::quadrature::{radial_shell_integral, unit_sphere_area};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    White,
    Riesz,
    Bessel,
    HeatKernel,
}

/// Serialized form `{family, alpha, dim}`; `formal` lifts the Riesz range check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub family: KernelFamily,
    #[serde(default)]
    pub alpha: f64,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub formal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureSpec", into = "MeasureSpec")]
pub struct SpectralMeasure {
    family: KernelFamily,
    alpha: f64,
    dim: usize,
    formal: bool,
}

impl TryFrom<MeasureSpec> for SpectralMeasure {
    type Error = Error;

    fn try_from(s: MeasureSpec) -> Result<Self> {
        match (s.family, s.formal) {
            (KernelFamily::White, _) => Ok(Self::white(s.dim)),
            (KernelFamily::Riesz, true) => Self::riesz_formal(s.alpha, s.dim),
            (KernelFamily::Riesz, false) => Self::riesz(s.alpha, s.dim),
            (KernelFamily::Bessel, _) => Self::bessel(s.alpha, s.dim),
            (KernelFamily::HeatKernel, _) => Self::heat_kernel(s.alpha, s.dim),
        }
        .and_then(|m| if s.dim == 0 { Err(Error::InvalidMeasure("dimension must be positive".into())) } else { Ok(m) })
    }
}

impl From<SpectralMeasure> for MeasureSpec {
    fn from(m: SpectralMeasure) -> Self {
        MeasureSpec {
            family: m.family,
            alpha: m.alpha,
            dim: m.dim,
            formal: m.formal,
        }
    }
}

/// Value of `g`, or the marker for the removed Riesz zero mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Density {
    Value(f64),
    ZeroMode,
}

impl Density {
    pub fn value_or_zero(self) -> f64 {
        match self {
            Density::Value(v) => v,
            Density::ZeroMode => 0.0,
        }
    }
}

impl SpectralMeasure {
    pub fn white(dim: usize) -> Self {
        Self {
            family: KernelFamily::White,
            alpha: 0.0,
            dim,
            formal: false,
        }
    }

    /// `|xi|^{-alpha}` with `0 < alpha < d`.
    pub fn riesz(alpha: f64, dim: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < dim as f64) {
            return Err(Error::InvalidMeasure(format!(
                "Riesz order must satisfy 0 < alpha < d, got alpha = {alpha}, d = {dim}"
            )));
        }
        Ok(Self {
            family: KernelFamily::Riesz,
            alpha,
            dim,
            formal: false,
        })
    }

    /// Riesz symbol without the `alpha < d` requirement (symbol-level experiments
    /// on low-dimensional lattices). Carries no theorem-level guarantees.
    pub fn riesz_formal(alpha: f64, dim: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidMeasure(format!("Riesz order must be positive, got {alpha}")));
        }
        Ok(Self {
            family: KernelFamily::Riesz,
            alpha,
            dim,
            formal: true,
        })
    }

    /// `(1 + |xi|^2)^{-alpha/2}`.
    pub fn bessel(alpha: f64, dim: usize) -> Result<Self> {
        Self::positive_order(KernelFamily::Bessel, alpha, dim)
    }

    /// `exp(-4 pi^2 alpha |xi|^2)`.
    pub fn heat_kernel(alpha: f64, dim: usize) -> Result<Self> {
        Self::positive_order(KernelFamily::HeatKernel, alpha, dim)
    }

    fn positive_order(family: KernelFamily, alpha: f64, dim: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidMeasure(format!("{family:?} order must be positive, got {alpha}")));
        }
        Ok(Self {
            family,
            alpha,
            dim,
            formal: false,
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn is_formal(&self) -> bool {
        self.formal
    }

    /// `g` at squared radius `r2`.
    pub fn density_sq(&self, r2: f64) -> Density {
        match self.family {
            KernelFamily::White => Density::Value(1.0),
            KernelFamily::Riesz if r2 == 0.0 => Density::ZeroMode,
            KernelFamily::Riesz => Density::Value(r2.powf(-0.5 * self.alpha)),
            KernelFamily::Bessel => Density::Value((1.0 + r2).powf(-0.5 * self.alpha)),
            KernelFamily::HeatKernel => Density::Value((-4.0 * PI * PI * self.alpha * r2).exp()),
        }
    }

    /// `g(|xi|^2)` at a frequency vector.
    pub fn density(&self, xi: &[f64]) -> Result<Density> {
        if xi.len() != self.dim {
            return Err(Error::DimensionMismatch {
                measure: self.dim,
                lattice: xi.len(),
            });
        }
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutOfRange("frequency must be finite".into()));
        }
        Ok(self.density_sq(xi.iter().map(|v| v * v).sum()))
    }

    /// Whether `∫ (1 + |xi|^2)^{-1} mu(dxi) < ∞`.
    pub fn dalang_condition(&self) -> bool {
        let d = self.dim as f64;
        match self.family {
            KernelFamily::White => self.dim <= 1,
            KernelFamily::Riesz | KernelFamily::Bessel => self.alpha > d - 2.0,
            KernelFamily::HeatKernel => true,
        }
    }

    /// Refuses measures for which the equation has no process solution.
    pub fn require_dalang(&self) -> Result<()> {
        if self.dalang_condition() {
            Ok(())
        } else {
            Err(Error::DalangConditionFails {
                measure: self.to_string(),
            })
        }
    }

    /// Whether `∫ g dxi` is finite (otherwise the lattice kernel is a periodized,
    /// truncated object whose values depend on the resolution).
    pub fn density_integrable(&self) -> bool {
        match self.family {
            KernelFamily::White | KernelFamily::Riesz => false,
            KernelFamily::Bessel => self.alpha > self.dim as f64,
            KernelFamily::HeatKernel => true,
        }
    }

    /// Bessel of even order above `d - 2`, or Riesz of order `4k` in `d = 4k + 1`.
    pub fn markov_guarantee(&self) -> bool {
        let d = self.dim as f64;
        let is_multiple = |x: f64, m: f64| x > 0.0 && ((x / m) - (x / m).round()).abs() < 1e-12;
        match self.family {
            KernelFamily::Bessel => is_multiple(self.alpha, 2.0) && self.alpha > d - 2.0,
            KernelFamily::Riesz => {
                !self.formal && is_multiple(self.alpha, 4.0) && (d - self.alpha - 1.0).abs() < 1e-12
            }
            _ => false,
        }
    }

    /// Exponent `p` with `g(r^2) / (1 + r^2) ~ r^{-(d + p)}` at infinity; `None` for Gaussian decay.
    fn tail_power(&self) -> Option<f64> {
        let d = self.dim as f64;
        match self.family {
            KernelFamily::White => Some(2.0 - d),
            KernelFamily::Riesz | KernelFamily::Bessel => Some(self.alpha + 2.0 - d),
            KernelFamily::HeatKernel => None,
        }
    }

    /// `∫_{|xi| > cutoff} g(|xi|^2) (1 + |xi|^2)^{-1} dxi` (infinite when the Dalang
    /// condition fails).
    pub fn tail_estimate(&self, cutoff: f64) -> f64 {
        if !self.dalang_condition() {
            return f64::INFINITY;
        }
        let cutoff = cutoff.max(1e-12);
        let integrand = |r: f64| self.density_sq(r * r).value_or_zero() / (1.0 + r * r);
        match self.tail_power() {
            None => {
                let a = 4.0 * PI * PI * self.alpha;
                let r1 = (cutoff * 2.0).max((800.0 / a).sqrt());
                if r1 <= cutoff {
                    return 0.0;
                }
                radial_shell_integral(self.dim, cutoff, r1, integrand)
            }
            Some(p) => {
                let span = (40.0 / p).min(200.0);
                let r1 = cutoff * span.exp();
                let body = radial_shell_integral(self.dim, cutoff, r1, integrand);
                // Beyond r1 the integrand is r^{-(d+p)} to relative O(r1^{-2}).
                let rest = unit_sphere_area(self.dim) * r1.powf(-p) / p;
                body + rest
            }
        }
    }

    /// Partial integrals `∫_{|xi| < R} g (1 + |xi|^2)^{-1} dxi` for increasing radii;
    /// they stay bounded iff the Dalang condition holds.
    pub fn dalang_partial_integrals(&self, radii: &[f64]) -> Vec<f64> {
        let r0 = 1e-8;
        let integrand = |r: f64| self.density_sq(r * r).value_or_zero() / (1.0 + r * r);
        let mut acc = 0.0;
        let mut last = r0;
        radii
            .iter()
            .map(|r| {
                if *r > last {
                    acc += radial_shell_integral(self.dim, last, *r, integrand);
                    last = *r;
                }
                acc
            })
            .collect()
    }
}

impl fmt::Display for SpectralMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            KernelFamily::White => write!(f, "White(d={})", self.dim),
            KernelFamily::Riesz if self.formal => {
                write!(f, "Riesz(alpha={}, d={}, formal)", self.alpha, self.dim)
            }
            family => write!(f, "{family:?}(alpha={}, d={})", self.alpha, self.dim),
        }
    }
}

/// Lattice samples of the covariance kernel together with diagnostics.
#[derive(Debug, Clone)]
pub struct KernelSample {
    /// `f(x_j)`, real, space-only, physical.
    pub values: Field,
    /// Periodized closed form, for the heat-kernel family only.
    pub closed_form: Option<Field>,
    /// Resolution caveats (non-integrable density, removed zero mode).
    pub caveats: Vec<String>,
}

/// Samples `f` on the lattice through the inverse transform of the density on the
/// frequency grid.
pub fn kernel_eval(m: &SpectralMeasure, lattice: &Arc<SpaceTimeLattice>) -> Result<KernelSample> {
    if m.dim() != lattice.dim() {
        return Err(Error::DimensionMismatch {
            measure: m.dim(),
            lattice: lattice.dim(),
        });
    }
    let c = (2.0 * PI).powf(-(lattice.dim() as f64) / 2.0);
    let spectrum: Vec<Complex64> = lattice
        .lambda()
        .iter()
        .map(|l| Complex64::new(c * m.density_sq(*l).value_or_zero(), 0.0))
        .collect();
    let mut values = Field::from_values(lattice.clone(), Layout::SpaceOnly, Representation::Frequency, spectrum)?
        .to_physical();
    values.values_mut().iter_mut().for_each(|v| v.im = 0.0);

    let mut caveats = Vec::new();
    if !m.density_integrable() {
        caveats.push(format!(
            "density of {m} is not integrable: lattice kernel is periodized and truncated at the Nyquist frequency"
        ));
    }
    if m.family() == KernelFamily::Riesz {
        caveats.push("Riesz zero mode removed: kernel is defined up to an additive constant".into());
    }

    let closed_form = (m.family() == KernelFamily::HeatKernel).then(|| {
        let a = 4.0 * PI * PI * m.alpha();
        let d = lattice.dim() as f64;
        let norm = (4.0 * PI * a).powf(-d / 2.0);
        Field::from_fn(lattice.clone(), Layout::SpaceOnly, |_, x| {
            // Sum over nearby periodic images per axis.
            x.iter()
                .enumerate()
                .map(|(axis, xi)| {
                    let l = lattice.extent()[axis];
                    (-3..=3)
                        .map(|k| {
                            let y = xi - k as f64 * l;
                            (-y * y / (4.0 * a)).exp()
                        })
                        .sum::<f64>()
                })
                .product::<f64>()
                * norm
        })
    });

    Ok(KernelSample {
        values,
        closed_form,
        caveats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn density_examples() {
        let b = SpectralMeasure::bessel(2.0, 1).unwrap();
        assert_eq!(b.density(&[0.0]).unwrap(), Density::Value(1.0));
        let w = SpectralMeasure::white(2);
        assert_eq!(w.density(&[3.0, -7.0]).unwrap(), Density::Value(1.0));
        let b4 = SpectralMeasure::bessel(4.0, 3).unwrap();
        let Density::Value(v) = b4.density(&[1.0, 0.0, 0.0]).unwrap() else { panic!() };
        assert!((v - 0.25).abs() < 1e-15);
        let r = SpectralMeasure::riesz(0.5, 1).unwrap();
        assert_eq!(r.density(&[0.0]).unwrap(), Density::ZeroMode);
    }

    #[test]
    fn validity() {
        assert!(SpectralMeasure::riesz(1.0, 1).is_err());
        assert!(SpectralMeasure::riesz(0.0, 3).is_err());
        assert!(SpectralMeasure::riesz_formal(4.0, 1).is_ok());
        assert!(SpectralMeasure::bessel(-1.0, 1).is_err());
        assert!(SpectralMeasure::heat_kernel(0.0, 1).is_err());
    }

    #[test]
    fn dalang_examples() {
        assert!(SpectralMeasure::riesz(4.0, 5).unwrap().dalang_condition());
        assert!(SpectralMeasure::bessel(2.0, 1).unwrap().dalang_condition());
        assert!(!SpectralMeasure::riesz(1.0, 5).unwrap().dalang_condition());
        assert!(SpectralMeasure::white(1).dalang_condition());
        assert!(!SpectralMeasure::white(2).dalang_condition());
        assert!(SpectralMeasure::heat_kernel(0.1, 7).unwrap().dalang_condition());
    }

    #[test]
    fn markov_scope() {
        assert!(SpectralMeasure::bessel(2.0, 1).unwrap().markov_guarantee());
        assert!(!SpectralMeasure::bessel(3.0, 1).unwrap().markov_guarantee());
        assert!(SpectralMeasure::riesz(4.0, 5).unwrap().markov_guarantee());
        assert!(!SpectralMeasure::riesz_formal(4.0, 1).unwrap().markov_guarantee());
        assert!(!SpectralMeasure::white(1).markov_guarantee());
    }

    #[test]
    fn partial_integrals_track_decision() {
        let radii: Vec<f64> = (0..8).map(|k| 10f64.powi(k)).collect();
        let grows = |m: SpectralMeasure| {
            let p = m.dalang_partial_integrals(&radii);
            // Increment over the last decade relative to the running total.
            (p[7] - p[6]) / p[6]
        };
        assert!(grows(SpectralMeasure::bessel(2.0, 1).unwrap()) < 1e-6);
        assert!(grows(SpectralMeasure::riesz(3.5, 5).unwrap()) < 1e-2);
        assert!(grows(SpectralMeasure::riesz(1.0, 5).unwrap()) > 0.5);
        assert!(grows(SpectralMeasure::white(3)) > 0.5);
        assert!(grows(SpectralMeasure::heat_kernel(0.01, 3).unwrap()) < 1e-12);
    }

    #[test]
    fn white_tail_closed_form() {
        let m = SpectralMeasure::white(1);
        let cut = 5.0;
        let exact = 2.0 * (PI / 2.0 - f64::atan(cut));
        assert!((m.tail_estimate(cut) - exact).abs() < 1e-8 * exact);
        assert!(SpectralMeasure::white(2).tail_estimate(cut).is_infinite());
    }

    #[test]
    fn heat_kernel_matches_closed_form() {
        let lat = Arc::new(SpaceTimeLattice::new_1d(16.0, 256, 1.0, 1).unwrap());
        let m = SpectralMeasure::heat_kernel(1.0 / (16.0 * PI * PI), 1).unwrap();
        let k = kernel_eval(&m, &lat).unwrap();
        let spectral = k.values.real_values();
        let closed = k.closed_form.unwrap().real_values();
        let peak = closed.iter().cloned().fold(0.0, f64::max);
        assert!((peak - 1.0 / PI.sqrt()).abs() < 1e-12);
        let err = spectral
            .iter()
            .zip(&closed)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err / peak <= 1e-6, "relative error {err}");
    }

    #[test]
    fn bessel_two_kernel_is_exponential() {
        let lat = Arc::new(SpaceTimeLattice::new_1d(40.0, 2048, 1.0, 1).unwrap());
        let m = SpectralMeasure::bessel(2.0, 1).unwrap();
        let f = kernel_eval(&m, &lat).unwrap().values.real_values();
        let dx = lat.spacing(0);
        let x = |j: usize| j as f64 * dx;
        for (j1, j2) in [(10usize, 60usize), (25, 100), (50, 150)] {
            let ratio = f[j1] / f[j2];
            let expected = (-x(j1) + x(j2)).exp();
            assert!((ratio / expected - 1.0).abs() < 1e-3, "{ratio} vs {expected}");
        }
    }

    #[test]
    fn serde_round_trip_validates() {
        let m = SpectralMeasure::bessel(2.0, 1).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<SpectralMeasure>(&s).unwrap(), m);
        assert!(serde_json::from_str::<SpectralMeasure>(r#"{"family":"riesz","alpha":2.0,"dim":1}"#).is_err());
        let f: SpectralMeasure =
            serde_json::from_str(r#"{"family":"riesz","alpha":4.0,"dim":1,"formal":true}"#).unwrap();
        assert!(f.is_formal());
    }

    fn any_measure() -> impl Strategy<Value = SpectralMeasure> {
        (0usize..4, 0.1f64..3.0, 1usize..4).prop_map(|(fam, alpha, dim)| match fam {
            0 => SpectralMeasure::white(dim),
            1 => SpectralMeasure::riesz_formal(alpha, dim).unwrap(),
            2 => SpectralMeasure::bessel(alpha, dim).unwrap(),
            _ => SpectralMeasure::heat_kernel(alpha * 0.01, dim).unwrap(),
        })
    }

    proptest! {
        #[test]
        fn density_is_nonnegative_even_and_radial(m in any_measure(), xs in prop::collection::vec(-50.0f64..50.0, 3)) {
            let xi = &xs[..m.dim()];
            let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
            let a = m.density(xi).unwrap();
            prop_assert_eq!(a, m.density(&neg).unwrap());
            prop_assert!(a.value_or_zero() >= 0.0);
            let mut rot = xi.to_vec();
            rot.reverse();
            let b = m.density(&rot).unwrap().value_or_zero();
            prop_assert!((a.value_or_zero() - b).abs() <= 1e-11 * b);
        }

        #[test]
        fn kernel_is_real_and_even(m in any_measure()) {
            let n = if m.dim() == 1 { vec![64] } else { vec![8; m.dim()] };
            let lat = Arc::new(SpaceTimeLattice::new(vec![6.0; m.dim()], n, 1.0, 1).unwrap());
            let k = kernel_eval(&m, &lat).unwrap();
            let raw = {
                let c = (2.0 * PI).powf(-(lat.dim() as f64) / 2.0);
                let spec: Vec<Complex64> = lat.lambda().iter().map(|l| Complex64::new(c * m.density_sq(*l).value_or_zero(), 0.0)).collect();
                Field::from_values(lat.clone(), Layout::SpaceOnly, Representation::Frequency, spec).unwrap().to_physical()
            };
            prop_assert!(raw.imaginary_ratio() <= 1e-12);
            let v = k.values.real_values();
            let scale = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
            for j in 0..lat.n_space_total() {
                prop_assert!((v[j] - v[lat.mirror(j)]).abs() <= 1e-12 * scale);
            }
        }
    }
}
