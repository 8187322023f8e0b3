//! Fourier-multiplier operators: Bessel and Riesz potentials, Riesz derivatives,
//! integer powers of `-Δ`, and the operator `J` of the Riesz pipeline.
//!
//! Every symbol is a function of the lattice's `-Δ` symbol `lambda`
//! (`|xi|^2` by default), so `|xi|^beta` is evaluated as `lambda^{beta/2}`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{apply_symbol_table, norm_l2, mixed_norm_l2q, symbol_table, Field, Layout, TimeRule};
use crate::quadrature::pairwise_sum;
use crate::spectral::{KernelFamily, SpectralMeasure};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatorSpec {
    /// `(1 + |xi|^2)^{-gamma/2}`; negative `gamma` gives `(1 - Δ)^{|gamma|/2}`.
    BesselPotential(f64),
    /// `I^beta`, symbol `|xi|^{-beta}` with the zero mode set to 0.
    RieszPotential(f64),
    /// `D^beta`, symbol `|xi|^beta`.
    RieszDerivative(f64),
    /// `(-Δ)^k`.
    LaplacianPower(u32),
    Identity,
}

impl OperatorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::OutOfRange(format!("{what} must be positive and finite, got {v}")));
        match *self {
            OperatorSpec::BesselPotential(g) if !g.is_finite() => {
                Err(Error::OutOfRange(format!("Bessel order must be finite, got {g}")))
            }
            OperatorSpec::RieszPotential(b) if !(b > 0.0 && b.is_finite()) => bad("Riesz potential order", b),
            OperatorSpec::RieszDerivative(b) if !(b > 0.0 && b.is_finite()) => bad("Riesz derivative order", b),
            _ => Ok(()),
        }
    }

    /// Checks the `0 < beta < d/2` range needed for `I^beta` to act on `L_2`.
    pub fn validate_l2_range(&self, dim: usize) -> Result<()> {
        self.validate()?;
        if let OperatorSpec::RieszPotential(b) = *self {
            if b >= dim as f64 / 2.0 {
                return Err(Error::OutOfRange(format!(
                    "Riesz potential on L_2 needs 0 < beta < d/2 = {}, got {b}",
                    dim as f64 / 2.0
                )));
            }
        }
        Ok(())
    }

    /// Symbol at the mode with `-Δ` symbol `lambda`; `None` marks the removed zero mode.
    pub fn symbol(&self, lambda: f64) -> Option<f64> {
        match *self {
            OperatorSpec::BesselPotential(g) => Some((1.0 + lambda).powf(-0.5 * g)),
            OperatorSpec::RieszPotential(_) if lambda == 0.0 => None,
            OperatorSpec::RieszPotential(b) => Some(lambda.powf(-0.5 * b)),
            OperatorSpec::RieszDerivative(b) => Some(lambda.powf(0.5 * b)),
            OperatorSpec::LaplacianPower(k) => Some(lambda.powi(k as i32)),
            OperatorSpec::Identity => Some(1.0),
        }
    }
}

/// Applies one operator slice-wise.
pub fn apply(op: OperatorSpec, f: &Field) -> Result<Field> {
    apply_chain(&[op], f)
}

/// Applies the product of several operators as a single multiplier.
pub fn apply_chain(ops: &[OperatorSpec], f: &Field) -> Result<Field> {
    for op in ops {
        op.validate()?;
    }
    let table = symbol_table(f.lattice(), |m| {
        ops.iter()
            .try_fold(1.0, |acc, op| op.symbol(m.lambda).map(|s| acc * s))
            .map(|v| Complex64::new(v, 0.0))
    })?;
    Ok(apply_symbol_table(f, &table))
}

/// Half of the Riesz order `alpha = 4k`, i.e. `k`, if `alpha` is a positive multiple of 4.
pub fn riesz_chain_order(m: &SpectralMeasure) -> Result<u32> {
    if m.family() != KernelFamily::Riesz {
        return Err(Error::UnsupportedMeasure(format!("operator J needs a Riesz measure, got {m}")));
    }
    let k = m.alpha() / 4.0;
    if (k - k.round()).abs() > 1e-12 || k.round() < 1.0 {
        return Err(Error::UnsupportedMeasure(format!(
            "operator J needs alpha = 4k for a positive integer k, got alpha = {}",
            m.alpha()
        )));
    }
    let k = k.round() as u32;
    // 2 < d / (2k) is what makes I^{2k} act on L_2.
    if !m.is_formal() && 4.0 * k as f64 >= m.dim() as f64 {
        return Err(Error::UnsupportedMeasure(format!(
            "operator J needs 2 < d/(2k); d = {}, k = {k}",
            m.dim()
        )));
    }
    Ok(k)
}

/// `J phi`, defined by `F(J phi) = |xi|^{-2k} F phi` for `m = Riesz(4k)`. It maps
/// `<.,.>_0` isometrically onto the plain `L_2` product.
pub fn operator_j(phi: &Field, m: &SpectralMeasure) -> Result<Field> {
    phi.require_layout(Layout::SpaceTime)?;
    let k = riesz_chain_order(m)?;
    if m.dim() != phi.lattice().dim() {
        return Err(Error::DimensionMismatch {
            measure: m.dim(),
            lattice: phi.lattice().dim(),
        });
    }
    apply(OperatorSpec::RieszPotential(2.0 * k as f64), phi)
}

/// Lebesgue exponent `q` with `1/q = 1/2 - 2k/d`, when it is finite.
pub fn sobolev_exponent(k: u32, dim: usize) -> Option<f64> {
    let inv = 0.5 - 2.0 * k as f64 / dim as f64;
    (inv > 0.0).then(|| 1.0 / inv)
}

/// `||I^beta phi||_{L_{2,q}} / ||phi||_{L_2}`, a monitor for the Hardy-Littlewood-Sobolev
/// mapping property on a fixed lattice.
pub fn riesz_mapping_ratio(beta: f64, phi: &Field, q: f64) -> Result<f64> {
    let num = mixed_norm_l2q(&apply(OperatorSpec::RieszPotential(beta), phi)?, q)?;
    let den = norm_l2(phi, TimeRule::Left)?;
    Ok(if den == 0.0 { 0.0 } else { num / den })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LocalizationReport {
    /// `||D^{2k}(chi kappa) - chi D^{2k} kappa|| / ||D^{2k} kappa||`.
    pub lhs_rhs_gap: f64,
    /// Resolution floor: root fraction of the energy of `D^{2k} kappa` in the top half of the band.
    pub floor: f64,
}

fn support_points(values: &[Complex64]) -> Vec<usize> {
    let scale = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.norm() > 1e-14 * scale)
        .map(|(j, _)| j)
        .collect()
}

/// Checks numerically that `D^{2k}` acts locally: for `kappa = mu + nu` with
/// separated supports and `chi` equal to 1 on `supp mu` and 0 on `supp nu`,
/// `D^{2k}(chi kappa) = chi D^{2k} kappa`.
pub fn localization_check(kappa: &Field, chi: &Field, k: u32) -> Result<LocalizationReport> {
    kappa.require_layout(Layout::SpaceOnly)?;
    kappa.check_compatible(chi)?;
    let lat = kappa.lattice().clone();
    let kp = kappa.to_physical();
    let cp = chi.to_physical();

    let supp = support_points(kp.values());
    let (mut inner, mut outer) = (Vec::new(), Vec::new());
    for &j in &supp {
        let c = cp.values()[j].re;
        if (c - 1.0).abs() <= 1e-12 {
            inner.push(j);
        } else if c.abs() <= 1e-12 {
            outer.push(j);
        } else {
            return Err(Error::SupportViolation(format!(
                "cutoff is neither 0 nor 1 at support point {j} of kappa (value {c})"
            )));
        }
    }
    let idx: Vec<Vec<usize>> = (0..lat.n_space_total()).map(|j| lat.multi_index(j)).collect();
    let dist = |a: usize, b: usize| {
        idx[a]
            .iter()
            .zip(&idx[b])
            .zip(lat.n_space())
            .map(|((x, y), n)| {
                let d = x.abs_diff(*y);
                d.min(n - d)
            })
            .max()
            .unwrap_or(0)
    };
    for &a in &inner {
        if let Some(&b) = outer.iter().find(|&&b| dist(a, b) < 4) {
            return Err(Error::SupportViolation(format!(
                "supports closer than 4 cells (points {a} and {b})"
            )));
        }
    }

    let op = OperatorSpec::LaplacianPower(k);
    let d_kappa = apply(op, &kp)?.to_physical();
    let lhs = apply(op, &kp.multiply_pointwise(&cp)?)?.to_physical();
    let rhs = d_kappa.multiply_pointwise(&cp)?;
    let diff = lhs.combine(1.0, &rhs, -1.0)?;
    let denom = norm_l2(&d_kappa, TimeRule::Left)?;
    let gap = if denom == 0.0 { 0.0 } else { norm_l2(&diff, TimeRule::Left)? / denom };

    let spectrum = d_kappa.to_frequency();
    let energy: Vec<f64> = spectrum.values().iter().map(|v| v.norm_sqr()).collect();
    let high: Vec<f64> = (0..lat.n_space_total())
        .map(|j| {
            let in_top = idx[j].iter().zip(lat.n_space()).any(|(i, n)| {
                let s = if *i < n / 2 { *i } else { n - i };
                s > n / 4
            });
            if in_top {
                energy[j]
            } else {
                0.0
            }
        })
        .collect();
    let total = pairwise_sum(&energy);
    let floor = if total == 0.0 { 0.0 } else { (pairwise_sum(&high) / total).sqrt() };
    Ok(LocalizationReport { lhs_rhs_gap: gap, floor })
}
