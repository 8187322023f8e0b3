//! Numerical germ-Markov diagnostics.
//!
//! * The covariance `R((t,x),(s,y)) = E[u(t,x) u(s,y)]`, evaluated as a lattice
//!   frequency sum of its closed time factor.
//! * Gaussian conditional-covariance screening: inside and outside point sets
//!   are conditioned on a boundary band and the largest conditional
//!   correlation between them is reported.
//! * Künsch's conditions as RKHS experiments: disjointly supported elements are
//!   orthogonal, and cutting an element apart with a smooth cutoff splits its
//!   norm.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Field, Layout, SpaceTimeLattice};
use crate::pde::semigroup_integral;
use crate::quadrature::pairwise_sum;
use crate::rkhs::{krylov_norm, rkhs_inner, RkhsElement};
use crate::spectral::{KernelFamily, SpectralMeasure};

/// Lattice point: time slice `slice` (time `slice * dt`) and spatial index `site`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct GridPoint {
    pub slice: usize,
    pub site: usize,
}

/// All points of the lattice with `slice >= 1`, time slowest.
pub fn interior_time_points(lat: &SpaceTimeLattice) -> Vec<GridPoint> {
    (1..lat.n_slices())
        .flat_map(|slice| (0..lat.n_space_total()).map(move |site| GridPoint { slice, site }))
        .collect()
}

fn time_factor(lambda: f64, t: f64, s: f64) -> f64 {
    (-lambda * (t - s).abs()).exp() * semigroup_integral(2.0 * lambda, t.min(s))
}

/// `R((t, x), (s, y)) = (2 pi)^{-d} sum_xi cos(xi.(x - y)) g dxi (e^{-lambda|t-s|} - e^{-lambda(t+s)}) / (2 lambda)`.
pub fn covariance_oracle(m: &SpectralMeasure, lat: &SpaceTimeLattice, t: f64, x: &[f64], s: f64, y: &[f64]) -> Result<f64> {
    if m.dim() != lat.dim() || x.len() != lat.dim() || y.len() != lat.dim() {
        return Err(Error::DimensionMismatch {
            measure: m.dim(),
            lattice: lat.dim(),
        });
    }
    if !(0.0..=lat.t_max() * (1.0 + 1e-12)).contains(&t) || !(0.0..=lat.t_max() * (1.0 + 1e-12)).contains(&s) {
        return Err(Error::OutOfRange(format!("times ({t}, {s}) outside [0, T]")));
    }
    let dxi = lat.frequency_cell_volume();
    let c = (2.0 * PI).powi(-(lat.dim() as i32));
    let terms: Vec<f64> = (0..lat.n_space_total())
        .map(|j| {
            let l = lat.lambda()[j];
            let g = m.density_sq(l).value_or_zero();
            if g == 0.0 {
                return 0.0;
            }
            let phase: f64 = lat.frequency(j).iter().zip(x.iter().zip(y)).map(|(k, (a, b))| k * (a - b)).sum();
            phase.cos() * g * dxi * time_factor(l, t, s)
        })
        .collect();
    Ok(c * pairwise_sum(&terms))
}

/// Dense covariance of the solution over a set of lattice points.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    pub points: Vec<GridPoint>,
    pub values: DMatrix<f64>,
    pub measure: SpectralMeasure,
    /// Smallest eigenvalue before projection, when it had to be computed.
    pub min_eigenvalue: Option<f64>,
    pub projected: bool,
}

/// Largest supported dense matrix.
pub const MAX_POINTS: usize = 4096;

/// Assembles `R` over `points`. Exact symmetry is enforced by computing the upper
/// triangle only. If the matrix is not numerically positive definite, the
/// smallest eigenvalue is checked against `-1e-10 trace` and the matrix is
/// projected onto the PSD cone.
pub fn assemble_covariance(m: &SpectralMeasure, lat: &Arc<SpaceTimeLattice>, points: &[GridPoint]) -> Result<CovarianceMatrix> {
    if points.len() > MAX_POINTS {
        return Err(Error::OutOfRange(format!(
            "{} points exceed the dense limit of {MAX_POINTS}",
            points.len()
        )));
    }
    if m.dim() != lat.dim() {
        return Err(Error::DimensionMismatch {
            measure: m.dim(),
            lattice: lat.dim(),
        });
    }
    if let Some(p) = points.iter().find(|p| p.slice > lat.n_time() || p.site >= lat.n_space_total()) {
        return Err(Error::OutOfRange(format!("point {p:?} outside the lattice")));
    }
    let modes = lat.n_space_total();
    let dxi = lat.frequency_cell_volume();
    let c = (2.0 * PI).powi(-(lat.dim() as i32));
    let weights: Vec<f64> = lat
        .lambda()
        .iter()
        .map(|l| c * m.density_sq(*l).value_or_zero() * dxi)
        .collect();
    let active: Vec<usize> = (0..modes).filter(|j| weights[*j] != 0.0).collect();
    // Per-point cos / sin of xi.x over active modes.
    let freqs: Vec<Vec<f64>> = active.iter().map(|j| lat.frequency(*j)).collect();
    let trig: Vec<(Vec<f64>, Vec<f64>)> = points
        .iter()
        .map(|p| {
            let x = lat.position(p.site);
            freqs
                .iter()
                .map(|xi| {
                    let ph: f64 = xi.iter().zip(&x).map(|(a, b)| a * b).sum();
                    (ph.cos(), ph.sin())
                })
                .unzip()
        })
        .collect();
    // Time tables per slice pair.
    let nt = lat.n_slices();
    let tables: Vec<Vec<f64>> = (0..nt * nt)
        .map(|ab| {
            let (a, b) = (ab / nt, ab % nt);
            active
                .iter()
                .map(|j| weights[*j] * time_factor(lat.lambda()[*j], lat.time(a), lat.time(b)))
                .collect()
        })
        .collect();
    let n = points.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (ci, si) = &trig[i];
            (i..n)
                .map(|k| {
                    let (ck, sk) = &trig[k];
                    let tab = &tables[points[i].slice * nt + points[k].slice];
                    let terms: Vec<f64> = (0..active.len())
                        .map(|q| tab[q] * (ci[q] * ck[q] + si[q] * sk[q]))
                        .collect();
                    pairwise_sum(&terms)
                })
                .collect()
        })
        .collect();
    let mut values = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (off, v) in row.iter().enumerate() {
            values[(i, i + off)] = *v;
            values[(i + off, i)] = *v;
        }
    }
    let mut out = CovarianceMatrix {
        points: points.to_vec(),
        values,
        measure: m.clone(),
        min_eigenvalue: None,
        projected: false,
    };
    ensure_psd(&mut out)?;
    Ok(out)
}

fn ensure_psd(c: &mut CovarianceMatrix) -> Result<()> {
    let n = c.values.nrows();
    if n == 0 || c.values.clone().cholesky().is_some() {
        return Ok(());
    }
    let trace = c.values.trace();
    let tolerance = 1e-10 * trace;
    let eig = SymmetricEigen::new(c.values.clone());
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    c.min_eigenvalue = Some(min);
    if min < -tolerance {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: min,
            tolerance,
        });
    }
    if min < 0.0 {
        let clipped = eig.eigenvalues.map(|v| v.max(0.0));
        let v = &eig.eigenvectors;
        let mut p = v * DMatrix::from_diagonal(&clipped) * v.transpose();
        for i in 0..n {
            for k in i + 1..n {
                let s = 0.5 * (p[(i, k)] + p[(k, i)]);
                p[(i, k)] = s;
                p[(k, i)] = s;
            }
        }
        c.values = p;
        c.projected = true;
    }
    Ok(())
}

/// Open space-time rectangle `(t0, t1) × prod (x0_i, x1_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Region {
    pub t0: f64,
    pub t1: f64,
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionPartition {
    pub region: Region,
    /// Band half-width, in lattice cells.
    pub band_width: f64,
    /// Indices into the covariance point list.
    pub inside: Vec<usize>,
    pub band: Vec<usize>,
    pub outside: Vec<usize>,
}

/// Signed Chebyshev distance to the boundary of `region`, in cell units
/// (positive inside, negative outside, zero on the boundary). Space is periodic.
pub fn boundary_distance(lat: &SpaceTimeLattice, region: &Region, p: GridPoint) -> f64 {
    let t = lat.time(p.slice);
    let dt = lat.dt();
    let x = lat.position(p.site);
    let mut inside = t > region.t0 && t < region.t1;
    let mut to_face = ((t - region.t0).min(region.t1 - t) / dt).abs();
    let mut excess = (region.t0 - t).max(t - region.t1).max(0.0) / dt;
    for axis in 0..lat.dim() {
        let (a, b) = (region.x0[axis], region.x1[axis]);
        let l = lat.extent()[axis];
        let h = lat.spacing(axis);
        let xi = x[axis];
        let ins = xi > a && xi < b;
        inside &= ins;
        if ins {
            to_face = to_face.min((xi - a).min(b - xi) / h);
        } else {
            let da = (a - xi).rem_euclid(l);
            let db = (xi - b).rem_euclid(l);
            excess = excess.max(da.min(db) / h);
            to_face = to_face.min(da.min(db) / h);
        }
    }
    if inside {
        to_face
    } else {
        -excess
    }
}

/// Splits `points` into inside / band / outside for band half-width `width` cells.
pub fn partition(lat: &SpaceTimeLattice, points: &[GridPoint], region: &Region, width: f64) -> Result<RegionPartition> {
    if !(width > 0.0) {
        return Err(Error::OutOfRange(format!("band width must be positive, got {width}")));
    }
    if region.x0.len() != lat.dim() || region.x1.len() != lat.dim() {
        return Err(Error::DimensionMismatch {
            measure: region.x0.len(),
            lattice: lat.dim(),
        });
    }
    let mut part = RegionPartition {
        region: region.clone(),
        band_width: width,
        inside: Vec::new(),
        band: Vec::new(),
        outside: Vec::new(),
    };
    for (i, p) in points.iter().enumerate() {
        let d = boundary_distance(lat, region, *p);
        if d.abs() < width {
            part.band.push(i);
        } else if d > 0.0 {
            part.inside.push(i);
        } else {
            part.outside.push(i);
        }
    }
    Ok(part)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreenReport {
    pub band_width: f64,
    pub max_abs_cond_corr: f64,
    pub inside: usize,
    pub band: usize,
    pub outside: usize,
    pub ridge: f64,
    pub band_condition_number: f64,
    /// Points whose conditional variance vanished and were left out of the maximum.
    pub degenerate: usize,
}

/// `max |corr(u_i, u_o | u_B)|` over inside `i` and outside `o`.
pub fn conditional_cov_screen(c: &CovarianceMatrix, part: &RegionPartition) -> Result<ScreenReport> {
    let (ni, nb, no) = (part.inside.len(), part.band.len(), part.outside.len());
    let mut report = ScreenReport {
        band_width: part.band_width,
        max_abs_cond_corr: 0.0,
        inside: ni,
        band: nb,
        outside: no,
        ridge: 0.0,
        band_condition_number: 1.0,
        degenerate: 0,
    };
    if nb == 0 {
        return Err(Error::EmptySelection("boundary band contains no points".into()));
    }
    let sigma = &c.values;
    let band_block = DMatrix::from_fn(nb, nb, |a, b| sigma[(part.band[a], part.band[b])]);
    let ridge = 1e-10 * band_block.trace();
    report.ridge = ridge;
    let eig = SymmetricEigen::new(band_block.clone()).eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    report.band_condition_number = (hi + ridge) / (lo + ridge);
    if ni == 0 || no == 0 {
        return Ok(report);
    }
    let chol = (band_block + DMatrix::identity(nb, nb) * ridge)
        .cholesky()
        .ok_or(Error::SingularBand { ridge })?;

    let mut union: Vec<usize> = part.inside.iter().chain(&part.outside).cloned().collect();
    union.sort_unstable();
    let nu = union.len();
    let cross = DMatrix::from_fn(nb, nu, |a, b| sigma[(part.band[a], union[b])]);
    let w = chol.l().solve_lower_triangular(&cross).ok_or(Error::SingularBand { ridge })?;
    let col_dot = |a: usize, b: usize| {
        let terms: Vec<f64> = (0..nb).map(|r| w[(r, a)] * w[(r, b)]).collect();
        pairwise_sum(&terms)
    };
    let cond = |a: usize, b: usize| {
        let (a, b) = (a.min(b), a.max(b));
        sigma[(union[a], union[b])] - col_dot(a, b)
    };
    let var: Vec<f64> = (0..nu).map(|a| cond(a, a)).collect();
    let is_inside: Vec<bool> = {
        let mut flags = vec![false; sigma.nrows()];
        part.inside.iter().for_each(|i| flags[*i] = true);
        union.iter().map(|u| flags[*u]).collect()
    };
    let valid: Vec<bool> = (0..nu)
        .map(|a| var[a] > 1e-12 * sigma[(union[a], union[a])].abs() && var[a] > 0.0)
        .collect();
    report.degenerate = valid.iter().filter(|v| !**v).count();
    let pairs: Vec<f64> = (0..nu)
        .into_par_iter()
        .filter(|a| is_inside[*a] && valid[*a])
        .map(|a| {
            (0..nu)
                .filter(|b| !is_inside[*b] && valid[*b])
                .map(|b| (cond(a, b) / (var[a] * var[b]).sqrt()).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    report.max_abs_cond_corr = pairs.into_iter().fold(0.0, f64::max);
    Ok(report)
}

/// Screening statistic for each band width of `widths`.
pub fn screening_study(c: &CovarianceMatrix, lat: &SpaceTimeLattice, region: &Region, widths: &[f64]) -> Result<Vec<ScreenReport>> {
    if widths.is_empty() {
        return Err(Error::EmptySelection("no band widths given".into()));
    }
    widths
        .iter()
        .map(|w| conditional_cov_screen(c, &partition(lat, &c.points, region, *w)?))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrthogonalityReport {
    pub inner: f64,
    pub norm_h: f64,
    pub norm_g: f64,
    pub normalized_inner: f64,
}

fn support_sets(f: &Field) -> Vec<(usize, usize)> {
    let p = f.to_physical();
    let scale = p.max_abs();
    let n = f.lattice().n_space_total();
    p.values()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.norm() > 1e-14 * scale)
        .map(|(i, _)| (i / n, i % n))
        .collect()
}

/// Smallest space-time Chebyshev cell distance between the supports (periodic in space).
pub fn support_separation(a: &Field, b: &Field) -> usize {
    let lat = a.lattice();
    let (sa, sb) = (support_sets(a), support_sets(b));
    let idx: Vec<Vec<usize>> = (0..lat.n_space_total()).map(|j| lat.multi_index(j)).collect();
    let mut best = usize::MAX;
    for (ka, ja) in &sa {
        for (kb, jb) in &sb {
            let space = idx[*ja]
                .iter()
                .zip(&idx[*jb])
                .zip(lat.n_space())
                .map(|((x, y), n)| {
                    let d = x.abs_diff(*y);
                    d.min(n - d)
                })
                .max()
                .unwrap_or(0);
            best = best.min(space.max(ka.abs_diff(*kb)));
            if best == 0 {
                return 0;
            }
        }
    }
    best
}

/// `|<h, g>_{H^u}| / (||h|| ||g||)` for two solution fields with separated supports.
pub fn kunsch_orthogonality(m: &SpectralMeasure, h_bump: &Field, g_bump: &Field) -> Result<OrthogonalityReport> {
    h_bump.check_compatible(g_bump)?;
    h_bump.require_layout(Layout::SpaceTime)?;
    let sep = support_separation(h_bump, g_bump);
    if sep < 8 {
        return Err(Error::SupportViolation(format!(
            "supports are {sep} cells apart; at least 8 are required"
        )));
    }
    let a = RkhsElement::from_solution(h_bump, m)?;
    let b = RkhsElement::from_solution(g_bump, m)?;
    let inner = rkhs_inner(&a, &b)?;
    let (norm_h, norm_g) = (a.norm()?, b.norm()?);
    Ok(OrthogonalityReport {
        inner,
        norm_h,
        norm_g,
        normalized_inner: inner.abs() / (norm_h * norm_g),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionReport {
    /// `|‖zeta‖^2 - ‖h‖^2 - ‖g‖^2| / ‖zeta‖^2`.
    pub residual: f64,
    pub normalized_inner: f64,
    pub norm_zeta_sq: f64,
    pub norm_h_sq: f64,
    pub norm_g_sq: f64,
    /// Krylov norm of the cut-out part (Bessel measures only).
    pub krylov_norm_h: Option<f64>,
}

/// Cuts `zeta.h` with the cutoff `chi` into `h = chi zeta.h` and `g = zeta.h - h`,
/// rebuilds both elements, and measures the Pythagoras residual.
pub fn kunsch_decomposition(m: &SpectralMeasure, zeta: &RkhsElement, chi: &Field) -> Result<DecompositionReport> {
    let zh = zeta.h.to_physical();
    let cp = chi.to_physical();
    let n = zh.lattice().n_space_total();
    let chi_at = |k: usize, j: usize| match cp.layout() {
        Layout::SpaceOnly => cp.values()[j].re,
        Layout::SpaceTime => cp.values()[k * n + j].re,
    };
    for (k, j) in support_sets(&zh) {
        let c = chi_at(k, j);
        if !((c - 1.0).abs() <= 1e-12 || c.abs() <= 1e-12) {
            return Err(Error::SupportViolation(format!(
                "cutoff equals {c} on the support at slice {k}, site {j}; it must be 0 or 1 there"
            )));
        }
    }
    let h = zh.multiply_pointwise(&cp)?;
    let g = zh.combine(1.0, &h, -1.0)?;
    let a = RkhsElement::from_solution(&h, m)?;
    let b = RkhsElement::from_solution(&g, m)?;
    let z = RkhsElement::from_solution(&zh, m)?;
    let nz = rkhs_inner(&z, &z)?;
    let nh = rkhs_inner(&a, &a)?;
    let ng = rkhs_inner(&b, &b)?;
    let hg = rkhs_inner(&a, &b)?;
    let krylov_norm_h = if m.family() == KernelFamily::Bessel {
        let v = krylov_norm(&a)?;
        if !v.is_finite() {
            return Err(Error::invariant("krylov norm of the cut-out part", "not finite"));
        }
        Some(v)
    } else {
        None
    };
    Ok(DecompositionReport {
        residual: if nz == 0.0 { 0.0 } else { (nz - nh - ng).abs() / nz },
        normalized_inner: if nh == 0.0 || ng == 0.0 { 0.0 } else { hg.abs() / (nh * ng).sqrt() },
        norm_zeta_sq: nz,
        norm_h_sq: nh,
        norm_g_sq: ng,
        krylov_norm_h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{bump, smooth_plateau};
    use crate::rkhs::{heat_kernel_column, ColumnWeighting};

    fn bessel(a: f64) -> SpectralMeasure {
        SpectralMeasure::bessel(a, 1).unwrap()
    }

    #[test]
    fn oracle_basics() {
        let lat = SpaceTimeLattice::new_1d(8.0, 32, 1.0, 16).unwrap();
        let m = bessel(2.0);
        assert_eq!(covariance_oracle(&m, &lat, 0.0, &[1.0], 0.0, &[1.0]).unwrap(), 0.0);
        let a = covariance_oracle(&m, &lat, 0.3, &[1.0], 0.7, &[2.5]).unwrap();
        let b = covariance_oracle(&m, &lat, 0.7, &[2.5], 0.3, &[1.0]).unwrap();
        assert_eq!(a, b);
        assert!(covariance_oracle(&m, &lat, 1.5, &[1.0], 0.0, &[0.0]).is_err());
    }

    #[test]
    fn oracle_matches_isometric_columns() {
        let lat = Arc::new(SpaceTimeLattice::new_1d(8.0, 16, 1.0, 16).unwrap());
        let m = bessel(2.0);
        for (p, q) in [((5, 3), (9, 11)), ((16, 0), (16, 0)), ((2, 7), (13, 7))] {
            let cp = heat_kernel_column(&lat, p.0, p.1, ColumnWeighting::Isometric).unwrap();
            let cq = heat_kernel_column(&lat, q.0, q.1, ColumnWeighting::Isometric).unwrap();
            let a = RkhsElement::from_integrand(&cp.to_physical(), &m).unwrap();
            let b = RkhsElement::from_integrand(&cq.to_physical(), &m).unwrap();
            let r = covariance_oracle(&m, &lat, lat.time(p.0), &lat.position(p.1), lat.time(q.0), &lat.position(q.1)).unwrap();
            let v = rkhs_inner(&a, &b).unwrap();
            assert!((v - r).abs() <= 1e-8 * r.abs().max(1e-3), "{v} vs {r}");
        }
    }

    #[test]
    fn assembly_examples() {
        let lat = Arc::new(SpaceTimeLattice::new_1d(8.0, 16, 1.0, 16).unwrap());
        let m = bessel(2.0);
        let p = GridPoint { slice: 5, site: 3 };
        let one = assemble_covariance(&m, &lat, &[p]).unwrap();
        assert!(one.values[(0, 0)] >= 0.0);
        let dup = assemble_covariance(&m, &lat, &[p, p]).unwrap();
        assert!(dup.values.determinant().abs() <= 1e-10);
        let white = SpectralMeasure::white(1);
        let column: Vec<GridPoint> = (1..=16).map(|slice| GridPoint { slice, site: 4 }).collect();
        let c = assemble_covariance(&white, &lat, &column).unwrap();
        for i in 1..16 {
            assert!(c.values[(i, i)] > c.values[(i - 1, i - 1)]);
        }
        let inc = (1..16).map(|i| c.values[(i, i)] - c.values[(i - 1, i - 1)]).collect::<Vec<_>>();
        assert!(inc[14] < inc[0]);
        let all = interior_time_points(&lat);
        let full = assemble_covariance(&m, &lat, &all).unwrap();
        assert_eq!(full.values, full.values.transpose());
        let trace = full.values.trace();
        let min = SymmetricEigen::new(full.values.clone()).eigenvalues.min();
        assert!(min >= -1e-10 * trace);
    }

    fn screening_setup(alpha: f64) -> (Arc<SpaceTimeLattice>, CovarianceMatrix, Region) {
        let lat = Arc::new(
            SpaceTimeLattice::new_1d(16.0, 16, 1.0, 16)
                .unwrap()
                .with_laplacian(crate::lattice::LaplacianSymbol::SecondDifference),
        );
        let pts = interior_time_points(&lat);
        let c = assemble_covariance(&bessel(alpha), &lat, &pts).unwrap();
        let region = Region {
            t0: 0.25,
            t1: 0.75,
            x0: vec![4.0],
            x1: vec![12.0],
        };
        (lat, c, region)
    }

    #[test]
    fn partition_covers_and_respects_band() {
        let (lat, c, region) = screening_setup(2.0);
        let part = partition(&lat, &c.points, &region, 2.0).unwrap();
        let mut all: Vec<usize> = part.inside.iter().chain(&part.band).chain(&part.outside).cloned().collect();
        all.sort_unstable();
        assert_eq!(all, (0..c.points.len()).collect::<Vec<_>>());
        for i in &part.band {
            assert!(boundary_distance(&lat, &region, c.points[*i]).abs() < 2.0);
        }
        let p = GridPoint { slice: 8, site: 4 };
        assert_eq!(boundary_distance(&lat, &region, p), 0.0);
    }

    #[test]
    fn screening_is_symmetric_and_decays() {
        let (lat, c, region) = screening_setup(2.0);
        let part = partition(&lat, &c.points, &region, 1.0).unwrap();
        let r = conditional_cov_screen(&c, &part).unwrap();
        let swapped = RegionPartition {
            inside: part.outside.clone(),
            outside: part.inside.clone(),
            ..part.clone()
        };
        assert_eq!(conditional_cov_screen(&c, &swapped).unwrap().max_abs_cond_corr, r.max_abs_cond_corr);
        let rows = screening_study(&c, &lat, &region, &[1.0, 2.0, 3.0]).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].max_abs_cond_corr <= w[0].max_abs_cond_corr, "{rows:?}");
        }
        let no_outside = RegionPartition { outside: vec![], ..part.clone() };
        assert_eq!(conditional_cov_screen(&c, &no_outside).unwrap().max_abs_cond_corr, 0.0);
        let no_band = RegionPartition { band: vec![], ..part };
        assert!(matches!(conditional_cov_screen(&c, &no_band), Err(Error::EmptySelection(_))));
    }

    fn bumps(n: usize, shift: f64, sign: f64) -> (Field, Field) {
        let lat = Arc::new(SpaceTimeLattice::new_1d(16.0, n, 1.0, 64).unwrap());
        let b = |c: f64| {
            move |t: f64, x: &[f64]| bump((t - 0.5) / 0.3) * bump((x[0] - c) / 2.0)
        };
        let h = Field::from_fn(lat.clone(), Layout::SpaceTime, b(8.0 - 2.5 + shift));
        let g = Field::from_fn(lat, Layout::SpaceTime, b(8.0 + 2.5 + shift)).scaled(sign);
        (h, g)
    }

    #[test]
    fn orthogonality_small_and_translation_invariant() {
        let m = bessel(2.0);
        let (h, g) = bumps(128, 0.0, 1.0);
        let r = kunsch_orthogonality(&m, &h, &g).unwrap();
        assert!(r.normalized_inner <= 1e-3, "{r:?}");
        let (h2, g2) = bumps(128, 16.0 / 128.0 * 5.0, 1.0);
        let r2 = kunsch_orthogonality(&m, &h2, &g2).unwrap();
        assert!((r.normalized_inner - r2.normalized_inner).abs() <= 1e-10);
        let (_, gneg) = bumps(128, 0.0, -1.0);
        let rn = kunsch_orthogonality(&m, &h, &gneg).unwrap();
        assert!((rn.inner + r.inner).abs() <= 1e-14 * r.norm_h * r.norm_g);
        assert!(kunsch_orthogonality(&m, &h, &h).is_err());
    }

    #[test]
    fn decomposition_splits_norm() {
        let (h, g) = bumps(128, 0.0, 1.0);
        let lat = h.lattice().clone();
        let even = h.combine(1.0, &g, 0.7).unwrap();
        // The formal Riesz density gives no weight to the zero mode, so its pieces need zero spatial mean.
        let odd = |c: f64| move |t: f64, x: &[f64]| (x[0] - c) * bump((t - 0.5) / 0.3) * bump((x[0] - c) / 2.0);
        let odd = Field::from_fn(lat.clone(), Layout::SpaceTime, odd(5.5))
            .combine(1.0, &Field::from_fn(lat.clone(), Layout::SpaceTime, odd(10.5)), 0.7)
            .unwrap();
        let chi = Field::from_fn(lat.clone(), Layout::SpaceOnly, |_, x| smooth_plateau(x[0], 2.6, 3.4, 7.6, 8.4));
        for (m, zh) in [(bessel(2.0), even), (SpectralMeasure::riesz_formal(4.0, 1).unwrap(), odd)] {
            let zeta = RkhsElement::from_solution(&zh, &m).unwrap();
            let r = kunsch_decomposition(&m, &zeta, &chi).unwrap();
            assert!(r.residual <= 1e-3, "{m}: {r:?}");
            let one = Field::from_fn(lat.clone(), Layout::SpaceOnly, |_, _| 1.0);
            let trivial = kunsch_decomposition(&m, &zeta, &one).unwrap();
            assert_eq!(trivial.norm_g_sq, 0.0);
            assert!(trivial.residual <= 1e-12);
        }
        let half = Field::from_fn(lat, Layout::SpaceOnly, |_, _| 0.5);
        let zeta = RkhsElement::from_solution(&h, &bessel(2.0)).unwrap();
        assert!(matches!(kunsch_decomposition(&bessel(2.0), &zeta, &half), Err(Error::SupportViolation(_))));
    }
}
