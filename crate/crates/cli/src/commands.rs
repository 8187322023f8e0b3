//! One function per subcommand. Each returns the files it wrote.

use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use spde_lab::markov::{
    assemble_covariance, covariance_oracle, interior_time_points, kunsch_decomposition, kunsch_orthogonality,
    partition, screening_study, support_separation, GridPoint, ScreenReport,
};
use spde_lab::pde::{riemann_convergence_study, RiemannRow};
use spde_lab::profiles::{band_limited_field, band_limited_integrand, bump, smooth_plateau};
use spde_lab::rkhs::{duality_check, probe_check, RkhsElement};
use spde_lab::simulate::{write_ensemble, EnsembleManifest, NoiseModel, RepresenterMcReport};
use spde_lab::{Field, LaplacianSymbol, Layout, SpaceTimeLattice};

use crate::config::{ExperimentConfig, KunschParams};
use crate::error::CliError;
use crate::report::{ArtifactWriter, Envelope};

/// Stream reserved for choosing random points, far from the path streams.
const SELECTION_STREAM: u64 = u64::MAX;

fn lattice(config: &ExperimentConfig) -> Arc<SpaceTimeLattice> {
    Arc::new(config.lattice.clone())
}

pub fn sample(config: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let nm = NoiseModel::new(config.measure.clone(), lattice(config), config.seed)?;
    if config.sample.count == 0 {
        return Err(CliError::Usage("sample.count must be positive".into()));
    }
    let ensemble = nm.generate_ensemble(config.sample.count)?;
    let mut w = ArtifactWriter::new(&config.out, "sample", config)?;
    let manifest: EnsembleManifest = write_ensemble(w.dir(), &nm, &ensemble)?;
    for f in &manifest.files {
        w.record(w.dir().join(f));
    }
    w.record(w.dir().join("manifest.json"));
    w.json("report.json", &Envelope::new("sample", config, &manifest))?;
    Ok(w.into_written())
}

#[derive(Debug, Serialize)]
struct CovarianceRow {
    p_slice: usize,
    p_site: usize,
    q_slice: usize,
    q_site: usize,
    oracle: f64,
    ensemble: f64,
    standard_error: f64,
    z: f64,
}

#[derive(Debug, Serialize)]
struct CovarianceSummary {
    pairs: usize,
    paths: usize,
    max_abs_z: f64,
    max_z_allowed: f64,
}

pub fn covariance(config: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let p = &config.covariance;
    if p.pairs == 0 || p.paths < 2 {
        return Err(CliError::Usage("covariance needs pairs >= 1 and paths >= 2".into()));
    }
    let lat = lattice(config);
    config.measure.require_dalang()?;
    let nm = NoiseModel::new(config.measure.clone(), lat.clone(), config.seed)?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    rng.set_stream(SELECTION_STREAM);
    let mut point = || GridPoint {
        slice: rng.random_range(1..=lat.n_time()),
        site: rng.random_range(0..lat.n_space_total()),
    };
    let pairs: Vec<(GridPoint, GridPoint)> = (0..p.pairs).map(|_| (point(), point())).collect();
    let n = lat.n_space_total();
    let moments = nm.ensemble_moments(p.paths, pairs.len(), |nm, sample, row| {
        let u = nm.solution_field(sample).to_physical();
        let at = |g: GridPoint| u.values()[g.slice * n + g.site].re;
        for (r, (a, b)) in row.iter_mut().zip(&pairs) {
            *r = at(*a) * at(*b);
        }
    });
    let rows = pairs
        .iter()
        .enumerate()
        .map(|(i, (a, b))| {
            let oracle = covariance_oracle(
                &config.measure,
                &lat,
                lat.time(a.slice),
                &lat.position(a.site),
                lat.time(b.slice),
                &lat.position(b.site),
            )?;
            let se = moments.standard_error(i);
            let ensemble = moments.mean[i];
            Ok(CovarianceRow {
                p_slice: a.slice,
                p_site: a.site,
                q_slice: b.slice,
                q_site: b.site,
                oracle,
                ensemble,
                standard_error: se,
                z: if se > 0.0 { (ensemble - oracle) / se } else { 0.0 },
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let max_abs_z = rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    let summary = CovarianceSummary {
        pairs: rows.len(),
        paths: p.paths,
        max_abs_z,
        max_z_allowed: p.max_z,
    };
    let mut w = ArtifactWriter::new(&config.out, "covariance", config)?;
    w.csv("pairs.csv", &rows)?;
    w.json("report.json", &Envelope::new("covariance", config, &summary))?;
    if max_abs_z > p.max_z {
        return Err(CliError::invariant(
            "covariance studentized deviation",
            format!("max |z| = {max_abs_z:.3} exceeds {}", p.max_z),
        ));
    }
    Ok(w.into_written())
}

#[derive(Debug, Serialize)]
struct RkhsRow {
    index: usize,
    norm: f64,
    probe_max_relative_deviation: f64,
    duality_lhs: f64,
    duality_rhs: f64,
    duality_gap: f64,
}

#[derive(Debug, Serialize)]
struct RkhsSummary {
    functions: usize,
    max_duality_gap: f64,
    representer_mc: Option<RepresenterMcReport>,
}

pub fn rkhs(config: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let p = &config.rkhs;
    if p.functions == 0 || p.probes == 0 {
        return Err(CliError::Usage("rkhs.functions and rkhs.probes must be positive".into()));
    }
    if !(p.band > 0.0 && p.band <= 1.0) {
        return Err(CliError::Usage(format!("rkhs.band must lie in (0, 1], got {}", p.band)));
    }
    let lat = lattice(config);
    let m = &config.measure;
    let mut first: Option<(Field, RkhsElement)> = None;
    let mut rows = Vec::with_capacity(p.functions);
    for i in 0..p.functions {
        let s = config.seed.wrapping_add(2 * i as u64);
        let phi = band_limited_integrand(&lat, p.band, s);
        let a = RkhsElement::from_integrand(&phi, m)?;
        let probe = probe_check(&a, p.probes)?;
        if !(probe.max_relative_deviation <= p.max_probe_deviation) {
            return Err(CliError::invariant(
                "representer probe deviation",
                format!("{:e} exceeds {:e} for integrand {i}", probe.max_relative_deviation, p.max_probe_deviation),
            ));
        }
        let eta = band_limited_field(&lat, Layout::SpaceTime, p.band, s.wrapping_add(1));
        let d = duality_check(&a, &eta)?;
        rows.push(RkhsRow {
            index: i,
            norm: a.norm()?,
            probe_max_relative_deviation: probe.max_relative_deviation,
            duality_lhs: d.lhs,
            duality_rhs: d.rhs,
            duality_gap: d.gap,
        });
        if i == 0 {
            first = Some((phi, a));
        }
    }
    let representer_mc = match (p.mc_paths, first) {
        (0, _) | (_, None) => None,
        (paths, Some((phi, a))) => {
            let nm = NoiseModel::new(m.clone(), lat.clone(), config.seed)?;
            Some(nm.representer_mc_check(&phi, &a.h, paths)?)
        }
    };
    let max_duality_gap = rows.iter().map(|r| r.duality_gap).fold(0.0, f64::max);
    let summary = RkhsSummary {
        functions: rows.len(),
        max_duality_gap,
        representer_mc,
    };
    let mut w = ArtifactWriter::new(&config.out, "rkhs", config)?;
    w.csv("elements.csv", &rows)?;
    w.json("report.json", &Envelope::new("rkhs", config, &summary))?;
    if max_duality_gap > p.max_duality_gap {
        return Err(CliError::invariant(
            "duality gap",
            format!("{max_duality_gap:e} exceeds {:e}", p.max_duality_gap),
        ));
    }
    if let Some(mc) = representer_mc.filter(|mc| mc.max_studentized_deviation > p.max_z) {
        return Err(CliError::invariant(
            "representer Monte-Carlo deviation",
            format!("max studentized deviation {:.3} exceeds {}", mc.max_studentized_deviation, p.max_z),
        ));
    }
    Ok(w.into_written())
}

#[derive(Debug, Serialize)]
struct ScreenRow {
    band_width: f64,
    statistic: f64,
    matrix_size: usize,
    inside: usize,
    band: usize,
    outside: usize,
    condition_number: f64,
    ridge: f64,
}

impl From<&ScreenReport> for ScreenRow {
    fn from(r: &ScreenReport) -> Self {
        Self {
            band_width: r.band_width,
            statistic: r.max_abs_cond_corr,
            matrix_size: r.inside + r.band + r.outside,
            inside: r.inside,
            band: r.band,
            outside: r.outside,
            condition_number: r.band_condition_number,
            ridge: r.ridge,
        }
    }
}

#[derive(Debug, Serialize)]
struct KunschRow {
    n_space: usize,
    separation_cells: usize,
    normalized_inner: f64,
    norm_h: f64,
    norm_g: f64,
    decomposition_residual: f64,
    krylov_norm_h: Option<f64>,
}

#[derive(Debug, Serialize)]
struct MarkovSummary {
    markov_guarantee: bool,
    /// Monotonicity is asserted only for a germ-Markov measure on a local lattice Laplacian.
    monotonicity_asserted: bool,
    points: usize,
    psd_projected: bool,
    min_eigenvalue: Option<f64>,
    statistic_non_increasing: bool,
    screening: Vec<ScreenReport>,
    kunsch: Vec<KunschRow>,
}

/// Two bumps along the first axis, `L/2 -+ separation/2`.
fn kunsch_row(config: &ExperimentConfig, k: &KunschParams, n: usize) -> Result<KunschRow, CliError> {
    let base = &config.lattice;
    let lat = Arc::new(
        SpaceTimeLattice::new(base.extent().to_vec(), vec![n; base.dim()], base.t_max(), base.n_time())?
            .with_laplacian(base.laplacian()),
    );
    let mid: Vec<f64> = base.extent().iter().map(|l| 0.5 * l).collect();
    let center = |sign: f64| {
        let mut c = mid.clone();
        c[0] += sign * 0.5 * k.separation;
        c
    };
    let shape = |c: Vec<f64>| {
        let (tc, tr, r) = (k.time_center, k.time_radius, k.space_radius);
        move |t: f64, x: &[f64]| {
            let d2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            bump((t - tc) / tr) * bump(d2.sqrt() / r)
        }
    };
    let (left, right) = (center(-1.0), center(1.0));
    let h = Field::from_fn(lat.clone(), Layout::SpaceTime, shape(left.clone()));
    let g = Field::from_fn(lat.clone(), Layout::SpaceTime, shape(right));
    let orth = kunsch_orthogonality(&config.measure, &h, &g)?;
    let gap = k.separation - 2.0 * k.space_radius;
    let (a, b) = (left[0] - k.space_radius, left[0] + k.space_radius);
    let chi = Field::from_fn(lat.clone(), Layout::SpaceOnly, |_, x| {
        smooth_plateau(x[0], a - 0.5 * gap, a, b, b + 0.5 * gap)
    });
    let zeta = RkhsElement::from_solution(&h.combine(1.0, &g, 1.0)?, &config.measure)?;
    let dec = kunsch_decomposition(&config.measure, &zeta, &chi)?;
    Ok(KunschRow {
        n_space: n,
        separation_cells: support_separation(&h, &g),
        normalized_inner: orth.normalized_inner,
        norm_h: orth.norm_h,
        norm_g: orth.norm_g,
        decomposition_residual: dec.residual,
        krylov_norm_h: dec.krylov_norm_h,
    })
}

pub fn markov(config: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let p = &config.markov;
    if p.band_widths.is_empty() {
        return Err(CliError::Usage("markov.band_widths is empty".into()));
    }
    if let Some(w) = p.band_widths.iter().find(|w| !(**w > 0.0)) {
        return Err(CliError::Usage(format!("band widths must be positive, got {w}")));
    }
    let lat = lattice(config);
    let region = config.screening_region();
    let points = interior_time_points(&lat);
    // Fail on geometry before the expensive assembly.
    for w in &p.band_widths {
        partition(&lat, &points, &region, *w)?;
    }
    let c = assemble_covariance(&config.measure, &lat, &points)?;
    let screening = screening_study(&c, &lat, &region, &p.band_widths)?;
    let non_increasing = screening
        .windows(2)
        .all(|w| w[1].band_width < w[0].band_width || w[1].max_abs_cond_corr <= w[0].max_abs_cond_corr);
    let kunsch = match &p.kunsch {
        None => Vec::new(),
        Some(k) => k
            .levels
            .iter()
            .map(|n| kunsch_row(config, k, *n))
            .collect::<Result<Vec<_>, _>>()?,
    };
    let guarantee = config.measure.markov_guarantee();
    // The exact |xi|^2 symbol makes the lattice precision nonlocal, so the
    // discrete field is not Markov even when the continuum one is.
    let asserted = guarantee && lat.laplacian() == LaplacianSymbol::SecondDifference;
    let rows: Vec<ScreenRow> = screening.iter().map(ScreenRow::from).collect();
    let summary = MarkovSummary {
        markov_guarantee: guarantee,
        monotonicity_asserted: asserted,
        points: points.len(),
        psd_projected: c.projected,
        min_eigenvalue: c.min_eigenvalue,
        statistic_non_increasing: non_increasing,
        screening,
        kunsch,
    };
    let mut w = ArtifactWriter::new(&config.out, "markov", config)?;
    w.csv("screening.csv", &rows)?;
    if !summary.kunsch.is_empty() {
        w.csv("kunsch.csv", &summary.kunsch)?;
    }
    w.json("report.json", &Envelope::new("markov", config, &summary))?;
    if asserted && !non_increasing {
        return Err(CliError::invariant(
            "screening statistic monotonicity",
            "statistic increases with band width for a germ-Markov measure",
        ));
    }
    if let (true, Some(k)) = (guarantee, &p.kunsch) {
        if let Some(r) = summary.kunsch.iter().find(|r| r.normalized_inner > k.max_inner) {
            return Err(CliError::invariant(
                "Kunsch orthogonality",
                format!("normalized inner product {:e} exceeds {:e} at n = {}", r.normalized_inner, k.max_inner, r.n_space),
            ));
        }
    }
    Ok(w.into_written())
}

#[derive(Debug, Serialize)]
struct RiemannSummary {
    strictly_decreasing: bool,
    rows: Vec<RiemannRow>,
}

pub fn riemann(config: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let p = &config.riemann;
    if p.levels.len() < 3 {
        return Err(CliError::Usage("riemann.levels needs at least 3 entries".into()));
    }
    let lat = lattice(config);
    let center = p
        .space_center
        .clone()
        .unwrap_or_else(|| lat.extent().iter().map(|l| 0.5 * l).collect());
    if center.len() != lat.dim() {
        return Err(CliError::Usage("riemann.space_center has the wrong dimension".into()));
    }
    let (tc, tr, r) = (p.time_center, p.time_radius, p.space_radius);
    let profile = move |t: f64, x: &[f64]| {
        let d2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
        bump((t - tc) / tr) * bump(d2.sqrt() / r)
    };
    let rows = riemann_convergence_study(&lat, &profile, &p.levels, &config.measure)?;
    let strictly_decreasing = rows.windows(2).all(|w| w[1].norm0_error < w[0].norm0_error);
    let mut w = ArtifactWriter::new(&config.out, "riemann", config)?;
    w.csv("convergence.csv", &rows)?;
    let summary = RiemannSummary {
        strictly_decreasing,
        rows,
    };
    w.json("report.json", &Envelope::new("riemann", config, &summary))?;
    if !strictly_decreasing {
        return Err(CliError::invariant(
            "Riemann-sum error",
            "norm0 error does not decrease strictly under refinement",
        ));
    }
    Ok(w.into_written())
}
