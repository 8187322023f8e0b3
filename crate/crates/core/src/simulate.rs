//! Noise sampling and exact per-mode simulation of the mild solution.
//!
//! For each Fourier mode with weight `c = g(lambda) dxi` and step `dt`, the pair
//! (noise increment `dW`, stochastic convolution increment `eta`) over one step
//! is Gaussian with
//!
//! ```text
//! Var dW = c dt,   Cov(eta, dW) = c w,   Var eta = c v,
//! w = (1 - e^{-lambda dt}) / lambda,  v = (1 - e^{-2 lambda dt}) / (2 lambda),
//! ```
//!
//! and the solution amplitude follows `A_{k+1} = e^{-lambda dt} A_k + eta_k`,
//! `A_0 = 0`. Sampling the pair jointly makes `E[M(phi) u]` and `E[u u']` equal
//! their deterministic lattice counterparts exactly, not just up to `O(dt)`.
//!
//! Random numbers: path `i`, step `k` draws from ChaCha20 seeded with
//! `seed_from_u64(seed)`, stream `i`, word position `k << 32`, through the
//! ziggurat standard normal of `rand_distr`. Within a step, modes are visited in
//! storage order; a mode `l` with mirror `m > l` consumes four normals
//! (`re z1, im z1, re z2, im z2`, complex parts scaled by `1/sqrt 2`) and fixes
//! mode `m` by conjugation, a self-conjugate mode consumes two real normals.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_field;
use crate::lattice::{Field, LatticeSpec, Layout, Representation, SpaceTimeLattice, SpectralPlan};
use crate::pde::semigroup_integral;
use crate::quadrature::pairwise_sum;
use crate::spectral::SpectralMeasure;

/// Identifier of the random-number scheme described in the module docs.
pub const RNG_ID: &str = "chacha20/seed_from_u64/stream=path/word_pos=step<<32/ziggurat-normal/v1";

/// Paths per reduction block; fixes the summation tree independently of threads.
const BLOCK: usize = 64;

#[derive(Debug, Clone, Copy)]
struct ModeCoefficients {
    decay: f64,
    increment: f64,
    eta_z1: f64,
    eta_z2: f64,
}

/// Gaussian noise with spectral measure `measure` on `lattice`, plus its seed.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    measure: SpectralMeasure,
    lattice: Arc<SpaceTimeLattice>,
    seed: u64,
    coefficients: Vec<ModeCoefficients>,
    plan: SpectralPlan,
}

/// One path: noise increments for steps `0..n_time` and solution amplitudes
/// `A_k` for slices `0..=n_time`, both in storage order (step slowest).
#[derive(Debug, Clone)]
pub struct SamplePath {
    pub path: u64,
    pub increments: Vec<Complex64>,
    pub amplitudes: Vec<Complex64>,
}

impl NoiseModel {
    pub fn new(measure: SpectralMeasure, lattice: Arc<SpaceTimeLattice>, seed: u64) -> Result<Self> {
        if measure.dim() != lattice.dim() {
            return Err(Error::DimensionMismatch {
                measure: measure.dim(),
                lattice: lattice.dim(),
            });
        }
        let dt = lattice.dt();
        let dxi = lattice.frequency_cell_volume();
        let coefficients = lattice
            .lambda()
            .iter()
            .map(|&l| {
                let c = measure.density_sq(l).value_or_zero() * dxi;
                let w = semigroup_integral(l, dt);
                let v = semigroup_integral(2.0 * l, dt);
                ModeCoefficients {
                    decay: (-l * dt).exp(),
                    increment: (c * dt).sqrt(),
                    eta_z1: c.sqrt() * w / dt.sqrt(),
                    eta_z2: (c * (v - w * w / dt).max(0.0)).sqrt(),
                }
            })
            .collect();
        let plan = SpectralPlan::new(&lattice);
        Ok(Self {
            measure,
            lattice,
            seed,
            coefficients,
            plan,
        })
    }

    pub fn measure(&self) -> &SpectralMeasure {
        &self.measure
    }
    pub fn lattice(&self) -> &Arc<SpaceTimeLattice> {
        &self.lattice
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn rng_id(&self) -> &'static str {
        RNG_ID
    }

    fn step_rng(&self, path: u64, step: usize) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(path);
        rng.set_word_pos((step as u128) << 32);
        rng
    }

    /// Draws `(dW, eta)` for every mode of one step.
    fn draw_step(&self, path: u64, step: usize, dw: &mut [Complex64], eta: &mut [Complex64]) {
        let mut rng = self.step_rng(path, step);
        let mut normal = || -> f64 { rng.sample(StandardNormal) };
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for l in 0..self.lattice.n_space_total() {
            let m = self.lattice.mirror(l);
            if l > m {
                continue;
            }
            let c = self.coefficients[l];
            let (z1, z2) = if l == m {
                (Complex64::new(normal(), 0.0), Complex64::new(normal(), 0.0))
            } else {
                let (a1, b1, a2, b2) = (normal(), normal(), normal(), normal());
                (Complex64::new(a1 * h, b1 * h), Complex64::new(a2 * h, b2 * h))
            };
            dw[l] = z1 * c.increment;
            eta[l] = z1 * c.eta_z1 + z2 * c.eta_z2;
            if l != m {
                dw[m] = dw[l].conj();
                eta[m] = eta[l].conj();
            }
        }
    }

    /// Noise increment of `path` over step `step`, as the Fourier transform of
    /// the physical increment field (so its physical variance is `dt f(0)`).
    pub fn sample_noise_increment(&self, path: u64, step: usize) -> Result<Field> {
        if step >= self.lattice.n_time() {
            return Err(Error::OutOfRange(format!(
                "step {step} outside 0..{}",
                self.lattice.n_time()
            )));
        }
        let n = self.lattice.n_space_total();
        let mut dw = vec![Complex64::new(0.0, 0.0); n];
        let mut eta = dw.clone();
        self.draw_step(path, step, &mut dw, &mut eta);
        let dxi = self.lattice.frequency_cell_volume();
        dw.iter_mut().for_each(|v| *v /= dxi);
        Field::from_values(self.lattice.clone(), Layout::SpaceOnly, Representation::Frequency, dw)
    }

    /// Generates the full noise record and solution amplitudes of one path.
    pub fn sample_path(&self, path: u64) -> SamplePath {
        let n = self.lattice.n_space_total();
        let nt = self.lattice.n_time();
        let mut increments = vec![Complex64::new(0.0, 0.0); n * nt];
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); n * (nt + 1)];
        let mut eta = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..nt {
            self.draw_step(path, k, &mut increments[k * n..(k + 1) * n], &mut eta);
            let (head, tail) = amplitudes.split_at_mut((k + 1) * n);
            let prev = &head[k * n..];
            for (j, next) in tail[..n].iter_mut().enumerate() {
                *next = prev[j] * self.coefficients[j].decay + eta[j];
            }
        }
        SamplePath {
            path,
            increments,
            amplitudes,
        }
    }

    /// Physical solution field `u` of a sampled path (real, `u(0) = 0`).
    pub fn solution_field(&self, sample: &SamplePath) -> Field {
        let n = self.lattice.n_space_total();
        let dxi = self.lattice.frequency_cell_volume();
        let mut values: Vec<Complex64> = sample.amplitudes.iter().map(|a| a / dxi).collect();
        for slice in values.chunks_mut(n) {
            self.plan.inverse(slice);
            slice.iter_mut().for_each(|v| v.im = 0.0);
        }
        Field::from_values(self.lattice.clone(), Layout::SpaceTime, Representation::Physical, values)
            .expect("sizes match the lattice")
    }

    /// Solution of path `path`. Refuses measures without a process solution.
    pub fn simulate_u(&self, path: u64) -> Result<Field> {
        self.measure.require_dalang()?;
        Ok(self.solution_field(&self.sample_path(path)))
    }

    /// `M(phi) = sum_k sum_xi F phi(t_k, xi) conj(dW_k(xi))`, left-point rule.
    pub fn stochastic_integral(&self, phi: &Field, sample: &SamplePath) -> Result<f64> {
        let spectrum = self.integrand_spectrum(phi)?;
        Ok(self.integral_from_spectrum(&spectrum, sample))
    }

    /// Frequency values of an integrand, checked against the model's lattice.
    pub fn integrand_spectrum(&self, phi: &Field) -> Result<Field> {
        phi.require_layout(Layout::SpaceTime)?;
        if **phi.lattice() != *self.lattice {
            return Err(Error::LatticeMismatch);
        }
        Ok(phi.to_frequency())
    }

    /// [`stochastic_integral`](Self::stochastic_integral) for a precomputed spectrum.
    pub fn integral_from_spectrum(&self, spectrum: &Field, sample: &SamplePath) -> f64 {
        let n = self.lattice.n_space_total();
        let terms: Vec<f64> = (0..self.lattice.n_time())
            .map(|k| {
                let row: Vec<f64> = spectrum
                    .slice(k)
                    .iter()
                    .zip(&sample.increments[k * n..(k + 1) * n])
                    .map(|(f, w)| (f * w.conj()).re)
                    .collect();
                pairwise_sum(&row)
            })
            .collect();
        pairwise_sum(&terms)
    }

    /// Per-coordinate first and second moments of `stat(path)` over `count` paths.
    ///
    /// Paths are processed in fixed blocks; partial sums are combined in path
    /// order, so the result does not depend on the thread count.
    pub fn ensemble_moments<F>(&self, count: usize, width: usize, stat: F) -> EnsembleMoments
    where
        F: Fn(&NoiseModel, &SamplePath, &mut [f64]) + Sync,
    {
        let blocks = count.div_ceil(BLOCK);
        let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let start = b * BLOCK;
                let end = (start + BLOCK).min(count);
                let rows: Vec<Vec<f64>> = (start..end)
                    .map(|p| {
                        let sample = self.sample_path(p as u64);
                        let mut row = vec![0.0; width];
                        stat(self, &sample, &mut row);
                        row
                    })
                    .collect();
                let mut sum = vec![0.0; width];
                let mut sq = vec![0.0; width];
                let mut column = Vec::with_capacity(rows.len());
                for i in 0..width {
                    column.clear();
                    column.extend(rows.iter().map(|r| r[i]));
                    sum[i] = pairwise_sum(&column);
                    column.iter_mut().for_each(|v| *v *= *v);
                    sq[i] = pairwise_sum(&column);
                }
                (sum, sq)
            })
            .collect();
        let mut mean = vec![0.0; width];
        let mut second = vec![0.0; width];
        let mut column = Vec::with_capacity(blocks);
        for i in 0..width {
            column.clear();
            column.extend(partial.iter().map(|p| p.0[i]));
            mean[i] = pairwise_sum(&column) / count as f64;
            column.clear();
            column.extend(partial.iter().map(|p| p.1[i]));
            second[i] = pairwise_sum(&column) / count as f64;
        }
        EnsembleMoments { count, mean, second }
    }

    /// Generates `count` paths (path `i` uses stream `i`) in parallel.
    pub fn generate_ensemble(&self, count: usize) -> Result<PathEnsemble> {
        self.measure.require_dalang()?;
        let u_samples = (0..count as u64)
            .into_par_iter()
            .map(|p| self.solution_field(&self.sample_path(p)))
            .collect();
        Ok(PathEnsemble {
            count,
            paths: (0..count as u64).collect(),
            u_samples,
        })
    }

    /// Compares Monte-Carlo `E[M(phi) u(t, x)]` with a deterministic `h`.
    pub fn representer_mc_check(&self, phi: &Field, h: &Field, count: usize) -> Result<RepresenterMcReport> {
        let spectrum = self.integrand_spectrum(phi)?;
        h.require_layout(Layout::SpaceTime)?;
        if **h.lattice() != *self.lattice {
            return Err(Error::LatticeMismatch);
        }
        let target = h.real_values();
        let width = target.len();
        let moments = self.ensemble_moments(count, width, |nm, sample, row| {
            let m = nm.integral_from_spectrum(&spectrum, sample);
            let u = nm.solution_field(sample);
            for (r, v) in row.iter_mut().zip(u.values()) {
                *r = m * v.re;
            }
        });
        let mut max_z: f64 = 0.0;
        let mut compared = 0;
        let mut max_abs_error: f64 = 0.0;
        for i in 0..width {
            let se = moments.standard_error(i);
            let err = moments.mean[i] - target[i];
            max_abs_error = max_abs_error.max(err.abs());
            if se > 0.0 {
                compared += 1;
                max_z = max_z.max(err.abs() / se);
            } else if err != 0.0 {
                max_z = f64::INFINITY;
            }
        }
        Ok(RepresenterMcReport {
            paths: count,
            points_compared: compared,
            max_studentized_deviation: max_z,
            max_abs_error,
        })
    }
}

/// Sample means of a statistic and of its square.
#[derive(Debug, Clone)]
pub struct EnsembleMoments {
    pub count: usize,
    pub mean: Vec<f64>,
    pub second: Vec<f64>,
}

impl EnsembleMoments {
    /// Unbiased sample variance of coordinate `i`.
    pub fn variance(&self, i: usize) -> f64 {
        let n = self.count as f64;
        ((self.second[i] - self.mean[i] * self.mean[i]) * n / (n - 1.0)).max(0.0)
    }

    /// Standard error of the mean of coordinate `i`.
    pub fn standard_error(&self, i: usize) -> f64 {
        (self.variance(i) / self.count as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RepresenterMcReport {
    pub paths: usize,
    pub points_compared: usize,
    pub max_studentized_deviation: f64,
    pub max_abs_error: f64,
}

/// Solution samples of an ensemble, in path order.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub count: usize,
    /// Stream index of each path.
    pub paths: Vec<u64>,
    pub u_samples: Vec<Field>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub seed: u64,
    pub rng_id: String,
    pub measure: SpectralMeasure,
    pub lattice: LatticeSpec,
    pub count: usize,
    pub files: Vec<String>,
}

/// Writes `manifest.json` and one `path_NNNNN.field` per sample into `dir`.
pub fn write_ensemble(dir: &Path, nm: &NoiseModel, ensemble: &PathEnsemble) -> Result<EnsembleManifest> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(ensemble.count);
    for (p, u) in ensemble.paths.iter().zip(&ensemble.u_samples) {
        let name = format!("path_{p:05}.field");
        write_field(dir.join(&name), u)?;
        files.push(name);
    }
    let manifest = EnsembleManifest {
        seed: nm.seed(),
        rng_id: RNG_ID.to_string(),
        measure: nm.measure().clone(),
        lattice: nm.lattice().spec(),
        count: ensemble.count,
        files,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::norm0;
    use crate::pde::solve_forward;
    use crate::profiles::band_limited_integrand;
    use crate::spectral::kernel_eval;

    fn model(seed: u64) -> NoiseModel {
        let lat = Arc::new(SpaceTimeLattice::new_1d(8.0, 16, 1.0, 16).unwrap());
        NoiseModel::new(SpectralMeasure::bessel(2.0, 1).unwrap(), lat, seed).unwrap()
    }

    #[test]
    fn reproducible_and_independent_paths() {
        let a = model(7);
        let b = model(7);
        let (pa, pb) = (a.sample_path(3), b.sample_path(3));
        assert_eq!(pa.increments, pb.increments);
        assert_eq!(pa.amplitudes, pb.amplitudes);
        assert_ne!(a.sample_path(4).increments, pa.increments);
        assert_ne!(model(8).sample_path(3).increments, pa.increments);
        let inc = a.sample_noise_increment(3, 5).unwrap();
        let dxi = a.lattice().frequency_cell_volume();
        let n = a.lattice().n_space_total();
        for (x, y) in inc.values().iter().zip(&pa.increments[5 * n..6 * n]) {
            assert_eq!(*x, y / dxi);
        }
        assert!(a.sample_noise_increment(0, 16).is_err());
    }

    #[test]
    fn physical_fields_are_real_and_start_at_zero() {
        let nm = model(1);
        let s = nm.sample_path(0);
        let mut raw: Vec<Complex64> = s.amplitudes.clone();
        let n = nm.lattice().n_space_total();
        for slice in raw.chunks_mut(n) {
            nm.plan.inverse(slice);
        }
        let scale = raw.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(raw.iter().all(|v| v.im.abs() <= 1e-12 * scale));
        let u = nm.simulate_u(0).unwrap();
        assert!(u.slice(0).iter().all(|v| *v == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn refuses_without_process_solution() {
        let lat = Arc::new(SpaceTimeLattice::new(vec![1.0; 2], vec![4; 2], 1.0, 2).unwrap());
        let nm = NoiseModel::new(SpectralMeasure::white(2), lat, 0).unwrap();
        assert!(matches!(nm.simulate_u(0), Err(Error::DalangConditionFails { .. })));
    }

    #[test]
    fn increment_point_variance_matches_kernel() {
        let nm = model(11);
        let lat = nm.lattice().clone();
        let f = kernel_eval(nm.measure(), &lat).unwrap().values.real_values();
        let count = 10_000;
        let plan = SpectralPlan::new(&lat);
        let n = lat.n_space_total();
        let mom = nm.ensemble_moments(count, 3, |nm, s, row| {
            let dxi = nm.lattice().frequency_cell_volume();
            let mut w: Vec<Complex64> = s.increments[..n].iter().map(|v| v / dxi).collect();
            plan.inverse(&mut w);
            row[0] = w[0].re * w[0].re;
            row[1] = w[0].re * w[3].re;
            row[2] = w[5].re;
        });
        let dt = lat.dt();
        for (i, target) in [(0, dt * f[0]), (1, dt * f[3]), (2, 0.0)] {
            let z = (mom.mean[i] - target).abs() / mom.standard_error(i);
            assert!(z < 4.0, "coordinate {i}: z = {z}");
        }
    }

    #[test]
    fn amplitude_variance_matches_ou_formula() {
        let nm = model(5);
        let lat = nm.lattice().clone();
        let n = lat.n_space_total();
        let nt = lat.n_time();
        let mom = nm.ensemble_moments(10_000, n, |_, s, row| {
            for j in 0..n {
                row[j] = s.amplitudes[nt * n + j].norm_sqr();
            }
        });
        let dxi = lat.frequency_cell_volume();
        for j in 0..n {
            let l = lat.lambda()[j];
            let target = nm.measure().density_sq(l).value_or_zero() * dxi * semigroup_integral(2.0 * l, lat.t_max());
            let z = (mom.mean[j] - target).abs() / mom.standard_error(j);
            assert!(z < 4.0, "mode {j}: z = {z}");
        }
    }

    #[test]
    fn isometry_and_representer_in_expectation() {
        let nm = model(21);
        let lat = nm.lattice().clone();
        let phi = band_limited_integrand(&lat, 0.5, 2);
        let spec = nm.integrand_spectrum(&phi).unwrap();
        let mom = nm.ensemble_moments(10_000, 2, |nm, s, row| {
            let m = nm.integral_from_spectrum(&spec, s);
            row[0] = m;
            row[1] = m * m;
        });
        let target = norm0(&phi, nm.measure()).unwrap().powi(2);
        assert!(mom.mean[0].abs() / mom.standard_error(0) < 4.0);
        assert!((mom.mean[1] - target).abs() / mom.standard_error(1) < 4.0);

        let phi1 = crate::fracops::apply(crate::fracops::OperatorSpec::BesselPotential(2.0), &phi).unwrap();
        let h = solve_forward(&phi1).unwrap().real_part();
        let r = nm.representer_mc_check(&phi, &h, 10_000).unwrap();
        assert!(r.max_studentized_deviation <= 4.0, "{r:?}");
    }

    #[test]
    fn integrand_after_horizon_contributes_nothing() {
        let nm = model(2);
        let lat = nm.lattice().clone();
        let mut phi = Field::zeros(lat.clone(), Layout::SpaceTime, Representation::Physical);
        let last = lat.n_time();
        phi.slice_mut(last).iter_mut().for_each(|v| *v = Complex64::new(1.0, 0.0));
        let s = nm.sample_path(0);
        assert_eq!(nm.stochastic_integral(&phi, &s).unwrap(), 0.0);
    }

    #[test]
    fn moments_ignore_thread_count() {
        let nm = model(3);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| nm.ensemble_moments(300, 1, |_, s, row| row[0] = s.amplitudes[40].re).mean[0])
        };
        assert_eq!(run(1).to_bits(), run(4).to_bits());
    }
}
