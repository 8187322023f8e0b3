//! Periodic space-time lattices, fields on them, and the Fourier machinery.
//!
//! Spatial points sit at `x_j = j * L / n` on the torus `[0, L)^d`; the
//! dual grid is `xi_k = 2 pi k / L` with `k` in `[-n/2, n/2)` (stored in
//! the usual DFT order). Time slices are `t_k = k * dt`, `k = 0..=n_time`,
//! so a space-time field carries `n_time + 1` slices.
//!
//! Transforms use `F phi(xi) = (2 pi)^{-d/2} ∫ e^{-i xi.x} phi(x) dx`,
//! discretized as `(2 pi)^{-d/2} dV * DFT`. The inverse carries
//! `(2 pi)^{-d/2} dxi`, and since `dV dxi = (2 pi)^d / N` the pair is an exact
//! inverse and Parseval reads `sum |phi|^2 dV = sum |F phi|^2 dxi`.
//!
//! Integrand-type fields (forcings, test functions, noise) are integrated in
//! time with the left-endpoint rule over slices `0..n_time`; solution-type
//! fields pair with the right-endpoint rule over slices `1..=n_time`.

use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::pairwise_sum;
use crate::spectral::SpectralMeasure;

/// Which discrete operator plays the role of `-Δ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianSymbol {
    /// `|xi|^2` on the dual grid.
    #[default]
    Spectral,
    /// `sum_i (4 / dx_i^2) sin^2(xi_i dx_i / 2)`, the standard second difference.
    SecondDifference,
}

/// Serializable description of a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub extent: Vec<f64>,
    pub n_space: Vec<usize>,
    pub t_max: f64,
    pub n_time: usize,
    #[serde(default)]
    pub laplacian: LaplacianSymbol,
}

/// Periodic spatial grid times a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatticeSpec", into = "LatticeSpec")]
pub struct SpaceTimeLattice {
    extent: Vec<f64>,
    n_space: Vec<usize>,
    t_max: f64,
    n_time: usize,
    laplacian: LaplacianSymbol,
    xi_sq: Vec<f64>,
    lambda: Vec<f64>,
    mirror: Vec<usize>,
}

impl TryFrom<LatticeSpec> for SpaceTimeLattice {
    type Error = Error;

    fn try_from(spec: LatticeSpec) -> Result<Self> {
        SpaceTimeLattice::new(spec.extent, spec.n_space, spec.t_max, spec.n_time)
            .map(|l| l.with_laplacian(spec.laplacian))
    }
}

impl From<SpaceTimeLattice> for LatticeSpec {
    fn from(l: SpaceTimeLattice) -> Self {
        l.spec()
    }
}

impl SpaceTimeLattice {
    pub fn new(extent: Vec<f64>, n_space: Vec<usize>, t_max: f64, n_time: usize) -> Result<Self> {
        if extent.is_empty() || extent.len() != n_space.len() {
            return Err(Error::InvalidLattice(format!(
                "extent has {} axes but n_space has {}",
                extent.len(),
                n_space.len()
            )));
        }
        if let Some(n) = n_space.iter().find(|n| !n.is_power_of_two() || **n < 2) {
            return Err(Error::InvalidLattice(format!(
                "spatial point counts must be powers of two >= 2, got {n}"
            )));
        }
        if extent.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidLattice("extents must be positive".into()));
        }
        if !(t_max.is_finite() && t_max > 0.0) || n_time == 0 {
            return Err(Error::InvalidLattice(
                "need t_max > 0 and at least one time step".into(),
            ));
        }
        let mut lattice = Self {
            extent,
            n_space,
            t_max,
            n_time,
            laplacian: LaplacianSymbol::Spectral,
            xi_sq: Vec::new(),
            lambda: Vec::new(),
            mirror: Vec::new(),
        };
        lattice.rebuild_tables();
        Ok(lattice)
    }

    /// One-dimensional convenience constructor.
    pub fn new_1d(extent: f64, n_space: usize, t_max: f64, n_time: usize) -> Result<Self> {
        Self::new(vec![extent], vec![n_space], t_max, n_time)
    }

    pub fn with_laplacian(mut self, laplacian: LaplacianSymbol) -> Self {
        self.laplacian = laplacian;
        self.rebuild_tables();
        self
    }

    fn rebuild_tables(&mut self) {
        let total = self.n_space_total();
        let mut xi_sq = vec![0.0; total];
        let mut lambda = vec![0.0; total];
        let mut mirror = vec![0; total];
        let mut idx = vec![0usize; self.dim()];
        for flat in 0..total {
            self.unflatten_into(flat, &mut idx);
            let mut s = 0.0;
            let mut l = 0.0;
            let mut m = 0usize;
            for axis in 0..self.dim() {
                let n = self.n_space[axis];
                let xi = self.axis_frequency(axis, idx[axis]);
                s += xi * xi;
                l += match self.laplacian {
                    LaplacianSymbol::Spectral => xi * xi,
                    LaplacianSymbol::SecondDifference => {
                        let h = self.spacing(axis);
                        let s = (0.5 * xi * h).sin();
                        4.0 * s * s / (h * h)
                    }
                };
                m = m * n + (n - idx[axis]) % n;
            }
            xi_sq[flat] = s;
            lambda[flat] = l;
            mirror[flat] = m;
        }
        self.xi_sq = xi_sq;
        self.lambda = lambda;
        self.mirror = mirror;
    }

    pub fn spec(&self) -> LatticeSpec {
        LatticeSpec {
            extent: self.extent.clone(),
            n_space: self.n_space.clone(),
            t_max: self.t_max,
            n_time: self.n_time,
            laplacian: self.laplacian,
        }
    }

    pub fn dim(&self) -> usize {
        self.extent.len()
    }
    pub fn extent(&self) -> &[f64] {
        &self.extent
    }
    pub fn n_space(&self) -> &[usize] {
        &self.n_space
    }
    pub fn t_max(&self) -> f64 {
        self.t_max
    }
    pub fn n_time(&self) -> usize {
        self.n_time
    }
    pub fn laplacian(&self) -> LaplacianSymbol {
        self.laplacian
    }
    pub fn dt(&self) -> f64 {
        self.t_max / self.n_time as f64
    }
    pub fn n_slices(&self) -> usize {
        self.n_time + 1
    }
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }
    pub fn n_space_total(&self) -> usize {
        self.n_space.iter().product()
    }
    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent[axis] / self.n_space[axis] as f64
    }
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }
    pub fn frequency_cell_volume(&self) -> f64 {
        self.extent.iter().map(|l| 2.0 * PI / l).product()
    }

    /// Signed frequency `2 pi k / L` for DFT index `j` along `axis`.
    pub fn axis_frequency(&self, axis: usize, j: usize) -> f64 {
        let n = self.n_space[axis];
        let k = if j < n / 2 { j as isize } else { j as isize - n as isize };
        2.0 * PI * k as f64 / self.extent[axis]
    }

    /// Largest resolvable radius: the inscribed radius of the Nyquist cube.
    pub fn nyquist_radius(&self) -> f64 {
        (0..self.dim())
            .map(|a| PI / self.spacing(a))
            .fold(f64::INFINITY, f64::min)
    }

    fn unflatten_into(&self, mut flat: usize, out: &mut [usize]) {
        for axis in (0..self.dim()).rev() {
            let n = self.n_space[axis];
            out[axis] = flat % n;
            flat /= n;
        }
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        self.unflatten_into(flat, &mut out);
        out
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.n_space)
            .fold(0, |acc, (i, n)| acc * n + (i % n))
    }

    /// Physical position `x_j = j dx` of spatial point `flat`.
    pub fn position(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(a, j)| *j as f64 * self.spacing(a))
            .collect()
    }

    /// Frequency vector of mode `flat`.
    pub fn frequency(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(a, j)| self.axis_frequency(a, *j))
            .collect()
    }

    /// `|xi|^2` per mode.
    pub fn xi_sq(&self) -> &[f64] {
        &self.xi_sq
    }

    /// Symbol of `-Δ` per mode (depends on [`LaplacianSymbol`]).
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Index of `-xi` (equivalently of `-x`).
    pub fn mirror(&self, flat: usize) -> usize {
        self.mirror[flat]
    }

    /// Periodic distance in cells between two spatial points, per axis maximum.
    pub fn cell_distance(&self, a: usize, b: usize) -> usize {
        let ia = self.multi_index(a);
        let ib = self.multi_index(b);
        ia.iter()
            .zip(&ib)
            .zip(&self.n_space)
            .map(|((x, y), n)| {
                let d = x.abs_diff(*y);
                d.min(n - d)
            })
            .max()
            .unwrap_or(0)
    }

    /// Same spatial grid with the point counts (and time steps) multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Ok(Self::new(
            self.extent.clone(),
            self.n_space.iter().map(|n| n * factor).collect(),
            self.t_max,
            self.n_time * factor,
        )?
        .with_laplacian(self.laplacian))
    }
}

/// Physical samples or Fourier transform values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Physical,
    Frequency,
}

impl Representation {
    fn name(self) -> &'static str {
        match self {
            Representation::Physical => "physical",
            Representation::Frequency => "frequency",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    SpaceOnly,
    SpaceTime,
}

impl Layout {
    fn name(self) -> &'static str {
        match self {
            Layout::SpaceOnly => "space-only",
            Layout::SpaceTime => "space-time",
        }
    }
}

/// Quadrature rule for time integrals over `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeRule {
    /// Slices `0..n_time`, weight `dt` each.
    Left,
    /// Slices `1..=n_time`, weight `dt` each.
    Right,
}

impl TimeRule {
    fn slices(self, lattice: &SpaceTimeLattice) -> std::ops::Range<usize> {
        match self {
            TimeRule::Left => 0..lattice.n_time(),
            TimeRule::Right => 1..lattice.n_slices(),
        }
    }
}

/// Complex samples on a lattice, row-major with time slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    lattice: Arc<SpaceTimeLattice>,
    representation: Representation,
    layout: Layout,
    values: Vec<Complex64>,
}

impl Field {
    pub fn zeros(lattice: Arc<SpaceTimeLattice>, layout: Layout, representation: Representation) -> Self {
        let len = Self::expected_len(&lattice, layout);
        Self {
            lattice,
            representation,
            layout,
            values: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn from_values(
        lattice: Arc<SpaceTimeLattice>,
        layout: Layout,
        representation: Representation,
        values: Vec<Complex64>,
    ) -> Result<Self> {
        let expected = Self::expected_len(&lattice, layout);
        if values.len() != expected {
            return Err(Error::InvalidLattice(format!(
                "field has {} values, lattice layout needs {expected}",
                values.len()
            )));
        }
        Ok(Self {
            lattice,
            representation,
            layout,
            values,
        })
    }

    /// Samples a real function `f(t, x)` in physical space.
    pub fn from_fn(lattice: Arc<SpaceTimeLattice>, layout: Layout, f: impl Fn(f64, &[f64]) -> f64) -> Self {
        let n = lattice.n_space_total();
        let positions: Vec<Vec<f64>> = (0..n).map(|j| lattice.position(j)).collect();
        let slices = match layout {
            Layout::SpaceOnly => 1,
            Layout::SpaceTime => lattice.n_slices(),
        };
        let mut values = Vec::with_capacity(n * slices);
        for k in 0..slices {
            let t = lattice.time(k);
            values.extend(positions.iter().map(|x| Complex64::new(f(t, x), 0.0)));
        }
        Self {
            lattice,
            representation: Representation::Physical,
            layout,
            values,
        }
    }

    fn expected_len(lattice: &SpaceTimeLattice, layout: Layout) -> usize {
        match layout {
            Layout::SpaceOnly => lattice.n_space_total(),
            Layout::SpaceTime => lattice.n_space_total() * lattice.n_slices(),
        }
    }

    pub fn lattice(&self) -> &Arc<SpaceTimeLattice> {
        &self.lattice
    }
    pub fn layout(&self) -> Layout {
        self.layout
    }
    pub fn representation(&self) -> Representation {
        self.representation
    }
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn n_slices(&self) -> usize {
        match self.layout {
            Layout::SpaceOnly => 1,
            Layout::SpaceTime => self.lattice.n_slices(),
        }
    }

    pub fn slice(&self, k: usize) -> &[Complex64] {
        let n = self.lattice.n_space_total();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [Complex64] {
        let n = self.lattice.n_space_total();
        &mut self.values[k * n..(k + 1) * n]
    }

    pub fn same_lattice(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.lattice, &other.lattice) || *self.lattice == *other.lattice
    }

    pub(crate) fn check_compatible(&self, other: &Field) -> Result<()> {
        if !self.same_lattice(other) {
            return Err(Error::LatticeMismatch);
        }
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch {
                expected: self.layout.name(),
                found: other.layout.name(),
            });
        }
        Ok(())
    }

    pub(crate) fn require_layout(&self, layout: Layout) -> Result<()> {
        if self.layout != layout {
            return Err(Error::LayoutMismatch {
                expected: layout.name(),
                found: self.layout.name(),
            });
        }
        Ok(())
    }

    pub fn to_frequency(&self) -> Field {
        match self.representation {
            Representation::Frequency => self.clone(),
            Representation::Physical => self.transformed(false),
        }
    }

    pub fn to_physical(&self) -> Field {
        match self.representation {
            Representation::Physical => self.clone(),
            Representation::Frequency => self.transformed(true),
        }
    }

    fn transformed(&self, inverse: bool) -> Field {
        let plan = SpectralPlan::new(&self.lattice);
        let mut out = self.clone();
        let n = self.lattice.n_space_total();
        out.values.par_chunks_mut(n).for_each(|slice| {
            if inverse {
                plan.inverse(slice)
            } else {
                plan.forward(slice)
            }
        });
        out.representation = if inverse {
            Representation::Physical
        } else {
            Representation::Frequency
        };
        out
    }

    /// Same representation, every value multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Field {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Linear combination `a * self + b * other`, in `self`'s representation.
    pub fn combine(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        self.check_compatible(other)?;
        let other = if other.representation == self.representation {
            other.clone()
        } else if self.representation == Representation::Physical {
            other.to_physical()
        } else {
            other.to_frequency()
        };
        let mut out = self.clone();
        for (v, w) in out.values.iter_mut().zip(&other.values) {
            *v = *v * a + *w * b;
        }
        Ok(out)
    }

    /// Pointwise product in physical space (a space-only factor is broadcast over time).
    pub fn multiply_pointwise(&self, other: &Field) -> Result<Field> {
        if !self.same_lattice(other) {
            return Err(Error::LatticeMismatch);
        }
        let a = self.to_physical();
        let b = other.to_physical();
        let n = self.lattice.n_space_total();
        let mut out = a.clone();
        match (a.layout, b.layout) {
            (x, y) if x == y => {
                for (v, w) in out.values.iter_mut().zip(&b.values) {
                    *v *= *w;
                }
            }
            (Layout::SpaceTime, Layout::SpaceOnly) => {
                for chunk in out.values.chunks_mut(n) {
                    for (v, w) in chunk.iter_mut().zip(&b.values) {
                        *v *= *w;
                    }
                }
            }
            _ => {
                return Err(Error::LayoutMismatch {
                    expected: a.layout.name(),
                    found: b.layout.name(),
                })
            }
        }
        Ok(out)
    }

    /// Largest modulus.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest imaginary part relative to the largest modulus (0 for the zero field).
    pub fn imaginary_ratio(&self) -> f64 {
        let m = self.max_abs();
        if m == 0.0 {
            return 0.0;
        }
        self.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max) / m
    }

    /// Real parts of the physical values.
    pub fn real_values(&self) -> Vec<f64> {
        self.to_physical().values.iter().map(|v| v.re).collect()
    }

    /// Physical field with all imaginary parts dropped.
    pub fn real_part(&self) -> Field {
        let mut out = self.to_physical();
        out.values.iter_mut().for_each(|v| v.im = 0.0);
        out
    }

    /// Space-only field holding time slice `k`.
    pub fn time_slice(&self, k: usize) -> Result<Field> {
        self.require_layout(Layout::SpaceTime)?;
        Field::from_values(
            self.lattice.clone(),
            Layout::SpaceOnly,
            self.representation,
            self.slice(k).to_vec(),
        )
    }
}

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

/// Normalized multi-dimensional transforms for one spatial slice.
#[derive(Clone)]
pub struct SpectralPlan {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    forward_scale: f64,
    inverse_scale: f64,
}

impl std::fmt::Debug for SpectralPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPlan").field("shape", &self.shape).finish()
    }
}

impl SpectralPlan {
    pub fn new(lattice: &SpaceTimeLattice) -> Self {
        let mut p = planner().lock().expect("fft planner poisoned");
        let forward = lattice.n_space().iter().map(|n| p.plan_fft_forward(*n)).collect();
        let inverse = lattice.n_space().iter().map(|n| p.plan_fft_inverse(*n)).collect();
        let c = (2.0 * PI).powf(-(lattice.dim() as f64) / 2.0);
        Self {
            shape: lattice.n_space().to_vec(),
            forward,
            inverse,
            forward_scale: c * lattice.cell_volume(),
            inverse_scale: c * lattice.frequency_cell_volume(),
        }
    }

    /// Physical slice to Fourier transform, in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward, self.forward_scale);
    }

    /// Fourier transform to physical slice, in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse, self.inverse_scale);
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>], scale: f64) {
        let dim = self.shape.len();
        let total: usize = self.shape.iter().product();
        debug_assert_eq!(data.len(), total);
        let mut line = Vec::new();
        for axis in 0..dim {
            let n = self.shape[axis];
            let stride: usize = self.shape[axis + 1..].iter().product();
            let plan = &plans[axis];
            if stride == 1 {
                plan.process(data);
                continue;
            }
            line.resize(n, Complex64::new(0.0, 0.0));
            let block = n * stride;
            for outer in 0..total / block {
                for inner in 0..stride {
                    let base = outer * block + inner;
                    for (i, v) in line.iter_mut().enumerate() {
                        *v = data[base + i * stride];
                    }
                    plan.process(&mut line);
                    for (i, v) in line.iter().enumerate() {
                        data[base + i * stride] = *v;
                    }
                }
            }
        }
        data.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Fourier transform of a physical field.
pub fn forward_transform(f: &Field) -> Result<Field> {
    if f.representation != Representation::Physical {
        return Err(Error::LayoutMismatch {
            expected: Representation::Physical.name(),
            found: f.representation.name(),
        });
    }
    Ok(f.to_frequency())
}

/// Physical field from its Fourier transform.
pub fn inverse_transform(f: &Field) -> Result<Field> {
    if f.representation != Representation::Frequency {
        return Err(Error::LayoutMismatch {
            expected: Representation::Frequency.name(),
            found: f.representation.name(),
        });
    }
    Ok(f.to_physical())
}

/// One frequency of the dual grid, as seen by a symbol.
#[derive(Debug, Clone, Copy)]
pub struct Mode<'a> {
    pub index: usize,
    /// `|xi|^2`.
    pub xi_sq: f64,
    /// Symbol of `-Δ` at this mode.
    pub lambda: f64,
    pub lattice: &'a SpaceTimeLattice,
}

impl Mode<'_> {
    pub fn xi(&self) -> Vec<f64> {
        self.lattice.frequency(self.index)
    }
}

/// Evaluates a symbol on every mode; `None` is the zero-mode sentinel and maps to 0.
pub fn symbol_table(
    lattice: &SpaceTimeLattice,
    symbol: impl Fn(&Mode) -> Option<Complex64>,
) -> Result<Vec<Complex64>> {
    (0..lattice.n_space_total())
        .map(|index| {
            let mode = Mode {
                index,
                xi_sq: lattice.xi_sq()[index],
                lambda: lattice.lambda()[index],
                lattice,
            };
            match symbol(&mode) {
                None => Ok(Complex64::new(0.0, 0.0)),
                Some(v) if v.re.is_nan() || v.im.is_nan() => Err(Error::NanSymbol(index)),
                Some(v) => Ok(v),
            }
        })
        .collect()
}

/// Multiplies by a precomputed symbol table in frequency space, slice by slice.
/// The output keeps the input's representation.
pub fn apply_symbol_table(f: &Field, table: &[Complex64]) -> Field {
    let mut out = f.to_frequency();
    let n = f.lattice.n_space_total();
    out.values.par_chunks_mut(n).for_each(|slice| {
        for (v, s) in slice.iter_mut().zip(table) {
            *v *= *s;
        }
    });
    match f.representation {
        Representation::Frequency => out,
        Representation::Physical => out.to_physical(),
    }
}

/// Fourier multiplier `F[out] = symbol(xi) F[f]`.
pub fn apply_multiplier(f: &Field, symbol: impl Fn(&Mode) -> Option<Complex64>) -> Result<Field> {
    let table = symbol_table(&f.lattice, symbol)?;
    Ok(apply_symbol_table(f, &table))
}

fn check_measure(f: &Field, m: &SpectralMeasure) -> Result<()> {
    if m.dim() != f.lattice.dim() {
        return Err(Error::DimensionMismatch {
            measure: m.dim(),
            lattice: f.lattice.dim(),
        });
    }
    Ok(())
}

/// Per-mode weight `g(lambda) dxi` of the covariance inner product.
pub fn measure_weights(lattice: &SpaceTimeLattice, m: &SpectralMeasure) -> Vec<f64> {
    let dxi = lattice.frequency_cell_volume();
    lattice
        .lambda()
        .iter()
        .map(|l| m.density_sq(*l).value_or_zero() * dxi)
        .collect()
}

fn weighted_slice_sum(a: &[Complex64], b: &[Complex64], w: &[f64]) -> Complex64 {
    let re: Vec<f64> = a
        .iter()
        .zip(b)
        .zip(w)
        .map(|((x, y), w)| (x * y.conj()).re * w)
        .collect();
    let im: Vec<f64> = a
        .iter()
        .zip(b)
        .zip(w)
        .map(|((x, y), w)| (x * y.conj()).im * w)
        .collect();
    Complex64::new(pairwise_sum(&re), pairwise_sum(&im))
}

/// Covariance inner product `<phi, psi>_0 = ∫_0^T ∫ F phi conj(F psi) mu(dxi) dt`,
/// left-endpoint rule in time.
pub fn inner0(f: &Field, g: &Field, m: &SpectralMeasure) -> Result<Complex64> {
    f.check_compatible(g)?;
    f.require_layout(Layout::SpaceTime)?;
    check_measure(f, m)?;
    let w = measure_weights(&f.lattice, m);
    let ff = f.to_frequency();
    let gf = g.to_frequency();
    let dt = f.lattice.dt();
    let per_slice: Vec<Complex64> = TimeRule::Left
        .slices(&f.lattice)
        .map(|k| weighted_slice_sum(ff.slice(k), gf.slice(k), &w) * dt)
        .collect();
    Ok(complex_pairwise(&per_slice))
}

/// `||phi||_0`.
pub fn norm0(f: &Field, m: &SpectralMeasure) -> Result<f64> {
    Ok(inner0(f, f, m)?.re.max(0.0).sqrt())
}

/// Space-only product `<phi, psi>_{0,x} = ∫ F phi conj(F psi) mu(dxi)`.
pub fn inner0x(f: &Field, g: &Field, m: &SpectralMeasure) -> Result<Complex64> {
    f.check_compatible(g)?;
    f.require_layout(Layout::SpaceOnly)?;
    check_measure(f, m)?;
    let w = measure_weights(&f.lattice, m);
    Ok(weighted_slice_sum(
        f.to_frequency().values(),
        g.to_frequency().values(),
        &w,
    ))
}

fn complex_pairwise(v: &[Complex64]) -> Complex64 {
    let re: Vec<f64> = v.iter().map(|c| c.re).collect();
    let im: Vec<f64> = v.iter().map(|c| c.im).collect();
    Complex64::new(pairwise_sum(&re), pairwise_sum(&im))
}

/// Plain `L2` inner product in physical space; space-only fields ignore `rule`.
pub fn inner_l2(f: &Field, g: &Field, rule: TimeRule) -> Result<Complex64> {
    f.check_compatible(g)?;
    let a = f.to_physical();
    let b = g.to_physical();
    let dv = f.lattice.cell_volume();
    let ones = vec![dv; f.lattice.n_space_total()];
    match f.layout {
        Layout::SpaceOnly => Ok(weighted_slice_sum(a.values(), b.values(), &ones)),
        Layout::SpaceTime => {
            let dt = f.lattice.dt();
            let per: Vec<Complex64> = rule
                .slices(&f.lattice)
                .map(|k| weighted_slice_sum(a.slice(k), b.slice(k), &ones) * dt)
                .collect();
            Ok(complex_pairwise(&per))
        }
    }
}

pub fn norm_l2(f: &Field, rule: TimeRule) -> Result<f64> {
    Ok(inner_l2(f, f, rule)?.re.max(0.0).sqrt())
}

/// Mixed norm `(∫_0^T ||f(t)||_{L_q}^2 dt)^{1/2}` (left rule).
pub fn mixed_norm_l2q(f: &Field, q: f64) -> Result<f64> {
    f.require_layout(Layout::SpaceTime)?;
    if !(q >= 1.0) {
        return Err(Error::OutOfRange(format!("L_q exponent must be >= 1, got {q}")));
    }
    let p = f.to_physical();
    let dv = f.lattice.cell_volume();
    let dt = f.lattice.dt();
    let per: Vec<f64> = TimeRule::Left
        .slices(&f.lattice)
        .map(|k| {
            let s: Vec<f64> = p.slice(k).iter().map(|v| v.norm().powf(q) * dv).collect();
            pairwise_sum(&s).powf(2.0 / q) * dt
        })
        .collect();
    Ok(pairwise_sum(&per).sqrt())
}
