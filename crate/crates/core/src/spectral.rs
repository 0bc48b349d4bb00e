//! Periodic square grids, 2D discrete Fourier transforms and spectral algebra.
//!
//! Layout convention used everywhere in this crate: a field on an `n × n`
//! grid is stored row-major with the x-index outer, so `values[i * n + j]`
//! is the sample at `(x_i, y_j) = (i·dx, j·dx)`. Spectral coefficients use the
//! same layout, `coeffs[p * n + q]` being the mode with x-index `p` and
//! y-index `q`.
//!
//! The forward transform is unnormalized and the inverse carries `1/n²`, so a
//! pure cosine of unit amplitude shows up with magnitude `n²/2`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{KseError, Result};

/// Side length and half domain size of a square periodic grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n: usize,
    pub half_length: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n: 64,
            half_length: 10.0,
        }
    }
}

impl GridSpec {
    pub fn new(n: usize, half_length: f64) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(KseError::InvalidGrid(format!(
                "n must be even and >= 8, got {n}"
            )));
        }
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(KseError::InvalidGrid(format!(
                "half length must be positive, got {half_length}"
            )));
        }
        Ok(Self { n, half_length })
    }

    /// Full domain side `2L`.
    pub fn side(&self) -> f64 {
        2.0 * self.half_length
    }

    pub fn dx(&self) -> f64 {
        self.side() / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    /// Signed frequency index in `[-n/2, n/2 - 1]` of DFT index `j`.
    pub fn signed_index(&self, j: usize) -> i64 {
        let n = self.n as i64;
        let j = j as i64;
        if j < n / 2 {
            j
        } else {
            j - n
        }
    }

    pub fn wavenumber(&self, j: usize) -> f64 {
        PI * self.signed_index(j) as f64 / self.half_length
    }

    pub fn is_nyquist(&self, j: usize) -> bool {
        j == self.n / 2
    }

    /// True when the mode survives the 2/3 truncation rule.
    pub fn retained_by_two_thirds(&self, j: usize) -> bool {
        3 * self.signed_index(j).unsigned_abs() as usize <= self.n
    }

    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self.n != other.n || self.half_length.to_bits() != other.half_length.to_bits() {
            return Err(KseError::GridMismatch(format!(
                "n={} L={} vs n={} L={}",
                self.n, self.half_length, other.n, other.half_length
            )));
        }
        Ok(())
    }
}

/// Real samples of φ on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl PhysicalField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(KseError::Shape {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x, y)` at every grid node.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n;
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..n {
            for j in 0..n {
                values.push(f(grid.coord(i), grid.coord(j)));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `Σ φ² dx²`.
    pub fn energy(&self) -> f64 {
        let dx = self.grid.dx();
        self.values.iter().map(|v| v * v).sum::<f64>() * dx * dx
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(KseError::NonFinite { index }),
            None => Ok(()),
        }
    }
}

/// Unnormalized 2D DFT coefficients of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_coeffs(grid: GridSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(KseError::Shape {
                expected: grid.len(),
                got: coeffs.len(),
            });
        }
        Ok(Self { grid, coeffs })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn get(&self, p: usize, q: usize) -> Complex64 {
        self.coeffs[p * self.grid.n + q]
    }

    pub fn set(&mut self, p: usize, q: usize, value: Complex64) {
        let n = self.grid.n;
        self.coeffs[p * n + q] = value;
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn zero_mean(&mut self) {
        self.coeffs[0] = Complex64::new(0.0, 0.0);
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs
            .iter()
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn scale(&mut self, factor: f64) {
        self.coeffs.iter_mut().for_each(|c| *c *= factor);
    }

    /// `self + factor·other`.
    pub fn axpy(&self, factor: f64, other: &SpectralField) -> Result<SpectralField> {
        self.grid.check_same(&other.grid)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + b * factor)
            .collect();
        Ok(SpectralField {
            grid: self.grid,
            coeffs,
        })
    }

    /// Largest deviation from Hermitian symmetry relative to the field norm.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid.n;
        let mut worst: f64 = 0.0;
        for p in 0..n {
            for q in 0..n {
                let a = self.coeffs[p * n + q];
                let b = self.coeffs[((n - p) % n) * n + (n - q) % n].conj();
                worst = worst.max((a - b).norm());
            }
        }
        worst / self.norm().max(f64::MIN_POSITIVE)
    }

    /// Replaces the spectrum by its nearest Hermitian one, i.e. the transform
    /// of the real part of the field.
    pub fn project_hermitian(&mut self) {
        project_hermitian(self.grid.n, &mut self.coeffs);
    }

    /// Flattens to interleaved `(re, im)` pairs.
    pub fn to_real_vec(&self) -> Vec<f64> {
        self.coeffs.iter().flat_map(|c| [c.re, c.im]).collect()
    }

    pub fn from_real_vec(grid: GridSpec, data: &[f64]) -> Result<Self> {
        if data.len() != 2 * grid.len() {
            return Err(KseError::Shape {
                expected: 2 * grid.len(),
                got: data.len(),
            });
        }
        let coeffs = data
            .chunks_exact(2)
            .map(|c| Complex64::new(c[0], c[1]))
            .collect();
        Ok(Self { grid, coeffs })
    }

    /// Maps the spectrum onto a grid of a different resolution over the same
    /// domain, truncating or zero-padding the signed modes and rescaling for
    /// the unnormalized convention. Nyquist modes of the source are dropped.
    pub fn resample(&self, n_new: usize) -> Result<SpectralField> {
        let target = GridSpec::new(n_new, self.grid.half_length)?;
        let mut out = SpectralField::zeros(target);
        let scale = (n_new as f64 / self.grid.n as f64).powi(2);
        let half_new = (n_new / 2) as i64;
        let n_old = self.grid.n;
        let wrap = |s: i64, n: usize| -> usize { s.rem_euclid(n as i64) as usize };
        for p in 0..n_old {
            let sp = self.grid.signed_index(p);
            if self.grid.is_nyquist(p) || sp.abs() >= half_new {
                continue;
            }
            for q in 0..n_old {
                let sq = self.grid.signed_index(q);
                if self.grid.is_nyquist(q) || sq.abs() >= half_new {
                    continue;
                }
                out.set(wrap(sp, n_new), wrap(sq, n_new), self.get(p, q) * scale);
            }
        }
        Ok(out)
    }

    /// Writes the `KSE2` binary record.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.grid.n as u32).to_le_bytes())?;
        w.write_all(&self.grid.half_length.to_le_bytes())?;
        let mut buf = Vec::with_capacity(16 * self.coeffs.len());
        for c in &self.coeffs {
            buf.extend_from_slice(&c.re.to_le_bytes());
            buf.extend_from_slice(&c.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(KseError::Format("bad magic, expected KSE2".into()));
        }
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2)?;
        let version = u16::from_le_bytes(b2);
        if version != FORMAT_VERSION {
            return Err(KseError::Format(format!(
                "unsupported field format version {version}"
            )));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let grid = GridSpec::new(n, f64::from_le_bytes(b8))?;
        let mut raw = vec![0u8; 16 * grid.len()];
        r.read_exact(&mut raw)?;
        let coeffs = raw
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect();
        Ok(Self { grid, coeffs })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

const MAGIC: &[u8; 4] = b"KSE2";
const FORMAT_VERSION: u16 = 1;

/// Planned forward/inverse transforms for one grid size.
#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn run(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        debug_assert_eq!(data.len(), n * n);
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        // contiguous rows run along y
        plan.process_with_scratch(data, &mut scratch);
        transpose_square(data, n);
        plan.process_with_scratch(data, &mut scratch);
        transpose_square(data, n);
    }

    /// Unnormalized forward transform in place.
    pub fn forward_inplace(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// Inverse transform in place, including the `1/n²` factor.
    pub fn inverse_inplace(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
        let s = 1.0 / (self.n * self.n) as f64;
        data.iter_mut().for_each(|c| *c *= s);
    }

    pub fn dft2(&self, field: &PhysicalField) -> Result<SpectralField> {
        field.check_finite()?;
        let mut data: Vec<Complex64> = field
            .values
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        self.forward_inplace(&mut data);
        Ok(SpectralField {
            grid: field.grid,
            coeffs: data,
        })
    }

    pub fn idft2(&self, spec: &SpectralField) -> Result<PhysicalField> {
        if !spec.is_finite() {
            let index = spec
                .coeffs
                .iter()
                .position(|c| !(c.re.is_finite() && c.im.is_finite()))
                .unwrap();
            return Err(KseError::NonFinite { index });
        }
        let mut data = spec.coeffs.clone();
        self.inverse_inplace(&mut data);
        let re_norm = data.iter().map(|c| c.re * c.re).sum::<f64>().sqrt();
        let im_norm = data.iter().map(|c| c.im * c.im).sum::<f64>().sqrt();
        if im_norm > 1e-6 * re_norm.max(f64::MIN_POSITIVE) && im_norm > 1e-300 {
            return Err(KseError::NotHermitian {
                residue: im_norm / re_norm.max(f64::MIN_POSITIVE),
            });
        }
        Ok(PhysicalField {
            grid: spec.grid,
            values: data.into_iter().map(|c| c.re).collect(),
        })
    }
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

pub fn dft2(field: &PhysicalField) -> Result<SpectralField> {
    Fft2::new(field.grid.n).dft2(field)
}

pub fn idft2(spec: &SpectralField) -> Result<PhysicalField> {
    Fft2::new(spec.grid.n).idft2(spec)
}

/// Spectra of `(φ_x, φ_y)`, with Nyquist rows and columns zeroed.
/// In-place `c(k) ← ½(c(k) + conj c(−k))` on an `n × n` spectrum.
pub fn project_hermitian(n: usize, coeffs: &mut [Complex64]) {
    for p in 0..n {
        let mp = (n - p) % n;
        for q in 0..n {
            let mq = (n - q) % n;
            let (k, m) = (p * n + q, mp * n + mq);
            if k < m {
                let avg = (coeffs[k] + coeffs[m].conj()) * 0.5;
                coeffs[k] = avg;
                coeffs[m] = avg.conj();
            } else if k == m {
                coeffs[k].im = 0.0;
            }
        }
    }
}

pub fn spectral_gradient(spec: &SpectralField) -> (SpectralField, SpectralField) {
    let grid = spec.grid;
    let n = grid.n;
    let mut dx = SpectralField::zeros(grid);
    let mut dy = SpectralField::zeros(grid);
    for p in 0..n {
        if grid.is_nyquist(p) {
            continue;
        }
        let kx = grid.wavenumber(p);
        for q in 0..n {
            if grid.is_nyquist(q) {
                continue;
            }
            let ky = grid.wavenumber(q);
            let c = spec.get(p, q);
            dx.set(p, q, Complex64::new(0.0, kx) * c);
            dy.set(p, q, Complex64::new(0.0, ky) * c);
        }
    }
    (dx, dy)
}

/// 2/3-rule truncation: zero every mode with `|signed index| > n/3` on either axis.
pub fn dealias(spec: &SpectralField) -> SpectralField {
    let mut out = spec.clone();
    dealias_inplace(&mut out);
    out
}

pub fn dealias_inplace(spec: &mut SpectralField) {
    let grid = spec.grid;
    let n = grid.n;
    for p in 0..n {
        let keep_p = grid.retained_by_two_thirds(p);
        for q in 0..n {
            if !(keep_p && grid.retained_by_two_thirds(q)) {
                spec.coeffs[p * n + q] = Complex64::new(0.0, 0.0);
            }
        }
    }
}

/// Unnormalized Euclidean distance over all complex coefficients.
pub fn spectral_distance(a: &SpectralField, b: &SpectralField) -> Result<f64> {
    a.grid.check_same(&b.grid)?;
    Ok(a.coeffs
        .iter()
        .zip(&b.coeffs)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Magnitudes `|ê_(p,q)|` of the low modes used to tabulate equilibria.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LeadingCoefficients {
    pub e01: f64,
    pub e11: f64,
    pub e10: f64,
    pub e20: f64,
    pub e21: f64,
    pub e30: f64,
    pub e31: f64,
    pub e02: f64,
    pub e12: f64,
    pub e22: f64,
}

impl LeadingCoefficients {
    pub const NAMES: [&'static str; 10] = [
        "e01", "e11", "e10", "e20", "e21", "e30", "e31", "e02", "e12", "e22",
    ];

    /// `(x-index, y-index)` of each entry, in `NAMES` order.
    pub const INDICES: [(usize, usize); 10] = [
        (0, 1),
        (1, 1),
        (1, 0),
        (2, 0),
        (2, 1),
        (3, 0),
        (3, 1),
        (0, 2),
        (1, 2),
        (2, 2),
    ];

    pub fn as_array(&self) -> [f64; 10] {
        [
            self.e01, self.e11, self.e10, self.e20, self.e21, self.e30, self.e31, self.e02,
            self.e12, self.e22,
        ]
    }

    pub fn from_array(a: [f64; 10]) -> Self {
        Self {
            e01: a[0],
            e11: a[1],
            e10: a[2],
            e20: a[3],
            e21: a[4],
            e30: a[5],
            e31: a[6],
            e02: a[7],
            e12: a[8],
            e22: a[9],
        }
    }
}

pub fn leading_coefficients(spec: &SpectralField) -> LeadingCoefficients {
    let mut out = [0.0; 10];
    for (slot, &(p, q)) in out.iter_mut().zip(LeadingCoefficients::INDICES.iter()) {
        *slot = spec.get(p, q).norm();
    }
    LeadingCoefficients::from_array(out)
}
