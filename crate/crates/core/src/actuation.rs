//! Gaussian actuators and point sensors: the interface between the agent's
//! action/observation vectors and the PDE.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{KseError, Result};
use crate::spectral::{Fft2, GridSpec, PhysicalField, SpectralField};

/// Action amplitudes `u_ij`, row-major with the x-center index outer.
pub type Action = Vec<f64>;
/// Sensor readings, row-major over the sensor grid.
pub type Observation = Vec<f64>;

/// Post-noise clip bound relative to `a_max`.
pub const CLIP_FACTOR: f64 = 1.2;

/// Grid indices of the default 6×6 actuator centers on a 64-point axis.
const DEFAULT_CENTER_INDICES: [usize; 6] = [8, 18, 28, 38, 48, 58];

#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorLayout {
    pub m: usize,
    pub sigma: f64,
    pub a_max: f64,
    /// Center coordinates along each axis; the m² centers are their product.
    pub centers: Vec<f64>,
}

impl ActuatorLayout {
    /// With `m = 6` the centers sit at grid indices 8, 18, …, 58 (scaled to
    /// the domain); other counts are spaced uniformly with a half-spacing offset.
    pub fn new(m: usize, sigma: f64, a_max: f64, grid: GridSpec) -> Result<Self> {
        if m == 0 {
            return Err(KseError::InvalidArgument(
                "actuators_per_side must be >= 1".into(),
            ));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(KseError::InvalidArgument(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        if !(a_max > 0.0 && a_max.is_finite()) {
            return Err(KseError::InvalidArgument(format!(
                "a_max must be positive, got {a_max}"
            )));
        }
        let side = grid.side();
        let centers = if m == DEFAULT_CENTER_INDICES.len() {
            DEFAULT_CENTER_INDICES
                .iter()
                .map(|&i| i as f64 * side / 64.0)
                .collect()
        } else {
            (0..m).map(|i| (i as f64 + 0.5) * side / m as f64).collect()
        };
        Ok(Self {
            m,
            sigma,
            a_max,
            centers,
        })
    }

    pub fn default_for(grid: GridSpec) -> Self {
        Self::new(6, 2.4, 3.0, grid).expect("default layout is valid")
    }

    pub fn count(&self) -> usize {
        self.m * self.m
    }

    pub fn clip_bound(&self) -> f64 {
        CLIP_FACTOR * self.a_max
    }
}

/// Minimum-image separation on a periodic axis of length `side`.
pub fn periodic_offset(a: f64, b: f64, side: f64) -> f64 {
    let d = a - b;
    d - side * (d / side).round()
}

/// Normalized Gaussian bump centered at `(cx, cy)`, evaluated with
/// minimum-image distances.
pub fn gaussian(x: f64, y: f64, cx: f64, cy: f64, sigma: f64, side: f64) -> f64 {
    let dx = periodic_offset(x, cx, side);
    let dy = periodic_offset(y, cy, side);
    (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma)
}

/// Basis fields `b_ij` in action order.
pub fn actuator_basis(layout: &ActuatorLayout, grid: GridSpec) -> Vec<PhysicalField> {
    let side = grid.side();
    let mut out = Vec::with_capacity(layout.count());
    for &cx in &layout.centers {
        for &cy in &layout.centers {
            out.push(PhysicalField::from_fn(grid, |x, y| {
                gaussian(x, y, cx, cy, layout.sigma, side)
            }));
        }
    }
    out
}

/// Layout plus precomputed basis spectra; forcing assembly is a linear
/// combination of the cached spectra.
#[derive(Debug, Clone)]
pub struct Actuators {
    layout: ActuatorLayout,
    grid: GridSpec,
    basis: Vec<PhysicalField>,
    spectra: Vec<SpectralField>,
}

impl Actuators {
    pub fn new(layout: ActuatorLayout, grid: GridSpec) -> Self {
        let basis = actuator_basis(&layout, grid);
        let fft = Fft2::new(grid.n);
        let spectra = basis
            .iter()
            .map(|b| fft.dft2(b).expect("finite basis"))
            .collect();
        Self {
            layout,
            grid,
            basis,
            spectra,
        }
    }

    pub fn layout(&self) -> &ActuatorLayout {
        &self.layout
    }

    pub fn basis(&self) -> &[PhysicalField] {
        &self.basis
    }

    pub fn check_action(&self, action: &[f64]) -> Result<()> {
        if action.len() != self.layout.count() {
            return Err(KseError::Shape {
                expected: self.layout.count(),
                got: action.len(),
            });
        }
        let bound = self.layout.clip_bound();
        for (index, &value) in action.iter().enumerate() {
            // 1.2 · 3.0 rounds just below 3.6
            if !(value.abs() <= bound * (1.0 + 1e-12)) {
                return Err(KseError::ActionOutOfBounds {
                    index,
                    value,
                    bound,
                });
            }
        }
        Ok(())
    }

    /// Spectrum of `F = Σ u_ij b_ij`.
    pub fn forcing_field(&self, action: &[f64]) -> Result<SpectralField> {
        self.check_action(action)?;
        let mut out = vec![Complex64::default(); self.grid.len()];
        for (u, spec) in action.iter().zip(&self.spectra) {
            if *u == 0.0 {
                continue;
            }
            for (o, c) in out.iter_mut().zip(spec.coeffs()) {
                *o += c * u;
            }
        }
        SpectralField::from_coeffs(self.grid, out)
    }

    /// Physical-space forcing, for visualization.
    pub fn forcing_physical(&self, action: &[f64]) -> Result<PhysicalField> {
        self.check_action(action)?;
        let mut out = vec![0.0; self.grid.len()];
        for (u, b) in action.iter().zip(&self.basis) {
            for (o, v) in out.iter_mut().zip(b.values()) {
                *o += u * v;
            }
        }
        PhysicalField::from_values(self.grid, out)
    }
}

/// Sensor indices along each axis; the sensors are their tensor product.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorLayout {
    pub indices: Vec<usize>,
}

impl SensorLayout {
    pub fn with_stride(grid: GridSpec, stride: usize) -> Result<Self> {
        if stride == 0 || stride > grid.n {
            return Err(KseError::InvalidArgument(format!(
                "sensor stride {stride} invalid for n = {}",
                grid.n
            )));
        }
        Ok(Self {
            indices: (0..grid.n).step_by(stride).collect(),
        })
    }

    pub fn default_for(grid: GridSpec) -> Self {
        Self::with_stride(grid, 4).expect("stride 4 is valid")
    }

    pub fn count(&self) -> usize {
        self.indices.len() * self.indices.len()
    }
}

/// φ sampled at the sensor points, row-major (x outer).
pub fn observe(field: &PhysicalField, layout: &SensorLayout) -> Observation {
    let mut out = Vec::with_capacity(layout.count());
    for &i in &layout.indices {
        for &j in &layout.indices {
            out.push(field.at(i, j));
        }
    }
    out
}
