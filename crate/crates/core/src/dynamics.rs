//! Fourth-order exponential time differencing (ETDRK4) for the forced 2D
//! Kuramoto–Sivashinsky equation in potential form,
//!
//! ```text
//! φ_t + ½|∇φ|² + Δφ + Δ²φ = F(x, y, t)
//! ```
//!
//! Each Fourier mode has linear growth rate `ℓ = s² − s⁴` with
//! `s² = k_x² + k_y²`. The nonlinearity is evaluated pseudospectrally with
//! 2/3-rule truncation. After every step the mean mode is projected out (the
//! equation only fixes φ up to a time-dependent constant) and the spectrum is
//! projected onto Hermitian symmetry.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{KseError, Result};
use crate::spectral::{
    leading_coefficients, project_hermitian, Fft2, GridSpec, PhysicalField, SpectralField,
};

/// Number of contour nodes used for the φ-function means.
pub const CONTOUR_POINTS: usize = 32;
/// Field max-norm beyond which a run is declared blown up.
pub const BLOW_UP_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub spec: SpectralField,
    pub time: f64,
}

impl SimState {
    pub fn new(spec: SpectralField) -> Self {
        Self { spec, time: 0.0 }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::new(SpectralField::zeros(grid))
    }

    pub fn grid(&self) -> GridSpec {
        self.spec.grid()
    }
}

/// Growth rate of a Fourier mode under the linearization about φ = 0.
pub fn linear_symbol(kx: f64, ky: f64) -> f64 {
    let s2 = kx * kx + ky * ky;
    s2 - s2 * s2
}

/// φ-function combinations of one mode, already multiplied by `dt`. `f2`
/// carries the factor 2 that multiplies `(N_a + N_b)` in the update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiWeights {
    pub q: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
}

/// Contour-mean evaluation of the ETDRK4 coefficients for `z₀ = dt·ℓ`,
/// averaged over `CONTOUR_POINTS` nodes on the unit circle around `z₀`.
pub fn contour_phi_weights(dt: f64, ell: f64) -> PhiWeights {
    let z0 = dt * ell;
    let m = CONTOUR_POINTS as f64;
    let (mut q, mut f1, mut f2, mut f3) = (
        Complex64::default(),
        Complex64::default(),
        Complex64::default(),
        Complex64::default(),
    );
    for j in 0..CONTOUR_POINTS {
        let theta = std::f64::consts::PI * (2.0 * j as f64 + 1.0) / m;
        let z = Complex64::new(z0 + theta.cos(), theta.sin());
        let ez = z.exp();
        let ez2 = (z * 0.5).exp();
        let z3 = z * z * z;
        q += (ez2 - 1.0) / z;
        f1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
        f2 += (2.0 + z + ez * (z - 2.0)) / z3;
        f3 += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
    }
    PhiWeights {
        q: dt * q.re / m,
        f1: dt * f1.re / m,
        f2: 2.0 * dt * f2.re / m,
        f3: dt * f3.re / m,
    }
}

/// Per-mode ETDRK4 multipliers for one `(grid, dt)` pair.
#[derive(Debug, Clone)]
pub struct EtdrkTables {
    grid: GridSpec,
    dt: f64,
    pub ell: Vec<f64>,
    pub e: Vec<f64>,
    pub e2: Vec<f64>,
    pub q: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub f3: Vec<f64>,
}

impl EtdrkTables {
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

pub fn precompute_etdrk4(grid: GridSpec, dt: f64) -> Result<EtdrkTables> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(KseError::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let n = grid.n;
    let len = grid.len();
    let mut t = EtdrkTables {
        grid,
        dt,
        ell: Vec::with_capacity(len),
        e: Vec::with_capacity(len),
        e2: Vec::with_capacity(len),
        q: Vec::with_capacity(len),
        f1: Vec::with_capacity(len),
        f2: Vec::with_capacity(len),
        f3: Vec::with_capacity(len),
    };
    // many modes share |k|², so memoize on the bit pattern of ℓ
    let mut cache: std::collections::HashMap<u64, PhiWeights> = std::collections::HashMap::new();
    for p in 0..n {
        let kx = grid.wavenumber(p);
        for qi in 0..n {
            let ky = grid.wavenumber(qi);
            let ell = linear_symbol(kx, ky);
            let w = *cache
                .entry(ell.to_bits())
                .or_insert_with(|| contour_phi_weights(dt, ell));
            t.ell.push(ell);
            t.e.push((dt * ell).exp());
            t.e2.push((dt * ell / 2.0).exp());
            t.q.push(w.q);
            t.f1.push(w.f1);
            t.f2.push(w.f2);
            t.f3.push(w.f3);
        }
    }
    Ok(t)
}

/// Tables plus transforms: everything needed to advance states on one grid.
/// Cheap to clone; the tables are shared.
#[derive(Debug, Clone)]
pub struct Integrator {
    tables: Arc<EtdrkTables>,
    fft: Fft2,
    /// `i·k_x` and `i·k_y` with Nyquist zeroed, and the 2/3 mask.
    ikx: Arc<Vec<f64>>,
    iky: Arc<Vec<f64>>,
    mask: Arc<Vec<bool>>,
}

impl Integrator {
    pub fn new(grid: GridSpec, dt: f64) -> Result<Self> {
        Ok(Self::from_tables(precompute_etdrk4(grid, dt)?))
    }

    pub fn from_tables(tables: EtdrkTables) -> Self {
        let grid = tables.grid;
        let n = grid.n;
        let mut ikx = Vec::with_capacity(grid.len());
        let mut iky = Vec::with_capacity(grid.len());
        let mut mask = Vec::with_capacity(grid.len());
        for p in 0..n {
            for q in 0..n {
                let nyq = grid.is_nyquist(p) || grid.is_nyquist(q);
                ikx.push(if nyq { 0.0 } else { grid.wavenumber(p) });
                iky.push(if nyq { 0.0 } else { grid.wavenumber(q) });
                mask.push(grid.retained_by_two_thirds(p) && grid.retained_by_two_thirds(q));
            }
        }
        Self {
            fft: Fft2::new(n),
            tables: Arc::new(tables),
            ikx: Arc::new(ikx),
            iky: Arc::new(iky),
            mask: Arc::new(mask),
        }
    }

    pub fn tables(&self) -> &EtdrkTables {
        &self.tables
    }

    pub fn grid(&self) -> GridSpec {
        self.tables.grid
    }

    pub fn dt(&self) -> f64 {
        self.tables.dt
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    /// `dealias(FFT(−½(φ_x² + φ_y²))) + F̂`, mean mode zeroed.
    pub fn nonlinear_term(
        &self,
        spec: &SpectralField,
        forcing: Option<&SpectralField>,
    ) -> SpectralField {
        let grid = self.grid();
        let mut out = vec![Complex64::default(); grid.len()];
        self.nonlinear_into(spec.coeffs(), forcing.map(|f| f.coeffs()), &mut out);
        SpectralField::from_coeffs(grid, out).expect("grid length")
    }

    fn nonlinear_into(
        &self,
        v: &[Complex64],
        forcing: Option<&[Complex64]>,
        out: &mut [Complex64],
    ) {
        // φ_x and φ_y are both real, so one inverse transform of
        // (i k_x + i·i k_y) v̂ yields φ_x + i φ_y.
        for (((o, c), kx), ky) in out
            .iter_mut()
            .zip(v)
            .zip(self.ikx.iter())
            .zip(self.iky.iter())
        {
            *o = Complex64::new(-kx * c.im - ky * c.re, kx * c.re - ky * c.im);
        }
        self.fft.inverse_inplace(out);
        for o in out.iter_mut() {
            *o = Complex64::new(-0.5 * (o.re * o.re + o.im * o.im), 0.0);
        }
        self.fft.forward_inplace(out);
        for (o, &keep) in out.iter_mut().zip(self.mask.iter()) {
            if !keep {
                *o = Complex64::default();
            }
        }
        if let Some(f) = forcing {
            for (o, f) in out.iter_mut().zip(f) {
                *o += f;
            }
        }
        out[0] = Complex64::default();
    }

    /// One ETDRK4 step; forcing is held constant over all four stages.
    pub fn step(&self, state: &SimState, forcing: Option<&SpectralField>) -> Result<SimState> {
        let grid = self.grid();
        if state.grid() != grid {
            return Err(KseError::GridMismatch(
                "state grid differs from integrator grid".into(),
            ));
        }
        if let Some(f) = forcing {
            if f.grid() != grid {
                return Err(KseError::GridMismatch(
                    "forcing grid differs from integrator grid".into(),
                ));
            }
        }
        let t = &*self.tables;
        let fc = forcing.map(|f| f.coeffs());
        let v = state.spec.coeffs();
        let len = grid.len();
        let zero = Complex64::default();
        let mut nv = vec![zero; len];
        let mut na = vec![zero; len];
        let mut nb = vec![zero; len];
        let mut nc = vec![zero; len];
        let mut a = vec![zero; len];
        let mut b = vec![zero; len];
        let mut c = vec![zero; len];

        self.nonlinear_into(v, fc, &mut nv);
        for k in 0..len {
            a[k] = v[k] * t.e2[k] + nv[k] * t.q[k];
        }
        self.nonlinear_into(&a, fc, &mut na);
        for k in 0..len {
            b[k] = v[k] * t.e2[k] + na[k] * t.q[k];
        }
        self.nonlinear_into(&b, fc, &mut nb);
        for k in 0..len {
            c[k] = a[k] * t.e2[k] + (nb[k] * 2.0 - nv[k]) * t.q[k];
        }
        self.nonlinear_into(&c, fc, &mut nc);
        let mut next = a;
        for k in 0..len {
            next[k] = v[k] * t.e[k] + nv[k] * t.f1[k] + (na[k] + nb[k]) * t.f2[k] + nc[k] * t.f3[k];
        }
        next[0] = zero;
        // The nonlinearity only sees the real part of φ, so any anti-Hermitian
        // roundoff would otherwise grow at the linear rate of unstable modes.
        project_hermitian(grid.n, &mut next);
        let time = state.time + t.dt;
        let spec = SpectralField::from_coeffs(grid, next)?;
        self.check_blow_up(&spec, time)?;
        Ok(SimState { spec, time })
    }

    fn check_blow_up(&self, spec: &SpectralField, time: f64) -> Result<()> {
        if !spec.is_finite() {
            return Err(KseError::BlowUp {
                time,
                max_abs: f64::INFINITY,
            });
        }
        let n2 = spec.grid().len() as f64;
        // Σ|c|/n² bounds max |φ| from above
        let bound = spec.coeffs().iter().map(|c| c.norm()).sum::<f64>() / n2;
        if bound > BLOW_UP_THRESHOLD {
            let max_abs = self.to_physical(spec).max_abs();
            if max_abs > BLOW_UP_THRESHOLD {
                return Err(KseError::BlowUp { time, max_abs });
            }
        }
        Ok(())
    }

    /// Number of steps covering `horizon`, which must be a multiple of `dt`.
    pub fn steps_for(&self, horizon: f64) -> Result<usize> {
        let dt = self.dt();
        let steps = (horizon / dt).round();
        if !(horizon >= 0.0) || (steps * dt - horizon).abs() > 1e-12 * horizon.abs().max(1.0) {
            return Err(KseError::InvalidArgument(format!(
                "horizon {horizon} is not a multiple of dt = {dt}"
            )));
        }
        Ok(steps as usize)
    }

    /// Unforced flow map `Φ^T`.
    pub fn flow_map(&self, state: &SimState, horizon: f64) -> Result<SimState> {
        let steps = self.steps_for(horizon)?;
        self.advance(state, steps)
    }

    pub fn advance(&self, state: &SimState, steps: usize) -> Result<SimState> {
        let mut s = state.clone();
        for _ in 0..steps {
            s = self.step(&s, None)?;
        }
        Ok(s)
    }

    /// Physical field of a (Hermitian) spectrum; the imaginary residue is dropped.
    pub fn to_physical(&self, spec: &SpectralField) -> PhysicalField {
        let mut data = spec.coeffs().to_vec();
        self.fft.inverse_inplace(&mut data);
        PhysicalField::from_values(spec.grid(), data.into_iter().map(|c| c.re).collect())
            .expect("grid length")
    }

    /// Largest imaginary part of the inverse transform relative to the real norm.
    pub fn imaginary_residue(&self, spec: &SpectralField) -> f64 {
        let mut data = spec.coeffs().to_vec();
        self.fft.inverse_inplace(&mut data);
        let re = data.iter().map(|c| c.re * c.re).sum::<f64>().sqrt();
        let im = data.iter().map(|c| c.im * c.im).sum::<f64>().sqrt();
        im / re.max(f64::MIN_POSITIVE)
    }
}

pub const TRAJECTORY_HEADER: &str = "time,e01,e11,e10,energy";

/// One CSV row `(time, e01, e11, e10, energy)` of a trajectory dump.
pub fn trajectory_row(integrator: &Integrator, state: &SimState) -> String {
    let lead = leading_coefficients(&state.spec);
    let energy = integrator.to_physical(&state.spec).energy();
    format!(
        "{:.4},{:.10e},{:.10e},{:.10e},{:.10e}",
        state.time, lead.e01, lead.e11, lead.e10, energy
    )
}

/// Integrates `steps` steps, writing a CSV row per step (and the initial
/// state), plus binary snapshots every `stride` steps when a directory is given.
pub fn write_trajectory(
    integrator: &Integrator,
    initial: &SimState,
    steps: usize,
    mut forcing: impl FnMut(&SimState) -> Option<SpectralField>,
    csv: &mut impl Write,
    snapshots: Option<(&std::path::Path, usize)>,
) -> Result<SimState> {
    writeln!(csv, "{TRAJECTORY_HEADER}")?;
    let mut state = initial.clone();
    for k in 0..=steps {
        if k > 0 {
            let f = forcing(&state);
            state = integrator.step(&state, f.as_ref())?;
        }
        writeln!(csv, "{}", trajectory_row(integrator, &state))?;
        if let Some((dir, stride)) = snapshots {
            if stride > 0 && k % stride == 0 {
                state.spec.save(dir.join(format!("snapshot_{k:06}.kse")))?;
            }
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{dft2, spectral_distance};
    use std::f64::consts::PI;

    fn direct_f1(dt: f64, z: f64) -> f64 {
        dt * (-4.0 - z + z.exp() * (4.0 - 3.0 * z + z * z)) / z.powi(3)
    }

    #[test]
    fn linear_symbol_values() {
        assert_eq!(linear_symbol(0.0, 0.0), 0.0);
        assert!(linear_symbol(1.0, 0.0).abs() < 1e-15);
        let h = (0.5f64).sqrt();
        assert!((linear_symbol(h, 0.0) - 0.25).abs() < 1e-15);
        // maximum over a fine scan sits at s² = 1/2
        let best = (1..2000)
            .map(|i| linear_symbol(i as f64 * 1e-3, 0.0))
            .fold(f64::MIN, f64::max);
        assert!((best - 0.25).abs() < 1e-6);
    }

    #[test]
    fn phi_weights_limits_and_direct_formula() {
        let dt = 0.05;
        let w = contour_phi_weights(dt, 0.0);
        assert!((w.q - dt / 2.0).abs() < 1e-10);
        assert!((w.f1 - dt / 6.0).abs() < 1e-10);
        assert!((w.f2 - dt / 3.0).abs() < 1e-10);
        assert!((w.f3 - dt / 6.0).abs() < 1e-10);
        // dt·ℓ = −1
        let w = contour_phi_weights(dt, -1.0 / dt);
        assert!((w.f1 - direct_f1(dt, -1.0)).abs() < 1e-9);
        let q_direct = dt * ((-0.5f64).exp() - 1.0) / -1.0;
        assert!((w.q - q_direct).abs() < 1e-12);
    }

    #[test]
    fn tables_are_finite_and_exact_exponentials() {
        let g = GridSpec::default();
        let t = precompute_etdrk4(g, 0.05).unwrap();
        for k in 0..g.len() {
            assert_eq!(t.e[k], (0.05 * t.ell[k]).exp());
            assert!(
                t.q[k].is_finite()
                    && t.f1[k].is_finite()
                    && t.f2[k].is_finite()
                    && t.f3[k].is_finite()
            );
        }
        assert_eq!(t.ell[0], 0.0);
        assert!((t.q[0] - 0.025).abs() < 1e-10);
        assert!((t.f2[0] - 0.05 / 3.0).abs() < 1e-10);
        assert!(precompute_etdrk4(g, 0.0).is_err());
    }

    #[test]
    fn nonlinear_term_of_single_cosine() {
        let g = GridSpec::default();
        let integ = Integrator::new(g, 0.05).unwrap();
        assert_eq!(
            integ.nonlinear_term(&SpectralField::zeros(g), None).norm(),
            0.0
        );

        let k = PI / g.half_length;
        let spec = dft2(&PhysicalField::from_fn(g, |x, _| (k * x).cos())).unwrap();
        // −½ k² sin²(kx) = −¼k² + ¼k² cos(2kx); DC removed
        let expect = dft2(&PhysicalField::from_fn(g, |x, _| {
            0.25 * k * k * (2.0 * k * x).cos()
        }))
        .unwrap();
        let got = integ.nonlinear_term(&spec, None);
        assert!(spectral_distance(&got, &expect).unwrap() < 1e-9);

        let mut forcing = dft2(&PhysicalField::from_fn(g, |x, y| {
            (k * x).sin() * (k * y).cos() + 0.7
        }))
        .unwrap();
        let got = integ.nonlinear_term(&SpectralField::zeros(g), Some(&forcing));
        forcing.zero_mean();
        assert_eq!(got, forcing);
    }

    #[test]
    fn zero_state_is_preserved() {
        let g = GridSpec::default();
        let integ = Integrator::new(g, 0.05).unwrap();
        let s = integ.advance(&SimState::zeros(g), 10).unwrap();
        assert_eq!(s.spec.norm(), 0.0);
        assert!((s.time - 0.5).abs() < 1e-12);
    }

    #[test]
    fn flow_map_composition_is_exact() {
        let g = GridSpec::default();
        let integ = Integrator::new(g, 0.05).unwrap();
        let k = PI / g.half_length;
        let u = SimState::new(
            dft2(&PhysicalField::from_fn(g, |x, y| {
                (k * x).cos() + 0.5 * (2.0 * k * y).sin()
            }))
            .unwrap(),
        );
        assert_eq!(integ.flow_map(&u, 0.0).unwrap(), u);
        let half = integ
            .flow_map(&integ.flow_map(&u, 0.5).unwrap(), 0.5)
            .unwrap();
        let full = integ.flow_map(&u, 1.0).unwrap();
        assert_eq!(half.spec, full.spec);
        assert!(integ.flow_map(&u, 0.51).is_err());
    }

    #[test]
    fn blow_up_is_reported() {
        let g = GridSpec::default();
        let integ = Integrator::new(g, 0.05).unwrap();
        let mut spec = SpectralField::zeros(g);
        spec.set(1, 0, Complex64::new(f64::NAN, 0.0));
        let err = integ.step(&SimState::new(spec), None).unwrap_err();
        assert!(matches!(err, KseError::BlowUp { .. }));
    }
}
