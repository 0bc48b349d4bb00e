//! Browser bindings: a live 2D KSE run with editable Gaussian actuators,
//! the one-step drift the identification agent maximises, and the linear
//! growth curve of the Fourier modes.

use kse_core::actuation::{ActuatorLayout, Actuators};
use kse_core::dynamics::{linear_symbol, Integrator, SimState};
use kse_core::spectral::GridSpec;
use kse_core::tasks::{fixedpoint_reward, random_initial_state};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn js(e: kse_core::KseError) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    integ: Integrator,
    actuators: Actuators,
    action: Vec<f64>,
    state: SimState,
}

#[wasm_bindgen]
impl Demo {
    /// Default 64² grid, dt = 0.05, starting from relaxed random noise.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, relax_steps: usize) -> Result<Demo, JsError> {
        let grid = GridSpec::default();
        let integ = Integrator::new(grid, 0.05).map_err(js)?;
        let state = random_initial_state(&integ, relax_steps, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(js)?;
        let actuators = Actuators::new(ActuatorLayout::default_for(grid), grid);
        let action = vec![0.0; actuators.layout().count()];
        Ok(Demo { integ, actuators, action, state })
    }

    pub fn n(&self) -> usize {
        self.integ.grid().n
    }

    /// Actuators per side.
    pub fn m(&self) -> usize {
        self.actuators.layout().m
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    /// Advances `steps` steps under the current actuator amplitudes.
    pub fn advance(&mut self, steps: usize) -> Result<(), JsError> {
        let forcing = if self.action.iter().all(|a| *a == 0.0) {
            None
        } else {
            Some(self.actuators.forcing_field(&self.action).map_err(js)?)
        };
        for _ in 0..steps {
            self.state = self.integ.step(&self.state, forcing.as_ref()).map_err(js)?;
        }
        Ok(())
    }

    /// φ on the grid, row-major with x outer.
    pub fn field(&self) -> Vec<f64> {
        self.integ.to_physical(&self.state.spec).values().to_vec()
    }

    /// Amplitude of actuator `i` (x-center index outer), clamped to ±a_max.
    pub fn set_actuator(&mut self, index: usize, amplitude: f64) -> Result<(), JsError> {
        let a_max = self.actuators.layout().a_max;
        let slot = self.action.get_mut(index).ok_or_else(|| JsError::new("no such actuator"))?;
        *slot = amplitude.clamp(-a_max, a_max);
        Ok(())
    }

    pub fn actuator(&self, index: usize) -> f64 {
        self.action.get(index).copied().unwrap_or(0.0)
    }

    pub fn clear_actuators(&mut self) {
        self.action.iter_mut().for_each(|a| *a = 0.0);
    }

    /// Forcing field of the current amplitudes, same layout as `field`.
    pub fn forcing(&self) -> Result<Vec<f64>, JsError> {
        Ok(self.actuators.forcing_physical(&self.action).map_err(js)?.values().to_vec())
    }

    /// `−‖Φ^dt(u) − u‖` of the current state, unforced.
    pub fn drift_reward(&self) -> Result<f64, JsError> {
        fixedpoint_reward(&self.integ, &self.state).map_err(js)
    }
}

/// Linear growth rate `|k|² − |k|⁴` of mode `(p, 0)` for `p = 0..=p_max`.
#[wasm_bindgen]
pub fn growth_rates(p_max: usize) -> Vec<f64> {
    let k = std::f64::consts::PI / GridSpec::default().half_length;
    (0..=p_max).map(|p| linear_symbol(k * p as f64, 0.0)).collect()
}
