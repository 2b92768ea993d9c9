// Copyright (c) 2026 The fluidcc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Fixed-step method-of-steps integrator for delay differential equations.
//!
//! Each step first lets the system evaluate its algebraic signals at the
//! current time (they may read delayed values of any signal from the
//! history), then takes an explicit Euler step of the continuous state,
//! applies the discrete mode updates and snaps mode entries to {0, 1}.

use crate::error::SolverError;
use crate::trace::Trace;

/// Per-signal ring store of past values on the solver grid `t_n = n * h`.
///
/// Lookups between grid points interpolate linearly. Lookups before the
/// first sample return the initial history, which is the first recorded
/// value unless overridden.
#[derive(Clone, Debug)]
pub struct SignalHistory {
    names: Vec<String>,
    step: f64,
    horizons: Vec<f64>,
    rings: Vec<Vec<f64>>,
    initial: Vec<Option<f64>>,
    /// Number of rows pushed so far.
    len: usize,
}

impl SignalHistory {
    pub fn new(names: Vec<String>, step: f64, horizon: f64) -> Self {
        let horizons = vec![horizon; names.len()];
        Self::with_horizons(names, step, horizons)
    }

    /// History with an individual look-back horizon per signal.
    pub fn with_horizons(names: Vec<String>, step: f64, horizons: Vec<f64>) -> Self {
        assert_eq!(names.len(), horizons.len(), "one horizon per signal");
        let rings = horizons
            .iter()
            .map(|h| vec![f64::NAN; (h.max(0.0) / step).ceil() as usize + 3])
            .collect();
        let n = names.len();
        Self {
            names,
            step,
            horizons,
            rings,
            initial: vec![None; n],
            len: 0,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn signal_count(&self) -> usize {
        self.names.len()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self, signal: usize) -> f64 {
        self.horizons[signal]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Time of the newest row.
    pub fn now(&self) -> f64 {
        self.len.saturating_sub(1) as f64 * self.step
    }

    /// Overrides the value returned for times before the first sample.
    pub fn set_initial_history(&mut self, signal: usize, value: f64) {
        self.initial[signal] = Some(value);
    }

    /// Opens a new row at time `len * h`; its entries start as NaN.
    pub fn begin_row(&mut self) {
        for ring in &mut self.rings {
            let slot = self.len % ring.len();
            ring[slot] = f64::NAN;
        }
        self.len += 1;
    }

    /// Writes `value` for `signal` into the newest row.
    pub fn set(&mut self, signal: usize, value: f64) {
        debug_assert!(self.len > 0, "set before begin_row");
        let row = self.len - 1;
        let ring = &mut self.rings[signal];
        let slot = row % ring.len();
        ring[slot] = value;
        if row == 0 && self.initial[signal].is_none() {
            self.initial[signal] = Some(value);
        }
    }

    /// Value in the newest row.
    pub fn current(&self, signal: usize) -> f64 {
        let ring = &self.rings[signal];
        ring[(self.len - 1) % ring.len()]
    }

    /// Row values of the newest row, in signal order.
    pub fn current_row(&self) -> Vec<f64> {
        (0..self.names.len()).map(|s| self.current(s)).collect()
    }

    /// Value of `signal` at absolute time `at`.
    pub fn lookup(&self, signal: usize, at: f64) -> Result<f64, SolverError> {
        self.at_position(signal, at / self.step, at)
    }

    /// Value of `signal` at `delay` seconds before the newest row.
    pub fn lookup_back(&self, signal: usize, delay: f64) -> Result<f64, SolverError> {
        let newest = self.len as f64 - 1.0;
        let pos = newest - delay / self.step;
        self.at_position(signal, pos, pos * self.step)
    }

    fn at_position(&self, signal: usize, pos: f64, at: f64) -> Result<f64, SolverError> {
        if self.len == 0 {
            return self.initial[signal].ok_or_else(|| self.outside(signal, at));
        }
        let newest = self.len - 1;
        let rounded = pos.round();
        let pos = if (pos - rounded).abs() < 1e-7 {
            rounded
        } else {
            pos
        };
        if pos < 0.0 {
            return self.initial[signal].ok_or_else(|| self.outside(signal, at));
        }
        if pos > newest as f64 {
            return Err(self.outside(signal, at));
        }
        let ring = &self.rings[signal];
        let cap = ring.len();
        let oldest = newest.saturating_sub(cap - 2);
        let k = pos.floor() as usize;
        if k < oldest {
            return Err(self.outside(signal, at));
        }
        let v0 = ring[k % cap];
        let frac = pos - k as f64;
        if frac == 0.0 {
            return Ok(v0);
        }
        let v1 = ring[(k + 1) % cap];
        Ok(v0 + frac * (v1 - v0))
    }

    fn outside(&self, signal: usize, at: f64) -> SolverError {
        SolverError::OutsideHistory {
            signal: self.names[signal].clone(),
            at,
            now: self.now(),
            horizon: self.horizons[signal],
        }
    }
}

/// A delay-differential system driven by [`integrate`].
///
/// The state vector holds continuous variables and discrete mode
/// variables; indices listed by [`DdeSystem::mode_indices`] are snapped to
/// {0, 1} after every step and get no continuous derivative.
pub trait DdeSystem {
    fn state_names(&self) -> Vec<String>;

    /// Recorded signals, in the order the history stores them.
    fn signal_names(&self) -> Vec<String>;

    fn initial_state(&self) -> Vec<f64>;

    fn mode_indices(&self) -> Vec<usize> {
        Vec::new()
    }

    /// Longest look-back any lookup needs.
    fn horizon(&self) -> f64;

    /// Look-back per signal; defaults to [`DdeSystem::horizon`] for all.
    fn signal_horizons(&self) -> Vec<f64> {
        vec![self.horizon(); self.signal_names().len()]
    }

    /// Smallest positive delay, used for the step-size precondition.
    fn min_delay(&self) -> Option<f64>;

    /// Evaluates every signal at time `t` into the newest history row.
    fn record(&self, t: f64, state: &[f64], history: &mut SignalHistory)
        -> Result<(), SolverError>;

    /// Continuous derivatives at `t`; signals at `t` are already recorded.
    fn derivatives(
        &self,
        t: f64,
        state: &[f64],
        history: &SignalHistory,
        out: &mut [f64],
    ) -> Result<(), SolverError>;

    /// Discrete increments of the mode variables at `t`, written at the
    /// mode indices of `out`.
    fn mode_deltas(
        &self,
        _t: f64,
        _state: &[f64],
        _history: &SignalHistory,
        _out: &mut [f64],
    ) -> Result<(), SolverError> {
        Ok(())
    }

    /// Hook run after the step: clamps and resets. `previous` is the
    /// state before the step.
    fn post_step(&self, _t: f64, _previous: &[f64], _state: &mut [f64]) {}
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrationSettings {
    pub step: f64,
    pub duration: f64,
    pub sample_interval: f64,
    /// Only samples at or after this time are kept in the trace.
    pub record_from: f64,
}

impl IntegrationSettings {
    pub fn new(step: f64, duration: f64) -> Self {
        Self {
            step,
            duration,
            sample_interval: step,
            record_from: 0.0,
        }
    }
}

pub fn snap_mode(value: f64) -> f64 {
    if value >= 0.5 {
        1.0
    } else {
        0.0
    }
}

/// Integrates `system` from 0 to `settings.duration` with explicit Euler
/// steps and returns the sampled signals.
pub fn integrate<S: DdeSystem + ?Sized>(
    system: &S,
    settings: &IntegrationSettings,
) -> Result<Trace, SolverError> {
    let h = settings.step;
    if !(h > 0.0 && h.is_finite()) || !(settings.duration >= 0.0) {
        return Err(SolverError::Settings(format!(
            "step {h} and duration {} must be positive",
            settings.duration
        )));
    }
    if let Some(min_delay) = system.min_delay() {
        if h > min_delay / 10.0 * (1.0 + 1e-9) {
            return Err(SolverError::StepTooLarge { step: h, min_delay });
        }
    }
    let steps = (settings.duration / h).round() as usize;
    let every = ((settings.sample_interval / h).round() as usize).max(1);

    let state_names = system.state_names();
    let signal_names = system.signal_names();
    let modes = system.mode_indices();
    let mut is_mode = vec![false; state_names.len()];
    for &m in &modes {
        is_mode[m] = true;
    }

    let mut history =
        SignalHistory::with_horizons(signal_names.clone(), h, system.signal_horizons());
    let mut trace = Trace::new(signal_names.clone(), every as f64 * h);
    let mut state = system.initial_state();
    check_finite(&state, &state_names, 0.0)?;
    let mut previous = state.clone();
    let mut deriv = vec![0.0; state.len()];
    let mut deltas = vec![0.0; state.len()];

    for n in 0..=steps {
        let t = n as f64 * h;
        history.begin_row();
        system.record(t, &state, &mut history)?;
        for (s, name) in signal_names.iter().enumerate() {
            if !history.current(s).is_finite() {
                return Err(SolverError::NonFinite {
                    signal: name.clone(),
                    time: t,
                });
            }
        }
        if n % every == 0 && t + 0.5 * h >= settings.record_from {
            trace.push_row(t, &history.current_row());
        }
        if n == steps {
            break;
        }

        deriv.iter_mut().for_each(|d| *d = 0.0);
        deltas.iter_mut().for_each(|d| *d = 0.0);
        system.derivatives(t, &state, &history, &mut deriv)?;
        system.mode_deltas(t, &state, &history, &mut deltas)?;

        previous.copy_from_slice(&state);
        for k in 0..state.len() {
            if is_mode[k] {
                state[k] = snap_mode(state[k] + deltas[k]);
            } else {
                state[k] += h * deriv[k];
            }
        }
        system.post_step(t + h, &previous, &mut state);
        check_finite(&state, &state_names, t + h)?;
    }
    Ok(trace)
}

fn check_finite(state: &[f64], names: &[String], t: f64) -> Result<(), SolverError> {
    match state.iter().position(|v| !v.is_finite()) {
        Some(k) => Err(SolverError::NonFinite {
            signal: names[k].clone(),
            time: t,
        }),
        None => Ok(()),
    }
}
