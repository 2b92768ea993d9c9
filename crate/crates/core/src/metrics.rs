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

//! Aggregate metrics over a window of a simulation trace.

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::scenario::{LinkId, Scenario};
use crate::trace::Trace;

/// Default virtual packet size for jitter sampling, segments.
pub const JITTER_PACKET: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub jain_fairness: f64,
    pub loss_rate: f64,
    pub mean_queue_share: f64,
    pub utilization: f64,
    /// Mean absolute RTT change between virtual packets, s.
    pub jitter: f64,
    pub window_start: f64,
    pub window_end: f64,
    /// Spacing of the virtual packets used for jitter, s.
    pub jitter_interval: f64,
}

/// Jain's index `(Σx)² / (N Σx²)`.
pub fn jain_fairness(rates: &[f64]) -> Result<f64, MetricsError> {
    if rates.is_empty() {
        return Err(MetricsError::Empty);
    }
    let sum: f64 = rates.iter().sum();
    let sq: f64 = rates.iter().map(|x| x * x).sum();
    if sq <= 0.0 {
        return Err(MetricsError::AllZero);
    }
    Ok((sum * sum / (rates.len() as f64 * sq)).min(1.0))
}

/// Measurement window over a trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    fn indices(&self, trace: &Trace) -> Result<std::ops::Range<usize>, MetricsError> {
        let bad = MetricsError::Window {
            start: self.start,
            end: self.end,
        };
        let times = trace.times();
        let slack = 1e-9 + 1e-6 * trace.interval();
        if !(self.end > self.start)
            || times.is_empty()
            || self.start < times[0] - slack
            || self.end > times[times.len() - 1] + slack
        {
            return Err(bad);
        }
        let r = trace.window_indices(self.start, self.end);
        if r.len() < 2 {
            return Err(bad);
        }
        Ok(r)
    }
}

fn column<'a>(trace: &'a Trace, name: &str) -> Result<&'a [f64], MetricsError> {
    trace
        .column(name)
        .ok_or_else(|| MetricsError::MissingColumn(name.to_string()))
}

/// Trapezoidal integral of `f(k)` over sample indices `r`.
fn integrate(trace: &Trace, r: &std::ops::Range<usize>, f: impl Fn(usize) -> f64) -> f64 {
    let t = trace.times();
    (r.start..r.end - 1)
        .map(|k| 0.5 * (f(k) + f(k + 1)) * (t[k + 1] - t[k]))
        .sum()
}

fn time_average(trace: &Trace, r: &std::ops::Range<usize>, f: impl Fn(usize) -> f64) -> f64 {
    let t = trace.times();
    integrate(trace, r, f) / (t[r.end - 1] - t[r.start])
}

/// Mean of a column over the window.
pub fn mean(trace: &Trace, name: &str, window: Window) -> Result<f64, MetricsError> {
    let r = window.indices(trace)?;
    let c = column(trace, name)?;
    Ok(time_average(trace, &r, |k| c[k]))
}

/// Dropped volume over sent volume.
pub fn loss_rate(trace: &Trace, scenario: &Scenario, window: Window) -> Result<f64, MetricsError> {
    let r = window.indices(trace)?;
    let mut dropped = 0.0;
    for l in &scenario.links {
        let p = column(trace, &format!("p_{}", l.id))?;
        let y = column(trace, &format!("y_{}", l.id))?;
        dropped += integrate(trace, &r, |k| p[k] * y[k]);
    }
    let mut sent = 0.0;
    for a in &scenario.agents {
        let x = column(trace, &format!("x_{}", a.id))?;
        sent += integrate(trace, &r, |k| x[k]);
    }
    if sent <= 0.0 {
        return Err(MetricsError::NothingSent);
    }
    Ok((dropped / sent).clamp(0.0, 1.0))
}

/// The link with the smallest capacity.
pub fn bottleneck(scenario: &Scenario) -> LinkId {
    scenario
        .links
        .iter()
        .min_by(|a, b| a.capacity.total_cmp(&b.capacity))
        .map(|l| l.id)
        .unwrap_or(0)
}

/// Time-average of q/B at `link`.
pub fn queue_share(
    trace: &Trace,
    scenario: &Scenario,
    link: LinkId,
    window: Window,
) -> Result<f64, MetricsError> {
    let r = window.indices(trace)?;
    let q = column(trace, &format!("q_{link}"))?;
    let b = scenario.links[link].buffer;
    Ok(time_average(trace, &r, |k| q[k] / b).clamp(0.0, 1.0))
}

/// Time-average of the served rate at `link` relative to its capacity. A
/// backlogged link serves at capacity; an empty one serves what arrives
/// and survives loss.
pub fn utilization(
    trace: &Trace,
    scenario: &Scenario,
    link: LinkId,
    window: Window,
) -> Result<f64, MetricsError> {
    let r = window.indices(trace)?;
    let q = column(trace, &format!("q_{link}"))?;
    let y = column(trace, &format!("y_{link}"))?;
    let p = column(trace, &format!("p_{link}"))?;
    let c = scenario.links[link].capacity;
    let served = |k: usize| {
        if q[k] > 0.0 {
            c
        } else {
            (y[k] * (1.0 - p[k])).min(c)
        }
    };
    Ok((time_average(trace, &r, served) / c).clamp(0.0, 1.0))
}

/// Mean absolute change of `tau` between virtual packets spaced
/// `interval` apart.
pub fn jitter(
    trace: &Trace,
    tau: &[f64],
    window: Window,
    interval: f64,
) -> Result<f64, MetricsError> {
    window.indices(trace)?;
    if !(interval >= trace.interval() * (1.0 - 1e-9)) {
        return Err(MetricsError::TooFewSamples(0));
    }
    let n = ((window.end - window.start) / interval + 1e-9).floor() as usize + 1;
    if n < 2 {
        return Err(MetricsError::TooFewSamples(n));
    }
    let mut prev = trace.interpolate(tau, window.start);
    let mut total = 0.0;
    for k in 1..n {
        let cur = trace.interpolate(tau, window.start + k as f64 * interval);
        total += (cur - prev).abs();
        prev = cur;
    }
    Ok(total / (n - 1) as f64)
}

/// Jitter averaged over all agents, with virtual packets of `packet`
/// segments spaced `packet·N/C` apart. Spacings finer than the trace are
/// raised to the trace interval.
pub fn mean_jitter(
    trace: &Trace,
    scenario: &Scenario,
    window: Window,
    packet: f64,
) -> Result<(f64, f64), MetricsError> {
    let c = scenario.links[bottleneck(scenario)].capacity;
    let n = scenario.agents.len() as f64;
    let interval = (packet * n / c).max(trace.interval());
    let mut sum = 0.0;
    for a in &scenario.agents {
        let tau = column(trace, &format!("tau_{}", a.id))?;
        sum += jitter(trace, tau, window, interval)?;
    }
    Ok((sum / n, interval))
}

/// Mean delivered rate of every agent over the window.
pub fn mean_rates(
    trace: &Trace,
    scenario: &Scenario,
    window: Window,
) -> Result<Vec<f64>, MetricsError> {
    scenario
        .agents
        .iter()
        .map(|a| mean(trace, &format!("xdlv_{}", a.id), window))
        .collect()
}

impl MetricsReport {
    /// All five metrics over `window`, measured at the scenario's
    /// bottleneck. Fairness uses delivered rates.
    pub fn compute(
        trace: &Trace,
        scenario: &Scenario,
        window: Window,
    ) -> Result<Self, MetricsError> {
        let link = bottleneck(scenario);
        let (jitter, jitter_interval) = mean_jitter(trace, scenario, window, JITTER_PACKET)?;
        Ok(Self {
            jain_fairness: jain_fairness(&mean_rates(trace, scenario, window)?)?,
            loss_rate: loss_rate(trace, scenario, window)?,
            mean_queue_share: queue_share(trace, scenario, link, window)?,
            utilization: utilization(trace, scenario, link, window)?,
            jitter,
            window_start: window.start,
            window_end: window.end,
            jitter_interval,
        })
    }

    /// Metrics over the scenario's configured measurement window.
    pub fn for_scenario(trace: &Trace, scenario: &Scenario) -> Result<Self, MetricsError> {
        let w = Window::new(scenario.window_start(), scenario.solver.duration);
        Self::compute(trace, scenario, w)
    }
}
