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

//! Topology, agents and solver settings of a simulation run.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::units::UnitConventions;

pub type LinkId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Discipline {
    #[serde(alias = "drop-tail", alias = "taildrop")]
    DropTail,
    Red,
}

/// Sigmoid sharpness per signal class, and the drop-tail exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Smoothing {
    /// Rate-class sharpness, (segments/s)^-1.
    pub k_rate: f64,
    /// Time-class sharpness, s^-1.
    pub k_time: f64,
    /// Volume-class sharpness, segments^-1.
    pub k_vol: f64,
    /// Sharpness for gates on loss probabilities.
    pub k_loss: f64,
    /// Drop-tail exponent L.
    pub exponent: f64,
}

impl Smoothing {
    /// Defaults for a link of the given capacity: the rate gate switches
    /// over about 0.05% of capacity, sharp enough that the max filter
    /// does not leak.
    pub fn for_capacity(capacity: f64) -> Self {
        Self {
            k_rate: 1e4 / capacity,
            k_time: 1e4,
            k_vol: 10.0,
            k_loss: 1e3,
            exponent: 20.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    /// Segments per second.
    pub capacity: f64,
    /// Segments.
    pub buffer: f64,
    /// One-way propagation delay in seconds.
    pub propagation_delay: f64,
    pub discipline: Discipline,
    pub smoothing: Smoothing,
}

impl Link {
    pub fn new(
        id: LinkId,
        capacity: f64,
        buffer: f64,
        propagation_delay: f64,
        discipline: Discipline,
    ) -> Self {
        Self {
            id,
            capacity,
            buffer,
            propagation_delay,
            discipline,
            smoothing: Smoothing::for_capacity(capacity),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let key = |k: &str| format!("link {}: {k}", self.id);
        if !(self.capacity > 0.0 && self.capacity.is_finite()) {
            return Err(ConfigError::invalid(key("capacity"), "must be positive"));
        }
        if !(self.buffer > 0.0 && self.buffer.is_finite()) {
            return Err(ConfigError::invalid(key("buffer"), "must be positive"));
        }
        if !(self.propagation_delay >= 0.0 && self.propagation_delay.is_finite()) {
            return Err(ConfigError::invalid(key("delay"), "must be non-negative"));
        }
        let s = &self.smoothing;
        if s.exponent < 1.0 {
            return Err(ConfigError::invalid(key("exponent"), "must be at least 1"));
        }
        for (name, k) in [
            ("k_rate", s.k_rate),
            ("k_time", s.k_time),
            ("k_vol", s.k_vol),
            ("k_loss", s.k_loss),
        ] {
            if !(k > 0.0 && k.is_finite()) {
                return Err(ConfigError::invalid(key(name), "must be positive"));
            }
        }
        Ok(())
    }
}

/// Route of one agent through the network.
///
/// `forward_delay[k]` is the propagation time from the sender to the entry
/// of `links[k]`; `feedback_delay[k]` is the time from that entry back to
/// the sender (through the rest of the path and the return path).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub links: Vec<LinkId>,
    pub forward_delay: Vec<f64>,
    pub feedback_delay: Vec<f64>,
    /// Round-trip propagation delay d_i.
    pub total_propagation: f64,
}

impl Path {
    /// Path whose round trip consists of the forward links only.
    pub fn one_way(links: &[&Link]) -> Self {
        Self::with_return(links, 0.0)
    }

    /// Path with a return route mirroring the forward links.
    pub fn symmetric(links: &[&Link]) -> Self {
        let one_way: f64 = links.iter().map(|l| l.propagation_delay).sum();
        Self::with_return(links, one_way)
    }

    fn with_return(links: &[&Link], return_delay: f64) -> Self {
        let total = links.iter().map(|l| l.propagation_delay).sum::<f64>() + return_delay;
        let mut forward = Vec::with_capacity(links.len());
        let mut acc = 0.0;
        for l in links {
            forward.push(acc);
            acc += l.propagation_delay;
        }
        let feedback = forward.iter().map(|f| total - f).collect();
        Self {
            links: links.iter().map(|l| l.id).collect(),
            forward_delay: forward,
            feedback_delay: feedback,
            total_propagation: total,
        }
    }

    pub fn forward_to(&self, link: LinkId) -> Option<f64> {
        self.position(link).map(|k| self.forward_delay[k])
    }

    pub fn feedback_from(&self, link: LinkId) -> Option<f64> {
        self.position(link).map(|k| self.feedback_delay[k])
    }

    pub fn position(&self, link: LinkId) -> Option<usize> {
        self.links.iter().position(|&l| l == link)
    }

    pub fn validate(&self, agent: usize) -> Result<(), ConfigError> {
        let key = format!("agent {agent}: path");
        if self.links.is_empty() {
            return Err(ConfigError::invalid(key, "must contain at least one link"));
        }
        if self.forward_delay.len() != self.links.len()
            || self.feedback_delay.len() != self.links.len()
        {
            return Err(ConfigError::invalid(
                key,
                "delay vectors do not match links",
            ));
        }
        if !(self.total_propagation > 0.0 && self.total_propagation.is_finite()) {
            return Err(ConfigError::invalid(
                key,
                "round-trip propagation delay must be positive",
            ));
        }
        for (f, b) in self.forward_delay.iter().zip(&self.feedback_delay) {
            if *f < 0.0 || *b < 0.0 || f + b > self.total_propagation * (1.0 + 1e-12) {
                return Err(ConfigError::invalid(
                    key,
                    "forward + feedback delay exceeds the round trip",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CcaKind {
    #[serde(rename = "reno")]
    Reno,
    #[serde(rename = "cubic")]
    Cubic,
    #[serde(rename = "bbr1", alias = "bbrv1")]
    BbrV1,
    #[serde(rename = "bbr2", alias = "bbrv2")]
    BbrV2,
}

impl CcaKind {
    pub fn name(self) -> &'static str {
        match self {
            CcaKind::Reno => "reno",
            CcaKind::Cubic => "cubic",
            CcaKind::BbrV1 => "bbr1",
            CcaKind::BbrV2 => "bbr2",
        }
    }

    pub fn is_bbr(self) -> bool {
        matches!(self, CcaKind::BbrV1 | CcaKind::BbrV2)
    }
}

impl std::fmt::Display for CcaKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for CcaKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "reno" => Ok(CcaKind::Reno),
            "cubic" => Ok(CcaKind::Cubic),
            "bbr1" | "bbrv1" => Ok(CcaKind::BbrV1),
            "bbr2" | "bbrv2" => Ok(CcaKind::BbrV2),
            other => Err(ConfigError::invalid(
                "cca",
                format!("unknown algorithm `{other}`"),
            )),
        }
    }
}

/// Optional initial values; unset entries get model defaults when the
/// simulation is assembled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InitialConditions {
    /// Congestion window (Reno, CUBIC), segments.
    pub window: Option<f64>,
    /// Bottleneck-bandwidth estimate, segments/s.
    pub x_btl: Option<f64>,
    /// RTprop estimate, s.
    pub tau_min: Option<f64>,
    /// BBRv2 inflight_hi, segments.
    pub w_hi: Option<f64>,
    /// Inflight volume, segments.
    pub inflight: Option<f64>,
}

impl InitialConditions {
    fn validate(&self, agent: usize) -> Result<(), ConfigError> {
        for (name, v) in [
            ("window", self.window),
            ("x_btl", self.x_btl),
            ("tau_min", self.tau_min),
            ("w_hi", self.w_hi),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(ConfigError::invalid(
                        format!("agent {agent}: initial {name}"),
                        "must be strictly positive",
                    ));
                }
            }
        }
        if let Some(v) = self.inflight {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError::invalid(
                    format!("agent {agent}: initial inflight"),
                    "must be non-negative",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    /// 1-based identifier; BBR desynchronization depends on it.
    pub id: usize,
    pub cca: CcaKind,
    pub path: Path,
    pub initial: InitialConditions,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Integration step h, s.
    pub step: f64,
    pub duration: f64,
    /// Length of the metric aggregation window at the end of the run, s.
    pub window: f64,
    pub warmup: f64,
    /// Spacing of trace samples, s.
    pub sample_interval: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            step: 1e-5,
            duration: 20.0,
            window: 5.0,
            warmup: 15.0,
            sample_interval: 1e-3,
        }
    }
}

/// Which signal the BBR max filter follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFilterInput {
    /// Measured delivery rate.
    DeliveryRate,
    /// The agent's own sending rate.
    SendingRate,
}

/// Knobs of the fluid model that are not part of the topology.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    /// Rate (1/s) at which gated assimilation terms close their gap.
    pub assimilation_gain: f64,
    pub max_filter_input: MaxFilterInput,
    /// Offset subtracted from the path loss inside the inflight_lo loss
    /// gate. With no offset the gate is half open at zero loss.
    pub wlo_loss_offset: f64,
    /// Smallest congestion window of the loss-based algorithms, segments.
    pub window_floor: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            assimilation_gain: 1e3,
            max_filter_input: MaxFilterInput::DeliveryRate,
            wlo_loss_offset: 0.005,
            window_floor: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub units: UnitConventions,
    pub links: Vec<Link>,
    pub agents: Vec<AgentConfig>,
    pub solver: SolverSettings,
    pub model: ModelOptions,
}

impl Scenario {
    pub fn link(&self, id: LinkId) -> Option<&Link> {
        self.links.iter().find(|l| l.id == id)
    }

    /// The link of smallest capacity on the agent's path.
    pub fn bottleneck_of(&self, agent: &AgentConfig) -> Option<&Link> {
        agent
            .path
            .links
            .iter()
            .filter_map(|&id| self.link(id))
            .min_by(|a, b| a.capacity.total_cmp(&b.capacity))
    }

    /// Smallest strictly positive delay used by any delayed lookup.
    pub fn min_delay(&self) -> f64 {
        let mut min = f64::INFINITY;
        for a in &self.agents {
            let p = &a.path;
            for d in p
                .forward_delay
                .iter()
                .chain(&p.feedback_delay)
                .chain(std::iter::once(&p.total_propagation))
            {
                if *d > 0.0 {
                    min = min.min(*d);
                }
            }
        }
        min
    }

    pub fn max_delay(&self) -> f64 {
        self.agents
            .iter()
            .map(|a| a.path.total_propagation)
            .fold(0.0, f64::max)
    }

    pub fn mean_round_trip(&self) -> f64 {
        if self.agents.is_empty() {
            return 0.0;
        }
        self.agents
            .iter()
            .map(|a| a.path.total_propagation)
            .sum::<f64>()
            / self.agents.len() as f64
    }

    pub fn window_start(&self) -> f64 {
        self.solver.duration - self.solver.window
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.links.is_empty() {
            return Err(ConfigError::invalid(
                "links",
                "at least one link is required",
            ));
        }
        if self.agents.is_empty() {
            return Err(ConfigError::invalid(
                "agents",
                "at least one agent is required",
            ));
        }
        for (k, l) in self.links.iter().enumerate() {
            if l.id != k {
                return Err(ConfigError::invalid(
                    "links",
                    format!(
                        "link ids must be 0..{}, found {} at {k}",
                        self.links.len(),
                        l.id
                    ),
                ));
            }
            l.validate()?;
        }
        for (k, a) in self.agents.iter().enumerate() {
            if a.id != k + 1 {
                return Err(ConfigError::invalid(
                    "agents",
                    format!(
                        "agent ids must be contiguous from 1, found {} at {}",
                        a.id,
                        k + 1
                    ),
                ));
            }
            a.path.validate(a.id)?;
            for &l in &a.path.links {
                if self.link(l).is_none() {
                    return Err(ConfigError::invalid(
                        format!("agent {}: path", a.id),
                        format!("references unknown link {l}"),
                    ));
                }
            }
            a.initial.validate(a.id)?;
        }
        let s = &self.solver;
        if !(s.step > 0.0 && s.step.is_finite()) {
            return Err(ConfigError::invalid("step", "must be positive"));
        }
        if !(s.duration > 0.0 && s.duration.is_finite()) {
            return Err(ConfigError::invalid("duration", "must be positive"));
        }
        if !(s.window > 0.0) || s.warmup < 0.0 || s.duration + 1e-12 < s.warmup + s.window {
            return Err(ConfigError::invalid(
                "window",
                format!(
                    "duration {} must cover warmup {} plus window {}",
                    s.duration, s.warmup, s.window
                ),
            ));
        }
        if !(s.sample_interval >= s.step) {
            return Err(ConfigError::invalid(
                "sample_interval",
                "must be at least one solver step",
            ));
        }
        let min_delay = self.min_delay();
        if s.step > min_delay / 10.0 * (1.0 + 1e-9) {
            return Err(ConfigError::invalid(
                "step",
                format!(
                    "step {} s exceeds a tenth of the smallest delay {min_delay} s",
                    s.step
                ),
            ));
        }
        let m = &self.model;
        if !(m.assimilation_gain > 0.0 && m.assimilation_gain.is_finite()) {
            return Err(ConfigError::invalid(
                "assimilation_gain",
                "must be positive",
            ));
        }
        if s.step * m.assimilation_gain > 0.5 {
            return Err(ConfigError::invalid(
                "assimilation_gain",
                "gain times step must stay below 0.5 for a stable explicit step",
            ));
        }
        if !(m.window_floor > 0.0) {
            return Err(ConfigError::invalid("window_floor", "must be positive"));
        }
        Ok(())
    }
}

/// Dumbbell topology: every sender reaches the shared bottleneck (link 0)
/// through its own access link (links 1..=N). Access links get ten times
/// the bottleneck capacity and a buffer that never fills.
///
/// All agents default to BBRv1; callers assign algorithms afterwards.
pub fn build_dumbbell(
    n_senders: usize,
    bottleneck: Link,
    access_delays: &[f64],
) -> Result<Scenario, ConfigError> {
    if n_senders == 0 {
        return Err(ConfigError::invalid("senders", "need at least one sender"));
    }
    if access_delays.len() != n_senders {
        return Err(ConfigError::invalid(
            "access_delays",
            format!("expected {n_senders} delays, got {}", access_delays.len()),
        ));
    }
    if let Some(d) = access_delays.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(ConfigError::invalid(
            "access_delays",
            format!("delays must be positive, got {d}"),
        ));
    }
    if !(bottleneck.propagation_delay > 0.0) {
        return Err(ConfigError::invalid("bottleneck delay", "must be positive"));
    }
    let mut bottleneck = bottleneck;
    bottleneck.id = 0;
    bottleneck.validate()?;

    let access_capacity = 10.0 * bottleneck.capacity;
    let mut links = vec![bottleneck];
    let mut agents = Vec::with_capacity(n_senders);
    for (k, &delay) in access_delays.iter().enumerate() {
        let access = Link::new(
            k + 1,
            access_capacity,
            1e3 * links[0].buffer.max(access_capacity),
            delay,
            Discipline::DropTail,
        );
        let path = Path::symmetric(&[&access, &links[0]]);
        links.push(access);
        agents.push(AgentConfig {
            id: k + 1,
            cca: CcaKind::BbrV1,
            path,
            initial: InitialConditions::default(),
        });
    }
    Ok(Scenario {
        units: UnitConventions::default(),
        links,
        agents,
        solver: SolverSettings::default(),
        model: ModelOptions::default(),
    })
}

/// `n` delays evenly spread over `[lo, hi]`, in the same unit.
pub fn spread_delays(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::ms;

    fn bottleneck(c: f64, d: f64) -> Link {
        Link::new(0, c, 100.0, d, Discipline::DropTail)
    }

    #[test]
    fn single_sender_round_trip() {
        let s = build_dumbbell(1, bottleneck(8333.3, ms(10.0)), &[ms(5.6)]).unwrap();
        assert!((s.agents[0].path.total_propagation - 0.0312).abs() < 1e-12);
        assert_eq!(s.links.len(), 2);
        assert!(s.links[1].capacity >= 10.0 * s.links[0].capacity);
    }

    #[test]
    fn ten_senders_rtt_range() {
        let delays: Vec<f64> = spread_delays(10, 5.0, 10.0).into_iter().map(ms).collect();
        let s = build_dumbbell(10, bottleneck(8333.3, ms(10.0)), &delays).unwrap();
        for a in &s.agents {
            let rtt = a.path.total_propagation;
            assert!((0.030 - 1e-12..=0.040 + 1e-12).contains(&rtt), "{rtt}");
        }
    }

    #[test]
    fn identical_delays_give_equal_paths() {
        let s = build_dumbbell(2, bottleneck(100.0, 0.01), &[0.005, 0.005]).unwrap();
        assert_eq!(
            s.agents[0].path.total_propagation,
            s.agents[1].path.total_propagation
        );
    }

    #[test]
    fn rejects_bad_dumbbells() {
        assert!(build_dumbbell(0, bottleneck(100.0, 0.01), &[]).is_err());
        assert!(build_dumbbell(1, bottleneck(100.0, 0.01), &[0.0]).is_err());
        assert!(build_dumbbell(1, bottleneck(100.0, 0.01), &[-0.001]).is_err());
        assert!(build_dumbbell(2, bottleneck(100.0, 0.01), &[0.001]).is_err());
    }

    #[test]
    fn path_delays_are_consistent() {
        let s = build_dumbbell(3, bottleneck(100.0, 0.01), &[0.005, 0.007, 0.009]).unwrap();
        for a in &s.agents {
            let p = &a.path;
            for k in 0..p.links.len() {
                assert!(p.forward_delay[k] + p.feedback_delay[k] <= p.total_propagation + 1e-15);
            }
            assert_eq!(p.forward_to(0), Some(s.links[a.id].propagation_delay));
        }
    }

    #[test]
    fn validation_catches_step_and_window() {
        let mut s = build_dumbbell(1, bottleneck(100.0, 0.01), &[0.005]).unwrap();
        assert!(s.validate().is_ok());
        s.solver.step = 1e-3;
        assert!(s.validate().is_err());
        s.solver.step = 1e-5;
        s.solver.window = 30.0;
        assert!(s.validate().is_err());
    }
}
