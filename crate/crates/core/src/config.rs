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

//! Scenario files.
//!
//! A scenario is a TOML document describing a dumbbell: one shared
//! bottleneck, one access link per sender, and groups of agents. All
//! physical quantities use user units spelled out in the key name:
//!
//! ```toml
//! [solver]
//! step_us = 10
//! duration_s = 20
//! window_s = 5
//!
//! [bottleneck]
//! capacity_mbps = 100
//! delay_ms = 10
//! buffer_bdp = 1          # multiples of capacity x 2 x delay
//! discipline = "droptail" # or "red"
//!
//! [[agents]]
//! cca = "bbr1"
//! count = 5
//! access_delay_ms = [5, 10]  # spread evenly over the group
//! ```
//!
//! Errors carry the line of the offending key.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::scenario::{
    build_dumbbell, spread_delays, CcaKind, Discipline, InitialConditions, Link, MaxFilterInput,
    Scenario,
};
use crate::units::{ms, UnitConventions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub units: UnitsSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub bottleneck: BottleneckSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub agents: Vec<AgentGroup>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnitsSection {
    pub segment_bytes: f64,
}

impl Default for UnitsSection {
    fn default() -> Self {
        Self {
            segment_bytes: 1500.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub step_us: f64,
    pub duration_s: f64,
    pub window_s: f64,
    /// Defaults to the part of the run before the metric window.
    pub warmup_s: Option<f64>,
    pub sample_ms: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            step_us: 10.0,
            duration_s: 20.0,
            window_s: 5.0,
            warmup_s: None,
            sample_ms: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BottleneckSection {
    pub capacity_mbps: f64,
    pub delay_ms: f64,
    /// Buffer in multiples of `capacity x 2 x delay`.
    pub buffer_bdp: Option<f64>,
    pub buffer_segments: Option<f64>,
    #[serde(default = "default_discipline")]
    pub discipline: Discipline,
    pub k_rate: Option<f64>,
    pub k_time: Option<f64>,
    pub k_vol: Option<f64>,
    pub k_loss: Option<f64>,
    pub exponent: Option<f64>,
}

fn default_discipline() -> Discipline {
    Discipline::DropTail
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub assimilation_gain: Option<f64>,
    pub max_filter_input: Option<MaxFilterInput>,
    pub wlo_loss_offset: Option<f64>,
    pub window_floor: Option<f64>,
}

/// Access delay of a group: one value for everyone or a `[lo, hi]`
/// range spread evenly over the group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DelaySpec {
    Fixed(f64),
    Range(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentGroup {
    pub cca: CcaKind,
    #[serde(default = "one")]
    pub count: usize,
    pub access_delay_ms: DelaySpec,
    pub init_window_segments: Option<f64>,
    pub init_x_btl_mbps: Option<f64>,
    pub init_tau_min_ms: Option<f64>,
    pub init_w_hi_segments: Option<f64>,
    /// inflight_hi start value as a multiple of the per-agent buffer share.
    pub init_w_hi_buffer_share: Option<f64>,
}

fn one() -> usize {
    1
}

/// Parses and validates a scenario file.
pub fn parse_scenario(source: &str) -> Result<Scenario, ConfigError> {
    let file: ScenarioFile = toml::from_str(source).map_err(|e| {
        let line = e
            .span()
            .map(|s| line_of_offset(source, s.start))
            .unwrap_or(0);
        ConfigError::Parse {
            line,
            message: e.message().to_string(),
        }
    })?;
    file.to_scenario().map_err(|e| locate(source, e))
}

pub fn load_scenario(path: &std::path::Path) -> Result<Scenario, ConfigError> {
    let source = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&source)
}

impl ScenarioFile {
    pub fn to_scenario(&self) -> Result<Scenario, ConfigError> {
        let b = &self.bottleneck;
        if !(self.units.segment_bytes > 0.0) {
            return Err(key_err("units", 0, "segment_bytes", "must be positive"));
        }
        let units = UnitConventions::new(self.units.segment_bytes * 8.0)?;
        let capacity = units
            .convert_rate(b.capacity_mbps)
            .map_err(|_| key_err("bottleneck", 0, "capacity_mbps", "must be non-negative"))?;
        if capacity <= 0.0 {
            return Err(key_err(
                "bottleneck",
                0,
                "capacity_mbps",
                "must be positive",
            ));
        }
        if !(b.delay_ms > 0.0 && b.delay_ms.is_finite()) {
            return Err(key_err("bottleneck", 0, "delay_ms", "must be positive"));
        }
        let delay = ms(b.delay_ms);
        let buffer = match (b.buffer_bdp, b.buffer_segments) {
            (Some(m), None) => {
                if !(m > 0.0 && m.is_finite()) {
                    return Err(key_err("bottleneck", 0, "buffer_bdp", "must be positive"));
                }
                units.bdp_multiple_to_segments(m, capacity, 2.0 * delay)
            }
            (None, Some(s)) => {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(key_err(
                        "bottleneck",
                        0,
                        "buffer_segments",
                        "must be positive",
                    ));
                }
                s
            }
            (Some(_), Some(_)) => {
                return Err(key_err(
                    "bottleneck",
                    0,
                    "buffer_segments",
                    "give either buffer_bdp or buffer_segments, not both",
                ))
            }
            (None, None) => {
                return Err(key_err(
                    "bottleneck",
                    0,
                    "buffer_bdp",
                    "missing buffer size",
                ))
            }
        };
        let mut link = Link::new(0, capacity, buffer, delay, b.discipline);
        let sm = &mut link.smoothing;
        for (slot, v) in [
            (&mut sm.k_rate, b.k_rate),
            (&mut sm.k_time, b.k_time),
            (&mut sm.k_vol, b.k_vol),
            (&mut sm.k_loss, b.k_loss),
            (&mut sm.exponent, b.exponent),
        ] {
            if let Some(v) = v {
                *slot = v;
            }
        }

        if self.agents.is_empty() {
            return Err(key_err(
                "agents",
                0,
                "cca",
                "need at least one [[agents]] group",
            ));
        }
        let mut access = Vec::new();
        let mut kinds = Vec::new();
        let mut groups = Vec::new();
        for (g, group) in self.agents.iter().enumerate() {
            if group.count == 0 {
                return Err(key_err("agents", g, "count", "must be at least 1"));
            }
            let delays = match &group.access_delay_ms {
                DelaySpec::Fixed(d) => vec![*d; group.count],
                DelaySpec::Range(r) if r.len() == 2 && r[0] <= r[1] => {
                    spread_delays(group.count, r[0], r[1])
                }
                DelaySpec::Range(_) => {
                    return Err(key_err(
                        "agents",
                        g,
                        "access_delay_ms",
                        "expected a number or an ordered [lo, hi] pair",
                    ))
                }
            };
            if delays.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
                return Err(key_err("agents", g, "access_delay_ms", "must be positive"));
            }
            for d in delays {
                access.push(ms(d));
                kinds.push(group.cca);
                groups.push(g);
            }
        }
        let n = access.len();
        let mut scenario = build_dumbbell(n, link, &access)?;
        scenario.units = units;
        for ((agent, cca), &g) in scenario.agents.iter_mut().zip(kinds).zip(&groups) {
            agent.cca = cca;
            agent.initial = self.agents[g].initial(g, &units, buffer / n as f64)?;
        }

        let s = &self.solver;
        let solver = &mut scenario.solver;
        solver.step = s.step_us * 1e-6;
        solver.duration = s.duration_s;
        solver.window = s.window_s;
        solver.warmup = s.warmup_s.unwrap_or(s.duration_s - s.window_s);
        solver.sample_interval = s.sample_ms * 1e-3;

        let m = &self.model;
        let model = &mut scenario.model;
        if let Some(v) = m.assimilation_gain {
            model.assimilation_gain = v;
        }
        if let Some(v) = m.max_filter_input {
            model.max_filter_input = v;
        }
        if let Some(v) = m.wlo_loss_offset {
            model.wlo_loss_offset = v;
        }
        if let Some(v) = m.window_floor {
            model.window_floor = v;
        }
        scenario.validate()?;
        Ok(scenario)
    }
}

impl AgentGroup {
    fn initial(
        &self,
        group: usize,
        units: &UnitConventions,
        buffer_share: f64,
    ) -> Result<InitialConditions, ConfigError> {
        let positive = |key: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => {
                Err(key_err("agents", group, key, "must be positive"))
            }
            _ => Ok(v),
        };
        let w_hi = match (
            positive("init_w_hi_segments", self.init_w_hi_segments)?,
            positive("init_w_hi_buffer_share", self.init_w_hi_buffer_share)?,
        ) {
            (Some(_), Some(_)) => {
                return Err(key_err(
                    "agents",
                    group,
                    "init_w_hi_buffer_share",
                    "give either init_w_hi_segments or init_w_hi_buffer_share",
                ))
            }
            (a, b) => a.or(b.map(|f| f * buffer_share)),
        };
        Ok(InitialConditions {
            window: positive("init_window_segments", self.init_window_segments)?,
            x_btl: positive("init_x_btl_mbps", self.init_x_btl_mbps)?
                .map(|r| units.convert_rate(r))
                .transpose()?,
            tau_min: positive("init_tau_min_ms", self.init_tau_min_ms)?.map(ms),
            w_hi,
            inflight: None,
        })
    }
}

fn key_err(section: &str, index: usize, key: &str, message: &str) -> ConfigError {
    let path = if section == "agents" {
        format!("agents[{index}].{key}")
    } else {
        format!("{section}.{key}")
    };
    ConfigError::invalid(path, message)
}

fn line_of_offset(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

/// Attaches the line of the offending key to a validation error when the
/// key can be found in the source.
fn locate(source: &str, err: ConfigError) -> ConfigError {
    let ConfigError::Invalid { key, message } = &err else {
        return err;
    };
    let Some((section, index, name)) = split_key(key) else {
        return err;
    };
    match find_key_line(source, &section, index, &name) {
        Some(line) => ConfigError::Parse {
            line,
            message: format!("invalid `{key}`: {message}"),
        },
        None => err,
    }
}

fn split_key(key: &str) -> Option<(String, usize, String)> {
    let (head, name) = key.split_once('.')?;
    match head.strip_suffix(']').and_then(|h| h.split_once('[')) {
        Some((section, idx)) => Some((section.to_string(), idx.parse().ok()?, name.to_string())),
        None => Some((head.to_string(), 0, name.to_string())),
    }
}

fn find_key_line(source: &str, section: &str, index: usize, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut seen = 0usize;
    let mut occurrence = 0usize;
    for (k, raw) in source.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(name) = line.strip_prefix("[[").and_then(|l| l.strip_suffix("]]")) {
            current = name.trim().to_string();
            if current == section {
                occurrence = seen;
                seen += 1;
            }
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            occurrence = 0;
            continue;
        }
        if current != section || occurrence != index {
            continue;
        }
        if let Some((lhs, _)) = line.split_once('=') {
            if lhs.trim() == key {
                return Some(k + 1);
            }
        }
    }
    // fall back to the section header
    let header_single = format!("[{section}]");
    let header_array = format!("[[{section}]]");
    let mut count = 0usize;
    for (k, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if line == header_single {
            return Some(k + 1);
        }
        if line == header_array {
            if count == index {
                return Some(k + 1);
            }
            count += 1;
        }
    }
    None
}
