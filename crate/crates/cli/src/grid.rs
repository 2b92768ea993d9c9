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

//! Sweep grids: a base dumbbell plus axes whose cross product gives the
//! scenarios to run.
//!
//! ```toml
//! [base]
//! capacity_mbps = 100
//! access_delay_ms = [5, 10]
//! duration_s = 20
//!
//! [axes]
//! buffer_bdp = [0.5, 1, 2, 4, 7]
//! delay_ms = [10]
//! senders = [10]
//! mix = ["bbr1", "bbr1+reno"]
//! discipline = ["droptail", "red"]
//! ```
//!
//! A mix of several algorithms splits the senders evenly, earlier
//! entries taking the remainder.

use fluidcc::config::{
    AgentGroup, BottleneckSection, DelaySpec, ModelSection, ScenarioFile, SolverSection,
    UnitsSection,
};
use fluidcc::scenario::{CcaKind, Discipline};
use fluidcc::{ConfigError, Scenario};
use serde::Deserialize;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    #[serde(default)]
    pub base: Base,
    #[serde(default)]
    pub axes: Axes,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Base {
    pub capacity_mbps: f64,
    pub access_delay_ms: DelaySpec,
    pub step_us: f64,
    pub duration_s: f64,
    pub window_s: f64,
    pub sample_ms: f64,
    /// inflight_hi start value as a multiple of the per-agent buffer share.
    pub init_w_hi_buffer_share: Option<f64>,
}

impl Default for Base {
    fn default() -> Self {
        Self {
            capacity_mbps: 100.0,
            access_delay_ms: DelaySpec::Range(vec![5.0, 10.0]),
            step_us: 10.0,
            duration_s: 20.0,
            window_s: 5.0,
            sample_ms: 1.0,
            init_w_hi_buffer_share: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Axes {
    pub buffer_bdp: Vec<f64>,
    pub delay_ms: Vec<f64>,
    pub senders: Vec<usize>,
    pub mix: Vec<String>,
    pub discipline: Vec<Discipline>,
}

impl Default for Axes {
    fn default() -> Self {
        Self {
            buffer_bdp: vec![0.5, 1.0, 2.0, 4.0, 7.0],
            delay_ms: vec![2.5, 7.5, 12.5],
            senders: vec![2, 6, 10],
            mix: vec!["bbr1".into()],
            discipline: vec![Discipline::DropTail],
        }
    }
}

/// One grid point: the axis values and the scenario they produce.
#[derive(Clone, Debug)]
pub struct GridPoint {
    pub buffer_bdp: f64,
    pub delay_ms: f64,
    pub senders: usize,
    pub mix: String,
    pub discipline: Discipline,
    pub scenario: Result<Scenario, ConfigError>,
}

pub const AXIS_COLUMNS: [&str; 5] = ["buffer_bdp", "delay_ms", "senders", "mix", "discipline"];

pub fn parse_grid(source: &str) -> Result<GridFile, ConfigError> {
    toml::from_str(source).map_err(|e| ConfigError::Parse {
        line: e
            .span()
            .map(|s| source[..s.start.min(source.len())].matches('\n').count() + 1)
            .unwrap_or(0),
        message: e.message().to_string(),
    })
}

fn parse_mix(mix: &str) -> Result<Vec<CcaKind>, ConfigError> {
    mix.split('+').map(|p| p.trim().parse()).collect()
}

impl GridFile {
    /// Points in row-major order (buffer varies slowest).
    pub fn points(&self) -> Result<Vec<GridPoint>, ConfigError> {
        let a = &self.axes;
        for (name, len) in [
            ("axes.buffer_bdp", a.buffer_bdp.len()),
            ("axes.delay_ms", a.delay_ms.len()),
            ("axes.senders", a.senders.len()),
            ("axes.mix", a.mix.len()),
            ("axes.discipline", a.discipline.len()),
        ] {
            if len == 0 {
                return Err(ConfigError::invalid(name, "axis is empty"));
            }
        }
        for m in &a.mix {
            parse_mix(m)
                .map_err(|_| ConfigError::invalid("axes.mix", format!("unknown mix `{m}`")))?;
        }
        let mut out = Vec::new();
        for &buffer_bdp in &a.buffer_bdp {
            for &delay_ms in &a.delay_ms {
                for &senders in &a.senders {
                    for mix in &a.mix {
                        for &discipline in &a.discipline {
                            out.push(GridPoint {
                                buffer_bdp,
                                delay_ms,
                                senders,
                                mix: mix.clone(),
                                discipline,
                                scenario: self
                                    .scenario(buffer_bdp, delay_ms, senders, mix, discipline),
                            });
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn scenario(
        &self,
        buffer_bdp: f64,
        delay_ms: f64,
        senders: usize,
        mix: &str,
        discipline: Discipline,
    ) -> Result<Scenario, ConfigError> {
        let kinds = parse_mix(mix)?;
        if senders < kinds.len() {
            return Err(ConfigError::invalid(
                "axes.senders",
                format!("{senders} senders cannot cover mix `{mix}`"),
            ));
        }
        let b = &self.base;
        let agents = kinds
            .iter()
            .enumerate()
            .map(|(k, &cca)| AgentGroup {
                cca,
                count: senders / kinds.len() + usize::from(k < senders % kinds.len()),
                access_delay_ms: b.access_delay_ms.clone(),
                init_window_segments: None,
                init_x_btl_mbps: None,
                init_tau_min_ms: None,
                init_w_hi_segments: None,
                init_w_hi_buffer_share: b.init_w_hi_buffer_share,
            })
            .collect();
        let file = ScenarioFile {
            units: UnitsSection::default(),
            solver: SolverSection {
                step_us: b.step_us,
                duration_s: b.duration_s,
                window_s: b.window_s,
                warmup_s: None,
                sample_ms: b.sample_ms,
            },
            bottleneck: BottleneckSection {
                capacity_mbps: b.capacity_mbps,
                delay_ms,
                buffer_bdp: Some(buffer_bdp),
                buffer_segments: None,
                discipline,
                k_rate: None,
                k_time: None,
                k_vol: None,
                k_loss: None,
                exponent: None,
            },
            model: ModelSection::default(),
            agents,
        };
        file.to_scenario()
    }
}
