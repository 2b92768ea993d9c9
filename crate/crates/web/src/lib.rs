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

//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes plain numbers and returns a JSON string so the
//! page needs no glue beyond `JSON.parse`.

use fluidcc::analysis::{
    analyze, convergence_check, AnalysisKind, BbrVersion, ReducedModel, ReducedState,
};
use fluidcc::config::{
    AgentGroup, BottleneckSection, DelaySpec, ModelSection, ScenarioFile, SolverSection,
    UnitsSection,
};
use fluidcc::metrics::MetricsReport;
use fluidcc::{simulate, CcaKind, Discipline};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Longest run the page may request, to keep the tab responsive.
pub const MAX_DURATION_S: f64 = 10.0;
/// Points per plotted series.
const PLOT_POINTS: usize = 500;

#[derive(Serialize)]
struct Series {
    name: String,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct SimulationView {
    metrics: MetricsReport,
    times: Vec<f64>,
    /// Sending rate of each agent in Mbps.
    rates: Vec<Series>,
    /// Bottleneck queue in segments.
    queue: Vec<f64>,
    buffer: f64,
    capacity_mbps: f64,
}

fn thin(values: &[f64], stride: usize) -> Vec<f64> {
    values.iter().step_by(stride).copied().collect()
}

fn group(cca: CcaKind, count: usize) -> AgentGroup {
    AgentGroup {
        cca,
        count,
        access_delay_ms: DelaySpec::Range(vec![5.0, 10.0]),
        init_window_segments: None,
        init_x_btl_mbps: None,
        init_tau_min_ms: None,
        init_w_hi_segments: None,
        init_w_hi_buffer_share: matches!(cca, CcaKind::BbrV2).then_some(1.0),
    }
}

/// Dumbbell with the given number of senders per algorithm
/// (BBRv1, BBRv2, Reno, CUBIC).
#[allow(clippy::too_many_arguments)]
pub fn run_dumbbell(
    counts: [usize; 4],
    capacity_mbps: f64,
    delay_ms: f64,
    buffer_bdp: f64,
    red: bool,
    duration_s: f64,
) -> Result<String, String> {
    if !(duration_s > 0.0 && duration_s <= MAX_DURATION_S) {
        return Err(format!("duration must be in (0, {MAX_DURATION_S}] s"));
    }
    let kinds = [
        CcaKind::BbrV1,
        CcaKind::BbrV2,
        CcaKind::Reno,
        CcaKind::Cubic,
    ];
    let agents: Vec<AgentGroup> = kinds
        .iter()
        .zip(counts)
        .filter(|(_, n)| *n > 0)
        .map(|(&k, n)| group(k, n))
        .collect();
    if agents.is_empty() {
        return Err("need at least one sender".into());
    }
    let file = ScenarioFile {
        units: UnitsSection::default(),
        solver: SolverSection {
            duration_s,
            window_s: (duration_s / 2.0).min(5.0),
            ..SolverSection::default()
        },
        bottleneck: BottleneckSection {
            capacity_mbps,
            delay_ms,
            buffer_bdp: Some(buffer_bdp),
            buffer_segments: None,
            discipline: if red {
                Discipline::Red
            } else {
                Discipline::DropTail
            },
            k_rate: None,
            k_time: None,
            k_vol: None,
            k_loss: None,
            exponent: None,
        },
        model: ModelSection::default(),
        agents,
    };
    let scenario = file.to_scenario().map_err(|e| e.to_string())?;
    let trace = simulate(&scenario).map_err(|e| e.to_string())?;
    let metrics = MetricsReport::for_scenario(&trace, &scenario).map_err(|e| e.to_string())?;

    let stride = trace.len().div_ceil(PLOT_POINTS).max(1);
    let to_mbps = scenario.units.segment_size / 1e6;
    let rates = scenario
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let col = trace.column(&format!("x_{}", i + 1)).unwrap_or(&[]);
            Series {
                name: format!("{} #{}", a.cca, i + 1),
                values: thin(col, stride).into_iter().map(|x| x * to_mbps).collect(),
            }
        })
        .collect();
    let view = SimulationView {
        metrics,
        times: thin(trace.times(), stride),
        rates,
        queue: thin(trace.column("q_0").unwrap_or(&[]), stride),
        buffer: scenario.links[0].buffer,
        capacity_mbps,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

/// Equilibrium report of a reduced model.
pub fn run_analysis(model: &str, n: usize, capacity: f64, delay: f64) -> Result<String, String> {
    let kind: AnalysisKind = model
        .parse()
        .map_err(|e: fluidcc::AnalysisError| e.to_string())?;
    let report = analyze(kind, n, capacity, delay).map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Trajectory {
    times: Vec<f64>,
    x_btl: Vec<Vec<f64>>,
    q: Vec<f64>,
    /// Equilibrium per-flow estimate, when the model pins it down.
    target: Option<f64>,
}

/// Trajectory of the reduced deep-buffer BBR model (capacity 1) from a
/// linear spread of initial estimates between `lo` and `hi`.
pub fn run_trajectory(
    version: u8,
    n: usize,
    delay: f64,
    lo: f64,
    hi: f64,
    horizon: f64,
) -> Result<String, String> {
    let capacity = 1.0;
    let version = match version {
        1 => BbrVersion::V1,
        2 => BbrVersion::V2,
        _ => return Err("version must be 1 or 2".into()),
    };
    if !(horizon > 0.0 && horizon <= 2000.0) {
        return Err("horizon must be in (0, 2000]".into());
    }
    let model =
        ReducedModel::homogeneous(version, n, capacity, delay).map_err(|e| e.to_string())?;
    let initial = ReducedState {
        x_btl: (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n.max(2) - 1) as f64)
            .collect(),
        q: 0.0,
    };
    let step = (horizon / 2e5).clamp(1e-4, 1e-2).min(delay / 10.0);
    let report = convergence_check(
        &model,
        &initial,
        horizon,
        step,
        horizon / PLOT_POINTS as f64,
    )
    .map_err(|e| e.to_string())?;
    let traj = Trajectory {
        times: report.times.clone(),
        x_btl: (0..n)
            .map(|i| report.states.iter().map(|s| s.x_btl[i]).collect())
            .collect(),
        q: report.states.iter().map(|s| s.q).collect(),
        // the deep-buffer BBRv1 split is not unique
        target: match version {
            BbrVersion::V1 => None,
            BbrVersion::V2 => Some(5.0 * capacity / (4 * n + 1) as f64),
        },
    };
    serde_json::to_string(&traj).map_err(|e| e.to_string())
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn simulate_dumbbell(
    bbr1: usize,
    bbr2: usize,
    reno: usize,
    cubic: usize,
    capacity_mbps: f64,
    delay_ms: f64,
    buffer_bdp: f64,
    red: bool,
    duration_s: f64,
) -> Result<String, JsError> {
    run_dumbbell(
        [bbr1, bbr2, reno, cubic],
        capacity_mbps,
        delay_ms,
        buffer_bdp,
        red,
        duration_s,
    )
    .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn analyze_model(model: &str, n: usize, capacity: f64, delay: f64) -> Result<String, JsError> {
    run_analysis(model, n, capacity, delay).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn reduced_trajectory(
    version: u8,
    n: usize,
    delay: f64,
    lo: f64,
    hi: f64,
    horizon: f64,
) -> Result<String, JsError> {
    run_trajectory(version, n, delay, lo, hi, horizon).map_err(|e| JsError::new(&e))
}
