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

//! Full fluid-model simulation of a scenario: links, Reno, CUBIC, BBRv1
//! and BBRv2 senders coupled through delayed signals.

use crate::cca::bbr::{self, Bbr2Modes, Bbr2Observation};
use crate::cca::loss;
use crate::error::{Error, SolverError};
use crate::netmodel::{self, LossTap, Upstream};
use crate::scenario::{CcaKind, Link, LinkId, MaxFilterInput, Scenario, Smoothing};
use crate::solver::{integrate, DdeSystem, IntegrationSettings, SignalHistory};
use crate::trace::{fnv1a_hex, Trace, TraceMetadata};

/// Longest possible BBRv2 ProbeBW period, s.
const BBR2_MAX_PERIOD: f64 = 3.0;

#[derive(Clone, Copy, Debug)]
struct LinkSignals {
    q: usize,
    y: usize,
    p: usize,
}

#[derive(Clone, Copy, Debug)]
struct AgentSignals {
    x: usize,
    tau: usize,
    w: usize,
    v: usize,
    xdlv: usize,
    ploss: usize,
    bbr: Option<BbrSignals>,
}

#[derive(Clone, Copy, Debug)]
struct BbrSignals {
    xbtl: usize,
    xmax: usize,
    taumin: usize,
    mprt: usize,
    /// (m_dwn, m_crs) for BBRv2.
    v2_modes: Option<(usize, usize)>,
}

#[derive(Clone, Copy, Debug)]
enum AgentState {
    Reno {
        w: usize,
    },
    Cubic {
        s: usize,
        w_max: usize,
    },
    Bbr {
        tau_min: usize,
        t_prt: usize,
        t_pbw: usize,
        x_max: usize,
        x_btl: usize,
        v: usize,
        m_prt: usize,
        v2: Option<Bbr2State>,
    },
}

#[derive(Clone, Copy, Debug)]
struct Bbr2State {
    w_hi: usize,
    w_lo: usize,
    m_dwn: usize,
    m_crs: usize,
}

#[derive(Clone, Debug)]
struct AgentLayout {
    id: usize,
    cca: CcaKind,
    round_trip: f64,
    bottleneck: LinkId,
    back_from_bottleneck: f64,
    taps: Vec<LossTap>,
    smoothing: Smoothing,
    state: AgentState,
    signals: AgentSignals,
}

/// A scenario compiled into a delay-differential system.
#[derive(Clone, Debug)]
pub struct NetworkSystem {
    scenario: Scenario,
    n_agents: usize,
    state_names: Vec<String>,
    initial: Vec<f64>,
    modes: Vec<usize>,
    signal_names: Vec<String>,
    signal_horizons: Vec<f64>,
    link_state: Vec<usize>,
    link_signals: Vec<LinkSignals>,
    upstream: Vec<Vec<Upstream>>,
    agents: Vec<AgentLayout>,
}

struct Builder {
    state_names: Vec<String>,
    initial: Vec<f64>,
    modes: Vec<usize>,
    signal_names: Vec<String>,
    signal_horizons: Vec<f64>,
}

impl Builder {
    fn state(&mut self, name: String, value: f64) -> usize {
        self.state_names.push(name);
        self.initial.push(value);
        self.state_names.len() - 1
    }

    fn mode(&mut self, name: String, value: f64) -> usize {
        let k = self.state(name, value);
        self.modes.push(k);
        k
    }

    fn signal(&mut self, name: String, horizon: f64) -> usize {
        self.signal_names.push(name);
        self.signal_horizons.push(horizon);
        self.signal_names.len() - 1
    }
}

impl NetworkSystem {
    pub fn new(scenario: &Scenario) -> Result<Self, Error> {
        scenario.validate()?;
        let h = scenario.solver.step;
        let delay_horizon = scenario.max_delay() * 1.001 + 4.0 * h;
        let mut b = Builder {
            state_names: Vec::new(),
            initial: Vec::new(),
            modes: Vec::new(),
            signal_names: Vec::new(),
            signal_horizons: Vec::new(),
        };

        let link_state: Vec<usize> = scenario
            .links
            .iter()
            .map(|l| b.state(format!("q_{}", l.id), 0.0))
            .collect();

        let mut agents = Vec::with_capacity(scenario.agents.len());
        let mut upstream = vec![Vec::new(); scenario.links.len()];
        let n_agents = scenario.agents.len();
        for a in &scenario.agents {
            let bottleneck = scenario
                .bottleneck_of(a)
                .expect("validated path has links")
                .clone();
            let sharing = scenario
                .agents
                .iter()
                .filter(|o| scenario.bottleneck_of(o).map(|l| l.id) == Some(bottleneck.id))
                .count()
                .max(1);
            let d = a.path.total_propagation;
            let tau0 = d;
            let i = a.id;
            let floor = scenario.model.window_floor;
            let fair_bdp = (bottleneck.capacity * d / sharing as f64).max(floor);
            let init = &a.initial;

            let state = match a.cca {
                CcaKind::Reno => AgentState::Reno {
                    w: b.state(format!("w_{i}"), init.window.unwrap_or(fair_bdp).max(floor)),
                },
                CcaKind::Cubic => {
                    let w_max0 = init.window.unwrap_or(fair_bdp).max(floor);
                    let s0 = (w_max0 * loss::CUBIC_BETA / loss::CUBIC_C).cbrt();
                    AgentState::Cubic {
                        s: b.state(format!("s_{i}"), s0),
                        w_max: b.state(format!("wmax_{i}"), w_max0),
                    }
                }
                CcaKind::BbrV1 | CcaKind::BbrV2 => {
                    let x_btl0 = init.x_btl.unwrap_or(bottleneck.capacity / sharing as f64);
                    let tau_min0 = init.tau_min.unwrap_or(tau0);
                    let tau_min = b.state(format!("taumin_{i}"), tau_min0);
                    let t_prt = b.state(format!("tprt_{i}"), 0.0);
                    let t_pbw = b.state(format!("tpbw_{i}"), 0.0);
                    let x_max = b.state(format!("xmax_{i}"), x_btl0);
                    let x_btl = b.state(format!("xbtl_{i}"), x_btl0);
                    let v = b.state(format!("v_{i}"), init.inflight.unwrap_or(0.0));
                    let m_prt = b.mode(format!("mprt_{i}"), 0.0);
                    let v2 = (a.cca == CcaKind::BbrV2).then(|| {
                        let w_bar = bbr::estimated_bdp(x_btl0, tau_min0);
                        let w_hi0 = init.w_hi.unwrap_or(2.0 * x_btl0 * tau0);
                        Bbr2State {
                            w_hi: b.state(format!("whi_{i}"), w_hi0),
                            w_lo: b.state(format!("wlo_{i}"), bbr::bbr2_drain_target(w_bar, w_hi0)),
                            m_dwn: b.mode(format!("mdwn_{i}"), 0.0),
                            m_crs: b.mode(format!("mcrs_{i}"), 0.0),
                        }
                    });
                    AgentState::Bbr {
                        tau_min,
                        t_prt,
                        t_pbw,
                        x_max,
                        x_btl,
                        v,
                        m_prt,
                        v2,
                    }
                }
            };

            let signals = AgentSignals {
                x: b.signal(format!("x_{i}"), delay_horizon),
                tau: b.signal(format!("tau_{i}"), delay_horizon),
                w: b.signal(format!("w_{i}"), 0.0),
                v: b.signal(format!("v_{i}"), 0.0),
                xdlv: b.signal(format!("xdlv_{i}"), 0.0),
                ploss: b.signal(format!("ploss_{i}"), 0.0),
                bbr: a.cca.is_bbr().then(|| {
                    let v2 = a.cca == CcaKind::BbrV2;
                    BbrSignals {
                        xbtl: b.signal(format!("xbtl_{i}"), 0.0),
                        xmax: b.signal(
                            format!("xmax_{i}"),
                            if v2 {
                                BBR2_MAX_PERIOD + delay_horizon
                            } else {
                                0.0
                            },
                        ),
                        taumin: b.signal(format!("taumin_{i}"), 0.0),
                        mprt: b.signal(format!("mprt_{i}"), 0.0),
                        v2_modes: v2.then(|| {
                            (
                                b.signal(format!("mdwn_{i}"), 0.0),
                                b.signal(format!("mcrs_{i}"), 0.0),
                            )
                        }),
                    }
                }),
            };
            for (k, &l) in a.path.links.iter().enumerate() {
                upstream[l].push(Upstream {
                    rate_signal: signals.x,
                    forward_delay: a.path.forward_delay[k],
                });
            }
            agents.push(AgentLayout {
                id: i,
                cca: a.cca,
                round_trip: d,
                bottleneck: bottleneck.id,
                back_from_bottleneck: a.path.feedback_from(bottleneck.id).unwrap_or(d),
                taps: Vec::new(),
                smoothing: bottleneck.smoothing,
                state,
                signals,
            });
        }

        let link_signals: Vec<LinkSignals> = scenario
            .links
            .iter()
            .map(|l| LinkSignals {
                q: b.signal(format!("q_{}", l.id), delay_horizon),
                y: b.signal(format!("y_{}", l.id), delay_horizon),
                p: b.signal(format!("p_{}", l.id), delay_horizon),
            })
            .collect();
        for (layout, a) in agents.iter_mut().zip(&scenario.agents) {
            layout.taps = a
                .path
                .links
                .iter()
                .zip(&a.path.forward_delay)
                .map(|(&l, &f)| LossTap {
                    loss_signal: link_signals[l].p,
                    forward_delay: f,
                })
                .collect();
        }

        Ok(Self {
            scenario: scenario.clone(),
            n_agents,
            state_names: b.state_names,
            initial: b.initial,
            modes: b.modes,
            signal_names: b.signal_names,
            signal_horizons: b.signal_horizons,
            link_state,
            link_signals,
            upstream,
            agents,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    fn link(&self, id: LinkId) -> &Link {
        &self.scenario.links[id]
    }

    fn latency(&self, a: &AgentLayout, state: &[f64]) -> f64 {
        let path = &self.scenario.agents[a.id - 1].path;
        path.links.iter().fold(path.total_propagation, |acc, &l| {
            acc + state[self.link_state[l]] / self.link(l).capacity
        })
    }

    fn bbr2_period(&self, a: &AgentLayout, tau_min: f64) -> f64 {
        bbr::bbr2_period_length(a.id, self.n_agents, tau_min)
    }

    fn period(&self, a: &AgentLayout, tau_min: f64) -> f64 {
        match a.cca {
            CcaKind::BbrV2 => self.bbr2_period(a, tau_min),
            _ => bbr::bbr1_period(tau_min),
        }
    }

    /// Sending rate and effective window of an agent.
    fn rate_and_window(&self, a: &AgentLayout, state: &[f64], latency: f64) -> (f64, f64, f64) {
        let floor = self.scenario.model.window_floor;
        match a.state {
            AgentState::Reno { w } => {
                let w = state[w];
                (loss::window_rate(w, latency), w, w)
            }
            AgentState::Cubic { s, w_max } => {
                let w = loss::cubic_window(state[s], state[w_max], floor);
                (loss::window_rate(w, latency), w, w)
            }
            AgentState::Bbr {
                tau_min,
                t_pbw,
                x_btl,
                v,
                m_prt,
                v2,
                ..
            } => {
                let k_time = a.smoothing.k_time;
                let (tau_min, t_pbw, x_btl, m_prt) =
                    (state[tau_min], state[t_pbw], state[x_btl], state[m_prt]);
                let w_bar = bbr::estimated_bdp(x_btl, tau_min);
                let (x_pcg, w_pbw, w_prt) = match v2 {
                    None => {
                        let phase = bbr::bbr1_phase(a.id);
                        let (w_prt, w_pbw) = bbr::bbr1_inflight_limits(x_btl, tau_min);
                        (
                            bbr::bbr1_pacing(x_btl, t_pbw, phase, tau_min, k_time),
                            w_pbw,
                            w_prt,
                        )
                    }
                    Some(s) => {
                        let (w_pbw, w_prt) =
                            bbr::bbr2_windows(w_bar, state[s.w_hi], state[s.w_lo], state[s.m_crs]);
                        (
                            bbr::bbr2_pacing(x_btl, t_pbw, tau_min, state[s.m_dwn], k_time),
                            w_pbw,
                            w_prt,
                        )
                    }
                };
                let x_pbw = bbr::probebw_rate(w_pbw, latency, x_pcg);
                let x = bbr::bbr_sending_rate(m_prt, w_prt, latency, x_pbw);
                let window = m_prt * w_prt + (1.0 - m_prt) * w_pbw;
                (x, window, state[v])
            }
        }
    }
}

impl DdeSystem for NetworkSystem {
    fn state_names(&self) -> Vec<String> {
        self.state_names.clone()
    }

    fn signal_names(&self) -> Vec<String> {
        self.signal_names.clone()
    }

    fn initial_state(&self) -> Vec<f64> {
        self.initial.clone()
    }

    fn mode_indices(&self) -> Vec<usize> {
        self.modes.clone()
    }

    fn horizon(&self) -> f64 {
        self.signal_horizons.iter().copied().fold(0.0, f64::max)
    }

    fn signal_horizons(&self) -> Vec<f64> {
        self.signal_horizons.clone()
    }

    fn min_delay(&self) -> Option<f64> {
        Some(self.scenario.min_delay())
    }

    fn record(&self, t: f64, state: &[f64], h: &mut SignalHistory) -> Result<(), SolverError> {
        for a in &self.agents {
            let latency = self.latency(a, state);
            let (x, w, v) = self.rate_and_window(a, state, latency);
            h.set(a.signals.tau, latency);
            h.set(a.signals.x, x);
            h.set(a.signals.w, w);
            h.set(a.signals.v, v);
            if let (
                Some(sig),
                AgentState::Bbr {
                    x_btl,
                    x_max,
                    tau_min,
                    m_prt,
                    v2,
                    ..
                },
            ) = (a.signals.bbr, a.state)
            {
                h.set(sig.xbtl, state[x_btl]);
                h.set(sig.xmax, state[x_max]);
                h.set(sig.taumin, state[tau_min]);
                h.set(sig.mprt, state[m_prt]);
                if let (Some((mdwn, mcrs)), Some(s)) = (sig.v2_modes, v2) {
                    h.set(mdwn, state[s.m_dwn]);
                    h.set(mcrs, state[s.m_crs]);
                }
            }
        }
        for (l, link) in self.scenario.links.iter().enumerate() {
            let q = state[self.link_state[l]];
            let y = netmodel::arrival_rate(&self.upstream[l], t, h)?;
            let p = netmodel::link_loss(link, y, q);
            let sig = self.link_signals[l];
            h.set(sig.q, q);
            h.set(sig.y, y);
            h.set(sig.p, p);
        }
        for a in &self.agents {
            let d = a.round_trip;
            let b = self.link_signals[a.bottleneck];
            let back = a.back_from_bottleneck;
            let sent = h.lookup(a.signals.x, t - d)?;
            let y_b = h.lookup(b.y, t - back)?;
            let q_b = h.lookup(b.q, t - back)?;
            let xdlv = bbr::delivery_rate(sent, y_b, q_b, self.link(a.bottleneck).capacity);
            let ploss = netmodel::path_loss(&a.taps, t - d, h)?;
            h.set(a.signals.xdlv, xdlv);
            h.set(a.signals.ploss, ploss);
        }
        Ok(())
    }

    fn derivatives(
        &self,
        t: f64,
        state: &[f64],
        h: &SignalHistory,
        out: &mut [f64],
    ) -> Result<(), SolverError> {
        for (l, link) in self.scenario.links.iter().enumerate() {
            let sig = self.link_signals[l];
            let k = self.link_state[l];
            out[k] = netmodel::queue_derivative(link, h.current(sig.y), h.current(sig.p), state[k]);
        }
        let model = &self.scenario.model;
        let gain = model.assimilation_gain;
        for a in &self.agents {
            let d = a.round_trip;
            let s = &a.smoothing;
            let loss_obs = h.current(a.signals.ploss);
            match a.state {
                AgentState::Reno { w } => {
                    let sent = h.lookup(a.signals.x, t - d)?;
                    out[w] = loss::reno_window_derivative(state[w], sent, loss_obs);
                }
                AgentState::Cubic { s: since, w_max } => {
                    let sent = h.lookup(a.signals.x, t - d)?;
                    let w = h.current(a.signals.w);
                    let (ds, dw) =
                        loss::cubic_aux_derivatives(state[since], state[w_max], w, sent, loss_obs);
                    out[since] = ds;
                    out[w_max] = dw;
                }
                AgentState::Bbr {
                    tau_min,
                    t_prt,
                    t_pbw,
                    x_max,
                    x_btl,
                    v,
                    m_prt,
                    v2,
                } => {
                    let tau_obs = h.lookup(a.signals.tau, t - d)?;
                    let tm = state[tau_min];
                    out[tau_min] = bbr::rtprop_derivative(tm, tau_obs, s.k_time, gain);
                    let prt = bbr::probertt_update(
                        state[m_prt],
                        state[t_prt],
                        tm,
                        tau_obs,
                        s.k_time,
                        gain,
                    );
                    out[t_prt] = prt.timer_derivative;
                    out[t_pbw] = 1.0;
                    let x = h.current(a.signals.x);
                    let xdlv = h.current(a.signals.xdlv);
                    let input = match model.max_filter_input {
                        MaxFilterInput::DeliveryRate => xdlv,
                        MaxFilterInput::SendingRate => x,
                    };
                    out[x_max] = bbr::xmax_derivative(state[x_max], input, state[t_pbw], s, gain);
                    out[v] = bbr::inflight_derivative(x, xdlv);
                    match v2 {
                        None => {
                            out[x_btl] = bbr::bbr1_xbtl_derivative(
                                state[x_btl],
                                state[x_max],
                                state[t_pbw],
                                bbr::bbr1_period(tm),
                                s.k_time,
                                gain,
                            );
                        }
                        Some(v2s) => {
                            let period = self.bbr2_period(a, tm);
                            let sig = a.signals.bbr.expect("bbr signals");
                            let prev_max = h.lookup(sig.xmax, t - period)?;
                            out[x_btl] = bbr::bbr2_xbtl_derivative(
                                state[x_btl],
                                state[x_max],
                                prev_max,
                                state[v2s.m_dwn],
                                gain,
                            );
                            let w_hi = state[v2s.w_hi];
                            out[v2s.w_hi] = bbr::bbr2_whi_derivative(
                                w_hi,
                                state[v],
                                loss_obs,
                                state[t_pbw],
                                tm,
                                state[v2s.m_crs],
                                s,
                            );
                            let w_bar = bbr::estimated_bdp(state[x_btl], tm);
                            out[v2s.w_lo] = bbr::bbr2_wlo_derivative(
                                state[v2s.w_lo],
                                bbr::bbr2_drain_target(w_bar, w_hi),
                                loss_obs,
                                tm,
                                state[v2s.m_crs],
                                model.wlo_loss_offset,
                                s,
                                gain,
                            );
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn mode_deltas(
        &self,
        t: f64,
        state: &[f64],
        h: &SignalHistory,
        out: &mut [f64],
    ) -> Result<(), SolverError> {
        let gain = self.scenario.model.assimilation_gain;
        for a in &self.agents {
            if let AgentState::Bbr {
                tau_min,
                t_prt,
                t_pbw,
                x_btl,
                v,
                m_prt,
                v2,
                ..
            } = a.state
            {
                let s = &a.smoothing;
                let tm = state[tau_min];
                let tau_obs = h.lookup(a.signals.tau, t - a.round_trip)?;
                let prt =
                    bbr::probertt_update(state[m_prt], state[t_prt], tm, tau_obs, s.k_time, gain);
                out[m_prt] = prt.mode_delta;
                if let Some(v2s) = v2 {
                    let w_bar = bbr::estimated_bdp(state[x_btl], tm);
                    let obs = Bbr2Observation {
                        inflight: state[v],
                        path_loss: h.current(a.signals.ploss),
                        t_pbw: state[t_pbw],
                        period: self.bbr2_period(a, tm),
                        tau_min: tm,
                        w_bar,
                        w_minus: bbr::bbr2_drain_target(w_bar, state[v2s.w_hi]),
                    };
                    let modes = Bbr2Modes {
                        m_dwn: state[v2s.m_dwn],
                        m_crs: state[v2s.m_crs],
                    };
                    let (d_dwn, d_crs) = bbr::bbr2_mode_updates(modes, &obs, s);
                    out[v2s.m_dwn] = d_dwn;
                    out[v2s.m_crs] = d_crs;
                }
            }
        }
        Ok(())
    }

    fn post_step(&self, _t: f64, previous: &[f64], state: &mut [f64]) {
        for (l, link) in self.scenario.links.iter().enumerate() {
            let k = self.link_state[l];
            state[k] = state[k].clamp(0.0, link.buffer);
        }
        let floor = self.scenario.model.window_floor;
        for a in &self.agents {
            match a.state {
                AgentState::Reno { w } => state[w] = state[w].max(floor),
                AgentState::Cubic { s, w_max } => {
                    state[s] = state[s].max(0.0);
                    state[w_max] = state[w_max].max(floor);
                }
                AgentState::Bbr {
                    tau_min,
                    t_prt,
                    t_pbw,
                    x_max,
                    x_btl,
                    v,
                    m_prt,
                    v2,
                } => {
                    if state[m_prt] != previous[m_prt] {
                        state[t_prt] = 0.0;
                    }
                    let period = self.period(a, previous[tau_min]);
                    if previous[t_pbw] >= period {
                        state[t_pbw] = 0.0;
                    }
                    state[t_prt] = state[t_prt].max(0.0);
                    // the smooth ReLU leaks a little upward; RTprop only falls
                    state[tau_min] = state[tau_min].min(previous[tau_min]).max(1e-9);
                    state[x_max] = state[x_max].max(0.0);
                    state[x_btl] = state[x_btl].max(1e-9);
                    state[v] = state[v].max(0.0);
                    if let Some(s) = v2 {
                        state[s.w_hi] = state[s.w_hi].max(0.0);
                        state[s.w_lo] = state[s.w_lo].max(0.0);
                    }
                }
            }
        }
    }
}

/// Runs the scenario for its configured duration and returns the trace
/// sampled at the configured interval.
pub fn simulate(scenario: &Scenario) -> Result<Trace, Error> {
    let system = NetworkSystem::new(scenario)?;
    let s = &scenario.solver;
    let settings = IntegrationSettings {
        step: s.step,
        duration: s.duration,
        sample_interval: s.sample_interval,
        record_from: 0.0,
    };
    let mut trace = integrate(&system, &settings)?;
    trace.metadata = TraceMetadata {
        scenario_hash: scenario_hash(scenario),
        units: "time s, volume segments, rate segments/s".into(),
    };
    Ok(trace)
}

/// Stable hash of the scenario contents.
pub fn scenario_hash(scenario: &Scenario) -> String {
    fnv1a_hex(format!("{scenario:?}").as_bytes())
}
