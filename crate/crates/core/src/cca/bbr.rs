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

//! BBR fluid model: the shared skeleton and the BBRv1 / BBRv2 specifics.
//!
//! Gated terms that assimilate one variable to another (RTprop estimate,
//! max filter, bandwidth estimate, inflight_lo relaxation) are scaled by an
//! assimilation gain `gain` in 1/s. A gain of 1 gives the bare unit-rate
//! form; the simulator uses a gain large enough that each assimilation
//! finishes inside the time window its gate is open.
//!
//! Timer resets on time-out are discrete events, handled by the simulator.

use crate::netmodel::{relu_smooth, sigmoid};
use crate::scenario::Smoothing;

/// ProbeRTT inflight cap of BBRv1, segments.
pub const BBR1_PROBE_RTT_WINDOW: f64 = 4.0;
/// Length of the max-filter reset window at the start of a ProbeBW period, s.
pub const MAX_FILTER_RESET: f64 = 0.01;
/// Length of the BBRv1 bandwidth-estimate update window at the end of a period, s.
pub const BBR1_UPDATE_WINDOW: f64 = 0.01;
/// Loss rate above which BBRv2 treats probing as excessive.
pub const BBR2_LOSS_THRESHOLD: f64 = 0.02;
/// BBRv2 multiplicative decrease.
pub const BBR2_BETA: f64 = 0.3;
/// Share of inflight_hi BBRv2 leaves unused while cruising.
pub const BBR2_HEADROOM: f64 = 0.15;
/// Cap on the exponent of the inflight_hi growth factor.
pub const WHI_EXPONENT_CAP: f64 = 60.0;

/// RTprop estimate derivative: closes the gap to smaller observed RTTs
/// and ignores larger ones.
pub fn rtprop_derivative(tau_min: f64, tau_observed: f64, k_time: f64, gain: f64) -> f64 {
    -gain * relu_smooth(tau_min - tau_observed, k_time)
}

/// Time between ProbeRTT entries (mode 0) or ProbeRTT duration (mode 1).
pub fn probertt_period(m_prt: f64) -> f64 {
    m_prt * 0.2 + (1.0 - m_prt) * 10.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeRttUpdate {
    /// Increment of the ProbeRTT mode variable before snapping.
    pub mode_delta: f64,
    /// Continuous part of the timer derivative.
    pub timer_derivative: f64,
    /// Period that applies after snapping the mode.
    pub next_period: f64,
    /// The mode flips this step; the timer restarts from zero.
    pub timer_reset: bool,
}

/// ProbeRTT mode and timer update.
///
/// The timer counts up and restarts when the mode flips on time-out.
/// Outside ProbeRTT it is also pulled to zero (with `gain`) whenever the
/// observed RTT is at or below the current RTprop estimate; inside, the
/// stay lasts its full 200 ms.
pub fn probertt_update(
    m_prt: f64,
    t_prt: f64,
    tau_min: f64,
    tau_observed: f64,
    k_time: f64,
    gain: f64,
) -> ProbeRttUpdate {
    let period = probertt_period(m_prt);
    let timeout = sigmoid(t_prt - period, k_time);
    let mode_delta = timeout * ((1.0 - m_prt) - m_prt);
    let snapped = crate::solver::snap_mode(m_prt + mode_delta);
    ProbeRttUpdate {
        mode_delta,
        timer_derivative: 1.0
            - (1.0 - m_prt) * gain * sigmoid(tau_min - tau_observed, k_time) * t_prt,
        next_period: probertt_period(snapped),
        timer_reset: snapped != m_prt,
    }
}

/// ProbeBW rate: the tighter of window and pacing constraints.
pub fn probebw_rate(w_pbw: f64, latency: f64, x_pcg: f64) -> f64 {
    (w_pbw / latency).min(x_pcg)
}

/// Sending rate: the ProbeRTT window in ProbeRTT mode, the ProbeBW rate
/// otherwise.
pub fn bbr_sending_rate(m_prt: f64, w_prt: f64, latency: f64, x_pbw: f64) -> f64 {
    m_prt * (w_prt / latency) + (1.0 - m_prt) * x_pbw
}

/// Delivery rate seen by a sender: its share of the bottleneck's output.
///
/// `rate` is the sender's rate one round trip ago; `arrival` and `queue`
/// are the bottleneck arrival rate and queue when that data arrived.
pub fn delivery_rate(rate: f64, arrival: f64, queue: f64, capacity: f64) -> f64 {
    if arrival <= 0.0 {
        return 0.0;
    }
    let served = if queue > 0.0 { capacity } else { arrival };
    (rate / arrival * served).min(capacity)
}

/// Max-filter derivative: tracks the largest input of the period and
/// resets during the first ten milliseconds of each period.
pub fn xmax_derivative(x_max: f64, input: f64, t_pbw: f64, s: &Smoothing, gain: f64) -> f64 {
    gain * (relu_smooth(input - x_max, s.k_rate)
        - sigmoid(MAX_FILTER_RESET - t_pbw, s.k_time) * x_max)
}

pub fn inflight_derivative(rate: f64, delivery: f64) -> f64 {
    rate - delivery
}

/// Estimated BDP.
pub fn estimated_bdp(x_btl: f64, tau_min: f64) -> f64 {
    x_btl * tau_min
}

/// Probe phase of a BBRv1 agent, derived from its id.
pub fn bbr1_phase(id: usize) -> usize {
    id % 6
}

/// BBRv1 ProbeBW period: eight phases of one RTprop each.
pub fn bbr1_period(tau_min: f64) -> f64 {
    8.0 * tau_min
}

/// Indicator of `t_pbw` lying in phase `phase` of the period.
pub fn bbr1_phase_pulse(t_pbw: f64, phase: usize, tau_min: f64, k_time: f64) -> f64 {
    let phase = phase as f64;
    sigmoid(t_pbw - phase * tau_min, k_time) * sigmoid((phase + 1.0) * tau_min - t_pbw, k_time)
}

/// BBRv1 pacing: 5/4 of the estimate in the probe phase, 3/4 in the
/// following drain phase, the estimate otherwise.
pub fn bbr1_pacing(x_btl: f64, t_pbw: f64, phase: usize, tau_min: f64, k_time: f64) -> f64 {
    x_btl
        * (1.0 + 0.25 * bbr1_phase_pulse(t_pbw, phase, tau_min, k_time)
            - 0.25 * bbr1_phase_pulse(t_pbw, phase + 1, tau_min, k_time))
}

/// BBRv1 bandwidth estimate: assimilates the period maximum during the
/// last ten milliseconds of the period.
pub fn bbr1_xbtl_derivative(
    x_btl: f64,
    x_max: f64,
    t_pbw: f64,
    period: f64,
    k_time: f64,
    gain: f64,
) -> f64 {
    gain * sigmoid(t_pbw - period + BBR1_UPDATE_WINDOW, k_time) * (x_max - x_btl)
}

/// (ProbeRTT window, ProbeBW window) of BBRv1.
pub fn bbr1_inflight_limits(x_btl: f64, tau_min: f64) -> (f64, f64) {
    (BBR1_PROBE_RTT_WINDOW, 2.0 * estimated_bdp(x_btl, tau_min))
}

/// BBRv2 ProbeBW period, desynchronized by agent id `id` out of `n`.
pub fn bbr2_period_length(id: usize, n: usize, tau_min: f64) -> f64 {
    (63.0 * tau_min).min(2.0 + id as f64 / n as f64)
}

/// BBRv2 pacing: the estimate for the first RTprop of the period, 5/4 of
/// it afterwards, 3/4 while reducing inflight.
pub fn bbr2_pacing(x_btl: f64, t_pbw: f64, tau_min: f64, m_dwn: f64, k_time: f64) -> f64 {
    x_btl * (1.0 + 0.25 * sigmoid(t_pbw - tau_min, k_time) * (1.0 - m_dwn) - 0.25 * m_dwn)
}

/// Draining target `min(bdp, 0.85 inflight_hi)`.
pub fn bbr2_drain_target(w_bar: f64, w_hi: f64) -> f64 {
    w_bar.min((1.0 - BBR2_HEADROOM) * w_hi)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bbr2Modes {
    pub m_dwn: f64,
    pub m_crs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bbr2Observation {
    pub inflight: f64,
    pub path_loss: f64,
    pub t_pbw: f64,
    pub period: f64,
    pub tau_min: f64,
    pub w_bar: f64,
    pub w_minus: f64,
}

/// Increments of (inflight-reducing, cruising) mode variables.
///
/// Reducing starts once inflight exceeds 5/4 of the BDP estimate or loss
/// exceeds 2 %, after the first RTprop of a period; it ends when inflight
/// has drained to the target, which starts cruising. Cruising ends with
/// the period.
pub fn bbr2_mode_updates(modes: Bbr2Modes, obs: &Bbr2Observation, s: &Smoothing) -> (f64, f64) {
    let Bbr2Modes { m_dwn, m_crs } = modes;
    let trigger = (sigmoid(obs.inflight - 1.25 * obs.w_bar, s.k_vol)
        + sigmoid(obs.path_loss - BBR2_LOSS_THRESHOLD, s.k_loss))
    .min(1.0);
    let d_dwn =
        (1.0 - m_crs) * (1.0 - m_dwn) * sigmoid(obs.t_pbw - obs.tau_min, s.k_time) * trigger
            - m_dwn * sigmoid(obs.w_minus - obs.inflight, s.k_vol);
    let d_crs = -d_dwn - sigmoid(obs.t_pbw - obs.period, s.k_time) * m_crs;
    (d_dwn, d_crs)
}

/// BBRv2 bandwidth estimate: while reducing inflight, assimilates the
/// larger of this and the previous period's maximum.
pub fn bbr2_xbtl_derivative(
    x_btl: f64,
    x_max_now: f64,
    x_max_prev_period: f64,
    m_dwn: f64,
    gain: f64,
) -> f64 {
    gain * m_dwn * (x_max_now.max(x_max_prev_period) - x_btl)
}

/// inflight_hi: exponential growth while it limits probing, reduced
/// multiplicatively under excessive loss.
pub fn bbr2_whi_derivative(
    w_hi: f64,
    inflight: f64,
    path_loss: f64,
    t_pbw: f64,
    tau_min: f64,
    m_crs: f64,
    s: &Smoothing,
) -> f64 {
    let exponent = (t_pbw / tau_min).min(WHI_EXPONENT_CAP);
    (1.0 - m_crs)
        * sigmoid(t_pbw - tau_min, s.k_time)
        * sigmoid(inflight - w_hi, s.k_vol)
        * exponent.exp2()
        - sigmoid(path_loss - BBR2_LOSS_THRESHOLD, s.k_loss) * (BBR2_BETA / tau_min) * w_hi
}

/// inflight_lo: follows the drain target outside cruising, decays by 30 %
/// per RTprop under loss while cruising. `loss_offset` shifts the loss
/// gate; zero evaluates it exactly at the observed loss.
#[allow(clippy::too_many_arguments)]
pub fn bbr2_wlo_derivative(
    w_lo: f64,
    w_minus: f64,
    path_loss: f64,
    tau_min: f64,
    m_crs: f64,
    loss_offset: f64,
    s: &Smoothing,
    gain: f64,
) -> f64 {
    (1.0 - m_crs) * gain * (w_minus - w_lo)
        - m_crs * sigmoid(path_loss - loss_offset, s.k_loss) * BBR2_BETA * w_lo / tau_min
}

/// (ProbeBW window, ProbeRTT window) of BBRv2.
pub fn bbr2_windows(w_bar: f64, w_hi: f64, w_lo: f64, m_crs: f64) -> (f64, f64) {
    let bound = (1.0 - m_crs) * w_hi + m_crs * w_lo;
    ((2.0 * w_bar).min(bound), w_bar / 2.0)
}
