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

use fluidcc::cca::bbr::delivery_rate;
use fluidcc::config::parse_scenario;
use fluidcc::metrics::{jain_fairness, MetricsReport};
use fluidcc::simulate;
use proptest::prelude::*;

fn scenario_source(ccas: &[usize], buffer_bdp: f64, red: bool, delay_ms: f64, mbps: f64) -> String {
    let names = ["reno", "cubic", "bbr1", "bbr2"];
    let mut src = format!(
        "[solver]\nduration_s = 0.5\nwindow_s = 0.2\n\n[bottleneck]\ncapacity_mbps = {mbps}\ndelay_ms = {delay_ms}\nbuffer_bdp = {buffer_bdp}\ndiscipline = \"{}\"\n",
        if red { "red" } else { "droptail" }
    );
    for (k, c) in ccas.iter().enumerate() {
        src.push_str(&format!(
            "\n[[agents]]\ncca = \"{}\"\naccess_delay_ms = {}\n",
            names[*c],
            2.0 + k as f64
        ));
    }
    src
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn simulated_signals_stay_in_range(
        ccas in prop::collection::vec(0usize..4, 1..4),
        buffer_bdp in 0.3f64..5.0,
        red in any::<bool>(),
        delay_ms in 2.0f64..15.0,
        mbps in 10.0f64..100.0,
    ) {
        let s = parse_scenario(&scenario_source(&ccas, buffer_bdp, red, delay_ms, mbps)).unwrap();
        let trace = simulate(&s).unwrap();
        let b = s.links[0].buffer;
        prop_assert!(trace.column("q_0").unwrap().iter().all(|q| (0.0..=b).contains(q)));
        prop_assert!(trace.column("p_0").unwrap().iter().all(|p| (0.0..=1.0).contains(p)));
        for a in &s.agents {
            let x = trace.column(&format!("x_{}", a.id)).unwrap();
            prop_assert!(x.iter().all(|v| v.is_finite() && *v >= 0.0));
            if let Some(tm) = trace.column(&format!("taumin_{}", a.id)) {
                prop_assert!(tm.windows(2).all(|w| w[1] <= w[0]));
            }
        }
        let m = MetricsReport::for_scenario(&trace, &s).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.loss_rate));
        prop_assert!((0.0..=1.0 + 1e-9).contains(&m.utilization));
        prop_assert!((0.0..=1.0).contains(&m.mean_queue_share));
        prop_assert!(m.jain_fairness > 0.0 && m.jain_fairness <= 1.0);
    }

    #[test]
    fn delivery_shares_add_up_to_capacity(
        rates in prop::collection::vec(0.0f64..1e4, 1..12),
        c in 1.0f64..1e5,
    ) {
        let y: f64 = rates.iter().sum();
        prop_assume!(y > 0.0);
        let total: f64 = rates.iter().map(|x| delivery_rate(*x, y, 1.0, c)).sum();
        prop_assert!((total - c).abs() <= 1e-9 * c);
        for x in &rates {
            // an idle link hands back what was sent
            prop_assert!((delivery_rate(*x, y, 0.0, c) - x.min(c)).abs() <= 1e-9 * x.max(1.0));
        }
    }

    #[test]
    fn jain_is_scale_invariant(
        rates in prop::collection::vec(0.0f64..1e4, 1..30),
        scale in 1e-3f64..1e3,
    ) {
        prop_assume!(rates.iter().any(|r| *r > 0.0));
        let scaled: Vec<f64> = rates.iter().map(|r| r * scale).collect();
        let a = jain_fairness(&rates).unwrap();
        let b = jain_fairness(&scaled).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a >= 1.0 / rates.len() as f64 - 1e-12 && a <= 1.0);
    }
}

#[test]
fn simulation_is_deterministic() {
    let src = scenario_source(&[2, 3, 0], 1.0, false, 5.0, 50.0);
    let s = parse_scenario(&src).unwrap();
    let a = simulate(&s).unwrap();
    let b = simulate(&s).unwrap();
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.write_csv(&mut ca).unwrap();
    b.write_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
}
