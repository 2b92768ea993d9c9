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

use fluidcc::analysis::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DELAYS: [f64; 7] = [0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0];

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

#[test]
fn bbr2_spectrum_matches_closed_form_on_grid() {
    for n in 1..=32usize {
        for d in DELAYS {
            let spec = eigenvalues_dense(&jacobian_bbr2(n, d).unwrap()).unwrap();
            let k = 4.0 * n as f64 + 1.0;
            let mut expected = vec![-1.0, -k / (5.0 * n as f64 * d)];
            expected.extend(std::iter::repeat_n(-1.0 / k, n - 1));
            let mut got: Vec<f64> = spec.iter().map(|e| e.value.re).collect();
            expected.sort_by(f64::total_cmp);
            got.sort_by(f64::total_cmp);
            for (g, e) in got.iter().zip(&expected) {
                assert!(close(*g, *e), "n={n} d={d}: {got:?} vs {expected:?}");
            }
            assert!(spec
                .iter()
                .all(|e| e.value.im.abs() < 1e-9 && e.residual < 1e-9));
        }
    }
}

#[test]
fn bbr1_spectra_on_grid() {
    for d in DELAYS {
        let spec = eigenvalues_dense(&jacobian_bbr1(d).unwrap()).unwrap();
        let mut got: Vec<f64> = spec.iter().map(|e| e.value.re).collect();
        got.sort_by(f64::total_cmp);
        let mut expected = [-1.0, -1.0 / (2.0 * d)];
        expected.sort_by(f64::total_cmp);
        assert!(
            close(got[0], expected[0]) && close(got[1], expected[1]),
            "d={d}: {got:?}"
        );
    }
    for n in 1..=32usize {
        let spec = eigenvalues_dense(&jacobian_bbr1_shallow(n).unwrap()).unwrap();
        let k = 4.0 * n as f64 + 1.0;
        let slow = spec.iter().filter(|e| close(e.value.re, -1.0 / k)).count();
        let fast = spec.iter().filter(|e| close(e.value.re, -1.0)).count();
        assert_eq!((slow, fast), (n - 1, 1), "n={n}");
    }
}

#[test]
fn printed_shallow_jacobian_matches_finite_differences() {
    let (c, d) = (100.0, 1.0);
    for n in [1usize, 3, 8] {
        let model = ReducedModel::homogeneous(BbrVersion::V1, n, c, d)
            .unwrap()
            .with_buffer(0.1 * c);
        let f = |x: &[f64]| {
            model
                .rhs(&ReducedState {
                    x_btl: x.to_vec(),
                    q: 0.1 * c,
                })
                .x_btl
        };
        let at = vec![equilibrium_bbr1_shallow(n, c).unwrap(); n];
        let num = numeric_jacobian(f, &at, 1e-6);
        let exact = jacobian_bbr1_shallow(n).unwrap();
        for (a, b) in num.data.iter().zip(&exact.data) {
            assert!((a - b).abs() < 1e-6, "n={n}: {a} vs {b}");
        }
    }
}

#[test]
fn shallow_model_converges_given_enough_time() {
    // the slowest mode decays like exp(-t/(4N+1)), so 60 units are too
    // short for N = 10 but 600 are plenty
    let c = 100.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [2usize, 5, 10] {
        let model = ReducedModel::homogeneous(BbrVersion::V1, n, c, 1.0)
            .unwrap()
            .with_buffer(10.0);
        let start = ReducedState {
            x_btl: (0..n).map(|_| rng.gen_range(0.1 * c..=c)).collect(),
            q: 0.0,
        };
        let r = convergence_check(&model, &start, 600.0, 1e-3, 1.0).unwrap();
        let target = vec![equilibrium_bbr1_shallow(n, c).unwrap(); n];
        let err = *r.rate_error(&target).last().unwrap();
        assert!(err < 1e-3, "n={n}: {err}");
    }
}

#[test]
fn shallow_decay_rate_matches_slow_eigenvalue() {
    let (n, c) = (5usize, 100.0);
    let model = ReducedModel::homogeneous(BbrVersion::V1, n, c, 1.0)
        .unwrap()
        .with_buffer(10.0);
    let x = equilibrium_bbr1_shallow(n, c).unwrap();
    // a zero-sum perturbation excites only the slow modes
    let mut start = vec![x; n];
    start[0] += 0.01 * x;
    start[1] -= 0.01 * x;
    let r = convergence_check(
        &model,
        &ReducedState {
            x_btl: start,
            q: 0.0,
        },
        40.0,
        1e-3,
        1.0,
    )
    .unwrap();
    let gap = |k: usize| r.states[k].x_btl[0] - r.states[k].x_btl[1];
    let rate = (gap(40) / gap(20)).ln() / 20.0;
    assert!((rate + 1.0 / 21.0).abs() < 1e-3, "{rate}");
}

#[test]
fn analyze_json_examples() {
    let r = analyze(AnalysisKind::Bbr1Shallow, 10, 100.0, 0.01).unwrap();
    assert!((r.x_btl[0] - 12.195_121_951_219_512).abs() < 1e-9);
    assert!(r.stable);
    let r = analyze(AnalysisKind::Bbr1Deep, 4, 100.0, 1.0).unwrap();
    assert!(close(r.lambda_max, -0.5));
    let r = analyze(AnalysisKind::Bbr2, 1, 8333.0, 0.01).unwrap();
    assert_eq!(r.q, 0.0);
    assert!(close(r.lambda_max, -1.0));
}

#[test]
fn heterogeneous_bbr2_has_an_equilibrium() {
    let model = ReducedModel::new(BbrVersion::V2, 100.0, vec![0.5, 0.7, 1.0]).unwrap();
    let start = ReducedState {
        x_btl: vec![30.0; 3],
        q: 0.0,
    };
    let (s, res) = find_equilibrium(&model, &start, 1e-10, 200_000).unwrap();
    assert!(res < 1e-10);
    assert!((model.arrival(&s) - 100.0).abs() < 1e-6 || s.q == 0.0);
}
