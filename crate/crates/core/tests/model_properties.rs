use amm_core::amm::{argmax_first, block_sums, dist, value, DistParams, DynModel, LossKind, Transition, ValueParams};
use amm_core::nn::{grad_check, Activation, Net};
use amm_core::sim::{Phase, StateMatrix};
use proptest::prelude::*;

fn state(lanes: usize, grids: usize) -> impl Strategy<Value = StateMatrix> {
    prop::collection::vec(0u8..5, lanes * grids)
        .prop_map(move |v| StateMatrix::from_flat(lanes, grids, v.into_iter().map(f64::from).collect()).unwrap())
}

fn pair() -> impl Strategy<Value = (StateMatrix, StateMatrix, usize)> {
    (1usize..6, 1usize..4, prop::sample::select(vec![1usize, 2, 4])).prop_flat_map(|(lanes, blocks, n)| {
        let grids = blocks * n;
        (state(lanes, grids), state(lanes, grids), Just(n))
    })
}

fn dp(s: &StateMatrix, n: usize, beta: f64) -> DistParams {
    DistParams { beta, state_grids: s.grids, pass_grids: n }
}

fn vp(s: &StateMatrix, n: usize) -> ValueParams {
    ValueParams { horizon: 0, gamma1: 0.9, gamma2: 0.8, state_grids: s.grids, pass_grids: n }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dist_is_symmetric_and_nonnegative((a, b, n) in pair(), beta in 0.0f64..1.0) {
        let p = dp(&a, n, beta);
        let ab = dist(&a, &b, &p).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, dist(&b, &a, &p).unwrap());
        prop_assert_eq!(dist(&a, &a, &p).unwrap(), 0.0);
    }

    #[test]
    fn value_is_nonpositive_and_drops_with_a_vehicle((a, _b, n) in pair(), lane in any::<prop::sample::Index>(), grid in any::<prop::sample::Index>()) {
        let p = vp(&a, n);
        let v = value(&[a.clone()], &p).unwrap();
        prop_assert!(v <= 0.0);
        let mut more = a.clone();
        let (l, g) = (lane.index(a.lanes), grid.index(a.grids));
        more.set(l, g, a.get(l, g) + 1.0);
        prop_assert!(value(&[more], &p).unwrap() < v);
    }

    #[test]
    fn moving_a_vehicle_within_a_block_changes_nothing((a, b, n) in pair(), lane in any::<prop::sample::Index>(), col in any::<prop::sample::Index>(), other_lane in any::<prop::sample::Index>(), shift in any::<prop::sample::Index>()) {
        let (l, g) = (lane.index(a.lanes), col.index(a.grids));
        prop_assume!(a.get(l, g) > 0.0);
        let block = g / n;
        let (l2, g2) = (other_lane.index(a.lanes), block * n + shift.index(n));
        let mut moved = a.clone();
        moved.set(l, g, a.get(l, g) - 1.0);
        moved.set(l2, g2, moved.get(l2, g2) + 1.0);
        let p = dp(&a, n, 0.7);
        prop_assert_eq!(dist(&a, &b, &p).unwrap(), dist(&moved, &b, &p).unwrap());
        prop_assert_eq!(value(&[a.clone()], &vp(&a, n)).unwrap(), value(&[moved], &vp(&a, n)).unwrap());
    }

    #[test]
    fn argmax_survives_positive_scaling(states in prop::collection::vec(state(3, 4), 1..9), c in 0.01f64..100.0) {
        let p = ValueParams { horizon: 0, gamma1: 0.9, gamma2: 0.5, state_grids: 4, pass_grids: 2 };
        let scores: Vec<f64> = states.iter().map(|s| value(&[s.clone()], &p).unwrap()).collect();
        let scaled: Vec<f64> = states.iter().map(|s| value(&[s.scaled(c)], &p).unwrap()).collect();
        // Ties may break differently after rounding; compare the winners' scores.
        let (i, j) = (argmax_first(&scores).unwrap(), argmax_first(&scaled).unwrap());
        prop_assert!((scores[i] - scores[j]).abs() <= 1e-12 * scores[i].abs().max(1.0));
    }

    #[test]
    fn block_sums_preserve_the_total((a, _b, n) in pair()) {
        let sums = block_sums(&a.values, a.grids, n);
        prop_assert_eq!(sums.len(), a.grids / n);
        prop_assert!((sums.iter().sum::<f64>() - a.total()).abs() < 1e-12);
    }
}

fn net_strategy() -> impl Strategy<Value = (Vec<usize>, u64, Vec<f64>, usize)> {
    (prop::collection::vec(1usize..6, 2..5), any::<u64>(), 1usize..4).prop_flat_map(|(sizes, seed, rows)| {
        let inputs = sizes[0] * rows;
        (Just(sizes), Just(seed), prop::collection::vec(-2.0f64..2.0, inputs), Just(rows))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradients_match_finite_differences((sizes, seed, x, rows) in net_strategy()) {
        let net = Net::new(&sizes, Activation::Softplus, seed).unwrap();
        let out = *sizes.last().unwrap();
        let targets: Vec<f64> = (0..rows * out).map(|k| (k % 3) as f64).collect();
        let report = grad_check(&net, &x, amm_core::nn::squared_error(&targets, rows), 1e-5).unwrap();
        prop_assert!(report.max_rel_error < 1e-4, "{:?}", report);
    }

    #[test]
    fn gradient_is_linear_in_the_loss((sizes, seed, x, _rows) in net_strategy(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let net = Net::new(&sizes, Activation::Identity, seed).unwrap();
        let (_, g1) = net.grad(&x, |o, g| { g.copy_from_slice(o); o.iter().map(|v| v * v / 2.0).sum() }).unwrap();
        let (_, g2) = net.grad(&x, |o, g| { g.fill(1.0); o.iter().sum() }).unwrap();
        let (_, g12) = net.grad(&x, |o, g| {
            for (gv, ov) in g.iter_mut().zip(o) { *gv = a * ov + b; }
            0.0
        }).unwrap();
        for k in 0..g12.len() {
            let want = a * g1.0[k] + b * g2.0[k];
            prop_assert!((g12.0[k] - want).abs() <= 1e-10 * want.abs().max(1.0));
        }
    }

    #[test]
    fn forward_is_pure((sizes, seed, x, _rows) in net_strategy()) {
        let net = Net::new(&sizes, Activation::Softplus, seed).unwrap();
        let before = net.params().clone();
        let y1 = net.forward_batch_with(net.params(), &x).unwrap();
        let y2 = net.forward_batch_with(net.params(), &x).unwrap();
        prop_assert_eq!(y1.clone(), y2);
        prop_assert_eq!(&before, net.params());
        prop_assert!(y1.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn dynamics_loss_gradient_matches_finite_differences() {
    for (kind, seed) in [(LossKind::Aggregate, 1u64), (LossKind::PerLane, 2)] {
        let g = DynModel::new(3, 4, &[5], seed).unwrap();
        let p = DistParams { beta: 0.8, state_grids: 4, pass_grids: 2 };
        let s: Vec<StateMatrix> = (0..3)
            .map(|k| StateMatrix::from_flat(3, 4, (0..12).map(|i| ((i * 7 + k) % 4) as f64).collect()).unwrap())
            .collect();
        let batch: Vec<Transition<'_>> = (0..3)
            .map(|k| Transition { state: &s[k], action: Phase::from_index(k * 3), next: &s[(k + 1) % 3] })
            .collect();
        let theta = g.params().clone();
        let (_, grad) = g.loss_grad(&theta, &batch, &p, kind).unwrap();
        let h = 1e-6;
        for i in (0..theta.len()).step_by(7) {
            let mut up = theta.clone();
            up.0[i] += h;
            let mut down = theta.clone();
            down.0[i] -= h;
            let fd = (g.mean_dist_with(&up, &batch, &p, kind).unwrap() - g.mean_dist_with(&down, &batch, &p, kind).unwrap()) / (2.0 * h);
            let rel = (fd - grad.0[i]).abs() / fd.abs().max(grad.0[i].abs()).max(1e-6);
            assert!(rel < 1e-4, "{kind:?} param {i}: fd {fd} vs {}", grad.0[i]);
        }
    }
}

#[test]
fn shape_mismatches_are_errors() {
    let a = StateMatrix::zeros(2, 4);
    let b = StateMatrix::zeros(3, 4);
    let p = DistParams { beta: 0.5, state_grids: 4, pass_grids: 2 };
    assert!(dist(&a, &b, &p).is_err());
    let v = ValueParams { horizon: 1, gamma1: 0.9, gamma2: 0.5, state_grids: 4, pass_grids: 2 };
    assert!(value(&[a.clone()], &v).is_err());
    assert!(value(&[a.clone(), a], &v).is_ok());
}
