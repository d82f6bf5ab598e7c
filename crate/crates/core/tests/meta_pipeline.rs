use amm_core::amm::{DistParams, DynModel, LossKind};
use amm_core::baselines::{ControllerConfig, ControllerKind, EpsilonMix};
use amm_core::harness::scenarios::city_a;
use amm_core::meta::{collect_experience, transition, Checkpoint, Provenance, TaskDataset};
use amm_core::nn::sgd_step;
use amm_core::sim::FlowSpec;

fn max_pressure_log(episodes: usize) -> TaskDataset {
    let ctl = ControllerConfig::new(ControllerKind::MaxPressure).build(0).unwrap();
    let mut mix = EpsilonMix::new(ctl, 0.2, 9);
    collect_experience(&city_a(), &mut mix, episodes).unwrap()
}

#[test]
fn one_episode_logs_every_intersection_every_interval() {
    let ds = max_pressure_log(1);
    // 3600 s / 20 s intervals * 4 intersections.
    assert_eq!(ds.len(), 720);
    assert_eq!(ds.city_id, "city_a");
    ds.validate().unwrap();
    for r in &ds.records {
        assert_eq!(r.s_t.lanes, 12);
        assert_eq!(r.s_t.grids, 12);
        assert_eq!(r.o_t.values.len(), 24);
    }
}

#[test]
fn consecutive_records_chain() {
    let ds = max_pressure_log(1);
    let n = 4;
    for w in ds.records.windows(n + 1) {
        let (a, b) = (&w[0], &w[n]);
        if b.t == a.t + 1 {
            assert_eq!(a.intersection, b.intersection);
            assert_eq!(a.s_next, b.s_t);
            assert_eq!(a.o_next, b.o_t);
        }
    }
}

#[test]
fn empty_demand_gives_empty_states() {
    let mut s = city_a();
    s.flows = FlowSpec::default();
    let mut ctl = ControllerConfig::new(ControllerKind::FixedTime).build(0).unwrap();
    let ds = collect_experience(&s, ctl.as_mut(), 1).unwrap();
    assert!(ds.records.iter().all(|r| r.s_t.total() == 0.0 && r.s_next.total() == 0.0));
}

#[test]
fn collection_is_deterministic() {
    assert_eq!(max_pressure_log(1).records, max_pressure_log(1).records);
}

#[test]
fn jsonl_round_trip_is_exact() {
    let ds = max_pressure_log(1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("city_a.jsonl");
    ds.save_jsonl(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), ds.len());
    assert!(text.lines().next().unwrap().contains("\"schema_id\""));
    let back = TaskDataset::load_jsonl(&path).unwrap();
    assert_eq!(back, ds);
}

#[test]
fn small_steps_lower_the_loss_on_a_frozen_batch() {
    let ds = max_pressure_log(1);
    let batch: Vec<_> = ds.records[..64].iter().map(transition).collect();
    let dp = DistParams::default();
    let mut g = DynModel::new(12, 12, &[16], 4).unwrap();
    let mut prev = f64::INFINITY;
    for _ in 0..20 {
        let (loss, grad) = g.loss_grad(g.params(), &batch, &dp, LossKind::PerLane).unwrap();
        assert!(loss < prev, "loss went up: {prev} -> {loss}");
        prev = loss;
        g = g.with_params(sgd_step(g.params(), &grad, 1e-4).unwrap()).unwrap();
    }
}

#[test]
fn checkpoint_round_trips_through_disk() {
    let ck = Checkpoint {
        repr: None,
        dynamics: DynModel::new(12, 12, &[8], 3).unwrap(),
        value_params: Default::default(),
        dist_params: Default::default(),
        policy_params: Default::default(),
        provenance: Provenance { source_cities: vec!["city_a".into()], meta_iters: 7, seed: 3 },
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("phi.json");
    ck.save(&path).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(doc.get("dyn").is_some());
    assert!(doc.get("repr").is_none());
}
