use levelsim::engine::init_uniform;
use levelsim::oracle::{gillespie_custom, multitype_transitions, DEFAULT_EVENT_CAP};
use levelsim::rng::{stream, ReplicateStreams, ORACLE_STREAM};
use levelsim::stats::{chi_square_two_sample, histogram};
use levelsim::variants::MultitypeSpec;

/// Cantor pairing, so joint counts share one histogram.
fn pair(x: u64, y: u64) -> u64 {
    (x + y) * (x + y + 1) / 2 + y
}

#[test]
fn joint_type_counts_match_the_multitype_oracle() {
    let spec = MultitypeSpec { birth: vec![vec![0.5, 0.5], vec![1.0, 0.2]], death_b: vec![0.2, -0.3] };
    let r = 1.0;
    let cfg = spec.config(r, vec![1.0, 0.0]).unwrap();
    let table = multitype_transitions(&spec, r);
    let reps = 10_000;
    let mut engine = Vec::new();
    let mut direct = Vec::new();
    for i in 0..reps {
        let mut s = init_uniform(3, &cfg, ReplicateStreams::new(40, i)).unwrap();
        s.advance(1.0, &cfg).unwrap();
        let n0 = s.particles().filter(|p| p.location.type_index() == Some(0)).count() as u64;
        engine.push(pair(n0, s.len() as u64 - n0));
        let n = gillespie_custom(&table, &[3, 0], 1.0, DEFAULT_EVENT_CAP, &mut stream(41, i, ORACLE_STREAM)).unwrap();
        direct.push(pair(n[0], n[1]));
    }
    let rep = chi_square_two_sample("multitype_joint", &histogram(&engine), &histogram(&direct)).unwrap();
    assert!(rep.pass, "{rep}");
}

#[test]
fn single_type_reduces_to_the_base_model() {
    let spec = MultitypeSpec { birth: vec![vec![1.0]], death_b: vec![0.5] };
    let multi = spec.config(1.0, vec![1.0]).unwrap();
    let base = levelsim::engine::EngineConfig::new(levelsim::engine::Model::scalar(1.0, 0.5, 1.0));
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..5000 {
        let mut s = init_uniform(5, &multi, ReplicateStreams::new(42, i)).unwrap();
        s.advance(1.0, &multi).unwrap();
        a.push(s.len() as u64);
        let mut s = init_uniform(5, &base, ReplicateStreams::new(43, i)).unwrap();
        s.advance(1.0, &base).unwrap();
        b.push(s.len() as u64);
    }
    let rep = chi_square_two_sample("single_type", &histogram(&a), &histogram(&b)).unwrap();
    assert!(rep.pass, "{rep}");
}
