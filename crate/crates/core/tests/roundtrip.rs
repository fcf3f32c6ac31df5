use multistop::oracle::random_finite_instance;
use multistop::problem::make_put_problem;
use multistop::shallownet::{Activation, ShallowNet};
use multistop::solver::{solve_with, TabularBackend};
use multistop::{draw_training_set, solve, Error, GbmMarket, Mode, NetConfig, StateLaw, SurvivalVector, TrainingSet, ValueStack};
use proptest::prelude::*;

proptest! {
    #[test]
    fn network_bytes_round_trip(dim in 1usize..6, width in 1usize..10, seed in 0u64..1000, tanh in any::<bool>()) {
        let act = if tanh { Activation::Tanh } else { Activation::Sigmoid };
        let net = ShallowNet::random(dim, width, act, seed);
        let mut bytes = Vec::new();
        net.write_to(&mut bytes).unwrap();
        let back = ShallowNet::read_from(bytes.as_slice()).unwrap();
        prop_assert_eq!(back.params(), net.params());
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        prop_assert_eq!(again, bytes);
    }
}

#[test]
fn training_set_round_trips() {
    let market = GbmMarket::uniform(3, 0.05, 0.2, 1.0, 3, 1.0);
    let spec = make_put_problem(&[1.0; 3], &market).unwrap();
    let data = draw_training_set(&spec, 50, &StateLaw::UniformBox { lo: 0.5, hi: 1.5 }, 9).unwrap();
    let mut bytes = Vec::new();
    data.write_to(&mut bytes).unwrap();
    let back = TrainingSet::read_from(bytes.as_slice()).unwrap();
    assert_eq!(back, data);
    assert!(back.matches(&spec));
}

#[test]
fn truncated_training_set_is_a_format_error() {
    let market = GbmMarket::uniform(2, 0.05, 0.2, 1.0, 2, 1.0);
    let spec = make_put_problem(&[1.0; 2], &market).unwrap();
    let data = draw_training_set(&spec, 10, &StateLaw::UniformBox { lo: 0.5, hi: 1.5 }, 9).unwrap();
    let mut bytes = Vec::new();
    data.write_to(&mut bytes).unwrap();
    bytes.truncate(bytes.len() / 2);
    assert!(matches!(TrainingSet::read_from(bytes.as_slice()), Err(Error::Format(_)) | Err(Error::Io(_))));
}

#[test]
fn network_stack_round_trips() {
    let market = GbmMarket::uniform(2, 0.05, 0.2, 1.0, 3, 1.0);
    let spec = make_put_problem(&[1.0, 1.0], &market).unwrap();
    let data = draw_training_set(&spec, 300, &StateLaw::Band { lo: 0.6, hi: 1.4, spread: 0.2 }, 4).unwrap();
    let cfg = NetConfig { width: Some(5), ..NetConfig::default() };
    let stack = solve(&spec, &data, Mode::Partial, &cfg).unwrap();
    let mut bytes = Vec::new();
    stack.write_to(&mut bytes).unwrap();
    let back = ValueStack::read_from(bytes.as_slice(), spec.clone()).unwrap();
    assert_eq!(back.mode(), Mode::Partial);
    let all = SurvivalVector::all_alive(2);
    for x in [[0.7, 1.3], [1.0, 1.0], [1.2, 0.9]] {
        assert_eq!(back.value(0, &x, all).to_bits(), stack.value(0, &x, all).to_bits());
    }
    let mut again = Vec::new();
    back.write_to(&mut again).unwrap();
    assert_eq!(again, bytes);

    let other = make_put_problem(&[1.0; 3], &GbmMarket::uniform(3, 0.05, 0.2, 1.0, 3, 1.0)).unwrap();
    assert!(ValueStack::read_from(bytes.as_slice(), other).is_err());
}

#[test]
fn table_stack_round_trips() {
    let inst = random_finite_instance(5, 2, 3).unwrap();
    let mut backend = TabularBackend::new(&inst.spec, &inst.x0, 10_000).unwrap();
    let stack = solve_with(&inst.spec, Mode::Exhaustive, &mut backend).unwrap();
    let mut bytes = Vec::new();
    stack.write_to(&mut bytes).unwrap();
    let back = ValueStack::read_from(bytes.as_slice(), inst.spec.clone()).unwrap();
    let all = SurvivalVector::all_alive(2);
    assert_eq!(back.value(0, &inst.x0, all), stack.value(0, &inst.x0, all));
}
