use multistop::oracle::binomial_put;

const STEPS: usize = 400;

#[test]
fn put_increases_with_strike() {
    let mut last = 0.0;
    for k in 0..15 {
        let v = binomial_put(1.0, 0.7 + 0.05 * k as f64, 0.03, 0.25, 1.0, STEPS).unwrap();
        assert!(v >= last, "strike step {k}: {v} < {last}");
        last = v;
    }
}

#[test]
fn put_increases_with_volatility() {
    let mut last = 0.0;
    for k in 0..12 {
        let v = binomial_put(1.0, 1.0, 0.03, 0.05 + 0.05 * k as f64, 1.0, STEPS).unwrap();
        assert!(v >= last, "vol step {k}: {v} < {last}");
        last = v;
    }
}

#[test]
fn put_decreases_with_spot() {
    let mut last = f64::INFINITY;
    for k in 0..15 {
        let v = binomial_put(0.6 + 0.06 * k as f64, 1.0, 0.03, 0.25, 1.0, STEPS).unwrap();
        assert!(v <= last, "spot step {k}: {v} > {last}");
        last = v;
    }
}

#[test]
fn put_is_at_least_intrinsic() {
    for k in 0..10 {
        let s = 0.5 + 0.1 * k as f64;
        let v = binomial_put(s, 1.0, 0.1, 0.2, 1.0, STEPS).unwrap();
        assert!(v >= (1.0 - s).max(0.0) - 1e-15);
    }
}

#[test]
fn invalid_tree_inputs_are_rejected() {
    assert!(binomial_put(1.0, 1.0, 0.0, 0.2, 1.0, 0).is_err());
    assert!(binomial_put(-1.0, 1.0, 0.0, 0.2, 1.0, 10).is_err());
    assert!(binomial_put(1.0, 1.0, 0.0, 0.0, 1.0, 10).is_err());
}
