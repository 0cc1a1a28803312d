use optlab_bench::logistic;

#[test]
fn logistic_fixture_is_deterministic() {
    let (a, b) = (logistic(30, 4, 9), logistic(30, 4, 9));
    assert_eq!((a.n(), a.dim()), (30, 4));
    let x = ndarray::Array1::from(vec![0.1, -0.2, 0.3, 0.0]);
    assert_eq!(a.value(&x), b.value(&x));
    assert!(a.strong_convexity() >= 0.1);
}
