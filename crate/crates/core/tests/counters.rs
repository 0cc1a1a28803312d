use ndarray::Array1;
use optlab_core::problems::{make_logistic, synthetic_classification};
use optlab_core::shuffle::{
    run_prox_per_iteration, run_prox_rr, run_shuffled, OrderingKind, PermutationSchedule, StepsizeSchedule,
};
use optlab_core::{ProxTerm, RngStream};

#[test]
fn shuffle_counters_per_epoch() {
    let (n, epochs) = (25, 6);
    let f = make_logistic(&synthetic_classification(n, 4, false, &RngStream::new(5)), 0.1).unwrap();
    let psi = ProxTerm::l1(0.05).unwrap();
    let st = StepsizeSchedule::Constant { gamma: 0.05 };
    let x0 = Array1::zeros(4);
    let s = RngStream::new(6);
    for kind in [OrderingKind::Rr, OrderingKind::So, OrderingKind::Ig] {
        let plain = run_shuffled(&f, &mut PermutationSchedule::new(kind, n, &s), &st, epochs, &x0, None);
        let rr = run_prox_rr(
            &f,
            &psi,
            &mut PermutationSchedule::new(kind, n, &s),
            &st,
            epochs,
            &x0,
            None,
        );
        let per = run_prox_per_iteration(
            &f,
            &psi,
            &mut PermutationSchedule::new(kind, n, &s),
            &st,
            epochs,
            &x0,
            None,
        );
        for t in [&plain, &rr, &per] {
            assert_eq!(t.rows.len(), epochs + 1);
            for (k, row) in t.rows.iter().enumerate() {
                assert_eq!(row.grads, (n * k) as u64);
            }
        }
        for (k, (a, b)) in rr.rows.iter().zip(&per.rows).enumerate() {
            assert_eq!(a.proxes, k as u64);
            assert_eq!(b.proxes, (n * k) as u64);
        }
        assert!(plain.rows.iter().all(|r| r.proxes == 0));
    }
}
