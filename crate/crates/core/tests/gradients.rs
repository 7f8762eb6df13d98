use beatgan::nncore::fidelity::{sweep, Kernel};

#[test]
fn every_kernel_matches_central_differences() {
    for (i, kernel) in Kernel::ALL.into_iter().enumerate() {
        let report = sweep(kernel, 100, 0xD1FF + i as u64).unwrap_or_else(|e| panic!("{}: {e}", kernel.name()));
        assert_eq!(report.trials, 100);
        assert!(report.max_rel_error < kernel.tolerance(), "{report:?}");
        println!(
            "{:<26} max rel err {:.3e} ({} redrawn)",
            kernel.name(),
            report.max_rel_error,
            report.redrawn
        );
    }
}

#[test]
fn corrupted_dense_gradient_is_rejected() {
    use beatgan::nncore::{grad_check_weighted, Dense, Module, NnError, Tensor};
    let mut rng = beatgan::rng::seeded(77);
    let mut layer = Dense::new(3, 4, &mut rng);
    let x = Tensor::from_vec(&[2, 3], vec![0.4, -0.9, 0.3, 0.8, 0.5, -0.6]).unwrap();
    let r: Vec<f64> = (0..8).map(|i| 0.5 + i as f64 * 0.1).collect();
    let upstream = Tensor::from_vec(&[2, 4], r.clone()).unwrap();
    layer.backward(&x, &upstream).unwrap();
    let mut analytic = layer.flat_grads();
    analytic[5] *= 1.1;
    let template = layer.clone();
    let outputs = |v: &[f64]| {
        let mut m = template.clone();
        m.set_flat_params(v);
        m.forward(&x).unwrap().into_vec()
    };
    match grad_check_weighted(outputs, &r, &layer.flat_params(), &analytic, 1e-6) {
        Err(NnError::GradCheck { index, .. }) => assert_eq!(index, 5),
        other => panic!("corruption went unnoticed: {other:?}"),
    }
}
