use beatgan::classifier::{predict, train_classifier, CnnConfig};
use beatgan::data::surrogate;

#[test]
fn memorizes_a_small_set() {
    let ds = surrogate::generate([16, 12, 12, 12, 12], 4);
    assert_eq!(ds.len(), 64);
    let cfg = CnnConfig {
        batch_size: 8,
        epochs: 30,
        seed: 1,
        ..CnnConfig::default()
    };
    let (model, trace) = train_classifier(&ds, cfg, &mut |_, _| {}).unwrap();
    assert_eq!(trace.len(), 30);
    assert!(
        (1.2..=2.0).contains(&trace.first_batch_loss),
        "first loss {}",
        trace.first_batch_loss
    );
    let pred = predict(&model, &ds).unwrap();
    let hits = pred.iter().zip(ds.beats()).filter(|(p, b)| **p == b.label()).count();
    assert!(
        hits as f64 / 64.0 >= 0.95,
        "training accuracy {hits}/64, losses {:?}",
        trace.epoch_losses
    );
}

#[test]
fn default_protocol_runs_ten_epochs() {
    let ds = surrogate::generate([40, 30, 30, 20, 30], 8);
    let (_, trace) = train_classifier(&ds, CnnConfig::default(), &mut |_, _| {}).unwrap();
    assert_eq!(trace.len(), 10);
    assert!(trace.epoch_losses.iter().all(|l| l.is_finite()));
    assert!(trace.epoch_losses[9] < trace.epoch_losses[0]);
}
