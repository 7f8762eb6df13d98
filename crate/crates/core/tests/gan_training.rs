use beatgan::data::surrogate;
use beatgan::gan::{train_gan, GanConfig, GanModel, GanTrainer};
use beatgan::nncore::Tensor;
use beatgan::rng::seeded;

#[test]
fn discriminator_memorizes_a_single_beat() {
    let beat = surrogate::generate([0, 0, 0, 1, 0], 5).beats()[0].clone();
    let real = Tensor::from_vec(&[1, 187], beat.samples().to_vec()).unwrap();
    let cfg = GanConfig {
        seed: 2,
        ..GanConfig::default()
    };
    let mut trainer = GanTrainer::new(GanModel::init(3, cfg).unwrap(), seeded(2));
    let mut last = f64::INFINITY;
    for _ in 0..500 {
        last = trainer.train_step(&real).unwrap().loss_d;
        if last < 0.1 {
            break;
        }
    }
    assert!(last < 0.1, "L_D still {last} after 500 steps");
}

#[test]
fn short_run_moves_generator_loss() {
    let beats = surrogate::generate([0, 0, 0, 48, 0], 9).beats().to_vec();
    let cfg = GanConfig {
        hidden: 16,
        batch_size: 16,
        epochs: 4,
        seed: 3,
        ..GanConfig::default()
    };
    let (model, trace) = train_gan(&beats, 3, cfg, &mut |_| {}).unwrap();
    assert_eq!(trace.len(), 4);
    assert_eq!(model.class, 3);
    for e in &trace.epochs {
        assert!(e.d_real > 0.0 && e.d_real < 1.0);
        assert!(e.d_fake > 0.0 && e.d_fake < 1.0);
    }
    assert_ne!(trace.epochs[0].loss_g, trace.epochs[3].loss_g);
}
