use rlgan::agent::Actor;
use rlgan::autoencoder::{AeConfig, AutoEncoder};
use rlgan::gan::{Critic, GanConfig, Generator};
use rlgan::geometry::{
    chamfer_normalized, corrupt_cloud, sample_shape, xyz, CorruptionSpec, ShapeCategory,
};
use rlgan::nn::Checkpoint;
use rlgan::pipeline::{CompletionMode, PathTaken, Pipeline};

#[test]
fn partial_scan_survives_disk_and_completes() {
    let dir = tempfile::tempdir().unwrap();
    let shape = sample_shape(ShapeCategory::Airplane, 300, 9).unwrap();
    let partial = corrupt_cloud(&shape, &CorruptionSpec::new(0.4, 3).unwrap()).unwrap();
    assert_eq!(partial.len(), 180);

    let path = dir.path().join("partial.xyz");
    xyz::write(&path, &partial).unwrap();
    let back = xyz::read(&path).unwrap();
    assert!(chamfer_normalized(&back, &partial).unwrap() < 1e-12);

    let ae_cfg = AeConfig {
        num_points: 64,
        ..AeConfig::default()
    };
    let ae = AutoEncoder::<f32>::new(&ae_cfg, 1).unwrap();
    let mut ck = Checkpoint::new();
    ae.save_to(&mut ck).unwrap();
    let ck_path = dir.path().join("ae.ckpt");
    ck.save(&ck_path).unwrap();
    let loaded = AutoEncoder::load_from(&ae_cfg, &Checkpoint::load(&ck_path).unwrap()).unwrap();
    assert_eq!(ae.encode(&back).unwrap(), loaded.encode(&back).unwrap());

    let gan = GanConfig::default();
    let pipeline = Pipeline {
        ae: loaded,
        generator: Generator::new(&gan, 2),
        critic: Critic::new(&gan, 3),
        actor: Actor::new(&[32], 4),
    };
    let ae_only = pipeline.complete(&back, CompletionMode::Ae).unwrap();
    assert_eq!(ae_only.output.len(), 64);
    assert_eq!(ae_only.path_taken, PathTaken::Ae);
    assert!(ae_only.seed.is_none());

    let hybrid = pipeline.complete(&back, CompletionMode::Hybrid).unwrap();
    assert_eq!(hybrid.output.len(), 64);
    assert!(hybrid.d_score_ae.is_some() && hybrid.d_score_gan.is_some());
}
