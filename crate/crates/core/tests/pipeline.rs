use bgcmeta_core::bio_optics::ForwardModel;
use bgcmeta_core::fixture::LibraryMixture;
use bgcmeta_core::meta::{initial_params, meta_pretrain, TrainConfig};
use bgcmeta_core::synth::{generate_dataset, SynthConfig, SyntheticDataset};

#[test]
fn library_to_pretrained_model() {
    let lib = LibraryMixture::standard().generate(80, 3);
    let fwd = ForwardModel::bundled();
    let g = generate_dataset(&lib, &fwd, &SynthConfig { k: 400, seed: 5, ..SynthConfig::default() }).unwrap();
    assert_eq!(g.dataset.len(), 400);

    // CSV round trip keeps every record usable.
    let mut buf = Vec::new();
    g.dataset.write_csv(&mut buf).unwrap();
    let back = SyntheticDataset::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), 400);
    for (a, b) in back.records.iter().zip(&g.dataset.records) {
        let rel = a.rrs.values().iter().zip(b.rrs.values()).map(|(x, y)| (x - y).abs() / y.abs()).fold(0.0, f64::max);
        assert!(rel < 1e-12);
    }

    let cfg = TrainConfig { epochs: 20, tasks: 10, ..TrainConfig::default() };
    let base = initial_params(&back, 0).unwrap();
    let out = meta_pretrain(&back, &base, &cfg, None).unwrap();
    assert_eq!(out.log.len(), cfg.epochs);
    assert!(out.final_meta_loss < out.log[0].meta_loss);
}
