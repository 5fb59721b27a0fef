mod common;

use common::closed_form_params;
use siamese_verify::model::{
    build_baseline_cnn, build_snn, BackboneConfig, CnnConfig, HeadMode, LayerKind, SnnConfig,
};

const VGG16: [(usize, usize); 5] = [(64, 2), (128, 2), (256, 3), (512, 3), (512, 3)];
const COMPACT: [(usize, usize); 5] = [(8, 1), (16, 1), (32, 1), (32, 1), (32, 1)];

#[test]
fn classifier_parameter_count_matches_closed_form() {
    for size in [64, 128, 256] {
        let g = build_baseline_cnn([size, size, 3], &CnnConfig::default()).unwrap();
        assert_eq!(g.param_count(), closed_form_params(size, &VGG16, 3, 128, 128 + 1), "size {size}");
    }
    let compact = CnnConfig {
        backbone: BackboneConfig::compact(),
        ..CnnConfig::transfer()
    };
    let g = build_baseline_cnn([64, 64, 3], &compact).unwrap();
    assert_eq!(g.param_count(), closed_form_params(64, &COMPACT, 3, 128, 129));
}

#[test]
fn siamese_parameter_count_matches_closed_form() {
    let scalar = build_snn([64, 64, 3], &SnnConfig::default()).unwrap();
    assert_eq!(scalar.param_count(), closed_form_params(64, &VGG16, 3, 128, 2));
    let weighted = SnnConfig {
        head: HeadMode::WeightedL1,
        ..SnnConfig::transfer()
    };
    let g = build_snn([128, 128, 3], &weighted).unwrap();
    assert_eq!(g.param_count(), closed_form_params(128, &VGG16, 3, 1024, 1024 + 1));
}

#[test]
fn siamese_graph_has_one_tower() {
    let g = build_snn([64, 64, 3], &SnnConfig::default()).unwrap();
    let convs = g.layers().filter(|l| matches!(l.kind, LayerKind::Conv { .. })).count();
    assert_eq!(convs, 13);
    let heads = g.layers().filter(|l| matches!(l.kind, LayerKind::L1Head { .. })).count();
    assert_eq!(heads, 1);
    assert_eq!(g.feature_width(), 128);
}
