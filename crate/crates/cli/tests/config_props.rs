use mkdvlab::config::{ExperimentConfig, Kind, SnapshotFormat};
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = Kind> {
    prop_oneof![
        Just(Kind::Simulate),
        Just(Kind::Effective),
        Just(Kind::Compare),
        Just(Kind::Spectrum),
        Just(Kind::Verify),
        Just(Kind::Crossing),
    ]
}

proptest! {
    #[test]
    fn json_round_trip_is_lossless(
        kind in kind(),
        h in 0.01f64..1.0,
        a in prop::array::uniform2(-10.0f64..10.0),
        c in prop::array::uniform2(0.1f64..3.0),
        amp in -2.0f64..2.0,
        seed in any::<u64>(),
        n_exp in 4u32..14,
        binary in any::<bool>(),
        preset in prop::option::of(1usize..=4),
    ) {
        let mut cfg = ExperimentConfig::default_for(kind);
        cfg.h = Some(h);
        cfg.initial.a = a;
        cfg.initial.c = c;
        cfg.potential.amplitude = amp;
        cfg.potential.preset = preset.map(|i| format!("listex{i}"));
        cfg.seed = seed;
        cfg.grid.n_points = Some(1 << n_exp);
        cfg.grid.snapshot_format = if binary { SnapshotFormat::Binary } else { SnapshotFormat::Csv };
        let text = cfg.to_json();
        let back = ExperimentConfig::from_json(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_json(), text);
        prop_assert_eq!(mkdvlab::config_hash(&back), mkdvlab::config_hash(&cfg));
    }

    #[test]
    fn hash_tracks_every_field(seed in any::<u64>(), h in 0.01f64..1.0) {
        let mut cfg = ExperimentConfig::default_for(Kind::Effective);
        cfg.seed = seed;
        cfg.h = Some(h);
        let base = mkdvlab::config_hash(&cfg);
        let mut other = cfg.clone();
        other.seed = seed.wrapping_add(1);
        prop_assert_ne!(mkdvlab::config_hash(&other), base.clone());
        let mut other = cfg.clone();
        other.horizon *= 1.5;
        prop_assert_ne!(mkdvlab::config_hash(&other), base);
    }
}
