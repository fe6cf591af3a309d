//! Cross-module workflows through the public API: synthesis, event files,
//! configuration, training, weight files and replay.

use std::path::Path;

use proptest::prelude::*;
use spikeflow::events::{
    generate_events, read_events, write_events, CameraModel, EventStream, PlanarMotion, Texture,
};
use spikeflow::network::{Network, NetworkConfig, TrainSchedule};

/// Five-layer network on a 24x24 input, small enough to train in a test.
const SMALL: &str = r#"
[global]
width = 24
height = 24
presentation_ms = 60

[layer.ssconv]
kind = "ssconv"
r = 5
f = 2
alpha = 0.25
spike_input = "impulse"

[layer.merge]
kind = "merge"
v_th = 0.001
spike_input = "impulse"

[layer.msconv]
kind = "msconv"
r = 5
s = 2
f = 2
m = 4
tau_min_ms = 1
tau_max_ms = 10
alpha = 0.05
spike_input = "impulse"

[layer.pooling]
kind = "pooling"
r = 8
s = 8
f = 2
v_th = 0.001
spike_input = "impulse"

[layer.dense]
kind = "dense"
f = 2
alpha = 0.25
spike_input = "impulse"
"#;

fn small_config() -> NetworkConfig {
    NetworkConfig::parse(SMALL, Path::new("small.toml")).expect("valid config")
}

fn board(wx: f64, wy: f64, ms: u64) -> EventStream {
    let camera = CameraModel::default();
    generate_events(
        &Texture::Checkerboard { period: 8.0 },
        &PlanarMotion::from_ventral_flow(wx, wy),
        &camera,
        ms * 1000,
        24,
        24,
    )
    .expect("synthetic stream")
}

fn dataset() -> Vec<EventStream> {
    vec![board(1.0, 0.0, 60), board(0.0, -1.0, 60)]
}

fn train_all(config: NetworkConfig, seed: u64) -> Network {
    let mut net = Network::build(config).expect("network");
    for i in 0..net.layers().len() {
        if net.layer(i).config().plastic {
            net.train_layer(i, &TrainSchedule::new(dataset(), 3, seed + i as u64))
                .expect("training");
        }
    }
    net
}

#[test]
fn bundled_preset_builds_and_replays_silence() {
    let config = NetworkConfig::from_file(Path::new(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../configs/checkerboard.toml"
    )))
    .expect("bundled config");
    let mut net = Network::build(config).expect("network");
    let rec = net
        .infer(&EventStream::empty(64, 64, 20_000).unwrap())
        .expect("inference");
    assert!(rec.layers.iter().all(|l| l.spike_count() == 0));
}

#[test]
fn saved_weights_reproduce_inference() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.bin");
    let mut trained = train_all(small_config(), 5);
    trained.save_weights(&path).unwrap();

    let mut fresh = Network::build(small_config()).unwrap();
    fresh.load_weights(&path).unwrap();
    assert_eq!(fresh.weights().to_bytes(), trained.weights().to_bytes());

    let probe = board(-1.0, 0.0, 40);
    assert_eq!(fresh.infer(&probe).unwrap(), trained.infer(&probe).unwrap());
}

#[test]
fn worker_count_does_not_change_training() {
    let weights = |workers: usize| {
        let mut c = small_config();
        c.workers = workers;
        train_all(c, 2).weights().to_bytes()
    };
    let one = weights(1);
    assert_eq!(one, weights(3));
    assert_eq!(one, weights(0));
}

#[test]
fn training_moves_weights_only_in_plastic_layers() {
    let untouched = Network::build(small_config()).unwrap().weights();
    let trained = train_all(small_config(), 0).weights();
    let net = Network::build(small_config()).unwrap();
    for (i, (before, after)) in untouched.layers.iter().zip(&trained.layers).enumerate() {
        if !net.layer(i).config().plastic {
            assert_eq!(before, after, "layer {i} is not plastic");
        }
    }
    assert_ne!(untouched.to_bytes(), trained.to_bytes());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn synthetic_streams_survive_both_file_formats(wx in -3.0..3.0f64, wy in -3.0..3.0f64, ms in 5u64..40) {
        let stream = board(wx, wy, ms);
        let dir = tempfile::tempdir().unwrap();
        let round_trip = |name: &str| {
            let path = dir.path().join(name);
            write_events(&stream, &path).unwrap();
            read_events(&path).unwrap()
        };
        prop_assert_eq!(&round_trip("e.csv"), &stream);
        // The binary layout has no duration field; it is recovered as the last timestamp.
        let bin = round_trip("e.bin");
        prop_assert_eq!(bin.events(), stream.events());
        prop_assert_eq!((bin.width(), bin.height()), (stream.width(), stream.height()));
        prop_assert_eq!(bin.duration_us(), stream.events().last().map_or(0, |e| e.t));
    }

    #[test]
    fn inference_is_a_pure_function_of_weights_and_input(wx in -2.0..2.0f64, wy in -2.0..2.0f64) {
        let mut net = Network::build(small_config()).unwrap();
        let probe = board(wx, wy, 30);
        let first = net.infer(&probe).unwrap();
        let weights = net.weights().to_bytes();
        prop_assert_eq!(net.infer(&probe).unwrap(), first);
        prop_assert_eq!(net.weights().to_bytes(), weights);
    }
}
