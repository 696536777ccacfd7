//! Scratch cost probe (deleted before release).

use std::time::Instant;

use occurec::extract::{evaluate_hierarchical, OccupancyField, ReconstructOptions, ScalarField};
use occurec::occnet::{NetworkConfig, NetworkParams};
use occurec::seed::{stream_rng, Stream};
use occurec::shapegen::{make_training_sample, random_shape, SamplingConfig};
use occurec::train::{train, TrainConfig, TrainOptions, TrainState};

fn samples(count: usize, input_size: usize) -> Vec<occurec::shapegen::TrainingSample<f64>> {
    let cfg = SamplingConfig { input_size, ..SamplingConfig::default() };
    (0..count)
        .map(|i| {
            let mut rng = stream_rng(99, Stream::ShapeSpec, i as u64);
            let spec = random_shape(&mut rng, 4).unwrap();
            let cfg = SamplingConfig { seed: i as u64, ..cfg.clone() };
            make_training_sample(&spec, &cfg, &mut rng).unwrap()
        })
        .collect()
}

fn time_steps(corpus: &[occurec::shapegen::TrainingSample<f64>], net: NetworkConfig, label: &str) {
    let mut state = TrainState::fresh(NetworkParams::init(net, 5));
    let config = TrainConfig { batch_size: 8, epochs: 3, ..TrainConfig::default() };
    let options = TrainOptions::default();
    let mut log = Vec::new();
    let t0 = Instant::now();
    train(corpus, &[], &mut state, &config, &options, &mut log).unwrap();
    let total = t0.elapsed();
    println!(
        "{label}: 3 steps (incl. calibration) in {:.2?}; per-step wall {:?}; losses {:?}",
        total,
        log.iter().map(|e| e.wall_time).collect::<Vec<_>>(),
        log.iter().map(|e| e.loss).collect::<Vec<_>>()
    );
}

#[test]
#[ignore]
fn probe_costs() {
    let t0 = Instant::now();
    let corpus300 = samples(8, 300);
    println!("gen 8 samples @300: {:.2?} ({:.3?}/shape)", t0.elapsed(), t0.elapsed() / 8);

    let net = NetworkConfig::compact();
    time_steps(&corpus300, net.clone(), "batch_step @300 (8x512)");

    let t0 = Instant::now();
    let corpus1000 = samples(8, 1000);
    println!("gen 8 samples @1000: {:.2?}", t0.elapsed());
    let mut net1000 = net.clone();
    net1000.input_size = 1000;
    net1000.blocks.last_mut().unwrap().points = 1000;
    time_steps(&corpus1000, net1000, "batch_step @1000 (8x512)");

    // Field evaluation: 10^4 queries against one 300-point cloud.
    let params = NetworkParams::<f64>::init(net, 5);
    let cloud = corpus300[0].cloud.points().to_vec();
    let field = OccupancyField::new(&params, &cloud, 4096).unwrap();
    let bbox = corpus300[0].cloud.aabb().padded(0.1);
    let mut rng = stream_rng(1, Stream::MetricSamples, 0);
    let pts: Vec<_> = (0..10_000).map(|_| bbox.sample_point(&mut rng)).collect();
    let t0 = Instant::now();
    let vals = field.eval_batch(&pts);
    println!(
        "field eval 10k queries @300: {:.2?} (mean {:.3})",
        t0.elapsed(),
        vals.iter().sum::<f64>() / 1e4
    );

    let t0 = Instant::now();
    let grid = evaluate_hierarchical(&field, &bbox, &[32, 64], 1, 0.5).unwrap();
    println!(
        "hierarchical [32,64] @300: {:.2?} ({} evals vs {} dense)",
        t0.elapsed(),
        grid.evaluation_count,
        65usize.pow(3)
    );

    let opts = ReconstructOptions { levels: vec![32, 64], ..ReconstructOptions::default() };
    let t0 = Instant::now();
    let mesh = occurec::extract::reconstruct(&params, &cloud, &opts);
    println!("reconstruct [32,64] @300: {:.2?} ok={}", t0.elapsed(), mesh.is_ok());
}
