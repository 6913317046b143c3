//! Overfits the network on one blob scene in a 2-D embedding space and
//! prints the loss at the 0, 2, 4, ..., 64 step marks and every 100 steps after.

use std::time::Instant;

use discseg::clustering::{mean_shift_cluster, ClusterConfig};
use discseg::loss::{LossConfig, Norm};
use discseg::metrics::{symmetric_best_dice, InstanceSet};
use discseg::synthdata::{generate_blobs, BlobsConfig};
use discseg::toynet::{forward, network_input, train, AdamConfig, NetConfig, NetParams, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).map_or(1e-4, |s| s.parse().unwrap());
    let steps: usize = args.get(2).map_or(2000, |s| s.parse().unwrap());
    let hidden: usize = args.get(3).map_or(32, |s| s.parse().unwrap());
    let layers: usize = args.get(4).map_or(4, |s| s.parse().unwrap());
    let scene = generate_blobs(&BlobsConfig::default()).unwrap();
    println!("instances: {}", scene.num_instances());
    let net = NetConfig { hidden_channels: hidden, num_layers: layers, out_dims: 2, ..NetConfig::default() };
    let params = NetParams::init(&net).unwrap();
    let loss = LossConfig::default();
    let start = Instant::now();
    let out = train(
        params,
        &[scene.clone().into()],
        &loss,
        &TrainConfig { steps, adam: AdamConfig { lr, ..AdamConfig::default() }, seed: 0, augment: false },
    )
    .unwrap();
    for (i, b) in out.trace.iter().enumerate() {
        if i.is_power_of_two() || i == 0 || i % 100 == 0 {
            println!("step {i:5}: var {:.6} dist {:.6} reg {:.4} total {:.6}", b.l_var, b.l_dist, b.l_reg, b.total);
        }
    }
    let (emb, _) = forward(&out.params, &network_input(&scene.image)).unwrap();
    let final_loss = discseg::loss::discriminative_loss(&emb, &scene.instances, &loss).unwrap();
    println!("final: var+dist {:.2e}, {:.1}s", final_loss.l_var + final_loss.l_dist, start.elapsed().as_secs_f64());
    for bandwidth in [loss.delta_v, 2.0 * loss.delta_v] {
        let clusters =
            mean_shift_cluster(&emb, &scene.fg_mask(), &ClusterConfig::with_bandwidth(bandwidth), Norm::L2).unwrap();
        let sbd = symmetric_best_dice(
            &InstanceSet::from_labels(&clusters.labels),
            &InstanceSet::from_labels(&scene.instances),
        )
        .unwrap();
        println!("bandwidth {bandwidth}: clusters {}, SBD {sbd:.4}", clusters.num_clusters());
    }
}
