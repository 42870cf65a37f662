// cargo run --release -p epinn-core --example quick_train -- [poisson1d|diffreact2d] [epochs] [seed] [epinn|epinn_v|de] [width]

use std::time::Instant;

use epinn_core::losses::{LossWeights, Variant};
use epinn_core::metrics::evaluate;
use epinn_core::model::NetworkConfig;
use epinn_core::problems::{generate_dataset, DatasetCounts, NoiseModel, ProblemKind};
use epinn_core::training::{train_deep_ensemble, train_epinn_observed, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let problem = ProblemKind::from_name(args.get(1).map(String::as_str).unwrap_or("poisson1d")).unwrap();
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mode = args.get(4).cloned().unwrap_or_else(|| "epinn".into());
    let width: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(64);
    let spec = problem.spec();
    let ds = generate_dataset(&spec, &NoiseModel::default_for(problem, seed), &DatasetCounts::default_for(problem)).unwrap();
    let (mut net, weights) = match problem {
        ProblemKind::Poisson1d => (NetworkConfig::default_1d(seed), LossWeights::table1()),
        ProblemKind::DiffReact2d => (NetworkConfig::default_2d(seed), LossWeights::table2()),
    };
    net.hidden_width = width;
    let mut cfg = TrainConfig::new(weights, seed);
    cfg.epochs = epochs;
    cfg.log_every = (epochs / 20).max(1);
    let t = Instant::now();
    if mode == "de" {
        let rep = train_deep_ensemble(&spec, &ds, &net, &cfg, 20).unwrap();
        let k = rep.ensemble.kappa();
        let m = evaluate(&rep.ensemble, &spec, &ds, k).unwrap();
        println!("{m:#?}");
    } else {
        if mode == "epinn_v" {
            cfg.weights.variant = Variant::EpinnV;
        }
        let out = train_epinn_observed(&spec, &ds, &net, &cfg, &mut |e| {
            println!(
                "{:>7} total {:>10.5} data {:>10.5} reg {:>9.5} res {:>9.6} k {:.4} sk {:.5}",
                e.epoch, e.total, e.data, e.regularizer.unwrap_or(0.0), e.residual, e.kappa_mean, e.kappa_sigma
            )
        })
        .map_err(|f| f.error)
        .unwrap();
        let k = out.model.kappa();
        let m = evaluate(&out.model, &spec, &ds, (k.kappa_mean, k.sigma())).unwrap();
        println!("{m:#?}");
    }
    println!("elapsed {:.1}s", t.elapsed().as_secs_f64());
}
