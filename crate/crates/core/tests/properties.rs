mod common;

use common::*;
use multitask_diffusion::config::{bundled, ConfigFile, PerNode};
use multitask_diffusion::network::{
    build_uniform_a, build_uniform_c, build_uniform_p, random_geometric_network, validate, GeometricParams,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn uniform_matrices_are_valid(seed in any::<u64>(), n in 2usize..12, q in 1usize..4) {
        let mut rng = seeded(seed);
        let net = random_network(&mut rng, n, 2, q.min(n));
        let (a, c, p) = (build_uniform_a(&net), build_uniform_c(&net), build_uniform_p(&net));
        prop_assert!(validate(&net, &a, &c, &p).is_ok());
        for k in 0..n {
            prop_assert!((a.column(k).sum() - 1.0).abs() < 1e-12);
            prop_assert!((c.row(k).sum() - 1.0).abs() < 1e-12);
            for l in 0..n {
                if a[(l, k)] != 0.0 || c[(l, k)] != 0.0 {
                    prop_assert_eq!(net.cluster_of(l), net.cluster_of(k));
                    prop_assert!(net.is_neighbor(l, k));
                }
                if p[(k, l)] != 0.0 {
                    prop_assert!(net.cluster_of(l) != net.cluster_of(k));
                }
            }
            let row = p.row(k).sum();
            prop_assert!(row.abs() < 1e-12 || (row - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn geometric_networks_have_connected_clusters(seed in 0u64..200, q in 1usize..5) {
        let net = random_geometric_network(&GeometricParams {
            n_nodes: 30,
            origin: [0.0, 0.0],
            width: 10.0,
            height: 10.0,
            radius: 3.0,
            n_clusters: q,
            filter_len: 2,
            seed,
        }).unwrap();
        prop_assert_eq!(net.n_clusters(), q);
        let ok = validate(&net, &build_uniform_a(&net), &build_uniform_c(&net), &build_uniform_p(&net));
        prop_assert!(ok.is_ok());
        let pos = net.positions().unwrap();
        for (k, l) in net.edges() {
            let d = ((pos[k][0] - pos[l][0]).powi(2) + (pos[k][1] - pos[l][1]).powi(2)).sqrt();
            prop_assert!(d <= 3.0);
        }
    }

    #[test]
    fn config_round_trips(seed in any::<u64>(), runs in 1usize..1000, mu in 0.001f64..1.0, tau in 0.0f64..10.0, sx in 0.1f64..2.0) {
        let mut cfg = bundled::model_validation().unwrap();
        cfg.experiment.seed = seed;
        cfg.experiment.n_runs = runs;
        cfg.algorithm.hyperparams = vec![[mu, tau]];
        cfg.model.linear.as_mut().unwrap().sigma2_x = PerNode::Uniform(sx);
        let again = ConfigFile::parse(&cfg.to_toml()).unwrap();
        prop_assert_eq!(again, cfg);
    }
}

#[test]
fn bundled_geometric_configs_build() {
    for cfg in [bundled::localization().unwrap(), bundled::localization_desk().unwrap()] {
        let exp = cfg.to_experiment().unwrap();
        let targets = cfg.model.localization.as_ref().unwrap().targets.len();
        assert_eq!(exp.network.n_clusters(), targets);
    }
}
