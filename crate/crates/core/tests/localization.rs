mod common;

use multitask_diffusion::config::bundled;
use multitask_diffusion::data::{DataModel, StreamKey};
use multitask_diffusion::harness::{monte_carlo, Variant};

#[test]
fn localization_runs_are_reproducible() {
    let mut cfg = bundled::localization_desk().unwrap().to_experiment().unwrap();
    cfg.n_runs = 4;
    cfg.n_iters = 200;
    cfg.workers = Some(3);
    let a = monte_carlo(&cfg).unwrap();
    cfg.workers = Some(1);
    let b = monte_carlo(&cfg).unwrap();
    assert_eq!(a.curves, b.curves);
    assert!(a.curves.iter().all(|c| c.theory.is_none()));
    assert_eq!(a.curves.len(), 3);
    assert_eq!(a.curves[2].variant, Variant::Noncooperative);
}

#[test]
fn localization_residual_is_centred() {
    let cfg = bundled::localization().unwrap().to_experiment().unwrap();
    let DataModel::Localization(spec) = &cfg.model else { panic!("expected localization") };
    let key = StreamKey::new(3, 0);
    for k in [0, 40, 119] {
        let w = spec.optimum(k).to_vec();
        let mut rng = key.node_rng(k);
        let n = 20000;
        let mut mean = 0.0;
        for _ in 0..n {
            let s = cfg.model.sample(k, &mut rng);
            mean += s.d - (s.x[0] * w[0] + s.x[1] * w[1]);
        }
        mean /= n as f64;
        // residual standard deviation is at most sqrt(0.3^2 + (0.01 r)^2)
        let r = spec.distance(k);
        let sd = (0.09 + (0.01 * r).powi(2)).sqrt();
        assert!(mean.abs() < 4.0 * sd / (n as f64).sqrt(), "node {k}: mean residual {mean}");
    }
}
