use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{Array, NamedArrays};
use crate::graph::tests::{pump_constants, PUMP};
use crate::graph::{structure_query_count, NodeFilter, NodeId};
use crate::runtime::{Model, ModelValues};

fn pump() -> Model {
    let mut data = NamedArrays::new();
    data.insert(
        "x".into(),
        Array::vector(vec![5.0, 1.0, 5.0, 14.0, 3.0, 19.0, 1.0, 1.0, 4.0, 22.0]),
    );
    let mut inits = NamedArrays::new();
    inits.insert("alpha".into(), Array::scalar(1.0));
    inits.insert("beta".into(), Array::scalar(1.0));
    Model::from_source(PUMP, &pump_constants(), &data, &inits, 11).unwrap()
}

fn model(src: &str, data: &[(&str, f64)], seed: u64) -> Model {
    let d: NamedArrays = data
        .iter()
        .map(|(k, v)| (k.to_string(), Array::scalar(*v)))
        .collect();
    Model::from_source(src, &NamedArrays::new(), &d, &NamedArrays::new(), seed).unwrap()
}

fn synced_state(m: &Model) -> ModelValues {
    let mut mv = ModelValues::from_definition(m.definition(), 1, true);
    let all = m.all_nodes();
    crate::runtime::copy(
        m.definition(),
        crate::runtime::CopySource::Model(m),
        crate::runtime::CopyTarget::Values(&mut mv, 1),
        &all,
        true,
    )
    .unwrap();
    mv
}

fn fixed(scale: f64) -> SamplerControl {
    SamplerControl {
        scale,
        adaptive: false,
        ..Default::default()
    }
}

fn id(m: &Model, spec: &str) -> NodeId {
    m.expand(spec).unwrap()[0]
}

#[test]
fn zero_scale_always_accepts() {
    let mut m = model("x ~ dnorm(0, 1)", &[], 1);
    let mut state = synced_state(&m);
    let mut s = RwSampler::new(&m, &state, 0, &fixed(0.0)).unwrap();
    for _ in 0..100 {
        assert!(s.run(&mut m, &mut state));
    }
    assert_eq!(s.stats().accepted, 100);
}

#[test]
fn rw_calculation_nodes_and_rejection_restores_state() {
    let mut m = pump();
    let mut state = synced_state(&m);
    let t4 = id(&m, "theta[4]");
    let mut s = RwSampler::new(&m, &state, t4, &fixed(50.0)).unwrap();
    assert_eq!(
        m.definition().node_names(s.calculation_nodes()),
        vec!["theta[4]", "lambda[4]", "x[4]"]
    );
    let mut rejected = 0;
    for _ in 0..200 {
        let values: Vec<u64> = m.values().iter().map(|v| v.to_bits()).collect();
        let lps: Vec<u64> = m.log_probs().iter().map(|v| v.to_bits()).collect();
        if !s.run(&mut m, &mut state) {
            rejected += 1;
            assert_eq!(
                values,
                m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            assert_eq!(
                lps,
                m.log_probs()
                    .iter()
                    .map(|v| v.to_bits())
                    .collect::<Vec<_>>()
            );
        }
        assert_eq!(state.row(1).unwrap(), synced_state(&m).row(1).unwrap());
    }
    assert!(rejected > 50);
}

#[test]
fn sampler_construction_errors() {
    let m = pump();
    let state = synced_state(&m);
    for spec in ["x[1]", "lambda[1]"] {
        let r = RwSampler::new(&m, &state, id(&m, spec), &SamplerControl::default());
        assert!(matches!(r, Err(crate::Error::InvalidSampler(_))), "{spec}");
    }
    assert!(BlockRwSampler::new(&m, &state, &[], &SamplerControl::default()).is_err());
    let bad_cov = SamplerControl {
        proposal_cov: Some(vec![1.0, 2.0, 2.0, 1.0]),
        ..Default::default()
    };
    let ab = [id(&m, "alpha"), id(&m, "beta")];
    assert!(BlockRwSampler::new(&m, &state, &ab, &bad_cov).is_err());
}

#[test]
fn one_dimensional_block_matches_scalar_sampler() {
    let src = "mu ~ dnorm(0, 1)\ny ~ dnorm(mu, 1)";
    let mut a = model(src, &[("y", 1.0)], 5);
    let mut b = model(src, &[("y", 1.0)], 5);
    let mut sa = synced_state(&a);
    let mut sb = synced_state(&b);
    let mu = id(&a, "mu");
    let mut rw = RwSampler::new(&a, &sa, mu, &fixed(0.8)).unwrap();
    let mut block = BlockRwSampler::new(&b, &sb, &[mu], &fixed(0.8)).unwrap();
    for _ in 0..2000 {
        assert_eq!(rw.run(&mut a, &mut sa), block.run(&mut b, &mut sb));
        assert_eq!(a.values()[0].to_bits(), b.values()[0].to_bits());
    }
}

#[test]
fn adaptation_moves_scale_towards_target() {
    let mut m = model("x ~ dnorm(0, 1)", &[], 3);
    let mut state = synced_state(&m);
    let control = SamplerControl {
        scale: 100.0,
        ..Default::default()
    };
    let mut s = RwSampler::new(&m, &state, 0, &control).unwrap();
    for _ in 0..20_000 {
        s.run(&mut m, &mut state);
    }
    assert_eq!(s.stats().history.len(), 100);
    assert!(s.scale() > 0.5 && s.scale() < 6.0, "{}", s.scale());
}

#[test]
fn standard_normal_moments_and_acceptance() {
    let m = model("x ~ dnorm(0, 1)", &[], 4);
    let cfg = McmcConfiguration::new(&m);
    let mut mcmc = Mcmc::new(m, &cfg).unwrap();
    let out = mcmc.run(101_000, 1_000, 1).unwrap();
    let xs = out.column("x").unwrap();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() < 0.03, "{mean}");
    assert!((sd - 1.0).abs() < 0.03, "{sd}");
    let rate = mcmc.sampler_stats()[0].acceptance_rate();
    assert!((rate - 0.44).abs() < 0.05, "{rate}");
}

#[test]
fn default_configuration_for_pump() {
    let m = pump();
    let mut cfg = McmcConfiguration::new(&m);
    assert_eq!(cfg.samplers().len(), 12);
    let listed = cfg.list_samplers();
    assert_eq!(listed[0], "RW sampler: alpha");
    assert_eq!(listed[1], "RW sampler: beta");
    assert_eq!(listed[2], "RW sampler: theta[1]");
    assert_eq!(cfg.monitors(), ["alpha", "beta"]);
    cfg.add_sampler(
        SamplerKind::BlockRandomWalk,
        &["alpha", "beta"],
        SamplerControl::default(),
    )
    .unwrap();
    assert_eq!(cfg.samplers().len(), 13);
    assert_eq!(cfg.list_samplers()[12], "RW_block sampler: alpha, beta");
    assert!(cfg
        .add_sampler(
            SamplerKind::RandomWalk,
            &["x[1]"],
            SamplerControl::default()
        )
        .is_err());
    assert!(cfg
        .add_sampler(
            SamplerKind::RandomWalk,
            &["nope"],
            SamplerControl::default()
        )
        .is_err());
    assert!(cfg
        .add_sampler(
            SamplerKind::RandomWalk,
            &["theta[1:2]"],
            SamplerControl::default()
        )
        .is_err());
    cfg.remove_sampler(12).unwrap();
    assert_eq!(cfg.remove_samplers_for("theta").unwrap(), 10);
    assert_eq!(cfg.samplers().len(), 2);
    assert!(cfg.remove_sampler(5).is_err());
    assert!(matches!(
        cfg.set_monitors(&["zeta"]),
        Err(crate::Error::UnknownVariable(_))
    ));
}

#[test]
fn run_stage_performs_no_structure_queries() {
    let m = pump();
    let mut cfg = McmcConfiguration::new(&m);
    cfg.add_sampler(
        SamplerKind::BlockRandomWalk,
        &["alpha", "beta"],
        SamplerControl::default(),
    )
    .unwrap();
    cfg.set_monitors(&["alpha", "beta", "theta"]).unwrap();
    let mut mcmc = Mcmc::new(m, &cfg).unwrap();
    let before = structure_query_count();
    let out = mcmc.run(500, 100, 2).unwrap();
    assert_eq!(structure_query_count(), before);
    assert_eq!(out.rows(), 200);

    let m = pump();
    let theta = m.expand("theta[1:3]").unwrap();
    let is = ImportanceSampler::new(&m, &theta).unwrap();
    let mut m2 = m.clone();
    let (mv, lp) = draw_prior_samples(&mut m2, &theta, 10).unwrap();
    let before = structure_query_count();
    is.run(&mut m2, &mv, &lp).unwrap();
    assert_eq!(structure_query_count(), before);
}

#[test]
fn state_stays_synchronized_across_iterations() {
    let m = pump();
    let mut cfg = McmcConfiguration::new(&m);
    cfg.add_sampler(
        SamplerKind::BlockRandomWalk,
        &["alpha", "beta"],
        SamplerControl::default(),
    )
    .unwrap();
    let mut mcmc = Mcmc::new(m, &cfg).unwrap();
    for _ in 0..50 {
        mcmc.run(1, 0, 1).unwrap();
        let fresh = synced_state(mcmc.model());
        assert_eq!(mcmc.state().row(1).unwrap(), fresh.row(1).unwrap());
        let mut check = mcmc.model().clone();
        let all = check.all_nodes();
        let stored = check.get_log_prob(&all);
        assert_eq!(check.calculate(&all), stored);
    }
}

#[test]
fn run_bounds() {
    let m = pump();
    let cfg = McmcConfiguration::new(&m);
    let mut mcmc = Mcmc::new(m, &cfg).unwrap();
    let out = mcmc.run(0, 0, 1).unwrap();
    assert_eq!(out.rows(), 0);
    assert_eq!(out.column_names(), vec!["alpha", "beta"]);
    assert!(mcmc.run(10, 0, 0).is_err());
    assert!(mcmc.run(10, 11, 1).is_err());
    assert_eq!(mcmc.run(10, 3, 3).unwrap().rows(), 2);
}

#[test]
fn same_seed_same_chain() {
    let run = || {
        let m = pump();
        let cfg = McmcConfiguration::new(&m);
        let mut mcmc = Mcmc::new(m, &cfg).unwrap();
        mcmc.run(300, 0, 1).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn configuration_must_match_model() {
    let a = pump();
    let b = pump();
    let cfg = McmcConfiguration::new(&a);
    assert!(Mcmc::new(b, &cfg).is_err());
}

#[test]
fn importance_single_row_identity() {
    let mut m = model("x ~ dnorm(0, 1)", &[], 1);
    let def = m.definition().clone();
    let mut mv = ModelValues::for_variables(&def, &["x"], 1, false).unwrap();
    mv.set("x", 1, &[0.3]).unwrap();
    let lp_model = -0.5 * 0.09 - 0.5 * (2.0 * std::f64::consts::PI).ln();
    let c = 0.7;
    let is = ImportanceSampler::new(&m, &[0]).unwrap();
    let est = is.run(&mut m, &mv, &[lp_model - c]).unwrap();
    assert!((est.estimate - c.exp()).abs() < 1e-12);
    assert_eq!(est.mcse, 0.0);
}

#[test]
fn importance_degenerate_and_errors() {
    let mut m = model("x ~ dexp(1)", &[], 1);
    let def = m.definition().clone();
    let mut mv = ModelValues::for_variables(&def, &["x"], 3, false).unwrap();
    for k in 1..=3 {
        mv.set("x", k, &[-1.0]).unwrap();
    }
    let is = ImportanceSampler::new(&m, &[0]).unwrap();
    assert_eq!(is.run(&mut m, &mv, &[0.0; 3]).unwrap().estimate, 0.0);
    assert!(is.run(&mut m, &mv, &[0.0; 2]).is_err());
    let empty = ModelValues::for_variables(&def, &["x"], 0, false).unwrap();
    assert!(is.run(&mut m, &empty, &[]).is_err());
    assert!(ImportanceSampler::new(&m, &[]).is_err());
    assert!(draw_prior_samples(&mut m, &[], 5).is_err());
}

#[test]
fn prior_draws_have_prior_log_probs() {
    let mut m = pump();
    let theta = m.expand("theta[1:3]").unwrap();
    let (mv, lp) = draw_prior_samples(&mut m, &theta, 5).unwrap();
    assert_eq!(mv.rows(), 5);
    for k in 1..=5 {
        let th = &mv.get("theta", k).unwrap()[..3];
        let want: f64 = th.iter().map(|t| -t).sum();
        assert!((lp[k - 1] - want).abs() < 1e-12);
    }
}

#[test]
fn mcem_without_latent_nodes_is_direct_maximization() {
    // y ~ N(mu, 1) with two observations, y = 1 and 3: the MLE is 2
    let src = "mu ~ dnorm(0, 0.0001)\ny1 ~ dnorm(mu, 1)\ny2 ~ dnorm(mu, 1)";
    let m = model(src, &[("y1", 1.0), ("y2", 3.0)], 2);
    let mut mcem = Mcem::new(m, None, None, McemControl::default()).unwrap();
    let res = mcem.run().unwrap();
    assert!(res.converged);
    assert!((res.get("mu").unwrap() - 2.0).abs() < 1e-3);
    assert_eq!(res.trace[0].samples, 1);
}

#[test]
fn mcem_iteration_cap_reports_non_convergence() {
    let m = pump();
    let control = McemControl {
        max_iter: 1,
        ..Default::default()
    };
    let mut mcem = Mcem::new(m, None, None, control).unwrap();
    let res = mcem.run().unwrap();
    assert!(!res.converged);
    assert_eq!(res.iterations, 1);
    assert_eq!(res.names, vec!["alpha", "beta"]);
    assert!(res.estimates.iter().all(|v| v.is_finite() && *v > 0.0));
}

#[test]
fn mcem_schedule() {
    let c = McemControl::default();
    let sizes: Vec<usize> = (1..=10).map(|t| c.sample_size(t)).collect();
    assert_eq!(
        sizes,
        vec![1000, 2000, 3000, 4000, 6000, 8000, 12000, 18000, 25000, 25000]
    );
}

#[test]
fn mcem_rejects_bad_parameters() {
    let m = pump();
    let x1 = id(&m, "x[1]");
    assert!(Mcem::new(m.clone(), None, Some(&[x1]), McemControl::default()).is_err());
    let t1 = id(&m, "theta[1]");
    assert!(Mcem::new(m.clone(), Some(&[t1]), Some(&[t1]), McemControl::default()).is_err());
    assert!(Mcem::new(m, None, Some(&[]), McemControl::default()).is_err());
}

#[test]
fn latent_classification_for_pump() {
    let m = pump();
    let latent = m.classify(&[NodeFilter::Latent]);
    assert_eq!(latent.len(), 10);
}

#[test]
fn decide_edge_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        assert!(decide(0.0, &mut rng));
        assert!(decide(f64::INFINITY, &mut rng));
        assert!(!decide(f64::NEG_INFINITY, &mut rng));
        assert!(!decide(f64::NAN, &mut rng));
    }
}

#[test]
fn decide_acceptance_frequency() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 100_000;
    let acc = (0..n).filter(|_| decide(0.5f64.ln(), &mut rng)).count();
    // Bernoulli(0.5): sd of the rate is 0.0016
    assert!((acc as f64 / n as f64 - 0.5).abs() < 0.01);
}
