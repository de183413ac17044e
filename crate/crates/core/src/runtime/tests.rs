use super::*;
use crate::graph::tests::{pump_constants, PUMP};

fn pump_data() -> NamedArrays {
    let mut d = NamedArrays::new();
    d.insert(
        "x".into(),
        Array::vector(vec![5.0, 1.0, 5.0, 14.0, 3.0, 19.0, 1.0, 1.0, 4.0, 22.0]),
    );
    d
}

fn unit_inits() -> NamedArrays {
    let mut i = NamedArrays::new();
    i.insert("alpha".into(), Array::scalar(1.0));
    i.insert("beta".into(), Array::scalar(1.0));
    i
}

fn pump() -> Model {
    Model::from_source(PUMP, &pump_constants(), &pump_data(), &unit_inits(), 7).unwrap()
}

fn single(src: &str) -> Model {
    Model::from_source(
        src,
        &NamedArrays::new(),
        &NamedArrays::new(),
        &NamedArrays::new(),
        1,
    )
    .unwrap()
}

#[test]
fn pump_initializes_to_finite_state() {
    let mut m = pump();
    let all = m.all_nodes();
    let total = m.get_log_prob(&all);
    assert!(total.is_finite());
    assert_eq!(m.calculate(&all), total);
    assert_eq!(m.get("x").unwrap()[3], 14.0);
    let x4 = m.expand("x[4]").unwrap()[0];
    assert!(m.is_data(x4));
    assert!(!m.is_data(m.expand("theta[4]").unwrap()[0]));
    for (id, flag) in m.data_flags().iter().enumerate() {
        if *flag {
            assert!(m.definition().node(id).is_stochastic());
        }
    }
}

#[test]
fn initial_state_is_a_fixed_point() {
    let mut m = pump();
    let before = m.values().to_vec();
    let all = m.all_nodes();
    m.calculate(&all);
    assert_eq!(before, m.values());
}

#[test]
fn unobserved_scalar_is_simulated() {
    let m = single("x ~ dnorm(0, 1)");
    let x = m.get_scalar("x").unwrap();
    assert!(x.is_finite());
    assert!(m.get_log_prob(&[0]).is_finite());
}

#[test]
fn data_errors() {
    let mut bad = NamedArrays::new();
    bad.insert("x".into(), Array::vector(vec![1.0; 9]));
    let e = Model::from_source(PUMP, &pump_constants(), &bad, &unit_inits(), 1).unwrap_err();
    assert!(matches!(e, Error::ShapeMismatch { .. }), "{e}");

    let mut bad = NamedArrays::new();
    bad.insert("zeta".into(), Array::scalar(1.0));
    let e = Model::from_source(PUMP, &pump_constants(), &bad, &unit_inits(), 1).unwrap_err();
    assert!(matches!(e, Error::UnknownVariable(_)), "{e}");

    let mut bad = pump_data();
    bad.insert("lambda".into(), Array::vector(vec![1.0; 10]));
    assert!(Model::from_source(PUMP, &pump_constants(), &bad, &unit_inits(), 1).is_err());
}

#[test]
fn impossible_initial_state_names_the_node() {
    let mut inits = NamedArrays::new();
    inits.insert("s".into(), Array::scalar(-1.0));
    let e = Model::from_source(
        "s ~ dgamma(1, 1)\ny ~ dnorm(0, sd = s)",
        &NamedArrays::new(),
        &NamedArrays::new(),
        &inits,
        1,
    )
    .unwrap_err();
    assert_eq!(
        e.to_string(),
        Error::InvalidInitialState { node: "s".into() }.to_string()
    );

    let mut data = NamedArrays::new();
    data.insert("y".into(), Array::scalar(-2.0));
    let e = Model::from_source(
        "y ~ dexp(1)",
        &NamedArrays::new(),
        &data,
        &NamedArrays::new(),
        1,
    )
    .unwrap_err();
    assert!(e.to_string().contains('y'), "{e}");
}

#[test]
fn standard_normal_point_value() {
    let mut m = single("x ~ dnorm(0, 1)");
    m.set("x", &[0.0]).unwrap();
    let lp = m.calculate(&[0]);
    assert!((lp - -0.9189385332046727).abs() < 1e-12);
}

#[test]
fn calculate_diff_examples() {
    let mut m = single("x ~ dnorm(0, 1)");
    m.set("x", &[0.0]).unwrap();
    m.calculate(&[0]);
    assert_eq!(m.calculate_diff(&[0]), 0.0);
    m.set("x", &[1.0]).unwrap();
    assert!((m.calculate_diff(&[0]) - -0.5).abs() < 1e-15);
}

#[test]
fn deterministic_nodes_contribute_zero() {
    let mut m = pump();
    let det = m.classify(&[NodeFilter::Deterministic]);
    assert_eq!(m.calculate(&det), 0.0);
    assert_eq!(m.calculate_diff(&det), 0.0);
    assert_eq!(m.get_log_prob(&det), 0.0);
}

#[test]
fn dependency_calculation_matches_hand_computation() {
    let mut m = pump();
    let from = m.expand("theta[1:3]").unwrap();
    let deps = m.dependencies(&from, DependencyOptions::default()).unwrap();
    let got = m.calculate(&deps);
    let (alpha, beta) = (1.0, 1.0);
    let t = [94.3, 15.7, 62.9];
    let x = [5.0, 1.0, 5.0];
    let theta = m.get("theta[1:3]").unwrap();
    let mut want = 0.0;
    for i in 0..3 {
        let g = statrs::distribution::Gamma::new(alpha, beta).unwrap();
        let p = statrs::distribution::Poisson::new(theta[i] * t[i]).unwrap();
        use statrs::distribution::{Continuous, Discrete};
        want += g.ln_pdf(theta[i]) + p.ln_pmf(x[i] as u64);
    }
    assert!((got - want).abs() < 1e-10, "{got} vs {want}");
}

#[test]
fn stale_log_prob_until_recalculated() {
    let mut m = pump();
    let a = m.expand("alpha").unwrap();
    let before = m.get_log_prob(&a);
    m.set("alpha", &[3.0]).unwrap();
    assert_eq!(m.get_log_prob(&a), before);
    let after = m.calculate(&a);
    assert_eq!(m.get_log_prob(&a), after);
    assert!((after - -3.0).abs() < 1e-15);
}

#[test]
fn invalid_parameters_give_negative_infinity() {
    let mut m = pump();
    m.set("beta", &[-1.0]).unwrap();
    let theta = m.expand("theta[1]").unwrap();
    assert_eq!(m.calculate(&theta), f64::NEG_INFINITY);
}

#[test]
fn simulate_respects_data_flags() {
    let mut m = pump();
    let all = m.all_nodes();
    let x = m.get("x").unwrap();
    let lp = m.get_log_prob(&all);
    m.simulate(&all, false);
    assert_eq!(m.get("x").unwrap(), x);
    assert_eq!(m.get_log_prob(&all), lp);
    m.simulate(&all, true);
    assert_ne!(m.get("x").unwrap(), x);
    let theta = m.get("theta").unwrap();
    let t = [94.3, 15.7, 62.9, 126.0, 5.24, 31.4, 1.05, 1.05, 2.1, 10.5];
    let lambda = m.get("lambda").unwrap();
    for i in 0..10 {
        assert_eq!(lambda[i], theta[i] * t[i]);
    }
}

#[test]
fn simulate_deterministic_only_matches_calculate() {
    let mut a = pump();
    let mut b = a.clone();
    let det = a.classify(&[NodeFilter::Deterministic]);
    a.set("theta", &[0.5]).unwrap();
    b.set("theta", &[0.5]).unwrap();
    a.simulate(&det, false);
    b.calculate(&det);
    assert_eq!(a.values(), b.values());
}

#[test]
fn element_access() {
    let mut m = pump();
    m.set("theta[4]", &[2.5]).unwrap();
    assert_eq!(m.get("theta").unwrap()[3], 2.5);
    assert_eq!(m.get("theta[1:3]").unwrap().len(), 3);
    assert!(matches!(m.get("theta[11]"), Err(Error::OutOfBounds { .. })));
    assert!(m.set("theta[1:3]", &[1.0, 2.0]).is_err());

    let mut y = Model::from_source(
        "for (i in 1:2) { for (j in 1:3) { y[i, j] ~ dnorm(0, 1) } }",
        &NamedArrays::new(),
        &NamedArrays::new(),
        &NamedArrays::new(),
        3,
    )
    .unwrap();
    y.set("y[2, 3]", &[9.0]).unwrap();
    assert_eq!(y.get("y").unwrap()[5], 9.0);
    assert_eq!(y.get("y[2, ]").unwrap()[2], 9.0);
}

#[test]
fn seeds_are_reproducible() {
    let a = single("x ~ dnorm(0, 1)\nz ~ dgamma(2, 3)");
    let b = single("x ~ dnorm(0, 1)\nz ~ dgamma(2, 3)");
    assert_eq!(a.values(), b.values());
}

#[test]
fn model_values_schema_and_rows() {
    let m = pump();
    let mv = ModelValues::from_definition(m.definition(), 3, true);
    let names: Vec<&str> = mv.variables().iter().map(|v| v.name.as_str()).collect();
    for v in ["alpha", "beta", "theta", "lambda", "x", "logProb_theta"] {
        assert!(names.contains(&v), "{v}");
    }
    assert_eq!(mv.rows(), 3);
    assert!(mv.row(1).unwrap().iter().all(|&v| v == 0.0));
    assert!(matches!(mv.row(0), Err(Error::RowOutOfRange { .. })));
    assert!(matches!(mv.row(4), Err(Error::RowOutOfRange { .. })));

    let mut mv = ModelValues::with_variables(&[("a", vec![]), ("b", vec![2])], 0).unwrap();
    assert_eq!(mv.rows(), 0);
    mv.resize(1);
    mv.set("b", 1, &[1.0, 2.0]).unwrap();
    mv.resize(3);
    assert_eq!(mv.get("b", 1).unwrap(), &[1.0, 2.0]);
    mv.resize(1);
    assert_eq!(mv.get("b", 1).unwrap(), &[1.0, 2.0]);
    assert_eq!(mv.column_names(), vec!["a", "b[1]", "b[2]"]);
}

#[test]
fn copy_round_trip_is_bit_exact() {
    let mut m = pump();
    let def = m.definition().clone();
    let all = m.all_nodes();
    let mut mv = ModelValues::from_definition(&def, 2, true);
    copy(
        &def,
        CopySource::Model(&m),
        CopyTarget::Values(&mut mv, 2),
        &all,
        true,
    )
    .unwrap();
    let values = m.values().to_vec();
    let lps = m.log_probs().to_vec();
    m.simulate(&all, true);
    m.calculate(&all);
    copy(
        &def,
        CopySource::Values(&mv, 2),
        CopyTarget::Model(&mut m),
        &all,
        true,
    )
    .unwrap();
    assert_eq!(
        values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(
        lps.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        m.log_probs()
            .iter()
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    );
}

#[test]
fn copy_subset_and_errors() {
    let mut m = pump();
    let def = m.definition().clone();
    let mut mv = ModelValues::for_variables(&def, &["theta"], 1, false).unwrap();
    mv.set("theta", 1, &[0.25; 10]).unwrap();
    let alpha = m.get("alpha").unwrap();
    let t3 = m.expand("theta[3]").unwrap();
    copy(
        &def,
        CopySource::Values(&mv, 1),
        CopyTarget::Model(&mut m),
        &t3,
        false,
    )
    .unwrap();
    assert_eq!(m.get("theta[3]").unwrap(), vec![0.25]);
    assert_ne!(m.get("theta[2]").unwrap(), vec![0.25]);
    assert_eq!(m.get("alpha").unwrap(), alpha);

    let a = m.expand("alpha").unwrap();
    let e = copy(
        &def,
        CopySource::Model(&m),
        CopyTarget::Values(&mut mv, 1),
        &a,
        false,
    );
    assert!(matches!(e, Err(Error::SchemaMismatch(_))));
    let e = copy(
        &def,
        CopySource::Model(&m),
        CopyTarget::Values(&mut mv, 1),
        &t3,
        true,
    );
    assert!(matches!(e, Err(Error::SchemaMismatch(_))));
    let e = copy(
        &def,
        CopySource::Model(&m),
        CopyTarget::Values(&mut mv, 2),
        &t3,
        false,
    );
    assert!(matches!(e, Err(Error::RowOutOfRange { .. })));
}

#[test]
fn csv_round_trip() {
    let m = pump();
    let def = m.definition().clone();
    let all = m.all_nodes();
    let mut mv = ModelValues::for_variables(&def, &["alpha", "theta", "x"], 2, true).unwrap();
    copy(
        &def,
        CopySource::Model(&m),
        CopyTarget::Values(&mut mv, 1),
        &all[..0],
        false,
    )
    .unwrap();
    let keep: Vec<NodeId> = all
        .iter()
        .copied()
        .filter(|&n| {
            ["alpha", "theta", "x"].contains(&def.variables()[def.node(n).variable].name.as_str())
        })
        .collect();
    copy(
        &def,
        CopySource::Model(&m),
        CopyTarget::Values(&mut mv, 2),
        &keep,
        true,
    )
    .unwrap();
    mv.set("alpha", 1, &[f64::NAN]).unwrap();
    let mut buf = Vec::new();
    mv.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("alpha,theta[1],"));
    assert!(text.contains("logProb_theta[10]"));
    let back = ModelValues::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.column_names(), mv.column_names());
    assert!(back.get("alpha", 1).unwrap()[0].is_nan());
    assert_eq!(back.row(2).unwrap(), mv.row(2).unwrap());
    assert!(back.has_log_probs("theta"));
    assert_eq!(
        back.column("theta[2]").unwrap(),
        mv.column("theta[2]").unwrap()
    );
}
