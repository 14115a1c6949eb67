//! Values frozen from an independent numpy evaluation of the same networks,
//! plus cross-checks between the exact and sampling oracles.

mod common;

use certbound::bounds::{
    crown_certify, fastlin_certify, intercept_branch, optimal_intercepts, IntermediateBounds, InterceptBranch,
    PerturbationSpec,
};
use certbound::oracles::{grid_oracle, pattern_oracle, pgd_attack, PgdConfig};
use certbound::tightness::{compute_d, compute_r, tightness_report};
use certbound::{DenseLayer, Network, Tensor};
use common::*;

fn net_242() -> Network {
    let w1 = Tensor::from_rows(&[vec![0.61, -0.35], vec![-0.48, 0.72], vec![0.15, 0.9], vec![-0.83, -0.27]]).unwrap();
    let w2 = Tensor::from_rows(&[vec![0.7, -0.4, 0.55, -0.9], vec![-0.3, 0.8, -0.65, 0.45]]).unwrap();
    Network::new(vec![
        DenseLayer::new(w1, v(&[0.05, -0.1, 0.02, 0.12])).unwrap(),
        DenseLayer::new(w2, v(&[0.03, -0.02])).unwrap(),
    ])
    .unwrap()
}

#[test]
fn fastlin_on_fixed_242_net() {
    let net = net_242();
    let x = v(&[0.2, -0.1]);
    let spec = PerturbationSpec::linf(0.1).unwrap();
    let c = v(&[1.0, -1.0]);
    let cert = fastlin_certify(&net, &x, &spec, std::slice::from_ref(&c)).unwrap();
    let l1 = &cert.bounds.layers[0];
    assert!(l1.lower.max_abs_diff(&v(&[0.111, -0.388, -0.145, -0.129])) < 1e-15);
    assert!(l1.upper.max_abs_diff(&v(&[0.303, -0.148, 0.065, 0.091])) < 1e-15);
    assert_eq!(cert.bounds.unstable(0), vec![2, 3]);
    let relax = cert.relaxation.as_ref().unwrap();
    let t = &relax.targets[0];
    assert!(t.input_coef.max_abs_diff(&v(&[1.1291938311688312, 0.13505616883116886])) < 1e-14);
    assert!((cert.margins[0] - 0.054292857142857115).abs() < 1e-14);

    // Intercept choices follow the sign of cᵀW_2 = [1, −1.2, 1.2, −1.35].
    let ds = optimal_intercepts(relax, t);
    let coef = [1.0, -1.2, 1.2, -1.35];
    for j in [2usize, 3] {
        match intercept_branch(coef[j]) {
            InterceptBranch::Zero => assert_eq!(ds[0].data()[j], 0.0),
            InterceptBranch::Upper => assert!(ds[0].data()[j] > 0.0),
        }
    }
}

#[test]
fn d_and_r_on_fixed_242_net() {
    let net = net_242();
    let x = v(&[0.2, -0.1]);
    let spec = PerturbationSpec::linf(0.1).unwrap();
    let c = v(&[1.0, -1.0]);
    let (d, p_o, p_c, delta0) = compute_d(&net, &x, &spec, &c).unwrap();
    assert_eq!(delta0.data(), &[-0.1, -0.1]);
    assert!((p_o - 0.10814999999999997).abs() < 1e-14);
    assert!((p_c - 0.054292857142857115).abs() < 1e-14);
    assert!((d - 0.05385714285714285).abs() < 1e-14);
    let (r, res) = compute_r(&net, &x, &spec, &c).unwrap();
    assert!((r - 0.0725).abs() < 1e-14);
    assert_eq!(res.len(), 2);
    assert!((res[0].residual - 0.145).abs() < 1e-14);
    assert_eq!(res[0].branch, InterceptBranch::Zero);
    assert!(res[1].residual < 1e-14);
    assert_eq!(res[1].branch, InterceptBranch::Upper);

    // The grid optimum of the numpy run lands on δ0* here.
    let exact = pattern_oracle(&net, &x, &spec, &c).unwrap();
    assert!((exact.value - 0.10814999999999997).abs() < 1e-14);
}

#[test]
fn random_242_pattern_oracle_against_dense_sampling() {
    let mut r = rng(42);
    for _ in 0..5 {
        let net = random_net(&mut r, &[2, 4, 2]);
        let x = v(&uniform_vec(&mut r, 2, 1.0));
        let spec = PerturbationSpec::linf(0.1).unwrap();
        let c = v(&[1.0, -1.0]);
        let exact = pattern_oracle(&net, &x, &spec, &c).unwrap();
        let fl = fastlin_certify(&net, &x, &spec, std::slice::from_ref(&c)).unwrap().margins[0];
        assert!(fl <= exact.value + 1e-12);
        let mut sampled = f64::INFINITY;
        for _ in 0..100_000 {
            let z = add(&x, &random_feasible(&mut r, &spec, 2));
            sampled = sampled.min(net.objective_value(&z, &c).unwrap());
        }
        assert!(exact.value <= sampled + 1e-12);
        let (grid, _) = grid_oracle(&net, &x, &spec, &c, 301).unwrap();
        assert!(exact.value <= grid + 1e-12);
        // Dense sampling gets close to the exact value on a 2-D box.
        assert!(sampled - exact.value < 0.05);
    }
}

#[test]
fn random_2442_crown_modes_below_exact() {
    let mut r = rng(7);
    for _ in 0..20 {
        let net = random_net(&mut r, &[2, 4, 4, 2]);
        let x = v(&uniform_vec(&mut r, 2, 1.0));
        let spec = PerturbationSpec::linf(0.1).unwrap();
        let c = v(&[1.0, -1.0]);
        let exact = pattern_oracle(&net, &x, &spec, &c).unwrap().value;
        for mode in [IntermediateBounds::Crown, IntermediateBounds::Ibp] {
            let p = crown_certify(&net, &x, &spec, std::slice::from_ref(&c), mode).unwrap().margins[0];
            assert!(p <= exact + 1e-12, "{mode:?}: {p} > {exact}");
        }
        let pgd = pgd_attack(&net, &x, &spec, &c, &PgdConfig::default()).unwrap().margin;
        assert!(exact <= pgd + 1e-12);
    }
}

#[test]
fn random_242_d_matches_separate_recomputation() {
    let mut r = rng(99);
    for _ in 0..50 {
        let net = random_net(&mut r, &[2, 4, 2]);
        let x = v(&uniform_vec(&mut r, 2, 1.0));
        let spec = PerturbationSpec::linf(0.1).unwrap();
        let c = v(&[1.0, -1.0]);
        let rep = tightness_report(&net, &x, &spec, &c).unwrap();
        let p_c = fastlin_certify(&net, &x, &spec, std::slice::from_ref(&c)).unwrap().margins[0];
        let p_o = net.objective_value(&x.add(&rep.delta0).unwrap(), &c).unwrap();
        assert_eq!(rep.d, p_o - p_c);
        assert!(rep.d >= -1e-12);
    }
}

/// A 1-5-1 network on which the Fast-Lin bound rises between ε = 0.14 and
/// ε = 0.16 (checked against a separate numpy evaluation and dense sampling
/// of the exact minimum, which stays near −0.1895 throughout).
#[test]
fn fastlin_bound_is_not_monotone_in_the_radius() {
    let w1 = Tensor::from_rows(&[
        vec![0.19429696901338112],
        vec![0.42207232908972125],
        vec![0.10936159729264139],
        vec![-0.2147616933089247],
        vec![-0.7136563305552843],
    ])
    .unwrap();
    let b1 = v(&[0.220532228377482, -0.1824764379931283, 0.2814976713827251, 0.2464659804270759, -0.47448227509379515]);
    let w2 = Tensor::from_rows(&[vec![
        0.15561223495659426,
        -0.8986763174579924,
        0.7978253629718854,
        0.9173836627173149,
        -0.6483327591793593,
    ]])
    .unwrap();
    let net = Network::new(vec![
        DenseLayer::new(w1, b1).unwrap(),
        DenseLayer::new(w2, v(&[-0.3483834287840262])).unwrap(),
    ])
    .unwrap();
    let x = v(&[-0.55505214521743]);
    let c = v(&[-1.0]);
    let at = |eps: f64| {
        let spec = PerturbationSpec::linf(eps).unwrap();
        fastlin_certify(&net, &x, &spec, std::slice::from_ref(&c)).unwrap().margins[0]
    };
    let (p14, p16) = (at(0.14), at(0.16));
    assert!((p14 - -0.19039689648516667).abs() < 1e-14);
    assert!((p16 - -0.18985133437466056).abs() < 1e-14);
    assert!(p16 > p14);
}
