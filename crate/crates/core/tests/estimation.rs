use graphmix::latent::resolve_label_swap;
use graphmix::model::DELTA;
use graphmix::moments::estimate_with_known_pi;
use graphmix::weighted::{fit_present_edge_em, PresentEdgeOptions};
use graphmix::{
    adjusted_rand_index, eval::mean_sd, fit_moments, fit_triplet_em, fit_weighted, sample_binary_graph,
    sample_weighted_graph, BinaryAffiliationParams, BinaryGraph, Error, FamilyKind, GroupProportions, LatentOptions,
    MomentOptions, RngSeed, SparsityKind, SparsityModel, TripletEmOptions, WeightFamily, WeightedAffiliationParams,
    WeightedOptions,
};

fn binary(alpha: f64, beta: f64, n: usize, seed: u64) -> (BinaryGraph, graphmix::NodePartition) {
    let p = BinaryAffiliationParams::new(GroupProportions::uniform(2), alpha, beta).unwrap();
    sample_binary_graph(&p, n, RngSeed(seed)).unwrap()
}

#[test]
fn moments_recover_model1() {
    let (g, z) = binary(0.3, 0.03, 500, 21);
    let fit = fit_moments(&g, 2, &MomentOptions { seed: RngSeed(1), ..Default::default() }).unwrap();
    assert!((fit.alpha - 0.3).abs() < 0.05, "{}", fit.alpha);
    assert!((fit.beta - 0.03).abs() < 0.02, "{}", fit.beta);
    assert!(adjusted_rand_index(&fit.partition, &z).unwrap() > 0.9);
    assert!(fit.trace.iter().all(|s| s.alpha.is_finite()));
}

#[test]
fn moments_on_complete_graph_clamp() {
    let fit = fit_moments(&BinaryGraph::complete(12), 2, &MomentOptions::default()).unwrap();
    assert_eq!(fit.alpha, 1.0 - DELTA);
    assert_eq!(fit.beta, 1.0 - DELTA);
    assert!(!fit.warnings.is_empty());
}

#[test]
fn moments_on_model3_stay_within_spread() {
    // Spread estimated from independent replicates, then checked on a fresh graph.
    let opts = |s| MomentOptions { seed: RngSeed(s), restarts: 2, ..Default::default() };
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    for r in 0..12 {
        let (g, _) = binary(0.55, 0.45, 1000, 100 + r);
        let f = fit_moments(&g, 2, &opts(r)).unwrap();
        alphas.push(f.alpha);
        betas.push(f.beta);
    }
    let (_, sa) = mean_sd(&alphas);
    let (_, sb) = mean_sd(&betas);
    let (g, _) = binary(0.55, 0.45, 1000, 999);
    let f = fit_moments(&g, 2, &opts(999)).unwrap();
    assert!((f.alpha - 0.55).abs() < 6.0 * sa, "{} sd {sa}", f.alpha);
    assert!((f.beta - 0.45).abs() < 6.0 * sb, "{} sd {sb}", f.beta);
}

#[test]
fn moments_with_known_unequal_proportions() {
    let pi = GroupProportions::new(vec![0.7, 0.3]).unwrap();
    let p = BinaryAffiliationParams::new(pi.clone(), 0.3, 0.03).unwrap();
    let (g, z) = sample_binary_graph(&p, 1500, RngSeed(4)).unwrap();
    // The unequal branch is sensitive to pi, so condition on the realized group sizes.
    let (sol, branch) = estimate_with_known_pi(&g, &z.frequencies()).unwrap();
    assert!(matches!(branch, graphmix::moments::MomentSolveBranch::UnequalProportions));
    assert!((sol.alpha - 0.3).abs() < 0.02 && (sol.beta - 0.03).abs() < 0.01, "{sol:?}");
}

#[test]
fn fits_are_deterministic() {
    let (g, _) = binary(0.3, 0.03, 150, 3);
    let mo = MomentOptions { seed: RngSeed(5), ..Default::default() };
    assert_eq!(fit_moments(&g, 2, &mo).unwrap(), fit_moments(&g, 2, &mo).unwrap());
    let to = TripletEmOptions { seed: RngSeed(5), ..Default::default() };
    assert_eq!(fit_triplet_em(&g, &to).unwrap(), fit_triplet_em(&g, &to).unwrap());
}

#[test]
fn triplet_em_recovers_model2() {
    let (g, _) = binary(0.03, 0.3, 500, 8);
    let fit = fit_triplet_em(&g, &TripletEmOptions { seed: RngSeed(2), ..Default::default() }).unwrap();
    assert!((fit.params.alpha - 0.03).abs() < 0.02, "{:?}", fit.params);
    assert!((fit.params.beta - 0.3).abs() < 0.05, "{:?}", fit.params);
    let g = &fit.params.gamma;
    assert!(g[1] == g[2] && g[2] == g[3]);
    let pi = fit.pi_hat.unwrap();
    assert!((pi.as_slice()[0] - 0.5).abs() < 0.05, "{pi:?}");
}

#[test]
fn triplet_em_flags_erdos_renyi() {
    let (g, _) = binary(0.2, 0.2, 300, 1);
    let fit = fit_triplet_em(&g, &TripletEmOptions { seed: RngSeed(1), ..Default::default() }).unwrap();
    assert!((fit.params.alpha - fit.params.beta).abs() < 0.05, "{:?}", fit.params);
    assert!(fit.near_nonidentifiable);
    assert!(fit.warnings.iter().any(|w| w.contains("nearly equal")));
}

#[test]
fn triplet_em_rejects_tiny_graphs() {
    assert!(matches!(
        fit_triplet_em(&BinaryGraph::empty(2), &TripletEmOptions::default()),
        Err(Error::TooFewNodes { .. })
    ));
}

fn model_a(n: usize, seed: u64) -> (graphmix::WeightedGraph, graphmix::NodePartition) {
    let p = WeightedAffiliationParams::new(
        GroupProportions::uniform(2),
        SparsityModel::global(0.5).unwrap(),
        WeightFamily::gaussian(2.0, 0.01).unwrap(),
        WeightFamily::gaussian(1.0, 0.01).unwrap(),
    )
    .unwrap();
    sample_weighted_graph(&p, n, RngSeed(seed)).unwrap()
}

#[test]
fn weighted_fit_recovers_model_a() {
    let (g, z) = model_a(150, 4);
    let fit = fit_weighted(&g, 2, SparsityKind::Global, FamilyKind::Gaussian, &WeightedOptions::seeded(RngSeed(4))).unwrap();
    assert!((fit.theta_in.mean() - 2.0).abs() < 0.05);
    assert!((fit.theta_out.mean() - 1.0).abs() < 0.05);
    let SparsityModel::Global { p } = fit.sparsity else { panic!() };
    assert!((p - 0.5).abs() < 0.05);
    assert_eq!(adjusted_rand_index(&fit.partition, &z).unwrap(), 1.0);
}

#[test]
fn label_swap_picks_the_planted_roles() {
    let (g, z) = model_a(80, 6);
    let lo = WeightFamily::gaussian(1.0, 0.01).unwrap();
    let hi = WeightFamily::gaussian(2.0, 0.01).unwrap();
    let sparsity = SparsityModel::global(0.5).unwrap();
    let opts = LatentOptions { seed: RngSeed(1), ..Default::default() };
    // (1,2): component 2 on same-group pairs.
    let r = resolve_label_swap(&g, sparsity, (lo, hi), 2, &opts).unwrap();
    assert_eq!(r.swap_choice, Some((1, 2)));
    assert_eq!(adjusted_rand_index(&r.partition, &z).unwrap(), 1.0);
    let r = resolve_label_swap(&g, sparsity, (hi, lo), 2, &opts).unwrap();
    assert_eq!(r.swap_choice, Some((2, 1)));
}

#[test]
fn weighted_fit_with_affiliation_sparsity_and_counts() {
    let p = WeightedAffiliationParams::new(
        GroupProportions::uniform(2),
        SparsityModel::affiliation(0.6, 0.2).unwrap(),
        WeightFamily::truncated_poisson(6.0).unwrap(),
        WeightFamily::truncated_poisson(1.0).unwrap(),
    )
    .unwrap();
    let (g, z) = sample_weighted_graph(&p, 200, RngSeed(12)).unwrap();
    let fit =
        fit_weighted(&g, 2, SparsityKind::Affiliation, FamilyKind::TruncatedPoisson, &WeightedOptions::seeded(RngSeed(3)))
            .unwrap();
    let SparsityModel::Affiliation { alpha, beta } = fit.sparsity else { panic!() };
    assert!((alpha - 0.6).abs() < 0.08 && (beta - 0.2).abs() < 0.08, "{alpha} {beta}");
    let WeightFamily::TruncatedPoisson { lambda } = fit.theta_in else { panic!() };
    assert!((lambda - 6.0).abs() < 0.6, "{lambda}");
    assert!(adjusted_rand_index(&fit.partition, &z).unwrap() > 0.9);
}

#[test]
fn truncated_poisson_rejects_real_weights() {
    let (g, _) = model_a(30, 1);
    let err = fit_weighted(&g, 2, SparsityKind::Global, FamilyKind::TruncatedPoisson, &WeightedOptions::default());
    assert!(matches!(err, Err(Error::Domain(_))));
}

#[test]
fn present_edge_components_are_sorted_by_mean() {
    let (g, _) = model_a(120, 2);
    let x = g.present_weights();
    let a = fit_present_edge_em(&x, FamilyKind::Gaussian, &PresentEdgeOptions::default()).unwrap();
    assert!(a.mixture.components[0].mean() < a.mixture.components[1].mean());
    assert!((a.mixture.weights[0] - 0.5).abs() < 0.05);
}
