use hcgst_core::graph::Graph;
use hcgst_core::model::TrainConfig;
use hcgst_core::model::{init_params, predict, Propagation};
use hcgst_core::orchestrator::{run_variant, NodePartition, RunConfig, RunOutcome, Variant};
use hcgst_core::synth::{generate_graph, BiasMode, SynthConfig};

fn fixture(seed: u64) -> (Graph, NodePartition) {
    let g = generate_graph(&SynthConfig {
        n: 300,
        separation: 3.0,
        pair_bias: 0.5,
        seed,
        ..Default::default()
    })
    .unwrap();
    let p = NodePartition::sample(&g, 0.04, 0.2, BiasMode::HeterophilyBiased, 10, seed).unwrap();
    (g, p)
}

fn config(variant: Variant, seed: u64) -> RunConfig {
    RunConfig {
        variant,
        seed,
        stages: 4,
        train: TrainConfig {
            epochs: 120,
            learning_rate: 0.01,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn run(g: &Graph, p: &NodePartition, cfg: &RunConfig) -> RunOutcome {
    run_variant(g, p, cfg).unwrap()
}

#[test]
fn runs_are_deterministic() {
    let (g, p) = fixture(1);
    let cfg = config(Variant::Hcgst, 1);
    assert_eq!(run(&g, &p, &cfg), run(&g, &p, &cfg));
}

#[test]
fn pseudo_set_grows_by_at_most_k_without_duplicates() {
    for seed in 0..3 {
        let (g, p) = fixture(seed);
        let out = run(&g, &p, &config(Variant::Hcgst, seed));
        let r = &out.report;
        let mut seen = vec![false; g.node_count()];
        for &v in p.labeled.iter().chain(&p.validation) {
            seen[v] = true;
        }
        let mut total = 0;
        for s in &r.stages[1..] {
            assert!(s.selected.len() <= r.k);
            for pl in &s.selected {
                assert!(
                    !seen[pl.node],
                    "node {} selected twice or overlaps a labeled set",
                    pl.node
                );
                seen[pl.node] = true;
            }
            total += s.selected.len();
            assert_eq!(s.pseudo_total, total);
        }
        assert_eq!(r.pseudo.len(), total);
        let from_stages: Vec<_> = r.stages.iter().flat_map(|s| s.selected.iter().copied()).collect();
        let cumulative: Vec<_> = r.pseudo.iter().map(|pn| pn.label).collect();
        assert_eq!(from_stages, cumulative);
    }
}

#[test]
fn no_candidates_degenerates_to_backbone() {
    let (g, p) = fixture(2);
    let mut cfg = config(Variant::Hcgst, 2);
    cfg.stages = 1;
    cfg.delta_c = 0.999;
    let degenerate = run(&g, &p, &cfg);
    let backbone = run(&g, &p, &config(Variant::BackboneOnly, 2));
    assert_eq!(degenerate.report.bins, backbone.report.bins);
    assert_eq!(degenerate.model, backbone.model);
    assert_eq!(degenerate.report.warnings.len(), 1);
}

#[test]
fn backbone_only_matches_stage_zero_model() {
    let (g, p) = fixture(3);
    let out = run(&g, &p, &config(Variant::BackboneOnly, 3));
    let r = &out.report;
    assert_eq!(r.stages.len(), 1);
    assert_eq!(out.model, out.backbone);
    assert!(r.bins.deltas.iter().flatten().all(|d| *d == 0.0));
    assert_eq!(
        (r.bins.metrics.tpv, r.bins.metrics.npv, r.bins.metrics.ppv),
        (0.0, 0.0, 0.0)
    );
    let prop = Propagation::new(&g.adjacency(), g.features()).unwrap();
    let preds = predict(&out.backbone, &prop).unwrap();
    let truth = g.labels().unwrap();
    let acc = p.unlabeled.iter().filter(|&&v| preds[v] == truth[v]).count() as f64 / p.unlabeled.len() as f64;
    assert_eq!(acc, r.accuracy());
}

#[test]
fn variant_switches_take_effect() {
    let (g, p) = fixture(4);
    let no_multihop = run(&g, &p, &config(Variant::NoMultihop, 4)).report;
    assert!(no_multihop.stages.iter().all(|s| s.multi_hop_routed == 0));

    let out = run(&g, &p, &config(Variant::NoDualhead, 4));
    let init = init_params(g.feature_dim(), out.model.hidden, g.class_count(), 4).unwrap();
    assert_eq!(out.model.pseudo_weight, init.pseudo_weight);
    assert_eq!(out.model.pseudo_bias, init.pseudo_bias);

    let st = run(&g, &p, &config(Variant::StConfidence, 4)).report;
    assert!(st
        .stages
        .iter()
        .all(|s| s.multi_hop_routed == 0 && s.selection_loss.is_none()));
}
