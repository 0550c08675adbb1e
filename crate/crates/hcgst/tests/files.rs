use hcgst::checkpoint;
use hcgst::io::{read_graph, read_json, write_generated, write_graph, GraphMeta};
use hcgst::report::{read_runs, write_run};
use hcgst::Error;
use hcgst_core::graph::Graph;
use hcgst_core::model::init_params;
use hcgst_core::model::TrainConfig;
use hcgst_core::orchestrator::{run_variant, NodePartition, RunConfig, Variant};
use hcgst_core::synth::{generate_graph, BiasMode, SynthConfig};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_graph(seed: u64, n: usize, labeled: bool) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < 0.3 {
                edges.push((b, a));
            }
        }
    }
    // awkward magnitudes to exercise float formatting
    let features = Array2::from_shape_fn((n, 3), |_| {
        rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-12..12))
    });
    let labels = labeled.then(|| (0..n).map(|_| rng.random_range(0..4)).collect());
    Graph::new(&edges, features, labels, None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn graph_directories_round_trip(seed in any::<u64>(), n in 1usize..30, labeled in any::<bool>()) {
        let g = random_graph(seed, n, labeled);
        let dir = tempfile::tempdir().unwrap();
        write_graph(dir.path(), &g).unwrap();
        let back = read_graph(dir.path()).unwrap();
        prop_assert_eq!(back.edges(), g.edges());
        prop_assert_eq!(back.features(), g.features());
        prop_assert_eq!(back.labels(), g.labels());
    }

    #[test]
    fn checkpoints_round_trip(d in 1usize..6, h in 1usize..9, c in 1usize..5, seed in any::<u64>()) {
        let p = init_params(d, h, c, seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        checkpoint::save(&path, &p).unwrap();
        prop_assert_eq!(checkpoint::load(&path).unwrap(), p);
    }
}

#[test]
fn malformed_inputs_name_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    write_graph(dir.path(), &random_graph(1, 5, true)).unwrap();
    std::fs::write(dir.path().join("edges.csv"), "src,dst\n0,1\n2,x\n").unwrap();
    match read_graph(dir.path()) {
        Err(Error::Parse { path, line, .. }) => {
            assert!(path.ends_with("edges.csv"));
            assert_eq!(line, 3);
        }
        other => panic!("unexpected {other:?}"),
    }
    std::fs::write(dir.path().join("edges.csv"), "a,b\n0,1\n").unwrap();
    assert!(matches!(read_graph(dir.path()), Err(Error::Parse { line: 1, .. })));
    std::fs::write(dir.path().join("edges.csv"), "src,dst\n0,9\n").unwrap();
    assert!(matches!(read_graph(dir.path()), Err(Error::Core(_))));
    std::fs::remove_file(dir.path().join("features.csv")).unwrap();
    assert!(matches!(read_graph(dir.path()), Err(Error::Read { .. })));

    let ckpt = dir.path().join("bad.ckpt");
    std::fs::write(&ckpt, b"not a checkpoint").unwrap();
    assert!(matches!(checkpoint::load(&ckpt), Err(Error::Parse { .. })));
}

#[test]
fn edges_are_symmetrized_on_load() {
    let dir = tempfile::tempdir().unwrap();
    write_graph(dir.path(), &random_graph(2, 4, false)).unwrap();
    std::fs::write(dir.path().join("edges.csv"), "src,dst\n0,1\n1,0\n2,3\n").unwrap();
    let g = read_graph(dir.path()).unwrap();
    assert_eq!(g.edges(), &[(0, 1), (2, 3)]);
    assert_eq!(g.neighbors(1), &[0]);
}

#[test]
fn generated_directory_carries_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let synth = SynthConfig {
        n: 120,
        seed: 5,
        ..Default::default()
    };
    let g = generate_graph(&synth).unwrap();
    let meta = write_generated(dir.path(), &synth, &g).unwrap();
    assert_eq!(read_json::<GraphMeta>(&dir.path().join("meta.json")).unwrap(), meta);
    assert_eq!(meta.homophily_distribution.iter().sum::<f64>(), 120.0);
    let csv = std::fs::read_to_string(dir.path().join("homophily_distribution.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
    assert!(csv.starts_with("bin_index,count\n"));
}

#[test]
fn run_reports_round_trip_through_json() {
    let g = generate_graph(&SynthConfig {
        n: 150,
        separation: 3.0,
        ..Default::default()
    })
    .unwrap();
    let p = NodePartition::sample(&g, 0.05, 0.2, BiasMode::HeterophilyBiased, 10, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut written = Vec::new();
    for variant in [Variant::StConfidence, Variant::Hcgst] {
        let cfg = RunConfig {
            variant,
            stages: 2,
            train: TrainConfig {
                epochs: 40,
                learning_rate: 0.01,
                ..Default::default()
            },
            ..Default::default()
        };
        let r = run_variant(&g, &p, &cfg).unwrap().report;
        write_run(dir.path(), &r).unwrap();
        written.push(r);
    }
    written.sort_by_key(|r| r.variant);
    assert_eq!(read_runs(dir.path()).unwrap(), written);
}
