use motorgraph::features::WindowFeatures;
use motorgraph::graph::{build_graph, SignalGraph};
use motorgraph::model::{predict, train, Ablation, ModelConfig};
use motorgraph::numerics::Rng;
use motorgraph::sim::{FaultFamily, FaultSpec};

fn random_graph(rng: &mut Rng, id: &str, label: &FaultSpec, offset: f64) -> SignalGraph {
    let nodes = (0..8)
        .map(|i| WindowFeatures {
            x: (0..20).map(|j| offset * (j % 3) as f64 + rng.normal(0.0, 0.3)).collect(),
            window_index: i,
            source: id.into(),
        })
        .collect();
    build_graph(id, nodes, 2, label).unwrap()
}

#[test]
fn overfits_a_single_graph() {
    let mut rng = Rng::new(1);
    let g = random_graph(&mut rng, "g", &FaultSpec::broken_bars(2), 1.0);
    let config = ModelConfig { epochs: 200, dropout: 0.0, ..Default::default() };
    let (state, log) = train(&mut [g.clone()], &[], &config).unwrap();
    let first = log.epochs.first().unwrap().train_loss.total;
    let last = log.epochs.last().unwrap().train_loss.total;
    assert!(last < 0.1 * first, "loss {first} -> {last}");
    let d = predict(&state, &g).unwrap().decision();
    assert!(d.is_anomaly);
    assert_eq!(d.family, FaultFamily::BarBreakage);
    assert!((d.severity.unwrap() - 2.0 / 3.0).abs() < 0.1);
}

#[test]
fn training_is_bit_reproducible() {
    let mut rng = Rng::new(2);
    let graphs: Vec<SignalGraph> = (0..6)
        .map(|i| {
            let label = if i % 2 == 0 { FaultSpec::healthy() } else { FaultSpec::broken_bars(1) };
            random_graph(&mut rng, &format!("g{i}"), &label, i as f64 * 0.2)
        })
        .collect();
    let config = ModelConfig { epochs: 5, batch_size: 2, seed: 11, ..Default::default() };
    let (a, la) = train(&mut graphs.clone(), &graphs, &config).unwrap();
    let (b, lb) = train(&mut graphs.clone(), &graphs, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(la, lb);
    let other = ModelConfig { seed: 12, ..config };
    let (c, _) = train(&mut graphs.clone(), &graphs, &other).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn ablating_severity_keeps_shared_training_identical() {
    let mut rng = Rng::new(3);
    let graphs: Vec<SignalGraph> = (0..6)
        .map(|i| {
            let label = if i % 3 == 0 { FaultSpec::healthy() } else { FaultSpec::broken_bars((i % 3) as u8) };
            random_graph(&mut rng, &format!("g{i}"), &label, i as f64 * 0.3)
        })
        .collect();
    let full = ModelConfig { epochs: 8, seed: 5, ..Default::default() };
    let ablated = ModelConfig { ablation: Ablation::NoSeverity, ..full.clone() };
    let (a, _) = train(&mut graphs.clone(), &[], &full).unwrap();
    let (b, _) = train(&mut graphs.clone(), &[], &ablated).unwrap();
    assert_eq!(a.params.gcn2_w, b.params.gcn2_w);
    for g in &graphs {
        let da = predict(&a, g).unwrap();
        let db = predict(&b, g).unwrap();
        assert_eq!(da.anomaly, db.anomaly);
        assert_eq!(da.type_probs, db.type_probs);
    }
}
