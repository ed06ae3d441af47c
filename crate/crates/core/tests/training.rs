use gbtree::block_store::BlockStoreConfig;
use gbtree::data::DataMatrix;
use gbtree::model_io::{load_model, model_to_string, save_model};
use gbtree::objective::LossKind;
use gbtree::synth;
use gbtree::trainer::{train, TrainConfig, TreeMethod};
use gbtree::tree::TreeNode;

fn leaves(model: &gbtree::tree::TreeEnsemble) -> Vec<f64> {
    model
        .trees()
        .iter()
        .flat_map(|t| t.nodes())
        .filter_map(|n| match n {
            TreeNode::Leaf { weight } => Some(*weight),
            _ => None,
        })
        .collect()
}

#[test]
fn identical_models_across_thread_counts() {
    let data = synth::binary_task(4000, 12, 5);
    for method in [TreeMethod::Exact, TreeMethod::ApproxGlobal, TreeMethod::ApproxLocal] {
        let cfg = |threads| TrainConfig {
            num_rounds: 8,
            max_depth: 5,
            tree_method: method,
            colsample: 0.7,
            subsample: 0.8,
            seed: 11,
            threads,
            block: BlockStoreConfig {
                block_size: 1024,
                ..Default::default()
            },
            ..Default::default()
        };
        let one = model_to_string(&train(&data, &cfg(1), None).unwrap());
        let four = model_to_string(&train(&data, &cfg(4), None).unwrap());
        assert_eq!(one, four, "{method:?}");
    }
}

#[test]
fn seed_changes_sampled_models() {
    let data = synth::binary_task(2000, 10, 6);
    let cfg = |seed| TrainConfig {
        num_rounds: 3,
        colsample: 0.5,
        seed,
        ..Default::default()
    };
    let a = model_to_string(&train(&data, &cfg(1), None).unwrap());
    assert_eq!(a, model_to_string(&train(&data, &cfg(1), None).unwrap()));
    assert_ne!(a, model_to_string(&train(&data, &cfg(2), None).unwrap()));
}

#[test]
fn halving_eta_halves_first_tree() {
    let data = synth::regression(1500, 4, 2);
    let cfg = |eta| TrainConfig {
        num_rounds: 1,
        max_depth: 4,
        eta,
        loss: LossKind::SquaredError,
        ..Default::default()
    };
    let full = train(&data, &cfg(1.0), None).unwrap();
    let half = train(&data, &cfg(0.5), None).unwrap();
    let (a, b) = (full.predict_raw(&data), half.predict_raw(&data));
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x * 0.5, *y);
    }
}

#[test]
fn unregularized_stump_leaves_are_label_means() {
    let data = synth::regression(999, 3, 8);
    let cfg = TrainConfig {
        num_rounds: 1,
        max_depth: 1,
        eta: 1.0,
        lambda: 0.0,
        loss: LossKind::SquaredError,
        ..Default::default()
    };
    let model = train(&data, &cfg, None).unwrap();
    let tree = &model.trees()[0];
    assert_eq!(tree.n_leaves(), 2);
    let mut sums = vec![(0.0, 0usize); tree.nodes().len()];
    for (i, row) in data.rows().enumerate() {
        let leaf = tree.leaf_index(row);
        sums[leaf].0 += data.labels()[i];
        sums[leaf].1 += 1;
    }
    for (id, node) in tree.nodes().iter().enumerate() {
        if let TreeNode::Leaf { weight } = node {
            let mean = sums[id].0 / sums[id].1 as f64;
            assert!((weight - mean).abs() <= 1e-12 * mean.abs().max(1.0), "{weight} vs {mean}");
        }
    }
}

#[test]
fn hundred_tree_model_survives_save_and_load() {
    let data = synth::binary_task(3000, 8, 9);
    let cfg = TrainConfig {
        num_rounds: 100,
        max_depth: 4,
        tree_method: TreeMethod::ApproxGlobal,
        ..Default::default()
    };
    let model = train(&data, &cfg, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.txt");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back.trees().len(), 100);
    let (a, b) = (model.predict_raw(&data), back.predict_raw(&data));
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(leaves(&model), leaves(&back));
    assert_eq!(model_to_string(&model), model_to_string(&back));
}

#[test]
fn spilled_blocks_match_in_memory_for_every_method() {
    let data = synth::sparse_random(3000, 15, 0.3, 4);
    for method in [TreeMethod::ApproxGlobal, TreeMethod::ApproxLocal] {
        let base = TrainConfig {
            num_rounds: 4,
            max_depth: 4,
            tree_method: method,
            block: BlockStoreConfig {
                block_size: 512,
                ..Default::default()
            },
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let spilled = TrainConfig {
            block: BlockStoreConfig {
                block_size: 512,
                compression: true,
                spill_directories: vec![dir.path().to_path_buf()],
                memory_budget_blocks: 1,
            },
            ..base.clone()
        };
        assert_eq!(
            model_to_string(&train(&data, &base, None).unwrap()),
            model_to_string(&train(&data, &spilled, None).unwrap()),
        );
    }
}

#[test]
fn exact_rejects_spill_directories() {
    let data = synth::binary_task(100, 6, 1);
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        block: BlockStoreConfig {
            spill_directories: vec![dir.path().to_path_buf()],
            ..Default::default()
        },
        ..Default::default()
    };
    assert!(train(&data, &cfg, None).is_err());
}

#[test]
fn missing_values_follow_learned_default() {
    // label depends only on whether feature 0 is present
    let rows: Vec<Vec<gbtree::data::Entry>> = (0..200)
        .map(|i| {
            if i % 2 == 0 {
                vec![gbtree::data::Entry::new(0, (i % 7) as f64)]
            } else {
                vec![gbtree::data::Entry::new(1, 1.0)]
            }
        })
        .collect();
    let labels = (0..200).map(|i| f64::from(i % 2 == 0)).collect();
    let data = DataMatrix::from_rows(rows, labels, None, 2).unwrap();
    let cfg = TrainConfig {
        num_rounds: 5,
        max_depth: 1,
        eta: 0.5,
        ..Default::default()
    };
    let model = train(&data, &cfg, None).unwrap();
    let p = model.predict(&data);
    for (i, &pi) in p.iter().enumerate() {
        assert_eq!(pi > 0.5, i % 2 == 0, "row {i}");
    }
}
