// Own test binary: the comparison counter is process-wide.

use gbtree::block_store::{sort_comparisons, BlockStoreConfig};
use gbtree::synth;
use gbtree::trainer::{train, TrainConfig, TreeMethod};

#[test]
fn columns_are_sorted_once_per_run() {
    let data = synth::binary_task(5000, 8, 3);
    for method in [TreeMethod::Exact, TreeMethod::ApproxGlobal, TreeMethod::ApproxLocal] {
        let cost = |rounds| {
            let cfg = TrainConfig {
                num_rounds: rounds,
                max_depth: 5,
                tree_method: method,
                block: BlockStoreConfig {
                    block_size: 1000,
                    ..Default::default()
                },
                ..Default::default()
            };
            let before = sort_comparisons();
            train(&data, &cfg, None).unwrap();
            sort_comparisons() - before
        };
        let one = cost(1);
        assert!(one > 0, "{method:?}");
        assert_eq!(one, cost(20), "{method:?}");
    }
}
