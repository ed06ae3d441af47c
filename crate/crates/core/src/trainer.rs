//! The boosting loop.
//!
//! Each round refreshes gradients at the cached predictions, grows one tree
//! level by level, shrinks its leaf weights by `eta` and adds it to the
//! cache. Every level scans the columns once for all frontier nodes.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::block_store::{BlockStore, BlockStoreConfig};
use crate::columns::SortedColumns;
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::metrics::MetricKind;
use crate::objective::{fill_gradients, leaf_weight, GradPair, LossKind, RegParams};
use crate::split::{
    exact_level, LevelHistogram, NodeStats, ProposalSet, ScanStats, SketchCollector, SplitCandidate,
    SplitParams, INACTIVE,
};
use crate::tree::{Tree, TreeEnsemble, TreeNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TreeMethod {
    Exact,
    /// Proposals once per tree from the root statistics.
    ApproxGlobal,
    /// Proposals again for every node.
    ApproxLocal,
}

impl TreeMethod {
    pub fn name(self) -> &'static str {
        match self {
            TreeMethod::Exact => "exact",
            TreeMethod::ApproxGlobal => "approx_global",
            TreeMethod::ApproxLocal => "approx_local",
        }
    }
}

impl fmt::Display for TreeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TreeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(TreeMethod::Exact),
            "approx_global" => Ok(TreeMethod::ApproxGlobal),
            "approx_local" => Ok(TreeMethod::ApproxLocal),
            other => Err(Error::Config(format!("unknown tree method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub num_rounds: usize,
    pub max_depth: usize,
    pub eta: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// Fraction of features drawn (without replacement) for each tree.
    pub colsample: f64,
    /// Per-tree Bernoulli row sampling rate.
    pub subsample: f64,
    pub tree_method: TreeMethod,
    /// Proposal accuracy for the approximate methods.
    pub eps: f64,
    pub seed: u64,
    pub min_child_hessian: f64,
    pub loss: LossKind,
    /// Worker threads; 0 picks one per core.
    pub threads: usize,
    /// Metrics logged each round; empty means the loss's default metric.
    pub metrics: Vec<MetricKind>,
    pub block: BlockStoreConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_rounds: 10,
            max_depth: 8,
            eta: 0.1,
            lambda: 1.0,
            gamma: 0.0,
            colsample: 1.0,
            subsample: 1.0,
            tree_method: TreeMethod::Exact,
            eps: 0.03,
            seed: 0,
            min_child_hessian: 0.0,
            loss: LossKind::Logistic,
            threads: 0,
            metrics: Vec::new(),
            block: BlockStoreConfig::default(),
        }
    }
}

pub const MAX_DEPTH_LIMIT: usize = 30;

impl TrainConfig {
    pub fn reg(&self) -> RegParams {
        RegParams {
            lambda: self.lambda,
            gamma: self.gamma,
            eta: self.eta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.reg().validate()?;
        self.block.validate()?;
        if self.max_depth > MAX_DEPTH_LIMIT {
            return Err(Error::Config(format!(
                "max_depth must be <= {MAX_DEPTH_LIMIT}, got {}",
                self.max_depth
            )));
        }
        if !(self.colsample > 0.0 && self.colsample <= 1.0) {
            return Err(Error::Config(format!("colsample must be in (0, 1], got {}", self.colsample)));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config(format!("subsample must be in (0, 1], got {}", self.subsample)));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::Config(format!("eps must be in (0, 1), got {}", self.eps)));
        }
        if !(self.min_child_hessian >= 0.0 && self.min_child_hessian.is_finite()) {
            return Err(Error::Config(format!(
                "min_child_hessian must be >= 0, got {}",
                self.min_child_hessian
            )));
        }
        if self.tree_method == TreeMethod::Exact && !self.block.spill_directories.is_empty() {
            return Err(Error::Config(
                "the exact method needs in-memory columns; use approx_global or approx_local with spill directories"
                    .into(),
            ));
        }
        Ok(())
    }

    fn metrics(&self) -> Vec<MetricKind> {
        if self.metrics.is_empty() {
            vec![MetricKind::default_for(self.loss)]
        } else {
            self.metrics.clone()
        }
    }
}

/// One `round,metric,value` log line.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub round: usize,
    pub metric: String,
    pub value: f64,
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.round, self.metric, self.value)
    }
}

/// Work done while training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Proposal computations: one per tree (global) or per searched node (local).
    pub proposal_calls: usize,
    /// Sum over proposal computations of the candidates per feature, and the
    /// number of (proposal, feature) pairs it was summed over.
    pub proposal_cuts: usize,
    pub proposal_features: usize,
    /// Column entries and value runs touched by split search.
    pub entries_visited: u64,
    /// Most spilled blocks decoded at once.
    pub peak_resident_blocks: usize,
    /// Stored over raw block bytes when spilled.
    pub compression_ratio: Option<f64>,
}

impl TrainReport {
    pub fn mean_cuts_per_feature(&self) -> Option<f64> {
        (self.proposal_features > 0).then(|| self.proposal_cuts as f64 / self.proposal_features as f64)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: TreeEnsemble,
    pub report: TrainReport,
}

pub fn train(matrix: &DataMatrix, config: &TrainConfig, eval: Option<&DataMatrix>) -> Result<TreeEnsemble> {
    Ok(train_with_log(matrix, config, eval, &mut |_| {})?.model)
}

/// Trains and reports one record per metric per round: `train-<metric>` and,
/// with an eval set, `eval-<metric>`.
pub fn train_with_log(
    matrix: &DataMatrix,
    config: &TrainConfig,
    eval: Option<&DataMatrix>,
    log: &mut (dyn FnMut(&LogRecord) + Send),
) -> Result<TrainOutput> {
    config.validate()?;
    config.loss.check_labels(matrix.labels())?;
    if let Some(e) = eval {
        config.loss.check_labels(e.labels())?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| Booster::new(matrix, config)?.run(eval, log))
}

struct Booster<'a> {
    matrix: &'a DataMatrix,
    config: &'a TrainConfig,
    store: BlockStore,
    columns: Option<SortedColumns>,
    params: SplitParams,
    rng: ChaCha8Rng,
    grads: Vec<GradPair>,
    scan: ScanStats,
    report: TrainReport,
}

/// A frontier node: its slot in the output tree and its statistics.
struct Pending {
    id: usize,
    stats: NodeStats,
}

impl<'a> Booster<'a> {
    fn new(matrix: &'a DataMatrix, config: &'a TrainConfig) -> Result<Self> {
        let store = BlockStore::build(matrix, &config.block)?;
        let columns = match (config.tree_method, store.in_memory_blocks()) {
            (TreeMethod::Exact, Some(blocks)) => Some(SortedColumns::from_blocks(blocks, matrix.n_features())),
            _ => None,
        };
        let report = TrainReport {
            compression_ratio: match &store {
                BlockStore::Spilled(s) => Some(s.compression_ratio()),
                BlockStore::InMemory { .. } => None,
            },
            ..Default::default()
        };
        Ok(Self {
            matrix,
            config,
            store,
            columns,
            params: SplitParams::new(&config.reg(), config.min_child_hessian),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            grads: Vec::with_capacity(matrix.n_rows()),
            scan: ScanStats::default(),
            report,
        })
    }

    fn run(mut self, eval: Option<&DataMatrix>, log: &mut (dyn FnMut(&LogRecord) + Send)) -> Result<TrainOutput> {
        let cfg = self.config;
        let base = 0.0;
        let mut model = TreeEnsemble::new(cfg.loss, self.matrix.n_features(), base);
        let mut preds = vec![base; self.matrix.n_rows()];
        let mut eval_preds = eval.map(|e| vec![base; e.n_rows()]);
        let metrics = cfg.metrics();
        for round in 0..cfg.num_rounds {
            fill_gradients(
                cfg.loss,
                self.matrix.labels(),
                &preds,
                self.matrix.weights(),
                &mut self.grads,
            );
            let calls_before = (self.report.proposal_cuts, self.report.proposal_features);
            let tree = self.grow_tree()?;
            for (p, row) in preds.iter_mut().zip(self.matrix.rows()) {
                *p += tree.predict_row(row);
            }
            if let (Some(e), Some(ep)) = (eval, eval_preds.as_mut()) {
                for (p, row) in ep.iter_mut().zip(e.rows()) {
                    *p += tree.predict_row(row);
                }
            }
            model.push(tree);
            for &m in &metrics {
                emit(log, round, "train", m, cfg.loss, self.matrix.labels(), &preds);
                if let (Some(e), Some(ep)) = (eval, eval_preds.as_ref()) {
                    emit(log, round, "eval", m, cfg.loss, e.labels(), ep);
                }
            }
            let features = self.report.proposal_features - calls_before.1;
            if features > 0 {
                log(&LogRecord {
                    round,
                    metric: "proposal-cuts-per-feature".into(),
                    value: (self.report.proposal_cuts - calls_before.0) as f64 / features as f64,
                });
            }
        }
        self.report.entries_visited = self.scan.entries_visited();
        Ok(TrainOutput {
            model,
            report: self.report,
        })
    }

    fn sample_features(&mut self) -> Vec<usize> {
        let m = self.matrix.n_features();
        let k = ((self.config.colsample * m as f64).floor() as usize).max(1).min(m);
        if k == m {
            return (0..m).collect();
        }
        let mut picked = sample(&mut self.rng, m, k).into_vec();
        picked.sort_unstable();
        picked
    }

    fn initial_positions(&mut self) -> Vec<u32> {
        let n = self.matrix.n_rows();
        let rate = self.config.subsample;
        if rate >= 1.0 {
            return vec![0; n];
        }
        (0..n)
            .map(|_| if self.rng.gen_bool(rate) { 0 } else { INACTIVE })
            .collect()
    }

    fn node_totals(&self, positions: &[u32], k: usize) -> Vec<NodeStats> {
        let mut out = vec![NodeStats::default(); k];
        for (p, gp) in positions.iter().zip(&self.grads) {
            if *p != INACTIVE {
                let s = &mut out[*p as usize];
                s.sum_grad += gp.g;
                s.sum_hess += gp.h;
                s.count += 1;
            }
        }
        out
    }

    fn leaf(&self, stats: &NodeStats) -> TreeNode {
        let w = if stats.sum_hess > 0.0 {
            leaf_weight(stats.sum_grad, stats.sum_hess, self.config.lambda).unwrap_or(0.0)
        } else {
            0.0
        };
        TreeNode::Leaf {
            weight: self.config.eta * w,
        }
    }

    fn for_each_block(&mut self, mut f: impl FnMut(&crate::block_store::ColumnBlock)) -> Result<()> {
        let plan: Vec<usize> = (0..self.store.n_blocks()).collect();
        let mut stream = self.store.stream(&plan)?;
        for block in stream.by_ref() {
            let block = block?;
            f(&block);
        }
        self.report.peak_resident_blocks = self.report.peak_resident_blocks.max(stream.peak_resident());
        Ok(())
    }

    fn propose(&mut self, features: &[usize], positions: &[u32], n_nodes: usize) -> Result<Vec<ProposalSet>> {
        let mut collector = SketchCollector::new(features, n_nodes);
        let grads = std::mem::take(&mut self.grads);
        let res = self.for_each_block(|b| collector.accumulate(b, positions, &grads));
        self.grads = grads;
        res?;
        let sets = collector.finish(self.config.eps, self.matrix.n_features());
        for s in &sets {
            for &f in features {
                let c = s.cuts(f).len();
                if c > 0 {
                    self.report.proposal_cuts += c;
                    self.report.proposal_features += 1;
                }
            }
        }
        Ok(sets)
    }

    fn find_splits(
        &mut self,
        features: &[usize],
        positions: &[u32],
        frontier: &[NodeStats],
        global: Option<&ProposalSet>,
    ) -> Result<Vec<Option<SplitCandidate>>> {
        if let Some(cols) = &self.columns {
            return Ok(exact_level(
                cols,
                features,
                positions,
                &self.grads,
                frontier,
                &self.params,
                &self.scan,
            ));
        }
        let local;
        let proposals: Vec<&ProposalSet> = match global {
            Some(g) => vec![g; frontier.len()],
            None => {
                local = self.propose(features, positions, frontier.len())?;
                self.report.proposal_calls += frontier.len();
                local.iter().collect()
            }
        };
        let mut hist = LevelHistogram::new(features, proposals);
        let grads = std::mem::take(&mut self.grads);
        let scan = std::mem::take(&mut self.scan);
        let res = self.for_each_block(|b| hist.accumulate(b, positions, &grads, &scan));
        self.grads = grads;
        self.scan = scan;
        res?;
        Ok(hist.best_splits(frontier, &self.params))
    }

    fn grow_tree(&mut self) -> Result<Tree> {
        let features = self.sample_features();
        let mut positions = self.initial_positions();
        let root = self.node_totals(&positions, 1)[0];
        let mut nodes: Vec<TreeNode> = vec![TreeNode::Leaf { weight: 0.0 }];
        let mut frontier = vec![Pending { id: 0, stats: root }];

        let global = if self.config.tree_method == TreeMethod::ApproxGlobal && !features.is_empty() {
            self.report.proposal_calls += 1;
            self.propose(&features, &positions, 1)?.pop()
        } else {
            None
        };

        for depth in 0..=self.config.max_depth {
            if frontier.is_empty() {
                break;
            }
            let stats: Vec<NodeStats> = frontier.iter().map(|p| p.stats).collect();
            let splits = if depth < self.config.max_depth && !features.is_empty() {
                self.find_splits(&features, &positions, &stats, global.as_ref())?
            } else {
                vec![None; frontier.len()]
            };

            // child slot per frontier node, and the split it applies
            let mut routes: Vec<Option<(u32, SplitCandidate)>> = Vec::with_capacity(frontier.len());
            let mut next = 0u32;
            for (p, split) in frontier.iter().zip(&splits) {
                match split.filter(|_| p.stats.sum_hess > 0.0) {
                    Some(s) => {
                        let left = nodes.len();
                        nodes.push(TreeNode::Leaf { weight: 0.0 });
                        nodes.push(TreeNode::Leaf { weight: 0.0 });
                        nodes[p.id] = TreeNode::Split {
                            feature: s.feature,
                            threshold: s.threshold,
                            default_left: s.default_left,
                            left: left as u32,
                            right: left as u32 + 1,
                        };
                        routes.push(Some((next, s)));
                        next += 2;
                    }
                    None => {
                        nodes[p.id] = self.leaf(&p.stats);
                        routes.push(None);
                    }
                }
            }
            if next == 0 {
                break;
            }
            for (r, pos) in positions.iter_mut().enumerate() {
                if *pos == INACTIVE {
                    continue;
                }
                *pos = match routes[*pos as usize] {
                    Some((child, s)) => {
                        let v = self.matrix.value(r, s.feature);
                        if s.goes_left(v) {
                            child
                        } else {
                            child + 1
                        }
                    }
                    None => INACTIVE,
                };
            }
            let child_stats = self.node_totals(&positions, next as usize);
            let mut new_frontier = Vec::with_capacity(next as usize);
            for p in &frontier {
                if let TreeNode::Split { left, right, .. } = nodes[p.id] {
                    let slot = new_frontier.len();
                    new_frontier.push(Pending {
                        id: left as usize,
                        stats: child_stats[slot],
                    });
                    new_frontier.push(Pending {
                        id: right as usize,
                        stats: child_stats[slot + 1],
                    });
                }
            }
            frontier = new_frontier;
        }
        Tree::from_nodes(nodes)
    }
}

fn emit(
    log: &mut (dyn FnMut(&LogRecord) + Send),
    round: usize,
    prefix: &str,
    metric: MetricKind,
    loss: LossKind,
    labels: &[f64],
    raw: &[f64],
) {
    // a metric that is undefined here (say AUC on one class) is skipped
    if let Ok(value) = metric.evaluate(loss, labels, raw) {
        log(&LogRecord {
            round,
            metric: format!("{prefix}-{metric}"),
            value,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Entry;

    fn two_instance() -> DataMatrix {
        DataMatrix::from_dense(&[vec![1.0], vec![2.0]], vec![1.0, 0.0]).unwrap()
    }

    #[test]
    fn zero_rounds_predict_base() {
        let cfg = TrainConfig {
            num_rounds: 0,
            ..Default::default()
        };
        let m = train(&two_instance(), &cfg, None).unwrap();
        assert!(m.trees().is_empty());
        assert_eq!(m.predict_raw(&two_instance()), vec![0.0, 0.0]);
    }

    #[test]
    fn stump_on_two_instances() {
        // squared error with y - ŷ = ±1 gives the (−1, 1), (+1, 1) pairs
        let data = DataMatrix::from_dense(&[vec![1.0], vec![2.0]], vec![1.0, -1.0]).unwrap();
        let cfg = TrainConfig {
            num_rounds: 1,
            max_depth: 1,
            loss: LossKind::SquaredError,
            ..Default::default()
        };
        let m = train(&data, &cfg, None).unwrap();
        let nodes = m.trees()[0].nodes();
        assert_eq!(
            nodes[0],
            TreeNode::Split {
                feature: 0,
                threshold: 1.5,
                default_left: false,
                left: 1,
                right: 2
            }
        );
        assert_eq!(nodes[1], TreeNode::Leaf { weight: 0.1 * 0.5 });
        assert_eq!(nodes[2], TreeNode::Leaf { weight: 0.1 * -0.5 });
        assert_eq!(m.trees()[0].predict_row(&[Entry::new(0, 1.0)]), 0.05);
    }

    #[test]
    fn cached_predictions_match_predict() {
        let rows: Vec<Vec<Entry>> = (0..200u32)
            .map(|i| {
                let mut r = vec![Entry::new(0, f64::from(i % 17))];
                if i % 3 != 0 {
                    r.push(Entry::new(1, f64::from(i % 5)));
                }
                r
            })
            .collect();
        let labels = (0..200).map(|i| f64::from(i % 17 > 8)).collect();
        let data = DataMatrix::from_rows(rows, labels, None, 2).unwrap();
        for method in [TreeMethod::Exact, TreeMethod::ApproxGlobal, TreeMethod::ApproxLocal] {
            let cfg = TrainConfig {
                num_rounds: 5,
                max_depth: 3,
                tree_method: method,
                metrics: vec![MetricKind::Logloss],
                ..Default::default()
            };
            let mut last = Vec::new();
            let out = train_with_log(&data, &cfg, None, &mut |r| last.push(r.clone())).unwrap();
            let preds = out.model.predict_raw(&data);
            let ll = crate::metrics::logloss(data.labels(), &out.model.predict(&data)).unwrap();
            let logged = last.iter().rev().find(|r| r.metric == "train-logloss").unwrap();
            assert_eq!(logged.value, ll, "{method}");
            assert_eq!(preds.len(), 200);
        }
    }

    #[test]
    fn config_validation() {
        let bad = [
            TrainConfig {
                eta: 0.0,
                ..Default::default()
            },
            TrainConfig {
                colsample: 0.0,
                ..Default::default()
            },
            TrainConfig {
                eps: 1.0,
                ..Default::default()
            },
            TrainConfig {
                max_depth: 99,
                ..Default::default()
            },
            TrainConfig {
                block: BlockStoreConfig {
                    spill_directories: vec!["/tmp/x".into()],
                    ..Default::default()
                },
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn logistic_rejects_non_binary_labels() {
        let data = DataMatrix::from_dense(&[vec![1.0]], vec![2.0]).unwrap();
        assert!(train(&data, &TrainConfig::default(), None).is_err());
    }

    #[test]
    fn proposal_counters_distinguish_modes() {
        let vals: Vec<Vec<f64>> = (0..400).map(|i| vec![f64::from(i), f64::from(i % 7)]).collect();
        let labels = (0..400).map(|i| f64::from(i % 7 > 2 && i > 150)).collect();
        let data = DataMatrix::from_dense(&vals, labels).unwrap();
        let mut counts = Vec::new();
        for method in [TreeMethod::ApproxGlobal, TreeMethod::ApproxLocal] {
            let cfg = TrainConfig {
                num_rounds: 3,
                max_depth: 3,
                tree_method: method,
                ..Default::default()
            };
            let out = train_with_log(&data, &cfg, None, &mut |_| {}).unwrap();
            let searched: usize = out
                .model
                .trees()
                .iter()
                .map(|t| {
                    // nodes above the depth limit are searched
                    let mut depth = vec![0usize; t.nodes().len()];
                    let mut n = 0;
                    for (i, node) in t.nodes().iter().enumerate() {
                        if depth[i] < 3 {
                            n += 1;
                        }
                        if let TreeNode::Split { left, right, .. } = *node {
                            depth[left as usize] = depth[i] + 1;
                            depth[right as usize] = depth[i] + 1;
                        }
                    }
                    n
                })
                .sum();
            counts.push((out.report.proposal_calls, searched));
        }
        assert_eq!(counts[0].0, 3);
        assert_eq!(counts[1].0, counts[1].1);
        assert!(counts[1].0 > 3);
    }
}
