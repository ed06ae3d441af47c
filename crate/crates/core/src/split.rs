//! Split search: exact greedy with learned default directions, the
//! histogram (proposal based) variant, candidate proposal from weighted
//! quantile summaries, and a dense-scan baseline for comparison.
//!
//! The level-wise scanners evaluate every frontier node of a tree level in a
//! single pass over each column. `positions[row]` holds the frontier index of
//! the node a row currently sits in, or [`INACTIVE`].

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::columns::{ColumnAccess, SortedColumn};
use crate::error::{Error, Result};
use crate::objective::{split_gain, GradPair, RegParams};
use crate::sketch::WeightedQuantileSummary;

/// Position of a row that takes no part in the current level.
pub const INACTIVE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitParams {
    pub lambda: f64,
    pub gamma: f64,
    /// Both children need at least this much hessian mass.
    pub min_child_hessian: f64,
}

impl Default for SplitParams {
    fn default() -> Self {
        Self::new(&RegParams::default(), 0.0)
    }
}

impl SplitParams {
    pub fn new(reg: &RegParams, min_child_hessian: f64) -> Self {
        Self {
            lambda: reg.lambda,
            gamma: reg.gamma,
            min_child_hessian,
        }
    }
}

/// A split rule with the statistics that justified it. Present values go left
/// iff `value < threshold`; missing values go left iff `default_left`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: u32,
    pub threshold: f64,
    pub default_left: bool,
    pub gain: f64,
    pub grad_left: f64,
    pub hess_left: f64,
    pub grad_right: f64,
    pub hess_right: f64,
}

impl SplitCandidate {
    /// Total order used everywhere a best split is picked: higher gain, then
    /// lower feature, then lower threshold, then default-right.
    pub fn better_than(&self, other: &Self) -> bool {
        use std::cmp::Ordering::*;
        match self.gain.total_cmp(&other.gain) {
            Greater => true,
            Less => false,
            Equal => match other.feature.cmp(&self.feature) {
                Greater => true,
                Less => false,
                Equal => match self.threshold.total_cmp(&other.threshold) {
                    Less => true,
                    Greater => false,
                    Equal => !self.default_left && other.default_left,
                },
            },
        }
    }

    pub fn goes_left(&self, value: Option<f64>) -> bool {
        match value {
            Some(v) => v < self.threshold,
            None => self.default_left,
        }
    }
}

/// Gradient totals of one tree node. `count` includes rows whose value of a
/// given feature is missing, so `count` minus present entries is the missing
/// population for that feature.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodeStats {
    pub sum_grad: f64,
    pub sum_hess: f64,
    pub count: usize,
}

impl NodeStats {
    /// Sums over `rows` in the given order.
    pub fn from_rows(grads: &[GradPair], rows: &[u32]) -> Self {
        let mut s = Self::default();
        for &r in rows {
            let p = grads[r as usize];
            s.sum_grad += p.g;
            s.sum_hess += p.h;
            s.count += 1;
        }
        s
    }
}

/// Per-feature candidate thresholds, each strictly increasing. An empty list
/// means the feature offers no split.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProposalSet {
    cuts: Vec<Vec<f64>>,
}

impl ProposalSet {
    pub fn from_cuts(cuts: Vec<Vec<f64>>) -> Result<Self> {
        for (f, c) in cuts.iter().enumerate() {
            if c.iter().any(|v| !v.is_finite()) || c.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidInput(format!(
                    "proposals for feature {f} are not finite and strictly increasing"
                )));
            }
        }
        Ok(Self { cuts })
    }

    /// Every distinct present value of each feature among `rows`.
    pub fn distinct_values<C: ColumnAccess>(columns: &C, rows: &[u32], n_rows: usize) -> Self {
        let mut member = vec![false; n_rows];
        for &r in rows {
            member[r as usize] = true;
        }
        let cuts = (0..columns.n_features())
            .map(|f| {
                let mut vals: Vec<f64> = columns
                    .column(f)
                    .iter()
                    .filter(|&(r, _)| member[r as usize])
                    .map(|(_, v)| v)
                    .collect();
                vals.dedup();
                vals
            })
            .collect();
        Self { cuts }
    }

    pub fn n_features(&self) -> usize {
        self.cuts.len()
    }

    pub fn cuts(&self, feature: usize) -> &[f64] {
        self.cuts.get(feature).map_or(&[], |c| c.as_slice())
    }

    pub fn total_cuts(&self) -> usize {
        self.cuts.iter().map(Vec::len).sum()
    }
}

/// Work counter for the scanners: column entries and value runs touched.
#[derive(Debug, Default)]
pub struct ScanStats {
    visited: AtomicU64,
}

impl ScanStats {
    pub fn entries_visited(&self) -> u64 {
        self.visited.load(Ordering::Relaxed)
    }

    fn add(&self, n: u64) {
        self.visited.fetch_add(n, Ordering::Relaxed);
    }
}

/// Summary budget for a proposal accuracy `eps`. Pruning to this many
/// intervals leaves adjacent candidates strictly less than `eps·ω` apart in
/// weighted rank, not counting the candidates' own weight.
pub fn proposal_budget(eps: f64) -> usize {
    (1.0 / eps).ceil() as usize + 1
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Config(format!("eps must be in (0, 1), got {eps}")));
    }
    Ok(())
}

/// Candidate thresholds for one feature from `(value, hessian)` pairs.
/// Zero-weight points are ignored; the result always holds the smallest and
/// largest weighted value.
pub fn propose_candidates(points: &[(f64, f64)], eps: f64) -> Result<Vec<f64>> {
    check_eps(eps)?;
    if let Some(p) = points
        .iter()
        .find(|(x, w)| !x.is_finite() || !(*w >= 0.0 && w.is_finite()))
    {
        return Err(Error::InvalidInput(format!("bad proposal point {p:?}")));
    }
    let mut pts: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.1 > 0.0).collect();
    if pts.is_empty() {
        return Err(Error::InvalidInput(
            "no positive hessian weight to propose from".into(),
        ));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let summary = WeightedQuantileSummary::from_sorted(pts);
    Ok(cuts_from_summary(&summary, eps))
}

pub(crate) fn cuts_from_summary(summary: &WeightedQuantileSummary, eps: f64) -> Vec<f64> {
    summary
        .prune(proposal_budget(eps))
        .expect("budget is positive")
        .entries()
        .iter()
        .map(|e| e.x)
        .collect()
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a * 0.5 + b * 0.5;
    if a < m && m <= b {
        m
    } else {
        b
    }
}

#[derive(Clone, Copy)]
struct Evaluator<'a> {
    params: &'a SplitParams,
    feature: u32,
}

impl Evaluator<'_> {
    #[allow(clippy::too_many_arguments)]
    fn consider(
        &self,
        best: &mut Option<SplitCandidate>,
        threshold: f64,
        default_left: bool,
        gl: f64,
        hl: f64,
        gr: f64,
        hr: f64,
    ) {
        let p = self.params;
        if !(hl >= p.min_child_hessian
            && hr >= p.min_child_hessian
            && hl + p.lambda > 0.0
            && hr + p.lambda > 0.0)
        {
            return;
        }
        let gain = split_gain(gl, hl, gr, hr, p.lambda, p.gamma);
        if !gain.is_finite() {
            return;
        }
        let cand = SplitCandidate {
            feature: self.feature,
            threshold,
            default_left,
            gain,
            grad_left: gl,
            hess_left: hl,
            grad_right: gr,
            hess_right: hr,
        };
        if best.as_ref().is_none_or(|b| cand.better_than(b)) {
            *best = Some(cand);
        }
    }
}

fn reduce(per_feature: Vec<Vec<Option<SplitCandidate>>>, n_nodes: usize) -> Vec<Option<SplitCandidate>> {
    let mut best: Vec<Option<SplitCandidate>> = vec![None; n_nodes];
    for node_bests in per_feature {
        for (b, c) in best.iter_mut().zip(node_bests) {
            if let Some(c) = c {
                if b.as_ref().is_none_or(|cur| c.better_than(cur)) {
                    *b = Some(c);
                }
            }
        }
    }
    best.into_iter()
        .map(|b| b.filter(|c| c.gain > 0.0))
        .collect()
}

#[derive(Clone, Copy, Default)]
struct OpenRun {
    value: f64,
    g: f64,
    h: f64,
    active: bool,
}

struct Run {
    node: u32,
    value: f64,
    g: f64,
    h: f64,
}

/// Two passes over one feature column for every frontier node. The first
/// pass walks values upward sending missing rows right; runs of equal value
/// are summed before joining the left side. The second pass walks the runs
/// downward sending missing rows left, only for nodes with missing rows.
fn scan_feature_exact<C: SortedColumn>(
    col: &C,
    feature: usize,
    positions: &[u32],
    grads: &[GradPair],
    nodes: &[NodeStats],
    params: &SplitParams,
    stats: &ScanStats,
) -> Vec<Option<SplitCandidate>> {
    let k = nodes.len();
    let ev = Evaluator {
        params,
        feature: feature as u32,
    };
    let mut open = vec![OpenRun::default(); k];
    let mut left = vec![(0.0f64, 0.0f64); k];
    let mut present = vec![0usize; k];
    let mut best: Vec<Option<SplitCandidate>> = vec![None; k];
    let mut runs: Vec<Run> = Vec::new();
    let mut visited = 0u64;

    for (r, v) in col.iter() {
        visited += 1;
        let p = positions[r as usize];
        if p == INACTIVE {
            continue;
        }
        let n = p as usize;
        let o = &mut open[n];
        if o.active && o.value != v {
            let (gl, hl) = &mut left[n];
            *gl += o.g;
            *hl += o.h;
            runs.push(Run {
                node: p,
                value: o.value,
                g: o.g,
                h: o.h,
            });
            let node = &nodes[n];
            ev.consider(
                &mut best[n],
                midpoint(o.value, v),
                false,
                *gl,
                *hl,
                node.sum_grad - *gl,
                node.sum_hess - *hl,
            );
            *o = OpenRun::default();
        }
        if !o.active {
            o.value = v;
            o.active = true;
        }
        let gp = grads[r as usize];
        o.g += gp.g;
        o.h += gp.h;
        present[n] += 1;
    }

    let mut any_missing = false;
    for n in 0..k {
        let o = open[n];
        if !o.active {
            continue;
        }
        let (gl, hl) = &mut left[n];
        *gl += o.g;
        *hl += o.h;
        runs.push(Run {
            node: n as u32,
            value: o.value,
            g: o.g,
            h: o.h,
        });
        if present[n] < nodes[n].count {
            any_missing = true;
            let node = &nodes[n];
            // every present value left, the missing rows alone on the right
            ev.consider(
                &mut best[n],
                f64::INFINITY,
                false,
                *gl,
                *hl,
                node.sum_grad - *gl,
                node.sum_hess - *hl,
            );
        }
    }

    if any_missing {
        let mut right = vec![(0.0f64, 0.0f64); k];
        let mut next: Vec<Option<f64>> = vec![None; k];
        for run in runs.iter().rev() {
            let n = run.node as usize;
            if present[n] == nodes[n].count {
                continue;
            }
            visited += 1;
            let (gr, hr) = &mut right[n];
            if let Some(nv) = next[n] {
                let node = &nodes[n];
                ev.consider(
                    &mut best[n],
                    midpoint(run.value, nv),
                    true,
                    node.sum_grad - *gr,
                    node.sum_hess - *hr,
                    *gr,
                    *hr,
                );
            }
            *gr += run.g;
            *hr += run.h;
            next[n] = Some(run.value);
        }
    }
    stats.add(visited);
    best
}

/// Best split per frontier node by exact enumeration over `features`.
pub(crate) fn exact_level<C: ColumnAccess>(
    columns: &C,
    features: &[usize],
    positions: &[u32],
    grads: &[GradPair],
    nodes: &[NodeStats],
    params: &SplitParams,
    stats: &ScanStats,
) -> Vec<Option<SplitCandidate>> {
    let per_feature: Vec<_> = features
        .par_iter()
        .map(|&f| scan_feature_exact(&columns.column(f), f, positions, grads, nodes, params, stats))
        .collect();
    reduce(per_feature, nodes.len())
}

#[derive(Debug, Clone, Copy, Default)]
struct Bin {
    g: f64,
    h: f64,
    n: u32,
}

/// Gradient histograms for one tree level. Bucket `v` of a (node, feature)
/// pair collects present values `x` with `cut[v-1] < x <= cut[v]`; values
/// outside the cut range fall into the first or last bucket.
pub(crate) struct LevelHistogram<'p> {
    features: Vec<usize>,
    proposals: Vec<&'p ProposalSet>,
    offsets: Vec<Vec<usize>>,
    bins: Vec<Vec<Bin>>,
}

impl<'p> LevelHistogram<'p> {
    /// `proposals[node]` holds the cuts used for that frontier node.
    pub(crate) fn new(features: &[usize], proposals: Vec<&'p ProposalSet>) -> Self {
        let mut offsets = Vec::with_capacity(features.len());
        let mut bins = Vec::with_capacity(features.len());
        for &f in features {
            let mut off = Vec::with_capacity(proposals.len());
            let mut total = 0;
            for p in &proposals {
                off.push(total);
                total += p.cuts(f).len();
            }
            offsets.push(off);
            bins.push(vec![Bin::default(); total]);
        }
        Self {
            features: features.to_vec(),
            proposals,
            offsets,
            bins,
        }
    }

    /// Adds one block (or the whole column set) into the histograms.
    pub(crate) fn accumulate<C: ColumnAccess>(
        &mut self,
        columns: &C,
        positions: &[u32],
        grads: &[GradPair],
        stats: &ScanStats,
    ) {
        let proposals = &self.proposals;
        self.bins
            .par_iter_mut()
            .zip(&self.features)
            .zip(&self.offsets)
            .for_each(|((bins, &f), offsets)| {
                let mut cursor = vec![0usize; proposals.len()];
                let mut visited = 0u64;
                for (r, x) in columns.column(f).iter() {
                    visited += 1;
                    let p = positions[r as usize];
                    if p == INACTIVE {
                        continue;
                    }
                    let n = p as usize;
                    let cuts = proposals[n].cuts(f);
                    if cuts.is_empty() {
                        continue;
                    }
                    let c = &mut cursor[n];
                    while *c + 1 < cuts.len() && x > cuts[*c] {
                        *c += 1;
                    }
                    let b = &mut bins[offsets[n] + *c];
                    let gp = grads[r as usize];
                    b.g += gp.g;
                    b.h += gp.h;
                    b.n += 1;
                }
                stats.add(visited);
            });
    }

    /// Evaluates bucket boundaries in both missing directions. A boundary
    /// after bucket `v` becomes the threshold `next_up(cut[v])`, so that
    /// `x < threshold` exactly when `x <= cut[v]`.
    pub(crate) fn best_splits(&self, nodes: &[NodeStats], params: &SplitParams) -> Vec<Option<SplitCandidate>> {
        let per_feature: Vec<_> = (0..self.features.len())
            .into_par_iter()
            .map(|slot| {
                let f = self.features[slot];
                let ev = Evaluator {
                    params,
                    feature: f as u32,
                };
                let mut best: Vec<Option<SplitCandidate>> = vec![None; nodes.len()];
                for (n, node) in nodes.iter().enumerate() {
                    let cuts = self.proposals[n].cuts(f);
                    let off = self.offsets[slot][n];
                    let bins = &self.bins[slot][off..off + cuts.len()];
                    scan_bins(&ev, &mut best[n], node, cuts, bins);
                }
                best
            })
            .collect();
        reduce(per_feature, nodes.len())
    }
}

fn scan_bins(ev: &Evaluator, best: &mut Option<SplitCandidate>, node: &NodeStats, cuts: &[f64], bins: &[Bin]) {
    let present: usize = bins.iter().map(|b| b.n as usize).sum();
    if present == 0 {
        return;
    }
    let (mut gl, mut hl) = (0.0, 0.0);
    let mut last: Option<usize> = None;
    for (v, b) in bins.iter().enumerate() {
        if b.n == 0 {
            continue;
        }
        if let Some(u) = last {
            ev.consider(
                best,
                cuts[u].next_up(),
                false,
                gl,
                hl,
                node.sum_grad - gl,
                node.sum_hess - hl,
            );
        }
        gl += b.g;
        hl += b.h;
        last = Some(v);
    }
    if present == node.count {
        return;
    }
    ev.consider(
        best,
        f64::INFINITY,
        false,
        gl,
        hl,
        node.sum_grad - gl,
        node.sum_hess - hl,
    );
    let (mut gr, mut hr) = (0.0, 0.0);
    let mut seen_right = false;
    for (v, b) in bins.iter().enumerate().rev() {
        if b.n == 0 {
            continue;
        }
        if seen_right {
            ev.consider(
                best,
                cuts[v].next_up(),
                true,
                node.sum_grad - gr,
                node.sum_hess - hr,
                gr,
                hr,
            );
        }
        gr += b.g;
        hr += b.h;
        seen_right = true;
    }
}

/// Collects exact weighted summaries of each (feature, node) pair, block by
/// block, for building proposals. Zero-hessian points are skipped.
pub(crate) struct SketchCollector {
    features: Vec<usize>,
    n_nodes: usize,
    parts: Vec<Vec<Option<WeightedQuantileSummary>>>,
}

impl SketchCollector {
    pub(crate) fn new(features: &[usize], n_nodes: usize) -> Self {
        Self {
            features: features.to_vec(),
            n_nodes,
            parts: vec![vec![None; n_nodes]; features.len()],
        }
    }

    pub(crate) fn accumulate<C: ColumnAccess>(&mut self, columns: &C, positions: &[u32], grads: &[GradPair]) {
        let n_nodes = self.n_nodes;
        self.parts
            .par_iter_mut()
            .zip(&self.features)
            .for_each(|(acc, &f)| {
                let mut points: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n_nodes];
                for (r, x) in columns.column(f).iter() {
                    let p = positions[r as usize];
                    if p == INACTIVE {
                        continue;
                    }
                    let h = grads[r as usize].h;
                    if h > 0.0 {
                        points[p as usize].push((x, h));
                    }
                }
                for (slot, pts) in acc.iter_mut().zip(points) {
                    if pts.is_empty() {
                        continue;
                    }
                    let s = WeightedQuantileSummary::from_sorted(pts);
                    *slot = Some(match slot.take() {
                        Some(prev) => prev.merge(&s),
                        None => s,
                    });
                }
            });
    }

    /// One proposal set per node, pruned to the budget for `eps`.
    pub(crate) fn finish(self, eps: f64, n_features: usize) -> Vec<ProposalSet> {
        let mut out = vec![
            ProposalSet {
                cuts: vec![Vec::new(); n_features]
            };
            self.n_nodes
        ];
        let cut_lists: Vec<Vec<Vec<f64>>> = self
            .parts
            .into_par_iter()
            .map(|per_node| {
                per_node
                    .into_iter()
                    .map(|s| s.map_or_else(Vec::new, |s| cuts_from_summary(&s, eps)))
                    .collect()
            })
            .collect();
        for (&f, per_node) in self.features.iter().zip(cut_lists) {
            for (n, cuts) in per_node.into_iter().enumerate() {
                out[n].cuts[f] = cuts;
            }
        }
        out
    }
}

fn single_node(grads: &[GradPair], rows: &[u32]) -> (Vec<u32>, NodeStats) {
    let mut positions = vec![INACTIVE; grads.len()];
    for &r in rows {
        positions[r as usize] = 0;
    }
    (positions, NodeStats::from_rows(grads, rows))
}

/// Exact greedy search for the node holding `rows`. Handles missing values
/// by learning a default direction.
pub fn exact_greedy<C: ColumnAccess>(
    grads: &[GradPair],
    rows: &[u32],
    columns: &C,
    params: &SplitParams,
) -> Option<SplitCandidate> {
    sparsity_aware_split(grads, rows, columns, params, &ScanStats::default())
}

/// Exact search that touches only present entries: each feature costs
/// `O(present entries)`, independent of the node size.
pub fn sparsity_aware_split<C: ColumnAccess>(
    grads: &[GradPair],
    rows: &[u32],
    columns: &C,
    params: &SplitParams,
    stats: &ScanStats,
) -> Option<SplitCandidate> {
    let (positions, node) = single_node(grads, rows);
    let features: Vec<usize> = (0..columns.n_features()).collect();
    exact_level(columns, &features, &positions, grads, &[node], params, stats)[0]
}

/// Bucketed search for the node holding `rows` using fixed proposals.
pub fn histogram_split<C: ColumnAccess>(
    grads: &[GradPair],
    rows: &[u32],
    proposals: &ProposalSet,
    columns: &C,
    params: &SplitParams,
) -> Option<SplitCandidate> {
    let (positions, node) = single_node(grads, rows);
    let features: Vec<usize> = (0..columns.n_features()).collect();
    let mut hist = LevelHistogram::new(&features, vec![proposals]);
    hist.accumulate(columns, &positions, grads, &ScanStats::default());
    hist.best_splits(&[node], params)[0]
}

/// Baseline without sparsity awareness: missing values are read as 0.0 and
/// every row of the node is enumerated for every feature.
pub fn dense_scan_split<C: ColumnAccess>(
    grads: &[GradPair],
    rows: &[u32],
    columns: &C,
    params: &SplitParams,
    stats: &ScanStats,
) -> Option<SplitCandidate> {
    let (positions, node) = single_node(grads, rows);
    let per_feature: Vec<_> = (0..columns.n_features())
        .into_par_iter()
        .map_init(
            || vec![false; grads.len()],
            |mark, f| {
                let col = columns.column(f);
                let ev = Evaluator {
                    params,
                    feature: f as u32,
                };
                let mut visited = 0u64;
                let entries: Vec<(u32, f64)> = col
                    .iter()
                    .filter(|&(r, _)| positions[r as usize] != INACTIVE)
                    .collect();
                for &(r, _) in &entries {
                    mark[r as usize] = true;
                    visited += 1;
                }
                let mut best = None;
                let (mut gl, mut hl) = (0.0, 0.0);
                let mut open: Option<(f64, f64, f64)> = None;
                let mut feed = |v: f64, gp: GradPair| {
                    visited += 1;
                    if let Some((ov, og, oh)) = open {
                        if ov != v {
                            gl += og;
                            hl += oh;
                            ev.consider(
                                &mut best,
                                midpoint(ov, v),
                                false,
                                gl,
                                hl,
                                node.sum_grad - gl,
                                node.sum_hess - hl,
                            );
                            open = None;
                        }
                    }
                    let o = open.get_or_insert((v, 0.0, 0.0));
                    o.1 += gp.g;
                    o.2 += gp.h;
                };
                let split_at = entries.partition_point(|&(_, v)| v < 0.0);
                for &(r, v) in &entries[..split_at] {
                    feed(v, grads[r as usize]);
                }
                for &r in rows {
                    if !mark[r as usize] {
                        feed(0.0, grads[r as usize]);
                    }
                }
                for &(r, v) in &entries[split_at..] {
                    feed(v, grads[r as usize]);
                }
                for &(r, _) in &entries {
                    mark[r as usize] = false;
                }
                stats.add(visited);
                best
            },
        )
        .map(|b| vec![b])
        .collect();
    reduce(per_feature, 1)[0]
}
