//! Weighted quantile summary with mergeable, prunable ε guarantees.
//!
//! A summary stores a sorted subset of positions, each with a lower rank bound
//! `rmin` (weight strictly below), an upper rank bound `rmax` (weight at or
//! below) and a lower bound `w` on the weight sitting exactly at the position.
//! Merging keeps the approximation error at `max(ε₁, ε₂)`; pruning to budget
//! `b` keeps at most `b + 1` entries and adds `1/b` to the error.
//!
//! All rank arithmetic is `f64`; the validator allows a relative slack of
//! [`RANK_SLACK`] times the total weight.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Relative float slack used by every `≤` check on rank fields.
pub const RANK_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPoint {
    pub x: f64,
    pub w: f64,
}

impl WeightedPoint {
    pub fn new(x: f64, w: f64) -> Self {
        Self { x, w }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryEntry {
    pub x: f64,
    pub rmin: f64,
    pub rmax: f64,
    pub w: f64,
}

impl SummaryEntry {
    pub fn new(x: f64, rmin: f64, rmax: f64, w: f64) -> Self {
        Self { x, rmin, rmax, w }
    }

    fn twice_mid(&self) -> f64 {
        self.rmin + self.rmax
    }
}

/// Rank bounds of an arbitrary position under the extended functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankBand {
    pub rmin: f64,
    pub rmax: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedQuantileSummary {
    entries: Vec<SummaryEntry>,
    total_weight: f64,
    eps: f64,
}

impl WeightedQuantileSummary {
    /// Exact (0-approximate) summary of a weighted multiset.
    pub fn from_points(points: &[WeightedPoint]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("summary of an empty multiset".into()));
        }
        if let Some(p) = points
            .iter()
            .find(|p| !(p.w > 0.0 && p.w.is_finite()) || !p.x.is_finite())
        {
            return Err(Error::InvalidInput(format!(
                "summary points need finite x and positive weight, got {p:?}"
            )));
        }
        let mut sorted = points.to_vec();
        sorted.sort_by(|a, b| a.x.total_cmp(&b.x));
        Ok(Self::from_sorted(sorted.iter().map(|p| (p.x, p.w))))
    }

    /// Exact summary of points already ordered by position. Callers guarantee
    /// a nonempty, ascending sequence with positive weights.
    pub(crate) fn from_sorted(points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut entries: Vec<SummaryEntry> = Vec::new();
        let mut cum = 0.0;
        let mut pending: Option<(f64, f64)> = None;
        for (x, w) in points {
            match &mut pending {
                Some((px, pw)) if *px == x => *pw += w,
                _ => {
                    if let Some((px, pw)) = pending.take() {
                        let rmin = cum;
                        cum += pw;
                        entries.push(SummaryEntry::new(px, rmin, cum, pw));
                    }
                    pending = Some((x, w));
                }
            }
        }
        if let Some((px, pw)) = pending {
            let rmin = cum;
            cum += pw;
            entries.push(SummaryEntry::new(px, rmin, cum, pw));
        }
        debug_assert!(!entries.is_empty());
        Self {
            entries,
            total_weight: cum,
            eps: 0.0,
        }
    }

    /// Wraps raw entries after checking every summary invariant against `eps`.
    pub fn from_entries(entries: Vec<SummaryEntry>, eps: f64) -> Result<Self> {
        let total_weight = entries.last().map_or(0.0, |e| e.rmax);
        let s = Self {
            entries,
            total_weight,
            eps,
        };
        s.validate().map_err(Error::InvalidInput)?;
        Ok(s)
    }

    pub fn entries(&self) -> &[SummaryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// The tracked approximation bound.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn min(&self) -> f64 {
        self.entries[0].x
    }

    pub fn max(&self) -> f64 {
        self.entries[self.entries.len() - 1].x
    }

    /// Rank bounds of any position, interpolated between stored entries.
    pub fn extended_ranks(&self, y: f64) -> RankBand {
        let j = self.entries.partition_point(|e| e.x < y);
        self.band_at(j, y)
    }

    /// `j` must be the first index whose position is `>= y`.
    fn band_at(&self, j: usize, y: f64) -> RankBand {
        let e = &self.entries;
        if j < e.len() && e[j].x == y {
            return RankBand {
                rmin: e[j].rmin,
                rmax: e[j].rmax,
                w: e[j].w,
            };
        }
        if j == 0 {
            return RankBand {
                rmin: 0.0,
                rmax: 0.0,
                w: 0.0,
            };
        }
        if j == e.len() {
            let top = e[j - 1].rmax;
            return RankBand {
                rmin: top,
                rmax: top,
                w: 0.0,
            };
        }
        RankBand {
            rmin: e[j - 1].rmin + e[j - 1].w,
            rmax: e[j].rmax - e[j].w,
            w: 0.0,
        }
    }

    /// Combines summaries of two multisets into a summary of their union.
    pub fn merge(&self, other: &Self) -> Self {
        let (a, b) = (&self.entries, &other.entries);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            let x = match (a.get(i), b.get(j)) {
                (Some(ea), Some(eb)) => ea.x.min(eb.x),
                (Some(ea), None) => ea.x,
                (None, Some(eb)) => eb.x,
                (None, None) => unreachable!(),
            };
            let ra = self.band_at(i, x);
            let rb = other.band_at(j, x);
            out.push(SummaryEntry::new(
                x,
                ra.rmin + rb.rmin,
                ra.rmax + rb.rmax,
                ra.w + rb.w,
            ));
            if a.get(i).is_some_and(|e| e.x == x) {
                i += 1;
            }
            if b.get(j).is_some_and(|e| e.x == x) {
                j += 1;
            }
        }
        Self {
            entries: out,
            total_weight: self.total_weight + other.total_weight,
            eps: self.eps.max(other.eps),
        }
    }

    /// Returns a stored position whose rank is close to `d`.
    pub fn query(&self, d: f64) -> Result<f64> {
        if !(d >= 0.0 && d <= self.total_weight) {
            return Err(Error::InvalidInput(format!(
                "query rank {d} outside [0, {}]",
                self.total_weight
            )));
        }
        Ok(self.entries[self.query_index(d)].x)
    }

    fn query_index(&self, d: f64) -> usize {
        let e = &self.entries;
        let k = e.len();
        let d2 = 2.0 * d;
        if d2 < e[0].twice_mid() {
            return 0;
        }
        if d2 >= e[k - 1].twice_mid() {
            return k - 1;
        }
        // largest i with mid_i <= d; ties on a midpoint land in the higher interval
        let i = e
            .partition_point(|en| en.twice_mid() <= d2)
            .saturating_sub(1)
            .min(k - 2);
        if d2 < e[i].rmin + e[i].w + e[i + 1].rmax - e[i + 1].w {
            i
        } else {
            i + 1
        }
    }

    /// Keeps at most `b + 1` entries chosen by querying ranks `i/b · ω`.
    pub fn prune(&self, b: usize) -> Result<Self> {
        if b == 0 {
            return Err(Error::InvalidInput("prune budget must be >= 1".into()));
        }
        let mut picks: Vec<usize> = (0..=b)
            .map(|i| {
                let d = if i == b {
                    self.total_weight
                } else {
                    (i as f64 / b as f64) * self.total_weight
                };
                self.query_index(d)
            })
            .collect();
        picks.sort_unstable();
        picks.dedup();
        Ok(Self {
            entries: picks.into_iter().map(|i| self.entries[i]).collect(),
            total_weight: self.total_weight,
            eps: self.eps + 1.0 / b as f64,
        })
    }

    /// The smallest ε for which the stored entries satisfy the point and
    /// adjacent-gap conditions, i.e. the summary's actual error.
    pub fn measured_eps(&self) -> f64 {
        if self.total_weight <= 0.0 {
            return 0.0;
        }
        let e = &self.entries;
        let mut worst: f64 = 0.0;
        for (k, cur) in e.iter().enumerate() {
            worst = worst.max(cur.rmax - cur.rmin - cur.w);
            if let Some(next) = e.get(k + 1) {
                worst = worst.max(next.rmax - cur.rmin - next.w - cur.w);
            }
        }
        worst / self.total_weight
    }

    /// Checks every structural invariant; returns a description of the first
    /// violation.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let e = &self.entries;
        if e.is_empty() {
            return Err("summary has no entries".into());
        }
        let slack = RANK_SLACK * self.total_weight.max(f64::MIN_POSITIVE);
        let first = &e[0];
        if first.rmin.abs() > slack || (first.w - first.rmax).abs() > slack {
            return Err(format!("minimum entry not exact: {first:?}"));
        }
        let last = &e[e.len() - 1];
        if (last.rmax - self.total_weight).abs() > slack {
            return Err(format!(
                "maximum entry rmax {} != total weight {}",
                last.rmax, self.total_weight
            ));
        }
        let bound = self.eps * self.total_weight + slack;
        for (k, cur) in e.iter().enumerate() {
            if !cur.x.is_finite() || cur.rmin < -slack || cur.w < 0.0 {
                return Err(format!("entry {k} out of domain: {cur:?}"));
            }
            if cur.rmin + cur.w > cur.rmax + slack {
                return Err(format!("entry {k}: rmin + w > rmax ({cur:?})"));
            }
            if cur.rmax - cur.rmin - cur.w > bound {
                return Err(format!("entry {k}: band exceeds eps ({cur:?})"));
            }
            if let Some(next) = e.get(k + 1) {
                if !(cur.x < next.x) {
                    return Err(format!("entries {k},{} not strictly increasing", k + 1));
                }
                if cur.rmin + cur.w > next.rmin + slack {
                    return Err(format!("entries {k},{}: rmin ordering broken", k + 1));
                }
                if cur.rmax > next.rmax - next.w + slack {
                    return Err(format!("entries {k},{}: rmax ordering broken", k + 1));
                }
                if next.rmax - cur.rmin - next.w - cur.w > bound {
                    return Err(format!("entries {k},{}: gap exceeds eps", k + 1));
                }
            }
        }
        Ok(())
    }

    /// One line per entry: `x rmin rmax w`. For fixtures and debugging only.
    pub fn to_debug_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let _ = writeln!(s, "{} {} {} {}", e.x, e.rmin, e.rmax, e.w);
        }
        s
    }

    pub fn from_debug_text(text: &str, eps: f64) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<f64> = line
                .split_ascii_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(lineno + 1, "expected four numbers"))?;
            let [x, rmin, rmax, w] = fields[..] else {
                return Err(Error::parse(lineno + 1, "expected four numbers"));
            };
            entries.push(SummaryEntry::new(x, rmin, rmax, w));
        }
        Self::from_entries(entries, eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts(v: &[(f64, f64)]) -> Vec<WeightedPoint> {
        v.iter().map(|&(x, w)| WeightedPoint::new(x, w)).collect()
    }

    fn summary(v: &[(f64, f64)]) -> WeightedQuantileSummary {
        WeightedQuantileSummary::from_points(&pts(v)).unwrap()
    }

    /// O(n) per query rank oracle: (r⁻, r⁺, w_D) of `y`.
    fn true_ranks(points: &[WeightedPoint], y: f64) -> (f64, f64, f64) {
        let below: f64 = points.iter().filter(|p| p.x < y).map(|p| p.w).sum();
        let at: f64 = points.iter().filter(|p| p.x == y).map(|p| p.w).sum();
        (below, below + at, at)
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize, distinct: u32) -> Vec<WeightedPoint> {
        (0..n)
            .map(|_| {
                WeightedPoint::new(
                    f64::from(rng.gen_range(0..distinct)) * 0.5,
                    rng.gen_range(0.01..5.0),
                )
            })
            .collect()
    }

    fn close(a: f64, b: f64, scale: f64) -> bool {
        (a - b).abs() <= 1e-12 * scale.max(1.0)
    }

    #[test]
    fn singleton() {
        let s = summary(&[(5.0, 2.0)]);
        assert_eq!(s.entries(), &[SummaryEntry::new(5.0, 0.0, 2.0, 2.0)]);
        assert_eq!(s.total_weight(), 2.0);
        assert_eq!(s.eps(), 0.0);
    }

    #[test]
    fn duplicates_merge_weights() {
        let s = summary(&[(1.0, 1.0), (1.0, 1.0), (2.0, 1.0)]);
        assert_eq!(
            s.entries(),
            &[
                SummaryEntry::new(1.0, 0.0, 2.0, 2.0),
                SummaryEntry::new(2.0, 2.0, 3.0, 1.0)
            ]
        );
    }

    #[test]
    fn construction_errors() {
        assert!(WeightedQuantileSummary::from_points(&[]).is_err());
        assert!(WeightedQuantileSummary::from_points(&pts(&[(1.0, 0.0)])).is_err());
        assert!(WeightedQuantileSummary::from_points(&pts(&[(1.0, -1.0)])).is_err());
        assert!(WeightedQuantileSummary::from_points(&pts(&[(f64::NAN, 1.0)])).is_err());
    }

    #[test]
    fn exact_ranks_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let n = rng.gen_range(1..=50);
            let p = random_points(&mut rng, n, 20);
            let s = WeightedQuantileSummary::from_points(&p).unwrap();
            s.validate().unwrap();
            let total: f64 = p.iter().map(|q| q.w).sum();
            for e in s.entries() {
                let (lo, hi, at) = true_ranks(&p, e.x);
                assert!(close(e.rmin, lo, total), "{e:?} vs {lo}");
                assert!(close(e.rmax, hi, total));
                assert!(close(e.w, at, total));
            }
        }
    }

    #[test]
    fn extended_outside_range() {
        let s = summary(&[(1.0, 1.0), (3.0, 2.0)]);
        let below = s.extended_ranks(0.0);
        assert_eq!((below.rmin, below.rmax, below.w), (0.0, 0.0, 0.0));
        let above = s.extended_ranks(9.0);
        assert_eq!((above.rmin, above.rmax, above.w), (3.0, 3.0, 0.0));
        let mid = s.extended_ranks(2.0);
        assert_eq!((mid.rmin, mid.rmax, mid.w), (1.0, 1.0, 0.0));
    }

    #[test]
    fn extended_band_contains_true_ranks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let n = rng.gen_range(1..=40);
            let p = random_points(&mut rng, n, 15);
            let s = WeightedQuantileSummary::from_points(&p).unwrap();
            let y = rng.gen_range(-1.0..8.0);
            let band = s.extended_ranks(y);
            let (lo, hi, at) = true_ranks(&p, y);
            let t = s.total_weight();
            assert!(band.rmin <= lo + 1e-12 * t);
            assert!(band.rmax >= hi - 1e-12 * t);
            assert!(band.w <= at + 1e-12 * t);
        }
    }

    #[test]
    fn merge_disjoint_singletons() {
        let m = summary(&[(1.0, 1.0)]).merge(&summary(&[(2.0, 1.0)]));
        assert_eq!(
            m.entries(),
            &[
                SummaryEntry::new(1.0, 0.0, 1.0, 1.0),
                SummaryEntry::new(2.0, 1.0, 2.0, 1.0)
            ]
        );
        assert_eq!(m.total_weight(), 2.0);
        assert_eq!(m.eps(), 0.0);
    }

    #[test]
    fn merge_with_self_doubles() {
        let s = summary(&[(1.0, 1.0), (2.0, 3.0), (4.0, 0.5)]);
        let m = s.merge(&s);
        for (a, b) in m.entries().iter().zip(s.entries()) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.rmin, 2.0 * b.rmin);
            assert_eq!(a.rmax, 2.0 * b.rmax);
            assert_eq!(a.w, 2.0 * b.w);
        }
    }

    #[test]
    fn merge_equals_union_summary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let na = rng.gen_range(1..30);
            let a = random_points(&mut rng, na, 25);
            let nb = rng.gen_range(1..30);
            let b = random_points(&mut rng, nb, 25);
            let merged = WeightedQuantileSummary::from_points(&a)
                .unwrap()
                .merge(&WeightedQuantileSummary::from_points(&b).unwrap());
            let union: Vec<_> = a.iter().chain(&b).copied().collect();
            let direct = WeightedQuantileSummary::from_points(&union).unwrap();
            assert_eq!(merged.len(), direct.len());
            let t = direct.total_weight();
            assert!(close(merged.total_weight(), t, t));
            for (m, d) in merged.entries().iter().zip(direct.entries()) {
                assert_eq!(m.x, d.x);
                assert!(close(m.rmin, d.rmin, t));
                assert!(close(m.rmax, d.rmax, t));
                assert!(close(m.w, d.w, t));
            }
            merged.validate().unwrap();
        }
    }

    #[test]
    fn query_endpoints() {
        let s = summary(&[(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)]);
        assert_eq!(s.query(0.0).unwrap(), 1.0);
        assert_eq!(s.query(3.0).unwrap(), 3.0);
        assert!(s.query(-0.1).is_err());
        assert!(s.query(3.1).is_err());
        assert!(s.query(f64::NAN).is_err());
        let single = summary(&[(7.0, 2.0)]);
        for d in [0.0, 0.5, 1.0, 2.0] {
            assert_eq!(single.query(d).unwrap(), 7.0);
        }
    }

    #[test]
    fn query_midpoint_tie_goes_up() {
        // midpoints at 0.5, 1.5, 2.5; d = 1.5 lands in interval [x2, x3)
        let s = summary(&[(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)]);
        // 2d = 3 < rmin2 + w2 + rmax3 - w3 = 1 + 1 + 3 - 1 = 4
        assert_eq!(s.query(1.5).unwrap(), 2.0);
    }

    fn query_within_guarantee(s: &WeightedQuantileSummary, d: f64) -> bool {
        let x = s.query(d).unwrap();
        let band = s.extended_ranks(x);
        let half = 0.5 * s.eps() * s.total_weight();
        let slack = 1e-12 * s.total_weight();
        d >= band.rmax - band.w - half - slack && d <= band.rmin + band.w + half + slack
    }

    #[test]
    fn query_guarantee_on_pruned_and_merged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..2000 {
            let a = WeightedQuantileSummary::from_points(&random_points(&mut rng, 60, 200))
                .unwrap()
                .prune(rng.gen_range(1..12))
                .unwrap();
            let b = WeightedQuantileSummary::from_points(&random_points(&mut rng, 60, 200))
                .unwrap()
                .prune(rng.gen_range(1..12))
                .unwrap();
            let m = a.merge(&b);
            for s in [&a, &b, &m] {
                for _ in 0..20 {
                    let d = rng.gen_range(0.0..=s.total_weight());
                    assert!(query_within_guarantee(s, d));
                }
                assert!(query_within_guarantee(s, 0.0));
                assert!(query_within_guarantee(s, s.total_weight()));
            }
        }
    }

    #[test]
    fn prune_to_one_keeps_endpoints() {
        let s = summary(&[(1.0, 1.0), (2.0, 1.0), (3.0, 4.0), (9.0, 1.0)]);
        let p = s.prune(1).unwrap();
        assert_eq!(p.entries().iter().map(|e| e.x).collect::<Vec<_>>(), vec![1.0, 9.0]);
        assert_eq!(p.eps(), 1.0);
        p.validate().unwrap();
        assert!(s.prune(0).is_err());
    }

    #[test]
    fn prune_with_large_budget_is_subset() {
        let s = summary(&[(1.0, 1.0), (2.0, 1.0), (3.0, 4.0), (9.0, 1.0)]);
        let p = s.prune(10).unwrap();
        assert!(p.len() <= s.len());
        for e in p.entries() {
            assert!(s.entries().contains(e));
        }
        p.validate().unwrap();
    }

    #[test]
    fn prune_rank_error_bounded_exhaustively() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p: Vec<WeightedPoint> = (0..10_000)
            .map(|_| WeightedPoint::new(rng.gen_range(0..3000) as f64, rng.gen_range(0.1..3.0)))
            .collect();
        let exact = WeightedQuantileSummary::from_points(&p).unwrap();
        let pruned = exact.prune(100).unwrap();
        assert!(pruned.len() <= 101);
        pruned.validate().unwrap();
        let t = exact.total_weight();
        // every distinct value: band width beyond its true rank never exceeds ω/b
        for e in exact.entries() {
            let band = pruned.extended_ranks(e.x);
            let width = band.rmax - band.rmin - band.w;
            assert!(width <= t / 100.0 + 1e-12 * t, "{} {}", width, t / 100.0);
            assert!(band.rmin <= e.rmin + 1e-12 * t);
            assert!(band.rmax >= e.rmax - 1e-12 * t);
        }
    }

    #[test]
    fn debug_text_round_trip() {
        let s = summary(&[(1.5, 1.0), (2.25, 0.125), (-3.0, 4.0)]);
        let text = s.to_debug_text();
        assert_eq!(text.lines().count(), 3);
        let back = WeightedQuantileSummary::from_debug_text(&text, 0.0).unwrap();
        assert_eq!(back, s);
        assert!(WeightedQuantileSummary::from_debug_text("1 0 1\n", 0.0).is_err());
    }
}
