//! Prefetching block reader.
//!
//! One loader thread per spill directory reads and decodes the blocks that live
//! in that directory, in plan order, into a bounded channel. The consumer pulls
//! from the channels alternately, following the plan. A ticket budget keeps
//! the number of decoded blocks alive (queued, held by the consumer, or being
//! loaded) at or below `memory_budget_blocks`: the loader for plan position
//! `p` waits until `p < released + budget`.
//!
//! Consumers must drop each block before asking for one more than the budget
//! allows, otherwise the loaders wait forever.

use std::ops::Deref;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;

use crate::block_store::{read_block_file, ColumnBlock, SpilledBlocks};
use crate::error::Result;

#[derive(Debug, Default)]
struct BudgetState {
    released: usize,
    cancelled: bool,
}

#[derive(Debug)]
struct Budget {
    limit: usize,
    state: Mutex<BudgetState>,
    cv: Condvar,
    resident: AtomicUsize,
    peak: AtomicUsize,
}

impl Budget {
    fn new(limit: usize) -> Self {
        Self {
            limit,
            state: Mutex::new(BudgetState::default()),
            cv: Condvar::new(),
            resident: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    /// Blocks until plan position `pos` may be loaded; false if cancelled.
    fn acquire(&self, pos: usize) -> bool {
        let mut st = self.state.lock().unwrap();
        while !st.cancelled && pos >= st.released + self.limit {
            st = self.cv.wait(st).unwrap();
        }
        if st.cancelled {
            return false;
        }
        let now = self.resident.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        true
    }

    fn release(&self) {
        self.resident.fetch_sub(1, Ordering::SeqCst);
        self.state.lock().unwrap().released += 1;
        self.cv.notify_all();
    }

    fn cancel(&self) {
        self.state.lock().unwrap().cancelled = true;
        self.cv.notify_all();
    }
}

/// A decoded block; spilled blocks return their budget slot on drop.
#[derive(Debug)]
pub struct BlockHandle {
    block: Arc<ColumnBlock>,
    budget: Option<Arc<Budget>>,
}

impl Deref for BlockHandle {
    type Target = ColumnBlock;

    fn deref(&self) -> &ColumnBlock {
        &self.block
    }
}

impl Drop for BlockHandle {
    fn drop(&mut self) {
        if let Some(b) = &self.budget {
            b.release();
        }
    }
}

type Loaded = (usize, Result<ColumnBlock>);

#[derive(Debug)]
pub struct BlockStream {
    source: Source,
    next: usize,
    len: usize,
}

#[derive(Debug)]
enum Source {
    Memory(Vec<Arc<ColumnBlock>>),
    Disk {
        dir_of: Vec<usize>,
        receivers: Vec<Receiver<Loaded>>,
        workers: Vec<JoinHandle<()>>,
        budget: Arc<Budget>,
        failed: bool,
    },
}

impl BlockStream {
    pub(crate) fn in_memory(blocks: Vec<Arc<ColumnBlock>>) -> Self {
        let len = blocks.len();
        Self {
            source: Source::Memory(blocks),
            next: 0,
            len,
        }
    }

    pub(crate) fn spilled(store: &SpilledBlocks, plan: &[usize]) -> Self {
        let budget = Arc::new(Budget::new(store.budget));
        let n_dirs = store.n_dirs;
        let dir_of: Vec<usize> = plan.iter().map(|&b| b % n_dirs).collect();
        let mut receivers = Vec::with_capacity(n_dirs);
        let mut workers = Vec::with_capacity(n_dirs);
        for dir in 0..n_dirs {
            let jobs: Vec<(usize, u64, PathBuf)> = plan
                .iter()
                .enumerate()
                .filter(|(_, &b)| b % n_dirs == dir)
                .map(|(pos, &b)| (pos, b as u64, store.paths[b].clone()))
                .collect();
            let (tx, rx) = sync_channel(store.budget);
            receivers.push(rx);
            let budget = budget.clone();
            workers.push(std::thread::spawn(move || load_worker(jobs, tx, budget)));
        }
        Self {
            source: Source::Disk {
                dir_of,
                receivers,
                workers,
                budget,
                failed: false,
            },
            next: 0,
            len: plan.len(),
        }
    }

    /// Highest number of decoded blocks alive at once so far.
    pub fn peak_resident(&self) -> usize {
        match &self.source {
            Source::Memory(_) => 0,
            Source::Disk { budget, .. } => budget.peak.load(Ordering::SeqCst),
        }
    }
}

fn load_worker(jobs: Vec<(usize, u64, PathBuf)>, tx: SyncSender<Loaded>, budget: Arc<Budget>) {
    for (pos, id, path) in jobs {
        if !budget.acquire(pos) {
            return;
        }
        let loaded = read_block_file(id, &path);
        let failed = loaded.is_err();
        if tx.send((pos, loaded)).is_err() || failed {
            return;
        }
    }
}

impl Iterator for BlockStream {
    type Item = Result<BlockHandle>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.len {
            return None;
        }
        let pos = self.next;
        self.next += 1;
        match &mut self.source {
            Source::Memory(blocks) => Some(Ok(BlockHandle {
                block: blocks[pos].clone(),
                budget: None,
            })),
            Source::Disk {
                dir_of,
                receivers,
                budget,
                failed,
                ..
            } => {
                if *failed {
                    return None;
                }
                let Ok((got, loaded)) = receivers[dir_of[pos]].recv() else {
                    *failed = true;
                    return None;
                };
                debug_assert_eq!(got, pos);
                match loaded {
                    Ok(block) => Some(Ok(BlockHandle {
                        block: Arc::new(block),
                        budget: Some(budget.clone()),
                    })),
                    Err(e) => {
                        budget.release();
                        *failed = true;
                        Some(Err(e))
                    }
                }
            }
        }
    }
}

impl Drop for BlockStream {
    fn drop(&mut self) {
        if let Source::Disk {
            receivers,
            workers,
            budget,
            ..
        } = &mut self.source
        {
            budget.cancel();
            receivers.clear();
            for w in workers.drain(..) {
                let _ = w.join();
            }
        }
    }
}
