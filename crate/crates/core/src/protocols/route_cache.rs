//! DSR path cache.

use std::collections::{BTreeSet, VecDeque};

use crate::engine::SimTime;
use crate::NodeId;

pub fn is_loop_free(path: &[NodeId]) -> bool {
    path.iter().enumerate().all(|(i, n)| !path[..i].contains(n))
}

fn has_link(path: &[NodeId], a: NodeId, b: NodeId) -> bool {
    path.windows(2).any(|w| (w[0] == a && w[1] == b) || (w[0] == b && w[1] == a))
}

/// Bounded FIFO cache of loop-free paths that all start at the owner.
#[derive(Debug, Clone)]
pub struct RouteCache {
    owner: NodeId,
    capacity: usize,
    entries: VecDeque<(SimTime, Vec<NodeId>)>,
    evictions: u64,
}

impl RouteCache {
    pub fn new(owner: NodeId, capacity: usize) -> Self {
        RouteCache {
            owner,
            capacity: capacity.max(1),
            entries: VecDeque::new(),
            evictions: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn evictions(&self) -> u64 {
        self.evictions
    }

    pub fn paths(&self) -> impl Iterator<Item = &[NodeId]> {
        self.entries.iter().map(|(_, p)| p.as_slice())
    }

    fn insert(&mut self, now: SimTime, path: Vec<NodeId>) -> bool {
        if path.len() < 2 || path[0] != self.owner || !is_loop_free(&path) {
            return false;
        }
        if self.entries.iter().any(|(_, p)| *p == path) {
            return false;
        }
        if self.entries.len() >= self.capacity {
            self.entries.pop_front();
            self.evictions += 1;
        }
        self.entries.push_back((now, path));
        true
    }

    /// Learns the owner-rooted routes contained in a loop-free `path`
    /// through the owner, in both directions. Returns whether anything new
    /// was stored.
    pub fn learn(&mut self, now: SimTime, path: &[NodeId]) -> bool {
        let Some(i) = path.iter().position(|&n| n == self.owner) else {
            return false;
        };
        if !is_loop_free(path) {
            return false;
        }
        let forward = path[i..].to_vec();
        let backward: Vec<NodeId> = path[..=i].iter().rev().copied().collect();
        let a = self.insert(now, forward);
        let b = self.insert(now, backward);
        a || b
    }

    /// Learns from a path overheard from neighbor `via`, which need not
    /// include the owner.
    pub fn learn_via(&mut self, now: SimTime, via: NodeId, path: &[NodeId]) -> bool {
        if path.contains(&self.owner) {
            return self.learn(now, path);
        }
        let Some(k) = path.iter().position(|&n| n == via) else {
            return false;
        };
        let mut forward = vec![self.owner];
        forward.extend_from_slice(&path[k..]);
        let mut backward = vec![self.owner];
        backward.extend(path[..=k].iter().rev());
        let a = self.insert(now, forward);
        let b = self.insert(now, backward);
        a || b
    }

    /// Shortest cached route from the owner to `dst`.
    pub fn lookup(&self, dst: NodeId) -> Option<Vec<NodeId>> {
        self.entries
            .iter()
            .filter_map(|(_, p)| p.iter().position(|&n| n == dst).map(|i| &p[..=i]))
            .min_by_key(|r| r.len())
            .map(<[NodeId]>::to_vec)
    }

    /// Truncates every route at the link `a`-`b`, dropping routes left
    /// without a hop. Returns the number of routes changed.
    pub fn purge_link(&mut self, a: NodeId, b: NodeId) -> usize {
        let mut changed = 0;
        for (_, path) in self.entries.iter_mut() {
            if let Some(i) = path
                .windows(2)
                .position(|w| (w[0] == a && w[1] == b) || (w[0] == b && w[1] == a))
            {
                path.truncate(i + 1);
                changed += 1;
            }
        }
        if changed == 0 {
            return 0;
        }
        self.entries.retain(|(_, p)| p.len() >= 2);
        // Truncation can create duplicates; keep the first of each.
        let mut seen = BTreeSet::new();
        self.entries.retain(|(_, p)| seen.insert(p.clone()));
        changed
    }

    pub fn contains_link(&self, a: NodeId, b: NodeId) -> bool {
        self.entries.iter().any(|(_, p)| has_link(p, a, b))
    }
}
