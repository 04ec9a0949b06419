//! Exact nearest-neighbor search over datastore keys.
//!
//! `GroupedIndex` collapses entries with bit-identical keys into one group.
//! Context keys depend only on the multiset of the last few tokens, so real
//! datastores have far fewer distinct keys than entries. A query computes one
//! distance per group and expands groups back into entries, which gives the
//! same answer as scanning every entry.

use std::collections::HashMap;

/// A retrieved entry. Ordering is by distance, then insertion index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub distance: f64,
    pub index: usize,
    pub value: u32,
}

/// Squared Euclidean distance accumulated in f64, in dimension order.
#[inline]
pub fn squared_l2(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let d = *x as f64 - *y as f64;
        acc += d * d;
    }
    acc
}

fn cmp_neighbor(a: &Neighbor, b: &Neighbor) -> std::cmp::Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then_with(|| a.index.cmp(&b.index))
}

/// Exhaustive scan over every entry.
pub fn flat_search(keys: &[f32], values: &[u32], dim: usize, query: &[f32], k: usize) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = values
        .iter()
        .enumerate()
        .map(|(i, &value)| Neighbor {
            distance: squared_l2(&keys[i * dim..(i + 1) * dim], query),
            index: i,
            value,
        })
        .collect();
    if k < all.len() {
        all.select_nth_unstable_by(k, cmp_neighbor);
        all.truncate(k);
    }
    all.sort_unstable_by(cmp_neighbor);
    all
}

#[derive(Debug, Clone, Default)]
pub struct GroupedIndex {
    dim: usize,
    keys: Vec<f32>,
    /// Entry indices per group, ascending.
    members: Vec<Vec<u32>>,
    lookup: HashMap<Vec<u32>, u32>,
}

impl GroupedIndex {
    pub fn new(dim: usize) -> Self {
        GroupedIndex {
            dim,
            ..Default::default()
        }
    }

    pub fn build(keys: &[f32], dim: usize) -> Self {
        let mut idx = GroupedIndex::new(dim);
        for (i, key) in keys.chunks_exact(dim).enumerate() {
            idx.insert(key, i);
        }
        idx
    }

    /// Adds entry `index`; indices must be inserted in increasing order.
    pub fn insert(&mut self, key: &[f32], index: usize) {
        let bits: Vec<u32> = key.iter().map(|x| x.to_bits()).collect();
        match self.lookup.get(&bits) {
            Some(&g) => self.members[g as usize].push(index as u32),
            None => {
                let g = self.members.len() as u32;
                self.lookup.insert(bits, g);
                self.keys.extend_from_slice(key);
                self.members.push(vec![index as u32]);
            }
        }
    }

    pub fn group_count(&self) -> usize {
        self.members.len()
    }

    pub fn search(&self, values: &[u32], query: &[f32], k: usize) -> Vec<Neighbor> {
        let groups = self.members.len();
        if groups == 0 || k == 0 {
            return Vec::new();
        }
        let mut dists: Vec<(f64, u32)> = self
            .keys
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(g, key)| (squared_l2(key, query), g as u32))
            .collect();

        // The k nearest entries live in at most k groups.
        let by_dist = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let take = k.min(groups);
        if take < groups {
            dists.select_nth_unstable_by(take - 1, by_dist);
        }
        let (head, tail) = dists.split_at_mut(take);
        head.sort_unstable_by(by_dist);

        let mut chosen: Vec<u32> = Vec::new();
        let mut count = 0usize;
        let mut boundary = f64::INFINITY;
        for &(d, g) in head.iter() {
            if count >= k && d > boundary {
                break;
            }
            chosen.push(g);
            count += self.members[g as usize].len();
            if count >= k && boundary == f64::INFINITY {
                boundary = d;
            }
        }
        // Groups tied with the boundary that fell outside the preselection.
        if boundary.is_finite() {
            chosen.extend(tail.iter().filter(|(d, _)| *d == boundary).map(|&(_, g)| g));
        }

        let mut out: Vec<Neighbor> = Vec::with_capacity(count);
        for g in chosen {
            let d = squared_l2(&self.keys[g as usize * self.dim..(g as usize + 1) * self.dim], query);
            out.extend(self.members[g as usize].iter().map(|&i| Neighbor {
                distance: d,
                index: i as usize,
                value: values[i as usize],
            }));
        }
        out.sort_unstable_by(cmp_neighbor);
        out.truncate(k);
        out
    }
}
