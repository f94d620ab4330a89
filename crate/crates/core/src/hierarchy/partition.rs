//! Seeded balanced partitions of the user set for layers 1 and 2.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::mix_seed;

fn deal(order: &[usize], n_groups: usize) -> Vec<Vec<usize>> {
    let mut groups = alloc::vec![Vec::new(); n_groups];
    for (i, &u) in order.iter().enumerate() {
        groups[i % n_groups].push(u);
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups
}

/// Splits users `0..n_users` into `n_groups` groups whose sizes differ by at
/// most one. Each group is sorted.
///
/// Layer 1 deals a seeded shuffle round-robin. Layer 2 reshuffles inside
/// every layer-1 group, concatenates the groups and deals again, so members
/// of one layer-1 group land in different layer-2 groups.
pub fn partition_users(n_users: usize, n_groups: usize, seed: u64, layer: u8) -> Result<Vec<Vec<usize>>> {
    if n_groups == 0 {
        return Err(Error::InvalidConfig("at least one group is required".into()));
    }
    if n_groups > n_users {
        return Err(Error::TooManyGroups {
            groups: n_groups,
            users: n_users,
        });
    }
    let mut order: Vec<usize> = (0..n_users).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, 1, 0)));
    let first = deal(&order, n_groups);
    match layer {
        1 => Ok(first),
        2 => {
            let mut order = Vec::with_capacity(n_users);
            for (g, members) in first.into_iter().enumerate() {
                let mut m = members;
                m.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, 2, g as u64)));
                order.extend(m);
            }
            Ok(deal(&order, n_groups))
        }
        _ => Err(Error::InvalidConfig("only layers 1 and 2 are partitioned".into())),
    }
}

/// Splits an oversized component in half (after a seeded shuffle) until
/// every part has at most `max` members. Parts are sorted; singletons are
/// dropped.
pub fn bisect(component: &[usize], max: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut stack = alloc::vec![(component.to_vec(), 0u64)];
    while let Some((mut part, depth)) = stack.pop() {
        if part.len() <= max {
            if part.len() > 1 {
                part.sort_unstable();
                out.push(part);
            }
            continue;
        }
        let len = part.len() as u64;
        part.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, depth, len)));
        let right = part.split_off(part.len() / 2);
        stack.push((right, depth + 1));
        stack.push((part, depth + 1));
    }
    out.sort_by_key(|c| c[0]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_and_deterministic() {
        let g = partition_users(10, 3, 7, 1).unwrap();
        let mut sizes: Vec<usize> = g.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, [3, 3, 4]);
        assert_eq!(g, partition_users(10, 3, 7, 1).unwrap());
        let sizes: Vec<usize> = partition_users(55_000, 10, 1, 1).unwrap().iter().map(Vec::len).collect();
        assert_eq!(sizes, [5500; 10]);
    }

    #[test]
    fn layer_two_cross_cuts() {
        for seed in 0..20 {
            let l1 = partition_users(40, 4, seed, 1).unwrap();
            let l2 = partition_users(40, 4, seed, 2).unwrap();
            let mut all: Vec<usize> = l2.iter().flatten().copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..40).collect::<Vec<_>>());
            for a in &l1 {
                assert!(!l2.iter().any(|b| a.iter().all(|u| b.contains(u))));
            }
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(partition_users(3, 4, 0, 1), Err(Error::TooManyGroups { .. })));
        assert!(partition_users(3, 0, 0, 1).is_err());
    }

    #[test]
    fn bisection_caps_size() {
        let c: Vec<usize> = (0..23).collect();
        let parts = bisect(&c, 5, 3);
        assert!(parts.iter().all(|p| p.len() <= 5 && p.len() > 1));
        let n: usize = parts.iter().map(Vec::len).sum();
        assert!(n >= 20);
    }
}
