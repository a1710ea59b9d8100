//! Synthetic bipartite interaction generators.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Uniformly random distinct `(user, item)` pairs in which every user has at
/// least one interaction.
pub fn uniform_bipartite<R: Rng>(
    n_users: usize,
    n_items: usize,
    n_edges: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let total = n_users
        .checked_mul(n_items)
        .ok_or_else(|| Error::Config("users x items overflows".into()))?;
    if n_users == 0 || n_items == 0 {
        return Err(Error::Config("need at least one user and one item".into()));
    }
    if n_edges > total {
        return Err(Error::Config(format!(
            "{n_edges} edges exceed the {total} possible user-item pairs"
        )));
    }
    if n_edges < n_users {
        return Err(Error::Config(format!(
            "{n_edges} edges cannot cover {n_users} users"
        )));
    }

    if n_edges * 2 <= total {
        let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(n_edges);
        let mut pairs = Vec::with_capacity(n_edges);
        for u in 0..n_users {
            let i = rng.gen_range(0..n_items);
            seen.insert((u, i));
            pairs.push((u, i));
        }
        while pairs.len() < n_edges {
            let p = (rng.gen_range(0..n_users), rng.gen_range(0..n_items));
            if seen.insert(p) {
                pairs.push(p);
            }
        }
        pairs.sort_unstable();
        return Ok(pairs);
    }

    // Dense regime: choose the pairs to leave out, never removing a user's last item.
    let mut missing: HashSet<(usize, usize)> = HashSet::with_capacity(total - n_edges);
    let mut removed_per_user = vec![0usize; n_users];
    while missing.len() < total - n_edges {
        let p = (rng.gen_range(0..n_users), rng.gen_range(0..n_items));
        if removed_per_user[p.0] + 1 == n_items || missing.contains(&p) {
            continue;
        }
        missing.insert(p);
        removed_per_user[p.0] += 1;
    }
    let mut pairs = Vec::with_capacity(n_edges);
    for u in 0..n_users {
        for i in 0..n_items {
            if !missing.contains(&(u, i)) {
                pairs.push((u, i));
            }
        }
    }
    Ok(pairs)
}

/// Parameters of the community-structured generator.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CommunitySpec {
    pub n_users: usize,
    pub n_items: usize,
    pub n_edges: usize,
    pub communities: usize,
    /// Probability that an interaction stays inside the user's community.
    pub affinity: f64,
    /// Exponent of the Zipf-like item popularity within a community.
    pub popularity_exponent: f64,
}

impl CommunitySpec {
    /// MovieLens-100k sized: 943 users, 1682 items, 100k interactions.
    pub fn movielens_100k_scale() -> Self {
        Self {
            n_users: 943,
            n_items: 1682,
            n_edges: 100_000,
            communities: 12,
            affinity: 0.8,
            popularity_exponent: 0.8,
        }
    }
}

/// Interactions with planted user/item communities and skewed popularity.
///
/// Users and items are assigned round-robin to communities after a shuffle.
/// Each interaction picks a user (every user gets at least one), then an item
/// from the user's community with probability `affinity` or from the whole
/// catalogue otherwise, drawn with popularity weights `rank^-exponent`.
pub fn community_bipartite<R: Rng>(spec: &CommunitySpec, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    let CommunitySpec {
        n_users,
        n_items,
        n_edges,
        communities,
        affinity,
        popularity_exponent,
    } = *spec;
    if communities == 0 || communities > n_items || communities > n_users {
        return Err(Error::Config("communities must be in 1..=min(users, items)".into()));
    }
    if !(0.0..=1.0).contains(&affinity) {
        return Err(Error::Config("affinity must lie in [0, 1]".into()));
    }
    if n_edges < n_users || n_edges * 2 > n_users * n_items {
        return Err(Error::Config(format!(
            "{n_edges} edges infeasible for {n_users} users x {n_items} items"
        )));
    }

    let mut items: Vec<usize> = (0..n_items).collect();
    items.shuffle(rng);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); communities];
    for (rank, &item) in items.iter().enumerate() {
        members[rank % communities].push(item);
    }
    let mut users: Vec<usize> = (0..n_users).collect();
    users.shuffle(rng);
    let mut user_comm = vec![0usize; n_users];
    for (rank, &u) in users.iter().enumerate() {
        user_comm[u] = rank % communities;
    }

    let cumulative = |n: usize| -> Vec<f64> {
        let mut acc = 0.0;
        (0..n)
            .map(|r| {
                acc += ((r + 1) as f64).powf(-popularity_exponent);
                acc
            })
            .collect()
    };
    let member_cdf: Vec<Vec<f64>> = members.iter().map(|m| cumulative(m.len())).collect();
    let global_cdf = cumulative(n_items);
    let draw = |cdf: &[f64], rng: &mut R| -> usize {
        let x = rng.gen::<f64>() * cdf[cdf.len() - 1];
        cdf.partition_point(|&c| c < x).min(cdf.len() - 1)
    };
    // Activity skew: a user's chance of being drawn grows with a random weight.
    let activity: Vec<f64> = (0..n_users).map(|_| rng.gen_range(0.2..1.8)).collect();
    let mut activity_cdf = Vec::with_capacity(n_users);
    let mut acc = 0.0;
    for a in &activity {
        acc += a;
        activity_cdf.push(acc);
    }

    let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(n_edges);
    let mut pairs = Vec::with_capacity(n_edges);
    let pick_item = |u: usize, rng: &mut R| -> usize {
        if rng.gen::<f64>() < affinity {
            let c = user_comm[u];
            members[c][draw(&member_cdf[c], rng)]
        } else {
            items[draw(&global_cdf, rng)]
        }
    };
    for u in 0..n_users {
        loop {
            let i = pick_item(u, rng);
            if seen.insert((u, i)) {
                pairs.push((u, i));
                break;
            }
        }
    }
    let mut attempts = 0usize;
    while pairs.len() < n_edges {
        attempts += 1;
        if attempts > n_edges * 200 {
            return Err(Error::Config("community generator could not reach the edge count".into()));
        }
        let u = draw(&activity_cdf, rng);
        let i = pick_item(u, rng);
        if seen.insert((u, i)) {
            pairs.push((u, i));
        }
    }
    pairs.sort_unstable();
    Ok(pairs)
}

/// Holds out about `test_fraction` of each user's interactions, keeping at
/// least one training interaction per user.
pub fn split_per_user<R: Rng>(
    n_users: usize,
    pairs: &[(usize, usize)],
    test_fraction: f64,
    rng: &mut R,
) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); n_users];
    for &(u, i) in pairs {
        per_user[u].push(i);
    }
    let mut train = Vec::with_capacity(pairs.len());
    let mut test = Vec::new();
    for (u, items) in per_user.iter_mut().enumerate() {
        items.sort_unstable();
        items.shuffle(rng);
        let n_test = ((items.len() as f64) * test_fraction).round() as usize;
        let n_test = n_test.min(items.len().saturating_sub(1));
        for (k, &i) in items.iter().enumerate() {
            if k < n_test {
                test.push((u, i));
            } else {
                train.push((u, i));
            }
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn complete_bipartite_when_saturated() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pairs = uniform_bipartite(2, 2, 4, &mut rng).unwrap();
        assert_eq!(pairs, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    }

    #[test]
    fn every_user_covered_and_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(n, m, e) in &[(50, 40, 60), (20, 10, 150), (5, 5, 24)] {
            let pairs = uniform_bipartite(n, m, e, &mut rng).unwrap();
            assert_eq!(pairs.len(), e);
            let set: HashSet<_> = pairs.iter().collect();
            assert_eq!(set.len(), e);
            for u in 0..n {
                assert!(pairs.iter().any(|p| p.0 == u));
            }
        }
    }

    #[test]
    fn infeasible_requests_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(uniform_bipartite(2, 2, 5, &mut rng).is_err());
        assert!(uniform_bipartite(10, 10, 5, &mut rng).is_err());
    }

    #[test]
    fn community_generator_hits_edge_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = CommunitySpec {
            n_users: 100,
            n_items: 80,
            n_edges: 1500,
            communities: 4,
            affinity: 0.8,
            popularity_exponent: 0.5,
        };
        let pairs = community_bipartite(&spec, &mut rng).unwrap();
        assert_eq!(pairs.len(), 1500);
        let set: HashSet<_> = pairs.iter().collect();
        assert_eq!(set.len(), 1500);
    }

    #[test]
    fn split_keeps_a_training_item_per_user() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pairs = uniform_bipartite(30, 30, 200, &mut rng).unwrap();
        let (train, test) = split_per_user(30, &pairs, 0.5, &mut rng);
        assert_eq!(train.len() + test.len(), pairs.len());
        for u in 0..30 {
            assert!(train.iter().any(|p| p.0 == u));
        }
    }
}
