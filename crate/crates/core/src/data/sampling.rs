use std::collections::{BTreeMap, HashSet};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PatchPair, PatchStore};
use crate::error::{Error, Result};

/// Samples pairs from each store independently and concatenates them.
/// Counts are split evenly across stores (earlier stores take the
/// remainder). Pairs never cross stores.
pub fn sample_pairs(
    stores: &[PatchStore],
    n_similar: usize,
    n_dissimilar: usize,
    seed: u64,
) -> Result<Vec<PatchPair>> {
    if stores.is_empty() {
        return Err(Error::SamplingInfeasible("no stores given".into()));
    }
    let k = stores.len();
    let share = |n: usize, i: usize| n / k + usize::from(i < n % k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_similar + n_dissimilar);
    for (i, store) in stores.iter().enumerate() {
        let pairs = sample_from(store, share(n_similar, i), share(n_dissimilar, i), &mut rng)?;
        out.extend(pairs.into_iter().map(|p| p.in_scene(i)));
    }
    Ok(out)
}

/// Single-store sampling; similar pairs come first, then dissimilar ones.
pub fn sample_pairs_single(
    store: &PatchStore,
    n_similar: usize,
    n_dissimilar: usize,
    seed: u64,
) -> Result<Vec<PatchPair>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_from(store, n_similar, n_dissimilar, &mut rng)
}

fn sample_from(
    store: &PatchStore,
    n_similar: usize,
    n_dissimilar: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<PatchPair>> {
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &id) in store.point_ids().iter().enumerate() {
        groups.entry(id).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = groups.into_values().collect();
    let choose2 = |n: usize| (n as u64) * (n as u64).saturating_sub(1) / 2;
    let total_pos: u64 = groups.iter().map(|g| choose2(g.len())).sum();
    let total_neg = choose2(store.len()) - total_pos;

    if n_similar as u64 > total_pos {
        return Err(Error::SamplingInfeasible(format!(
            "{n_similar} similar pairs requested from scene `{}`, only {total_pos} exist",
            store.scene_tag()
        )));
    }
    if n_dissimilar as u64 > total_neg {
        return Err(Error::SamplingInfeasible(format!(
            "{n_dissimilar} dissimilar pairs requested from scene `{}`, only {total_neg} exist",
            store.scene_tag()
        )));
    }

    let mut out = sample_similar(&groups, total_pos, n_similar, rng);
    out.extend(sample_dissimilar(store, total_neg, n_dissimilar, rng));
    Ok(out)
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn pick_from_enumeration(
    all: Vec<(usize, usize)>,
    n: usize,
    similar: bool,
    rng: &mut ChaCha8Rng,
) -> Vec<PatchPair> {
    index::sample(rng, all.len(), n)
        .into_iter()
        .map(|k| PatchPair::new(all[k].0, all[k].1, similar))
        .collect()
}

fn sample_similar(
    groups: &[Vec<usize>],
    total: u64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<PatchPair> {
    if n == 0 {
        return Vec::new();
    }
    if 2 * n as u64 > total {
        let mut all = Vec::with_capacity(total as usize);
        for g in groups {
            for a in 0..g.len() {
                for b in a + 1..g.len() {
                    all.push((g[a], g[b]));
                }
            }
        }
        return pick_from_enumeration(all, n, true, rng);
    }
    // Group chosen with weight C(size, 2), then a uniform pair inside it:
    // uniform over all same-point pairs.
    let mut cumulative = Vec::with_capacity(groups.len());
    let mut acc = 0u64;
    for g in groups {
        acc += (g.len() as u64) * (g.len() as u64).saturating_sub(1) / 2;
        cumulative.push(acc);
    }
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let r = rng.random_range(0..total);
        let g = &groups[cumulative.partition_point(|&c| c <= r)];
        let a = rng.random_range(0..g.len());
        let mut b = rng.random_range(0..g.len() - 1);
        if b >= a {
            b += 1;
        }
        let key = ordered(g[a], g[b]);
        if seen.insert(key) {
            out.push(PatchPair::new(key.0, key.1, true));
        }
    }
    out
}

fn sample_dissimilar(
    store: &PatchStore,
    total: u64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<PatchPair> {
    if n == 0 {
        return Vec::new();
    }
    let len = store.len();
    if 2 * n as u64 > total {
        let mut all = Vec::with_capacity(total as usize);
        for a in 0..len {
            for b in a + 1..len {
                if store.point_id(a) != store.point_id(b) {
                    all.push((a, b));
                }
            }
        }
        return pick_from_enumeration(all, n, false, rng);
    }
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let a = rng.random_range(0..len);
        let mut b = rng.random_range(0..len - 1);
        if b >= a {
            b += 1;
        }
        if store.point_id(a) == store.point_id(b) {
            continue;
        }
        let key = ordered(a, b);
        if seen.insert(key) {
            out.push(PatchPair::new(key.0, key.1, false));
        }
    }
    out
}
