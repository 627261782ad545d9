//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vog_core::crf::CrfParams;
use vog_core::encoder::{EncoderConfig, FusionKind, GateActivation};
use vog_core::model::{Example, Tagger, TaggerConfig};
use vog_core::tags::BioTag;

/// Every label path with its score, by enumeration.
pub fn brute_force_paths(
    emissions: &Array2<f64>,
    transitions: &Array2<f64>,
    start: &[f64],
    end: &[f64],
) -> Vec<(Vec<usize>, f64)> {
    let (n, l) = emissions.dim();
    let total = l.pow(n as u32);
    (0..total)
        .map(|mut code| {
            let mut path = vec![0; n];
            for slot in path.iter_mut().rev() {
                *slot = code % l;
                code /= l;
            }
            // left to right, the order a dynamic program accumulates in
            let mut score = start[path[0]] + emissions[[0, path[0]]];
            for k in 1..n {
                score = score + transitions[[path[k - 1], path[k]]] + emissions[[k, path[k]]];
            }
            (path.clone(), score + end[path[n - 1]])
        })
        .collect()
}

pub fn brute_force_log_partition(paths: &[(Vec<usize>, f64)]) -> f64 {
    let max = paths.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    max + paths.iter().map(|p| (p.1 - max).exp()).sum::<f64>().ln()
}

/// Longest common subsequence by plain recursion over suffixes.
pub fn recursive_lcs(a: &[char], b: &[char]) -> usize {
    match (a.split_first(), b.split_first()) {
        (Some((x, ra)), Some((y, rb))) => {
            if x == y {
                1 + recursive_lcs(ra, rb)
            } else {
                recursive_lcs(ra, b).max(recursive_lcs(a, rb))
            }
        }
        _ => 0,
    }
}

/// All strings over `alphabet` with length `0..=max_len`.
pub fn all_strings(alphabet: &[char], max_len: usize) -> Vec<Vec<char>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for &c in alphabet {
                let mut t: Vec<char> = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

pub fn tiny_tagger(fusion: FusionKind, crf: bool, labels: usize, seed: u64) -> Tagger {
    let config = TaggerConfig {
        encoder: EncoderConfig {
            vocab_size: 10,
            model_dim: 8,
            layers: 2,
            heads: 2,
            ff_dim: 16,
            max_positions: 8,
            dropout: 0.1,
        },
        labels,
        fusion,
        gate_activation: GateActivation::Relu,
        crf,
    };
    let mut tagger = Tagger::new(config, seed).unwrap();
    // Move away from the structured initialization (zero CRF scores, unit
    // norms) so every parameter has a generic, non-zero gradient.
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    for p in tagger.store.iter_mut() {
        p.value.mapv_inplace(|v| v + rng.random_range(-0.3..0.3));
    }
    tagger
}

pub fn six_token_example(labels: usize, seed: u64) -> Example {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tokens: Vec<usize> = (0..6).map(|_| rng.random_range(2..10)).collect();
    let visual = Array2::from_shape_simple_fn((6, 3), || rng.random_range(0.05..0.95));
    let gold = (0..6).map(|_| rng.random_range(0..labels)).collect();
    Example {
        tokens,
        visual,
        gold,
        slots: None,
    }
}

/// Relative error `|a - n| / (|a| + |n|)` per parameter group (the name up
/// to its last dot-separated field), from central differences in fp64.
pub fn gradient_check(tagger: &Tagger, example: &Example, step: f64) -> BTreeMap<String, (f64, usize)> {
    let (_, analytic) = tagger.loss(example, None).unwrap();
    let mut probe = tagger.clone();
    let ids: Vec<_> = probe.store.ids().collect();
    let mut diff_sq: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
    for (pi, id) in ids.into_iter().enumerate() {
        let name = probe.store.param(id).name.clone();
        let group = group_of(&name);
        let shape = probe.store.get(id).dim();
        for r in 0..shape.0 {
            for c in 0..shape.1 {
                let orig = probe.store.get(id)[[r, c]];
                probe.store.get_mut(id)[[r, c]] = orig + step;
                let plus = probe.loss_value(example).unwrap();
                probe.store.get_mut(id)[[r, c]] = orig - step;
                let minus = probe.loss_value(example).unwrap();
                probe.store.get_mut(id)[[r, c]] = orig;
                let numeric = (plus - minus) / (2.0 * step);
                let a = analytic.iter().nth(pi).unwrap()[[r, c]];
                let e = diff_sq.entry(group.clone()).or_insert((0.0, 0.0, 0));
                e.0 += (a - numeric).powi(2);
                e.1 += a.powi(2) + numeric.powi(2);
                e.2 += 1;
            }
        }
    }
    diff_sq
        .into_iter()
        .map(|(g, (d, s, count))| (g, (d.sqrt() / s.sqrt().max(1e-300), count)))
        .collect()
}

fn group_of(name: &str) -> String {
    match name.rfind('.') {
        Some(i) => name[..i].to_string(),
        None => name.to_string(),
    }
}

/// Emissions and CRF parameters drawn uniformly from `[-scale, scale]`.
pub fn random_crf(rng: &mut ChaCha8Rng, n: usize, labels: usize, scale: f64) -> (Array2<f64>, CrfParams) {
    let mut draw = |r: usize, c: usize| Array2::from_shape_simple_fn((r, c), || rng.random_range(-scale..scale));
    let emissions = draw(n, labels);
    let transitions = draw(labels, labels);
    let start = draw(1, labels).row(0).to_owned();
    let end = draw(1, labels).row(0).to_owned();
    (
        emissions,
        CrfParams {
            transitions,
            start,
            end,
        },
    )
}

/// Regroups non-contiguous tags from the list of B positions: group `i`
/// holds the B at `b[i]` and every I strictly between `b[i]` and `b[i+1]`;
/// I tags before the first B form their own leading group.
pub fn regroup_by_b_positions(tags: &[BioTag]) -> Vec<Vec<usize>> {
    let bs: Vec<usize> = (0..tags.len()).filter(|&k| tags[k] == BioTag::B).collect();
    let is_i = |k: &usize| tags[*k] == BioTag::I;
    let mut groups = Vec::new();
    let first = bs.first().copied().unwrap_or(tags.len());
    let leading: Vec<usize> = (0..first).filter(is_i).collect();
    if !leading.is_empty() {
        groups.push(leading);
    }
    for (i, &b) in bs.iter().enumerate() {
        let stop = bs.get(i + 1).copied().unwrap_or(tags.len());
        let mut g = vec![b];
        g.extend((b + 1..stop).filter(is_i));
        groups.push(g);
    }
    groups
}

/// Disjoint, sorted spans inside `0..len`, each chosen independently.
pub fn random_spans(rng: &mut ChaCha8Rng, len: usize) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut k = 0;
    while k < len {
        if rng.random_bool(0.3) {
            let end = (k + rng.random_range(0..4)).min(len - 1);
            spans.push((k, end));
            k = end + 1 + rng.random_range(0..2);
        } else {
            k += 1;
        }
    }
    spans
}

/// A random subsequence of `source`, each position kept with probability
/// `keep`.
pub fn random_subsequence(rng: &mut ChaCha8Rng, source: &[char], keep: f64) -> Vec<char> {
    source.iter().copied().filter(|_| rng.random_bool(keep)).collect()
}
