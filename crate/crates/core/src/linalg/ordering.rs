use std::collections::VecDeque;

use super::sparse::SparsePattern;

/// Reverse Cuthill–McKee ordering of a structurally symmetric pattern.
///
/// Returns `perm` with `perm[new] = old`. Each connected component starts from
/// a pseudo-peripheral vertex found by repeated breadth-first sweeps.
pub fn reverse_cuthill_mckee(pattern: &SparsePattern) -> Vec<usize> {
    let n = pattern.dim();
    let degree: Vec<usize> = (0..n).map(|i| pattern.row(i).len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let mut candidates: Vec<usize> = (0..n).collect();
    candidates.sort_by_key(|&i| (degree[i], i));

    for &seed in &candidates {
        if visited[seed] {
            continue;
        }
        let root = pseudo_peripheral(pattern, &degree, &visited, seed);
        let mut queue = VecDeque::from([root]);
        visited[root] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = pattern
                .row(v)
                .iter()
                .copied()
                .filter(|&u| !visited[u])
                .collect();
            next.sort_by_key(|&u| (degree[u], u));
            for u in next {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(
    pattern: &SparsePattern,
    degree: &[usize],
    blocked: &[bool],
    start: usize,
) -> usize {
    let mut root = start;
    let mut depth = 0;
    for _ in 0..8 {
        let (far, d) = farthest(pattern, degree, blocked, root);
        if d <= depth {
            break;
        }
        depth = d;
        root = far;
    }
    root
}

/// Lowest-degree vertex of the last BFS level, and the level count.
fn farthest(pattern: &SparsePattern, degree: &[usize], blocked: &[bool], root: usize) -> (usize, usize) {
    let n = pattern.dim();
    let mut level = vec![usize::MAX; n];
    level[root] = 0;
    let mut queue = VecDeque::from([root]);
    let mut last = root;
    while let Some(v) = queue.pop_front() {
        for &u in pattern.row(v) {
            if !blocked[u] && level[u] == usize::MAX {
                level[u] = level[v] + 1;
                queue.push_back(u);
            }
        }
        last = v;
    }
    let depth = level[last];
    let best = (0..n)
        .filter(|&i| level[i] == depth)
        .min_by_key(|&i| (degree[i], i))
        .unwrap_or(last);
    (best, depth)
}

/// Inverse of a permutation given as `perm[new] = old`.
pub fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}
