//! Pairwise depth graph, cycle breaking, and the global depth ordering.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{self, HulledMask, OrderingRelation};
use crate::layers::LayerSet;

/// Which layer pairs are compared when building the graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Pairs {
    AllPairs,
    /// Only pairs sharing a 4-neighborhood boundary.
    AdjacentOnly,
    /// `AllPairs` up to [`AUTO_ALL_PAIRS_LIMIT`] layers, `AdjacentOnly` above.
    #[default]
    Auto,
}

pub const AUTO_ALL_PAIRS_LIMIT: usize = 64;

/// An edge removed while breaking a cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct RemovedEdge {
    pub from: usize,
    pub to: usize,
    pub d: f64,
    pub v: f64,
}

/// Directed graph over layer ids; an edge `i → j` means `S_i` is above
/// `S_j` and stores `D(i, j)`.
#[derive(Clone, Debug, Default)]
pub struct DepthGraph {
    pub node_count: usize,
    pub edges: BTreeMap<(usize, usize), f64>,
    pub v_cache: BTreeMap<(usize, usize), f64>,
    pub removed: Vec<RemovedEdge>,
}

impl DepthGraph {
    pub fn new(node_count: usize) -> Self {
        Self {
            node_count,
            ..Self::default()
        }
    }

    /// Adds `from → to`, replacing any edge between the two nodes.
    pub fn add_edge(&mut self, from: usize, to: usize, d: f64) {
        assert!(from != to && from < self.node_count && to < self.node_count);
        self.edges.remove(&(to, from));
        self.edges.insert((from, to), d);
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains_key(&(from, to))
    }

    fn successors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.node_count];
        for &(i, j) in self.edges.keys() {
            out[i].push(j);
        }
        out
    }

    /// One directed cycle as its edge list, found by depth-first search
    /// from the lowest node id with successors visited in ascending order.
    pub fn find_cycle(&self) -> Option<Vec<(usize, usize)>> {
        let succ = self.successors();
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; self.node_count];
        let mut path: Vec<usize> = Vec::new();
        for root in 0..self.node_count {
            if state[root] != 0 {
                continue;
            }
            let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
            state[root] = 1;
            path.push(root);
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                if let Some(&m) = succ[node].get(*next) {
                    *next += 1;
                    match state[m] {
                        0 => {
                            state[m] = 1;
                            path.push(m);
                            stack.push((m, 0));
                        }
                        1 => {
                            let start = path.iter().position(|&p| p == m).unwrap();
                            let mut cycle: Vec<(usize, usize)> =
                                path[start..].windows(2).map(|w| (w[0], w[1])).collect();
                            cycle.push((node, m));
                            return Some(cycle);
                        }
                        _ => {}
                    }
                } else {
                    state[node] = 2;
                    path.pop();
                    stack.pop();
                }
            }
        }
        None
    }

    pub fn is_acyclic(&self) -> bool {
        self.find_cycle().is_none()
    }

    /// Text dump: one `edge i j D` record per edge, then one
    /// `removed i j D V` record per removed edge.
    pub fn dump(&self) -> String {
        let mut s = format!("nodes {}\n", self.node_count);
        for (&(i, j), d) in &self.edges {
            writeln!(s, "edge {i} {j} {d:.6}").unwrap();
        }
        for r in &self.removed {
            writeln!(s, "removed {} {} {:.6} {}", r.from, r.to, r.d, r.v).unwrap();
        }
        s
    }
}

/// Global depth ordering; `rank[id] = 0` is the topmost layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepthOrdering {
    pub rank: Vec<usize>,
}

impl DepthOrdering {
    /// Layer ids from top to bottom.
    pub fn top_to_bottom(&self) -> Vec<usize> {
        let mut ids = vec![0; self.rank.len()];
        for (id, &r) in self.rank.iter().enumerate() {
            ids[r] = id;
        }
        ids
    }
}

/// Hulls of every layer, computed in parallel.
pub fn layer_hulls(set: &LayerSet) -> Vec<HulledMask> {
    set.layers
        .par_iter()
        .map(|l| HulledMask::new(l.mask.clone()).expect("layers are nonempty"))
        .collect()
}

/// Relation of `S_i` to `S_j` with the subset rule applied first in both
/// directions, and the energy `D(i, j)`.
pub fn pair_relation(i: &HulledMask, j: &HulledMask, delta: f64) -> (OrderingRelation, f64) {
    let d = geometry::depth_energy(i, j);
    if geometry::subset_shortcut(i, j).is_some() {
        return (OrderingRelation::Above, d);
    }
    if geometry::subset_shortcut(j, i).is_some() {
        return (OrderingRelation::Below, d);
    }
    (geometry::classify(d, delta), d)
}

fn selected_pairs(set: &LayerSet, pairs: Pairs) -> Vec<(usize, usize)> {
    let n = set.len();
    let adjacent_only = match pairs {
        Pairs::AllPairs => false,
        Pairs::AdjacentOnly => true,
        Pairs::Auto => n > AUTO_ALL_PAIRS_LIMIT,
    };
    let all = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
    if !adjacent_only {
        return all.collect();
    }
    let grown: Vec<_> = set.layers.par_iter().map(|l| l.mask.dilate4()).collect();
    all.collect::<Vec<_>>()
        .into_par_iter()
        .filter(|&(i, j)| grown[i].intersects(&set.layers[j].mask))
        .collect()
}

/// Builds the depth graph from the pairwise relations.
pub fn build_graph(set: &LayerSet, delta: f64, pairs: Pairs) -> DepthGraph {
    let hulls = layer_hulls(set);
    build_graph_with_hulls(set, &hulls, delta, pairs)
}

pub fn build_graph_with_hulls(
    set: &LayerSet,
    hulls: &[HulledMask],
    delta: f64,
    pairs: Pairs,
) -> DepthGraph {
    let relations: Vec<_> = selected_pairs(set, pairs)
        .into_par_iter()
        .map(|(i, j)| {
            let (rel, d) = pair_relation(&hulls[i], &hulls[j], delta);
            (i, j, rel, d)
        })
        .collect();
    let mut g = DepthGraph::new(set.len());
    for (i, j, rel, d) in relations {
        match rel {
            OrderingRelation::Above => g.add_edge(i, j, d),
            OrderingRelation::Below => g.add_edge(j, i, -d),
            OrderingRelation::SameLevel => {}
        }
    }
    g
}

/// Removes edges until the graph is acyclic. Each round finds one cycle and
/// drops its edge with the largest `weight(i, j)` (ties to the lowest
/// `(i, j)`). Weights are cached in `v_cache`.
pub fn break_cycles_with(
    mut g: DepthGraph,
    mut weight: impl FnMut(usize, usize) -> f64,
) -> DepthGraph {
    while let Some(mut cycle) = g.find_cycle() {
        cycle.sort_unstable();
        let mut best: Option<((usize, usize), f64)> = None;
        for &(i, j) in &cycle {
            let v = *g.v_cache.entry((i, j)).or_insert_with(|| weight(i, j));
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some(((i, j), v));
            }
        }
        let ((i, j), v) = best.expect("cycle has edges");
        let d = g.edges.remove(&(i, j)).expect("cycle edge exists");
        log::debug!("breaking cycle {cycle:?}: removed {i}->{j} (V={v})");
        g.removed.push(RemovedEdge {
            from: i,
            to: j,
            d,
            v,
        });
    }
    g
}

/// Breaks cycles using the convex hull symmetric difference `V(i, j)`.
pub fn break_cycles(g: DepthGraph, set: &LayerSet) -> DepthGraph {
    let mut hulls: BTreeMap<usize, HulledMask> = BTreeMap::new();
    let mut hull = |k: usize| -> HulledMask {
        hulls
            .entry(k)
            .or_insert_with(|| HulledMask::new(set.layers[k].mask.clone()).expect("nonempty layer"))
            .clone()
    };
    break_cycles_with(g, |i, j| {
        let (a, b) = (hull(i), hull(j));
        geometry::hull_symmetric_difference(&a, &b) as f64
    })
}

/// Kahn topological sort. Among available sources the smaller layer goes
/// on top (ties to the lower id).
pub fn topo_sort(g: &DepthGraph, set: &LayerSet) -> Result<DepthOrdering> {
    let areas: Vec<usize> = set.layers.iter().map(|l| l.area).collect();
    topo_sort_by_area(g, &areas)
}

pub fn topo_sort_by_area(g: &DepthGraph, areas: &[usize]) -> Result<DepthOrdering> {
    let n = g.node_count;
    let succ = g.successors();
    let mut indeg = vec![0usize; n];
    for &(_, j) in g.edges.keys() {
        indeg[j] += 1;
    }
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n)
        .filter(|&k| indeg[k] == 0)
        .map(|k| Reverse((areas[k], k)))
        .collect();
    let mut rank = vec![usize::MAX; n];
    let mut next = 0;
    while let Some(Reverse((_, k))) = heap.pop() {
        rank[k] = next;
        next += 1;
        for &m in &succ[k] {
            indeg[m] -= 1;
            if indeg[m] == 0 {
                heap.push(Reverse((areas[m], m)));
            }
        }
    }
    if let Some(stuck) = rank.iter().position(|&r| r == usize::MAX) {
        return Err(Error::CycleDetected(stuck));
    }
    Ok(DepthOrdering { rank })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> DepthGraph {
        let mut g = DepthGraph::new(n);
        for &(i, j) in edges {
            g.add_edge(i, j, 1.0);
        }
        g
    }

    /// Every simple cycle, each as its sorted node list.
    fn all_cycles(g: &DepthGraph) -> Vec<Vec<usize>> {
        let n = g.node_count;
        let mut out = Vec::new();
        fn extend(g: &DepthGraph, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            let last = *path.last().unwrap();
            for m in 0..g.node_count {
                if !g.has_edge(last, m) {
                    continue;
                }
                if m == path[0] {
                    out.push(path.clone());
                } else if m > path[0] && !path.contains(&m) {
                    path.push(m);
                    extend(g, path, out);
                    path.pop();
                }
            }
        }
        for s in 0..n {
            extend(g, &mut vec![s], &mut out);
        }
        out
    }

    #[test]
    fn acyclic_graph_is_unchanged() {
        let g = graph(4, &[(0, 1), (1, 2), (0, 3)]);
        let out = break_cycles_with(g.clone(), |_, _| 1.0);
        assert_eq!(out.edges, g.edges);
        assert!(out.removed.is_empty());
    }

    #[test]
    fn three_cycle_loses_heaviest_edge() {
        let g = graph(3, &[(0, 1), (1, 2), (2, 0)]);
        assert_eq!(g.find_cycle().unwrap().len(), 3);
        let out = break_cycles_with(g, |i, j| if (i, j) == (1, 2) { 9.0 } else { 1.0 });
        assert!(out.is_acyclic());
        assert_eq!(out.removed.len(), 1);
        assert_eq!((out.removed[0].from, out.removed[0].to), (1, 2));
    }

    #[test]
    fn weight_ties_pick_lowest_edge() {
        let g = graph(3, &[(0, 1), (1, 2), (2, 0)]);
        let out = break_cycles_with(g, |_, _| 4.0);
        assert_eq!((out.removed[0].from, out.removed[0].to), (0, 1));
    }

    #[test]
    fn two_independent_cycles_lose_one_edge_each() {
        let g = graph(6, &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3), (2, 3)]);
        assert_eq!(all_cycles(&g).len(), 2);
        let out = break_cycles_with(g, |i, j| (i * 7 + j * 3) as f64);
        assert!(all_cycles(&out).is_empty());
        assert_eq!(out.removed.len(), 2);
        let in_first = |e: &RemovedEdge| e.from < 3 && e.to < 3;
        assert_eq!(out.removed.iter().filter(|e| in_first(e)).count(), 1);
    }

    #[test]
    fn sources_sorted_small_first() {
        let g = DepthGraph::new(3);
        let ord = topo_sort_by_area(&g, &[5, 9, 2]).unwrap();
        assert_eq!(ord.rank, vec![1, 2, 0]);
        assert_eq!(ord.top_to_bottom(), vec![2, 0, 1]);
    }

    #[test]
    fn chain_is_respected() {
        let g = graph(3, &[(2, 0), (0, 1)]);
        let ord = topo_sort_by_area(&g, &[1, 1, 100]).unwrap();
        assert!(ord.rank[2] < ord.rank[0] && ord.rank[0] < ord.rank[1]);
    }

    #[test]
    fn cycle_is_reported_by_sort() {
        let g = graph(3, &[(0, 1), (1, 2), (2, 0)]);
        assert!(matches!(
            topo_sort_by_area(&g, &[1, 1, 1]),
            Err(Error::CycleDetected(_))
        ));
    }

    #[test]
    fn dump_lists_edges_and_removals() {
        let g = break_cycles_with(graph(3, &[(0, 1), (1, 2), (2, 0)]), |_, _| 2.0);
        let text = g.dump();
        assert!(text.starts_with("nodes 3\n"));
        assert_eq!(text.lines().filter(|l| l.starts_with("edge")).count(), 2);
        assert!(text.contains("removed 0 1 1.000000 2"));
    }
}
