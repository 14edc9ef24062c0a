//! Dependency neighborhoods on lattice index sets, ranked neighborhoods from
//! two-level sorting, and dependency graphs (explicit adjacency or the
//! shared-coordinate graph of U-statistic tuples).

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};

/// A point of Z^d.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexPoint {
    pub coords: Vec<i64>,
}

impl IndexPoint {
    pub fn new(coords: Vec<i64>) -> Self {
        assert!(!coords.is_empty());
        IndexPoint { coords }
    }

    /// Maximum-norm distance.
    pub fn dist(&self, other: &IndexPoint) -> u64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a.abs_diff(*b))
            .max()
            .unwrap()
    }
}

/// A finite subset of Z^d with dense integer ids. Points are stored sorted
/// by the lexicographic order on coordinates, which doubles as the strict
/// total order used for rank tie-breaking.
#[derive(Debug, Clone)]
pub struct IndexSet {
    points: Vec<IndexPoint>,
    ids: HashMap<IndexPoint, usize>,
    d: usize,
}

impl IndexSet {
    pub fn new(mut points: Vec<IndexPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("index set"));
        }
        let d = points[0].coords.len();
        if points.iter().any(|p| p.coords.len() != d) {
            return Err(Error::shape("all index points must share the dimension"));
        }
        points.sort();
        points.dedup();
        let ids = points
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, p)| (p, i))
            .collect();
        Ok(IndexSet { points, ids, d })
    }

    /// The 1-d line {lo, lo+1, ..., hi}.
    pub fn line(lo: i64, hi: i64) -> Self {
        IndexSet::new((lo..=hi).map(|x| IndexPoint::new(vec![x])).collect()).unwrap()
    }

    /// The d-dimensional box [lo, hi]^d.
    pub fn cube(d: usize, lo: i64, hi: i64) -> Self {
        let mut points = Vec::new();
        let mut coords = vec![lo; d];
        loop {
            points.push(IndexPoint::new(coords.clone()));
            let mut axis = 0;
            loop {
                if axis == d {
                    return IndexSet::new(points).unwrap();
                }
                coords[axis] += 1;
                if coords[axis] <= hi {
                    break;
                }
                coords[axis] = lo;
                axis += 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn point(&self, id: usize) -> &IndexPoint {
        &self.points[id]
    }

    pub fn points(&self) -> &[IndexPoint] {
        &self.points
    }

    pub fn id_of(&self, p: &IndexPoint) -> Option<usize> {
        self.ids.get(p).copied()
    }

    pub fn contains(&self, p: &IndexPoint) -> bool {
        self.ids.contains_key(p)
    }

    /// Max-norm distance from point `i` to the set of ids `js` (infinity if
    /// `js` is empty -> returned as u64::MAX).
    pub fn dist_to(&self, i: usize, js: &[usize]) -> u64 {
        js.iter()
            .map(|&j| self.points[i].dist(&self.points[j]))
            .min()
            .unwrap_or(u64::MAX)
    }
}

/// The m-neighborhood N(J) = { i in T : min_{j in J} ||i - j|| <= m }.
/// `j_ids` must be ids of `t`; an empty J yields the empty set.
pub fn mdep_neighborhood(t: &IndexSet, m: u64, j_ids: &[usize]) -> Result<BTreeSet<usize>> {
    for &j in j_ids {
        if j >= t.len() {
            return Err(Error::domain(format!("index id {j} outside T")));
        }
    }
    let mut out = BTreeSet::new();
    if j_ids.is_empty() {
        return Ok(out);
    }
    for i in 0..t.len() {
        if t.dist_to(i, j_ids) <= m {
            out.insert(i);
        }
    }
    Ok(out)
}

/// Rank of `i` among T \ N(J) under the two-level sort (distance to J,
/// then lexicographic order on coordinates), 1-based.
pub fn rank_index(t: &IndexSet, j_ids: &[usize], i: usize, m: u64) -> Result<usize> {
    let di = t.dist_to(i, j_ids);
    if di <= m {
        return Err(Error::domain(format!("point id {i} lies inside N(J)")));
    }
    let mut rank = 1usize;
    for other in 0..t.len() {
        if other == i {
            continue;
        }
        let d = t.dist_to(other, j_ids);
        if d <= m {
            continue;
        }
        // two-level comparison; ties broken by the sorted-id order, which is
        // exactly the lexicographic order on coordinates
        if d < di || (d == di && other < i) {
            rank += 1;
        }
    }
    Ok(rank)
}

/// N^(s)(J) = N(J) plus the s lowest-ranked points outside it. Saturates at
/// the whole of T when s exceeds |T \ N(J)|.
pub fn ranked_neighborhood(
    t: &IndexSet,
    j_ids: &[usize],
    s: usize,
    m: u64,
) -> Result<BTreeSet<usize>> {
    let mut out = mdep_neighborhood(t, m, j_ids)?;
    if s == 0 || j_ids.is_empty() {
        return Ok(out);
    }
    let mut outside: Vec<(u64, usize)> = (0..t.len())
        .filter(|&i| !out.contains(&i))
        .map(|i| (t.dist_to(i, j_ids), i))
        .collect();
    outside.sort();
    for &(_, i) in outside.iter().take(s) {
        out.insert(i);
    }
    Ok(out)
}

/// A symmetric loop-free graph on 0..n.
#[derive(Debug, Clone)]
pub struct DependencyGraph {
    adj: Vec<BTreeSet<usize>>,
}

impl DependencyGraph {
    pub fn new(n: usize) -> Self {
        DependencyGraph {
            adj: vec![BTreeSet::new(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        if a != b {
            self.adj[a].insert(b);
            self.adj[b].insert(a);
        }
    }

    pub fn neighbors(&self, v: usize) -> &BTreeSet<usize> {
        &self.adj[v]
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adj[a].contains(&b)
    }

    /// N(J) = J plus all graph-adjacent vertices.
    pub fn neighborhood_closure(&self, j: &[usize]) -> BTreeSet<usize> {
        let mut out: BTreeSet<usize> = j.iter().copied().collect();
        for &v in j {
            out.extend(self.adj[v].iter().copied());
        }
        out
    }

    /// Exact max over q-tuples of |closure|. Exhaustive; guarded by a tuple
    /// budget since the count grows like C(n, q).
    pub fn max_neighborhood_size(&self, q: usize, budget: u64) -> Result<usize> {
        if q == 0 {
            return Err(Error::domain("q must be >= 1"));
        }
        let n = self.adj.len();
        let mut count: u64 = 1;
        for i in 0..q.min(n) {
            count = count.saturating_mul((n - i) as u64) / (i as u64 + 1);
        }
        if count > budget {
            return Err(Error::Budget(count, budget));
        }
        let mut best = 0usize;
        let mut tuple = Vec::with_capacity(q);
        fn rec(
            g: &DependencyGraph,
            start: usize,
            left: usize,
            tuple: &mut Vec<usize>,
            best: &mut usize,
        ) {
            if left == 0 {
                *best = (*best).max(g.neighborhood_closure(tuple).len());
                return;
            }
            for v in start..g.adj.len() {
                tuple.push(v);
                rec(g, v + 1, left - 1, tuple, best);
                tuple.pop();
            }
        }
        rec(self, 0, q.min(n), &mut tuple, &mut best);
        Ok(best)
    }
}

/// Vertices of the U-statistic dependency graph: strictly increasing
/// m-tuples over `[n]` (1-based values). The graph joins two tuples iff they
/// share a coordinate.
#[derive(Debug, Clone)]
pub struct UStatGraph {
    pub tuples: Vec<Vec<usize>>,
    pub graph: DependencyGraph,
}

pub fn ustat_dependency_graph(n: usize, m: usize) -> Result<UStatGraph> {
    if m < 2 || n < m {
        return Err(Error::domain(format!("need n >= m >= 2, got n={n}, m={m}")));
    }
    let mut tuples = Vec::new();
    let mut cur: Vec<usize> = (1..=m).collect();
    loop {
        tuples.push(cur.clone());
        // next strictly increasing m-tuple
        let mut pos = m;
        loop {
            if pos == 0 {
                let mut graph = DependencyGraph::new(tuples.len());
                for a in 0..tuples.len() {
                    for b in a + 1..tuples.len() {
                        if tuples[a].iter().any(|x| tuples[b].contains(x)) {
                            graph.add_edge(a, b);
                        }
                    }
                }
                return Ok(UStatGraph { tuples, graph });
            }
            pos -= 1;
            if cur[pos] < n - (m - 1 - pos) {
                cur[pos] += 1;
                for k in pos + 1..m {
                    cur[k] = cur[k - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Closed-form cap q (2m+1)^d on the closure size of q-tuples in an
/// m-dependent lattice field.
pub fn mdep_neighborhood_bound(q: usize, m: u64, d: usize) -> f64 {
    q as f64 * (2.0 * m as f64 + 1.0).powi(d as i32)
}

/// Exact max over q-tuples of the m-dependent lattice closure size on T.
pub fn mdep_max_neighborhood_size(t: &IndexSet, m: u64, q: usize, budget: u64) -> Result<usize> {
    if q == 0 {
        return Err(Error::domain("q must be >= 1"));
    }
    let n = t.len();
    let mut count: u64 = 1;
    for i in 0..q.min(n) {
        count = count.saturating_mul((n - i) as u64) / (i as u64 + 1);
    }
    if count > budget {
        return Err(Error::Budget(count, budget));
    }
    let mut best = 0usize;
    let mut tuple = Vec::with_capacity(q);
    fn rec(
        t: &IndexSet,
        m: u64,
        start: usize,
        left: usize,
        tuple: &mut Vec<usize>,
        best: &mut usize,
    ) {
        if left == 0 {
            let size = mdep_neighborhood(t, m, tuple).unwrap().len();
            *best = (*best).max(size);
            return;
        }
        for v in start..t.len() {
            tuple.push(v);
            rec(t, m, v + 1, left - 1, tuple, best);
            tuple.pop();
        }
    }
    rec(t, m, 0, q.min(n), &mut tuple, &mut best);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn ids(set: &BTreeSet<usize>) -> Vec<usize> {
        set.iter().copied().collect()
    }

    #[test]
    fn line_neighborhood() {
        let t = IndexSet::line(1, 5);
        let center = t.id_of(&IndexPoint::new(vec![3])).unwrap();
        let n = mdep_neighborhood(&t, 1, &[center]).unwrap();
        let coords: Vec<i64> = n.iter().map(|&i| t.point(i).coords[0]).collect();
        assert_eq!(coords, vec![2, 3, 4]);
        // m = 0 keeps only J itself
        let n0 = mdep_neighborhood(&t, 0, &[center]).unwrap();
        assert_eq!(ids(&n0), vec![center]);
    }

    #[test]
    fn grid_ball_covers_three_by_three() {
        let t = IndexSet::cube(2, 0, 2);
        let center = t.id_of(&IndexPoint::new(vec![1, 1])).unwrap();
        let n = mdep_neighborhood(&t, 1, &[center]).unwrap();
        assert_eq!(n.len(), 9);
    }

    #[test]
    fn two_level_rank_table() {
        // T = {1..7}, J = {4}, m = 1: outside points are 1, 2, 6, 7 with
        // distances 3, 2, 2, 3; ranks follow (distance, lexicographic).
        let t = IndexSet::line(1, 7);
        let j = t.id_of(&IndexPoint::new(vec![4])).unwrap();
        let rk = |x: i64| {
            let i = t.id_of(&IndexPoint::new(vec![x])).unwrap();
            rank_index(&t, &[j], i, 1).unwrap()
        };
        assert_eq!(rk(2), 1);
        assert_eq!(rk(6), 2);
        assert_eq!(rk(1), 3);
        assert_eq!(rk(7), 4);
        // inside point is a domain error
        let inside = t.id_of(&IndexPoint::new(vec![3])).unwrap();
        assert!(rank_index(&t, &[j], inside, 1).is_err());
    }

    #[test]
    fn ranks_form_a_permutation() {
        let t = IndexSet::cube(2, 0, 3);
        let j = vec![t.id_of(&IndexPoint::new(vec![1, 1])).unwrap()];
        let outside: Vec<usize> = (0..t.len()).filter(|&i| t.dist_to(i, &j) > 1).collect();
        let mut ranks: Vec<usize> = outside
            .iter()
            .map(|&i| rank_index(&t, &j, i, 1).unwrap())
            .collect();
        ranks.sort();
        assert_eq!(ranks, (1..=outside.len()).collect::<Vec<_>>());
    }

    #[test]
    fn ranked_neighborhood_grows_to_whole_set() {
        let t = IndexSet::line(1, 7);
        let j = vec![t.id_of(&IndexPoint::new(vec![4])).unwrap()];
        let base = mdep_neighborhood(&t, 1, &j).unwrap();
        assert_eq!(ranked_neighborhood(&t, &j, 0, 1).unwrap(), base);
        let n2 = ranked_neighborhood(&t, &j, 2, 1).unwrap();
        let mut expect = base.clone();
        expect.insert(t.id_of(&IndexPoint::new(vec![2])).unwrap());
        expect.insert(t.id_of(&IndexPoint::new(vec![6])).unwrap());
        assert_eq!(n2, expect);
        let all = ranked_neighborhood(&t, &j, t.len(), 1).unwrap();
        assert_eq!(all.len(), t.len());
        // nondecreasing in s
        let mut prev = 0;
        for s in 0..=t.len() {
            let size = ranked_neighborhood(&t, &j, s, 1).unwrap().len();
            assert!(size >= prev);
            prev = size;
        }
    }

    #[test]
    fn neighborhood_monotonicity_random_instances() {
        let mut rng = Stream::from_seed(11);
        for _ in 0..20 {
            let t = IndexSet::cube(2, 0, 3);
            let j1 = vec![(rng.next_u64() % t.len() as u64) as usize];
            let mut j2 = j1.clone();
            j2.push((rng.next_u64() % t.len() as u64) as usize);
            let m = rng.next_u64() % 3;
            let n_small = mdep_neighborhood(&t, m, &j1).unwrap();
            let n_larger_m = mdep_neighborhood(&t, m + 1, &j1).unwrap();
            let n_larger_j = mdep_neighborhood(&t, m, &j2).unwrap();
            assert!(n_small.is_subset(&n_larger_m));
            assert!(n_small.is_subset(&n_larger_j));
        }
    }

    #[test]
    fn ustat_graph_small_cases() {
        let g = ustat_dependency_graph(3, 2).unwrap();
        assert_eq!(g.tuples, vec![vec![1, 2], vec![1, 3], vec![2, 3]]);
        for a in 0..3 {
            for b in a + 1..3 {
                assert!(g.graph.adjacent(a, b));
            }
        }
        let g = ustat_dependency_graph(4, 2).unwrap();
        let a = g.tuples.iter().position(|t| t == &vec![1, 2]).unwrap();
        let b = g.tuples.iter().position(|t| t == &vec![3, 4]).unwrap();
        assert!(!g.graph.adjacent(a, b));
        assert!(ustat_dependency_graph(1, 2).is_err());
    }

    #[test]
    fn ustat_neighborhood_bound() {
        // |N(v)| <= n^m - (n - m q)^m for a q-tuple set; check q = 1.
        let n = 6;
        let g = ustat_dependency_graph(n, 2).unwrap();
        let cap = n.pow(2) - (n - 2).pow(2);
        for v in 0..g.tuples.len() {
            let size = g.graph.neighborhood_closure(&[v]).len();
            assert!(size <= cap, "{size} > {cap}");
        }
    }

    #[test]
    fn closure_union_identity() {
        let mut g = DependencyGraph::new(8);
        let mut rng = Stream::from_seed(3);
        for _ in 0..12 {
            g.add_edge((rng.next_u64() % 8) as usize, (rng.next_u64() % 8) as usize);
        }
        assert!(g.neighborhood_closure(&[]).is_empty());
        let j1 = [1usize, 4];
        let j2 = [2usize];
        let both: Vec<usize> = j1.iter().chain(&j2).copied().collect();
        let lhs = g.neighborhood_closure(&both);
        let mut rhs = g.neighborhood_closure(&j1);
        rhs.extend(g.neighborhood_closure(&j2));
        assert_eq!(lhs, rhs);
        // path graph closure
        let mut path = DependencyGraph::new(3);
        path.add_edge(0, 1);
        path.add_edge(1, 2);
        assert_eq!(ids(&path.neighborhood_closure(&[1])), vec![0, 1, 2]);
    }

    #[test]
    fn closure_symmetry_property() {
        // pairwise: i_2 in N(i_1) iff i_1 in N(i_2)
        let mut g = DependencyGraph::new(6);
        let mut rng = Stream::from_seed(5);
        for _ in 0..8 {
            g.add_edge((rng.next_u64() % 6) as usize, (rng.next_u64() % 6) as usize);
        }
        for a in 0..6 {
            for b in 0..6 {
                let fwd = g.neighborhood_closure(&[a]).contains(&b);
                let bwd = g.neighborhood_closure(&[b]).contains(&a);
                assert_eq!(fwd, bwd);
            }
        }
        // along admissible chains (each index drawn from the closure of the
        // earlier ones) the head stays in the closure of the tail
        for a in 0..6usize {
            for &b in &g.neighborhood_closure(&[a]) {
                for &c in &g.neighborhood_closure(&[a, b]) {
                    assert!(g.neighborhood_closure(&[b, c]).contains(&a));
                }
            }
        }
    }

    #[test]
    fn max_neighborhood_sizes() {
        // edgeless graph: closure of a q-tuple is the tuple itself
        let g = DependencyGraph::new(5);
        assert_eq!(g.max_neighborhood_size(1, 1000).unwrap(), 1);
        assert_eq!(g.max_neighborhood_size(3, 1000).unwrap(), 3);
        // interior-rich line: q = 1 -> (2m+1)^d
        let t = IndexSet::line(0, 20);
        assert_eq!(mdep_max_neighborhood_size(&t, 2, 1, 10_000).unwrap(), 5);
        // the closed-form cap is never exceeded
        for q in 1..=3 {
            let exact = mdep_max_neighborhood_size(&t, 2, q, 10_000_000).unwrap();
            assert!(exact as f64 <= mdep_neighborhood_bound(q, 2, 1));
        }
    }
}
