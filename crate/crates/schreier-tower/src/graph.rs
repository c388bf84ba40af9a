//! Finite edge-labeled graphs given by per-label partial injections, with the
//! unit-length path metric.
//!
//! An edge is a pair `(vertex, label)`; the inverse label walks it backwards.
//! Traversals explore letters in alphabet order, each label before its
//! inverse, so every result here is deterministic.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::dsu::Dsu;
use crate::error::{Error, Result};

/// Marker for a missing edge in a partial map.
pub const NONE: u32 = u32::MAX;

/// A signed generator: `label` indexes the alphabet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter {
    pub label: usize,
    pub inverse: bool,
}

impl Letter {
    pub fn pos(label: usize) -> Self {
        Self { label, inverse: false }
    }

    pub fn neg(label: usize) -> Self {
        Self { label, inverse: true }
    }

    pub fn inv(self) -> Self {
        Self { label: self.label, inverse: !self.inverse }
    }
}

/// Ordered generator names. Each name has a formal inverse.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Alphabet {
    labels: Vec<String>,
}

impl Alphabet {
    pub fn new<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        let labels: Vec<String> = labels.iter().map(|s| s.as_ref().to_string()).collect();
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() || l.chars().any(|c| c.is_whitespace() || "{}^".contains(c)) {
                return Err(Error::Alphabet(format!("bad label name `{l}`")));
            }
            for (j, m) in labels.iter().enumerate() {
                if i != j && (l == m || *l == inverse_name(m)) {
                    return Err(Error::Alphabet(format!("`{l}` clashes with `{m}`")));
                }
            }
        }
        Ok(Self { labels })
    }

    /// The two-letter alphabet `{a, b}`.
    pub fn ab() -> Self {
        Self::new(&["a", "b"]).expect("valid")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn name(&self, label: usize) -> &str {
        &self.labels[label]
    }

    pub fn names(&self) -> &[String] {
        &self.labels
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    /// All letters in traversal order: `l0, l0⁻¹, l1, l1⁻¹, …`.
    pub fn letters(&self) -> impl Iterator<Item = Letter> + '_ {
        (0..self.labels.len()).flat_map(|l| [Letter::pos(l), Letter::neg(l)])
    }

    pub fn letter_name(&self, letter: Letter) -> String {
        let n = &self.labels[letter.label];
        if letter.inverse {
            inverse_name(n)
        } else {
            n.clone()
        }
    }

    /// Alphabet with `add` appended.
    pub fn extended<S: AsRef<str>>(&self, add: &[S]) -> Result<Self> {
        let mut all = self.labels.clone();
        all.extend(add.iter().map(|s| s.as_ref().to_string()));
        Self::new(&all)
    }
}

impl TryFrom<Vec<String>> for Alphabet {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        Self::new(&v)
    }
}

impl From<Alphabet> for Vec<String> {
    fn from(a: Alphabet) -> Self {
        a.labels
    }
}

/// Printed name of the inverse of a label: single lowercase letters are
/// inverted by case, anything else gets a `^-1` suffix.
pub fn inverse_name(label: &str) -> String {
    let mut cs = label.chars();
    match (cs.next(), cs.next()) {
        (Some(c), None) if c.is_lowercase() => c.to_uppercase().collect(),
        _ => format!("{label}^-1"),
    }
}

/// Anything that moves vertices along letters. Vertex ids are `u64` so that
/// implicitly stepped tower levels can exceed `u32`.
pub trait ActionView {
    fn alphabet(&self) -> &Alphabet;
    fn step(&self, v: u64, letter: Letter) -> Option<u64>;
}

/// Finite graph whose edges are per-label partial injections.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledGraph {
    alphabet: Alphabet,
    basepoint: u32,
    fwd: Vec<Vec<u32>>,
    bwd: Vec<Vec<u32>>,
}

impl LabeledGraph {
    /// Complete graph of a permutation action.
    pub fn make_action_graph(alphabet: Alphabet, perms: Vec<Vec<u32>>, basepoint: u32) -> Result<Self> {
        let n = perms.first().map_or(1, |p| p.len());
        for (l, p) in perms.iter().enumerate() {
            if p.len() != n || p.contains(&NONE) {
                return Err(Error::NotBijective(alphabet.name(l).to_string()));
            }
        }
        let g = Self::from_partial(alphabet, n, perms, basepoint).map_err(|e| match e {
            Error::NotInjective(l) => Error::NotBijective(l),
            e => e,
        })?;
        Ok(g)
    }

    /// Graph from partial injective maps (`NONE` marks a missing edge).
    pub fn from_partial(alphabet: Alphabet, n: usize, fwd: Vec<Vec<u32>>, basepoint: u32) -> Result<Self> {
        if fwd.len() != alphabet.len() {
            return Err(Error::Alphabet(format!("{} maps for {} labels", fwd.len(), alphabet.len())));
        }
        if basepoint as usize >= n {
            return Err(Error::VertexOutOfRange { vertex: basepoint as u64, count: n as u64 });
        }
        let mut bwd = vec![vec![NONE; n]; fwd.len()];
        for (l, map) in fwd.iter().enumerate() {
            if map.len() != n {
                return Err(Error::NotInjective(alphabet.name(l).to_string()));
            }
            for (v, &w) in map.iter().enumerate() {
                if w == NONE {
                    continue;
                }
                if w as usize >= n {
                    return Err(Error::VertexOutOfRange { vertex: w as u64, count: n as u64 });
                }
                if bwd[l][w as usize] != NONE {
                    return Err(Error::NotInjective(alphabet.name(l).to_string()));
                }
                bwd[l][w as usize] = v as u32;
            }
        }
        Ok(Self { alphabet, basepoint, fwd, bwd })
    }

    /// One-vertex graph with a loop for every label.
    pub fn rose(alphabet: Alphabet) -> Self {
        let perms = vec![vec![0]; alphabet.len()];
        Self::make_action_graph(alphabet, perms, 0).expect("rose is valid")
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn vertex_count(&self) -> usize {
        self.fwd.first().map_or(1, |m| m.len())
    }

    pub fn basepoint(&self) -> u32 {
        self.basepoint
    }

    /// Forward map of a label (`NONE` where undefined).
    pub fn perm(&self, label: usize) -> &[u32] {
        &self.fwd[label]
    }

    pub fn perms(&self) -> &[Vec<u32>] {
        &self.fwd
    }

    pub fn step(&self, v: u32, letter: Letter) -> Option<u32> {
        let m = if letter.inverse { &self.bwd } else { &self.fwd };
        let w = m[letter.label][v as usize];
        (w != NONE).then_some(w)
    }

    pub fn is_complete(&self) -> bool {
        self.fwd.iter().all(|m| !m.contains(&NONE))
    }

    pub fn is_connected(&self) -> bool {
        let n = self.vertex_count();
        let mut seen = vec![false; n];
        let mut stack = vec![self.basepoint];
        seen[self.basepoint as usize] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for l in self.alphabet.letters() {
                if let Some(w) = self.step(v, l) {
                    if !seen[w as usize] {
                        seen[w as usize] = true;
                        count += 1;
                        stack.push(w);
                    }
                }
            }
        }
        count == n
    }

    pub fn with_basepoint(mut self, basepoint: u32) -> Result<Self> {
        if basepoint as usize >= self.vertex_count() {
            return Err(Error::VertexOutOfRange { vertex: basepoint as u64, count: self.vertex_count() as u64 });
        }
        self.basepoint = basepoint;
        Ok(self)
    }

    fn require_complete(&self) -> Result<()> {
        if self.is_complete() {
            Ok(())
        } else {
            Err(Error::Incomplete)
        }
    }

    fn check_vertex(&self, v: u64) -> Result<()> {
        if v >= self.vertex_count() as u64 {
            return Err(Error::VertexOutOfRange { vertex: v, count: self.vertex_count() as u64 });
        }
        Ok(())
    }
}

impl ActionView for LabeledGraph {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn step(&self, v: u64, letter: Letter) -> Option<u64> {
        LabeledGraph::step(self, v as u32, letter).map(u64::from)
    }
}

/// Ball around a center with exact distances and the local adjacency
/// between its members.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BallSnapshot {
    pub center: u64,
    pub radius: u32,
    /// Level of the tower the ball was computed in (0 for plain graphs).
    pub level: usize,
    /// `(vertex, distance)` in BFS discovery order.
    pub members: Vec<(u64, u32)>,
    /// For member `i`, its neighbor indices in letter order (`NONE` if the
    /// neighbor is outside the ball or the edge is missing).
    neighbors: Vec<u32>,
    letters: usize,
}

impl BallSnapshot {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn distance_of(&self, v: u64) -> Option<u32> {
        self.members.iter().find(|m| m.0 == v).map(|m| m.1)
    }

    /// Number of members within distance `r` (requires `r ≤ radius`).
    pub fn count_within(&self, r: u32) -> usize {
        self.members.partition_point(|m| m.1 <= r)
    }

    pub fn neighbors_of(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbors[i * self.letters..(i + 1) * self.letters].iter().filter(|&&j| j != NONE).map(|&j| j as usize)
    }

    /// Components of the subgraph induced on `r < d ≤ big_r`, and how many
    /// of them reach distance exactly `big_r`. Requires `big_r ≤ radius`.
    pub fn annulus(&self, r: u32, big_r: u32) -> (usize, usize) {
        assert!(big_r <= self.radius, "annulus outer radius exceeds the ball");
        let end = self.count_within(big_r);
        let start = self.count_within(r);
        let mut dsu = Dsu::new(end);
        for i in start..end {
            for j in self.neighbors_of(i) {
                if j >= start && j < end {
                    dsu.union(i as u32, j as u32);
                }
            }
        }
        let mut roots = HashMap::new();
        for i in start..end {
            let root = dsu.find(i as u32);
            let touch = roots.entry(root).or_insert(false);
            *touch |= self.members[i].1 == big_r;
        }
        (roots.len(), roots.values().filter(|&&t| t).count())
    }
}

/// Exact BFS ball of radius `r` around `v`.
pub fn ball_in<V: ActionView + ?Sized>(view: &V, v: u64, r: u32, level: usize) -> BallSnapshot {
    let letters: Vec<Letter> = view.alphabet().letters().collect();
    let nl = letters.len();
    let mut index: HashMap<u64, u32> = HashMap::new();
    let mut members = vec![(v, 0)];
    index.insert(v, 0);
    let mut targets: Vec<Option<u64>> = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let (u, d) = members[i];
        for &l in &letters {
            let w = view.step(u, l);
            targets.push(w);
            if d < r {
                if let Some(w) = w {
                    if let std::collections::hash_map::Entry::Vacant(e) = index.entry(w) {
                        e.insert(members.len() as u32);
                        members.push((w, d + 1));
                        queue.push_back(members.len() - 1);
                    }
                }
            }
        }
    }
    let neighbors = targets.iter().map(|w| w.and_then(|w| index.get(&w).copied()).unwrap_or(NONE)).collect();
    BallSnapshot { center: v, radius: r, level, members, neighbors, letters: nl }
}

/// Exact BFS ball in a complete graph.
pub fn ball(g: &LabeledGraph, v: u32, r: u32) -> Result<BallSnapshot> {
    g.check_vertex(v as u64)?;
    g.require_complete()?;
    Ok(ball_in(g, v as u64, r, 0))
}

/// Length of a shortest path from `u` to `v`.
pub fn distance(g: &LabeledGraph, u: u32, v: u32) -> Result<u32> {
    g.check_vertex(u as u64)?;
    g.check_vertex(v as u64)?;
    let n = g.vertex_count();
    let mut dist = vec![u32::MAX; n];
    dist[u as usize] = 0;
    let mut queue = VecDeque::from([u]);
    while let Some(x) = queue.pop_front() {
        if x == v {
            return Ok(dist[x as usize]);
        }
        for l in g.alphabet.letters() {
            if let Some(y) = g.step(x, l) {
                if dist[y as usize] == u32::MAX {
                    dist[y as usize] = dist[x as usize] + 1;
                    queue.push_back(y);
                }
            }
        }
    }
    Err(Error::Disconnected(v as u64))
}

/// All distances from `u` (`u32::MAX` for unreachable vertices).
pub fn distances_from(g: &LabeledGraph, u: u32) -> Vec<u32> {
    let mut dist = vec![u32::MAX; g.vertex_count()];
    dist[u as usize] = 0;
    let mut queue = VecDeque::from([u]);
    while let Some(x) = queue.pop_front() {
        for l in g.alphabet.letters() {
            if let Some(y) = g.step(x, l) {
                if dist[y as usize] == u32::MAX {
                    dist[y as usize] = dist[x as usize] + 1;
                    queue.push_back(y);
                }
            }
        }
    }
    dist
}

/// `(count, touching)` for the annulus `r < d(v,·) ≤ big_r`.
pub fn annulus_components(g: &LabeledGraph, v: u32, r: u32, big_r: u32) -> Result<(usize, usize)> {
    if r >= big_r {
        return Err(Error::Config(format!("annulus needs r < R, got r={r}, R={big_r}")));
    }
    Ok(ball(g, v, big_r)?.annulus(r, big_r))
}

/// Component id of every vertex of `g` after deleting `removed` (deleted
/// vertices get `NONE`). Ids are assigned in vertex order.
pub fn components_without(g: &LabeledGraph, removed: &[bool]) -> Vec<u32> {
    let n = g.vertex_count();
    let mut comp = vec![NONE; n];
    let mut next = 0;
    for s in 0..n {
        if removed[s] || comp[s] != NONE {
            continue;
        }
        comp[s] = next;
        let mut stack = vec![s as u32];
        while let Some(v) = stack.pop() {
            for l in g.alphabet.letters() {
                if let Some(w) = g.step(v, l) {
                    if !removed[w as usize] && comp[w as usize] == NONE {
                        comp[w as usize] = next;
                        stack.push(w);
                    }
                }
            }
        }
        next += 1;
    }
    comp
}

/// Drops labels that act as loops at every vertex.
pub fn prune_loops(g: &LabeledGraph, drop: &[&str]) -> Result<LabeledGraph> {
    let mut idx = Vec::new();
    for name in drop {
        let l = g.alphabet.index(name).ok_or_else(|| Error::UnknownLabel(name.to_string()))?;
        if g.fwd[l].iter().enumerate().any(|(v, &w)| w != v as u32) {
            return Err(Error::NotLoopLabel(name.to_string()));
        }
        idx.push(l);
    }
    let keep: Vec<usize> = (0..g.alphabet.len()).filter(|l| !idx.contains(l)).collect();
    let names: Vec<&str> = keep.iter().map(|&l| g.alphabet.name(l)).collect();
    Ok(LabeledGraph {
        alphabet: Alphabet::new(&names)?,
        basepoint: g.basepoint,
        fwd: keep.iter().map(|&l| g.fwd[l].clone()).collect(),
        bwd: keep.iter().map(|&l| g.bwd[l].clone()).collect(),
    })
}

/// Adds labels acting as the identity (a loop at every vertex).
pub fn decorate_with_loops(g: &LabeledGraph, add: &[&str]) -> Result<LabeledGraph> {
    let alphabet = g.alphabet.extended(add)?;
    let id: Vec<u32> = (0..g.vertex_count() as u32).collect();
    let mut fwd = g.fwd.clone();
    let mut bwd = g.bwd.clone();
    for _ in add {
        fwd.push(id.clone());
        bwd.push(id.clone());
    }
    Ok(LabeledGraph { alphabet, basepoint: g.basepoint, fwd, bwd })
}

/// Outcome of [`is_covering`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum CoveringCheck {
    Covering {
        degree: usize,
    },
    /// `vmap(step_g(v)) ≠ step_g(vmap(v))`.
    NotEquivariant {
        vertex: u32,
        label: usize,
    },
    NotSurjective {
        vertex: u32,
    },
    UnevenFiber {
        vertex: u32,
        size: usize,
        expected: usize,
    },
    MapOutOfRange {
        vertex: u32,
    },
    AlphabetMismatch,
}

impl CoveringCheck {
    pub fn is_covering(&self) -> bool {
        matches!(self, CoveringCheck::Covering { .. })
    }

    pub fn degree(&self) -> Option<usize> {
        match self {
            CoveringCheck::Covering { degree } => Some(*degree),
            _ => None,
        }
    }
}

/// Checks that `vmap : hi → lo` is a label-equivariant surjection with
/// constant fiber size.
pub fn is_covering(hi: &LabeledGraph, lo: &LabeledGraph, vmap: &[u32]) -> CoveringCheck {
    if hi.alphabet != lo.alphabet {
        return CoveringCheck::AlphabetMismatch;
    }
    let m = lo.vertex_count();
    if vmap.len() != hi.vertex_count() {
        return CoveringCheck::MapOutOfRange { vertex: vmap.len().min(hi.vertex_count()) as u32 };
    }
    for (v, &x) in vmap.iter().enumerate() {
        if x as usize >= m {
            return CoveringCheck::MapOutOfRange { vertex: v as u32 };
        }
    }
    for v in 0..hi.vertex_count() as u32 {
        for l in 0..hi.alphabet.len() {
            let a = hi.step(v, Letter::pos(l)).map(|w| vmap[w as usize]);
            let b = lo.step(vmap[v as usize], Letter::pos(l));
            if a != b {
                return CoveringCheck::NotEquivariant { vertex: v, label: l };
            }
        }
    }
    let mut fiber = vec![0usize; m];
    for &x in vmap {
        fiber[x as usize] += 1;
    }
    if let Some(x) = fiber.iter().position(|&c| c == 0) {
        return CoveringCheck::NotSurjective { vertex: x as u32 };
    }
    let expected = fiber[0];
    if let Some(x) = fiber.iter().position(|&c| c != expected) {
        return CoveringCheck::UnevenFiber { vertex: x as u32, size: fiber[x], expected };
    }
    CoveringCheck::Covering { degree: expected }
}

/// The basepoint-preserving label-equivariant bijection `g1 → g2`, if any.
pub fn labeled_iso(g1: &LabeledGraph, g2: &LabeledGraph) -> Option<Vec<u32>> {
    if g1.alphabet != g2.alphabet || g1.vertex_count() != g2.vertex_count() {
        return None;
    }
    let n = g1.vertex_count();
    let mut map = vec![NONE; n];
    let mut used = vec![false; n];
    map[g1.basepoint as usize] = g2.basepoint;
    used[g2.basepoint as usize] = true;
    let mut queue = VecDeque::from([g1.basepoint]);
    while let Some(v) = queue.pop_front() {
        let w = map[v as usize];
        for l in g1.alphabet.letters() {
            match (g1.step(v, l), g2.step(w, l)) {
                (None, None) => {}
                (Some(x), Some(y)) => {
                    if map[x as usize] == NONE {
                        if used[y as usize] {
                            return None;
                        }
                        map[x as usize] = y;
                        used[y as usize] = true;
                        queue.push_back(x);
                    } else if map[x as usize] != y {
                        return None;
                    }
                }
                _ => return None,
            }
        }
    }
    map.iter().all(|&x| x != NONE).then_some(map)
}
