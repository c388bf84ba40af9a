//! Freely reduced words, the Schori generator sets and Stallings folding.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use crate::error::{Error, Result};
use crate::graph::{ActionView, Alphabet, LabeledGraph, Letter, NONE};

/// A freely reduced word over an alphabet's signed labels.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word(Vec<Letter>);

impl Word {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Free reduction of an arbitrary letter sequence.
    pub fn reduce<I: IntoIterator<Item = Letter>>(letters: I) -> Self {
        let mut out: Vec<Letter> = Vec::new();
        for l in letters {
            if out.last() == Some(&l.inv()) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Self(out)
    }

    /// `letter^n`; negative `n` inverts.
    pub fn power(label: usize, n: i64) -> Self {
        let l = if n < 0 { Letter::neg(label) } else { Letter::pos(label) };
        Self(vec![l; n.unsigned_abs() as usize])
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.iter().rev().map(|l| l.inv()).collect())
    }

    /// Reduced product `self · other`.
    pub fn concat(&self, other: &Word) -> Self {
        Self::reduce(self.0.iter().chain(other.0.iter()).copied())
    }

    /// Reduced conjugate `c · self · c⁻¹`.
    pub fn conjugate(&self, c: &Word) -> Self {
        c.concat(self).concat(&c.inverse())
    }

    /// Parses words such as `aab^-1A`, `a^5 b^2 a` or `{alpha}^-1`.
    ///
    /// Single-letter labels are written bare, with the uppercase letter
    /// for the inverse; longer labels go in braces. An optional `^n`
    /// exponent follows any letter.
    pub fn parse(alphabet: &Alphabet, s: &str) -> Result<Self> {
        let bad = || Error::WordSyntax(s.to_string());
        let chars: Vec<char> = s.chars().collect();
        let mut i = 0;
        let mut letters = Vec::new();
        while i < chars.len() {
            let c = chars[i];
            if c.is_whitespace() || c == '1' && chars.len() == 1 {
                i += 1;
                continue;
            }
            let (label, inverse) = if c == '{' {
                let close = chars[i..].iter().position(|&x| x == '}').ok_or_else(bad)? + i;
                let name: String = chars[i + 1..close].iter().collect();
                i = close + 1;
                (alphabet.index(&name).ok_or(Error::UnknownLabel(name))?, false)
            } else {
                i += 1;
                let lower: String = c.to_lowercase().collect();
                let label = alphabet
                    .index(&c.to_string())
                    .or_else(|| (c.is_uppercase()).then(|| alphabet.index(&lower)).flatten());
                let label = label.ok_or_else(|| Error::UnknownLabel(c.to_string()))?;
                (label, alphabet.name(label) != c.to_string())
            };
            let mut exp: i64 = 1;
            if chars.get(i) == Some(&'^') {
                let start = i + 1;
                let mut end = start;
                if chars.get(end) == Some(&'-') {
                    end += 1;
                }
                while chars.get(end).is_some_and(|c| c.is_ascii_digit()) {
                    end += 1;
                }
                let text: String = chars[start..end].iter().collect();
                exp = text.parse().map_err(|_| bad())?;
                i = end;
            }
            let letter = if inverse { Letter::neg(label) } else { Letter::pos(label) };
            let letter = if exp < 0 { letter.inv() } else { letter };
            letters.extend(std::iter::repeat_n(letter, exp.unsigned_abs() as usize));
        }
        Ok(Self::reduce(letters))
    }

    /// Renders in the syntax accepted by [`Word::parse`], with runs
    /// collapsed to powers.
    pub fn display<'a>(&'a self, alphabet: &'a Alphabet) -> WordDisplay<'a> {
        WordDisplay { word: self, alphabet }
    }
}

pub struct WordDisplay<'a> {
    word: &'a Word,
    alphabet: &'a Alphabet,
}

impl fmt::Display for WordDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ls = &self.word.0;
        if ls.is_empty() {
            return write!(f, "1");
        }
        let mut i = 0;
        while i < ls.len() {
            let mut j = i;
            while j < ls.len() && ls[j] == ls[i] {
                j += 1;
            }
            let name = self.alphabet.name(ls[i].label);
            let single = name.chars().count() == 1 && name.chars().all(|c| c.is_lowercase());
            let run = (j - i) as i64;
            match (single, ls[i].inverse) {
                (true, false) => write!(f, "{name}")?,
                (true, true) => write!(f, "{}", name.to_uppercase())?,
                (false, _) => write!(f, "{{{name}}}")?,
            }
            let exp = if ls[i].inverse && !single { -run } else { run };
            if exp != 1 {
                write!(f, "^{exp}")?;
            }
            i = j;
        }
        Ok(())
    }
}

/// Endpoint of the lift of `w` starting at `start`, if every edge exists.
pub fn trace_in<V: ActionView + ?Sized>(view: &V, start: u64, w: &Word) -> Option<u64> {
    w.letters().iter().try_fold(start, |v, &l| view.step(v, l))
}

/// Endpoint of the lift of `w` from `start` in a graph.
pub fn trace_word(g: &LabeledGraph, start: u32, w: &Word) -> Result<u32> {
    trace_in(g, start as u64, w).map(|v| v as u32).ok_or(Error::Incomplete)
}

/// Which alphabet the Schori generator sets live over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchoriVariant {
    /// `{a, b, alpha, beta}` with the surface loops `alpha`, `beta`.
    Full,
    /// `{a, b}`; the loops are dropped.
    Simplified,
}

/// The four generator sets at one level of the Schori chain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubgroupChainSpec {
    pub k: usize,
    pub variant: SchoriVariant,
    pub alphabet: Alphabet,
    pub s_ab: BTreeSet<Word>,
    pub s_ba: BTreeSet<Word>,
    pub s_a: BTreeSet<Word>,
    pub s_b: BTreeSet<Word>,
}

impl SubgroupChainSpec {
    /// Generators of the level subgroup: `S_ka ∪ S_kb`.
    pub fn generators(&self) -> Vec<Word> {
        self.s_a.union(&self.s_b).cloned().collect()
    }
}

/// Unrolls the recursion
/// `S_kab = S_(k-1)ab ∪ A S_(k-1)ab A⁻¹ ∪ A S_(k-1)b A⁻¹` with `A = a^(2^(k-1))`,
/// symmetrically for `S_kba`, and `S_ka = {a^(2^k)} ∪ S_kab` (plus `alpha`
/// in the full variant).
pub fn schori_generator_sets(k: usize, variant: SchoriVariant) -> SubgroupChainSpec {
    let alphabet = match variant {
        SchoriVariant::Full => Alphabet::new(&["a", "b", "alpha", "beta"]).expect("valid"),
        SchoriVariant::Simplified => Alphabet::ab(),
    };
    let loops = |side: usize| -> BTreeSet<Word> {
        match variant {
            SchoriVariant::Full => [Word::power(2 + side, 1)].into(),
            SchoriVariant::Simplified => BTreeSet::new(),
        }
    };
    let side_set = |k: usize, side: usize, cross: &BTreeSet<Word>| -> BTreeSet<Word> {
        let mut s: BTreeSet<Word> = cross.clone();
        s.insert(Word::power(side, 1i64 << k));
        s.extend(loops(side));
        s
    };
    let mut s_ab = BTreeSet::new();
    let mut s_ba = BTreeSet::new();
    for j in 1..=k {
        let ca = Word::power(0, 1i64 << (j - 1));
        let cb = Word::power(1, 1i64 << (j - 1));
        let prev_a = side_set(j - 1, 0, &s_ab);
        let prev_b = side_set(j - 1, 1, &s_ba);
        let mut next_ab = s_ab.clone();
        next_ab.extend(s_ab.iter().chain(prev_b.iter()).map(|w| w.conjugate(&ca)));
        let mut next_ba = s_ba.clone();
        next_ba.extend(s_ba.iter().chain(prev_a.iter()).map(|w| w.conjugate(&cb)));
        s_ab = next_ab;
        s_ba = next_ba;
    }
    let s_a = side_set(k, 0, &s_ab);
    let s_b = side_set(k, 1, &s_ba);
    SubgroupChainSpec { k, variant, alphabet, s_ab, s_ba, s_a, s_b }
}

/// Incremental Stallings folding over a union-find of vertices.
struct Folder {
    slots: usize,
    adj: Vec<u32>,
    parent: Vec<u32>,
    pending: Vec<(u32, u32)>,
}

fn slot(l: Letter) -> usize {
    2 * l.label + l.inverse as usize
}

impl Folder {
    fn new(labels: usize) -> Self {
        Self { slots: 2 * labels, adj: vec![NONE; 2 * labels], parent: vec![0], pending: Vec::new() }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn new_vertex(&mut self) -> u32 {
        let v = self.parent.len() as u32;
        self.parent.push(v);
        self.adj.extend(std::iter::repeat_n(NONE, self.slots));
        v
    }

    fn edge(&mut self, v: u32, s: usize) -> Option<u32> {
        let w = self.adj[v as usize * self.slots + s];
        (w != NONE).then(|| self.find(w))
    }

    fn add_edge(&mut self, u: u32, s: usize, v: u32) {
        let (u, v) = (self.find(u), self.find(v));
        if let Some(w) = self.edge(u, s) {
            self.pending.push((w, v));
        } else if let Some(w) = self.edge(v, s ^ 1) {
            self.pending.push((w, u));
        } else {
            self.adj[u as usize * self.slots + s] = v;
            self.adj[v as usize * self.slots + (s ^ 1)] = u;
        }
        self.settle();
    }

    fn settle(&mut self) {
        while let Some((x, y)) = self.pending.pop() {
            let (x, y) = (self.find(x), self.find(y));
            if x == y {
                continue;
            }
            let (keep, gone) = (x.min(y), x.max(y));
            self.parent[gone as usize] = keep;
            for s in 0..self.slots {
                let t = self.adj[gone as usize * self.slots + s];
                if t == NONE {
                    continue;
                }
                let t = self.find(t);
                match self.edge(keep, s) {
                    Some(e) if e != t => self.pending.push((e, t)),
                    Some(_) => {}
                    None => {
                        self.adj[keep as usize * self.slots + s] = t;
                        self.adj[t as usize * self.slots + (s ^ 1)] = keep;
                    }
                }
            }
        }
    }

    fn add_word(&mut self, w: &Word) {
        let ls = w.letters();
        let mut cur = self.find(0);
        let mut i = 0;
        while i < ls.len() {
            match self.edge(cur, slot(ls[i])) {
                Some(x) => cur = x,
                None => break,
            }
            i += 1;
        }
        let mut end = self.find(0);
        let mut j = ls.len();
        while j > i {
            match self.edge(end, slot(ls[j - 1].inv())) {
                Some(x) => end = x,
                None => break,
            }
            j -= 1;
        }
        if i == j {
            self.pending.push((cur, end));
            self.settle();
            return;
        }
        for &l in &ls[i..j - 1] {
            let x = self.new_vertex();
            self.add_edge(cur, slot(l), x);
            cur = self.find(x);
        }
        self.add_edge(cur, slot(ls[j - 1]), end);
    }

    /// Renumbers surviving vertices in BFS order from the basepoint.
    fn finish(mut self, alphabet: Alphabet) -> LabeledGraph {
        let labels = alphabet.len();
        let base = self.find(0);
        let mut order = vec![NONE; self.parent.len()];
        let mut seq = vec![base];
        order[base as usize] = 0;
        let mut queue = VecDeque::from([base]);
        while let Some(v) = queue.pop_front() {
            for s in 0..self.slots {
                if let Some(w) = self.edge(v, s) {
                    if order[w as usize] == NONE {
                        order[w as usize] = seq.len() as u32;
                        seq.push(w);
                        queue.push_back(w);
                    }
                }
            }
        }
        let mut fwd = vec![vec![NONE; seq.len()]; labels];
        for (i, &v) in seq.iter().enumerate() {
            for (l, map) in fwd.iter_mut().enumerate() {
                if let Some(w) = self.edge(v, 2 * l) {
                    map[i] = order[w as usize];
                }
            }
        }
        LabeledGraph::from_partial(alphabet, seq.len(), fwd, 0).expect("folded maps are injective")
    }
}

/// Folded core graph of the subgroup generated by `gens`, based at the
/// subgroup coset. Vertices are numbered in BFS order from the basepoint,
/// so equal subgroups give identical graphs.
pub fn stallings_fold(alphabet: &Alphabet, gens: &[Word]) -> LabeledGraph {
    let mut f = Folder::new(alphabet.len());
    for w in gens {
        if !w.is_empty() {
            f.add_word(w);
        }
    }
    f.finish(alphabet.clone())
}

/// Index of a folded subgroup: its vertex count when complete.
pub fn coset_count(g: &LabeledGraph) -> Result<usize> {
    if g.is_complete() {
        Ok(g.vertex_count())
    } else {
        Err(Error::Incomplete)
    }
}
