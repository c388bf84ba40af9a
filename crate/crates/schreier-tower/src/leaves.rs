//! Points of the inverse limit, their taxonomy and the ends of their leaves.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsu::Dsu;
use crate::error::{Error, Result};
use crate::graph::{ball_in, components_without, distances_from, BallSnapshot, Letter, NONE};
use crate::towers::{cycle_length, trace_from_base, Tower};
use crate::words::Word;

/// Rule for choosing preimages along a thread of powers of one generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThreadRule {
    /// `a^ℓ_k` with `ℓ_k` kept as far from `0` around the `a`-cycle as the
    /// fiber allows.
    ASpread,
    /// Same along `b`.
    BSpread,
    /// The preimage farthest from the basepoint (explicit levels only).
    Far,
}

/// How a fiber point extends from level `k` to level `k+1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Policy {
    /// The basepoints.
    Id,
    /// `q_1 = a`, `q_(k+1) = x^(m_k) q_k` with `x` alternating `b, a, b, …`
    /// and `m_k` the length of the `x`-cycle through the basepoint.
    Q,
    /// As `q`, starting from `b` and alternating `a, b, a, …`.
    Qprime,
    /// `a^ℓ_k` from `ℓ_j` on, with `ℓ_(2i) = ℓ_(2i-1) + m_(2i-1)` and
    /// `ℓ_(2i+1) = ℓ_(2i)`.
    Dyadic {
        j: usize,
        l: u64,
    },
    Thread {
        rule: ThreadRule,
    },
    /// The same word traced at every level.
    Word {
        word: String,
    },
    /// Uniform choice among preimages.
    Random {
        seed: u64,
    },
}

impl Policy {
    /// Parses `id`, `q`, `qprime`, `dyadic:J:L`, `thread:a-spread`,
    /// `thread:b-spread`, `thread:far`, `word:W` or `random:SEED`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, rest) = match s.split_once(':') {
            Some((n, r)) => (n, Some(r)),
            None => (s, None),
        };
        let bad = |why: &str| Error::Config(format!("policy `{s}`: {why}"));
        Ok(match (name, rest) {
            ("id", None) => Policy::Id,
            ("q", None) => Policy::Q,
            ("qprime", None) => Policy::Qprime,
            ("dyadic", Some(p)) => {
                let (j, l) = p.split_once(':').ok_or_else(|| bad("expected dyadic:J:L"))?;
                Policy::Dyadic {
                    j: j.parse().map_err(|_| bad("J must be an integer"))?,
                    l: l.parse().map_err(|_| bad("L must be an integer"))?,
                }
            }
            ("thread", Some(r)) => Policy::Thread {
                rule: match r {
                    "a-spread" => ThreadRule::ASpread,
                    "b-spread" => ThreadRule::BSpread,
                    "far" => ThreadRule::Far,
                    _ => return Err(bad("rules are a-spread, b-spread, far")),
                },
            },
            ("word", Some(w)) => Policy::Word { word: w.to_string() },
            ("random", Some(seed)) => Policy::Random { seed: seed.parse().map_err(|_| bad("seed must be an integer"))? },
            ("random", None) => return Err(bad("random policies need a seed (random:SEED)")),
            _ => {
                return Err(bad(
                    "unknown policy; available: id, q, qprime, dyadic:J:L, thread:a-spread|b-spread|far, word:W, random:SEED",
                ))
            }
        })
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Id => write!(f, "id"),
            Policy::Q => write!(f, "q"),
            Policy::Qprime => write!(f, "qprime"),
            Policy::Dyadic { j, l } => write!(f, "dyadic:{j}:{l}"),
            Policy::Thread { rule } => {
                let r = match rule {
                    ThreadRule::ASpread => "a-spread",
                    ThreadRule::BSpread => "b-spread",
                    ThreadRule::Far => "far",
                };
                write!(f, "thread:{r}")
            }
            Policy::Word { word } => write!(f, "word:{word}"),
            Policy::Random { seed } => write!(f, "random:{seed}"),
        }
    }
}

#[derive(Clone, Debug)]
enum State {
    None,
    /// Current word and which label comes next.
    Alternating {
        word: Word,
        next: usize,
    },
    /// Exponent of the thread generator.
    Power {
        label: usize,
        exp: u64,
    },
    Rng(Box<ChaCha8Rng>),
}

/// A coherent sequence of vertices `v_0, v_1, …` realized lazily.
#[derive(Clone, Debug)]
pub struct FiberPoint {
    policy: Policy,
    prefix: Vec<u64>,
    state: State,
}

impl FiberPoint {
    pub fn new(policy: Policy) -> Self {
        let state = match &policy {
            Policy::Random { seed } => State::Rng(Box::new(ChaCha8Rng::seed_from_u64(*seed))),
            _ => State::None,
        };
        Self { policy, prefix: Vec::new(), state }
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn prefix(&self) -> &[u64] {
        &self.prefix
    }

    /// Vertex at level `k`, extending the prefix as needed.
    pub fn vertex(&mut self, tower: &Tower, k: usize) -> Result<u64> {
        if k > tower.max_level() {
            return Err(Error::LevelBudget { level: k, budget: tower.max_level() });
        }
        while self.prefix.len() <= k {
            let next = self.extend(tower)?;
            let j = self.prefix.len();
            if j > 0 && tower.project(j - 1, next) != self.prefix[j - 1] {
                return Err(Error::Policy(format!("{} is not coherent at level {j}", self.policy)));
            }
            self.prefix.push(next);
        }
        Ok(self.prefix[k])
    }

    fn label(tower: &Tower, name: &str) -> Result<usize> {
        tower.alphabet().index(name).ok_or_else(|| Error::Policy(format!("tower has no label `{name}`")))
    }

    fn extend(&mut self, tower: &Tower) -> Result<u64> {
        let k = self.prefix.len();
        if k == 0 {
            return self.start(tower);
        }
        let prev = self.prefix[k - 1];
        let base = tower.basepoint(k - 1);
        match (&self.policy, &mut self.state) {
            (Policy::Id, _) => Ok(tower.basepoint(k)),
            (Policy::Q | Policy::Qprime, State::Alternating { word, next }) => {
                if k > 1 {
                    let m = cycle_length(tower, k - 1, base, *next);
                    *word = Word::power(*next, m as i64).concat(word);
                    *next = 1 - *next;
                }
                Ok(trace_from_base(tower, k, word))
            }
            (Policy::Dyadic { j, .. }, State::Power { label, exp }) => {
                if k > *j && k.is_multiple_of(2) {
                    *exp += cycle_length(tower, k - 1, base, *label);
                }
                Ok(trace_from_base(tower, k, &Word::power(*label, (*exp).try_into().unwrap_or(i64::MAX))))
            }
            (Policy::Thread { rule: ThreadRule::ASpread | ThreadRule::BSpread }, State::Power { label, exp }) => {
                let m = cycle_length(tower, k - 1, base, *label);
                let big_m = cycle_length(tower, k, tower.basepoint(k), *label);
                let best = (0..big_m / m)
                    .map(|i| *exp + i * m)
                    .max_by_key(|&l| (l.min(big_m - l), std::cmp::Reverse(l)))
                    .unwrap_or(*exp);
                *exp = best;
                Ok(trace_from_base(tower, k, &Word::power(*label, best as i64)))
            }
            (Policy::Thread { rule: ThreadRule::Far }, _) => {
                let g = tower.level(k)?;
                let dist = distances_from(g, g.basepoint());
                let fiber = tower.preimages(k - 1, prev);
                Ok(*fiber.iter().max_by_key(|&&v| (dist[v as usize], std::cmp::Reverse(v))).expect("nonempty fiber"))
            }
            (Policy::Word { word }, _) => {
                let w = Word::parse(tower.alphabet(), word)?;
                Ok(trace_from_base(tower, k, &w))
            }
            (Policy::Random { .. }, State::Rng(rng)) => {
                let fiber = tower.preimages(k - 1, prev);
                Ok(fiber[rng.gen_range(0..fiber.len())])
            }
            _ => Err(Error::Policy(format!("{} is in an invalid state", self.policy))),
        }
    }

    fn start(&mut self, tower: &Tower) -> Result<u64> {
        match &self.policy {
            Policy::Q | Policy::Qprime => {
                let a = Self::label(tower, "a")?;
                let b = Self::label(tower, "b")?;
                let (first, next) = if self.policy == Policy::Q { (a, b) } else { (b, a) };
                self.state = State::Alternating { word: Word::power(first, 1), next };
            }
            Policy::Dyadic { j, l } => {
                let a = Self::label(tower, "a")?;
                if *j > tower.max_level() {
                    return Err(Error::LevelBudget { level: *j, budget: tower.max_level() });
                }
                let m = cycle_length(tower, *j, tower.basepoint(*j), a);
                if *l >= m {
                    return Err(Error::Policy(format!("dyadic start ℓ_{j} = {l} must be below {m}")));
                }
                self.state = State::Power { label: a, exp: *l };
                // Levels below j are projections of a^l at level j.
                let mut v = trace_from_base(tower, *j, &Word::power(a, *l as i64));
                let mut below = vec![v];
                for i in (0..*j).rev() {
                    v = tower.project(i, v);
                    below.push(v);
                }
                below.reverse();
                // The prefix takes levels 0..j; the caller pushes level j.
                self.prefix.extend_from_slice(&below[..*j]);
                return Ok(below[*j]);
            }
            Policy::Thread { rule: ThreadRule::ASpread } => {
                self.state = State::Power { label: Self::label(tower, "a")?, exp: 0 };
            }
            Policy::Thread { rule: ThreadRule::BSpread } => {
                self.state = State::Power { label: Self::label(tower, "b")?, exp: 0 };
            }
            Policy::Word { word } => {
                Word::parse(tower.alphabet(), word)?;
            }
            _ => {}
        }
        if matches!(self.policy, Policy::Q | Policy::Qprime) {
            return Ok(tower.basepoint(0));
        }
        Ok(match &self.policy {
            Policy::Word { word } => trace_from_base(tower, 0, &Word::parse(tower.alphabet(), word)?),
            _ => tower.basepoint(0),
        })
    }
}

/// Which generator a taxonomy tag refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    A,
    B,
}

/// Component of `Λ_(k+1)` minus the fiber over the basepoint of `Λ_k`.
///
/// `Arc(side, j)` contains `x^((j-1)m + 1)` where `m` is the length of the
/// `x`-cycle through the basepoint of `Λ_k`; `Hanging(side, j)` is attached
/// only at the deleted vertex `x^(jm)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    AtBase,
    Arc(Side, u8),
    Hanging(Side, u8),
}

impl Tag {
    pub fn is_hanging(self) -> bool {
        matches!(self, Tag::Hanging(..))
    }

    /// Name of the tag for a cover of the given degree: `Aplus`, `Aminus`,
    /// `TA` for degree 3; `A1`…`A3`, `TA1`, `TA2` for degree 5.
    pub fn name(self, degree: u32) -> String {
        let s = |side: Side| if side == Side::A { "A" } else { "B" };
        match (self, degree) {
            (Tag::AtBase, _) => "AtBase".into(),
            (Tag::Arc(x, 1), 3) => format!("{}plus", s(x)),
            (Tag::Arc(x, 2), 3) => format!("{}minus", s(x)),
            (Tag::Hanging(x, 1), 3) => format!("T{}", s(x)),
            (Tag::Arc(x, j), _) => format!("{}{j}", s(x)),
            (Tag::Hanging(x, j), _) => format!("T{}{j}", s(x)),
        }
    }
}

/// Verdict of the point taxonomy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Special,
    Dyadic,
    Flipflopping,
    Undetermined,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::Special => "special",
            Verdict::Dyadic => "dyadic",
            Verdict::Flipflopping => "flipflopping",
            Verdict::Undetermined => "undetermined",
        };
        f.write_str(s)
    }
}

/// One classified level.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelTag {
    pub level: usize,
    pub vertex: u64,
    pub tag: String,
}

/// Per-level tags and the resulting verdict.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationTrace {
    pub tower: String,
    pub point: String,
    pub budget: usize,
    pub tags: Vec<LevelTag>,
    pub verdict: Verdict,
}

/// Structure of one covering step seen from the basepoint.
struct Markers {
    /// For each side: the orbit of the base sheet under the voltage of the
    /// dart at the basepoint, starting with the base sheet.
    orbit: [Vec<u32>; 2],
}

fn side_of(label: usize) -> Side {
    if label == 0 {
        Side::A
    } else {
        Side::B
    }
}

fn check_taxonomy_tower(tower: &Tower, k: usize) -> Result<()> {
    let own = tower.alphabet().names().iter().filter(|n| *n == "a" || *n == "b").count();
    if own != 2 || tower.alphabet().index("a") != Some(0) || tower.alphabet().index("b") != Some(1) {
        return Err(Error::TaxonomyUnsupported(k));
    }
    if !matches!(tower.degree(k), 3 | 5) {
        return Err(Error::TaxonomyUnsupported(k + 1));
    }
    Ok(())
}

/// Tag of `v_(k+1)` by component decomposition of the materialized level
/// `k+1` after deleting the fiber over the basepoint of level `k`.
pub fn classify_level(tower: &Tower, k: usize, v_k: u64, v_next: u64) -> Result<Tag> {
    check_taxonomy_tower(tower, k)?;
    if tower.project(k, v_next) != v_k {
        return Err(Error::Policy(format!("({v_k}, {v_next}) is not coherent at level {k}")));
    }
    let g = tower.level(k + 1)?;
    let base_k = tower.basepoint(k);
    let base = tower.basepoint(k + 1);
    let fiber = tower.preimages(k, base_k);
    let mut located = vec![base];
    let mut arcs: Vec<(u64, Tag)> = Vec::new();
    let mut joints: Vec<(u64, Side, u8)> = Vec::new();
    for label in 0..2 {
        let m = cycle_length(tower, k, base_k, label) as i64;
        let r = cycle_length(tower, k + 1, base, label) as i64 / m;
        for j in 0..r {
            if j > 0 {
                let x = trace_from_base(tower, k + 1, &Word::power(label, j * m));
                located.push(x);
                joints.push((x, side_of(label), j as u8));
            }
            if m > 1 {
                let x = trace_from_base(tower, k + 1, &Word::power(label, j * m + 1));
                arcs.push((x, Tag::Arc(side_of(label), j as u8 + 1)));
            }
        }
    }
    let mut sorted = located.clone();
    sorted.sort();
    sorted.dedup();
    let mut want = fiber.clone();
    want.sort();
    if sorted != want {
        return Err(Error::TaxonomyUnsupported(k + 1));
    }
    if fiber.contains(&v_next) {
        return Ok(Tag::AtBase);
    }
    let mut removed = vec![false; g.vertex_count()];
    for &x in &fiber {
        removed[x as usize] = true;
    }
    let comp = components_without(g, &removed);
    let mut tags: BTreeMap<u32, Tag> = BTreeMap::new();
    let assign = |c: u32, t: Tag, tags: &mut BTreeMap<u32, Tag>| -> Result<()> {
        match tags.insert(c, t) {
            Some(old) if old != t => Err(Error::TaxonomyUnsupported(k + 1)),
            _ => Ok(()),
        }
    };
    for &(x, t) in &arcs {
        assign(comp[x as usize], t, &mut tags)?;
    }
    for &(x, side, j) in &joints {
        for l in g.alphabet().letters() {
            let y = g.step(x as u32, l).expect("complete");
            let c = comp[y as usize];
            if c != NONE && !tags.contains_key(&c) {
                assign(c, Tag::Hanging(side, j), &mut tags)?;
            }
        }
    }
    tags.get(&comp[v_next as usize]).copied().ok_or(Error::TaxonomyUnsupported(k + 1))
}

/// Components of `Λ_k` minus its basepoint, described level by level so
/// that deep levels never need to be materialized.
///
/// Valid for voltage towers over a one-vertex base whose voltages sit only
/// on darts at the basepoint. Then deleting the fiber over the basepoint of
/// `Λ_k` cuts `Λ_(k+1)` into pieces `(S, s)`: a component `S` of `Λ_k`
/// minus its basepoint, copied on sheet `s`.
struct Ladder {
    /// Per level `k ≥ 1`: class of piece `(S, s)` at index `S·d + s`.
    piece_class: Vec<Vec<u32>>,
    /// Per level `k ≥ 1`: class of the deleted vertex on sheet `s`.
    deleted_class: Vec<Vec<u32>>,
    /// Per level `k ≥ 1`: tag of piece `(S, s)`.
    piece_tag: Vec<Vec<Option<Tag>>>,
    /// Cycle lengths of `a`, `b` through the basepoint, per level.
    cycle: Vec<[u64; 2]>,
}

impl Ladder {
    fn build(tower: &Tower, levels: usize) -> Result<Self> {
        if tower.vertex_count(0) != 1 {
            return Err(Error::TaxonomyUnsupported(0));
        }
        let mut lad = Ladder {
            piece_class: vec![Vec::new()],
            deleted_class: vec![Vec::new()],
            piece_tag: vec![Vec::new()],
            cycle: vec![[1, 1]],
        };
        let mut classes = 0usize;
        for k in 0..levels {
            check_taxonomy_tower(tower, k)?;
            let step = tower.cover_step(k).ok_or(Error::TaxonomyUnsupported(k + 1))?;
            let base = tower.basepoint(k);
            if step.darts().any(|((v, _), _)| v != base) {
                return Err(Error::TaxonomyUnsupported(k + 1));
            }
            let d = step.degree as usize;
            let c = step.base_sheet;
            let ident: Vec<u32> = (0..d as u32).collect();
            let sigma = |l: usize| step.voltage(base, l).map(|p| p.to_vec()).unwrap_or_else(|| ident.clone());
            let npieces = classes * d;
            let del = |s: u32| npieces + s as usize;
            let mut dsu = Dsu::new(npieces + d);
            let mut touches: Vec<Vec<u32>> = vec![Vec::new(); npieces];
            let link = |dsu: &mut Dsu, touches: &mut Vec<Vec<u32>>, x: usize, y: usize| {
                let (dx, dy) = (x >= npieces, y >= npieces);
                if (dx && (x - npieces) as u32 == c) || (dy && (y - npieces) as u32 == c) {
                    if !dx {
                        touches[x].push(c);
                    }
                    if !dy {
                        touches[y].push(c);
                    }
                    return;
                }
                dsu.union(x as u32, y as u32);
                if dx && !dy {
                    touches[y].push((x - npieces) as u32);
                }
                if dy && !dx {
                    touches[x].push((y - npieces) as u32);
                }
            };
            let mut orbit: [Vec<u32>; 2] = [Vec::new(), Vec::new()];
            let mut cyc = [0u64; 2];
            for l in 0..2 {
                let sg = sigma(l);
                let t = tower.step(k, base, Letter::pos(l));
                let u = tower.step(k, base, Letter::neg(l));
                let st = (t != base).then(|| self_side(&lad, tower, k, t));
                let su = (u != base).then(|| self_side(&lad, tower, k, u));
                for s in 0..d as u32 {
                    let target = match st {
                        None => del(sg[s as usize]),
                        Some(side) => side as usize * d + sg[s as usize] as usize,
                    };
                    link(&mut dsu, &mut touches, del(s), target);
                    if let Some(side) = su {
                        link(&mut dsu, &mut touches, side as usize * d + s as usize, del(s));
                    }
                }
                let mut o = vec![c];
                let mut x = sg[c as usize];
                while x != c {
                    o.push(x);
                    x = sg[x as usize];
                }
                cyc[l] = lad.cycle[k][l] * o.len() as u64;
                orbit[l] = o;
            }
            let markers = Markers { orbit };
            let mut class_of_root: BTreeMap<u32, u32> = BTreeMap::new();
            let mut class = vec![NONE; npieces + d];
            for (x, slot) in class.iter_mut().enumerate() {
                if x == del(c) {
                    continue;
                }
                let r = dsu.find(x as u32);
                let next = class_of_root.len() as u32;
                *slot = *class_of_root.entry(r).or_insert(next);
            }
            let mut tags: Vec<Option<Tag>> = vec![None; npieces];
            for l in 0..2 {
                let t = tower.step(k, base, Letter::pos(l));
                if t == base {
                    continue;
                }
                let side = self_side(&lad, tower, k, t) as usize;
                let o = &markers.orbit[l];
                for j in 0..o.len() {
                    let sheet = o[(j + 1) % o.len()];
                    let p = side * d + sheet as usize;
                    let tag = Tag::Arc(side_of(l), j as u8 + 1);
                    if tags[p].is_some_and(|old| old != tag) {
                        return Err(Error::TaxonomyUnsupported(k + 1));
                    }
                    tags[p] = Some(tag);
                }
            }
            for p in 0..npieces {
                if tags[p].is_some() {
                    continue;
                }
                let mut at: Vec<u32> = touches[p].clone();
                at.sort();
                at.dedup();
                if at.len() != 1 {
                    continue;
                }
                for l in 0..2 {
                    if let Some(j) = markers.orbit[l].iter().position(|&s| s == at[0]) {
                        if j > 0 {
                            tags[p] = Some(Tag::Hanging(side_of(l), j as u8));
                        }
                    }
                }
            }
            classes = class_of_root.len();
            lad.piece_class.push(class[..npieces].to_vec());
            lad.deleted_class.push(class[npieces..].to_vec());
            lad.piece_tag.push(tags);
            lad.cycle.push(cyc);
        }
        Ok(lad)
    }

    /// Component class of `v ≠ basepoint` at level `k`, by walking the
    /// vertex's projections up from level 0.
    fn side(&self, tower: &Tower, k: usize, v: u64) -> Option<u32> {
        let mut chain = vec![v];
        for j in (0..k).rev() {
            let x = tower.project(j, *chain.last().expect("nonempty"));
            chain.push(x);
        }
        chain.reverse();
        let mut side: Option<u32> = None;
        for j in 0..k {
            side = self.lift(tower, j, side, chain[j + 1]);
        }
        side
    }

    /// Class at level `j+1` of vertex `v` lying over a level-`j` vertex
    /// whose class is `below` (`None` for the basepoint).
    fn lift(&self, tower: &Tower, j: usize, below: Option<u32>, v: u64) -> Option<u32> {
        let step = tower.cover_step(j).expect("voltage tower");
        let d = step.degree as u64;
        let s = (v % d) as u32;
        match below {
            None if s == step.base_sheet => None,
            None => Some(self.deleted_class[j + 1][s as usize]),
            Some(c) => Some(self.piece_class[j + 1][c as usize * d as usize + s as usize]),
        }
    }

    fn tag(&self, tower: &Tower, j: usize, below: Option<u32>, v: u64) -> Option<Tag> {
        let d = tower.degree(j) as usize;
        match below {
            None => Some(Tag::AtBase),
            Some(c) => self.piece_tag[j + 1][c as usize * d + (v % d as u64) as usize],
        }
    }
}

fn self_side(lad: &Ladder, tower: &Tower, k: usize, v: u64) -> u32 {
    lad.side(tower, k, v).expect("vertex is not the basepoint")
}

fn verdict_of(tags: &[Tag]) -> Verdict {
    let b = tags.len();
    if tags.iter().all(|&t| t == Tag::AtBase) {
        return Verdict::Special;
    }
    let tail = &tags[b / 2..];
    if tail.contains(&Tag::AtBase) {
        return Verdict::Undetermined;
    }
    let (early, late) = tail.split_at(tail.len() / 2);
    let h_early = early.iter().any(|t| t.is_hanging());
    let h_late = late.iter().any(|t| t.is_hanging());
    match (h_early, h_late) {
        (false, false) => Verdict::Dyadic,
        (true, true) => Verdict::Flipflopping,
        _ => Verdict::Undetermined,
    }
}

/// Tags of levels `1..=budget` and the taxonomy verdict.
///
/// The verdict looks at the second half of the levels: no hanging tags
/// there means dyadic, hanging tags in both quarters of it means
/// flip-flopping, anything else is undetermined.
pub fn classify_fiber_point(tower: &Tower, p: &mut FiberPoint, budget: usize) -> Result<ClassificationTrace> {
    if budget < 4 {
        return Err(Error::Config("classification budget must be at least 4".into()));
    }
    if budget > tower.max_level() {
        return Err(Error::LevelBudget { level: budget, budget: tower.max_level() });
    }
    let mut tags = Vec::with_capacity(budget);
    match Ladder::build(tower, budget) {
        Ok(lad) => {
            let mut side = None;
            for j in 0..budget {
                let v = p.vertex(tower, j + 1)?;
                let tag = lad.tag(tower, j, side, v).ok_or(Error::TaxonomyUnsupported(j + 1))?;
                side = lad.lift(tower, j, side, v);
                tags.push(tag);
            }
        }
        Err(Error::TaxonomyUnsupported(_)) if tower.vertex_count(budget) <= crate::towers::MATERIALIZE_LIMIT => {
            for j in 0..budget {
                let (a, b) = (p.vertex(tower, j)?, p.vertex(tower, j + 1)?);
                tags.push(classify_level(tower, j, a, b)?);
            }
        }
        Err(e) => return Err(e),
    }
    let level_tags = tags
        .iter()
        .enumerate()
        .map(|(j, t)| LevelTag { level: j + 1, vertex: p.prefix()[j + 1], tag: t.name(tower.degree(j)) })
        .collect();
    Ok(ClassificationTrace {
        tower: tower.name(),
        point: p.policy().to_string(),
        budget,
        tags: level_tags,
        verdict: verdict_of(&tags),
    })
}

/// Taxonomy tags at levels `1..=levels` through the structural route only.
pub fn structural_tags(tower: &Tower, p: &mut FiberPoint, levels: usize) -> Result<Vec<Tag>> {
    let lad = Ladder::build(tower, levels)?;
    let mut side = None;
    let mut out = Vec::new();
    for j in 0..levels {
        let v = p.vertex(tower, j + 1)?;
        out.push(lad.tag(tower, j, side, v).ok_or(Error::TaxonomyUnsupported(j + 1))?);
        side = lad.lift(tower, j, side, v);
    }
    Ok(out)
}

/// Parameters of [`estimate_ends`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndsParams {
    pub r_schedule: Vec<u32>,
    /// Outer radius of the first window row is `r_factor · r`.
    pub r_factor: u32,
    /// Rows per `r`: outer radii `(r_factor + j) · r` for `j < window`.
    pub window: u32,
    /// Levels a ball size must repeat before it counts as stable.
    pub confirm: u32,
    /// Deepest level used; the tower's default budget when absent.
    pub max_level: Option<usize>,
}

impl Default for EndsParams {
    fn default() -> Self {
        Self { r_schedule: vec![2, 4, 8, 16], r_factor: 4, window: 3, confirm: 2, max_level: None }
    }
}

impl EndsParams {
    pub fn validate(&self) -> Result<()> {
        if self.r_schedule.is_empty() || self.r_schedule.windows(2).any(|w| w[0] >= w[1]) || self.r_schedule[0] == 0 {
            return Err(Error::Config("r schedule must be a nonempty increasing list of positive radii".into()));
        }
        if self.r_factor < 4 {
            return Err(Error::Config("R factor must be at least 4".into()));
        }
        if self.window == 0 || self.confirm == 0 {
            return Err(Error::Config("window and confirm must be at least 1".into()));
        }
        Ok(())
    }

    fn outer(&self) -> u32 {
        (self.r_factor + self.window - 1) * self.r_schedule.last().copied().unwrap_or(0)
    }
}

/// One row of an ends table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndsRow {
    pub r: u32,
    #[serde(rename = "R")]
    pub big_r: u32,
    pub level: usize,
    pub components: usize,
    pub touching: usize,
}

/// Number of ends, or no agreement across scales.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EndsVerdict {
    Ends(usize),
    Unstable,
}

impl fmt::Display for EndsVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EndsVerdict::Ends(n) => write!(f, "{n}"),
            EndsVerdict::Unstable => write!(f, "unstable"),
        }
    }
}

impl Serialize for EndsVerdict {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EndsVerdict::Ends(n) => s.serialize_u64(*n as u64),
            EndsVerdict::Unstable => s.serialize_str("unstable"),
        }
    }
}

impl<'de> Deserialize<'de> for EndsVerdict {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Number(n) => n
                .as_u64()
                .map(|n| EndsVerdict::Ends(n as usize))
                .ok_or_else(|| serde::de::Error::custom("bad end count")),
            serde_json::Value::String(s) if s == "unstable" => Ok(EndsVerdict::Unstable),
            _ => Err(serde::de::Error::custom("expected a count or \"unstable\"")),
        }
    }
}

/// Plateau of the touching counts for one `r`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plateau {
    pub r: u32,
    pub value: Option<usize>,
}

/// Annulus counts on a stabilized ball and the resulting end count.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndsReport {
    pub tower: String,
    pub point: String,
    pub params: EndsParams,
    pub max_level: usize,
    pub ball_radius: u32,
    pub ball_level: usize,
    pub ball_size: usize,
    pub rows: Vec<EndsRow>,
    pub plateaus: Vec<Plateau>,
    pub verdict: EndsVerdict,
}

/// Ball of radius `big_r` around the point at the first level from which
/// its size repeats for `confirm` more levels. Such a ball embeds in the
/// leaf, and so do all smaller balls around the same point.
pub fn stable_ball(
    tower: &Tower,
    p: &mut FiberPoint,
    big_r: u32,
    confirm: u32,
    max_level: usize,
) -> Result<BallSnapshot> {
    if confirm == 0 {
        return Err(Error::Config("confirm must be at least 1".into()));
    }
    let max_level = max_level.min(tower.max_level());
    let mut recent: VecDeque<BallSnapshot> = VecDeque::new();
    let mut last = [0u64; 2];
    for k in 0..=max_level {
        let v = p.vertex(tower, k)?;
        let b = ball_in(&tower.view(k), v, big_r, k);
        if let Some(prev) = recent.back() {
            if b.len() < prev.len() {
                return Err(Error::CoveringViolation { level: k, before: prev.len() as u64, after: b.len() as u64 });
            }
        }
        last = [last[1], b.len() as u64];
        recent.push_back(b);
        if recent.len() > confirm as usize + 1 {
            recent.pop_front();
        }
        if recent.len() == confirm as usize + 1 && recent.iter().all(|x| x.len() == recent[0].len()) {
            return Ok(recent.pop_front().expect("nonempty"));
        }
    }
    Err(Error::Unstabilized { radius: big_r, level: max_level, last })
}

/// Counts of annulus components touching the outer sphere on one stable
/// ball, over a window of outer radii for every `r`.
///
/// The verdict is the plateau of the largest `r` when the two largest `r`
/// agree, otherwise `Unstable`.
pub fn estimate_ends(tower: &Tower, p: &mut FiberPoint, params: &EndsParams) -> Result<EndsReport> {
    params.validate()?;
    let max_level = params.max_level.unwrap_or_else(|| tower.default_budget());
    let big_r = params.outer();
    let ball = stable_ball(tower, p, big_r, params.confirm, max_level)?;
    let mut rows = Vec::new();
    let mut plateaus = Vec::new();
    for &r in &params.r_schedule {
        let mut values = Vec::new();
        for j in 0..params.window {
            let outer = (params.r_factor + j) * r;
            let (components, touching) = ball.annulus(r, outer);
            rows.push(EndsRow { r, big_r: outer, level: ball.level, components, touching });
            values.push(touching);
        }
        let value = values.iter().all(|&x| x == values[0]).then_some(values[0]);
        plateaus.push(Plateau { r, value });
    }
    let verdict = match plateaus.as_slice() {
        [.., a, b] if a.value.is_some() && a.value == b.value => EndsVerdict::Ends(b.value.unwrap_or(0)),
        [only] if only.value.is_some() => EndsVerdict::Ends(only.value.unwrap_or(0)),
        _ => EndsVerdict::Unstable,
    };
    Ok(EndsReport {
        tower: tower.name(),
        point: p.policy().to_string(),
        params: params.clone(),
        max_level,
        ball_radius: big_r,
        ball_level: ball.level,
        ball_size: ball.len(),
        rows,
        plateaus,
        verdict,
    })
}

/// One sampled point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRow {
    pub index: usize,
    pub seed: u64,
    pub classification: String,
    pub ends: String,
    pub ball_level: Option<usize>,
}

/// Per-point verdicts and histograms of a random sample.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleReport {
    pub tower: String,
    pub n: usize,
    pub seed: u64,
    pub budget: usize,
    pub params: EndsParams,
    pub classification_histogram: BTreeMap<String, usize>,
    pub ends_histogram: BTreeMap<String, usize>,
    pub samples: Vec<SampleRow>,
}

/// Seed of sample `i`, independent of execution order.
pub fn sample_seed(seed: u64, i: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng.next_u64()
}

/// Classifies and counts ends for `n` random points. `threads` fixes the
/// worker count (`None` uses all cores); results do not depend on it.
pub fn sample_fiber_points(
    tower: &Tower,
    n: usize,
    seed: u64,
    budget: usize,
    params: &EndsParams,
    threads: Option<usize>,
) -> Result<SampleReport> {
    if n == 0 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }
    params.validate()?;
    let run = |i: usize| -> SampleRow {
        let s = sample_seed(seed, i);
        let policy = Policy::Random { seed: s };
        let mut p = FiberPoint::new(policy.clone());
        let classification = match classify_fiber_point(tower, &mut p, budget) {
            Ok(t) => t.verdict.to_string(),
            Err(Error::TaxonomyUnsupported(_)) => "n/a".into(),
            Err(_) => Verdict::Undetermined.to_string(),
        };
        let mut p = FiberPoint::new(policy);
        let (ends, ball_level) = match estimate_ends(tower, &mut p, params) {
            Ok(r) => (r.verdict.to_string(), Some(r.ball_level)),
            Err(_) => (EndsVerdict::Unstable.to_string(), None),
        };
        SampleRow { index: i, seed: s, classification, ends, ball_level }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let samples: Vec<SampleRow> = pool.install(|| (0..n).into_par_iter().map(run).collect());
    let mut classification_histogram = BTreeMap::new();
    let mut ends_histogram = BTreeMap::new();
    for s in &samples {
        *classification_histogram.entry(s.classification.clone()).or_insert(0) += 1;
        *ends_histogram.entry(s.ends.clone()).or_insert(0) += 1;
    }
    Ok(SampleReport {
        tower: tower.name(),
        n,
        seed,
        budget,
        params: params.clone(),
        classification_histogram,
        ends_histogram,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::towers::{build_dyadic_tower, build_schori_tower, SchoriMethod};

    fn schori() -> Tower {
        build_schori_tower(6, SchoriMethod::Voltage).unwrap()
    }

    #[test]
    fn policy_parse_round_trip() {
        for s in ["id", "q", "qprime", "dyadic:1:1", "thread:a-spread", "thread:far", "word:ab", "random:7"] {
            assert_eq!(Policy::parse(s).unwrap().to_string(), s);
        }
        assert!(Policy::parse("random").is_err());
        assert!(Policy::parse("spiral").is_err());
    }

    #[test]
    fn q_words_unroll() {
        let t = schori();
        let mut p = FiberPoint::new(Policy::Q);
        let ab = t.alphabet();
        for (k, w) in ["", "a", "b^2a", "a^4b^2a", "b^8a^4b^2a"].iter().enumerate() {
            let expect = trace_from_base(&t, k, &Word::parse(ab, w).unwrap());
            assert_eq!(p.vertex(&t, k).unwrap(), expect, "level {k}");
        }
    }

    #[test]
    fn dyadic_exponents() {
        let t = schori();
        let mut p = FiberPoint::new(Policy::Dyadic { j: 1, l: 1 });
        for (k, l) in [(1, 1), (2, 3), (3, 3), (4, 11), (5, 11), (6, 43)] {
            assert_eq!(p.vertex(&t, k).unwrap(), trace_from_base(&t, k, &Word::power(0, l)), "level {k}");
        }
        assert_eq!(p.vertex(&t, 0).unwrap(), 0);
        let mut bad = FiberPoint::new(Policy::Dyadic { j: 2, l: 4 });
        assert!(bad.vertex(&t, 3).is_err());
    }

    #[test]
    fn random_points_are_coherent_and_reproducible() {
        let t = schori();
        let mut p = FiberPoint::new(Policy::Random { seed: 9 });
        let mut q = FiberPoint::new(Policy::Random { seed: 9 });
        p.vertex(&t, 6).unwrap();
        q.vertex(&t, 6).unwrap();
        assert_eq!(p.prefix(), q.prefix());
        for k in 0..6 {
            assert_eq!(t.project(k, p.prefix()[k + 1]), p.prefix()[k]);
        }
    }

    #[test]
    fn tag_names() {
        assert_eq!(Tag::Arc(Side::A, 1).name(3), "Aplus");
        assert_eq!(Tag::Arc(Side::B, 2).name(3), "Bminus");
        assert_eq!(Tag::Hanging(Side::A, 1).name(3), "TA");
        assert_eq!(Tag::Hanging(Side::B, 2).name(5), "TB2");
        assert_eq!(Tag::Arc(Side::A, 3).name(5), "A3");
    }

    #[test]
    fn a_powers_are_aplus() {
        let t = schori();
        for k in 1..5 {
            for i in 1..(1i64 << k) {
                let v = trace_from_base(&t, k + 1, &Word::power(0, i));
                let tag = classify_level(&t, k, t.project(k, v), v).unwrap();
                assert_eq!(tag, Tag::Arc(Side::A, 1), "k={k} i={i}");
            }
        }
        assert_eq!(classify_level(&t, 2, 0, 0).unwrap(), Tag::AtBase);
    }

    #[test]
    fn verdict_rules() {
        use Tag::*;
        let h = Hanging(Side::A, 1);
        let a = Arc(Side::A, 1);
        assert_eq!(verdict_of(&[AtBase; 8]), Verdict::Special);
        assert_eq!(verdict_of(&[AtBase, h, h, h, a, a, a, a]), Verdict::Dyadic);
        assert_eq!(verdict_of(&[AtBase, a, a, a, h, a, h, a]), Verdict::Flipflopping);
        assert_eq!(verdict_of(&[AtBase, a, a, a, h, a, a, a]), Verdict::Undetermined);
    }

    #[test]
    fn dyadic_tower_ball() {
        let t = build_dyadic_tower(6).unwrap();
        let mut p = FiberPoint::new(Policy::Id);
        let b = stable_ball(&t, &mut p, 3, 2, 10).unwrap();
        assert_eq!((b.level, b.len()), (3, 7));
        let b = stable_ball(&t, &mut FiberPoint::new(Policy::Id), 0, 2, 10).unwrap();
        assert_eq!((b.level, b.len()), (0, 1));
    }

    #[test]
    fn budget_error_carries_counts() {
        let t = build_dyadic_tower(6).unwrap();
        let e = stable_ball(&t, &mut FiberPoint::new(Policy::Id), 100, 2, 5).unwrap_err();
        assert_eq!(e, Error::Unstabilized { radius: 100, level: 5, last: [16, 32] });
    }

    #[test]
    fn sample_seeds_differ() {
        assert_ne!(sample_seed(42, 0), sample_seed(42, 1));
        assert_eq!(sample_seed(42, 3), sample_seed(42, 3));
    }
}
