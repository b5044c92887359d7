//! Countable discrete amenable groups with concrete normal forms, and the
//! right Følner families used to average over them.
//!
//! Three models are provided:
//!
//! * `Zd(d)`: the free abelian group on `d` generators, elements are integer
//!   vectors.
//! * `Finite`: a finite group given by its multiplication table, elements are
//!   row indices of the table.
//! * `Heisenberg`: the discrete Heisenberg group, elements are the entries
//!   `(a, b, c)` of the upper unitriangular integer matrix
//!   `[[1, a, c], [0, 1, b], [0, 0, 1]]`. In terms of the generators
//!   `x = (1,0,0)`, `y = (0,1,0)` and the central commutator
//!   `z = x y x⁻¹ y⁻¹ = (0,0,1)` this is the element `x^a y^b z^(c - ab)`.
//!
//! Følner sets are boxes (`[0,k)^d` for `Zd`, `[0,k)×[0,k)×[0,k²)` for the
//! Heisenberg group) or the whole group for finite models. Defects are exact
//! rationals computed with right translation `F_k g`.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use num_rational::Ratio;
use thiserror::Error;

/// Exact Følner defect `|F Δ F g| / |F|`.
pub type Defect = Ratio<u64>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("group element {element} does not belong to model {expected}")]
    ModelMismatch {
        element: String,
        expected: ModelTag,
    },
    #[error("element coordinates {coords:?} are not a valid normal form for {tag}")]
    InvalidCoordinates { tag: ModelTag, coords: Vec<i64> },
    #[error("Følner index must be at least 1")]
    ZeroIndex,
    #[error("multiplication table is not square ({rows} rows, row {row} has {len} entries)")]
    TableShape { rows: usize, row: usize, len: usize },
    #[error("multiplication table entry ({row}, {col}) = {value} is out of range")]
    TableEntry { row: usize, col: usize, value: usize },
    #[error("multiplication table is not associative at ({0}, {1}, {2})")]
    NotAssociative(usize, usize, usize),
    #[error("multiplication table has no two-sided identity")]
    NoIdentity,
    #[error("element {0} has no two-sided inverse")]
    NoInverse(usize),
    #[error("generator index {index} out of range for a group of order {order}")]
    GeneratorOutOfRange { index: usize, order: usize },
    #[error("generators reach only {reached} of {order} elements")]
    NotGenerating { reached: usize, order: usize },
    #[error("relation {index} evaluates to {value} instead of the identity")]
    RelationViolated { index: usize, value: String },
    #[error("word letter refers to generator {generator}, but the model has {count}")]
    UnknownGenerator { generator: usize, count: usize },
    #[error("empty group")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelTag {
    Zd(usize),
    Finite(usize),
    Heisenberg,
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelTag::Zd(d) => write!(f, "Z^{d}"),
            ModelTag::Finite(n) => write!(f, "finite group of order {n}"),
            ModelTag::Heisenberg => write!(f, "Heisenberg group"),
        }
    }
}

/// An element in normal form. Two elements are equal iff their coordinates
/// are equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupElement {
    tag: ModelTag,
    coords: Vec<i64>,
}

impl GroupElement {
    pub fn tag(&self) -> ModelTag {
        self.tag
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// One letter of a word in the generators: `g_i` or `g_i⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Letter {
    pub generator: usize,
    pub inverse: bool,
}

impl Letter {
    pub fn new(generator: usize) -> Self {
        Letter { generator, inverse: false }
    }

    pub fn inv(generator: usize) -> Self {
        Letter { generator, inverse: true }
    }

    /// Signed one-based encoding: `i + 1` for `g_i`, `-(i + 1)` for `g_i⁻¹`.
    pub fn from_signed(code: i64) -> Option<Self> {
        if code == 0 {
            return None;
        }
        let generator = (code.unsigned_abs() - 1) as usize;
        Some(Letter { generator, inverse: code < 0 })
    }

    pub fn to_signed(self) -> i64 {
        let v = self.generator as i64 + 1;
        if self.inverse {
            -v
        } else {
            v
        }
    }
}

pub type Word = Vec<Letter>;

/// Validated multiplication table of a finite group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteTable {
    table: Vec<Vec<usize>>,
    identity: usize,
    inverses: Vec<usize>,
}

impl FiniteTable {
    /// Checks shape, range, associativity (exhaustively), identity and
    /// inverses. `table[g][h]` is the product `g h`.
    pub fn new(table: Vec<Vec<usize>>) -> Result<Self, GroupError> {
        let n = table.len();
        if n == 0 {
            return Err(GroupError::Empty);
        }
        for (row, r) in table.iter().enumerate() {
            if r.len() != n {
                return Err(GroupError::TableShape { rows: n, row, len: r.len() });
            }
            for (col, &value) in r.iter().enumerate() {
                if value >= n {
                    return Err(GroupError::TableEntry { row, col, value });
                }
            }
        }
        for g in 0..n {
            for h in 0..n {
                for l in 0..n {
                    if table[table[g][h]][l] != table[g][table[h][l]] {
                        return Err(GroupError::NotAssociative(g, h, l));
                    }
                }
            }
        }
        let identity = (0..n)
            .find(|&e| (0..n).all(|g| table[e][g] == g && table[g][e] == g))
            .ok_or(GroupError::NoIdentity)?;
        let mut inverses = Vec::with_capacity(n);
        for g in 0..n {
            let inv = (0..n)
                .find(|&h| table[g][h] == identity && table[h][g] == identity)
                .ok_or(GroupError::NoInverse(g))?;
            inverses.push(inv);
        }
        Ok(FiniteTable { table, identity, inverses })
    }

    pub fn order(&self) -> usize {
        self.table.len()
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    pub fn product(&self, g: usize, h: usize) -> usize {
        self.table[g][h]
    }

    pub fn inverse(&self, g: usize) -> usize {
        self.inverses[g]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.table
    }

    /// The symmetric group on three letters, elements indexed by the
    /// permutations of `[0, 1, 2]` in lexicographic order; `g h` is the
    /// composition "apply `h` first, then `g`".
    pub fn symmetric3() -> Self {
        let perms: Vec<[usize; 3]> = vec![
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let index = |p: [usize; 3]| perms.iter().position(|q| *q == p).unwrap();
        let table = perms
            .iter()
            .map(|g| {
                perms
                    .iter()
                    .map(|h| index([g[h[0]], g[h[1]], g[h[2]]]))
                    .collect()
            })
            .collect();
        FiniteTable::new(table).expect("S3 table is a group")
    }

    /// The cyclic group of order `n`.
    pub fn cyclic(n: usize) -> Self {
        let table = (0..n).map(|g| (0..n).map(|h| (g + h) % n).collect()).collect();
        FiniteTable::new(table).expect("cyclic table is a group")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupKind {
    Zd(usize),
    Finite(FiniteTable),
    Heisenberg,
}

/// A group together with an ordered generating set and the relations that
/// the generators satisfy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupModel {
    kind: GroupKind,
    generators: Vec<GroupElement>,
    relations: Vec<Word>,
    /// For finite models: a shortest word in the generators for every element.
    words: Vec<Word>,
}

impl GroupModel {
    /// `Z^d` with the standard basis as generators and pairwise commutators
    /// as relations.
    pub fn zd(dim: usize) -> Self {
        let tag = ModelTag::Zd(dim);
        let generators = (0..dim)
            .map(|i| {
                let mut coords = vec![0; dim];
                coords[i] = 1;
                GroupElement { tag, coords }
            })
            .collect();
        let mut relations = Vec::new();
        for i in 0..dim {
            for j in (i + 1)..dim {
                relations.push(commutator(&[Letter::new(i)], &[Letter::new(j)]));
            }
        }
        GroupModel { kind: GroupKind::Zd(dim), generators, relations, words: Vec::new() }
    }

    /// The discrete Heisenberg group with generators `x = (1,0,0)` and
    /// `y = (0,1,0)`; relations say that `[x, y]` is central.
    pub fn heisenberg() -> Self {
        let tag = ModelTag::Heisenberg;
        let generators = vec![
            GroupElement { tag, coords: vec![1, 0, 0] },
            GroupElement { tag, coords: vec![0, 1, 0] },
        ];
        let z = commutator(&[Letter::new(0)], &[Letter::new(1)]);
        let relations = vec![
            commutator(&[Letter::new(0)], &z),
            commutator(&[Letter::new(1)], &z),
        ];
        GroupModel { kind: GroupKind::Heisenberg, generators, relations, words: Vec::new() }
    }

    /// A finite group from a validated table. Generators are element indices;
    /// they must generate the whole group and satisfy every relation.
    pub fn finite(
        table: FiniteTable,
        generators: &[usize],
        relations: Vec<Word>,
    ) -> Result<Self, GroupError> {
        let order = table.order();
        let tag = ModelTag::Finite(order);
        for &index in generators {
            if index >= order {
                return Err(GroupError::GeneratorOutOfRange { index, order });
            }
        }
        let words = shortest_words(&table, generators);
        let reached = words.iter().filter(|w| w.is_some()).count();
        if reached != order {
            return Err(GroupError::NotGenerating { reached, order });
        }
        let model = GroupModel {
            kind: GroupKind::Finite(table),
            generators: generators
                .iter()
                .map(|&i| GroupElement { tag, coords: vec![i as i64] })
                .collect(),
            relations,
            words: words.into_iter().map(Option::unwrap).collect(),
        };
        model.check_relations()?;
        Ok(model)
    }

    pub fn kind(&self) -> &GroupKind {
        &self.kind
    }

    pub fn tag(&self) -> ModelTag {
        match &self.kind {
            GroupKind::Zd(d) => ModelTag::Zd(*d),
            GroupKind::Finite(t) => ModelTag::Finite(t.order()),
            GroupKind::Heisenberg => ModelTag::Heisenberg,
        }
    }

    pub fn generators(&self) -> &[GroupElement] {
        &self.generators
    }

    pub fn relations(&self) -> &[Word] {
        &self.relations
    }

    /// Shortest word for a finite-group element (breadth-first in generator
    /// order, positive letters before inverses).
    pub fn finite_word(&self, g: &GroupElement) -> Option<&Word> {
        match &self.kind {
            GroupKind::Finite(_) if self.contains(g) => self.words.get(g.coords[0] as usize),
            _ => None,
        }
    }

    pub fn identity(&self) -> GroupElement {
        let tag = self.tag();
        let coords = match &self.kind {
            GroupKind::Zd(d) => vec![0; *d],
            GroupKind::Finite(t) => vec![t.identity() as i64],
            GroupKind::Heisenberg => vec![0, 0, 0],
        };
        GroupElement { tag, coords }
    }

    /// Builds an element from raw coordinates, checking the normal form.
    pub fn element(&self, coords: Vec<i64>) -> Result<GroupElement, GroupError> {
        let tag = self.tag();
        let ok = match &self.kind {
            GroupKind::Zd(d) => coords.len() == *d,
            GroupKind::Finite(t) => {
                coords.len() == 1 && coords[0] >= 0 && (coords[0] as usize) < t.order()
            }
            GroupKind::Heisenberg => coords.len() == 3,
        };
        if ok {
            Ok(GroupElement { tag, coords })
        } else {
            Err(GroupError::InvalidCoordinates { tag, coords })
        }
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        if g.tag != self.tag() {
            return false;
        }
        match &self.kind {
            GroupKind::Zd(d) => g.coords.len() == *d,
            GroupKind::Finite(t) => {
                g.coords.len() == 1 && g.coords[0] >= 0 && (g.coords[0] as usize) < t.order()
            }
            GroupKind::Heisenberg => g.coords.len() == 3,
        }
    }

    fn check(&self, g: &GroupElement) -> Result<(), GroupError> {
        if self.contains(g) {
            Ok(())
        } else {
            Err(GroupError::ModelMismatch { element: g.to_string(), expected: self.tag() })
        }
    }

    pub fn multiply(&self, g: &GroupElement, h: &GroupElement) -> Result<GroupElement, GroupError> {
        self.check(g)?;
        self.check(h)?;
        Ok(self.multiply_unchecked(g, h))
    }

    fn multiply_unchecked(&self, g: &GroupElement, h: &GroupElement) -> GroupElement {
        let coords = match &self.kind {
            GroupKind::Zd(_) => g.coords.iter().zip(&h.coords).map(|(a, b)| a + b).collect(),
            GroupKind::Finite(t) => {
                vec![t.product(g.coords[0] as usize, h.coords[0] as usize) as i64]
            }
            GroupKind::Heisenberg => {
                let (a, b, c) = (g.coords[0], g.coords[1], g.coords[2]);
                let (a2, b2, c2) = (h.coords[0], h.coords[1], h.coords[2]);
                vec![a + a2, b + b2, c + c2 + a * b2]
            }
        };
        GroupElement { tag: g.tag, coords }
    }

    pub fn inverse(&self, g: &GroupElement) -> Result<GroupElement, GroupError> {
        self.check(g)?;
        let coords = match &self.kind {
            GroupKind::Zd(_) => g.coords.iter().map(|a| -a).collect(),
            GroupKind::Finite(t) => vec![t.inverse(g.coords[0] as usize) as i64],
            GroupKind::Heisenberg => {
                let (a, b, c) = (g.coords[0], g.coords[1], g.coords[2]);
                vec![-a, -b, a * b - c]
            }
        };
        Ok(GroupElement { tag: g.tag, coords })
    }

    pub fn evaluate_word(&self, word: &[Letter]) -> Result<GroupElement, GroupError> {
        let mut acc = self.identity();
        for letter in word {
            let g = self.generators.get(letter.generator).ok_or(GroupError::UnknownGenerator {
                generator: letter.generator,
                count: self.generators.len(),
            })?;
            let g = if letter.inverse { self.inverse(g)? } else { g.clone() };
            acc = self.multiply_unchecked(&acc, &g);
        }
        Ok(acc)
    }

    /// Every relation word must evaluate to the identity.
    pub fn check_relations(&self) -> Result<(), GroupError> {
        let e = self.identity();
        for (index, word) in self.relations.iter().enumerate() {
            let value = self.evaluate_word(word)?;
            if value != e {
                return Err(GroupError::RelationViolated { index, value: value.to_string() });
            }
        }
        Ok(())
    }

    /// All elements of a finite model, in index order.
    pub fn finite_elements(&self) -> Option<Vec<GroupElement>> {
        match &self.kind {
            GroupKind::Finite(t) => {
                let tag = self.tag();
                Some((0..t.order()).map(|i| GroupElement { tag, coords: vec![i as i64] }).collect())
            }
            _ => None,
        }
    }
}

/// `u v u⁻¹ v⁻¹` as a word.
pub fn commutator(u: &[Letter], v: &[Letter]) -> Word {
    let invert = |w: &[Letter]| -> Word {
        w.iter().rev().map(|l| Letter { generator: l.generator, inverse: !l.inverse }).collect()
    };
    let mut out = Vec::with_capacity(2 * (u.len() + v.len()));
    out.extend_from_slice(u);
    out.extend_from_slice(v);
    out.extend(invert(u));
    out.extend(invert(v));
    out
}

fn shortest_words(table: &FiniteTable, generators: &[usize]) -> Vec<Option<Word>> {
    let n = table.order();
    let mut words: Vec<Option<Word>> = vec![None; n];
    words[table.identity()] = Some(Vec::new());
    let mut queue = VecDeque::from([table.identity()]);
    let mut letters: Vec<(Letter, usize)> =
        generators.iter().enumerate().map(|(i, &g)| (Letter::new(i), g)).collect();
    letters.extend(generators.iter().enumerate().map(|(i, &g)| (Letter::inv(i), table.inverse(g))));
    while let Some(g) = queue.pop_front() {
        for &(letter, s) in &letters {
            let h = table.product(g, s);
            if words[h].is_none() {
                let mut w = words[g].clone().unwrap();
                w.push(letter);
                words[h] = Some(w);
                queue.push_back(h);
            }
        }
    }
    words
}

/// A group with its canonical Følner family: boxes for `Zd` and the
/// Heisenberg group, the whole group for finite models. Families are nested,
/// `F_k ⊆ F_{k+1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FolnerFamily {
    model: GroupModel,
}

impl FolnerFamily {
    pub fn new(model: GroupModel) -> Self {
        FolnerFamily { model }
    }

    pub fn model(&self) -> &GroupModel {
        &self.model
    }

    pub fn rule(&self) -> &'static str {
        match self.model.kind {
            GroupKind::Zd(_) => "box [0,k)^d",
            GroupKind::Finite(_) => "whole group",
            GroupKind::Heisenberg => "box [0,k)x[0,k)x[0,k^2)",
        }
    }

    /// `|F_k|`.
    pub fn size(&self, k: u64) -> Result<u64, GroupError> {
        if k == 0 {
            return Err(GroupError::ZeroIndex);
        }
        Ok(match &self.model.kind {
            GroupKind::Zd(d) => k.pow(*d as u32),
            GroupKind::Finite(t) => t.order() as u64,
            GroupKind::Heisenberg => k.pow(4),
        })
    }

    /// Membership in `F_k` for an element of the model.
    pub fn contains(&self, k: u64, g: &GroupElement) -> bool {
        if !self.model.contains(g) || k == 0 {
            return false;
        }
        let k = k as i64;
        match &self.model.kind {
            GroupKind::Zd(_) => g.coords.iter().all(|&a| (0..k).contains(&a)),
            GroupKind::Finite(_) => true,
            GroupKind::Heisenberg => {
                (0..k).contains(&g.coords[0])
                    && (0..k).contains(&g.coords[1])
                    && (0..k * k).contains(&g.coords[2])
            }
        }
    }

    /// Enumerates `F_k` in lexicographic coordinate order, duplicate-free.
    pub fn set(&self, k: u64) -> Result<Vec<GroupElement>, GroupError> {
        let size = self.size(k)?;
        let mut out = Vec::with_capacity(size as usize);
        self.for_each(k, |g| out.push(g))?;
        Ok(out)
    }

    /// Visits `F_k` in the same order as [`FolnerFamily::set`] without
    /// materializing it.
    pub fn for_each(&self, k: u64, mut visit: impl FnMut(GroupElement)) -> Result<(), GroupError> {
        if k == 0 {
            return Err(GroupError::ZeroIndex);
        }
        let tag = self.model.tag();
        let k = k as i64;
        match &self.model.kind {
            GroupKind::Zd(d) => {
                let d = *d;
                let mut coords = vec![0i64; d];
                loop {
                    visit(GroupElement { tag, coords: coords.clone() });
                    // odometer increment, last coordinate fastest
                    let mut i = d;
                    loop {
                        if i == 0 {
                            return Ok(());
                        }
                        i -= 1;
                        coords[i] += 1;
                        if coords[i] < k {
                            break;
                        }
                        coords[i] = 0;
                    }
                }
            }
            GroupKind::Finite(t) => {
                for i in 0..t.order() {
                    visit(GroupElement { tag, coords: vec![i as i64] });
                }
                Ok(())
            }
            GroupKind::Heisenberg => {
                for a in 0..k {
                    for b in 0..k {
                        for c in 0..k * k {
                            visit(GroupElement { tag, coords: vec![a, b, c] });
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// `|F_k ∩ F_k g|`, counted row by row without enumerating the box.
    pub fn overlap(&self, k: u64, g: &GroupElement) -> Result<u64, GroupError> {
        self.model.check(g)?;
        let size = self.size(k)?;
        let k = k as i64;
        let span = |shift: i64, len: i64| (len - shift.abs()).max(0) as u64;
        Ok(match &self.model.kind {
            GroupKind::Zd(_) => g.coords.iter().map(|&s| span(s, k)).product(),
            GroupKind::Finite(_) => size,
            GroupKind::Heisenberg => {
                // h = (a,b,c) ∈ F_k with h g = (a+p, b+q, c+r+a q) ∈ F_k
                let (p, q, r) = (g.coords[0], g.coords[1], g.coords[2]);
                let rows = span(q, k);
                let kk = k * k;
                let mut total = 0u64;
                for a in 0..k {
                    if (0..k).contains(&(a + p)) {
                        total += span(r + a * q, kk);
                    }
                }
                rows * total
            }
        })
    }

    /// `|F_k Δ F_k g|` via `|F_k| + |F_k g| − 2 |F_k ∩ F_k g|`.
    pub fn symmetric_difference_size(&self, k: u64, g: &GroupElement) -> Result<u64, GroupError> {
        let size = self.size(k)?;
        let overlap = self.overlap(k, g)?;
        // right translation is a bijection, |F_k g| = |F_k|
        Ok(size + size - 2 * overlap)
    }

    /// `|F_k Δ F_k g|` by materializing both sets. Only for small `k`.
    pub fn symmetric_difference_enumerated(
        &self,
        k: u64,
        g: &GroupElement,
    ) -> Result<u64, GroupError> {
        self.model.check(g)?;
        let left: HashSet<GroupElement> = self.set(k)?.into_iter().collect();
        let right: HashSet<GroupElement> =
            left.iter().map(|h| self.model.multiply_unchecked(h, g)).collect();
        Ok(left.symmetric_difference(&right).count() as u64)
    }

    /// The exact defect `|F_k Δ F_k g| / |F_k|`.
    pub fn defect(&self, k: u64, g: &GroupElement) -> Result<Defect, GroupError> {
        let sym = self.symmetric_difference_size(k, g)?;
        Ok(Ratio::new(sym, self.size(k)?))
    }

    /// Largest defect over the model's generators.
    pub fn max_generator_defect(&self, k: u64) -> Result<Defect, GroupError> {
        let mut worst = Ratio::from_integer(0);
        for g in self.model.generators() {
            worst = worst.max(self.defect(k, g)?);
        }
        Ok(worst)
    }
}

pub fn defect_to_f64(d: Defect) -> f64 {
    *d.numer() as f64 / *d.denom() as f64
}
