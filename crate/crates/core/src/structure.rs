//! Binary block-sparsity structures over `d` views.
//!
//! A structure assigns every component (column) a non-empty set of views on
//! which its loadings are nonzero. Two structures are equivalent when they
//! differ only by a column permutation or by all-zero columns, so every
//! [`StructureMatrix`] is stored in canonical form: zero columns removed and
//! columns sorted by [`Pattern`] order (more views first, then
//! lexicographically descending with view 1 most significant). For `d = 3`
//! this is `111, 110, 101, 011, 100, 010, 001`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use ndarray::{Array2, ArrayView2};
use num_bigint::BigUint;

use crate::error::{Result, SlideError};

/// Largest view count a [`Pattern`] can hold.
pub const MAX_VIEWS: usize = 63;

/// A nonzero membership vector in `{0,1}^d`. View `i` (0-based) is bit `d-1-i`,
/// so numeric order of `bits` is lexicographic order with view 1 first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pattern {
    bits: u64,
    d: u8,
}

impl Pattern {
    pub fn from_bits(d: usize, bits: u64) -> Self {
        assert!((1..=MAX_VIEWS).contains(&d), "view count {d} out of range");
        assert!(bits < (1u64 << d), "pattern bits exceed view count");
        Pattern { bits, d: d as u8 }
    }

    pub fn from_views(d: usize, views: &[bool]) -> Self {
        assert_eq!(views.len(), d);
        let bits = views
            .iter()
            .fold(0u64, |acc, &on| (acc << 1) | u64::from(on));
        Pattern::from_bits(d, bits)
    }

    pub fn all(d: usize) -> Self {
        Pattern::from_bits(d, (1u64 << d) - 1)
    }

    pub fn single(d: usize, view: usize) -> Self {
        Pattern::from_bits(d, 1u64 << (d - 1 - view))
    }

    pub fn d(&self) -> usize {
        self.d as usize
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn contains(&self, view: usize) -> bool {
        view < self.d() && (self.bits >> (self.d() - 1 - view)) & 1 == 1
    }

    pub fn count_views(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn views(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.d()).filter(move |&i| self.contains(i))
    }

    pub fn parse(token: &str) -> Result<Self> {
        let d = token.len();
        if d == 0 || d > MAX_VIEWS {
            return Err(SlideError::Parse(format!("bad pattern token `{token}`")));
        }
        let mut bits = 0u64;
        for c in token.chars() {
            bits = (bits << 1)
                | match c {
                    '0' => 0,
                    '1' => 1,
                    _ => return Err(SlideError::Parse(format!("bad pattern token `{token}`"))),
                };
        }
        Ok(Pattern { bits, d: d as u8 })
    }
}

impl Ord for Pattern {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d
            .cmp(&other.d)
            .then_with(|| other.count_views().cmp(&self.count_views()))
            .then_with(|| other.bits.cmp(&self.bits))
    }
}

impl PartialOrd for Pattern {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.d() {
            f.write_str(if self.contains(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// All `2^d - 1` nonzero patterns in canonical order.
#[derive(Debug, Clone)]
pub struct PatternSet {
    d: usize,
    patterns: Vec<Pattern>,
}

impl PatternSet {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 || d > 20 {
            return Err(SlideError::TooLarge {
                count: format!("2^{d} - 1 patterns"),
                limit: (1 << 20) - 1,
            });
        }
        let mut patterns: Vec<Pattern> = (1..(1u64 << d)).map(|b| Pattern::from_bits(d, b)).collect();
        patterns.sort();
        Ok(PatternSet { d, patterns })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }
}

/// Canonical binary structure `S ∈ {0,1}^{d×r}` with no zero columns.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StructureMatrix {
    d: usize,
    columns: Vec<Pattern>,
}

impl StructureMatrix {
    pub fn empty(d: usize) -> Self {
        assert!((1..=MAX_VIEWS).contains(&d));
        StructureMatrix { d, columns: Vec::new() }
    }

    /// Build from arbitrary columns (empty ones allowed). Returns the canonical
    /// structure and, for each canonical column, the index of the input column
    /// it came from.
    pub fn from_patterns(d: usize, columns: &[Pattern]) -> (Self, Vec<usize>) {
        let mut order: Vec<usize> = (0..columns.len()).filter(|&j| !columns[j].is_empty()).collect();
        order.sort_by(|&a, &b| columns[a].cmp(&columns[b]));
        let columns = order.iter().map(|&j| columns[j]).collect();
        (StructureMatrix { d, columns }, order)
    }

    pub fn from_counts(d: usize, counts: &BTreeMap<Pattern, usize>) -> Self {
        let mut columns = Vec::new();
        for (&p, &k) in counts {
            assert_eq!(p.d(), d);
            if !p.is_empty() {
                columns.extend(std::iter::repeat_n(p, k));
            }
        }
        columns.sort();
        StructureMatrix { d, columns }
    }

    /// All-ones structure with `r` components.
    pub fn all_shared(d: usize, r: usize) -> Self {
        StructureMatrix { d, columns: vec![Pattern::all(d); r] }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn r(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Pattern] {
        &self.columns
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Is `s_ij = 1`?
    pub fn entry(&self, view: usize, column: usize) -> bool {
        self.columns[column].contains(view)
    }

    pub fn rank_by_pattern(&self) -> BTreeMap<Pattern, usize> {
        let mut map = BTreeMap::new();
        for &p in &self.columns {
            *map.entry(p).or_insert(0) += 1;
        }
        map
    }

    /// Contiguous column ranges sharing one pattern, in canonical order.
    pub fn pattern_blocks(&self) -> Vec<(Pattern, std::ops::Range<usize>)> {
        let mut blocks: Vec<(Pattern, std::ops::Range<usize>)> = Vec::new();
        for (j, &p) in self.columns.iter().enumerate() {
            match blocks.last_mut() {
                Some((q, range)) if *q == p => range.end = j + 1,
                _ => blocks.push((p, j..j + 1)),
            }
        }
        blocks
    }

    /// Number of components with nonzero loadings in `view`.
    pub fn view_rank(&self, view: usize) -> usize {
        self.columns.iter().filter(|p| p.contains(view)).count()
    }

    /// Total number of ones in `S`.
    pub fn ones(&self) -> usize {
        self.columns.iter().map(Pattern::count_views).sum()
    }

    /// Drop the last `self.r() - r` canonical columns.
    pub fn truncated(&self, r: usize) -> Self {
        StructureMatrix {
            d: self.d,
            columns: self.columns[..r.min(self.columns.len())].to_vec(),
        }
    }

    /// Remove the listed (canonical) column indices.
    pub fn without_columns(&self, drop: &[usize]) -> Self {
        let columns = self
            .columns
            .iter()
            .enumerate()
            .filter(|(j, _)| !drop.contains(j))
            .map(|(_, &p)| p)
            .collect();
        StructureMatrix { d: self.d, columns }
    }

    pub fn to_matrix(&self) -> Array2<u8> {
        Array2::from_shape_fn((self.d, self.r()), |(i, j)| u8::from(self.entry(i, j)))
    }

    /// Comma-separated pattern tokens, e.g. `111,110,100`. Empty for `r = 0`.
    pub fn encode(&self) -> String {
        self.columns.iter().map(Pattern::to_string).collect::<Vec<_>>().join(",")
    }

    /// Parse the comma-separated encoding. All-zero tokens are accepted and dropped.
    pub fn parse(text: &str, d: usize) -> Result<Self> {
        if d == 0 || d > MAX_VIEWS {
            return Err(SlideError::Parse(format!("view count {d} out of range")));
        }
        let text = text.trim();
        let mut cols = Vec::new();
        if !text.is_empty() {
            for token in text.split(',') {
                let token = token.trim();
                if token.len() != d {
                    return Err(SlideError::Parse(format!(
                        "pattern `{token}` has length {}, expected {d}",
                        token.len()
                    )));
                }
                cols.push(Pattern::parse(token)?);
            }
        }
        Ok(Self::from_patterns(d, &cols).0)
    }

    /// Parse, inferring `d` from the first token.
    pub fn parse_infer(text: &str) -> Result<Self> {
        let first = text
            .split(',')
            .next()
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .ok_or_else(|| SlideError::Parse("empty structure needs an explicit view count".into()))?;
        Self::parse(text, first.len())
    }

    /// Human-readable multiplicities, e.g. `11:2 10:2 01:2`.
    pub fn describe(&self) -> String {
        if self.is_empty() {
            return "(empty)".to_string();
        }
        self.rank_by_pattern()
            .iter()
            .map(|(p, k)| format!("{p}:{k}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl fmt::Display for StructureMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

/// Canonicalise a raw `d × r'` binary matrix. Returns the structure and the
/// input column index behind each canonical column, so callers can permute
/// matching score and loading columns.
pub fn canonicalize(raw: ArrayView2<u8>) -> Result<(StructureMatrix, Vec<usize>)> {
    let (d, r) = raw.dim();
    if d == 0 || d > MAX_VIEWS {
        return Err(SlideError::DimensionMismatch(format!("view count {d} out of range")));
    }
    let mut cols = Vec::with_capacity(r);
    for j in 0..r {
        let mut flags = Vec::with_capacity(d);
        for i in 0..d {
            match raw[[i, j]] {
                0 => flags.push(false),
                1 => flags.push(true),
                v => return Err(SlideError::Parse(format!("structure entry {v} is not binary"))),
            }
        }
        cols.push(Pattern::from_views(d, &flags));
    }
    Ok(StructureMatrix::from_patterns(d, &cols))
}

pub fn equivalent(a: &StructureMatrix, b: &StructureMatrix) -> Result<bool> {
    if a.d != b.d {
        return Err(SlideError::DimensionMismatch(format!(
            "structures over {} and {} views",
            a.d, b.d
        )));
    }
    Ok(a.columns == b.columns)
}

/// Number of structures with at most `r` columns that are pairwise
/// non-equivalent: `C(r + 2^d - 1, 2^d - 1)`.
pub fn count_structures(d: usize, r: usize) -> Result<BigUint> {
    if d == 0 {
        return Err(SlideError::DimensionMismatch("need at least one view".into()));
    }
    if d >= 64 {
        return Err(SlideError::Overflow(format!("2^{d} does not fit in 64 bits")));
    }
    let k = (1u64 << d) - 1;
    let n = (r as u64)
        .checked_add(k)
        .ok_or_else(|| SlideError::Overflow(format!("r + 2^{d} - 1")))?;
    Ok(binomial(n, k))
}

fn binomial(n: u64, k: u64) -> BigUint {
    let k = k.min(n - k);
    let mut acc = BigUint::from(1u32);
    // acc stays integral: after step i it equals C(n - k + i, i)
    for i in 1..=k {
        acc *= BigUint::from(n - k + i);
        acc /= BigUint::from(i);
    }
    acc
}

/// Cap on [`enumerate_structures`] output.
pub const ENUMERATION_LIMIT: u64 = 1_000_000;

/// Every canonical structure with at most `r` columns.
pub fn enumerate_structures(d: usize, r: usize) -> Result<Vec<StructureMatrix>> {
    let count = count_structures(d, r)?;
    if count > BigUint::from(ENUMERATION_LIMIT) {
        return Err(SlideError::TooLarge { count: count.to_string(), limit: ENUMERATION_LIMIT });
    }
    let set = PatternSet::new(d)?;
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(r);
    for size in 0..=r {
        multisets(set.patterns(), 0, size, &mut current, &mut |cols| {
            out.push(StructureMatrix { d, columns: cols.to_vec() });
        });
    }
    Ok(out)
}

fn multisets(
    patterns: &[Pattern],
    start: usize,
    remaining: usize,
    current: &mut Vec<Pattern>,
    emit: &mut dyn FnMut(&[Pattern]),
) {
    if remaining == 0 {
        emit(current);
        return;
    }
    for idx in start..patterns.len() {
        current.push(patterns[idx]);
        multisets(patterns, idx, remaining - 1, current, emit);
        current.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn s(text: &str) -> StructureMatrix {
        StructureMatrix::parse_infer(text).unwrap()
    }

    #[test]
    fn canonical_order_for_three_views() {
        let set = PatternSet::new(3).unwrap();
        let names: Vec<String> = set.patterns().iter().map(|p| p.to_string()).collect();
        assert_eq!(names, ["111", "110", "101", "011", "100", "010", "001"]);
        assert_eq!(PatternSet::new(2).unwrap().len(), 3);
    }

    #[test]
    fn canonicalize_drops_zero_columns() {
        let raw = array![[1u8, 0, 1], [1, 0, 0]];
        let (st, perm) = canonicalize(raw.view()).unwrap();
        assert_eq!(st.encode(), "11,10");
        assert_eq!(st.r(), 2);
        assert_eq!(perm, vec![0, 2]);
    }

    #[test]
    fn canonicalize_returns_permutation() {
        let raw = array![[0u8, 1, 1], [1, 0, 1]];
        let (st, perm) = canonicalize(raw.view()).unwrap();
        assert_eq!(st.encode(), "11,10,01");
        assert_eq!(perm, vec![2, 1, 0]);
    }

    #[test]
    fn all_zero_input_is_empty() {
        let raw = Array2::<u8>::zeros((2, 3));
        let (st, _) = canonicalize(raw.view()).unwrap();
        assert_eq!(st.r(), 0);
        assert_eq!(st.encode(), "");
    }

    #[test]
    fn non_binary_entries_rejected() {
        assert!(canonicalize(array![[2u8]].view()).is_err());
    }

    #[test]
    fn equivalence_examples() {
        let a = s("11,10,01");
        let shuffled = canonicalize(array![[0u8, 1, 1], [1, 1, 0]].view()).unwrap().0;
        assert!(equivalent(&a, &shuffled).unwrap());
        assert!(!equivalent(&s("11"), &s("10")).unwrap());
        let padded = canonicalize(array![[1u8, 1, 0, 0], [1, 0, 1, 0]].view()).unwrap().0;
        assert!(equivalent(&a, &padded).unwrap());
        assert!(equivalent(&s("11"), &s("111")).is_err());
    }

    #[test]
    fn counting_examples() {
        assert_eq!(count_structures(2, 0).unwrap(), BigUint::from(1u32));
        assert_eq!(count_structures(2, 2).unwrap(), BigUint::from(10u32));
        assert_eq!(count_structures(3, 1).unwrap(), BigUint::from(8u32));
        assert_eq!(count_structures(1, 5).unwrap(), BigUint::from(6u32));
        assert!(matches!(count_structures(64, 1), Err(SlideError::Overflow(_))));
    }

    #[test]
    fn large_count_matches_multiplicative_formula() {
        // C(115, 15) = prod_{i=1}^{15} (100 + i) / i
        let mut num = BigUint::from(1u32);
        let mut den = BigUint::from(1u32);
        for i in 1..=15u32 {
            num *= BigUint::from(100 + i);
            den *= BigUint::from(i);
        }
        assert_eq!(count_structures(4, 100).unwrap(), num / den);
    }

    #[test]
    fn enumeration_examples() {
        let one = enumerate_structures(1, 2).unwrap();
        let enc: Vec<String> = one.iter().map(|s| s.encode()).collect();
        assert_eq!(enc, ["", "1", "1,1"]);
        let two = enumerate_structures(2, 1).unwrap();
        let enc: Vec<String> = two.iter().map(|s| s.encode()).collect();
        assert_eq!(enc, ["", "11", "10", "01"]);
        assert!(matches!(enumerate_structures(4, 100), Err(SlideError::TooLarge { .. })));
    }

    #[test]
    fn encoding_round_trip_and_blocks() {
        let st = s("100,111,110,111");
        assert_eq!(st.encode(), "111,111,110,100");
        assert_eq!(StructureMatrix::parse(&st.encode(), 3).unwrap(), st);
        let blocks = st.pattern_blocks();
        assert_eq!(blocks.len(), 3);
        assert_eq!(blocks[0].1, 0..2);
        assert_eq!(st.view_rank(0), 4);
        assert_eq!(st.view_rank(2), 2);
        assert_eq!(st.ones(), 9);
        assert_eq!(StructureMatrix::parse("", 2).unwrap().r(), 0);
        assert!(StructureMatrix::parse("11,1", 2).is_err());
        assert_eq!(st.describe(), "111:2 110:1 100:1");
    }
}
