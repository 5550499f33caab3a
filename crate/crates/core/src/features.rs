//! Node and triangle features, hashed into fixed-size binary vectors.
//!
//! A vector of length `l` has four equal segments, in order: old-side node
//! features, new-side node features, old-side triangles, new-side triangles.
//! Each feature sets the bit `sum(fnv1a64(part)) mod (l / 4)` of its segment.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::grammar::{NodeId, NodeKind, ParseTree};
use crate::ingestion::PreparedChange;
use crate::query::{ParsedQuery, Side};

pub const DEFAULT_LENGTH: usize = 1000;
pub const DEFAULT_TRIANGLE_DEPTH: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureKind {
    Node,
    Triangle,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Feature {
    pub kind: FeatureKind,
    pub side: Side,
    /// One node representation, or a parent followed by its descendants.
    pub parts: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("feature vector length {0} is not a positive multiple of 4")]
pub struct InvalidLength(pub usize);

pub fn check_length(l: usize) -> Result<(), InvalidLength> {
    if l == 0 || !l.is_multiple_of(4) {
        Err(InvalidLength(l))
    } else {
        Ok(())
    }
}

/// 64-bit FNV-1a over raw bytes.
pub const fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut i = 0;
    while i < bytes.len() {
        h ^= bytes[i] as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
        i += 1;
    }
    h
}

/// Index of a feature within a segment of `segment_length` bits.
pub fn hash_into_segment(feature: &Feature, segment_length: usize) -> usize {
    assert!(segment_length > 0, "segment length must be positive");
    let h = feature
        .parts
        .iter()
        .fold(0u64, |acc, p| acc.wrapping_add(fnv1a64(p.as_bytes())));
    (h % segment_length as u64) as usize
}

/// Features of one side of a change or query.
///
/// Every node yields a node feature and every internal node a triangle of
/// itself and its descendants up to `depth`. The statement-sequence root has
/// no triangle, since a query may match any subsequence of a change's
/// statements. An empty side yields nothing. Features that mention a
/// placeholder, wildcard or the empty marker are dropped, so query features
/// only describe structure that concrete code can contain.
pub fn extract_features(tree: &ParseTree, side: Side, depth: usize) -> BTreeSet<Feature> {
    features_from(tree, tree.root(), side, depth)
}

/// Like [`extract_features`] for a query side. A bare-expression query can
/// match any expression of a change, so its `snippet` and `expr_stmt`
/// wrappers are left out.
pub fn extract_query_features(tree: &ParseTree, side: Side, depth: usize) -> BTreeSet<Feature> {
    let start = tree.bare_expression().unwrap_or(tree.root());
    features_from(tree, start, side, depth)
}

fn features_from(tree: &ParseTree, start: NodeId, side: Side, depth: usize) -> BTreeSet<Feature> {
    assert!(depth >= 1, "triangle depth must be at least 1");
    let mut out = BTreeSet::new();
    if tree.is_empty_marker() || tree.is_blank() {
        return out;
    }
    let mut stack = vec![start];
    while let Some(id) = stack.pop() {
        let node = tree.node(id);
        stack.extend(node.children.iter().rev());
        if node.is_query_only() {
            continue;
        }
        out.insert(Feature {
            kind: FeatureKind::Node,
            side,
            parts: vec![node.repr().to_string()],
        });
        if node.children.is_empty() || id == tree.root() {
            continue;
        }
        let mut parts = vec![node.repr().to_string()];
        if collect_descendants(tree, id, depth, &mut parts) {
            out.insert(Feature {
                kind: FeatureKind::Triangle,
                side,
                parts,
            });
        }
    }
    out
}

/// Preorder descendants of `id` down to `depth`; false if any is query-only.
fn collect_descendants(tree: &ParseTree, id: NodeId, depth: usize, parts: &mut Vec<String>) -> bool {
    if depth == 0 {
        return true;
    }
    for &c in tree.children(id) {
        let child = tree.node(c);
        if child.is_query_only() {
            return false;
        }
        parts.push(child.repr().to_string());
        if child.kind == NodeKind::Nonterminal && !collect_descendants(tree, c, depth - 1, parts) {
            return false;
        }
    }
    true
}

/// Fixed-size binary vector, stored as little-endian 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureVector {
    len: usize,
    words: Vec<u64>,
}

impl FeatureVector {
    pub fn zeros(len: usize) -> FeatureVector {
        FeatureVector {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn from_bits(bits: &[bool]) -> FeatureVector {
        let mut v = FeatureVector::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                v.set(i);
            }
        }
        v
    }

    pub fn from_words(len: usize, words: Vec<u64>) -> FeatureVector {
        assert_eq!(words.len(), len.div_ceil(64));
        FeatureVector { len, words }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.get(i))
    }

    pub fn is_subset_of(&self, other: &FeatureVector) -> bool {
        self.len == other.len && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Featurizer {
    length: usize,
    depth: usize,
}

impl Featurizer {
    pub fn new(length: usize) -> Result<Featurizer, InvalidLength> {
        check_length(length)?;
        Ok(Featurizer {
            length,
            depth: DEFAULT_TRIANGLE_DEPTH,
        })
    }

    pub fn with_depth(mut self, depth: usize) -> Featurizer {
        assert!(depth >= 1);
        self.depth = depth;
        self
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn segment_length(&self) -> usize {
        self.length / 4
    }

    /// Segment index of a feature: 0 old nodes, 1 new nodes, 2 old triangles, 3 new triangles.
    pub fn segment(kind: FeatureKind, side: Side) -> usize {
        match (kind, side) {
            (FeatureKind::Node, Side::Old) => 0,
            (FeatureKind::Node, Side::New) => 1,
            (FeatureKind::Triangle, Side::Old) => 2,
            (FeatureKind::Triangle, Side::New) => 3,
        }
    }

    pub fn features(&self, old: &ParseTree, new: &ParseTree) -> BTreeSet<Feature> {
        let mut all = extract_features(old, Side::Old, self.depth);
        all.extend(extract_features(new, Side::New, self.depth));
        all
    }

    pub fn vectorize<'a>(&self, features: impl IntoIterator<Item = &'a Feature>) -> FeatureVector {
        let seg = self.segment_length();
        let mut v = FeatureVector::zeros(self.length);
        for f in features {
            v.set(Featurizer::segment(f.kind, f.side) * seg + hash_into_segment(f, seg));
        }
        v
    }

    pub fn featurize_trees(&self, old: &ParseTree, new: &ParseTree) -> FeatureVector {
        self.vectorize(&self.features(old, new))
    }

    pub fn featurize_change(&self, change: &PreparedChange) -> FeatureVector {
        self.featurize_trees(&change.old, &change.new)
    }

    pub fn query_features(&self, query: &ParsedQuery) -> BTreeSet<Feature> {
        let mut all = extract_query_features(&query.old, Side::Old, self.depth);
        all.extend(extract_query_features(&query.new, Side::New, self.depth));
        all
    }

    pub fn featurize_query(&self, query: &ParsedQuery) -> FeatureVector {
        self.vectorize(&self.query_features(query))
    }
}

impl Default for Featurizer {
    fn default() -> Self {
        Featurizer::new(DEFAULT_LENGTH).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{parse_code, parse_query};
    use crate::ingestion::{prepare, CodeChange};
    use crate::query::Query;

    fn parts(fs: &BTreeSet<Feature>, kind: FeatureKind) -> Vec<Vec<&str>> {
        fs.iter()
            .filter(|f| f.kind == kind)
            .map(|f| f.parts.iter().map(String::as_str).collect())
            .collect()
    }

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn single_part_index_is_plain_fnv() {
        let f = Feature {
            kind: FeatureKind::Node,
            side: Side::Old,
            parts: vec!["if_stmt".into()],
        };
        assert_eq!(hash_into_segment(&f, 250), (fnv1a64(b"if_stmt") % 250) as usize);
    }

    #[test]
    fn permuted_parts_share_an_index() {
        let a = Feature {
            kind: FeatureKind::Triangle,
            side: Side::New,
            parts: vec!["args".into(), "x".into(), ",".into(), "y".into()],
        };
        let mut b = a.clone();
        b.parts.reverse();
        assert_eq!(hash_into_segment(&a, 250), hash_into_segment(&b, 250));
    }

    #[test]
    fn if_statement_features() {
        let t = parse_code(&["if(c){"]).unwrap();
        let fs = extract_features(&t, Side::Old, 1);
        let nodes: Vec<String> = parts(&fs, FeatureKind::Node).into_iter().map(|p| p[0].to_string()).collect();
        // snippet if_stmt "if" "(" name "c" ")" block "{"
        for n in ["snippet", "if_stmt", "if", "(", "name", "c", ")", "block", "{"] {
            assert!(nodes.contains(&n.to_string()), "missing node feature {n}");
        }
        assert_eq!(nodes.len(), 9);
        assert_eq!(
            parts(&fs, FeatureKind::Triangle),
            vec![
                vec!["block", "{"],
                vec!["if_stmt", "if", "(", "name", ")", "block"],
                vec!["name", "c"],
            ]
        );
    }

    #[test]
    fn leaf_has_no_triangle() {
        let t = parse_code(&["x"]).unwrap();
        let fs = extract_features(&t, Side::Old, 1);
        // snippet, expr_stmt, name, x; triangles for expr_stmt and name only
        assert_eq!(parts(&fs, FeatureKind::Node).len(), 4);
        assert_eq!(parts(&fs, FeatureKind::Triangle), vec![vec!["expr_stmt", "name"], vec!["name", "x"]]);
    }

    #[test]
    fn two_expression_list_triangle() {
        let t = parse_code(&["f(x, y);"]).unwrap();
        let fs = extract_features(&t, Side::New, 1);
        assert!(parts(&fs, FeatureKind::Triangle).contains(&vec!["args", "name", ",", "name"]));
    }

    #[test]
    fn deeper_triangles_include_grandchildren() {
        let t = parse_code(&["f(x);"]).unwrap();
        let fs = extract_features(&t, Side::Old, 2);
        assert!(parts(&fs, FeatureKind::Triangle)
            .contains(&vec!["call", "name", "f", "(", "args", "name", ")"]));
    }

    #[test]
    fn feature_counts_match_tree_shape() {
        // distinct nodes only, so use a snippet without repeated labels
        let t = parse_code(&["while (a < b) { c = d; }"]).unwrap();
        let fs = extract_features(&t, Side::Old, 1);
        let internal = t.nodes().iter().filter(|n| !n.is_leaf()).count();
        assert_eq!(parts(&fs, FeatureKind::Triangle).len(), internal - 1);
    }

    #[test]
    fn placeholder_features_are_dropped() {
        let q = parse_query(&["EXPR"]).unwrap();
        assert!(extract_query_features(&q, Side::Old, 1).is_empty());
        let q = parse_query(&["a + EXPR"]).unwrap();
        let fs = extract_query_features(&q, Side::Old, 1);
        assert_eq!(parts(&fs, FeatureKind::Node), vec![vec!["+"], vec!["a"], vec!["binary"], vec!["name"]]);
        let q = parse_query(&["ID.ID();"]).unwrap();
        let fs = extract_features(&q, Side::Old, 1);
        assert!(fs.iter().all(|f| f.parts.iter().all(|p| p != "ID")));
        assert!(parts(&fs, FeatureKind::Triangle).contains(&vec!["call", "member", "(", "args", ")"]));
        assert!(!parts(&fs, FeatureKind::Triangle).iter().any(|p| p[0] == "member"));
    }

    #[test]
    fn pure_insertion_leaves_old_segments_empty() {
        let empty: [&str; 0] = [];
        let c = prepare(&CodeChange::new(&empty, &["y = 2;"])).unwrap();
        let fz = Featurizer::default();
        let v = fz.featurize_change(&c);
        let seg = fz.segment_length();
        assert!((0..seg).chain(2 * seg..3 * seg).all(|i| !v.get(i)));
        assert!((seg..2 * seg).any(|i| v.get(i)));
        assert!((3 * seg..4 * seg).any(|i| v.get(i)));
    }

    #[test]
    fn removal_query_leaves_new_segments_empty() {
        let q = Query::new(&["ID.ID();"], &["_"]).parse().unwrap();
        let fz = Featurizer::default();
        let v = fz.featurize_query(&q);
        let seg = fz.segment_length();
        assert!((seg..2 * seg).chain(3 * seg..4 * seg).all(|i| !v.get(i)));
        assert!(v.count_ones() > 0);
    }

    #[test]
    fn segments_are_isolated() {
        let c = prepare(&CodeChange::new(&["a = 1;"], &["b(2);"])).unwrap();
        let fz = Featurizer::new(400).unwrap();
        let old_only = fz.vectorize(&extract_features(&c.old, Side::Old, 1));
        let new_only = fz.vectorize(&extract_features(&c.new, Side::New, 1));
        assert!(old_only.ones().all(|i| i < 100 || (200..300).contains(&i)));
        assert!(new_only.ones().all(|i| (100..200).contains(&i) || i >= 300));
    }

    #[test]
    fn lengths_must_divide_by_four() {
        assert!(Featurizer::new(1000).is_ok());
        assert_eq!(Featurizer::new(1002).unwrap_err(), InvalidLength(1002));
        assert!(Featurizer::new(0).is_err());
    }
}
