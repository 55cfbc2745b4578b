//! Hashtag co-occurrence graph and the hashtag feature built from it.
//!
//! Node embeddings come from an untrained mean aggregator: start from a
//! fixed random projection of each node's base feature, then repeatedly
//! replace every node by `tanh` of the edge-weighted mean over itself and its
//! neighbours. Results are unit-normalised.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::Post;
use crate::error::{Error, Result};
use crate::nn::matrix::l2_norm;
use crate::providers::{stub_vector, EmbeddingProvider};

pub const DEFAULT_STRUCTURE_DIM: usize = 50;
pub const DEFAULT_TOPIC_DIM: usize = 768;
pub const DEFAULT_HOPS: usize = 2;
pub const DEFAULT_BASE_DIM: usize = 64;

const PROJECTION_NS: &str = "graph-projection";

/// Weighted undirected co-occurrence graph. Edge keys are ordered pairs
/// `(a, b)` with `a < b`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HashtagGraph {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeMap<(String, String), u32>,
    pub base_features: BTreeMap<String, Vec<f64>>,
}

fn unique_tags(post: &Post) -> BTreeSet<&str> {
    post.hashtags.iter().map(String::as_str).collect()
}

impl HashtagGraph {
    /// Counts, for every unordered pair of distinct hashtags, the number of
    /// posts containing both. Base node features come from `provider`.
    pub fn build<'a>(
        posts: impl IntoIterator<Item = &'a Post>,
        provider: &EmbeddingProvider,
        base_dim: usize,
    ) -> Result<Self> {
        let mut g = HashtagGraph::default();
        for post in posts {
            let tags: Vec<&str> = unique_tags(post).into_iter().collect();
            for (i, a) in tags.iter().enumerate() {
                g.nodes.insert((*a).to_owned());
                for b in &tags[i + 1..] {
                    *g.edges
                        .entry(((*a).to_owned(), (*b).to_owned()))
                        .or_insert(0) += 1;
                }
            }
        }
        for tag in &g.nodes {
            g.base_features
                .insert(tag.clone(), provider.token_vector(tag, base_dim)?);
        }
        Ok(g)
    }

    pub fn weight(&self, a: &str, b: &str) -> u32 {
        let key = if a < b {
            (a.to_owned(), b.to_owned())
        } else {
            (b.to_owned(), a.to_owned())
        };
        self.edges.get(&key).copied().unwrap_or(0)
    }

    /// Neighbour lists with weights, both directions.
    pub fn adjacency(&self) -> BTreeMap<&str, BTreeMap<&str, u32>> {
        let mut adj: BTreeMap<&str, BTreeMap<&str, u32>> = self
            .nodes
            .iter()
            .map(|n| (n.as_str(), BTreeMap::new()))
            .collect();
        for ((a, b), &w) in &self.edges {
            adj.entry(a.as_str()).or_default().insert(b.as_str(), w);
            adj.entry(b.as_str()).or_default().insert(a.as_str(), w);
        }
        adj
    }

    /// Edge list as `a<TAB>b<TAB>weight` lines in lexical order.
    pub fn edge_list(&self) -> String {
        let mut out = String::new();
        for ((a, b), w) in &self.edges {
            let _ = writeln!(out, "{a}\t{b}\t{w}");
        }
        out
    }

    pub fn write_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.edge_list()).map_err(|e| Error::io(path, e))
    }

    /// Rebuilds a graph from its node list and edge list text; base features
    /// are regenerated from `provider`.
    pub fn from_parts(
        nodes: impl IntoIterator<Item = String>,
        edge_list: &str,
        provider: &EmbeddingProvider,
        base_dim: usize,
    ) -> Result<Self> {
        let mut g = HashtagGraph {
            nodes: nodes.into_iter().collect(),
            ..Default::default()
        };
        for (i, line) in edge_list.lines().enumerate() {
            let mut parts = line.split('\t');
            let (Some(a), Some(b), Some(w), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::InvalidArgument(format!(
                    "edge list line {}: expected three tab-separated fields",
                    i + 1
                )));
            };
            let w: u32 = w.parse().map_err(|_| {
                Error::InvalidArgument(format!("edge list line {}: bad weight {w:?}", i + 1))
            })?;
            if a >= b || w == 0 {
                return Err(Error::InvalidArgument(format!(
                    "edge list line {}: invalid edge {a} {b} {w}",
                    i + 1
                )));
            }
            g.nodes.insert(a.to_owned());
            g.nodes.insert(b.to_owned());
            g.edges.insert((a.to_owned(), b.to_owned()), w);
        }
        for tag in &g.nodes {
            g.base_features
                .insert(tag.clone(), provider.token_vector(tag, base_dim)?);
        }
        Ok(g)
    }
}

/// Projects base features to `dim` with a fixed random matrix and runs
/// `hops` rounds of weighted mean aggregation.
pub fn node_embeddings(
    g: &HashtagGraph,
    dim: usize,
    hops: usize,
    seed: u64,
) -> Result<BTreeMap<String, Vec<f64>>> {
    if dim == 0 || hops == 0 {
        return Err(Error::InvalidArgument(
            "node embeddings need dim >= 1 and hops >= 1".into(),
        ));
    }
    let base_dim = g.base_features.values().map(Vec::len).max().unwrap_or(0);
    let scale = 1.0 / (base_dim.max(1) as f64).sqrt();
    let projection: Vec<Vec<f64>> = (0..base_dim)
        .map(|i| stub_vector(seed, PROJECTION_NS, &i.to_string(), dim))
        .collect();
    let mut initial = BTreeMap::new();
    for (tag, base) in &g.base_features {
        let mut h = vec![0.0; dim];
        for (&b, row) in base.iter().zip(&projection) {
            for (hj, pj) in h.iter_mut().zip(row) {
                *hj += b * pj * scale;
            }
        }
        initial.insert(tag.clone(), h);
    }
    aggregate(g, &initial, hops)
}

/// Mean aggregation from explicit initial embeddings. Isolated nodes keep
/// their initial vector; every output is unit-normalised unless zero.
pub fn aggregate(
    g: &HashtagGraph,
    initial: &BTreeMap<String, Vec<f64>>,
    hops: usize,
) -> Result<BTreeMap<String, Vec<f64>>> {
    let adj = g.adjacency();
    for n in &g.nodes {
        if !initial.contains_key(n) {
            return Err(Error::InvalidArgument(format!(
                "no initial embedding for node `{n}`"
            )));
        }
    }
    let mut current: BTreeMap<&str, Vec<f64>> = g
        .nodes
        .iter()
        .map(|n| (n.as_str(), initial[n].clone()))
        .collect();
    for _ in 0..hops {
        let mut next = BTreeMap::new();
        for (&node, neighbours) in &adj {
            let own = &current[node];
            if neighbours.is_empty() {
                next.insert(node, own.clone());
                continue;
            }
            let mut acc = own.clone();
            let mut total = 1.0;
            for (&nb, &w) in neighbours {
                let w = f64::from(w);
                total += w;
                for (a, x) in acc.iter_mut().zip(&current[nb]) {
                    *a += w * x;
                }
            }
            next.insert(node, acc.iter().map(|a| (a / total).tanh()).collect());
        }
        current = next;
    }
    Ok(current
        .into_iter()
        .map(|(k, mut v)| {
            let norm = l2_norm(&v);
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
            (k.to_owned(), v)
        })
        .collect())
}

/// Mean node embedding over the post's distinct hashtags that exist in
/// `emb`; zero when none do.
pub fn structural_embedding(post: &Post, emb: &BTreeMap<String, Vec<f64>>, dim: usize) -> Vec<f64> {
    let known: Vec<&Vec<f64>> = unique_tags(post)
        .into_iter()
        .filter_map(|t| emb.get(t))
        .collect();
    mean_of(&known, dim)
}

/// Mean of per-hashtag embeddings at `dim`; zero when the post has no hashtags.
pub fn topic_embedding(post: &Post, provider: &EmbeddingProvider, dim: usize) -> Result<Vec<f64>> {
    let vecs = unique_tags(post)
        .into_iter()
        .map(|t| provider.token_vector(t, dim))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_of(&vecs.iter().collect::<Vec<_>>(), dim))
}

fn mean_of(vecs: &[&Vec<f64>], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    if vecs.is_empty() {
        return out;
    }
    for v in vecs {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += x;
        }
    }
    let n = vecs.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Topic embedding followed by structural embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct HashtagFeature {
    pub topic: Vec<f64>,
    pub structure: Vec<f64>,
}

impl HashtagFeature {
    pub fn combined(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.topic.len() + self.structure.len());
        v.extend_from_slice(&self.topic);
        v.extend_from_slice(&self.structure);
        v
    }
}

pub fn hashtag_feature(
    post: &Post,
    emb: &BTreeMap<String, Vec<f64>>,
    provider: &EmbeddingProvider,
    topic_dim: usize,
    structure_dim: usize,
) -> Result<HashtagFeature> {
    Ok(HashtagFeature {
        topic: topic_embedding(post, provider, topic_dim)?,
        structure: structural_embedding(post, emb, structure_dim),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PostMetadata;

    fn post(id: &str, tags: &[&str]) -> Post {
        Post {
            post_id: id.into(),
            user_id: "u".into(),
            caption: String::new(),
            hashtags: tags.iter().map(|s| s.to_string()).collect(),
            image_ref: id.into(),
            faces: vec![],
            metadata: PostMetadata {
                avg_views: 0.0,
                group_count: 0,
                avg_member_count: 0.0,
                tag_count: tags.len() as u64,
                title_length: 0,
                description_length: 0,
                tagged_people: 0,
                comment_count: 0,
                post_day: 0,
                post_month: 0,
                post_hour: 0,
                post_duration_days: 0.0,
            },
            popularity: 0.0,
        }
    }

    #[test]
    fn pair_counts() {
        let p = EmbeddingProvider::stub(0);
        let posts = [post("1", &["a", "b", "c"]), post("2", &["a", "b"])];
        let g = HashtagGraph::build(&posts, &p, 4).unwrap();
        assert_eq!(g.weight("a", "b"), 2);
        assert_eq!(g.weight("c", "a"), 1);
        assert_eq!(g.weight("b", "c"), 1);
        assert_eq!(g.edges.len(), 3);
    }

    #[test]
    fn single_tag_has_no_edges() {
        let p = EmbeddingProvider::stub(0);
        let g = HashtagGraph::build(&[post("1", &["a"])], &p, 4).unwrap();
        assert_eq!(g.nodes.len(), 1);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn duplicate_tags_deduplicated() {
        let p = EmbeddingProvider::stub(0);
        let g = HashtagGraph::build(&[post("1", &["a", "a", "b"])], &p, 4).unwrap();
        assert_eq!(g.weight("a", "b"), 1);
        assert_eq!(g.weight("a", "a"), 0);
        assert_eq!(g.edges.len(), 1);
    }

    #[test]
    fn isolated_node_keeps_projection() {
        let p = EmbeddingProvider::stub(0);
        let g = HashtagGraph::build(&[post("1", &["solo"])], &p, 4).unwrap();
        let mut init = BTreeMap::new();
        init.insert("solo".to_owned(), vec![3.0, 4.0]);
        let e = aggregate(&g, &init, 2).unwrap();
        assert_eq!(e["solo"], vec![0.6, 0.8]);
    }

    #[test]
    fn symmetric_pair_is_identical() {
        let p = EmbeddingProvider::stub(0);
        let g = HashtagGraph::build(&[post("1", &["x", "y"])], &p, 4).unwrap();
        let mut init = BTreeMap::new();
        init.insert("x".to_owned(), vec![0.2, -0.5, 0.1]);
        init.insert("y".to_owned(), vec![0.2, -0.5, 0.1]);
        let e = aggregate(&g, &init, 2).unwrap();
        assert_eq!(e["x"], e["y"]);
    }

    #[test]
    fn path_graph_one_hop() {
        // a–b (w=1), b–c (w=2), hand-set initial vectors
        let p = EmbeddingProvider::stub(0);
        let posts = [
            post("1", &["a", "b"]),
            post("2", &["b", "c"]),
            post("3", &["b", "c"]),
        ];
        let g = HashtagGraph::build(&posts, &p, 4).unwrap();
        let ha = [1.0, 0.0];
        let hb = [0.0, 1.0];
        let hc = [0.5, -0.5];
        let init: BTreeMap<String, Vec<f64>> = [("a", ha), ("b", hb), ("c", hc)]
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_vec()))
            .collect();
        let e = aggregate(&g, &init, 1).unwrap();
        let unit = |v: [f64; 2]| {
            let v = [v[0].tanh(), v[1].tanh()];
            let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
            [v[0] / n, v[1] / n]
        };
        let ea = unit([(ha[0] + hb[0]) / 2.0, (ha[1] + hb[1]) / 2.0]);
        let eb = unit([
            (hb[0] + ha[0] + 2.0 * hc[0]) / 4.0,
            (hb[1] + ha[1] + 2.0 * hc[1]) / 4.0,
        ]);
        let ec = unit([(hc[0] + 2.0 * hb[0]) / 3.0, (hc[1] + 2.0 * hb[1]) / 3.0]);
        for (got, want) in [(&e["a"], ea), (&e["b"], eb), (&e["c"], ec)] {
            assert!((got[0] - want[0]).abs() < 1e-12 && (got[1] - want[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn structural_embedding_rules() {
        let mut emb = BTreeMap::new();
        emb.insert("a".to_owned(), vec![1.0, 2.0]);
        emb.insert("b".to_owned(), vec![3.0, -2.0]);
        assert_eq!(
            structural_embedding(&post("1", &[]), &emb, 2),
            vec![0.0, 0.0]
        );
        assert_eq!(
            structural_embedding(&post("1", &["a", "b"]), &emb, 2),
            vec![2.0, 0.0]
        );
        assert_eq!(
            structural_embedding(&post("1", &["a"]), &emb, 2),
            vec![1.0, 2.0]
        );
        assert_eq!(
            structural_embedding(&post("1", &["zzz"]), &emb, 2),
            vec![0.0, 0.0]
        );
        assert_eq!(
            structural_embedding(&post("1", &["b", "a"]), &emb, 2),
            structural_embedding(&post("1", &["a", "b"]), &emb, 2)
        );
    }

    #[test]
    fn topic_embedding_rules() {
        let p = EmbeddingProvider::stub(4);
        assert_eq!(
            topic_embedding(&post("1", &[]), &p, 5).unwrap(),
            vec![0.0; 5]
        );
        let a = p.token_vector("a", 5).unwrap();
        let b = p.token_vector("b", 5).unwrap();
        assert_eq!(topic_embedding(&post("1", &["a"]), &p, 5).unwrap(), a);
        let ab = topic_embedding(&post("1", &["a", "b"]), &p, 5).unwrap();
        for i in 0..5 {
            assert!((ab[i] - (a[i] + b[i]) / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn feature_layout() {
        let p = EmbeddingProvider::stub(4);
        let posts = [post("1", &["a", "b"])];
        let g = HashtagGraph::build(&posts, &p, 8).unwrap();
        let emb = node_embeddings(&g, DEFAULT_STRUCTURE_DIM, DEFAULT_HOPS, 1).unwrap();
        let f = hashtag_feature(
            &posts[0],
            &emb,
            &p,
            DEFAULT_TOPIC_DIM,
            DEFAULT_STRUCTURE_DIM,
        )
        .unwrap();
        let c = f.combined();
        assert_eq!((f.topic.len(), f.structure.len(), c.len()), (768, 50, 818));
        assert_eq!(&c[..768], f.topic.as_slice());
        assert_eq!(&c[768..], f.structure.as_slice());
        let empty = hashtag_feature(&post("2", &[]), &emb, &p, 768, 50).unwrap();
        assert!(empty.combined().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn edge_list_round_trip() {
        let p = EmbeddingProvider::stub(4);
        let posts = [
            post("1", &["b", "a", "c"]),
            post("2", &["a", "b"]),
            post("3", &["z"]),
        ];
        let g = HashtagGraph::build(&posts, &p, 3).unwrap();
        assert_eq!(g.edge_list(), "a\tb\t2\na\tc\t1\nb\tc\t1\n");
        let back =
            HashtagGraph::from_parts(g.nodes.iter().cloned(), &g.edge_list(), &p, 3).unwrap();
        assert_eq!(back, g);
    }
}
