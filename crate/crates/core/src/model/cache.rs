//! Training-split feature artefacts and per-post feature preparation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use crate::data::{Dataset, Post};
use crate::error::{Error, Result};
use crate::features::sentiment::SentimentLexicon;
use crate::features::{
    demographic_vector, fit_pca, sentiment_feature, social_raw, PcaModel, SocialNormalizer,
};
use crate::graph::{hashtag_feature, node_embeddings, HashtagGraph};
use crate::nn::Matrix;
use crate::providers::{EmbeddingProvider, MaskedMatrix};

/// Everything derived from the training split that feature extraction
/// depends on. Immutable once built.
#[derive(Clone, Debug)]
pub struct FeatureCache {
    pub provider: EmbeddingProvider,
    pub lexicon: SentimentLexicon,
    pub graph: HashtagGraph,
    pub node_embeddings: BTreeMap<String, Vec<f64>>,
    pub normalizer: SocialNormalizer,
    pub pca: PcaModel,
}

/// All model inputs for one post. Nothing in here is trainable.
#[derive(Clone, Debug)]
pub struct PreparedPost {
    pub post_id: String,
    pub tokens: MaskedMatrix,
    pub regions: Matrix,
    pub hashtags: MaskedMatrix,
    pub social: Vec<f64>,
    pub demographic: Vec<f64>,
    pub hashtag_feature: Vec<f64>,
    pub sentiment: Vec<f64>,
    pub target: f64,
}

impl FeatureCache {
    /// Fits graph, normaliser and PCA on `train` with the default stub
    /// provider and bundled lexicon.
    pub fn build(train: &Dataset, cfg: &ModelConfig) -> Result<Self> {
        Self::build_with(
            train,
            cfg,
            EmbeddingProvider::stub(cfg.provider_seed),
            SentimentLexicon::bundled(),
        )
    }

    pub fn build_with(
        train: &Dataset,
        cfg: &ModelConfig,
        provider: EmbeddingProvider,
        lexicon: SentimentLexicon,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyDataset("training split".into()));
        }
        let graph = HashtagGraph::build(&train.posts, &provider, cfg.graph_base_dim)?;
        let raw: Vec<Vec<f64>> = train.posts.iter().map(social_raw).collect();
        let normalizer = SocialNormalizer::fit(&raw)?;
        let rows = raw
            .iter()
            .map(|r| normalizer.apply(r))
            .collect::<Result<Vec<_>>>()?;
        let pca = fit_pca(&Matrix::from_rows(&rows)?, cfg.pca_components)?;
        Self::assemble(provider, lexicon, graph, normalizer, pca, cfg)
    }

    fn assemble(
        provider: EmbeddingProvider,
        lexicon: SentimentLexicon,
        graph: HashtagGraph,
        normalizer: SocialNormalizer,
        pca: PcaModel,
        cfg: &ModelConfig,
    ) -> Result<Self> {
        let node_embeddings =
            node_embeddings(&graph, cfg.structure_dim, cfg.graph_hops, cfg.provider_seed)?;
        Ok(Self {
            provider,
            lexicon,
            graph,
            node_embeddings,
            normalizer,
            pca,
        })
    }

    pub fn prepare(&self, post: &Post, cfg: &ModelConfig) -> Result<PreparedPost> {
        let d = cfg.embed_dim;
        let social = self
            .pca
            .transform(&self.normalizer.apply(&social_raw(post))?)?;
        let hf = hashtag_feature(
            post,
            &self.node_embeddings,
            &self.provider,
            cfg.topic_dim,
            cfg.structure_dim,
        )?;
        let s = sentiment_feature(post, &self.lexicon);
        let mut sentiment = Vec::with_capacity(10);
        if cfg.features.sentiment_text {
            sentiment.extend_from_slice(&s.caption);
        }
        if cfg.features.sentiment_hashtags {
            sentiment.extend_from_slice(&s.hashtags);
        }
        Ok(PreparedPost {
            post_id: post.post_id.clone(),
            tokens: self
                .provider
                .text_token_embeddings(&post.caption, cfg.max_tokens, d)?,
            regions: self.provider.image_region_features(
                &post.image_ref,
                cfg.regions,
                cfg.region_channels,
            )?,
            hashtags: self.provider.hashtag_embedding_matrix(
                &post.hashtags,
                cfg.max_hashtags,
                d,
            )?,
            social,
            demographic: demographic_vector(&post.faces, cfg.demographic_mode),
            hashtag_feature: hf.combined(),
            sentiment,
            target: post.popularity,
        })
    }

    pub fn prepare_all(&self, ds: &Dataset, cfg: &ModelConfig) -> Result<Vec<PreparedPost>> {
        ds.posts.iter().map(|p| self.prepare(p, cfg)).collect()
    }

    /// SHA-256 over the serialised cache, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, body) in self.files() {
            h.update(name.as_bytes());
            h.update([0]);
            h.update(body.as_bytes());
            h.update([0]);
        }
        hex(&h.finalize())
    }

    fn files(&self) -> Vec<(&'static str, String)> {
        let mut nodes = String::new();
        for n in &self.graph.nodes {
            let _ = writeln!(nodes, "{n}");
        }
        let mut stats = String::new();
        for (m, s) in self.normalizer.mean.iter().zip(&self.normalizer.std) {
            let _ = writeln!(stats, "{m}\t{s}");
        }
        vec![
            ("nodes.txt", nodes),
            ("graph.tsv", self.graph.edge_list()),
            ("social_stats.tsv", stats),
            ("pca.txt", pca_to_text(&self.pca)),
            ("lexicon.tsv", lexicon_to_text(&self.lexicon)),
        ]
    }

    /// Writes the cache as text files plus a manifest holding its digest.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in self.files() {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        let p = dir.join("manifest.txt");
        fs::write(&p, format!("digest={}\n", self.digest())).map_err(|e| Error::io(&p, e))
    }

    /// Reads a cache written by [`FeatureCache::save`] and checks its digest.
    pub fn load(dir: impl AsRef<Path>, cfg: &ModelConfig) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
        };
        let provider = EmbeddingProvider::stub(cfg.provider_seed);
        let graph = HashtagGraph::from_parts(
            read("nodes.txt")?.lines().map(str::to_owned),
            &read("graph.tsv")?,
            &provider,
            cfg.graph_base_dim,
        )?;
        let stats_path = dir.join("social_stats.tsv");
        let mut normalizer = SocialNormalizer {
            mean: Vec::new(),
            std: Vec::new(),
        };
        for line in read("social_stats.tsv")?.lines() {
            let (m, s) = line
                .split_once('\t')
                .and_then(|(m, s)| Some((m.parse().ok()?, s.parse().ok()?)))
                .ok_or_else(|| Error::malformed(&stats_path, format!("bad line {line:?}")))?;
            normalizer.mean.push(m);
            normalizer.std.push(s);
        }
        let pca = pca_from_text(&read("pca.txt")?)
            .ok_or_else(|| Error::malformed(dir.join("pca.txt"), "bad PCA model"))?;
        let lexicon = SentimentLexicon::parse(&read("lexicon.tsv")?)
            .map_err(|r| Error::malformed(dir.join("lexicon.tsv"), r))?;
        let cache = Self::assemble(provider, lexicon, graph, normalizer, pca, cfg)?;
        let manifest = read("manifest.txt")?;
        let recorded = manifest
            .lines()
            .find_map(|l| l.strip_prefix("digest="))
            .unwrap_or_default();
        if recorded != cache.digest() {
            return Err(Error::CacheMismatch(format!(
                "{}: manifest digest {recorded} does not match contents {}",
                dir.display(),
                cache.digest()
            )));
        }
        Ok(cache)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join("\t")
}

fn pca_to_text(p: &PcaModel) -> String {
    let mut out = format!("{}\t{}\n", p.output_dim(), p.input_dim());
    let _ = writeln!(out, "{}", join(&p.mean));
    let _ = writeln!(out, "{}", join(&p.explained_variance));
    for r in 0..p.components.rows() {
        let _ = writeln!(out, "{}", join(p.components.row(r)));
    }
    out
}

fn pca_from_text(text: &str) -> Option<PcaModel> {
    let mut lines = text.lines();
    let parse = |l: &str| -> Option<Vec<f64>> {
        if l.is_empty() {
            return Some(Vec::new());
        }
        l.split('\t').map(|x| x.parse().ok()).collect()
    };
    let (k, d) = lines.next()?.split_once('\t')?;
    let (k, d): (usize, usize) = (k.parse().ok()?, d.parse().ok()?);
    let mean = parse(lines.next()?)?;
    let explained_variance = parse(lines.next()?)?;
    let mut flat = Vec::with_capacity(k * d);
    for _ in 0..k {
        flat.extend(parse(lines.next()?)?);
    }
    if mean.len() != d || explained_variance.len() != k || lines.next().is_some() {
        return None;
    }
    Some(PcaModel {
        mean,
        components: Matrix::from_vec(k, d, flat).ok()?,
        explained_variance,
    })
}

fn lexicon_to_text(l: &SentimentLexicon) -> String {
    let mut words: Vec<(String, u8)> = l.entries().map(|(w, c)| (w.to_owned(), c)).collect();
    words.sort();
    words
        .into_iter()
        .map(|(w, c)| format!("{w}\t{c}\n"))
        .collect()
}
