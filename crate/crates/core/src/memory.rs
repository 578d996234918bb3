//! Island-partitioned experience buffer.
//!
//! Each island groups stored equations into semantic clusters by TF-IDF
//! cosine similarity over operator/variable tokens. A cluster keeps a
//! single elite, and exemplars are drawn by a softmax over elite scores.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::expr::{canonicalize, parse_with_vars, tokenize, ParseError, TokenBag};
use crate::fit::{FitPath, FitResult};
use crate::scoring::{Complexity, ScoredCandidate};

pub const DEFAULT_ISLANDS: usize = 10;
pub const SIMILARITY_THRESHOLD: f64 = 0.9;
pub const DEFAULT_TEMPERATURE: f64 = 0.1;
pub const DEFAULT_EXEMPLARS: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error("score must be finite, got {0}")]
    NonFiniteScore(f64),
    #[error("island {island} out of range (have {count})")]
    NoSuchIsland { island: usize, count: usize },
    #[error("line {line}: {message}")]
    Restore { line: usize, message: String },
    #[error("line {line}: {source}")]
    RestoreParse {
        line: usize,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Token to nonnegative weight.
pub type TfIdfVector = BTreeMap<String, f64>;

/// Document frequencies over every stored equation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusStats {
    df: BTreeMap<String, usize>,
    total: usize,
}

impl CorpusStats {
    pub fn total_docs(&self) -> usize {
        self.total
    }

    pub fn doc_freq(&self, token: &str) -> usize {
        self.df.get(token).copied().unwrap_or(0)
    }

    pub fn add(&mut self, bag: &TokenBag) {
        self.total += 1;
        for (t, _) in bag.iter() {
            *self.df.entry(t.to_string()).or_insert(0) += 1;
        }
    }

    pub fn remove(&mut self, bag: &TokenBag) {
        self.total = self.total.saturating_sub(1);
        for (t, _) in bag.iter() {
            if let Some(c) = self.df.get_mut(t) {
                *c -= 1;
                if *c == 0 {
                    self.df.remove(t);
                }
            }
        }
    }
}

/// `tf(t) * ln(N / df(t))` with raw counts.
pub fn tfidf_vector(bag: &TokenBag, stats: &CorpusStats) -> TfIdfVector {
    let n = stats.total_docs() as f64;
    bag.iter()
        .map(|(t, tf)| {
            let df = stats.doc_freq(t).max(1) as f64;
            (t.to_string(), tf as f64 * (n / df).ln().max(0.0))
        })
        .collect()
}

pub fn cosine_sim(u: &TfIdfVector, v: &TfIdfVector) -> f64 {
    let norm = |w: &TfIdfVector| w.values().map(|x| x * x).sum::<f64>().sqrt();
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    let dot: f64 = u
        .iter()
        .filter_map(|(t, a)| v.get(t).map(|b| a * b))
        .sum();
    (dot / (nu * nv)).clamp(0.0, 1.0)
}

/// Softmax with max subtraction.
pub fn softmax(scores: &[f64], tau: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = scores.iter().map(|s| ((s - max) / tau).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredEquation {
    pub candidate: ScoredCandidate,
    pub bag: TokenBag,
}

impl StoredEquation {
    pub fn new(candidate: ScoredCandidate) -> Self {
        let bag = tokenize(&candidate.skeleton);
        StoredEquation { candidate, bag }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: usize,
    pub elite: StoredEquation,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Island {
    pub clusters: Vec<Cluster>,
}

impl Island {
    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InsertOutcome {
    NewCluster,
    Replaced,
    Kept,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMemory {
    islands: Vec<Island>,
    stats: CorpusStats,
    tau: f64,
}

impl Default for SemanticMemory {
    fn default() -> Self {
        SemanticMemory::new(DEFAULT_ISLANDS, DEFAULT_TEMPERATURE)
    }
}

impl SemanticMemory {
    pub fn new(islands: usize, tau: f64) -> Self {
        SemanticMemory {
            islands: vec![Island::default(); islands.max(1)],
            stats: CorpusStats::default(),
            tau,
        }
    }

    pub fn islands(&self) -> &[Island] {
        &self.islands
    }

    pub fn stats(&self) -> &CorpusStats {
        &self.stats
    }

    pub fn cluster_count(&self) -> usize {
        self.islands.iter().map(|i| i.clusters.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cluster_count() == 0
    }

    pub fn elites(&self) -> impl Iterator<Item = (usize, &Cluster)> {
        self.islands
            .iter()
            .enumerate()
            .flat_map(|(i, isl)| isl.clusters.iter().map(move |c| (i, c)))
    }

    /// Best stored candidate by score, first in island/cluster order on ties.
    pub fn best(&self) -> Option<&ScoredCandidate> {
        let mut best: Option<&ScoredCandidate> = None;
        for (_, c) in self.elites() {
            if best.is_none_or(|b| c.elite.candidate.score > b.score) {
                best = Some(&c.elite.candidate);
            }
        }
        best
    }

    /// Cluster whose elite is most similar to `bag` (strictly above the
    /// threshold), lowest id on ties; `None` means a new cluster.
    pub fn assign_cluster(&self, island: usize, bag: &TokenBag) -> Option<usize> {
        let v = tfidf_vector(bag, &self.stats);
        let mut best: Option<(usize, f64)> = None;
        for c in &self.islands[island].clusters {
            let sim = cosine_sim(&v, &tfidf_vector(&c.elite.bag, &self.stats));
            if sim > SIMILARITY_THRESHOLD && best.is_none_or(|(_, b)| sim > b) {
                best = Some((c.id, sim));
            }
        }
        best.map(|(id, _)| id)
    }

    pub fn insert(
        &mut self,
        island: usize,
        cand: ScoredCandidate,
    ) -> Result<InsertOutcome, MemoryError> {
        if !cand.score.is_finite() {
            return Err(MemoryError::NonFiniteScore(cand.score));
        }
        if island >= self.islands.len() {
            return Err(MemoryError::NoSuchIsland {
                island,
                count: self.islands.len(),
            });
        }
        let incoming = StoredEquation::new(cand);
        self.stats.add(&incoming.bag);
        match self.assign_cluster(island, &incoming.bag) {
            None => {
                let clusters = &mut self.islands[island].clusters;
                clusters.push(Cluster {
                    id: clusters.len(),
                    elite: incoming,
                });
                Ok(InsertOutcome::NewCluster)
            }
            Some(id) => {
                let slot = &mut self.islands[island].clusters[id].elite;
                if incoming.candidate.score > slot.candidate.score {
                    let displaced = std::mem::replace(slot, incoming);
                    self.stats.remove(&displaced.bag);
                    Ok(InsertOutcome::Replaced)
                } else {
                    self.stats.remove(&incoming.bag);
                    Ok(InsertOutcome::Kept)
                }
            }
        }
    }

    /// Picks a nonempty island uniformly, then `k` of its clusters without
    /// replacement by softmax over elite scores.
    pub fn sample_exemplars<R: Rng + ?Sized>(&self, rng: &mut R, k: usize) -> Vec<ScoredCandidate> {
        let nonempty: Vec<&Island> = self.islands.iter().filter(|i| !i.is_empty()).collect();
        if nonempty.is_empty() || k == 0 {
            return Vec::new();
        }
        let island = nonempty[rng.random_range(0..nonempty.len())];
        let mut pool: Vec<&Cluster> = island.clusters.iter().collect();
        let mut out = Vec::with_capacity(k.min(pool.len()));
        while out.len() < k && !pool.is_empty() {
            let scores: Vec<f64> = pool.iter().map(|c| c.elite.candidate.score).collect();
            let probs = softmax(&scores, self.tau);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = pool.len() - 1;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            out.push(pool.remove(pick).elite.candidate.clone());
        }
        out
    }

    /// Writes one JSON record per stored elite.
    pub fn dump<W: Write>(&self, mut out: W) -> Result<(), MemoryError> {
        for (island, c) in self.elites() {
            let rec = MemoryRecord::from_cluster(island, c);
            serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Rebuilds a memory from `dump` output. Corpus statistics are
    /// recomputed from the stored equations.
    pub fn restore<R: BufRead>(input: R, islands: usize, tau: f64) -> Result<Self, MemoryError> {
        let mut mem = SemanticMemory::new(islands, tau);
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let rec: MemoryRecord = serde_json::from_str(&line).map_err(|e| MemoryError::Restore {
                line: lineno,
                message: e.to_string(),
            })?;
            if rec.island >= mem.islands.len() {
                return Err(MemoryError::Restore {
                    line: lineno,
                    message: format!("island {} out of range", rec.island),
                });
            }
            let expected = mem.islands[rec.island].clusters.len();
            if rec.cluster != expected {
                return Err(MemoryError::Restore {
                    line: lineno,
                    message: format!("cluster {} out of order, expected {expected}", rec.cluster),
                });
            }
            let skeleton = parse_with_vars(&rec.expr, &rec.variables)
                .map_err(|source| MemoryError::RestoreParse { line: lineno, source })?;
            if skeleton.param_count() != rec.theta.len() {
                return Err(MemoryError::Restore {
                    line: lineno,
                    message: format!(
                        "expression has {} parameters but theta has {}",
                        skeleton.param_count(),
                        rec.theta.len()
                    ),
                });
            }
            let candidate = ScoredCandidate {
                skeleton,
                fit: FitResult {
                    theta: rec.theta,
                    nmse: rec.nmse,
                    path: rec.path,
                    evals: 0,
                },
                score: rec.score,
                complexity: Complexity {
                    n_eff: rec.n_eff,
                    c_sens: rec.c_sens,
                    c_curv: rec.c_curv,
                },
            };
            let elite = StoredEquation::new(candidate);
            mem.stats.add(&elite.bag);
            mem.islands[rec.island].clusters.push(Cluster {
                id: rec.cluster,
                elite,
            });
        }
        Ok(mem)
    }
}

/// Line format of a memory dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub island: usize,
    pub cluster: usize,
    pub expr: String,
    pub variables: Vec<String>,
    pub theta: Vec<f64>,
    pub score: f64,
    pub nmse: f64,
    pub n_eff: usize,
    pub c_sens: f64,
    pub c_curv: f64,
    pub path: FitPath,
    /// Canonical form, for cluster analysis.
    pub canonical: String,
}

impl MemoryRecord {
    fn from_cluster(island: usize, c: &Cluster) -> Self {
        let cand = &c.elite.candidate;
        MemoryRecord {
            island,
            cluster: c.id,
            expr: cand.skeleton.to_string(),
            variables: cand.skeleton.variable_names().to_vec(),
            theta: cand.fit.theta.clone(),
            score: cand.score,
            nmse: cand.fit.nmse,
            n_eff: cand.complexity.n_eff,
            c_sens: cand.complexity.c_sens,
            c_curv: cand.complexity.c_curv,
            path: cand.fit.path,
            canonical: canonicalize(&cand.skeleton).to_string(),
        }
    }
}
