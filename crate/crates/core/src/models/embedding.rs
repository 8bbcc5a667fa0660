//! Word vectors and averaged title embeddings.

use std::collections::HashMap;
use std::path::Path;

use super::ModelError;
use crate::autodiff::Tensor;
use crate::kg::GraphView;
use crate::text::tokenize;

/// Token → vector table read from the usual whitespace-separated text format:
/// one token per line followed by `p` decimal components.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingProvider {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingProvider {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Adds a vector under the lower-cased token. The first entry for a
    /// token wins.
    pub fn insert(&mut self, token: &str, v: Vec<f64>) -> Result<(), ModelError> {
        if v.len() != self.dim {
            return Err(ModelError::Embedding {
                line: 0,
                reason: format!("{token}: expected {} components, got {}", self.dim, v.len()),
            });
        }
        self.vectors.entry(token.to_lowercase()).or_insert(v);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(&token.to_lowercase()).map(Vec::as_slice)
    }

    /// Parses the text format; the dimension is taken from the first line.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut provider: Option<Self> = None;
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values = parts
                .map(str::parse::<f64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| ModelError::Embedding {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::Embedding {
                    line: i + 1,
                    reason: "non-finite component".into(),
                });
            }
            let p = provider.get_or_insert_with(|| Self::new(values.len()));
            if p.dim == 0 {
                return Err(ModelError::Embedding {
                    line: i + 1,
                    reason: "vector has no components".into(),
                });
            }
            p.insert(token, values).map_err(|e| match e {
                ModelError::Embedding { reason, .. } => ModelError::Embedding { line: i + 1, reason },
                other => other,
            })?;
        }
        provider.ok_or(ModelError::Embedding {
            line: 0,
            reason: "no vectors".into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Text form with tokens sorted, so equal tables serialise identically.
    pub fn to_text(&self) -> String {
        let mut tokens: Vec<&String> = self.vectors.keys().collect();
        tokens.sort();
        let mut out = String::new();
        for t in tokens {
            out.push_str(t);
            for v in &self.vectors[t] {
                out.push(' ');
                out.push_str(&format!("{v:?}"));
            }
            out.push('\n');
        }
        out
    }

    /// Mean of the vectors of all in-vocabulary title tokens; zero when none
    /// is found.
    pub fn title_embed(&self, title: &str) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        let mut found = 0usize;
        for tok in tokenize(title) {
            if let Some(v) = self.vectors.get(&tok) {
                acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
                found += 1;
            }
        }
        if found > 0 {
            let n = found as f64;
            acc.iter_mut().for_each(|a| *a /= n);
        }
        acc
    }

    /// One title embedding per graph node, in node order.
    pub fn title_matrix<G: GraphView + ?Sized>(&self, g: &G) -> Tensor {
        let n = g.node_count();
        let mut out = Tensor::zeros(n, self.dim);
        for ix in 0..n {
            out.row_mut(ix).copy_from_slice(&self.title_embed(g.title_at(ix)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn provider() -> EmbeddingProvider {
        EmbeddingProvider::parse("gothic 1 2 3\nQuarter 3 4 5\n").unwrap()
    }

    #[test]
    fn single_token_is_its_vector() {
        assert_eq!(provider().title_embed("Gothic"), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn two_tokens_average() {
        assert_eq!(provider().title_embed("Gothic quarter"), vec![2.0, 3.0, 4.0]);
        assert_eq!(provider().title_embed("The Gothic, quarter!"), vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn unknown_and_empty_titles_are_zero() {
        assert_eq!(provider().title_embed("Harbour tower"), vec![0.0; 3]);
        assert_eq!(provider().title_embed(""), vec![0.0; 3]);
    }

    #[test]
    fn ragged_file_is_rejected_with_line() {
        match EmbeddingProvider::parse("a 1 2\nb 1\n") {
            Err(ModelError::Embedding { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(EmbeddingProvider::parse("a 1 x\n").is_err());
        assert!(EmbeddingProvider::parse("").is_err());
    }

    #[test]
    fn text_round_trip() {
        let p = EmbeddingProvider::parse("b 0.1 0.2\na -1 3e-5\n").unwrap();
        let q = EmbeddingProvider::parse(&p.to_text()).unwrap();
        assert_eq!(p, q);
        assert!(p.to_text().starts_with("a "));
    }
}
