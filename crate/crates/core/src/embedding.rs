//! Static word vectors, mean-pooled document vectors, and cosine similarity.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;

use crate::corpus::Song;
use crate::error::{DivaError, Result};
use crate::num::{dot, norm, Real};

/// Token → vector map, all vectors of length `dim`. Iteration follows
/// insertion order so saved tables are reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<F> {
    dim: usize,
    vectors: IndexMap<String, Vec<F>>,
}

impl<F: Real> EmbeddingTable<F> {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(DivaError::validation("embedding dimension must be at least 1"));
        }
        Ok(EmbeddingTable {
            dim,
            vectors: IndexMap::new(),
        })
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

    pub fn insert(&mut self, token: String, vector: Vec<F>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(DivaError::Shape {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(DivaError::validation(format!("vector for `{token}` has non-finite components")));
        }
        if self.vectors.contains_key(&token) {
            return Err(DivaError::validation(format!("duplicate token `{token}`")));
        }
        self.vectors.insert(token, vector);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[F]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vectors.contains_key(token)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<F>)> {
        self.vectors.iter()
    }

    /// Lookup that signals out-of-vocabulary labels as an error.
    pub fn embed_label(&self, label: &str) -> Result<&[F]> {
        self.get(label)
            .ok_or_else(|| DivaError::OutOfVocabulary(label.to_string()))
    }

    /// Mean of the vectors of all in-vocabulary tokens, counting repeats.
    pub fn embed_document(&self, song: &Song) -> Result<Vec<F>> {
        let mut acc = vec![F::zero(); self.dim];
        let mut n = 0usize;
        for (token, count) in song.distinct_tokens().map(|t| (t, song.count(t))) {
            if let Some(v) = self.get(token) {
                let c = F::from_count(count);
                for (a, &x) in acc.iter_mut().zip(v) {
                    *a = *a + c * x;
                }
                n += count;
            }
        }
        if n == 0 {
            return Err(DivaError::EmptyDocument(song.id().to_string()));
        }
        let n = F::from_count(n);
        Ok(acc.into_iter().map(|a| a / n).collect())
    }

    /// Reads the text vector format: a `count dim` header, then one token
    /// followed by `dim` floats per line.
    pub fn read<R: BufRead>(reader: R, source: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| DivaError::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(h) => h.map_err(|e| DivaError::io(source, e))?,
            None => return Err(parse_err(1, "missing `count dim` header".into())),
        };
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (count, dim) = match fields.as_slice() {
            [c, d] => (
                c.parse::<usize>().map_err(|e| parse_err(1, format!("bad count: {e}")))?,
                d.parse::<usize>().map_err(|e| parse_err(1, format!("bad dim: {e}")))?,
            ),
            _ => return Err(parse_err(1, "header must be `count dim`".into())),
        };
        let mut table = EmbeddingTable::new(dim)?;
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line.map_err(|e| DivaError::io(source, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().expect("nonblank line").to_string();
            let vector = parts
                .map(|p| p.parse::<F>().map_err(|_| parse_err(lineno, format!("bad float `{p}`"))))
                .collect::<Result<Vec<F>>>()?;
            if vector.len() != dim {
                return Err(parse_err(
                    lineno,
                    format!("row {} has {} values, expected {dim}", lineno - 1, vector.len()),
                ));
            }
            table.insert(token, vector).map_err(|e| match e {
                DivaError::Validation(m) => DivaError::Validation(format!("{source}:{lineno}: {m}")),
                other => other,
            })?;
        }
        if table.len() != count {
            return Err(parse_err(1, format!("header declares {count} rows, found {}", table.len())));
        }
        Ok(table)
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.vectors.len(), self.dim)?;
        for (token, v) in &self.vectors {
            write!(w, "{token}")?;
            for x in v {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| DivaError::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write(&mut w).map_err(|e| DivaError::io(path, e))?;
        w.flush().map_err(|e| DivaError::io(path, e))
    }
}

pub fn load_embeddings<F: Real>(path: &Path) -> Result<EmbeddingTable<F>> {
    let f = File::open(path).map_err(|e| DivaError::io(path, e))?;
    EmbeddingTable::read(BufReader::new(f), &path.display().to_string())
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine<F: Real>(u: &[F], v: &[F]) -> Result<F> {
    if u.len() != v.len() {
        return Err(DivaError::Shape {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == F::zero() || nv == F::zero() {
        return Err(DivaError::DegenerateVector);
    }
    let c = dot(u, v) / (nu * nv);
    Ok(c.max(-F::one()).min(F::one()))
}
