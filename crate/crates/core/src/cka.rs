//! Linear centered kernel alignment between batches of paired
//! representations, and the batch-matching accuracy experiment: does CKA
//! assign the highest similarity to the matching translation batch?

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::TokenizedPair;
use crate::error::{Error, Result, UndefinedReason};
use crate::model::{hidden_representation, ModelParams};

/// An n x p matrix of representations with the instance ids that define
/// pairing across languages (row i of one batch pairs with row i of
/// another).
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationBatch {
    pub language: String,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl RepresentationBatch {
    pub fn validate(&self) -> Result<()> {
        if self.rows.len() < 2 {
            return Err(Error::InsufficientData(
                "a representation batch needs at least two rows".into(),
            ));
        }
        if self.ids.len() != self.rows.len() {
            return Err(Error::InvalidInput("id count does not match row count".into()));
        }
        let width = self.rows[0].len();
        if width == 0 || self.rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidInput("ragged representation matrix".into()));
        }
        if self.rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("representation matrix".into()));
        }
        Ok(())
    }

    /// Post-ReLU hidden vectors of the classifier, in instance order.
    pub fn from_model(
        params: &ModelParams,
        language: &str,
        pairs: &[&TokenizedPair],
    ) -> Result<Self> {
        let mut ids = Vec::with_capacity(pairs.len());
        let mut rows = Vec::with_capacity(pairs.len());
        for pair in pairs {
            ids.push(pair.id.clone());
            rows.push(hidden_representation(params, pair)?);
        }
        let batch = RepresentationBatch {
            language: language.to_string(),
            ids,
            rows,
        };
        batch.validate()?;
        Ok(batch)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RepresentationRecord {
    id: String,
    #[serde(default)]
    language: String,
    vector: Vec<f64>,
}

/// Reads a representation file: JSON-lines of `{id, language?, vector}`.
pub fn parse_representations(path: &Path) -> Result<RepresentationBatch> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut language = String::new();
    for (lineno, line) in text.lines().enumerate() {
        let record: RepresentationRecord =
            serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("malformed representation line: {e}"),
            })?;
        if language.is_empty() {
            language = record.language.clone();
        }
        ids.push(record.id);
        rows.push(record.vector);
    }
    let batch = RepresentationBatch {
        language,
        ids,
        rows,
    };
    batch.validate()?;
    Ok(batch)
}

/// Writes a representation batch as JSON-lines.
pub fn write_representations(batch: &RepresentationBatch, path: &Path) -> Result<()> {
    batch.validate()?;
    let mut out = String::new();
    for (id, row) in batch.ids.iter().zip(&batch.rows) {
        let record = RepresentationRecord {
            id: id.clone(),
            language: batch.language.clone(),
            vector: row.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    crate::io::atomic_write(path, out.as_bytes())
}

fn column_center(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let p = rows[0].len();
    let mut means = vec![0.0; p];
    for row in rows {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    rows.iter()
        .map(|row| row.iter().zip(&means).map(|(v, m)| v - m).collect())
        .collect()
}

/// Squared Frobenius norm of Y^T X for column-centered matrices.
fn cross_frobenius_sq(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let px = x[0].len();
    let py = y[0].len();
    let mut total = 0.0;
    for a in 0..py {
        for b in 0..px {
            let mut entry = 0.0;
            for (xi, yi) in x.iter().zip(y) {
                entry += yi[a] * xi[b];
            }
            total += entry * entry;
        }
    }
    total
}

/// Linear CKA between two batches with the same row count:
/// `||Y^T X||_F^2 / (||X^T X||_F ||Y^T Y||_F)` after column-centering.
/// Undefined for a zero-variance batch.
pub fn linear_cka(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "row count mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData(
            "linear CKA needs at least two rows".into(),
        ));
    }
    let xc = column_center(x);
    let yc = column_center(y);
    let xx = cross_frobenius_sq(&xc, &xc).sqrt();
    let yy = cross_frobenius_sq(&yc, &yc).sqrt();
    if xx == 0.0 || yy == 0.0 {
        return Err(Error::Undefined(UndefinedReason::ZeroVariance));
    }
    Ok((cross_frobenius_sq(&xc, &yc) / (xx * yy)).clamp(0.0, 1.0))
}

/// CKA between two [`RepresentationBatch`]es.
pub fn batch_cka(x: &RepresentationBatch, y: &RepresentationBatch) -> Result<f64> {
    x.validate()?;
    y.validate()?;
    linear_cka(&x.rows, &y.rows)
}

/// Partitions the source into consecutive batches of `n`, compares each
/// against its matching target batch and `k` random batches of `n` rows
/// sampled (without replacement) from the remaining target instances, and
/// returns the fraction of source batches whose matching batch wins
/// strictly. Deterministic given `seed`; ties count as failures.
pub fn batch_matching_accuracy(
    source: &RepresentationBatch,
    target: &RepresentationBatch,
    n: usize,
    k: usize,
    seed: u64,
) -> Result<f64> {
    source.validate()?;
    target.validate()?;
    if source.rows.len() != target.rows.len() {
        return Err(Error::InvalidInput(
            "source and target must be paired row-for-row".into(),
        ));
    }
    if source.ids != target.ids {
        return Err(Error::InvalidInput(
            "source and target instance ids must match in order".into(),
        ));
    }
    if n < 2 || k == 0 {
        return Err(Error::InvalidConfig("need n >= 2 and k >= 1".into()));
    }
    let total = target.rows.len();
    if total < n * (k + 1) {
        return Err(Error::InsufficientData(format!(
            "need at least n*(k+1) = {} target instances, have {total}",
            n * (k + 1)
        )));
    }
    let n_batches = total / n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wins = 0usize;
    let mut undefined = 0usize;
    for b in 0..n_batches {
        let lo = b * n;
        let hi = lo + n;
        let src_batch = &source.rows[lo..hi];
        let matching = match linear_cka(src_batch, &target.rows[lo..hi]) {
            Ok(v) => v,
            Err(e) if e.is_undefined() => {
                undefined += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let pool: Vec<usize> = (0..total).filter(|i| *i < lo || *i >= hi).collect();
        let mut won = true;
        for _ in 0..k {
            // Partial Fisher-Yates over a scratch copy of the pool.
            let mut scratch = pool.clone();
            for i in 0..n {
                let j = rng.random_range(i..scratch.len());
                scratch.swap(i, j);
            }
            let random_batch: Vec<Vec<f64>> =
                scratch[..n].iter().map(|&i| target.rows[i].clone()).collect();
            match linear_cka(src_batch, &random_batch) {
                Ok(v) => {
                    if v >= matching {
                        won = false;
                    }
                }
                Err(e) if e.is_undefined() => {}
                Err(e) => return Err(e),
            }
        }
        if won {
            wins += 1;
        }
    }
    if n_batches == undefined {
        return Err(Error::InsufficientData(
            "every source batch had zero variance".into(),
        ));
    }
    Ok(wins as f64 / n_batches as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..p).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect()
    }

    /// Gram-Schmidt orthonormalization of a random square matrix.
    fn random_orthogonal(rng: &mut ChaCha8Rng, p: usize) -> Vec<Vec<f64>> {
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(p);
        while q.len() < p {
            let mut v: Vec<f64> = (0..p).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            for u in &q {
                let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= dot * ui;
                }
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                q.push(v.into_iter().map(|x| x / norm).collect());
            }
        }
        q
    }

    fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let rows = a.len();
        let inner = b.len();
        let cols = b[0].len();
        let mut out = vec![vec![0.0; cols]; rows];
        for (i, out_row) in out.iter_mut().enumerate() {
            for (kk, b_row) in b.iter().enumerate().take(inner) {
                for (j, o) in out_row.iter_mut().enumerate().take(cols) {
                    *o += a[i][kk] * b_row[j];
                }
            }
        }
        out
    }

    #[test]
    fn cka_self_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_matrix(&mut rng, 10, 5);
        assert!((linear_cka(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cka_invariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_matrix(&mut rng, 12, 6);
        let y = random_matrix(&mut rng, 12, 6);
        let base = linear_cka(&x, &y).unwrap();

        // Symmetry.
        let swapped = linear_cka(&y, &x).unwrap();
        assert!((base - swapped).abs() < 1e-12);

        // Orthogonal transform of either argument.
        let q = random_orthogonal(&mut rng, 6);
        let yq = matmul(&y, &q);
        assert!((linear_cka(&x, &yq).unwrap() - base).abs() < 1e-9);

        // Isotropic scaling.
        let y3: Vec<Vec<f64>> = y
            .iter()
            .map(|r| r.iter().map(|v| v * 3.0).collect())
            .collect();
        assert!((linear_cka(&x, &y3).unwrap() - base).abs() < 1e-9);

        assert!(base >= 0.0 && base <= 1.0);
    }

    #[test]
    fn cka_zero_variance_is_undefined() {
        let x = vec![vec![1.0, 2.0], vec![1.0, 2.0]];
        let y = vec![vec![0.3, 0.4], vec![0.5, 0.6]];
        assert!(matches!(
            linear_cka(&x, &y),
            Err(Error::Undefined(UndefinedReason::ZeroVariance))
        ));
        assert!(linear_cka(&y[..1], &x[..1]).is_err());
    }

    fn batch(language: &str, rows: Vec<Vec<f64>>) -> RepresentationBatch {
        RepresentationBatch {
            language: language.into(),
            ids: (0..rows.len()).map(|i| format!("i{i}")).collect(),
            rows,
        }
    }

    #[test]
    fn copied_representations_match_perfectly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows = random_matrix(&mut rng, 100, 7);
        let src = batch("en", rows.clone());
        let tgt = batch("de", rows);
        let acc = batch_matching_accuracy(&src, &tgt, 8, 10, 5).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn independent_representations_match_at_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n_rows = 1600;
        let src = batch("en", random_matrix(&mut rng, n_rows, 6));
        let tgt = batch("de", random_matrix(&mut rng, n_rows, 6));
        let acc = batch_matching_accuracy(&src, &tgt, 8, 10, 6).unwrap();
        let chance = 1.0 / 11.0;
        assert!((acc - chance).abs() < 0.1, "accuracy {acc} vs chance {chance}");
    }

    #[test]
    fn matching_is_deterministic_and_validates() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows = random_matrix(&mut rng, 96, 5);
        let src = batch("en", rows.clone());
        let tgt = batch("de", rows);
        let a = batch_matching_accuracy(&src, &tgt, 8, 10, 11).unwrap();
        let b = batch_matching_accuracy(&src, &tgt, 8, 10, 11).unwrap();
        assert_eq!(a, b);
        // Too little data for n*(k+1).
        let small = batch("en", random_matrix(&mut rng, 20, 5));
        let small_t = batch("de", small.rows.clone());
        assert!(batch_matching_accuracy(&small, &small_t, 8, 10, 1).is_err());
    }

    #[test]
    fn representation_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reps.jsonl");
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let batch = batch("syn1", random_matrix(&mut rng, 4, 3));
        write_representations(&batch, &path).unwrap();
        let parsed = parse_representations(&path).unwrap();
        assert_eq!(parsed, batch);
    }
}
