//! Linear pre-processing: mean centering, LDA and length normalization.
//!
//! Scatter conventions: the between-class scatter weights speaker means
//! by utterance count and is normalized by the total count N; the
//! within-class scatter pools per-speaker centered outer products with
//! divisor N - S (the unbiased pooled covariance). LDA solves the
//! generalized symmetric eigenproblem `S_b v = lambda (S_w + ridge I) v`
//! through the Cholesky factor of the regularized within scatter, so
//! the projected within-class covariance is exactly the identity
//! (simultaneous diagonalization). Rows are ordered by decreasing
//! eigenvalue and sign-fixed so each row's first nonzero entry is
//! positive.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::{
    bin_expect_magic, bin_read_f64_vec, bin_read_u32, bin_write, EmbeddingRecord, EmbeddingSet,
};
use crate::error::{Error, Result};
use crate::linalg;

const LDA_MAGIC: &[u8; 4] = b"SVL1";

/// Fitted LDA projection with its centering mean.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaTransform {
    in_dim: usize,
    out_dim: usize,
    mean: DVector<f64>,
    /// `out_dim x in_dim`, rows are projection directions.
    projection: DMatrix<f64>,
}

impl LdaTransform {
    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }
}

/// Class scatter statistics of a labeled set.
#[derive(Debug, Clone)]
pub struct Scatter {
    pub between: DMatrix<f64>,
    pub within: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub n_speakers: usize,
    pub n_records: usize,
}

/// Between/within scatter of a labeled embedding set (see module docs
/// for the normalization conventions).
pub fn scatter_matrices(data: &EmbeddingSet) -> Result<Scatter> {
    let groups = data.by_speaker()?;
    let dim = data.dim();
    let n = data.len();
    if groups.len() < 2 {
        return Err(Error::invalid("lda", "need at least 2 speakers"));
    }
    let records = data.records();
    let mut grand = DVector::zeros(dim);
    for r in records {
        grand += DVector::from_column_slice(&r.vector);
    }
    grand /= n as f64;

    let mut between = DMatrix::zeros(dim, dim);
    let mut within = DMatrix::zeros(dim, dim);
    for (_, idxs) in &groups {
        let mut m = DVector::zeros(dim);
        for &i in idxs {
            m += DVector::from_column_slice(&records[i].vector);
        }
        m /= idxs.len() as f64;
        for &i in idxs {
            let d = DVector::from_column_slice(&records[i].vector) - &m;
            within += &d * d.transpose();
        }
        let dm = &m - &grand;
        between += (idxs.len() as f64) * &dm * dm.transpose();
    }
    between /= n as f64;
    if n > groups.len() {
        within /= (n - groups.len()) as f64;
    }
    Ok(Scatter {
        between: linalg::symmetrize(&between),
        within: linalg::symmetrize(&within),
        mean: grand,
        n_speakers: groups.len(),
        n_records: n,
    })
}

/// Default ridge added to the within scatter: `1e-6 trace(S_w) / dim`.
pub fn auto_ridge(within: &DMatrix<f64>) -> f64 {
    1e-6 * within.trace() / within.nrows() as f64
}

/// Fits an LDA projection to `out_dim` dimensions.
pub fn fit_lda(data: &EmbeddingSet, out_dim: usize, ridge: f64) -> Result<LdaTransform> {
    if ridge < 0.0 {
        return Err(Error::invalid("ridge", "must be non-negative"));
    }
    let scatter = scatter_matrices(data)?;
    fit_lda_from_scatter(&scatter, out_dim, ridge)
}

/// Fits from precomputed scatter statistics.
pub fn fit_lda_from_scatter(scatter: &Scatter, out_dim: usize, ridge: f64) -> Result<LdaTransform> {
    let in_dim = scatter.mean.len();
    let rank_bound = in_dim.min(scatter.n_speakers - 1);
    if out_dim == 0 || out_dim > rank_bound {
        return Err(Error::invalid(
            "out_dim",
            format!("{out_dim} exceeds min(dim, speakers - 1) = {rank_bound}"),
        ));
    }
    let mut regularized = scatter.within.clone();
    for i in 0..in_dim {
        regularized[(i, i)] += ridge;
    }
    let chol = linalg::cholesky(&regularized, "within-class scatter").map_err(|_| {
        Error::SingularMatrix {
            context: "within-class scatter (try a positive ridge)".into(),
        }
    })?;
    let l = chol.l();

    // M = L^-1 S_b L^-T, symmetric; its eigenpairs give the
    // generalized problem's solutions via v = L^-T w.
    let a = l
        .solve_lower_triangular(&scatter.between)
        .ok_or_else(|| Error::SingularMatrix {
            context: "within-class Cholesky factor".into(),
        })?;
    let m = l
        .solve_lower_triangular(&a.transpose())
        .ok_or_else(|| Error::SingularMatrix {
            context: "within-class Cholesky factor".into(),
        })?;
    let eig = SymmetricEigen::new(linalg::symmetrize(&m));

    let mut order: Vec<usize> = (0..in_dim).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("finite eigenvalues")
    });

    let lt = l.transpose();
    let mut projection = DMatrix::zeros(out_dim, in_dim);
    for (row, &k) in order.iter().take(out_dim).enumerate() {
        let w = eig.eigenvectors.column(k).into_owned();
        let v = lt
            .solve_upper_triangular(&w)
            .ok_or_else(|| Error::SingularMatrix {
                context: "within-class Cholesky factor".into(),
            })?;
        let flip = v.iter().find(|x| **x != 0.0).is_some_and(|x| *x < 0.0);
        for (j, &x) in v.iter().enumerate() {
            projection[(row, j)] = if flip { -x } else { x };
        }
    }
    Ok(LdaTransform {
        in_dim,
        out_dim,
        mean: scatter.mean.clone(),
        projection,
    })
}

/// Applies `x -> P (x - mean)` to every record, preserving labels and order.
pub fn apply_lda(t: &LdaTransform, set: &EmbeddingSet) -> Result<EmbeddingSet> {
    if set.dim() != t.in_dim {
        return Err(Error::DimensionMismatch {
            expected: t.in_dim,
            got: set.dim(),
            context: "apply_lda".into(),
        });
    }
    let records = set
        .records()
        .iter()
        .map(|r| {
            let x = DVector::from_column_slice(&r.vector) - &t.mean;
            let y = &t.projection * x;
            EmbeddingRecord {
                utterance_id: r.utterance_id.clone(),
                speaker_id: r.speaker_id.clone(),
                vector: y.iter().copied().collect(),
            }
        })
        .collect();
    EmbeddingSet::new(t.out_dim, records)
}

/// Scales every vector to norm `sqrt(dim)`.
pub fn length_normalize(set: &EmbeddingSet) -> Result<EmbeddingSet> {
    let target = (set.dim() as f64).sqrt();
    let records = set
        .records()
        .iter()
        .map(|r| {
            let norm = r.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroNorm {
                    utterance_id: r.utterance_id.clone(),
                });
            }
            let scale = target / norm;
            Ok(EmbeddingRecord {
                utterance_id: r.utterance_id.clone(),
                speaker_id: r.speaker_id.clone(),
                vector: r.vector.iter().map(|v| v * scale).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EmbeddingSet::new(set.dim(), records)
}

/// Persists the transform in the "SVL1" binary container: magic,
/// u32 in_dim, u32 out_dim, mean, row-major projection, all f64 LE.
pub fn write_lda(t: &LdaTransform, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?);
    bin_write(&mut w, path, |w| {
        w.write_all(LDA_MAGIC)?;
        w.write_all(&(t.in_dim as u32).to_le_bytes())?;
        w.write_all(&(t.out_dim as u32).to_le_bytes())?;
        for v in t.mean.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        for i in 0..t.out_dim {
            for j in 0..t.in_dim {
                w.write_all(&t.projection[(i, j)].to_le_bytes())?;
            }
        }
        Ok(())
    })
}

pub fn read_lda(path: &Path) -> Result<LdaTransform> {
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?);
    bin_expect_magic(&mut r, LDA_MAGIC, path)?;
    let in_dim = bin_read_u32(&mut r, path)? as usize;
    let out_dim = bin_read_u32(&mut r, path)? as usize;
    if out_dim == 0 || in_dim == 0 || out_dim > in_dim {
        return Err(Error::parse(path, 0, "inconsistent dims in SVL1 header"));
    }
    let mean = DVector::from_vec(bin_read_f64_vec(&mut r, in_dim, path)?);
    let proj = bin_read_f64_vec(&mut r, out_dim * in_dim, path)?;
    Ok(LdaTransform {
        in_dim,
        out_dim,
        mean,
        projection: DMatrix::from_row_slice(out_dim, in_dim, &proj),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use crate::synth::{generate, GenerativeConfig};
    use approx::assert_relative_eq;

    fn rec(id: String, spk: &str, v: Vec<f64>) -> EmbeddingRecord {
        EmbeddingRecord {
            utterance_id: id,
            speaker_id: Some(spk.to_string()),
            vector: v,
        }
    }

    /// Two 2-D speaker clouds separated along axis 0.
    fn two_cluster_set(n_per: usize, sep: f64, seed: u64) -> EmbeddingSet {
        let mut rng = Stream::new(seed, 0);
        let mut records = Vec::new();
        for (spk, sign) in [("a", -1.0f64), ("b", 1.0)] {
            for i in 0..n_per {
                records.push(rec(
                    format!("{spk}{i}"),
                    spk,
                    vec![sign * sep + rng.next_normal(), rng.next_normal()],
                ));
            }
        }
        EmbeddingSet::new(2, records).unwrap()
    }

    fn rayleigh(scatter: &Scatter, v: &DVector<f64>, ridge: f64) -> f64 {
        let mut reg = scatter.within.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += ridge;
        }
        (v.transpose() * &scatter.between * v)[(0, 0)] / (v.transpose() * reg * v)[(0, 0)]
    }

    #[test]
    fn fisher_direction_aligns_with_separation_axis() {
        let set = two_cluster_set(400, 3.0, 1);
        let t = fit_lda(&set, 1, 0.0).unwrap();
        let row = t.projection.row(0).transpose();
        let cos = row[0].abs() / row.norm();
        assert!(cos > 0.99, "cosine to axis 0: {cos}");
    }

    #[test]
    fn full_rank_projection_whitens_within_scatter() {
        let config = GenerativeConfig::isotropic(5, 40, 30, 3.0, 1.0, 9);
        let set = generate(&config).unwrap();
        let t = fit_lda(&set, 5, 0.0).unwrap();
        let projected = apply_lda(&t, &set).unwrap();
        let s = scatter_matrices(&projected).unwrap();
        let eye = DMatrix::<f64>::identity(5, 5);
        assert!((s.within - eye).norm() < 1e-8);
    }

    #[test]
    fn out_dim_beyond_rank_bound_is_rejected() {
        let set = two_cluster_set(10, 1.0, 2);
        // 2 speakers: the rank bound is 1
        assert!(matches!(
            fit_lda(&set, 2, 0.0),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn singular_within_scatter_without_ridge_fails() {
        // identical utterances per speaker: within scatter is zero
        let set = EmbeddingSet::new(
            2,
            vec![
                rec("a1".into(), "a", vec![0.0, 0.0]),
                rec("a2".into(), "a", vec![0.0, 0.0]),
                rec("b1".into(), "b", vec![1.0, 1.0]),
                rec("b2".into(), "b", vec![1.0, 1.0]),
            ],
        )
        .unwrap();
        assert!(matches!(
            fit_lda(&set, 1, 0.0),
            Err(Error::SingularMatrix { .. })
        ));
        assert!(fit_lda(&set, 1, 1e-3).is_ok());
    }

    #[test]
    fn apply_centers_and_projects() {
        let set = two_cluster_set(50, 2.0, 3);
        let t = fit_lda(&set, 1, 0.0).unwrap();
        let mean_rec = EmbeddingSet::new(
            2,
            vec![EmbeddingRecord {
                utterance_id: "m".into(),
                speaker_id: None,
                vector: t.mean().iter().copied().collect(),
            }],
        )
        .unwrap();
        let out = apply_lda(&t, &mean_rec).unwrap();
        assert!(out.records()[0].vector[0].abs() < 1e-12);

        let empty = EmbeddingSet::new(2, Vec::new()).unwrap();
        let out = apply_lda(&t, &empty).unwrap();
        assert_eq!(out.dim(), 1);
        assert!(out.is_empty());

        let wrong = EmbeddingSet::new(3, Vec::new()).unwrap();
        assert!(apply_lda(&t, &wrong).is_err());
    }

    #[test]
    fn fisher_ratio_survives_invertible_affine_maps() {
        let set = two_cluster_set(300, 2.0, 4);
        let a = DMatrix::from_row_slice(2, 2, &[1.3, -0.4, 0.7, 2.1]);
        let b = DVector::from_vec(vec![5.0, -3.0]);
        let mapped = EmbeddingSet::new(
            2,
            set.records()
                .iter()
                .map(|r| EmbeddingRecord {
                    utterance_id: r.utterance_id.clone(),
                    speaker_id: r.speaker_id.clone(),
                    vector: (&a * DVector::from_column_slice(&r.vector) + &b)
                        .iter()
                        .copied()
                        .collect(),
                })
                .collect(),
        )
        .unwrap();

        let t1 = fit_lda(&set, 1, 0.0).unwrap();
        let t2 = fit_lda(&mapped, 1, 0.0).unwrap();
        let s1 = scatter_matrices(&set).unwrap();
        let s2 = scatter_matrices(&mapped).unwrap();
        let r1 = rayleigh(&s1, &t1.projection.row(0).transpose(), 0.0);
        let r2 = rayleigh(&s2, &t2.projection.row(0).transpose(), 0.0);
        assert_relative_eq!(r1, r2, max_relative = 1e-8);
    }

    #[test]
    fn top_eigenvalue_beats_random_directions() {
        let config = GenerativeConfig::isotropic(6, 30, 10, 2.0, 1.0, 17);
        let set = generate(&config).unwrap();
        let scatter = scatter_matrices(&set).unwrap();
        let ridge = auto_ridge(&scatter.within);
        let t = fit_lda(&set, 1, ridge).unwrap();
        let best = rayleigh(&scatter, &t.projection.row(0).transpose(), ridge);
        let mut rng = Stream::new(5, 0);
        for _ in 0..1000 {
            let v = DVector::from_vec(rng.normals(6));
            assert!(rayleigh(&scatter, &v, ridge) <= best * (1.0 + 1e-12));
        }
    }

    #[test]
    fn length_normalize_contract() {
        let config = GenerativeConfig::isotropic(7, 10, 4, 1.0, 1.0, 23);
        let set = generate(&config).unwrap();
        let normed = length_normalize(&set).unwrap();
        let target = 7f64.sqrt();
        for r in normed.records() {
            let n = r.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - target).abs() < 1e-10);
        }
        // idempotence
        let twice = length_normalize(&normed).unwrap();
        for (a, b) in normed.records().iter().zip(twice.records()) {
            for (x, y) in a.vector.iter().zip(&b.vector) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn length_normalize_is_scale_invariant() {
        let v = vec![0.3, -1.2, 2.5];
        let set = EmbeddingSet::new(
            3,
            vec![
                EmbeddingRecord {
                    utterance_id: "x".into(),
                    speaker_id: None,
                    vector: v.clone(),
                },
                EmbeddingRecord {
                    utterance_id: "x7".into(),
                    speaker_id: None,
                    vector: v.iter().map(|x| 7.0 * x).collect(),
                },
            ],
        )
        .unwrap();
        let n = length_normalize(&set).unwrap();
        for (a, b) in n.records()[0].vector.iter().zip(&n.records()[1].vector) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_vector_reports_utterance_id() {
        let set = EmbeddingSet::new(
            2,
            vec![EmbeddingRecord {
                utterance_id: "silent".into(),
                speaker_id: None,
                vector: vec![0.0, 0.0],
            }],
        )
        .unwrap();
        match length_normalize(&set).unwrap_err() {
            Error::ZeroNorm { utterance_id } => assert_eq!(utterance_id, "silent"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lda_file_round_trip() {
        let set = two_cluster_set(60, 2.0, 6);
        let t = fit_lda(&set, 1, 1e-6).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.svl1");
        write_lda(&t, &p).unwrap();
        let back = read_lda(&p).unwrap();
        assert_eq!(t, back);
    }
}
