//! Synthetic embedding populations drawn from the two-covariance model.
//!
//! For each speaker `s` a latent mean is drawn from
//! `Normal(global_mean, between_cov)`, and each of the speaker's
//! utterances from `Normal(y_s, within_cov)`. Sampling is fully
//! deterministic given the seed: speaker `s` consumes the counter-based
//! substream `(seed, s)` from [`crate::rng`], drawing `dim` normals for
//! the latent mean followed by `dim` normals per utterance, with
//! covariance factors applied as `mean + F z` where `F F^T` equals the
//! configured covariance (see [`crate::linalg::psd_factor`]). Trial
//! sampling uses the reserved substream id `1 << 32`.
//!
//! Configs can be parsed from `key=value` text: `dim`, `speakers`
//! (alias `n_speakers`), `utts_per_speaker`, `seed`, `between`/`within`
//! (`iso:v`, `diag:v1,v2,...` or `file:PATH`), and optional `mean`
//! (scalar broadcast or comma-separated vector, default zero).

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{EmbeddingRecord, EmbeddingSet, KeyEntry, Trial, TrialKey, TrialLabel};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::Stream;

/// Substream id reserved for trial sampling.
const TRIAL_STREAM: u64 = 1 << 32;

/// Parameters of the generative model.
#[derive(Debug, Clone)]
pub struct GenerativeConfig {
    pub dim: usize,
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    pub between_cov: DMatrix<f64>,
    pub within_cov: DMatrix<f64>,
    pub global_mean: DVector<f64>,
    pub seed: u64,
}

impl GenerativeConfig {
    /// Isotropic shorthand used heavily by tests: `between = b I`,
    /// `within = w I`, zero mean.
    pub fn isotropic(
        dim: usize,
        n_speakers: usize,
        utts_per_speaker: usize,
        between: f64,
        within: f64,
        seed: u64,
    ) -> Self {
        GenerativeConfig {
            dim,
            n_speakers,
            utts_per_speaker,
            between_cov: DMatrix::identity(dim, dim) * between,
            within_cov: DMatrix::identity(dim, dim) * within,
            global_mean: DVector::zeros(dim),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.n_speakers == 0 || self.utts_per_speaker == 0 {
            return Err(Error::invalid(
                "generative config",
                "dim, speakers and utts_per_speaker must be positive",
            ));
        }
        for (name, m) in [("between_cov", &self.between_cov), ("within_cov", &self.within_cov)] {
            if m.nrows() != self.dim || m.ncols() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: m.nrows(),
                    context: name.into(),
                });
            }
            linalg::check_symmetric(m, 1e-12, name)?;
        }
        if self.global_mean.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: self.global_mean.len(),
                context: "global_mean".into(),
            });
        }
        // within must be strictly positive definite
        linalg::cholesky(&self.within_cov, "within_cov")?;
        Ok(())
    }
}

/// Draws a labeled embedding set from the configured model.
pub fn generate(config: &GenerativeConfig) -> Result<EmbeddingSet> {
    generate_prefixed(config, "")
}

fn generate_prefixed(config: &GenerativeConfig, prefix: &str) -> Result<EmbeddingSet> {
    config.validate()?;
    let between_factor = linalg::psd_factor(&config.between_cov, "between_cov")?;
    let within_factor = linalg::psd_factor(&config.within_cov, "within_cov")?;

    let per_speaker: Vec<Vec<EmbeddingRecord>> = (0..config.n_speakers)
        .into_par_iter()
        .map(|s| {
            let mut stream = Stream::new(config.seed, s as u64);
            let z = DVector::from_vec(stream.normals(config.dim));
            let speaker_mean = &config.global_mean + &between_factor * z;
            let speaker_id = format!("{prefix}s{s:05}");
            (0..config.utts_per_speaker)
                .map(|u| {
                    let z = DVector::from_vec(stream.normals(config.dim));
                    let x = &speaker_mean + &within_factor * z;
                    EmbeddingRecord {
                        utterance_id: format!("{speaker_id}_u{u:03}"),
                        speaker_id: Some(speaker_id.clone()),
                        vector: x.iter().copied().collect(),
                    }
                })
                .collect()
        })
        .collect();

    EmbeddingSet::new(config.dim, per_speaker.into_iter().flatten().collect())
}

/// Draws an out-of-domain and an in-domain set with disjoint speaker
/// namespaces (`out_`/`in_` prefixes).
pub fn make_two_domain(
    config_out: &GenerativeConfig,
    config_in: &GenerativeConfig,
) -> Result<(EmbeddingSet, EmbeddingSet)> {
    if config_out.dim != config_in.dim {
        return Err(Error::DimensionMismatch {
            expected: config_out.dim,
            got: config_in.dim,
            context: "two-domain generation".into(),
        });
    }
    Ok((
        generate_prefixed(config_out, "out_")?,
        generate_prefixed(config_in, "in_")?,
    ))
}

/// Samples a trial key over a labeled set with single-utterance
/// enrollment: every unordered record pair (i < j, in record order) is a
/// candidate, target iff both records share a speaker.
///
/// `max_targets` / `max_nontargets` cap each class (0 keeps all);
/// sampling without replacement uses substream `1 << 32` and the output
/// stays in candidate order.
pub fn sample_trials(
    set: &EmbeddingSet,
    max_targets: usize,
    max_nontargets: usize,
    seed: u64,
) -> Result<TrialKey> {
    if !set.is_labeled() {
        return Err(Error::invalid("trial sampling", "embedding set must be labeled"));
    }
    let records = set.records();
    let mut targets = Vec::new();
    let mut nontargets = Vec::new();
    for i in 0..records.len() {
        for j in (i + 1)..records.len() {
            if records[i].speaker_id == records[j].speaker_id {
                targets.push((i, j));
            } else {
                nontargets.push((i, j));
            }
        }
    }
    let mut rng = Stream::new(seed, TRIAL_STREAM);
    let targets = subsample(targets, max_targets, &mut rng);
    let nontargets = subsample(nontargets, max_nontargets, &mut rng);

    let mut entries: Vec<(usize, usize, TrialLabel)> = targets
        .into_iter()
        .map(|(i, j)| (i, j, TrialLabel::Target))
        .chain(
            nontargets
                .into_iter()
                .map(|(i, j)| (i, j, TrialLabel::Nontarget)),
        )
        .collect();
    entries.sort_unstable_by_key(|&(i, j, _)| (i, j));

    TrialKey::new(
        entries
            .into_iter()
            .map(|(i, j, label)| KeyEntry {
                trial: Trial::new(
                    records[i].utterance_id.clone(),
                    records[j].utterance_id.clone(),
                ),
                label,
            })
            .collect(),
    )
}

fn subsample(mut pairs: Vec<(usize, usize)>, max: usize, rng: &mut Stream) -> Vec<(usize, usize)> {
    if max == 0 || pairs.len() <= max {
        return pairs;
    }
    // partial Fisher-Yates, then restore candidate order
    for k in 0..max {
        let pick = k + rng.next_below((pairs.len() - k) as u64) as usize;
        pairs.swap(k, pick);
    }
    pairs.truncate(max);
    pairs.sort_unstable();
    pairs
}

/// Parses a `key=value` config file (see module docs for the keys).
pub fn parse_config_file(path: &Path) -> Result<GenerativeConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_config(&text, path)
}

pub fn parse_config(text: &str, path: &Path) -> Result<GenerativeConfig> {
    let mut kv: HashMap<&str, &str> = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, lineno + 1, format!("expected key=value, got `{line}`")))?;
        kv.insert(k.trim(), v.trim());
    }
    let get = |keys: &[&str]| -> Result<&str> {
        keys.iter()
            .find_map(|k| kv.get(k).copied())
            .ok_or_else(|| Error::parse(path, 0, format!("missing key `{}`", keys[0])))
    };
    let parse_usize = |name: &str, v: &str| -> Result<usize> {
        v.parse()
            .map_err(|_| Error::parse(path, 0, format!("bad {name} `{v}`")))
    };

    let dim = parse_usize("dim", get(&["dim"])?)?;
    let n_speakers = parse_usize("speakers", get(&["speakers", "n_speakers"])?)?;
    let utts_per_speaker = parse_usize("utts_per_speaker", get(&["utts_per_speaker"])?)?;
    let seed = get(&["seed"])?
        .parse::<u64>()
        .map_err(|_| Error::parse(path, 0, "bad seed"))?;
    let between_cov = parse_cov_spec(get(&["between"])?, dim)?;
    let within_cov = parse_cov_spec(get(&["within"])?, dim)?;
    let global_mean = match kv.get("mean") {
        Some(v) => parse_mean_spec(v, dim)?,
        None => DVector::zeros(dim),
    };
    Ok(GenerativeConfig {
        dim,
        n_speakers,
        utts_per_speaker,
        between_cov,
        within_cov,
        global_mean,
        seed,
    })
}

/// `iso:v`, `diag:v1,v2,...` (single value broadcasts) or `file:PATH`.
pub fn parse_cov_spec(spec: &str, dim: usize) -> Result<DMatrix<f64>> {
    let bad = |msg: String| Error::invalid("covariance spec", msg);
    if let Some(v) = spec.strip_prefix("iso:") {
        let v: f64 = v.parse().map_err(|_| bad(format!("bad iso value `{v}`")))?;
        return Ok(DMatrix::identity(dim, dim) * v);
    }
    if let Some(list) = spec.strip_prefix("diag:") {
        let vals = parse_float_list(list)
            .map_err(|t| bad(format!("bad diag value `{t}`")))?;
        let diag: Vec<f64> = if vals.len() == 1 {
            vec![vals[0]; dim]
        } else if vals.len() == dim {
            vals
        } else {
            return Err(bad(format!("diag needs 1 or {dim} values, got {}", vals.len())));
        };
        return Ok(DMatrix::from_diagonal(&DVector::from_vec(diag)));
    }
    if let Some(p) = spec.strip_prefix("file:") {
        return read_matrix_file(Path::new(p), dim);
    }
    Err(bad(format!("`{spec}` is not iso:, diag: or file:")))
}

/// Scalar broadcast or comma-separated vector.
pub fn parse_mean_spec(spec: &str, dim: usize) -> Result<DVector<f64>> {
    let vals = parse_float_list(spec)
        .map_err(|t| Error::invalid("mean spec", format!("bad value `{t}`")))?;
    if vals.len() == 1 {
        Ok(DVector::from_element(dim, vals[0]))
    } else if vals.len() == dim {
        Ok(DVector::from_vec(vals))
    } else {
        Err(Error::invalid(
            "mean spec",
            format!("needs 1 or {dim} values, got {}", vals.len()),
        ))
    }
}

fn parse_float_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| t.to_string()))
        .collect()
}

/// Text matrix file: first line the dimension, then one row per line.
pub fn read_matrix_file(path: &Path, dim: usize) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut lines = text.lines();
    let n: usize = lines
        .next()
        .and_then(|l| l.trim().parse().ok())
        .ok_or_else(|| Error::parse(path, 1, "expected dimension on first line"))?;
    if n != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: n,
            context: format!("matrix file {}", path.display()),
        });
    }
    let mut values = Vec::with_capacity(n * n);
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        for tok in line.split_whitespace() {
            values.push(tok.parse::<f64>().map_err(|_| {
                Error::parse(path, lineno + 2, format!("bad float `{tok}`"))
            })?);
        }
    }
    if values.len() != n * n {
        return Err(Error::parse(
            path,
            0,
            format!("expected {} values, got {}", n * n, values.len()),
        ));
    }
    Ok(DMatrix::from_row_slice(n, n, &values))
}

#[cfg(test)]
mod tests {
    use super::*;
    /// Moment estimators used as the oracle for recovery checks:
    /// pooled within-class covariance (divisor N - S) and the
    /// count-corrected between-class estimate B = var(speaker means)
    /// - W/n for balanced sets.
    pub(crate) fn moment_estimates(set: &EmbeddingSet) -> (DMatrix<f64>, DMatrix<f64>) {
        let dim = set.dim();
        let groups = set.by_speaker().unwrap();
        let n_total = set.len();
        let n_speakers = groups.len();
        let grand = set
            .records()
            .iter()
            .fold(DVector::zeros(dim), |acc, r| {
                acc + DVector::from_column_slice(&r.vector)
            })
            / n_total as f64;

        let mut within = DMatrix::zeros(dim, dim);
        let mut means = Vec::with_capacity(n_speakers);
        for (_, idxs) in &groups {
            let m = idxs
                .iter()
                .fold(DVector::zeros(dim), |acc, &i| {
                    acc + DVector::from_column_slice(&set.records()[i].vector)
                })
                / idxs.len() as f64;
            for &i in idxs {
                let d = DVector::from_column_slice(&set.records()[i].vector) - &m;
                within += &d * d.transpose();
            }
            means.push((idxs.len(), m));
        }
        within /= (n_total - n_speakers) as f64;

        let n_per = means[0].0; // balanced sets only
        let mut between = DMatrix::zeros(dim, dim);
        for (_, m) in &means {
            let d = m - &grand;
            between += &d * d.transpose();
        }
        between /= (n_speakers - 1) as f64;
        between -= &within / n_per as f64;
        (between, within)
    }

    #[test]
    fn zero_between_gives_global_mean_clusters() {
        let config = GenerativeConfig::isotropic(5, 12_500, 8, 0.0, 1.0, 11);
        let set = generate(&config).unwrap();
        assert_eq!(set.len(), 100_000);

        let dim = set.dim();
        let n = set.len() as f64;
        let mean = set
            .records()
            .iter()
            .fold(DVector::zeros(dim), |acc, r| {
                acc + DVector::from_column_slice(&r.vector)
            })
            / n;
        assert!(mean.norm() < 0.02, "grand mean {mean}");

        let mut cov = DMatrix::zeros(dim, dim);
        for r in set.records() {
            let d = DVector::from_column_slice(&r.vector) - &mean;
            cov += &d * d.transpose();
        }
        cov /= n;
        let eye = DMatrix::<f64>::identity(dim, dim);
        let err = (&cov - &eye).norm() / eye.norm();
        assert!(err < 0.05, "covariance error {err}");
    }

    #[test]
    fn one_dim_moments_recover_configured_variances() {
        let config = GenerativeConfig::isotropic(1, 2000, 10, 4.0, 1.0, 5);
        let set = generate(&config).unwrap();
        let (between, within) = moment_estimates(&set);
        assert!((between[(0, 0)] - 4.0).abs() / 4.0 < 0.05, "between {between}");
        assert!((within[(0, 0)] - 1.0).abs() < 0.05, "within {within}");
    }

    #[test]
    fn generation_is_deterministic() {
        let config = GenerativeConfig::isotropic(4, 30, 5, 2.0, 1.0, 123);
        let a = generate(&config).unwrap();
        let b = generate(&config).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.records().iter().zip(b.records()) {
            assert_eq!(x.utterance_id, y.utterance_id);
            for (u, v) in x.vector.iter().zip(&y.vector) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn two_domain_sets_have_disjoint_speakers_and_matching_stats() {
        let c1 = GenerativeConfig::isotropic(3, 2000, 4, 2.0, 1.0, 7);
        let mut c2 = c1.clone();
        c2.seed = 8;
        let (out, indom) = make_two_domain(&c1, &c2).unwrap();
        assert!(out.records().iter().all(|r| r.speaker_id.as_ref().unwrap().starts_with("out_")));
        assert!(indom.records().iter().all(|r| r.speaker_id.as_ref().unwrap().starts_with("in_")));

        let mean = |s: &EmbeddingSet| {
            s.records()
                .iter()
                .fold(DVector::zeros(3), |acc, r| acc + DVector::from_column_slice(&r.vector))
                / s.len() as f64
        };
        // same distribution, different draws: grand means agree within
        // sampling error (per-coordinate sd of the difference ~ 0.05)
        assert!((mean(&out) - mean(&indom)).norm() < 0.2);
    }

    #[test]
    fn shifted_mean_shows_up_in_sample_mean() {
        let c_out = GenerativeConfig::isotropic(4, 1250, 8, 1.0, 1.0, 3);
        let mut c_in = c_out.clone();
        c_in.seed = 4;
        c_in.global_mean[0] = 5.0;
        let (out, indom) = make_two_domain(&c_out, &c_in).unwrap();
        let mean0 = |s: &EmbeddingSet| {
            s.records().iter().map(|r| r.vector[0]).sum::<f64>() / s.len() as f64
        };
        let diff = mean0(&indom) - mean0(&out);
        assert!((diff - 5.0).abs() / 5.0 < 0.02, "diff {diff}");
    }

    #[test]
    fn non_pd_within_is_rejected() {
        let mut config = GenerativeConfig::isotropic(2, 3, 2, 1.0, 1.0, 1);
        config.within_cov[(1, 1)] = -1.0;
        assert!(matches!(
            generate(&config),
            Err(Error::NotPositiveDefinite { .. })
        ));

        config = GenerativeConfig::isotropic(2, 3, 2, 1.0, 0.0, 1);
        assert!(generate(&config).is_err(), "singular within must be rejected");
    }

    #[test]
    fn asymmetric_covariance_is_rejected() {
        let mut config = GenerativeConfig::isotropic(2, 3, 2, 1.0, 1.0, 1);
        config.between_cov[(0, 1)] = 1e-6;
        assert!(generate(&config).is_err());
    }

    #[test]
    fn config_parsing_round_trip() {
        let text = "# comment\ndim=3\nspeakers=4\nutts_per_speaker=2\nseed=9\n\
                    between=diag:1,2,3\nwithin=iso:0.5\nmean=1.0,2.0,3.0\n";
        let cfg = parse_config(text, Path::new("test.cfg")).unwrap();
        assert_eq!(cfg.dim, 3);
        assert_eq!(cfg.n_speakers, 4);
        assert_eq!(cfg.between_cov[(1, 1)], 2.0);
        assert_eq!(cfg.within_cov[(2, 2)], 0.5);
        assert_eq!(cfg.global_mean[1], 2.0);
        let set = generate(&cfg).unwrap();
        assert_eq!(set.len(), 8);
    }

    #[test]
    fn trial_sampling_is_deterministic_and_capped() {
        let config = GenerativeConfig::isotropic(2, 10, 4, 1.0, 1.0, 2);
        let set = generate(&config).unwrap();
        let key = sample_trials(&set, 20, 50, 99).unwrap();
        let key2 = sample_trials(&set, 20, 50, 99).unwrap();
        assert_eq!(key.entries(), key2.entries());
        assert_eq!(key.count(TrialLabel::Target), 20);
        assert_eq!(key.count(TrialLabel::Nontarget), 50);

        let all = sample_trials(&set, 0, 0, 99).unwrap();
        // 10 speakers x C(4,2) targets, rest of C(40,2) nontargets
        assert_eq!(all.count(TrialLabel::Target), 60);
        assert_eq!(all.count(TrialLabel::Nontarget), 780 - 60);
    }
}
