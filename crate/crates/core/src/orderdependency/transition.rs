use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::{read_json, write_json, AnnotationSet};
use crate::error::{Error, Result};

/// First-order step transition statistics learned from annotations.
///
/// `omega[i][j]` counts how often step `j` directly follows step `i`;
/// `upsilon` is `omega` with each nonzero row normalized to sum to one;
/// `eta[i]` is the fraction of videos whose first segment is step `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    k: usize,
    omega: Vec<u64>,
    upsilon: Vec<f64>,
    eta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionFile {
    #[serde(rename = "K")]
    k: usize,
    omega: Vec<Vec<u64>>,
    upsilon: Vec<Vec<f64>>,
    eta: Vec<f64>,
}

fn normalize_rows(k: usize, omega: &[u64]) -> Vec<f64> {
    let mut upsilon = vec![0.0; k * k];
    for i in 0..k {
        let row = &omega[i * k..(i + 1) * k];
        let total: u64 = row.iter().sum();
        if total > 0 {
            for (u, &c) in upsilon[i * k..(i + 1) * k].iter_mut().zip(row) {
                *u = c as f64 / total as f64;
            }
        }
    }
    upsilon
}

impl TransitionModel {
    /// Builds the model from counts. `upsilon` is derived from `omega`.
    pub fn from_parts(k: usize, omega: Vec<u64>, eta: Vec<f64>) -> Result<Self> {
        if omega.len() != k * k || eta.len() != k {
            return Err(Error::Dimension(format!(
                "transition model needs a {k}x{k} omega and {k} eta entries"
            )));
        }
        if eta.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(Error::invalid("eta entries must be finite and >= 0"));
        }
        if eta.iter().sum::<f64>() > 1.0 + 1e-6 {
            return Err(Error::invalid("eta entries must sum to at most 1"));
        }
        let upsilon = normalize_rows(k, &omega);
        Ok(TransitionModel {
            k,
            omega,
            upsilon,
            eta,
        })
    }

    pub fn num_steps(&self) -> usize {
        self.k
    }

    pub fn omega(&self, i: usize, j: usize) -> u64 {
        self.omega[i * self.k + j]
    }

    pub fn upsilon(&self, i: usize, j: usize) -> f64 {
        self.upsilon[i * self.k + j]
    }

    pub fn upsilon_row(&self, i: usize) -> &[f64] {
        &self.upsilon[i * self.k..(i + 1) * self.k]
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    /// One transition step: `next[j] = sum_i prev[i] * upsilon[i][j]`.
    pub fn propagate(&self, prev: &[f64]) -> Vec<f64> {
        let mut next = vec![0.0; self.k];
        for (i, p) in prev.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            for (n, u) in next.iter_mut().zip(self.upsilon_row(i)) {
                *n += p * u;
            }
        }
        next
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let k = self.k;
        let file = TransitionFile {
            k,
            omega: self.omega.chunks(k.max(1)).map(<[u64]>::to_vec).collect(),
            upsilon: self.upsilon.chunks(k.max(1)).map(<[f64]>::to_vec).collect(),
            eta: self.eta.clone(),
        };
        write_json(path, &file)
    }

    /// Loads `transitions.json`. The stored `upsilon` must agree with the one
    /// re-derived from `omega`; the re-derived matrix is kept.
    pub fn load(path: &Path) -> Result<Self> {
        let file: TransitionFile = read_json(path)?;
        let k = file.k;
        if file.omega.len() != k || file.omega.iter().any(|r| r.len() != k) {
            return Err(Error::Dimension(format!(
                "{}: omega must be {k}x{k}",
                path.display()
            )));
        }
        if file.upsilon.len() != k || file.upsilon.iter().any(|r| r.len() != k) {
            return Err(Error::Dimension(format!(
                "{}: upsilon must be {k}x{k}",
                path.display()
            )));
        }
        let model = TransitionModel::from_parts(k, file.omega.concat(), file.eta)
            .map_err(|e| e.at(path))?;
        for (given, derived) in file.upsilon.concat().iter().zip(&model.upsilon) {
            if (given - derived).abs() > 1e-6 {
                return Err(Error::invalid(format!(
                    "{}: upsilon is not the row-normalized omega",
                    path.display()
                )));
            }
        }
        Ok(model)
    }
}

/// Counts adjacent step pairs and first steps over all training videos.
pub fn build_transition(train: &AnnotationSet, k: usize) -> Result<TransitionModel> {
    let mut omega = vec![0u64; k * k];
    let mut first = vec![0u64; k];
    for v in &train.videos {
        let seq = v.step_sequence();
        if let Some(bad) = seq.iter().find(|&&s| s >= k) {
            return Err(Error::Dimension(format!(
                "video {}: step {bad} outside K={k}",
                v.video_id
            )));
        }
        if let Some(&s) = seq.first() {
            first[s] += 1;
        }
        for pair in seq.windows(2) {
            omega[pair[0] * k + pair[1]] += 1;
        }
    }
    let n = train.videos.len();
    let eta = first
        .iter()
        .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
        .collect();
    TransitionModel::from_parts(k, omega, eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{AnnotatedSegment, VideoAnnotation};

    pub(crate) fn annotations(seqs: &[&[usize]]) -> AnnotationSet {
        AnnotationSet {
            videos: seqs
                .iter()
                .enumerate()
                .map(|(i, seq)| VideoAnnotation {
                    video_id: format!("v{i}"),
                    task: 0,
                    duration_s: 100.0,
                    segments: seq
                        .iter()
                        .enumerate()
                        .map(|(j, &step)| AnnotatedSegment {
                            step,
                            start_s: 10.0 * j as f64,
                            end_s: 10.0 * j as f64 + 5.0,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn hand_counted_model() {
        let m = build_transition(&annotations(&[&[0, 1, 2], &[0, 2], &[0, 1, 2]]), 3).unwrap();
        let omega: Vec<u64> = (0..9).map(|x| m.omega(x / 3, x % 3)).collect();
        assert_eq!(omega, vec![0, 2, 1, 0, 0, 2, 0, 0, 0]);
        assert_eq!(m.upsilon_row(0), &[0.0, 2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(m.upsilon_row(1), &[0.0, 0.0, 1.0]);
        assert_eq!(m.upsilon_row(2), &[0.0, 0.0, 0.0]);
        assert_eq!(m.eta(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn one_segment_video() {
        let m = build_transition(&annotations(&[&[1]]), 3).unwrap();
        assert!((0..9).all(|x| m.omega(x / 3, x % 3) == 0));
        assert_eq!(m.eta(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn k_mismatch_is_an_error() {
        assert!(build_transition(&annotations(&[&[0, 5]]), 3).is_err());
    }

    #[test]
    fn propagation_uses_rows_as_source() {
        let m = build_transition(&annotations(&[&[0, 1, 2], &[0, 2], &[0, 1, 2]]), 3).unwrap();
        assert_eq!(
            m.propagate(&[1.0, 0.0, 0.0]),
            vec![0.0, 2.0 / 3.0, 1.0 / 3.0]
        );
        assert_eq!(m.propagate(&[0.0, 0.0, 1.0]), vec![0.0; 3]);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.json");
        let m = build_transition(&annotations(&[&[0, 1, 2], &[0, 2], &[0, 1, 2]]), 3).unwrap();
        m.save(&p).unwrap();
        assert_eq!(TransitionModel::load(&p).unwrap(), m);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(
            text.contains("\"K\": 3") && text.contains("0.666666667"),
            "{text}"
        );
    }

    #[test]
    fn inconsistent_upsilon_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.json");
        std::fs::write(
            &p,
            r#"{"K":2,"omega":[[0,1],[0,0]],"upsilon":[[0.5,0.5],[0,0]],"eta":[1,0]}"#,
        )
        .unwrap();
        assert!(TransitionModel::load(&p).is_err());
    }
}
