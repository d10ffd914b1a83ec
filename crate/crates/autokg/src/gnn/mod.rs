//! The four learnable graph transformations and the self-supervised
//! trainer: feature denoising, topological relation extraction, Chebyshev
//! local relation extraction, and semantic attention convolution.
//!
//! Gradients are hand-derived reverse mode — four fixed layer types, no
//! general autodiff — every one covered by finite-difference checks in
//! [`grad_check`].

mod gradcheck;
mod layers;
mod loss;
mod train;

pub use gradcheck::{grad_check, GradCheckInputs, GradLayer};
pub use layers::{
    cheb_forward, fdn_attention, fdn_forward, semantic_attention, semantic_forward, topo_forward,
};
pub use loss::{negative_sample, self_supervised_loss};
pub use train::{
    chebyshev_operator, train, train_stage1, train_stage2, TrainConfig, TrainOutcome,
};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Learnable weights and attention vectors for the four layers.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// Feature-denoising transform, F × d_in.
    pub w_fd: Array2<f64>,
    /// Feature-denoising attention vector, length 2F.
    pub a_fd: Array1<f64>,
    /// Topological-relation transform, F × F.
    pub w_tr: Array2<f64>,
    /// Chebyshev filter weights, K matrices of F × F.
    pub w_nr: Vec<Array2<f64>>,
    /// Semantic convolution transform, F × 2F.
    pub w_s: Array2<f64>,
    /// Semantic attention vector, length 2F.
    pub a_s: Array1<f64>,
    /// Seed the initial values were drawn from (provenance only).
    pub init_seed: u64,
}

impl LayerParams {
    /// Seeded uniform(-0.1, 0.1) initialization, in a fixed draw order.
    pub fn init(d_in: usize, f: usize, k: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |rows: usize, cols: usize| {
            Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-0.1..0.1))
        };
        let w_fd = draw(f, d_in);
        let a_fd_m = draw(1, 2 * f);
        let w_tr = draw(f, f);
        let w_nr = (0..k).map(|_| draw(f, f)).collect();
        let w_s = draw(f, 2 * f);
        let a_s_m = draw(1, 2 * f);
        LayerParams {
            w_fd,
            a_fd: a_fd_m.row(0).to_owned(),
            w_tr,
            w_nr,
            w_s,
            a_s: a_s_m.row(0).to_owned(),
            init_seed: seed,
        }
    }

    pub fn feature_len(&self) -> usize {
        self.w_fd.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_fd.ncols()
    }

    pub fn filter_size(&self) -> usize {
        self.w_nr.len()
    }

    pub fn validate_finite(&self) -> Result<()> {
        let all_finite = self.w_fd.iter().all(|v| v.is_finite())
            && self.a_fd.iter().all(|v| v.is_finite())
            && self.w_tr.iter().all(|v| v.is_finite())
            && self.w_nr.iter().flatten().all(|v| v.is_finite())
            && self.w_s.iter().all(|v| v.is_finite())
            && self.a_s.iter().all(|v| v.is_finite());
        if all_finite {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "layer parameters contain non-finite values".into(),
            ))
        }
    }

    /// Versioned JSON checkpoint with dims, seed, and all matrices.
    pub fn to_checkpoint_json(&self) -> String {
        let doc = CheckpointJson {
            version: CHECKPOINT_VERSION,
            d_in: self.input_dim(),
            f: self.feature_len(),
            k: self.filter_size(),
            init_seed: self.init_seed,
            w_fd: to_nested(&self.w_fd),
            a_fd: self.a_fd.to_vec(),
            w_tr: to_nested(&self.w_tr),
            w_nr: self.w_nr.iter().map(to_nested).collect(),
            w_s: to_nested(&self.w_s),
            a_s: self.a_s.to_vec(),
        };
        serde_json::to_string(&doc).expect("checkpoint serialization cannot fail")
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let doc: CheckpointJson =
            serde_json::from_str(text).map_err(|e| Error::schema("$", e.to_string()))?;
        if doc.version != CHECKPOINT_VERSION {
            return Err(Error::schema(
                "version",
                format!("unsupported checkpoint version {}", doc.version),
            ));
        }
        let params = LayerParams {
            w_fd: from_nested(&doc.w_fd, "w_fd")?,
            a_fd: Array1::from_vec(doc.a_fd),
            w_tr: from_nested(&doc.w_tr, "w_tr")?,
            w_nr: doc
                .w_nr
                .iter()
                .map(|m| from_nested(m, "w_nr"))
                .collect::<Result<_>>()?,
            w_s: from_nested(&doc.w_s, "w_s")?,
            a_s: Array1::from_vec(doc.a_s),
            init_seed: doc.init_seed,
        };
        let (f, d_in, k) = (params.feature_len(), params.input_dim(), params.filter_size());
        if doc.f != f || doc.d_in != d_in || doc.k != k {
            return Err(Error::schema(
                "$",
                format!(
                    "checkpoint dims (d_in={}, f={}, k={}) disagree with matrices ({d_in}, {f}, {k})",
                    doc.d_in, doc.f, doc.k
                ),
            ));
        }
        if params.a_fd.len() != 2 * f
            || params.a_s.len() != 2 * f
            || params.w_tr.dim() != (f, f)
            || params.w_s.dim() != (f, 2 * f)
            || params.w_nr.iter().any(|w| w.dim() != (f, f))
        {
            return Err(Error::schema("$", "inconsistent parameter shapes"));
        }
        params.validate_finite()?;
        Ok(params)
    }
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointJson {
    version: u32,
    d_in: usize,
    f: usize,
    k: usize,
    init_seed: u64,
    w_fd: Vec<Vec<f64>>,
    a_fd: Vec<f64>,
    w_tr: Vec<Vec<f64>>,
    w_nr: Vec<Vec<Vec<f64>>>,
    w_s: Vec<Vec<f64>>,
    a_s: Vec<f64>,
}

fn to_nested(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_nested(rows: &[Vec<f64>], field: &str) -> Result<Array2<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::schema(field, "ragged matrix"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((r, c), flat).map_err(|e| Error::schema(field, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = LayerParams::init(16, 4, 3, 11);
        let b = LayerParams::init(16, 4, 3, 11);
        assert_eq!(a, b);
        assert!(a.w_fd.iter().all(|v| (-0.1..0.1).contains(v)));
        assert_eq!(a.w_nr.len(), 3);
        assert_eq!(a.a_fd.len(), 8);
        assert_eq!(a.w_s.dim(), (4, 8));
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = LayerParams::init(12, 3, 2, 5);
        let json = p.to_checkpoint_json();
        let back = LayerParams::from_checkpoint_json(&json).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn checkpoint_rejects_bad_version() {
        let p = LayerParams::init(4, 2, 1, 0);
        let json = p.to_checkpoint_json().replace("\"version\":1", "\"version\":9");
        assert!(LayerParams::from_checkpoint_json(&json).is_err());
    }
}
