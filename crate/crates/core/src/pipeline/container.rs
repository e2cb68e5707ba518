//! Single-document JSON model container.
//!
//! The document is written with a fixed field order. Its last field is
//! `integrity_digest`, the hex SHA-256 of every byte before the
//! `,"integrity_digest":` separator. Floats use shortest round-trip decimal
//! text, so decoding restores every value bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{StackConfig, TripleLayerModel};
use crate::dataset::{Kpi, NormStats};
use crate::ebt::{BaggedEnsemble, EbtConfig, Node, RegressionTree};
use crate::geo::StationConfig;
use crate::gpr::{GprError, GprModel, GprParts, KernelSpec, RestartRecord};
use crate::stw::StwModel;

pub const FORMAT_VERSION: &str = "1.0";

const DIGEST_KEY: &[u8] = b",\"integrity_digest\":\"";
const VERSION_PREFIX: &[u8] = b"{\"format_version\":\"";

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("container is truncated or lacks an integrity digest")]
    Truncated,
    #[error("container format {found} is newer than supported {supported}")]
    Version { found: String, supported: String },
    #[error("integrity digest mismatch")]
    DigestMismatch,
    #[error("malformed container: {0}")]
    Malformed(String),
    #[error("stored config fingerprint does not match the stored config")]
    Fingerprint,
    #[error("cannot rebuild GP layer: {0}")]
    Gpr(#[from] GprError),
}

#[derive(Serialize, Deserialize)]
struct TreeDoc {
    split_count: usize,
    value: Vec<f64>,
    /// Split feature, or -1 for a leaf.
    feature: Vec<i64>,
    left: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct EbtDoc {
    config: EbtConfig,
    n_features: usize,
    oob_rmse: Option<f64>,
    trees: Vec<TreeDoc>,
}

#[derive(Serialize, Deserialize)]
struct GprDoc {
    kernel: KernelSpec,
    noise_variance: f64,
    jitter: f64,
    n_cols: usize,
    alpha: Vec<f64>,
    log_marginal_likelihood: f64,
    degenerate: bool,
    restarts: Vec<RestartRecord>,
}

#[derive(Serialize, Deserialize)]
struct Document {
    format_version: String,
    kpi: Kpi,
    config: StackConfig,
    config_fingerprint: String,
    created: DateTime<Utc>,
    station: StationConfig,
    norm_stats: NormStats,
    stw_terms: StwModel,
    ebt_nodes: EbtDoc,
    gpr_params: GprDoc,
    training_inputs: Vec<f64>,
}

fn tree_doc(t: &RegressionTree) -> TreeDoc {
    TreeDoc {
        split_count: t.split_count,
        value: t.nodes.iter().map(|n| n.value).collect(),
        feature: t
            .nodes
            .iter()
            .map(|n| if n.is_leaf() { -1 } else { n.feature as i64 })
            .collect(),
        left: t.nodes.iter().map(|n| n.left).collect(),
    }
}

fn tree_from_doc(d: TreeDoc, n_features: usize) -> Result<RegressionTree, ContainerError> {
    let len = d.value.len();
    if d.feature.len() != len || d.left.len() != len || len == 0 {
        return Err(ContainerError::Malformed("tree arrays differ in length".into()));
    }
    let mut nodes = Vec::with_capacity(len);
    for i in 0..len {
        let feature = match d.feature[i] {
            -1 => Node::LEAF,
            f if f >= 0 && (f as usize) < n_features => f as u32,
            f => return Err(ContainerError::Malformed(format!("bad split feature {f}"))),
        };
        if feature != Node::LEAF && (d.left[i] as usize + 1 >= len || d.left[i] as usize <= i) {
            return Err(ContainerError::Malformed("child index out of range".into()));
        }
        nodes.push(Node {
            value: d.value[i],
            feature,
            left: d.left[i],
        });
    }
    Ok(RegressionTree {
        n_features,
        nodes,
        split_count: d.split_count,
    })
}

fn document(m: &TripleLayerModel) -> Document {
    let g = &m.gpr;
    Document {
        format_version: FORMAT_VERSION.to_string(),
        kpi: m.kpi,
        config: m.config.clone(),
        config_fingerprint: m.config_fingerprint.clone(),
        created: m.created,
        station: m.station,
        norm_stats: m.norm.clone(),
        stw_terms: m.stw.clone(),
        ebt_nodes: EbtDoc {
            config: m.ebt.config,
            n_features: m.ebt.n_features(),
            oob_rmse: m.ebt.oob_rmse,
            trees: m.ebt.trees.iter().map(tree_doc).collect(),
        },
        gpr_params: GprDoc {
            kernel: g.kernel.clone(),
            noise_variance: g.noise_variance,
            jitter: g.jitter,
            n_cols: g.n_cols,
            alpha: g.alpha.clone(),
            log_marginal_likelihood: g.log_marginal_likelihood,
            degenerate: g.degenerate,
            restarts: g.restarts.clone(),
        },
        training_inputs: g.training_inputs.clone(),
    }
}

pub fn encode_model(m: &TripleLayerModel) -> Vec<u8> {
    let mut body = serde_json::to_vec(&document(m)).expect("model document serializes");
    let close = body.pop();
    debug_assert_eq!(close, Some(b'}'));
    let digest = hex::encode(Sha256::digest(&body));
    body.extend_from_slice(DIGEST_KEY);
    body.extend_from_slice(digest.as_bytes());
    body.extend_from_slice(b"\"}\n");
    body
}

fn major(version: &str) -> Option<u64> {
    version.split('.').next()?.parse().ok()
}

pub fn decode_model(bytes: &[u8]) -> Result<TripleLayerModel, ContainerError> {
    let trimmed = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    let inner = trimmed.strip_suffix(b"\"}").ok_or(ContainerError::Truncated)?;
    if inner.len() < 64 + DIGEST_KEY.len() {
        return Err(ContainerError::Truncated);
    }
    let (head, digest) = inner.split_at(inner.len() - 64);
    let payload = head.strip_suffix(DIGEST_KEY).ok_or(ContainerError::Truncated)?;

    if let Some(rest) = payload.strip_prefix(VERSION_PREFIX) {
        let end = rest.iter().position(|&b| b == b'"').unwrap_or(0);
        let found = String::from_utf8_lossy(&rest[..end]).to_string();
        match (major(&found), major(FORMAT_VERSION)) {
            (Some(f), Some(s)) if f > s => {
                return Err(ContainerError::Version {
                    found,
                    supported: FORMAT_VERSION.to_string(),
                })
            }
            _ => {}
        }
    }

    let actual = hex::encode(Sha256::digest(payload));
    if actual.as_bytes() != digest {
        return Err(ContainerError::DigestMismatch);
    }

    let mut text = payload.to_vec();
    text.push(b'}');
    let doc: Document = serde_json::from_slice(&text).map_err(|e| ContainerError::Malformed(e.to_string()))?;
    if major(&doc.format_version) != major(FORMAT_VERSION) {
        return Err(ContainerError::Version {
            found: doc.format_version,
            supported: FORMAT_VERSION.to_string(),
        });
    }
    if doc.config.fingerprint() != doc.config_fingerprint {
        return Err(ContainerError::Fingerprint);
    }

    let nf = doc.ebt_nodes.n_features;
    let trees = doc
        .ebt_nodes
        .trees
        .into_iter()
        .map(|t| tree_from_doc(t, nf))
        .collect::<Result<Vec<_>, _>>()?;
    if trees.is_empty() {
        return Err(ContainerError::Malformed("ensemble has no trees".into()));
    }
    let g = doc.gpr_params;
    let gpr = GprModel::try_from(GprParts {
        kernel: g.kernel,
        noise_variance: g.noise_variance,
        jitter: g.jitter,
        n_cols: g.n_cols,
        training_inputs: doc.training_inputs,
        alpha: g.alpha,
        log_marginal_likelihood: g.log_marginal_likelihood,
        degenerate: g.degenerate,
        restarts: g.restarts,
    })?;
    Ok(TripleLayerModel {
        kpi: doc.kpi,
        config: doc.config,
        config_fingerprint: doc.config_fingerprint,
        created: doc.created,
        station: doc.station,
        norm: doc.norm_stats,
        stw: doc.stw_terms,
        ebt: BaggedEnsemble {
            config: doc.ebt_nodes.config,
            trees,
            in_bag: Vec::new(),
            oob_rmse: doc.ebt_nodes.oob_rmse,
        },
        gpr,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ContainerError + '_ {
    move |source| ContainerError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes the container next to `path` and renames it into place.
pub fn save_model(m: &TripleLayerModel, path: &Path) -> Result<(), ContainerError> {
    let bytes = encode_model(m);
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().to_string()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(path)(e)
    })
}

pub fn load_model(path: &Path) -> Result<TripleLayerModel, ContainerError> {
    decode_model(&fs::read(path).map_err(io_err(path))?)
}
