//! JSON model documents.
//!
//! A document stores the kernel, the training data and (for FITC) the
//! pseudo-inputs. Loading refits from that data, which is deterministic, so
//! a reloaded model predicts exactly what the saved one did.

use std::path::Path;

use gcbf_core::cbf::AnyModel;
use gcbf_core::gp_full::TrainReport;
use gcbf_core::{
    GpModel, Hyperparams, KernelFamily, KernelSpec, Observations, SparseGpModel, Vec3,
};
use serde::{Deserialize, Serialize};

use crate::error::{IoError, Result};
use crate::fsutil::{read_text, write_atomic};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelTag {
    Full,
    Sparse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelDoc {
    pub family: String,
    pub lengthscales: Vec<f64>,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl From<&KernelSpec> for KernelDoc {
    fn from(s: &KernelSpec) -> Self {
        Self {
            family: s.family.name().to_owned(),
            lengthscales: s.params.lengthscales.clone(),
            signal_var: s.params.signal_var,
            noise_var: s.params.noise_var,
        }
    }
}

impl KernelDoc {
    pub fn to_spec(&self) -> Option<KernelSpec> {
        Some(KernelSpec {
            family: KernelFamily::from_name(&self.family)?,
            params: Hyperparams {
                lengthscales: self.lengthscales.clone(),
                signal_var: self.signal_var,
                noise_var: self.noise_var,
            },
        })
    }
}

/// Summary of the hyperparameter search that produced the model. Wall time
/// is left out so that documents stay byte-reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingDoc {
    pub iterations: usize,
    pub evaluations: usize,
    pub initial_lml: f64,
    pub final_lml: f64,
}

impl TrainingDoc {
    pub fn new(r: &TrainReport) -> Self {
        Self {
            iterations: r.iterations,
            evaluations: r.evaluations,
            initial_lml: r.initial_lml,
            final_lml: r.final_lml,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub format_version: u32,
    pub kind: ModelTag,
    pub kernel: KernelDoc,
    pub inputs: Vec<[f64; 3]>,
    pub targets: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo_inputs: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingDoc>,
}

fn arr(v: &[Vec3]) -> Vec<[f64; 3]> {
    v.iter().map(|p| [p.x, p.y, p.z]).collect()
}

fn vecs(v: &[[f64; 3]]) -> Vec<Vec3> {
    v.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect()
}

impl ModelDoc {
    pub fn from_model(model: &AnyModel, training: Option<TrainingDoc>) -> Self {
        let (kind, spec, inputs, targets, pseudo) = match model {
            AnyModel::Full(m) => (ModelTag::Full, m.spec(), m.inputs(), m.targets(), None),
            AnyModel::Sparse(m) => (
                ModelTag::Sparse,
                m.spec(),
                m.inputs(),
                m.targets(),
                Some(arr(m.pseudo_inputs())),
            ),
        };
        Self {
            format_version: FORMAT_VERSION,
            kind,
            kernel: spec.into(),
            inputs: arr(inputs),
            targets: targets.to_vec(),
            pseudo_inputs: pseudo,
            training,
        }
    }

    /// Refits the stored model; a full model without inputs is the prior.
    /// `path` is only used in error messages.
    pub fn to_model(&self, path: &Path) -> Result<AnyModel> {
        if self.format_version != FORMAT_VERSION {
            return Err(IoError::format(
                path,
                format!(
                    "unsupported format_version {} (expected {FORMAT_VERSION})",
                    self.format_version
                ),
            ));
        }
        let spec = self.kernel.to_spec().ok_or_else(|| {
            IoError::format(
                path,
                format!("unknown kernel family `{}`", self.kernel.family),
            )
        })?;
        let x = vecs(&self.inputs);
        let obs = Observations::new(&x, &self.targets)?;
        Ok(match (self.kind, &self.pseudo_inputs) {
            (ModelTag::Full, None) if obs.is_empty() => AnyModel::Full(GpModel::prior(spec)?),
            (ModelTag::Full, None) => AnyModel::Full(GpModel::fit(spec, obs)?),
            (ModelTag::Sparse, Some(z)) => {
                AnyModel::Sparse(SparseGpModel::fit_with_pseudo_inputs(spec, obs, vecs(z))?)
            }
            (ModelTag::Full, Some(_)) => {
                return Err(IoError::format(path, "full model carries pseudo_inputs"))
            }
            (ModelTag::Sparse, None) => {
                return Err(IoError::format(path, "sparse model lacks pseudo_inputs"))
            }
        })
    }
}

pub fn save_model(path: &Path, model: &AnyModel, training: Option<TrainingDoc>) -> Result<()> {
    let doc = ModelDoc::from_model(model, training);
    let mut bytes =
        serde_json::to_vec_pretty(&doc).map_err(|e| IoError::format(path, e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_model_doc(path: &Path) -> Result<ModelDoc> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| IoError::parse(path, e.line(), e.to_string()))
}

pub fn load_model(path: &Path) -> Result<AnyModel> {
    read_model_doc(path)?.to_model(path)
}
