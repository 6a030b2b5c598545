use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{layer_prefix, load_checkpoint, DecoderModel, ModelConfig};
use crate::tensor::Scalar;

/// Transfer percentages the method is defined for.
pub const TRANSFER_PERCENTS: [u32; 5] = [10, 20, 30, 40, 50];

/// Which source decoder layers initialize which target layers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferPlan {
    pub source_checkpoint: Option<PathBuf>,
    pub source_layers: usize,
    pub transfer_percent: u32,
    pub mapped_layers: Vec<(usize, usize)>,
}

/// Number of bottom layers moved: `floor(percent * n_layer / 100)`, at
/// least one.
pub fn transferred_layer_count(percent: u32, n_layer: usize) -> usize {
    (percent as usize * n_layer / 100).max(1)
}

fn check_shape(source: &ModelConfig, target: &ModelConfig) -> Result<()> {
    let dims = [
        ("n_head", source.n_head, target.n_head),
        ("d_head", source.d_head, target.d_head),
        ("d_model", source.d_model, target.d_model),
        ("d_inner", source.d_inner, target.d_inner),
    ];
    for (name, s, t) in dims {
        if s != t {
            return Err(Error::Transfer(format!(
                "{name} differs: source {s}, target {t}"
            )));
        }
    }
    Ok(())
}

impl TransferPlan {
    pub fn new(
        source: &ModelConfig,
        target: &ModelConfig,
        percent: u32,
        source_checkpoint: Option<PathBuf>,
    ) -> Result<Self> {
        if !TRANSFER_PERCENTS.contains(&percent) {
            return Err(Error::Transfer(format!(
                "transfer percent must be one of {TRANSFER_PERCENTS:?}, got {percent}"
            )));
        }
        check_shape(source, target)?;
        let n = transferred_layer_count(percent, target.n_layer);
        if n > source.n_layer {
            return Err(Error::Transfer(format!(
                "source has {} layers, {n} needed",
                source.n_layer
            )));
        }
        Ok(Self {
            source_checkpoint,
            source_layers: source.n_layer,
            transfer_percent: percent,
            mapped_layers: (0..n).map(|l| (l, l)).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|_| Error::NotFound {
            what: "transfer plan",
            path: path.to_path_buf(),
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Copies the attention and feed-forward tensors (with their layer norms)
/// of every mapped layer from `source` into `target`. Returns the names of
/// the overwritten tensors.
pub fn transfer_layers<T: Scalar>(
    target: &mut DecoderModel<T>,
    source: &DecoderModel<T>,
    plan: &TransferPlan,
) -> Result<Vec<String>> {
    check_shape(source.config(), target.config())?;
    let mut copied = Vec::new();
    for &(s, t) in &plan.mapped_layers {
        if s >= source.config().n_layer || t >= target.config().n_layer {
            return Err(Error::Transfer(format!("layer mapping {s} -> {t} out of range")));
        }
        let (sp, tp) = (format!("{}.", layer_prefix(s)), format!("{}.", layer_prefix(t)));
        for (name, param) in source.params() {
            let Some(suffix) = name.strip_prefix(&sp) else {
                continue;
            };
            let dest = format!("{tp}{suffix}");
            let slot = target
                .param_mut(&dest)
                .ok_or_else(|| Error::Transfer(format!("target lacks `{dest}`")))?;
            *slot = param.tensor.clone();
            copied.push(dest);
        }
    }
    Ok(copied)
}

/// Loads the source checkpoint named in `plan` and applies it.
pub fn transfer_from_checkpoint(target: &mut DecoderModel, plan: &TransferPlan) -> Result<Vec<String>> {
    let path = plan
        .source_checkpoint
        .as_deref()
        .ok_or_else(|| Error::Transfer("plan names no source checkpoint".into()))?;
    let source = load_checkpoint(path)?;
    transfer_layers(target, &source, plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n_layer: usize) -> ModelConfig {
        ModelConfig {
            n_layer,
            ..ModelConfig::desk_char()
        }
    }

    #[test]
    fn layer_counts() {
        assert_eq!(transferred_layer_count(10, 20), 2);
        assert_eq!(transferred_layer_count(50, 12), 6);
        assert_eq!(transferred_layer_count(10, 2), 1);
    }

    #[test]
    fn percent_outside_space_rejected() {
        let e = TransferPlan::new(&cfg(4), &cfg(4), 60, None).unwrap_err();
        assert!(e.to_string().contains("transfer percent"));
    }

    #[test]
    fn shape_mismatch_names_dimension() {
        let src = ModelConfig {
            d_inner: 48,
            ..cfg(4)
        };
        let e = TransferPlan::new(&src, &cfg(4), 50, None).unwrap_err();
        assert!(e.to_string().contains("d_inner"), "{e}");
    }
}
