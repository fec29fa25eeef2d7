//! Regressor checkpoints: a JSON header with the training setup plus
//! named layers, each a shape and its row-major values.

use std::path::Path;

use offnadir_core::foa::{FusionStrategy, RotationAngleSet};
use offnadir_core::learning::RegressorParams;
use offnadir_core::toy::ToyConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::write_text;

pub const FORMAT: &str = "offnadir-regressor";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub seed: u64,
    pub angles_rad: Vec<f64>,
    /// Informational; loading reads `angles_rad`.
    pub angles_deg: Vec<f64>,
    pub fusion: String,
    pub steps: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub beta: f64,
    pub hidden_dim: usize,
    pub channels: usize,
    pub map_size: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub proposal_size: f64,
    pub rho_range: [f64; 2],
    pub sector: f64,
}

impl Header {
    pub fn new(c: &ToyConfig) -> Self {
        Self {
            seed: c.seed,
            angles_rad: c.angles.angles().to_vec(),
            angles_deg: c.angles.angles().iter().map(|a| a.to_degrees()).collect(),
            fusion: c.fusion.as_str().to_string(),
            steps: c.steps,
            learning_rate: c.learning_rate,
            momentum: c.momentum,
            weight_decay: c.weight_decay,
            beta: c.beta,
            hidden_dim: c.hidden_dim,
            channels: c.channels,
            map_size: c.map_size,
            train_size: c.train_size,
            test_size: c.test_size,
            proposal_size: c.proposal_size,
            rho_range: [c.rho_range.0, c.rho_range.1],
            sector: c.sector,
        }
    }

    pub fn config(&self) -> std::result::Result<ToyConfig, String> {
        let fusion = FusionStrategy::parse(&self.fusion).ok_or_else(|| format!("unknown fusion {:?}", self.fusion))?;
        let angles = RotationAngleSet::new(self.angles_rad.clone()).map_err(|e| e.to_string())?;
        Ok(ToyConfig {
            angles,
            fusion,
            steps: self.steps,
            seed: self.seed,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            beta: self.beta,
            hidden_dim: self.hidden_dim,
            channels: self.channels,
            map_size: self.map_size,
            train_size: self.train_size,
            test_size: self.test_size,
            proposal_size: self.proposal_size,
            rho_range: (self.rho_range[0], self.rho_range[1]),
            sector: self.sector,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layer {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct File {
    format: String,
    version: u32,
    header: Header,
    layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: Header,
    pub params: RegressorParams,
}

impl Checkpoint {
    pub fn new(config: &ToyConfig, params: RegressorParams) -> Self {
        Self {
            header: Header::new(config),
            params,
        }
    }

    pub fn to_json(&self) -> String {
        let (h, i) = (self.params.hidden_dim(), self.params.input_dim());
        let layer = |name: &str, shape: Vec<usize>, values: &[f64]| Layer {
            name: name.to_string(),
            shape,
            values: values.to_vec(),
        };
        let file = File {
            format: FORMAT.to_string(),
            version: VERSION,
            header: self.header.clone(),
            layers: vec![
                layer("w1", vec![h, i], &self.params.w1),
                layer("b1", vec![h], &self.params.b1),
                layer("w2", vec![2, h], &self.params.w2),
                layer("b2", vec![2], &self.params.b2),
            ],
        };
        let mut s = serde_json::to_string_pretty(&file).expect("plain data always serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let bad = |message: String| Error::Schema {
            path: path.to_path_buf(),
            message,
        };
        let file: File = serde_json::from_str(text).map_err(|e| Error::parse(path, e))?;
        if file.format != FORMAT || file.version != VERSION {
            return Err(bad(format!("unsupported checkpoint {} v{}", file.format, file.version)));
        }
        let names: Vec<&str> = file.layers.iter().map(|l| l.name.as_str()).collect();
        let [w1, b1, w2, b2] = file.layers.as_slice() else {
            return Err(bad(format!("expected layers w1, b1, w2, b2, found {names:?}")));
        };
        if names != ["w1", "b1", "w2", "b2"] {
            return Err(bad(format!("expected layers w1, b1, w2, b2, found {names:?}")));
        }
        let (h, i) = match w1.shape.as_slice() {
            &[h, i] => (h, i),
            s => return Err(bad(format!("w1 must be 2-D, found shape {s:?}"))),
        };
        for l in [w1, b1, w2, b2] {
            if l.shape.iter().product::<usize>() != l.values.len() {
                return Err(bad(format!("{}: shape {:?} does not match {} values", l.name, l.shape, l.values.len())));
            }
        }
        if b1.shape != [h] || w2.shape != [2, h] || b2.shape != [2] {
            return Err(bad(format!("layer shapes inconsistent with hidden size {h}")));
        }
        if i != file.header.channels * file.header.map_size * file.header.map_size || h != file.header.hidden_dim {
            return Err(bad("layer shapes disagree with the header".to_string()));
        }
        let params = RegressorParams::from_parts(i, h, w1.values.clone(), b1.values.clone(), w2.values.clone(), [b2.values[0], b2.values[1]])
            .map_err(|source| Error::Content {
                path: path.to_path_buf(),
                source,
            })?;
        file.header.config().map_err(bad)?;
        Ok(Self {
            header: file.header,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}
