//! JSON persistence of states and reports.
//!
//! A state file holds the level, the weight blocks and the form `B` in
//! row-major `[re, im]` pairs, together with the model and volume needed to
//! rebuild the section space. Floats round-trip bit-exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{enumerate_sections, LatticePolytope, PolarizedModel, StockModel};
use crate::linalg::CMat;
use crate::scalar::Scalar;
use crate::sections::AlgebraicMetric;
use crate::weights::WeightBlocks;

/// A model given by stock name or by polytope vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelDef {
    Stock(StockModel),
    Polytope { vertices: Vec<Vec<i64>> },
}

impl ModelDef {
    pub fn build(&self) -> Result<PolarizedModel> {
        match self {
            ModelDef::Stock(kind) => Ok(PolarizedModel::stock(*kind)),
            ModelDef::Polytope { vertices } => Ok(PolarizedModel::from_polytope(LatticePolytope::new(vertices.clone())?)),
        }
    }

    pub fn of(model: &PolarizedModel) -> Self {
        match model.stock {
            Some(kind) => ModelDef::Stock(kind),
            None => ModelDef::Polytope { vertices: model.polytope.vertices().to_vec() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub model: ModelDef,
    pub m: usize,
    pub volume: f64,
    pub blocks: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub characters: Option<Vec<Vec<i64>>>,
    #[serde(rename = "B")]
    pub form: Vec<[f64; 2]>,
}

impl StateFile {
    pub fn new<S: Scalar>(model: &PolarizedModel, state: &AlgebraicMetric<S>, blocks: &WeightBlocks) -> Self {
        let form = state.form();
        let k = form.nrows();
        let mut entries = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                let z = form[(i, j)];
                entries.push([z.re.to_f64_lossy(), z.im.to_f64_lossy()]);
            }
        }
        let characters = (0..blocks.count()).map(|b| blocks.character(b).to_vec()).collect();
        Self {
            model: ModelDef::of(model),
            m: state.level(),
            volume: state.volume().to_f64_lossy(),
            blocks: blocks.all_members().to_vec(),
            characters: Some(characters),
            form: entries,
        }
    }

    /// Rebuilds the model, state and blocks.
    pub fn restore<S: Scalar>(&self) -> Result<(PolarizedModel, AlgebraicMetric<S>, WeightBlocks)> {
        let model = self.model.build()?;
        let sections = enumerate_sections(&model, self.m as i64)?;
        let k = sections.len();
        if self.form.len() != k * k {
            return Err(Error::Serialization(format!("expected {} entries in B, found {}", k * k, self.form.len())));
        }
        let form = CMat::<S>::from_fn(k, k, |i, j| {
            let [re, im] = self.form[i * k + j];
            nalgebra::Complex::new(S::lit(re), S::lit(im))
        });
        let blocks = match &self.characters {
            Some(c) => WeightBlocks::with_characters(c.clone(), self.blocks.clone())?,
            None => WeightBlocks::from_members(self.blocks.clone())?,
        };
        if blocks.total() != k {
            return Err(Error::Serialization("blocks do not cover the sections".into()));
        }
        let state = AlgebraicMetric::new(sections, S::lit(self.volume), form)?;
        Ok((model, state, blocks))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// Serializes any report to pretty JSON.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Serialization(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{decompose, SubtorusAction};

    #[test]
    fn round_trip_is_bit_exact() {
        let model = PolarizedModel::product_of_lines();
        let state = AlgebraicMetric::<f64>::fubini_study(&model, 2).unwrap().perturbed(0.3, 11, false, None).unwrap();
        let blocks = decompose(state.sections(), &SubtorusAction::new(2, vec![vec![0, 1]]).unwrap());
        let file = StateFile::new(&model, &state, &blocks);
        let back = StateFile::from_json(&file.to_json().unwrap()).unwrap();
        assert_eq!(back, file);
        let (_, restored, b2) = back.restore::<f64>().unwrap();
        assert_eq!(b2, blocks);
        for (a, b) in restored.form().iter().zip(state.form().iter()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn polytope_models_round_trip() {
        let def: ModelDef = serde_json::from_str(r#"{"vertices": [[0, 0], [2, 0], [0, 1]]}"#).unwrap();
        let model = def.build().unwrap();
        assert_eq!(ModelDef::of(&model), def);
        let stock: ModelDef = serde_json::from_str(r#""P1""#).unwrap();
        assert_eq!(stock, ModelDef::Stock(StockModel::ProjectiveLine));
    }
}
