//! Domain types shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, RsmError};

/// Binary condition label. `Case` means the condition is present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Control,
    Case,
}

impl Label {
    pub fn from_bit(bit: u8) -> Option<Label> {
        match bit {
            0 => Some(Label::Control),
            1 => Some(Label::Case),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Label::Control => 0,
            Label::Case => 1,
        }
    }

    pub fn is_case(self) -> bool {
        self == Label::Case
    }
}

/// One subject: a measurement vector plus its condition label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub measurements: Vec<f64>,
    pub label: Label,
}

impl Sample {
    pub fn new(measurements: Vec<f64>, label: Label) -> Result<Self> {
        if measurements.is_empty() {
            return Err(RsmError::Data("sample has no measurements".into()));
        }
        if let Some(j) = measurements.iter().position(|v| !v.is_finite()) {
            return Err(RsmError::Data(format!("measurement {j} is not finite")));
        }
        Ok(Sample {
            measurements,
            label,
        })
    }

    pub fn dim(&self) -> usize {
        self.measurements.len()
    }
}

/// An ordered collection of samples sharing one measurement dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    dim: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let dim = samples
            .first()
            .map(Sample::dim)
            .ok_or_else(|| RsmError::Data("dataset is empty".into()))?;
        for s in &samples {
            check_dim(dim, s.dim())?;
        }
        Ok(Dataset { samples, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &Sample {
        &self.samples[i]
    }

    pub fn label(&self, i: usize) -> Label {
        self.samples[i].label
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.samples.len()).collect()
    }

    /// Indices (within `subset`) split by label, in subset order.
    pub fn split_by_label(&self, subset: &[usize]) -> (Vec<usize>, Vec<usize>) {
        subset
            .iter()
            .partition(|&&i| self.samples[i].label == Label::Control)
    }

    pub fn count_cases(&self, subset: &[usize]) -> usize {
        subset
            .iter()
            .filter(|&&i| self.samples[i].label.is_case())
            .count()
    }

    /// Copies the samples at `indices` into a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(indices.iter().map(|&i| self.samples[i].clone()).collect())
    }

    pub(crate) fn require_both_classes(&self, subset: &[usize]) -> Result<()> {
        let cases = self.count_cases(subset);
        if cases == 0 || cases == subset.len() {
            return Err(RsmError::Training(format!(
                "training set of {} samples contains a single class",
                subset.len()
            )));
        }
        Ok(())
    }
}

/// Which stage of the pipeline produced an effect map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapRole {
    Raw,
    BootstrapMean,
    Reconstructed,
}

/// A real-valued map with one value per measurement site.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectMap {
    pub values: Vec<f64>,
    pub role: MapRole,
}

impl EffectMap {
    pub fn new(values: Vec<f64>, role: MapRole) -> Self {
        EffectMap { values, role }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-site detection flags obtained by thresholding an [`EffectMap`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryEffectMap {
    pub detections: Vec<bool>,
}

impl BinaryEffectMap {
    pub fn new(detections: Vec<bool>) -> Self {
        BinaryEffectMap { detections }
    }

    pub fn zeros(d: usize) -> Self {
        BinaryEffectMap {
            detections: vec![false; d],
        }
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn count(&self) -> usize {
        self.detections.iter().filter(|&&q| q).count()
    }
}
