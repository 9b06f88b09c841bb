//! Individuals and populations.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One entity's observations: raw data `x`, an optional point estimate and
/// an optional exogenous covariate vector `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualRecord {
    pub id: String,
    pub x: Vec<f64>,
    pub theta_hat: Option<f64>,
    pub z: Option<Vec<f64>>,
}

impl IndividualRecord {
    pub fn new(id: impl Into<String>) -> Self {
        IndividualRecord { id: id.into(), x: Vec::new(), theta_hat: None, z: None }
    }

    pub fn with_x(mut self, x: Vec<f64>) -> Self {
        self.x = x;
        self
    }

    pub fn with_theta_hat(mut self, theta_hat: f64) -> Self {
        self.theta_hat = Some(theta_hat);
        self
    }

    pub fn with_z(mut self, z: Vec<f64>) -> Self {
        self.z = Some(z);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    records: Vec<IndividualRecord>,
    z_dim: Option<usize>,
    pub meta: String,
    index: HashMap<String, usize>,
}

impl Population {
    pub fn new(records: Vec<IndividualRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        let mut z_dim = None;
        for (i, r) in records.iter().enumerate() {
            if r.x.is_empty() && r.theta_hat.is_none() && r.z.is_none() {
                return Err(Error::InvalidInput(format!("record {} carries no data", r.id)));
            }
            if index.insert(r.id.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate id {}", r.id)));
            }
            if let Some(z) = &r.z {
                match z_dim {
                    None => z_dim = Some(z.len()),
                    Some(d) if d != z.len() => {
                        return Err(Error::InvalidInput(format!(
                            "record {} has {}-dimensional z, expected {d}",
                            r.id,
                            z.len()
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(Population { records, z_dim, meta: String::new(), index })
    }

    pub fn with_meta(mut self, meta: impl Into<String>) -> Self {
        self.meta = meta.into();
        self
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[IndividualRecord] {
        &self.records
    }

    pub fn record(&self, i: usize) -> &IndividualRecord {
        &self.records[i]
    }

    pub fn z_dim(&self) -> Option<usize> {
        self.z_dim
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("unknown id {id}")))
    }

    /// Point estimates of every record, failing on the first record without one.
    pub fn theta_hats(&self) -> Result<Vec<f64>> {
        self.records
            .iter()
            .map(|r| {
                r.theta_hat.ok_or_else(|| {
                    Error::SchemeMismatch(format!("record {} has no point estimate", r.id))
                })
            })
            .collect()
    }

    /// Covariate vectors of every record, failing on the first record without one.
    pub fn zs(&self) -> Result<Vec<&[f64]>> {
        self.records
            .iter()
            .map(|r| {
                r.z.as_deref().ok_or_else(|| {
                    Error::SchemeMismatch(format!("record {} has no exogenous covariates", r.id))
                })
            })
            .collect()
    }

    pub fn all_have_z(&self) -> bool {
        self.records.iter().all(|r| r.z.is_some())
    }
}
