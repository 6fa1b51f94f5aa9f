use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::block::{HermitianBlock, SystemLabel};
use crate::error::{Error, Result};

/// On-disk form of a labeled matrix: system list plus separate real and
/// imaginary parts, row-major. Finite `f64` values survive a round trip
/// bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixJson {
    pub systems: Vec<SystemLabel>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_block(block: &HermitianBlock) -> Self {
        let n = block.dim();
        let mut re = vec![vec![0.0; n]; n];
        let mut im = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let z = block.mat[(i, j)];
                re[i][j] = z.re;
                im[i][j] = z.im;
            }
        }
        MatrixJson {
            systems: block.systems.clone(),
            re,
            im,
        }
    }

    pub fn to_block(&self) -> Result<HermitianBlock> {
        let dim: usize = self.systems.iter().map(|s| s.dim).product();
        let check = |rows: &Vec<Vec<f64>>, part: &str| -> Result<()> {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(Error::shape(format!(
                    "{part} part is not a {dim}x{dim} matrix"
                )));
            }
            for r in rows {
                for &x in r {
                    if !x.is_finite() {
                        return Err(Error::shape(format!("{part} part contains non-finite value")));
                    }
                }
            }
            Ok(())
        };
        check(&self.re, "real")?;
        check(&self.im, "imaginary")?;
        let mat = DMatrix::from_fn(dim, dim, |i, j| Complex64::new(self.re[i][j], self.im[i][j]));
        HermitianBlock::new(self.systems.clone(), mat)
    }
}

impl Serialize for HermitianBlock {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson::from_block(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for HermitianBlock {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let mj = MatrixJson::deserialize(d)?;
        mj.to_block().map_err(serde::de::Error::custom)
    }
}

impl HermitianBlock {
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MatrixJson::from_block(self))?)
    }

    pub fn from_json_str(s: &str) -> Result<HermitianBlock> {
        let mj: MatrixJson = serde_json::from_str(s)?;
        mj.to_block()
    }
}
