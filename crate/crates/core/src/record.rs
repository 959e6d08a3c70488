//! JSON snapshot records for matrices, payoffs and testers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c64, CMat};
use crate::tester::{Order, PayoffPair, Provenance, Tester, TesterResiduals};

/// Dimensions plus row-major `[re, im]` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<[f64; 2]>,
}

impl From<&CMat> for MatrixRecord {
    fn from(m: &CMat) -> Self {
        let mut entries = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                entries.push([m[(r, c)].re, m[(r, c)].im]);
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), entries }
    }
}

impl TryFrom<&MatrixRecord> for CMat {
    type Error = Error;

    fn try_from(r: &MatrixRecord) -> Result<CMat> {
        if r.entries.len() != r.rows * r.cols {
            return Err(Error::Dimension(format!("{} entries for a {}x{} matrix", r.entries.len(), r.rows, r.cols)));
        }
        Ok(CMat::from_fn(r.rows, r.cols, |i, j| {
            let [re, im] = r.entries[i * r.cols + j];
            c64(re, im)
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffRecord {
    pub provenance: Provenance,
    pub g_plus: MatrixRecord,
    pub g_minus: MatrixRecord,
}

impl From<&PayoffPair> for PayoffRecord {
    fn from(p: &PayoffPair) -> Self {
        Self { provenance: p.provenance, g_plus: (&p.g_plus).into(), g_minus: (&p.g_minus).into() }
    }
}

impl TryFrom<&PayoffRecord> for PayoffPair {
    type Error = Error;

    fn try_from(r: &PayoffRecord) -> Result<Self> {
        Ok(Self { g_plus: (&r.g_plus).try_into()?, g_minus: (&r.g_minus).try_into()?, provenance: r.provenance })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TesterRecord {
    pub order: Order,
    pub w_plus: MatrixRecord,
    pub w_minus: MatrixRecord,
    pub residuals: TesterResiduals,
}

impl From<&Tester> for TesterRecord {
    fn from(t: &Tester) -> Self {
        Self { order: t.order, w_plus: (&t.w_plus).into(), w_minus: (&t.w_minus).into(), residuals: t.residuals }
    }
}

impl TryFrom<&TesterRecord> for Tester {
    type Error = Error;

    /// Residuals are recomputed rather than trusted.
    fn try_from(r: &TesterRecord) -> Result<Self> {
        Tester::new(r.order, (&r.w_plus).try_into()?, (&r.w_minus).try_into()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tester::{assemble_g_ideal, optimal_circuit_ba, tester_from_circuit};

    #[test]
    fn tester_round_trip() {
        let t = tester_from_circuit(&optimal_circuit_ba()).unwrap();
        let json = serde_json::to_string(&TesterRecord::from(&t)).unwrap();
        let back: TesterRecord = serde_json::from_str(&json).unwrap();
        let t2 = Tester::try_from(&back).unwrap();
        assert_eq!(t.w_plus, t2.w_plus);
        assert_eq!(t.order, t2.order);
    }

    #[test]
    fn payoff_round_trip() {
        let g = assemble_g_ideal();
        let json = serde_json::to_string(&PayoffRecord::from(&g)).unwrap();
        assert!(json.contains("\"kind\":\"ideal\""));
        let back: PayoffRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(PayoffPair::try_from(&back).unwrap(), g);
    }

    #[test]
    fn short_entry_list_is_rejected() {
        let r = MatrixRecord { rows: 2, cols: 2, entries: vec![[1.0, 0.0]; 3] };
        assert!(CMat::try_from(&r).is_err());
    }
}
