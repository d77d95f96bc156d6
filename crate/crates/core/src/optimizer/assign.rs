//! 0-1 assignment of scheduled users to RIS capacity slots.
//!
//! Each RIS m is expanded into J capacity columns `m*J .. (m+1)*J`; the
//! column offset inside an RIS doubles as the user's data slot.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum-weight matching of every row to a distinct column (rows <= cols),
/// by the Hungarian method with potentials. Returns the column of each row.
///
/// Rows are inserted in index order and the lowest column wins a tie in the
/// slack scan, so the output is a deterministic function of the input.
pub fn hungarian_max(weights: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = weights.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let m = weights[0].len();
    if let Some(row) = weights.iter().find(|row| row.len() != m) {
        return Err(Error::LengthMismatch { expected: m, got: row.len() });
    }
    if n > m {
        return Err(Error::Capacity { users: n, capacity: m });
    }
    // Minimise -w with 1-based potentials; column 0 is a virtual root.
    let cost = |i: usize, j: usize| -weights[i - 1][j - 1];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    Ok(assign)
}

/// RIS and data slot of every scheduled user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticAssignment {
    pub ris: Vec<usize>,
    pub slot: Vec<usize>,
    /// Sum of the rates of the chosen pairs.
    pub objective: f64,
}

/// Maximises `sum_k rate[k][ris_k]` with at most `slots_per_ris` users per RIS.
pub fn assign_ris_static(rates: &[Vec<f64>], slots_per_ris: usize) -> Result<StaticAssignment> {
    let x = rates.len();
    if x == 0 {
        return Ok(StaticAssignment { ris: vec![], slot: vec![], objective: 0.0 });
    }
    let m = rates[0].len();
    let capacity = m * slots_per_ris;
    if x > capacity {
        return Err(Error::Capacity { users: x, capacity });
    }
    let expanded: Vec<Vec<f64>> = rates
        .iter()
        .map(|row| {
            if row.len() != m {
                return Err(Error::LengthMismatch { expected: m, got: row.len() });
            }
            Ok((0..capacity).map(|col| row[col / slots_per_ris]).collect())
        })
        .collect::<Result<_>>()?;
    let cols = hungarian_max(&expanded)?;
    let ris: Vec<usize> = cols.iter().map(|&c| c / slots_per_ris).collect();
    let slot = cols.iter().map(|&c| c % slots_per_ris).collect();
    let objective = ris.iter().enumerate().map(|(k, &r)| rates[k][r]).sum();
    Ok(StaticAssignment { ris, slot, objective })
}
