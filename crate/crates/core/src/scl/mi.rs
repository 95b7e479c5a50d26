//! Mutual information between two binary variables.

use crate::error::{Error, Result};

/// MI in bits of the empirical joint given by a 2×2 contingency table.
///
/// `n11` counts X=1,Y=1; `n10` X=1,Y=0; `n01` X=0,Y=1; `n00` X=0,Y=0.
pub fn mutual_information(n11: u64, n10: u64, n01: u64, n00: u64) -> Result<f64> {
    let n = n11 as u128 + n10 as u128 + n01 as u128 + n00 as u128;
    if n == 0 {
        return Err(Error::validation(
            "mutual information of an empty contingency table",
        ));
    }
    let x1 = n11 as u128 + n10 as u128;
    let x0 = n01 as u128 + n00 as u128;
    let y1 = n11 as u128 + n01 as u128;
    let y0 = n10 as u128 + n00 as u128;
    let cells = [(n11, x1, y1), (n10, x1, y0), (n01, x0, y1), (n00, x0, y0)];
    let nf = n as f64;
    let mi: f64 = cells
        .iter()
        .filter(|(c, _, _)| *c > 0)
        .map(|&(c, x, y)| {
            // exact integer products keep independent tables at exactly 0
            let ratio = (c as u128 * n) as f64 / (x * y) as f64;
            c as f64 / nf * ratio.log2()
        })
        .sum();
    Ok(mi.max(0.0))
}
