use std::collections::HashMap;
use std::hash::Hash;

use serde::Serialize;

use super::EvalError;

/// Two-rater chance-corrected agreement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaResult {
    /// Observed agreement.
    pub p_o: f64,
    /// Chance agreement from the two raters' marginals.
    pub p_e: f64,
    pub kappa: f64,
    pub n: usize,
    /// Both raters used one identical label throughout (`p_e = 1`); kappa is
    /// reported as 1 by convention.
    pub degenerate: bool,
}

/// `pairs[i]` holds the two raters' labels for item `i`.
pub fn cohen_kappa<L: Eq + Hash>(pairs: &[(L, L)]) -> Result<KappaResult, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = pairs.len() as f64;
    let mut a: HashMap<&L, usize> = HashMap::new();
    let mut b: HashMap<&L, usize> = HashMap::new();
    let mut agree = 0usize;
    for (x, y) in pairs {
        *a.entry(x).or_insert(0) += 1;
        *b.entry(y).or_insert(0) += 1;
        agree += usize::from(x == y);
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = a
        .iter()
        .map(|(label, &ca)| ca as f64 * b.get(label).copied().unwrap_or(0) as f64)
        .sum::<f64>()
        / (n * n);
    let degenerate = a.len() == 1 && b.len() == 1 && a.keys().next() == b.keys().next();
    let kappa = if degenerate { 1.0 } else { (p_o - p_e) / (1.0 - p_e) };
    Ok(KappaResult {
        p_o,
        p_e,
        kappa,
        n: pairs.len(),
        degenerate,
    })
}
