use std::ops::Deref;

use crate::error::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-9;

/// Traffic split across models: a point on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingFractions(Vec<f64>);

impl RoutingFractions {
    /// Validates `w ≥ 0` and `Σw = 1` within 1e-9.
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::validation("routing fractions are empty"));
        }
        if let Some(x) = w.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
            return Err(Error::validation(format!("routing fraction {x} is negative or not finite")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::validation(format!("routing fractions sum to {sum}, expected 1")));
        }
        Ok(Self(w))
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for RoutingFractions {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
/// The result is renormalized so its entries sum to one.
pub fn project_simplex(v: &[f64]) -> Result<RoutingFractions> {
    if v.is_empty() {
        return Err(Error::validation("cannot project an empty vector"));
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::validation(format!("cannot project non-finite entry {x}")));
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    let sum: f64 = w.iter().sum();
    if sum > 0.0 {
        for x in &mut w {
            *x /= sum;
        }
    } else {
        // Only reachable through rounding when all mass is on a tie.
        let top = v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0))).map_or(0, |p| p.0);
        w[top] = 1.0;
    }
    Ok(RoutingFractions(w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(project_simplex(&[0.2, 0.8]).unwrap().as_slice(), &[0.2, 0.8]);
        assert_eq!(project_simplex(&[1.0, 1.0]).unwrap().as_slice(), &[0.5, 0.5]);
        assert_eq!(project_simplex(&[2.0, -1.0]).unwrap().as_slice(), &[1.0, 0.0]);
        assert_eq!(project_simplex(&[-3.0]).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(project_simplex(&[f64::NAN, 1.0]).is_err());
        assert!(project_simplex(&[f64::INFINITY, 1.0]).is_err());
        assert!(project_simplex(&[]).is_err());
    }

    #[test]
    fn fraction_validation() {
        assert!(RoutingFractions::new(vec![0.5, 0.5]).is_ok());
        assert!(RoutingFractions::new(vec![0.6, 0.5]).is_err());
        assert!(RoutingFractions::new(vec![1.5, -0.5]).is_err());
    }
}
