//! Exponent bookkeeping of the Moser iteration, generic over the scalar so
//! the recursions can be checked exactly in rational arithmetic.

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, ToPrimitive};
use serde::Serialize;

use crate::error::{invalid, Result};

pub trait LadderScalar: Num + Clone + PartialOrd + Debug + Display {}

impl<T: Num + Clone + PartialOrd + Debug + Display> LadderScalar for T {}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoserLadder<T> {
    pub n: T,
    pub s: T,
    pub p: T,
    pub xi0: T,
    /// `n / (n - sp)`.
    pub kappa_star: T,
    /// `kappa* / (kappa* - 1)`.
    pub g: T,
    /// `1 + 1/G = (n + sp) / n`.
    pub gamma: T,
    /// `(n + sp)^2 / sp`.
    pub alpha: T,
    /// `(n + sp)(n + sp + sn) / sp`.
    pub alpha_final: T,
    /// `xi_j`, starting at `xi0`.
    pub xi: Vec<T>,
    /// `p_j = p - 1 + xi_j`.
    pub p_j: Vec<T>,
    /// `kappa(xi_j) = 1 + (1 + xi_j) / (G (p - 1 + xi_j))`.
    pub kappa: Vec<T>,
}

fn two<T: LadderScalar>() -> T {
    T::one() + T::one()
}

pub fn moser_ladder<T: LadderScalar>(n: T, s: T, p: T, xi0: T, steps: usize) -> Result<MoserLadder<T>> {
    let (zero, one) = (T::zero(), T::one());
    if !(n >= one) {
        return Err(invalid("n", "dimension must be at least 1"));
    }
    if !(s > zero && s < one) {
        return Err(invalid("s", "must lie in (0, 1)"));
    }
    if !(p >= two()) {
        return Err(invalid("p", "must be >= 2"));
    }
    if !(xi0 >= one) {
        return Err(invalid("xi0", "must be >= 1"));
    }
    let sp = s.clone() * p.clone();
    if !(sp < n) {
        return Err(invalid("s", format!("ladder needs sp < n, got s = {s}, p = {p}, n = {n}")));
    }
    let kappa_star = n.clone() / (n.clone() - sp.clone());
    let g = kappa_star.clone() / (kappa_star.clone() - one.clone());
    let gamma = one.clone() + one.clone() / g.clone();
    let nsp = n.clone() + sp.clone();
    let alpha = nsp.clone() * nsp.clone() / sp.clone();
    let alpha_final = nsp.clone() * (nsp.clone() + s.clone() * n.clone()) / sp.clone();

    let mut xi = vec![xi0.clone()];
    for j in 0..steps {
        let next = gamma.clone() * (xi[j].clone() + one.clone()) - one.clone();
        xi.push(next);
    }
    let pm1 = p.clone() - one.clone();
    let p_j = xi.iter().map(|x| pm1.clone() + x.clone()).collect();
    let kappa = xi
        .iter()
        .map(|x| one.clone() + (one.clone() + x.clone()) / (g.clone() * (pm1.clone() + x.clone())))
        .collect();
    Ok(MoserLadder {
        n,
        s,
        p,
        xi0,
        kappa_star,
        g,
        gamma,
        alpha,
        alpha_final,
        xi,
        p_j,
        kappa,
    })
}

impl<T: LadderScalar> MoserLadder<T> {
    /// `xi_{j+1} = gamma (xi_j + 1) - 1`, `p - 1 + sp/n + gamma xi_j = p_{j+1}`
    /// and `xi_j = gamma^j (xi0 + 1) - 1`, compared with `==`.
    pub fn identities_hold(&self) -> bool {
        let one = T::one();
        let sp_n = self.s.clone() * self.p.clone() / self.n.clone();
        let mut gpow = one.clone();
        for j in 0..self.xi.len() {
            if self.xi[j] != gpow.clone() * (self.xi0.clone() + one.clone()) - one.clone() {
                return false;
            }
            if j + 1 < self.xi.len() {
                let step = self.gamma.clone() * (self.xi[j].clone() + one.clone()) - one.clone();
                let pj = self.p.clone() - one.clone() + sp_n.clone() + self.gamma.clone() * self.xi[j].clone();
                if self.xi[j + 1] != step || self.p_j[j + 1] != pj {
                    return false;
                }
            }
            gpow = gpow * self.gamma.clone();
        }
        self.gamma == one.clone() + one / self.g.clone()
    }

    /// `1 < kappa(xi_j) < kappa*` for every rung.
    pub fn kappa_in_range(&self) -> bool {
        self.kappa
            .iter()
            .all(|k| *k > T::one() && *k < self.kappa_star)
    }
}

fn ratio_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

impl MoserLadder<BigRational> {
    pub fn to_f64(&self) -> MoserLadder<f64> {
        let f = ratio_to_f64;
        let v = |xs: &[BigRational]| xs.iter().map(f).collect();
        MoserLadder {
            n: f(&self.n),
            s: f(&self.s),
            p: f(&self.p),
            xi0: f(&self.xi0),
            kappa_star: f(&self.kappa_star),
            g: f(&self.g),
            gamma: f(&self.gamma),
            alpha: f(&self.alpha),
            alpha_final: f(&self.alpha_final),
            xi: v(&self.xi),
            p_j: v(&self.p_j),
            kappa: v(&self.kappa),
        }
    }
}

/// Exact rational from a finite float.
pub fn rational(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| invalid("value", format!("{x} is not finite")))
}

/// Ladder computed exactly from the binary values of the inputs, together
/// with the outcome of the exact identity checks.
pub fn moser_ladder_exact(n: usize, s: f64, p: f64, xi0: f64, steps: usize) -> Result<(MoserLadder<f64>, bool)> {
    let lad = moser_ladder(
        BigRational::from_integer(BigInt::from(n)),
        rational(s)?,
        rational(p)?,
        rational(xi0)?,
        steps,
    )?;
    let ok = lad.identities_hold() && lad.kappa_in_range();
    Ok((lad.to_f64(), ok))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(BigInt::from(a), BigInt::from(b))
    }

    #[test]
    fn spot_values() {
        let lad = moser_ladder(q(2, 1), q(1, 2), q(2, 1), q(2, 1), 3).unwrap();
        assert_eq!(lad.kappa_star, q(2, 1));
        assert_eq!(lad.g, q(2, 1));
        assert_eq!(lad.gamma, q(3, 2));
        assert_eq!(lad.alpha, q(9, 1));
        assert_eq!(lad.xi[1], q(7, 2));
        assert_eq!(lad.xi[2], q(23, 4));
        assert!(lad.identities_hold());
        assert!(lad.kappa_in_range());
        let f = lad.to_f64();
        assert_eq!((f.gamma, f.alpha, f.xi[2]), (1.5, 9.0, 5.75));
    }

    #[test]
    fn borderline_and_invalid() {
        assert!(moser_ladder(q(1, 1), q(1, 2), q(2, 1), q(2, 1), 2).is_err());
        assert!(moser_ladder(q(2, 1), q(1, 2), q(3, 2), q(2, 1), 2).is_err());
        assert!(moser_ladder(q(2, 1), q(1, 2), q(2, 1), q(1, 2), 2).is_err());
        assert!(moser_ladder_exact(1, 0.5, 2.0, 2.0, 2).is_err());
    }

    #[test]
    fn float_ladder_matches_formulas() {
        let (lad, ok) = moser_ladder_exact(1, 0.3, 3.0, 1.5, 4).unwrap();
        assert!(ok);
        assert!((lad.gamma - 1.9).abs() < 1e-15);
        assert!((lad.alpha_final - 1.9 * (1.9 + 0.3) / 0.9).abs() < 1e-14);
    }
}
