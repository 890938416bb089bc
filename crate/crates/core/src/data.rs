//! Closed-form scalar functions of `(x, t)` used for initial and exterior
//! data, written as `+`-separated terms:
//!
//! ```text
//! zero
//! const(c)
//! bump(amp, x0, radius)          amp * max(0, 1 - |x - c|^2 / radius^2)^2
//! bump(amp, x0, y0, radius)
//! power(c, e)                    c * |x|^e
//! wave(amp, k, omega)            amp * sin(k (x + y) + omega t)
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::{distance, Point};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Term {
    Const(f64),
    Bump { amp: f64, center: Point, radius: f64, planar: bool },
    Power { coef: f64, exp: f64 },
    Wave { amp: f64, k: f64, omega: f64 },
}

impl Term {
    fn eval(&self, x: &Point, t: f64) -> f64 {
        match *self {
            Term::Const(c) => c,
            Term::Bump { amp, center, radius, .. } => {
                let q = 1.0 - (distance(x, &center) / radius).powi(2);
                if q > 0.0 {
                    amp * q * q
                } else {
                    0.0
                }
            }
            Term::Power { coef, exp } => coef * distance(x, &[0.0, 0.0]).powf(exp),
            Term::Wave { amp, k, omega } => amp * (k * (x[0] + x[1]) + omega * t).sin(),
        }
    }

    fn is_time_dependent(&self) -> bool {
        matches!(self, Term::Wave { omega, .. } if *omega != 0.0)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Term::Const(c) => write!(f, "const({c})"),
            Term::Bump { amp, center, radius, planar: false } => {
                write!(f, "bump({amp}, {}, {radius})", center[0])
            }
            Term::Bump { amp, center, radius, planar: true } => {
                write!(f, "bump({amp}, {}, {}, {radius})", center[0], center[1])
            }
            Term::Power { coef, exp } => write!(f, "power({coef}, {exp})"),
            Term::Wave { amp, k, omega } => write!(f, "wave({amp}, {k}, {omega})"),
        }
    }
}

/// Sum of [`Term`]s; the empty sum is `zero`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScalarFn {
    terms: Vec<Term>,
}

impl ScalarFn {
    pub fn zero() -> Self {
        ScalarFn::default()
    }

    pub fn constant(c: f64) -> Self {
        ScalarFn { terms: vec![Term::Const(c)] }
    }

    pub fn from_terms(terms: Vec<Term>) -> Self {
        ScalarFn { terms }
    }

    pub fn bump(amp: f64, center: Point, radius: f64) -> Self {
        ScalarFn {
            terms: vec![Term::Bump { amp, center, radius, planar: center[1] != 0.0 }],
        }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn plus(mut self, other: ScalarFn) -> Self {
        self.terms.extend(other.terms);
        self
    }

    pub fn eval(&self, x: &Point, t: f64) -> f64 {
        self.terms.iter().map(|term| term.eval(x, t)).sum()
    }

    pub fn is_time_dependent(&self) -> bool {
        self.terms.iter().any(Term::is_time_dependent)
    }
}

impl fmt::Display for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("zero");
        }
        for (k, term) in self.terms.iter().enumerate() {
            if k > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{term}")?;
        }
        Ok(())
    }
}

fn parse_term(src: &str) -> Result<Option<Term>> {
    let src = src.trim();
    if src == "zero" {
        return Ok(None);
    }
    let bad = || Error::Format(format!("cannot parse data term `{src}`"));
    let open = src.find('(').ok_or_else(bad)?;
    if !src.ends_with(')') {
        return Err(bad());
    }
    let name = src[..open].trim();
    let args = src[open + 1..src.len() - 1]
        .split(',')
        .map(|a| a.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<Vec<f64>>>()?;
    if args.iter().any(|a| !a.is_finite()) {
        return Err(bad());
    }
    let term = match (name, args.as_slice()) {
        ("const", &[c]) => Term::Const(c),
        ("bump", &[amp, x0, radius]) if radius > 0.0 => Term::Bump {
            amp,
            center: [x0, 0.0],
            radius,
            planar: false,
        },
        ("bump", &[amp, x0, y0, radius]) if radius > 0.0 => Term::Bump {
            amp,
            center: [x0, y0],
            radius,
            planar: true,
        },
        ("power", &[coef, exp]) if exp >= 0.0 => Term::Power { coef, exp },
        ("wave", &[amp, k, omega]) => Term::Wave { amp, k, omega },
        _ => return Err(bad()),
    };
    Ok(Some(term))
}

impl FromStr for ScalarFn {
    type Err = Error;

    fn from_str(src: &str) -> Result<Self> {
        if src.trim().is_empty() {
            return Err(Error::Format("empty data expression".into()));
        }
        // Split on `+` outside parentheses; a `+` inside a number such as
        // `1e+3` only ever occurs within an argument list.
        let mut terms = Vec::new();
        let mut depth = 0usize;
        let mut start = 0;
        for (k, ch) in src.char_indices() {
            match ch {
                '(' => depth += 1,
                ')' => depth = depth.saturating_sub(1),
                '+' if depth == 0 => {
                    terms.extend(parse_term(&src[start..k])?);
                    start = k + 1;
                }
                _ => {}
            }
        }
        terms.extend(parse_term(&src[start..])?);
        Ok(ScalarFn { terms })
    }
}

impl Serialize for ScalarFn {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ScalarFn {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}
