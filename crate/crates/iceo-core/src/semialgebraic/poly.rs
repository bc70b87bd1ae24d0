//! Sparse multivariate polynomials over named variables and the text export
//! of a polynomial program (objective, equality and inequality constraints).
//! The format is documented in docs/polynomial-program.md.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};

/// A monomial as sorted (variable index, exponent > 0) pairs; empty = 1.
type Monomial = Vec<(usize, u32)>;

/// Polynomial as a monomial-to-coefficient map. BTreeMap keeps term order
/// deterministic, so rendering is byte-stable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Poly {
    terms: BTreeMap<Monomial, f64>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut poly = Poly::default();
        poly.add_term(Vec::new(), c);
        poly
    }

    pub fn var(index: usize) -> Self {
        let mut poly = Poly::default();
        poly.add_term(vec![(index, 1)], 1.0);
        poly
    }

    /// constant + sum of coeff * variable.
    pub fn linear(constant: f64, coeffs: &[(usize, f64)]) -> Self {
        let mut poly = Poly::constant(constant);
        for &(index, c) in coeffs {
            poly.add_term(vec![(index, 1)], c);
        }
        poly
    }

    fn add_term(&mut self, monomial: Monomial, coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        match self.terms.entry(monomial) {
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += coeff;
                if *e.get() == 0.0 {
                    e.remove();
                }
            }
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(coeff);
            }
        }
    }

    pub fn add_scaled(&mut self, other: &Poly, scale: f64) {
        for (monomial, &coeff) in &other.terms {
            self.add_term(monomial.clone(), scale * coeff);
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::default();
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                out.add_term(merge(ma, mb), ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, exponent: u32) -> Poly {
        let mut out = Poly::constant(1.0);
        for _ in 0..exponent {
            out = out.mul(self);
        }
        out
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(monomial, &coeff)| {
                coeff
                    * monomial
                        .iter()
                        .map(|&(index, exp)| point[index].powi(exp as i32))
                        .product::<f64>()
            })
            .sum()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Highest variable index appearing in any term.
    fn max_index(&self) -> Option<usize> {
        self.terms
            .keys()
            .flat_map(|m| m.iter().map(|&(index, _)| index))
            .max()
    }

    /// Terms joined by " + ", each as coeff or coeff*name^exp factors.
    pub fn render(&self, names: &[String]) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        self.terms
            .iter()
            .map(|(monomial, coeff)| {
                let mut term = format!("{coeff}");
                for &(index, exp) in monomial {
                    term.push('*');
                    term.push_str(&names[index]);
                    if exp > 1 {
                        term.push_str(&format!("^{exp}"));
                    }
                }
                term
            })
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

fn merge(a: &Monomial, b: &Monomial) -> Monomial {
    let mut out: Monomial = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push((a[i].0, a[i].1 + b[j].1));
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Constraint sense: the polynomial equals zero or is nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Eq,
    Ge,
}

/// A polynomial minimization program over declared variables.
#[derive(Debug, Clone)]
pub struct PolyProgram {
    pub variables: Vec<String>,
    pub objective: Poly,
    pub constraints: Vec<(Rel, Poly)>,
}

impl PolyProgram {
    fn validate(&self) -> Result<()> {
        if self.variables.is_empty() {
            return Err(Error::domain("program declares no variables"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in &self.variables {
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(Error::domain(format!("bad variable name {name:?}")));
            }
            if !seen.insert(name) {
                return Err(Error::domain(format!("duplicate variable name {name:?}")));
            }
        }
        let limit = self.variables.len();
        let out_of_range = self
            .objective
            .max_index()
            .into_iter()
            .chain(self.constraints.iter().filter_map(|(_, p)| p.max_index()))
            .any(|index| index >= limit);
        if out_of_range {
            return Err(Error::dim("polynomial references an undeclared variable"));
        }
        Ok(())
    }

    /// Line-oriented text form; identical programs render identical bytes.
    pub fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        self.validate()?;
        writeln!(out, "polyprog 1")?;
        writeln!(out, "vars {}", self.variables.len())?;
        for name in &self.variables {
            writeln!(out, "{name}")?;
        }
        writeln!(out, "min {}", self.objective.render(&self.variables))?;
        writeln!(out, "subject {}", self.constraints.len())?;
        for (rel, poly) in &self.constraints {
            let tag = match rel {
                Rel::Eq => "eq",
                Rel::Ge => "ge",
            };
            writeln!(out, "{tag} {}", poly.render(&self.variables))?;
        }
        writeln!(out, "end")?;
        Ok(())
    }

    pub fn to_text(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        String::from_utf8(buf).map_err(|_| Error::numeric("non-utf8 program text"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn arithmetic_matches_hand_expansion() {
        // (1 + x)^2 = 1 + 2x + x^2.
        let p = Poly::linear(1.0, &[(0, 1.0)]).pow(2);
        assert_eq!(p.num_terms(), 3);
        assert_eq!(p.render(&names(&["x"])), "1 + 2*x + 1*x^2");
        // (2x + y)(x - 3) = 2x^2 - 6x + xy - 3y.
        let a = Poly::linear(0.0, &[(0, 2.0), (1, 1.0)]);
        let b = Poly::linear(-3.0, &[(0, 1.0)]);
        let prod = a.mul(&b);
        // Monomial keys sort lexicographically by (index, exponent) pairs,
        // so x precedes x*y (prefix), which precedes x^2, which precedes y.
        assert_eq!(prod.render(&names(&["x", "y"])), "-6*x + 1*x*y + 2*x^2 + -3*y");
    }

    #[test]
    fn eval_agrees_with_direct_substitution() {
        let p = Poly::linear(0.5, &[(0, 2.0), (2, -1.0)]).pow(3);
        let point: [f64; 3] = [1.25, 9.0, -0.75];
        let direct = (0.5 + 2.0 * point[0] - point[2]).powi(3);
        assert!((p.eval(&point) - direct).abs() <= 1e-12);
    }

    #[test]
    fn cancellation_drops_terms() {
        let mut p = Poly::var(0);
        p.add_scaled(&Poly::var(0), -1.0);
        assert!(p.is_zero());
        assert_eq!(p.render(&names(&["x"])), "0");
    }

    #[test]
    fn program_text_is_stable_and_validated() {
        let program = PolyProgram {
            variables: names(&["x", "y"]),
            objective: Poly::linear(0.0, &[(0, 1.0), (1, 2.0)]),
            constraints: vec![
                (Rel::Ge, Poly::var(0)),
                (Rel::Eq, Poly::linear(-1.0, &[(0, 1.0), (1, 1.0)])),
            ],
        };
        let text = program.to_text().unwrap();
        assert_eq!(
            text,
            "polyprog 1\nvars 2\nx\ny\nmin 1*x + 2*y\nsubject 2\nge 1*x\neq -1 + 1*x + 1*y\nend\n"
        );
        assert_eq!(text, program.to_text().unwrap());

        let undeclared = PolyProgram {
            variables: names(&["x"]),
            objective: Poly::var(1),
            constraints: vec![],
        };
        assert!(undeclared.to_text().is_err());
        let duplicate = PolyProgram {
            variables: names(&["x", "x"]),
            objective: Poly::zero(),
            constraints: vec![],
        };
        assert!(duplicate.to_text().is_err());
        let spacey = PolyProgram {
            variables: names(&["a b"]),
            objective: Poly::zero(),
            constraints: vec![],
        };
        assert!(spacey.to_text().is_err());
    }
}
