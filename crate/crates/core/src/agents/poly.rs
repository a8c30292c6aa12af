use serde::{Deserialize, Serialize};

/// Monomial `c · Π v_k^{e_k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub c: f64,
    pub e: Vec<u32>,
}

impl Term {
    pub fn new(c: f64, e: Vec<u32>) -> Self {
        Term { c, e }
    }
}

/// Sum of monomials over a fixed list of variables.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    pub terms: Vec<Term>,
}

impl Polynomial {
    pub fn new(terms: Vec<Term>) -> Self {
        Polynomial { terms }
    }

    pub fn constant(c: f64, nvars: usize) -> Self {
        Polynomial::new(vec![Term::new(c, vec![0; nvars])])
    }

    pub fn check_arity(&self, nvars: usize) -> Result<(), String> {
        for t in &self.terms {
            if t.e.len() != nvars {
                return Err(format!(
                    "term has {} exponents, expected {nvars}",
                    t.e.len()
                ));
            }
            if !t.c.is_finite() {
                return Err("non-finite coefficient".into());
            }
        }
        Ok(())
    }

    pub fn eval(&self, vars: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.e.iter()
                    .zip(vars)
                    .fold(t.c, |acc, (&e, &v)| acc * v.powi(e as i32))
            })
            .sum()
    }

    /// Evaluates over the concatenation `(a, b)` without allocating.
    pub fn eval_split(&self, a: &[f64], b: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.e.iter()
                    .zip(a.iter().chain(b))
                    .fold(t.c, |acc, (&e, &v)| acc * v.powi(e as i32))
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_monomials() {
        let p = Polynomial::new(vec![
            Term::new(2.0, vec![1, 2]),
            Term::new(-1.0, vec![0, 0]),
        ]);
        assert_eq!(p.eval(&[3.0, 2.0]), 2.0 * 3.0 * 4.0 - 1.0);
        assert_eq!(p.eval_split(&[3.0], &[2.0]), 23.0);
    }

    #[test]
    fn json_shape() {
        let p: Polynomial = serde_json::from_str(r#"[{"c": 1.5, "e": [0, 3]}]"#).unwrap();
        assert_eq!(p.terms[0], Term::new(1.5, vec![0, 3]));
    }
}
