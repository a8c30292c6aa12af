//! The five-agent benchmark network.
//!
//! Agents 1, 2, 4 and 5 are third-order chains with a scalar internal state,
//! `ẋ₁ = −a·x₁ − x₁^p + x₂, ẋ₂ = x₃, ẋ₃ = u, y = x₂`, so that `ξ = (x₂, x₃)`
//! and `η = x₁`. Agent 3 has relative degree three and no internal dynamics
//! but is not in normal form; it is simulated in its own coordinates.

use std::sync::Arc;

use super::{AgentError, NormalFormAgent, PhysicalCoordinates};

const CHAINS: [(&str, f64, i32); 4] = [
    ("agent1", 1.0, 5),
    ("agent2", 1.0, 3),
    ("agent4", 4.0, 3),
    ("agent5", 2.0, 5),
];

pub fn builtin_names() -> [&'static str; 5] {
    ["agent1", "agent2", "agent3", "agent4", "agent5"]
}

pub fn builtin(name: &str) -> Result<NormalFormAgent, AgentError> {
    if name == "agent3" {
        return NormalFormAgent::from_physical(
            3,
            0,
            Arc::new(ThirdOrderAgent),
            vec![0.0; 3],
            vec![],
        )
        .map(|a| a.with_id(3).with_name(name));
    }
    let (_, a, p) = CHAINS
        .iter()
        .find(|(n, _, _)| *n == name)
        .ok_or_else(|| AgentError::UnknownName(name.to_string()))?;
    let id = name[5..].parse().unwrap_or(0);
    Ok(SecondChainAgent { a: *a, p: *p }
        .into_agent()
        .with_id(id)
        .with_name(name))
}

/// `η̇ = −a·η − η^p + ξ₁`, `α ≡ 0`, `β ≡ 1`, `r = 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondChainAgent {
    pub a: f64,
    pub p: i32,
}

impl SecondChainAgent {
    pub fn into_agent(self) -> NormalFormAgent {
        let SecondChainAgent { a, p } = self;
        NormalFormAgent::new(
            2,
            1,
            Arc::new(|_: &[f64], _: &[f64]| 0.0),
            Arc::new(|_: &[f64], _: &[f64]| 1.0),
            Arc::new(move |xi: &[f64], eta: &[f64], out: &mut [f64]| {
                out[0] = -a * eta[0] - eta[0].powi(p) + xi[0];
            }),
            vec![0.0; 2],
            vec![0.0],
        )
        .expect("fixed dimensions")
    }
}

/// `ẋ = (x₁x₂ + x₁x₃ + u, x₂² + x₃, x₁ + x₂x₃)`, `y = x₂`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ThirdOrderAgent;

impl PhysicalCoordinates for ThirdOrderAgent {
    fn dim(&self) -> usize {
        3
    }

    fn to_normal(&self, x: &[f64], xi: &mut [f64], _eta: &mut [f64]) {
        let (x1, x2, x3) = (x[0], x[1], x[2]);
        xi[0] = x2;
        xi[1] = x2 * x2 + x3;
        xi[2] = 2.0 * x2 * (x2 * x2 + x3) + x1 + x2 * x3;
    }

    fn to_physical(&self, xi: &[f64], _eta: &[f64], x: &mut [f64]) {
        let (z1, z2, z3) = (xi[0], xi[1], xi[2]);
        x[0] = z3 + z1 * z1 * z1 - 3.0 * z1 * z2;
        x[1] = z1;
        x[2] = z2 - z1 * z1;
    }

    fn alpha(&self, x: &[f64]) -> f64 {
        let (x1, x2, x3) = (x[0], x[1], x[2]);
        x1 * (x2 + x3) + (6.0 * x2 * x2 + 3.0 * x3) * (x2 * x2 + x3) + 3.0 * x2 * (x1 + x2 * x3)
    }

    fn beta(&self, _x: &[f64]) -> f64 {
        1.0
    }

    fn vector_field(&self, x: &[f64], u: f64, dx: &mut [f64]) {
        let (x1, x2, x3) = (x[0], x[1], x[2]);
        dx[0] = x1 * x2 + x1 * x3 + u;
        dx[1] = x2 * x2 + x3;
        dx[2] = x1 + x2 * x3;
    }
}
