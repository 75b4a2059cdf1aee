//! Gauss-Hermite quadrature (physicists' convention, weight exp(-x^2)).
//!
//! Nodes are found by Newton iteration on the recurrence for orthonormal
//! Hermite polynomials. For a Gaussian with variance eps,
//! E[h(X)] = pi^{-1/2} sum_i w_i h(sqrt(2 eps) x_i).

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    /// Raw weights; they sum to sqrt(pi).
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Weights normalized to a probability measure (sum = 1).
    pub fn normalized_weights(&self) -> Vec<f64> {
        let inv = std::f64::consts::PI.sqrt().recip();
        self.weights.iter().map(|w| w * inv).collect()
    }
}

pub fn gauss_hermite(n: usize) -> Result<GaussHermite> {
    if n == 0 || n > 256 {
        return Err(Error::domain(format!(
            "gauss-hermite node count {n} out of range 1..=256"
        )));
    }
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^{-1/4}
    const EPS: f64 = 3e-14;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= EPS {
                break;
            }
        }
        // The middle root of an odd rule is exactly 0; snap it so symmetric
        // integrands cancel exactly around it.
        if n % 2 == 1 && i == m - 1 {
            z = 0.0;
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    // Positive roots come out in descending order; flip to ascending overall.
    nodes.reverse();
    weights.reverse();
    Ok(GaussHermite { nodes, weights })
}
