//! Gauss–Hermite quadrature for the weight `e^{−x²}`.

use std::f64::consts::PI;

/// Nodes and weights of an `n`-point rule, so that
/// `∫ f(x) e^{−x²} dx ≈ Σ wᵢ f(xᵢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Roots by Newton iteration on the orthonormal Hermite recurrence,
    /// starting from the usual asymptotic guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss–Hermite rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let pim4 = PI.powf(-0.25);
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
            for _ in 0..100 {
                let (p1, dp) = orthonormal_hermite(n, z, pim4);
                pp = dp;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            let (_, dp) = orthonormal_hermite(n, z, pim4);
            pp = if dp != 0.0 { dp } else { pp };
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        // Ascending order.
        nodes.reverse();
        weights.reverse();
        GaussHermite { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫ f(x) e^{−x²} dx`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}

/// Value of the degree-`n` orthonormal Hermite function at `z` and its
/// derivative.
fn orthonormal_hermite(n: usize, z: f64, pim4: f64) -> (f64, f64) {
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
    }
    let dp = (2.0 * n as f64).sqrt() * p2;
    (p1, dp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_point_rule() {
        let gh = GaussHermite::new(3);
        let h = 1.5f64.sqrt();
        assert!((gh.nodes[0] + h).abs() < 1e-14);
        assert!(gh.nodes[1].abs() < 1e-14);
        assert!((gh.weights[1] - 2.0 * PI.sqrt() / 3.0).abs() < 1e-14);
        assert!((gh.weights[0] - PI.sqrt() / 6.0).abs() < 1e-14);
    }

    #[test]
    fn moments_are_exact() {
        for n in [5, 20, 80] {
            let gh = GaussHermite::new(n);
            assert!((gh.weights.iter().sum::<f64>() - PI.sqrt()).abs() < 1e-13);
            // ∫x⁴e^{−x²} = 3√π/4.
            assert!((gh.integrate(|x| x.powi(4)) - 0.75 * PI.sqrt()).abs() < 1e-12);
            assert!(gh.integrate(|x| x.powi(3)).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_with_shift() {
        // ∫ e^{2x} e^{−x²} dx = √π e.
        let gh = GaussHermite::new(80);
        let v = gh.integrate(|x| (2.0 * x).exp());
        assert!((v / (PI.sqrt() * 1f64.exp()) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn nodes_are_sorted_and_symmetric() {
        let gh = GaussHermite::new(80);
        for w in gh.nodes.windows(2) {
            assert!(w[0] < w[1]);
        }
        for i in 0..40 {
            assert!((gh.nodes[i] + gh.nodes[79 - i]).abs() < 1e-12);
        }
    }
}
