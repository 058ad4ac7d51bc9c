use std::f64::consts::PI;

use num_complex::Complex64;

/// Constant phase-rotation matrix used to reconstruct off-diagonal branch
/// flows from their diagonal under near-balanced voltages.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaMatrix(pub [[Complex64; 3]; 3]);

/// The rotation `e^{-i 2pi/3}`.
pub fn rotation() -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI / 3.0)
}

pub fn gamma_matrix() -> GammaMatrix {
    let one = Complex64::new(1.0, 0.0);
    let a = rotation();
    let a2 = a * a;
    GammaMatrix([[one, a2, a], [a, one, a2], [a2, a, one]])
}

impl GammaMatrix {
    pub fn get(&self, p: usize, q: usize) -> Complex64 {
        self.0[p][q]
    }

    pub fn conj_transpose(&self) -> GammaMatrix {
        let mut m = self.0;
        for (p, row) in m.iter_mut().enumerate() {
            for (q, v) in row.iter_mut().enumerate() {
                *v = self.0[q][p].conj();
            }
        }
        GammaMatrix(m)
    }
}

/// Full branch flow matrix from its diagonal: element (p, q) is
/// `gamma[p][q] * lambda[q]`.
pub fn offdiag_flow(lambda: [Complex64; 3]) -> [[Complex64; 3]; 3] {
    let g = gamma_matrix();
    let mut out = [[Complex64::new(0.0, 0.0); 3]; 3];
    for (p, row) in out.iter_mut().enumerate() {
        for (q, v) in row.iter_mut().enumerate() {
            *v = g.0[p][q] * lambda[q];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < TOL
    }

    #[test]
    fn entries() {
        let g = gamma_matrix();
        assert!(close(g.get(0, 0), Complex64::new(1.0, 0.0)));
        // row b, column a
        assert!(close(g.get(1, 0), Complex64::new(-0.5, -0.866_025_403_784_438_6)));
        for p in 0..3 {
            assert!(close(g.get(p, p), Complex64::new(1.0, 0.0)));
            for q in 0..3 {
                assert!((g.get(p, q).norm() - 1.0).abs() < TOL);
            }
        }
    }

    #[test]
    fn hermitian() {
        let g = gamma_matrix();
        let h = g.conj_transpose();
        for p in 0..3 {
            for q in 0..3 {
                assert!(close(g.get(p, q), h.get(p, q)));
            }
        }
    }

    #[test]
    fn unit_weights_give_gamma() {
        let one = Complex64::new(1.0, 0.0);
        let m = offdiag_flow([one; 3]);
        let g = gamma_matrix();
        for p in 0..3 {
            for q in 0..3 {
                assert!(close(m[p][q], g.get(p, q)));
            }
        }
    }

    #[test]
    fn single_phase_weight_fills_one_column() {
        let zero = Complex64::new(0.0, 0.0);
        let m = offdiag_flow([Complex64::new(1.0, 0.0), zero, zero]);
        for row in &m {
            assert!(row[0].norm() > 0.5);
            assert_eq!(row[1], zero);
            assert_eq!(row[2], zero);
        }
        let m2 = offdiag_flow([Complex64::new(2.0, 0.0), zero, zero]);
        assert!(close(m2[1][0], 2.0 * rotation()));
        assert!(close(m2[0][0], Complex64::new(2.0, 0.0)));
    }
}
