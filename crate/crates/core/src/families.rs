//! Test polyhedra: the shifted simplices `P_d`, `Q_d`, the tilted simplicial
//! cone `C_d`, plus orthants and intervals with closed-form probabilities.

use nalgebra::{DMatrix, DVector};

use crate::geometry::HalfspaceSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    P,
    Q,
    C,
}

impl Family {
    pub fn build(self, d: usize) -> HalfspaceSystem {
        match self {
            Family::P => p_simplex(d),
            Family::Q => q_simplex(d),
            Family::C => c_cone(d),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::P => "P",
            Family::Q => "Q",
            Family::C => "C",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "P" | "p" => Ok(Family::P),
            "Q" | "q" => Ok(Family::Q),
            "C" | "c" => Ok(Family::C),
            _ => Err(format!("unknown family {s:?} (expected P, Q or C)")),
        }
    }
}

/// Normals `e_1..e_d` and `-(1,..,1)`.
fn simplex_normals(d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d + 1, |i, j| {
        if j == d {
            -1.0
        } else if i == j {
            1.0
        } else {
            0.0
        }
    })
}

/// `x_i + sqrt(d)/2 >= 0`, `-sum x_i + sqrt(d)/2 >= 0`.
pub fn p_simplex(d: usize) -> HalfspaceSystem {
    let h = (d as f64).sqrt() / 2.0;
    HalfspaceSystem::new(simplex_normals(d), DVector::from_element(d + 1, h)).expect("valid family")
}

/// `x_i - sqrt(d)/2 >= 0`, `-sum x_i + (2d+1) sqrt(d)/2 >= 0`.
pub fn q_simplex(d: usize) -> HalfspaceSystem {
    let s = (d as f64).sqrt();
    let b = DVector::from_fn(d + 1, |j, _| {
        if j == d {
            (2 * d + 1) as f64 * s / 2.0
        } else {
            -s / 2.0
        }
    });
    HalfspaceSystem::new(simplex_normals(d), b).expect("valid family")
}

/// Upper triangular normals `a_ij = (i+j)/100` above the diagonal (1-based
/// indices), 1 on it; offsets `sqrt(d)/2`.
pub fn c_cone(d: usize) -> HalfspaceSystem {
    let a = DMatrix::from_fn(d, d, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Less => (i + j + 2) as f64 / 100.0,
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Greater => 0.0,
    });
    let h = (d as f64).sqrt() / 2.0;
    HalfspaceSystem::new(a, DVector::from_element(d, h)).expect("valid family")
}

/// The nonnegative orthant `x_i >= 0`.
pub fn orthant(d: usize) -> HalfspaceSystem {
    HalfspaceSystem::new(DMatrix::identity(d, d), DVector::zeros(d)).expect("valid family")
}

/// The interval `[lower, upper]` in one dimension.
pub fn segment(lower: f64, upper: f64) -> HalfspaceSystem {
    HalfspaceSystem::from_rows(&[vec![1.0, -1.0]], &[-lower, upper]).expect("valid family")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p2_matches_hand_layout() {
        let s = p_simplex(2);
        assert_eq!(
            s.a().row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 0.0, -1.0]
        );
        assert_eq!(
            s.a().row(1).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 1.0, -1.0]
        );
        assert!(s.b().iter().all(|&v| (v - 2f64.sqrt() / 2.0).abs() < 1e-16));
    }

    #[test]
    fn c3_entries() {
        let c = c_cone(3);
        assert_eq!(c.a()[(0, 1)], 0.03);
        assert_eq!(c.a()[(0, 2)], 0.04);
        assert_eq!(c.a()[(1, 2)], 0.05);
        assert_eq!(c.a()[(2, 0)], 0.0);
        assert_eq!(c.a()[(1, 1)], 1.0);
    }

    #[test]
    fn q_vertex_is_inside() {
        let q = q_simplex(3);
        let v = [3f64.sqrt() / 2.0; 3];
        assert!(q.eval_all(&v).iter().all(|&f| f >= -1e-12));
    }
}
