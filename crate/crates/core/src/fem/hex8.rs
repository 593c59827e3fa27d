//! Trilinear 8-node hexahedron: isotropic stiffness and consistent mass with
//! 2×2×2 Gauss quadrature.

use nalgebra::{Matrix3, SMatrix};

use crate::error::{Error, Result};

pub type Matrix24 = SMatrix<f64, 24, 24>;
pub type Matrix6 = SMatrix<f64, 6, 6>;

const GAUSS: f64 = 0.577_350_269_189_625_8;

/// Natural coordinates of the corner nodes (bottom face first, counter-clockwise).
pub const CORNERS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

pub fn shape(xi: [f64; 3]) -> [f64; 8] {
    let mut n = [0.0; 8];
    for (a, c) in CORNERS.iter().enumerate() {
        n[a] = 0.125 * (1.0 + c[0] * xi[0]) * (1.0 + c[1] * xi[1]) * (1.0 + c[2] * xi[2]);
    }
    n
}

/// Derivatives of the shape functions with respect to (ξ, η, ζ); `[dir][node]`.
pub fn shape_gradients(xi: [f64; 3]) -> [[f64; 8]; 3] {
    let mut g = [[0.0; 8]; 3];
    for (a, c) in CORNERS.iter().enumerate() {
        let f = [1.0 + c[0] * xi[0], 1.0 + c[1] * xi[1], 1.0 + c[2] * xi[2]];
        g[0][a] = 0.125 * c[0] * f[1] * f[2];
        g[1][a] = 0.125 * c[1] * f[0] * f[2];
        g[2][a] = 0.125 * c[2] * f[0] * f[1];
    }
    g
}

/// Isotropic elasticity matrix, strain order [xx, yy, zz, xy, yz, zx] with
/// engineering shear strains.
pub fn isotropic_elasticity(e: f64, nu: f64) -> Matrix6 {
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = e / (2.0 * (1.0 + nu));
    let mut d = Matrix6::zeros();
    for i in 0..3 {
        for j in 0..3 {
            d[(i, j)] = lambda;
        }
        d[(i, i)] = lambda + 2.0 * mu;
        d[(i + 3, i + 3)] = mu;
    }
    d
}

fn gauss_points() -> impl Iterator<Item = [f64; 3]> {
    (0..8).map(|p| {
        [
            if p & 1 == 0 { -GAUSS } else { GAUSS },
            if p & 2 == 0 { -GAUSS } else { GAUSS },
            if p & 4 == 0 { -GAUSS } else { GAUSS },
        ]
    })
}

/// Stiffness and mass of one element. `element` is only used for diagnostics.
pub fn element_matrices(
    coords: &[[f64; 3]; 8],
    elasticity: &Matrix6,
    density: f64,
    element: usize,
) -> Result<(Matrix24, Matrix24)> {
    let mut k = Matrix24::zeros();
    let mut m = Matrix24::zeros();
    for xi in gauss_points() {
        let dn = shape_gradients(xi);
        let mut jac = Matrix3::zeros();
        for r in 0..3 {
            for c in 0..3 {
                jac[(r, c)] = (0..8).map(|a| dn[r][a] * coords[a][c]).sum();
            }
        }
        let det = jac.determinant();
        if !(det > 0.0) {
            return Err(Error::ElementQuality { element, det });
        }
        let jinv = jac.try_inverse().ok_or(Error::ElementQuality { element, det })?;
        // physical gradients: dN/dx_c = Σ_r Jinv[c][r] dN/dξ_r
        let mut dx = [[0.0; 8]; 3];
        for a in 0..8 {
            for c in 0..3 {
                dx[c][a] = (0..3).map(|r| jinv[(c, r)] * dn[r][a]).sum();
            }
        }
        let mut b = SMatrix::<f64, 6, 24>::zeros();
        for a in 0..8 {
            let (x, y, z) = (dx[0][a], dx[1][a], dx[2][a]);
            let c = 3 * a;
            b[(0, c)] = x;
            b[(1, c + 1)] = y;
            b[(2, c + 2)] = z;
            b[(3, c)] = y;
            b[(3, c + 1)] = x;
            b[(4, c + 1)] = z;
            b[(4, c + 2)] = y;
            b[(5, c)] = z;
            b[(5, c + 2)] = x;
        }
        k += b.transpose() * elasticity * b * det;

        let n = shape(xi);
        for a in 0..8 {
            for bb in 0..8 {
                let v = density * n[a] * n[bb] * det;
                for d in 0..3 {
                    m[(3 * a + d, 3 * bb + d)] += v;
                }
            }
        }
    }
    let k = (k + k.transpose()) * 0.5;
    Ok((k, m))
}
