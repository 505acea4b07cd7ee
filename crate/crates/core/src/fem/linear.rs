use crate::mesh::{Point, TetMesh};

use super::sparse::{conjugate_gradient, CgOptions, CsrMatrix};
use super::{material_for, DisplacementField, FemError, Materials, PA_TO_N_PER_MM2};

pub type Mat3 = [[f64; 3]; 3];

/// Gradients of the four linear shape functions of a tetrahedron (1/mm) and
/// its volume (mm³).
pub fn shape_gradients(p: [Point; 4]) -> ([Point; 4], f64) {
    let dm = edge_matrix(p);
    let det = det3(&dm);
    let inv = inverse3(&dm, det);
    // Rows of Dm⁻¹ are ∇N₁..∇N₃ when Dm holds the edge vectors as columns.
    let g1 = inv[0];
    let g2 = inv[1];
    let g3 = inv[2];
    let g0 = [0, 1, 2].map(|a| -(g1[a] + g2[a] + g3[a]));
    ([g0, g1, g2, g3], det / 6.0)
}

/// Columns are `p₁ − p₀`, `p₂ − p₀`, `p₃ − p₀`.
pub(crate) fn edge_matrix(p: [Point; 4]) -> Mat3 {
    let mut m = [[0.0; 3]; 3];
    for c in 0..3 {
        for r in 0..3 {
            m[r][c] = p[c + 1][r] - p[0][r];
        }
    }
    m
}

pub(crate) fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub(crate) fn inverse3(m: &Mat3, det: f64) -> Mat3 {
    let mut inv = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
            let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
            inv[r][c] = (m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]) / det;
        }
    }
    inv
}

/// 12 × 12 constant-strain stiffness of one tetrahedron in N/mm, with
/// Lamé parameters given in Pa.
pub fn element_stiffness(p: [Point; 4], lambda: f64, mu: f64) -> [[f64; 12]; 12] {
    let (grads, volume) = shape_gradients(p);
    let lambda = lambda * PA_TO_N_PER_MM2;
    let mu = mu * PA_TO_N_PER_MM2;
    let mut k = [[0.0; 12]; 12];
    for a in 0..4 {
        for b in 0..4 {
            let (ga, gb) = (grads[a], grads[b]);
            let ab = ga[0] * gb[0] + ga[1] * gb[1] + ga[2] * gb[2];
            for i in 0..3 {
                for j in 0..3 {
                    let mut v = lambda * ga[i] * gb[j] + mu * ga[j] * gb[i];
                    if i == j {
                        v += mu * ab;
                    }
                    k[3 * a + i][3 * b + j] = volume * v;
                }
            }
        }
    }
    k
}

/// Global small-strain stiffness (3N × 3N, N/mm), degree of freedom `3·node + axis`.
pub fn assemble_linear_stiffness(mesh: &TetMesh, materials: &Materials) -> Result<CsrMatrix, FemError> {
    let mut triplets = Vec::with_capacity(mesh.tet_count() * 144);
    for (t, tet) in mesh.tets().iter().enumerate() {
        let mat = material_for(materials, mesh.regions()[t])?;
        let k = element_stiffness(mesh.tet_points(t), mat.lame_lambda(), mat.shear_modulus());
        for a in 0..4 {
            for b in 0..4 {
                for i in 0..3 {
                    for j in 0..3 {
                        triplets.push((3 * tet[a] + i, 3 * tet[b] + j, k[3 * a + i][3 * b + j]));
                    }
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(3 * mesh.node_count(), triplets))
}

/// Solves `K u = f` with zero displacement at `fixed`.
pub fn solve_linear(
    k: &CsrMatrix,
    loads: &[Point],
    fixed: impl IntoIterator<Item = usize>,
) -> Result<DisplacementField, FemError> {
    let prescribed: Vec<(usize, Point)> = fixed.into_iter().map(|n| (n, [0.0; 3])).collect();
    solve_prescribed(k, loads, &prescribed, CgOptions::default())
}

/// Solves `K u = f` on the free nodes with `u` prescribed at the listed nodes.
///
/// Loads given at prescribed nodes are ignored; the returned field holds the
/// prescribed values exactly.
pub fn solve_prescribed(
    k: &CsrMatrix,
    loads: &[Point],
    prescribed: &[(usize, Point)],
    opts: CgOptions,
) -> Result<DisplacementField, FemError> {
    let n = k.dim() / 3;
    if loads.len() != n {
        return Err(FemError::LengthMismatch {
            expected: n,
            found: loads.len(),
        });
    }
    let mut free = vec![true; 3 * n];
    let mut u_p = vec![0.0; 3 * n];
    for &(node, value) in prescribed {
        if node >= n {
            return Err(FemError::NodeOutOfRange { index: node, nodes: n });
        }
        for a in 0..3 {
            free[3 * node + a] = false;
            u_p[3 * node + a] = value[a];
        }
    }
    let k_up = k.mul_vec(&u_p);
    let b: Vec<f64> = (0..3 * n)
        .map(|i| if free[i] { loads[i / 3][i % 3] - k_up[i] } else { 0.0 })
        .collect();
    let mut x = vec![0.0; 3 * n];
    conjugate_gradient(k, &b, &free, &mut x, opts)?;
    let values = (0..n)
        .map(|v| [0, 1, 2].map(|a| if free[3 * v + a] { x[3 * v + a] } else { u_p[3 * v + a] }))
        .collect();
    Ok(DisplacementField::from_values(values))
}

/// Infinitesimal strain of tetrahedron `tet` under displacement `u`.
pub fn element_strain(mesh: &TetMesh, u: &DisplacementField, tet: usize) -> Mat3 {
    let (grads, _) = shape_gradients(mesh.tet_points(tet));
    let mut grad_u = [[0.0; 3]; 3];
    for (a, &node) in mesh.tets()[tet].iter().enumerate() {
        let d = u.values()[node];
        for i in 0..3 {
            for j in 0..3 {
                grad_u[i][j] += d[i] * grads[a][j];
            }
        }
    }
    let mut eps = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            eps[i][j] = 0.5 * (grad_u[i][j] + grad_u[j][i]);
        }
    }
    eps
}

/// Hooke's law `σ = λ tr(ε) I + 2μ ε`, in the units of `lambda` and `mu`.
pub fn hooke_stress(eps: &Mat3, lambda: f64, mu: f64) -> Mat3 {
    let tr = eps[0][0] + eps[1][1] + eps[2][2];
    let mut s = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            s[i][j] = 2.0 * mu * eps[i][j];
        }
        s[i][i] += lambda * tr;
    }
    s
}

/// Cauchy stress (Pa) of tetrahedron `tet` under displacement `u`.
pub fn element_stress(
    mesh: &TetMesh,
    materials: &Materials,
    u: &DisplacementField,
    tet: usize,
) -> Result<Mat3, FemError> {
    let mat = material_for(materials, mesh.regions()[tet])?;
    Ok(hooke_stress(&element_strain(mesh, u, tet), mat.lame_lambda(), mat.shear_modulus()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{default_materials, Material};
    use crate::mesh::{generate_synthetic_mesh, Region};

    fn regular_tet() -> [Point; 4] {
        [
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, -1.0, 1.0],
            [-1.0, 1.0, -1.0],
        ]
    }

    #[test]
    fn shape_gradients_sum_to_zero() {
        let (g, v) = shape_gradients(regular_tet());
        assert!((v - 8.0 / 3.0).abs() < 1e-12);
        for a in 0..3 {
            assert!(g.iter().map(|x| x[a]).sum::<f64>().abs() < 1e-14);
        }
    }

    #[test]
    fn rigid_translation_is_in_null_space() {
        let m = Material::healthy_brain();
        let k = element_stiffness(regular_tet(), m.lame_lambda(), m.shear_modulus());
        let t = [0.3, -1.2, 0.7];
        for row in &k {
            let f: f64 = (0..12).map(|c| row[c] * t[c % 3]).sum();
            assert!(f.abs() < 1e-15);
        }
    }

    #[test]
    fn missing_material_is_reported() {
        let mesh = generate_synthetic_mesh(
            2,
            2,
            2,
            1.0,
            Some(crate::mesh::Aabb {
                min: [0.0; 3],
                max: [1.0; 3],
            }),
        )
        .unwrap();
        let mut mats = default_materials();
        mats.remove(&Region::Tumour);
        assert_eq!(
            assemble_linear_stiffness(&mesh, &mats).unwrap_err(),
            FemError::MissingMaterial(Region::Tumour)
        );
    }
}
