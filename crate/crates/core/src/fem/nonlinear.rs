use std::collections::BTreeSet;

use crate::mesh::{Point, TetMesh};

use super::hyper::neo_hookean_stress;
use super::linear::{assemble_linear_stiffness, shape_gradients, Mat3};
use super::sparse::{conjugate_gradient, dot, CgOptions, CsrMatrix};
use super::{material_for, DisplacementField, FemError, LoadCase, Material, Materials, PA_TO_N_PER_MM2};

/// Settings for [`nonlinear_solve_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    /// Converged when `‖∇E‖ ≤ rel_tol · ‖f‖` for the current load increment.
    pub rel_tol: f64,
    pub max_iterations: usize,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub max_nodes: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            max_iterations: 50,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 30,
            max_nodes: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NonlinearSolution {
    pub displacement: DisplacementField,
    /// Total potential energy (N·mm) at the solution.
    pub energy: f64,
    pub gradient_norm: f64,
    /// Newton iterations used per load increment.
    pub iterations: Vec<usize>,
}

struct Element {
    nodes: [usize; 4],
    grads: [Point; 4],
    volume: f64,
    material: Material,
}

/// Quasi-static hyperelastic equilibrium for one load case, applying the
/// case's loads in `steps` equal increments.
pub fn nonlinear_solve(
    mesh: &TetMesh,
    materials: &Materials,
    case: &LoadCase,
    steps: usize,
) -> Result<NonlinearSolution, FemError> {
    let loads = case.loads(mesh.node_count())?;
    nonlinear_solve_with(mesh, materials, &loads, &case.fixed_nodes, steps, NewtonOptions::default())
}

pub fn nonlinear_solve_with(
    mesh: &TetMesh,
    materials: &Materials,
    loads: &[Point],
    fixed: &BTreeSet<usize>,
    steps: usize,
    opts: NewtonOptions,
) -> Result<NonlinearSolution, FemError> {
    let n = mesh.node_count();
    if n > opts.max_nodes {
        return Err(FemError::MeshTooLarge {
            nodes: n,
            limit: opts.max_nodes,
        });
    }
    if steps == 0 {
        return Err(FemError::InvalidTimeStep { step: 0, steps });
    }
    if loads.len() != n {
        return Err(FemError::LengthMismatch {
            expected: n,
            found: loads.len(),
        });
    }
    let mut free = vec![true; 3 * n];
    for &v in fixed {
        if v >= n {
            return Err(FemError::NodeOutOfRange { index: v, nodes: n });
        }
        free[3 * v..3 * v + 3].fill(false);
    }
    let elements = mesh
        .tets()
        .iter()
        .enumerate()
        .map(|(t, &nodes)| {
            let (grads, volume) = shape_gradients(mesh.tet_points(t));
            Ok(Element {
                nodes,
                grads,
                volume,
                material: *material_for(materials, mesh.regions()[t])?,
            })
        })
        .collect::<Result<Vec<_>, FemError>>()?;

    let f_full: Vec<f64> = (0..3 * n)
        .map(|i| if free[i] { loads[i / 3][i % 3] } else { 0.0 })
        .collect();
    let mut u = vec![0.0; 3 * n];
    if f_full.iter().all(|&f| f == 0.0) {
        return Ok(NonlinearSolution {
            displacement: DisplacementField::from_values(vec![[0.0; 3]; n]),
            energy: 0.0,
            gradient_norm: 0.0,
            iterations: vec![0; steps],
        });
    }
    let k_lin = assemble_linear_stiffness(mesh, materials)?;
    let mut iterations = Vec::with_capacity(steps);
    let mut energy = 0.0;
    let mut g_norm = 0.0;

    for increment in 1..=steps {
        let scale = increment as f64 / steps as f64;
        let f: Vec<f64> = f_full.iter().map(|x| x * scale).collect();
        let tol = opts.rel_tol * dot(&f, &f).sqrt();
        let mut state = evaluate(&elements, &u, &f, &free)
            .map_err(|_| FemError::InvertedIncrement { increment })?;
        let mut history = vec![state.grad_norm];
        let mut used = 0;
        while state.grad_norm > tol {
            if used == opts.max_iterations {
                return Err(FemError::NewtonStall { increment, history });
            }
            used += 1;
            let d = newton_direction(&elements, &u, &state.grad, &free, n, &k_lin)?;
            let slope = dot(&state.grad, &d);
            let d = if slope < 0.0 {
                d
            } else {
                linear_direction(&k_lin, &state.grad, &free)?
            };
            let slope = dot(&state.grad, &d);

            let mut t = 1.0;
            let mut accepted = None;
            let mut any_inverted = false;
            for _ in 0..=opts.max_backtracks {
                let trial: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                match evaluate(&elements, &trial, &f, &free) {
                    Ok(s) => {
                        let armijo = s.energy <= state.energy + opts.armijo * t * slope;
                        if armijo || s.grad_norm < state.grad_norm {
                            accepted = Some((trial, s));
                            break;
                        }
                    }
                    Err(_) => any_inverted = true,
                }
                t *= opts.backtrack;
            }
            match accepted {
                Some((trial, s)) => {
                    u = trial;
                    state = s;
                    history.push(state.grad_norm);
                }
                None if any_inverted => return Err(FemError::InvertedIncrement { increment }),
                None => return Err(FemError::NewtonStall { increment, history }),
            }
        }
        iterations.push(used);
        energy = state.energy;
        g_norm = state.grad_norm;
    }

    let values = (0..n).map(|v| [u[3 * v], u[3 * v + 1], u[3 * v + 2]]).collect();
    Ok(NonlinearSolution {
        displacement: DisplacementField::from_values(values),
        energy,
        gradient_norm: g_norm,
        iterations,
    })
}

struct State {
    energy: f64,
    grad: Vec<f64>,
    grad_norm: f64,
}

fn deformation_gradient(e: &Element, u: &[f64]) -> Mat3 {
    let mut f = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for (a, &node) in e.nodes.iter().enumerate() {
        for i in 0..3 {
            for j in 0..3 {
                f[i][j] += u[3 * node + i] * e.grads[a][j];
            }
        }
    }
    f
}

/// Strain energy (N·mm) and its gradient with respect to the element's 12
/// nodal displacements (N).
fn element_response(e: &Element, u: &[f64]) -> Result<(f64, [f64; 12]), FemError> {
    let f = deformation_gradient(e, u);
    let (p, w) = neo_hookean_stress(&f, &e.material)?;
    let scale = e.volume * PA_TO_N_PER_MM2;
    let mut g = [0.0; 12];
    for a in 0..4 {
        for i in 0..3 {
            g[3 * a + i] = scale * (0..3).map(|j| p[i][j] * e.grads[a][j]).sum::<f64>();
        }
    }
    Ok((scale * w, g))
}

/// Total potential energy `Σ W V − f·u` and its gradient on the free dofs.
fn evaluate(elements: &[Element], u: &[f64], f: &[f64], free: &[bool]) -> Result<State, FemError> {
    let mut grad: Vec<f64> = f.iter().map(|x| -x).collect();
    let mut energy = -dot(f, u);
    for e in elements {
        let (w, g) = element_response(e, u)?;
        energy += w;
        for (a, &node) in e.nodes.iter().enumerate() {
            for i in 0..3 {
                grad[3 * node + i] += g[3 * a + i];
            }
        }
    }
    for (g, &is_free) in grad.iter_mut().zip(free) {
        if !is_free {
            *g = 0.0;
        }
    }
    let grad_norm = dot(&grad, &grad).sqrt();
    Ok(State {
        energy,
        grad,
        grad_norm,
    })
}

/// Sparse tangent stiffness from central differences of the analytic element
/// gradients.
fn tangent(elements: &[Element], u: &[f64], n: usize) -> Result<CsrMatrix, FemError> {
    let mut triplets = Vec::with_capacity(elements.len() * 144);
    let mut local = u.to_vec();
    for e in elements {
        let size = e.volume.cbrt();
        let h = 1e-6 * size;
        let mut h_e = [[0.0; 12]; 12];
        for col in 0..12 {
            let dof = 3 * e.nodes[col / 3] + col % 3;
            let base = local[dof];
            local[dof] = base + h;
            let (_, gp) = element_response(e, &local)?;
            local[dof] = base - h;
            let (_, gm) = element_response(e, &local)?;
            local[dof] = base;
            for row in 0..12 {
                h_e[row][col] = (gp[row] - gm[row]) / (2.0 * h);
            }
        }
        for a in 0..12 {
            for b in 0..12 {
                let v = 0.5 * (h_e[a][b] + h_e[b][a]);
                triplets.push((3 * e.nodes[a / 3] + a % 3, 3 * e.nodes[b / 3] + b % 3, v));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(3 * n, triplets))
}

const DIRECTION_CG: CgOptions = CgOptions {
    rel_tol: 1e-10,
    max_iter_factor: 20,
};

fn newton_direction(
    elements: &[Element],
    u: &[f64],
    grad: &[f64],
    free: &[bool],
    n: usize,
    k_lin: &CsrMatrix,
) -> Result<Vec<f64>, FemError> {
    let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
    if let Ok(h) = tangent(elements, u, n) {
        let mut d = vec![0.0; 3 * n];
        if conjugate_gradient(&h, &rhs, free, &mut d, DIRECTION_CG).is_ok() {
            return Ok(d);
        }
    }
    linear_direction(k_lin, grad, free)
}

fn linear_direction(k_lin: &CsrMatrix, grad: &[f64], free: &[bool]) -> Result<Vec<f64>, FemError> {
    let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut d = vec![0.0; rhs.len()];
    conjugate_gradient(k_lin, &rhs, free, &mut d, DIRECTION_CG)?;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{default_materials, solve_linear};
    use crate::mesh::{generate_synthetic_mesh, nodes_on_box_face, BoxFace};

    fn cantilever() -> (TetMesh, BTreeSet<usize>, Vec<usize>) {
        let mesh = generate_synthetic_mesh(3, 2, 2, 10.0, None).unwrap();
        let fixed: BTreeSet<usize> = nodes_on_box_face(&mesh, BoxFace::XMin, 1e-9).into_iter().collect();
        let tip = nodes_on_box_face(&mesh, BoxFace::XMax, 1e-9);
        (mesh, fixed, tip)
    }

    #[test]
    fn zero_force_gives_zero_displacement() {
        let (mesh, fixed, _) = cantilever();
        let loads = vec![[0.0; 3]; mesh.node_count()];
        let sol =
            nonlinear_solve_with(&mesh, &default_materials(), &loads, &fixed, 3, NewtonOptions::default()).unwrap();
        assert_eq!(sol.energy, 0.0);
        assert!(sol.displacement.values().iter().all(|v| *v == [0.0; 3]));
    }

    #[test]
    fn converges_under_moderate_load() {
        let (mesh, fixed, tip) = cantilever();
        let mut loads = vec![[0.0; 3]; mesh.node_count()];
        for &t in &tip {
            loads[t] = [0.0, 0.0, -0.02];
        }
        let mats = default_materials();
        let sol = nonlinear_solve_with(&mesh, &mats, &loads, &fixed, 5, NewtonOptions::default()).unwrap();
        let f_norm = (tip.len() as f64).sqrt() * 0.02;
        assert!(sol.gradient_norm <= 1e-6 * f_norm);
        assert!(fixed.iter().all(|&v| sol.displacement.values()[v] == [0.0; 3]));
        let k = assemble_linear_stiffness(&mesh, &mats).unwrap();
        let lin = solve_linear(&k, &loads, fixed.iter().copied()).unwrap();
        let tip_z = |d: &DisplacementField| d.values()[tip[0]][2];
        assert!(tip_z(&sol.displacement) < 0.0 && tip_z(&lin) < 0.0);
    }

    #[test]
    fn mesh_size_guard() {
        let mesh = generate_synthetic_mesh(8, 8, 8, 1.0, None).unwrap();
        let loads = vec![[0.0; 3]; mesh.node_count()];
        let err = nonlinear_solve_with(
            &mesh,
            &default_materials(),
            &loads,
            &BTreeSet::new(),
            1,
            NewtonOptions::default(),
        )
        .unwrap_err();
        assert_eq!(err, FemError::MeshTooLarge { nodes: 512, limit: 500 });
    }
}
