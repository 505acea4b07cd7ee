use std::collections::BTreeSet;

use meshgnn::fem::{
    assemble_linear_stiffness, default_materials, element_stress, hooke_stress, nonlinear_solve_with, solve_linear,
    solve_prescribed, CgOptions, DisplacementField, LinearOracle, LoadCase, Material, NewtonOptions,
};
use meshgnn::mesh::{
    boundary_faces, generate_synthetic_mesh, nodes_on_box_face, Aabb, BoxFace, Point, TetMesh,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn jittered_mesh(nx: usize, ny: usize, nz: usize, seed: u64) -> TetMesh {
    let base = generate_synthetic_mesh(nx, ny, nz, 2.0, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let top = 2.0 * (nz - 1) as f64;
    let nodes = base
        .nodes()
        .iter()
        .map(|p| {
            let mut q = p.map(|x| x + rng.random_range(-0.3..0.3));
            if p[2] == 0.0 || p[2] == top {
                q[2] = p[2];
            }
            q
        })
        .collect();
    TetMesh::new(nodes, base.tets().to_vec(), base.regions().to_vec()).unwrap()
}

fn rel_diff(a: &[Point], b: &[Point]) -> f64 {
    let num: f64 = a.iter().zip(b).flat_map(|(x, y)| (0..3).map(move |i| (x[i] - y[i]).powi(2))).sum();
    let den: f64 = b.iter().flat_map(|y| y.iter().map(|v| v * v)).sum();
    (num / den).sqrt()
}

#[test]
fn stiffness_is_symmetric_on_random_mesh() {
    let mesh = jittered_mesh(4, 3, 2, 7);
    assert_eq!(mesh.node_count(), 24);
    let k = assemble_linear_stiffness(&mesh, &default_materials()).unwrap();
    assert!(k.asymmetry() <= 1e-10, "asymmetry {}", k.asymmetry());
}

#[test]
fn stiffness_annihilates_rigid_motions() {
    let mesh = jittered_mesh(3, 3, 3, 1);
    let k = assemble_linear_stiffness(&mesh, &default_materials()).unwrap();
    let scale = (0..k.dim()).map(|i| k.get(i, i)).fold(0.0, f64::max);
    let mut modes: Vec<Vec<f64>> = (0..3)
        .map(|a| (0..k.dim()).map(|i| if i % 3 == a { 1.0 } else { 0.0 }).collect())
        .collect();
    for axis in 0..3 {
        let mut m = vec![0.0; k.dim()];
        for (v, p) in mesh.nodes().iter().enumerate() {
            let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
            m[3 * v + b] = -p[c];
            m[3 * v + c] = p[b];
        }
        modes.push(m);
    }
    for mode in modes {
        let f = k.mul_vec(&mode);
        let worst = f.iter().fold(0.0f64, |w, x| w.max(x.abs()));
        assert!(worst <= 1e-12 * scale * 10.0, "rigid mode force {worst}");
    }
}

#[test]
fn uniform_strain_patch_test() {
    let mesh = jittered_mesh(4, 4, 4, 3);
    let mats = default_materials();
    let k = assemble_linear_stiffness(&mesh, &mats).unwrap();
    let grad = [[1e-3, 2e-4, -3e-4], [5e-4, -2e-3, 1e-4], [0.0, 7e-4, 1.5e-3]];
    let offset = [0.1, -0.2, 0.05];
    let exact = |p: &Point| [0, 1, 2].map(|i| offset[i] + (0..3).map(|j| grad[i][j] * p[j]).sum::<f64>());
    let boundary: BTreeSet<usize> = boundary_faces(&mesh).into_iter().flatten().collect();
    let prescribed: Vec<(usize, Point)> = boundary.iter().map(|&v| (v, exact(&mesh.nodes()[v]))).collect();
    let loads = vec![[0.0; 3]; mesh.node_count()];
    let opts = CgOptions {
        rel_tol: 1e-13,
        ..CgOptions::default()
    };
    let u = solve_prescribed(&k, &loads, &prescribed, opts).unwrap();
    let expected: Vec<Point> = mesh.nodes().iter().map(exact).collect();
    assert!(rel_diff(u.values(), &expected) <= 1e-8);

    let m = Material::healthy_brain();
    let mut eps = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            eps[i][j] = 0.5 * (grad[i][j] + grad[j][i]);
        }
    }
    let sigma = hooke_stress(&eps, m.lame_lambda(), m.shear_modulus());
    let norm = sigma.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    for t in 0..mesh.tet_count() {
        let s = element_stress(&mesh, &mats, &u, t).unwrap();
        let err = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| (s[i][j] - sigma[i][j]).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-8 * norm, "tet {t}: {err} vs {norm}");
    }
}

fn cantilever_case(mesh: &TetMesh, force: Point) -> (Vec<Point>, BTreeSet<usize>) {
    let fixed: BTreeSet<usize> = nodes_on_box_face(mesh, BoxFace::ZMin, 1e-9).into_iter().collect();
    let mut loads = vec![[0.0; 3]; mesh.node_count()];
    for v in nodes_on_box_face(mesh, BoxFace::ZMax, 1e-9) {
        loads[v] = force;
    }
    (loads, fixed)
}

#[test]
fn zero_load_gives_zero_displacement() {
    let mesh = jittered_mesh(3, 3, 3, 2);
    let k = assemble_linear_stiffness(&mesh, &default_materials()).unwrap();
    let (loads, fixed) = cantilever_case(&mesh, [0.0; 3]);
    let u = solve_linear(&k, &loads, fixed).unwrap();
    assert!(u.values().iter().all(|v| *v == [0.0; 3]));
}

#[test]
fn solution_is_linear_in_load() {
    let mesh = jittered_mesh(3, 4, 3, 4);
    let k = assemble_linear_stiffness(&mesh, &default_materials()).unwrap();
    let (loads, fixed) = cantilever_case(&mesh, [0.01, -0.02, 0.005]);
    let doubled: Vec<Point> = loads.iter().map(|f| f.map(|x| 2.0 * x)).collect();
    let u1 = solve_linear(&k, &loads, fixed.iter().copied()).unwrap();
    let u2 = solve_linear(&k, &doubled, fixed.iter().copied()).unwrap();
    let scaled: Vec<Point> = u1.values().iter().map(|v| v.map(|x| 2.0 * x)).collect();
    assert!(rel_diff(u2.values(), &scaled) <= 1e-8);
    assert!(fixed.iter().all(|&v| u1.values()[v] == [0.0; 3]));
}

#[test]
fn cg_matches_dense_direct_solve() {
    let mesh = jittered_mesh(4, 4, 3, 9);
    assert!(mesh.node_count() <= 60);
    let k = assemble_linear_stiffness(&mesh, &default_materials()).unwrap();
    let (loads, fixed) = cantilever_case(&mesh, [0.02, 0.01, -0.03]);
    let u = solve_linear(&k, &loads, fixed.iter().copied()).unwrap();

    let free: Vec<usize> = (0..k.dim()).filter(|i| !fixed.contains(&(i / 3))).collect();
    let a = DMatrix::from_fn(free.len(), free.len(), |r, c| k.get(free[r], free[c]));
    let b = DVector::from_fn(free.len(), |r, _| loads[free[r] / 3][free[r] % 3]);
    let x = a.cholesky().expect("constrained stiffness is SPD").solve(&b);
    let mut dense = vec![[0.0; 3]; mesh.node_count()];
    for (r, &dof) in free.iter().enumerate() {
        dense[dof / 3][dof % 3] = x[r];
    }
    let err = rel_diff(u.values(), &dense);
    assert!(err <= 1e-7, "relative difference {err}");
}

#[test]
fn displacement_grows_with_time_step() {
    let mesh = generate_synthetic_mesh(4, 4, 4, 3.0, None).unwrap();
    let oracle = LinearOracle::new(&mesh, &default_materials()).unwrap();
    let fixed = std::sync::Arc::new(nodes_on_box_face(&mesh, BoxFace::ZMin, 1e-9).into_iter().collect());
    let load = vec![mesh.node_count() - 1];
    let total = [0.3, 0.0, -0.3];
    let mut last = 0.0;
    for step in 1..=10 {
        let f = total.map(|x| x * step as f64 / 10.0);
        let case = LoadCase::new(load.clone(), f, step, 10, std::sync::Arc::clone(&fixed)).unwrap();
        let m = oracle.solve(&case).unwrap().max_magnitude();
        assert!(m > last);
        last = m;
    }
}

#[test]
fn nonlinear_matches_linear_at_small_strain() {
    let mesh = generate_synthetic_mesh(3, 2, 2, 10.0, None).unwrap();
    let mats = default_materials();
    let fixed: BTreeSet<usize> = nodes_on_box_face(&mesh, BoxFace::XMin, 1e-9).into_iter().collect();
    let tip = nodes_on_box_face(&mesh, BoxFace::XMax, 1e-9);
    let mut loads = vec![[0.0; 3]; mesh.node_count()];
    for &t in &tip {
        loads[t] = [1e-5, 0.0, -2e-5];
    }
    let k = assemble_linear_stiffness(&mesh, &mats).unwrap();
    let lin = solve_linear(&k, &loads, fixed.iter().copied()).unwrap();
    let max_strain = (0..mesh.tet_count())
        .map(|t| {
            let e = meshgnn::fem::element_strain(&mesh, &lin, t);
            e.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()))
        })
        .fold(0.0, f64::max);
    assert!(max_strain < 1e-3, "strain {max_strain}");
    let sol = nonlinear_solve_with(&mesh, &mats, &loads, &fixed, 3, NewtonOptions::default()).unwrap();
    let err = rel_diff(sol.displacement.values(), lin.values());
    assert!(err <= 0.01, "relative difference {err}");
}

#[test]
fn nonlinear_handles_large_deformation_with_tumour() {
    let tumour = Aabb {
        min: [0.0, 0.0, 5.0],
        max: [20.0, 10.0, 20.0],
    };
    let mesh = generate_synthetic_mesh(3, 3, 3, 10.0, Some(tumour)).unwrap();
    let mats = default_materials();
    let fixed: BTreeSet<usize> = nodes_on_box_face(&mesh, BoxFace::ZMin, 1e-9).into_iter().collect();
    let top = nodes_on_box_face(&mesh, BoxFace::ZMax, 1e-9);
    let mut loads = vec![[0.0; 3]; mesh.node_count()];
    for &t in &top {
        loads[t] = [0.004, 0.0, -0.004];
    }
    let sol = nonlinear_solve_with(&mesh, &mats, &loads, &fixed, 5, NewtonOptions::default()).unwrap();
    let f_norm = (top.len() as f64 * 2.0 * 0.004f64.powi(2)).sqrt();
    assert!(sol.gradient_norm <= 1e-6 * f_norm);
    assert!(sol.displacement.max_magnitude() > 1.0, "{}", sol.displacement.max_magnitude());
    assert_eq!(sol.iterations.len(), 5);
}

fn relabel_field(u: &DisplacementField, perm: &[usize]) -> Vec<Point> {
    let mut back = vec![[0.0; 3]; u.len()];
    for (old, &new) in perm.iter().enumerate() {
        back[old] = u.values()[new];
    }
    back
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn linear_solution_is_relabeling_invariant(seed in 0u64..10_000) {
        let mesh = jittered_mesh(3, 3, 3, seed);
        let mats = default_materials();
        let (loads, fixed) = cantilever_case(&mesh, [0.01, 0.02, -0.01]);
        let k = assemble_linear_stiffness(&mesh, &mats).unwrap();
        let u = solve_linear(&k, &loads, fixed.iter().copied()).unwrap();

        let mut perm: Vec<usize> = (0..mesh.node_count()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xabc));
        let relabeled = mesh.relabeled(&perm).unwrap();
        let mut loads_p = vec![[0.0; 3]; loads.len()];
        for (old, &new) in perm.iter().enumerate() {
            loads_p[new] = loads[old];
        }
        let k_p = assemble_linear_stiffness(&relabeled, &mats).unwrap();
        let u_p = solve_linear(&k_p, &loads_p, fixed.iter().map(|&v| perm[v])).unwrap();
        prop_assert!(rel_diff(&relabel_field(&u_p, &perm), u.values()) <= 1e-8);
    }

    #[test]
    fn element_energy_gradient_matches_finite_differences(seed in 0u64..10_000, alpha in prop::sample::select(vec![2.0, 3.0, -1.0])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Material { alpha, ..Material::tumour() };
        let mut f = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                f[r][c] = if r == c { 1.0 } else { 0.0 } + rng.random_range(-0.25..0.25);
            }
        }
        let (p, _) = meshgnn::fem::neo_hookean_stress(&f, &m).unwrap();
        let scale = p.iter().flatten().fold(0.0f64, |s, x| s.max(x.abs()));
        for r in 0..3 {
            for c in 0..3 {
                let h = 1e-6;
                let (mut fp, mut fm) = (f, f);
                fp[r][c] += h;
                fm[r][c] -= h;
                let num = (meshgnn::fem::neo_hookean_energy(&fp, &m).unwrap()
                    - meshgnn::fem::neo_hookean_energy(&fm, &m).unwrap()) / (2.0 * h);
                let denom = num.abs().max(p[r][c].abs()).max(1e-8 * scale);
                prop_assert!((num - p[r][c]).abs() / denom <= 1e-5, "{} vs {}", num, p[r][c]);
            }
        }
    }
}
