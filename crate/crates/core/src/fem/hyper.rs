use nalgebra::{Matrix3, SymmetricEigen};

use super::linear::{det3, Mat3};
use super::{FemError, Material};

/// The Ogden-form stretch sum `(2μ/α²)(λ₁^α + λ₂^α + λ₃^α − 3)` evaluated on
/// the given stretches as they are.
pub fn ogden_sum(stretches: [f64; 3], mu: f64, alpha: f64) -> f64 {
    let s: f64 = stretches.iter().map(|l| l.powf(alpha)).sum();
    2.0 * mu / (alpha * alpha) * (s - 3.0)
}

/// Principal stretches of `F` (square roots of the eigenvalues of `FᵀF`) and
/// the matching right eigenvectors as the columns of `V`.
fn principal_stretches(f: &Mat3) -> ([f64; 3], Matrix3<f64>) {
    let fm = to_na(f);
    let c = fm.transpose() * fm;
    let eig = SymmetricEigen::new(c);
    let l = [0, 1, 2].map(|k| eig.eigenvalues[k].max(0.0).sqrt());
    (l, eig.eigenvectors)
}

fn to_na(f: &Mat3) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| f[r][c])
}

fn is_identity(f: &Mat3) -> bool {
    (0..3).all(|r| (0..3).all(|c| f[r][c] == if r == c { 1.0 } else { 0.0 }))
}

/// Kirchhoff principal stresses `τ_k = λ_k ∂W/∂λ_k` and the energy density,
/// both in Pa.
fn principal_response(l: [f64; 3], j: f64, mat: &Material) -> ([f64; 3], f64) {
    let mu = mat.shear_modulus();
    let kappa = mat.bulk_modulus();
    let alpha = mat.alpha;
    let scale = j.powf(-1.0 / 3.0);
    let bar = l.map(|x| (scale * x).powf(alpha));
    let s: f64 = bar.iter().sum();
    let energy = 2.0 * mu / (alpha * alpha) * (s - 3.0) + 0.5 * kappa * (j - 1.0) * (j - 1.0);
    let vol = kappa * (j - 1.0) * j;
    let tau = bar.map(|b| 2.0 * mu / alpha * (b - s / 3.0) + vol);
    (tau, energy)
}

/// Hyperelastic strain-energy density (Pa) of deformation gradient `F`.
///
/// `W = (2μ/α²)(λ̄₁^α + λ̄₂^α + λ̄₃^α − 3) + (κ/2)(J − 1)²` with `J = det F`
/// and volume-preserving stretches `λ̄ᵢ = J^(−1/3) λᵢ`. For `J = 1` the first
/// term is exactly the Ogden-form stretch sum [`ogden_sum`]; removing the
/// volume change from it keeps the reference configuration stress-free.
pub fn neo_hookean_energy(f: &Mat3, mat: &Material) -> Result<f64, FemError> {
    let j = det3(f);
    if !(j > 0.0) {
        return Err(FemError::InvertedElement { det: j });
    }
    if is_identity(f) {
        return Ok(0.0);
    }
    let (l, _) = principal_stretches(f);
    Ok(principal_response(l, j, mat).1)
}

/// First Piola-Kirchhoff stress `P = ∂W/∂F` (Pa) together with `W`.
pub fn neo_hookean_stress(f: &Mat3, mat: &Material) -> Result<(Mat3, f64), FemError> {
    let j = det3(f);
    if !(j > 0.0) {
        return Err(FemError::InvertedElement { det: j });
    }
    if is_identity(f) {
        return Ok(([[0.0; 3]; 3], 0.0));
    }
    let (l, v) = principal_stretches(f);
    let (tau, energy) = principal_response(l, j, mat);
    // P = F V diag(τ_k / λ_k²) Vᵀ
    let d = Matrix3::from_diagonal(&nalgebra::Vector3::new(
        tau[0] / (l[0] * l[0]),
        tau[1] / (l[1] * l[1]),
        tau[2] / (l[2] * l[2]),
    ));
    let p = to_na(f) * v * d * v.transpose();
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = p[(r, c)];
        }
    }
    Ok((out, energy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat() -> Material {
        Material::healthy_brain()
    }

    fn diag(a: f64, b: f64, c: f64) -> Mat3 {
        [[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]]
    }

    fn random_f(rng: &mut ChaCha8Rng, amp: f64) -> Mat3 {
        let mut f = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                f[r][c] = if r == c { 1.0 } else { 0.0 } + amp * rng.random_range(-1.0..1.0);
            }
        }
        f
    }

    #[test]
    fn identity_has_zero_energy() {
        assert_eq!(neo_hookean_energy(&diag(1.0, 1.0, 1.0), &mat()).unwrap(), 0.0);
    }

    #[test]
    fn ogden_sum_of_uniaxial_stretch() {
        let mu = 1006.7114;
        assert!((ogden_sum([2.0, 1.0, 1.0], mu, 2.0) - 1.5 * mu).abs() < 1e-12 * mu);
        assert_eq!(ogden_sum([1.0; 3], mu, 3.7), 0.0);
    }

    #[test]
    fn inverted_gradient_is_rejected() {
        assert!(matches!(
            neo_hookean_energy(&diag(1.0, 1.0, -1.0), &mat()),
            Err(FemError::InvertedElement { .. })
        ));
        assert!(neo_hookean_energy(&diag(1.0, 0.0, 1.0), &mat()).is_err());
    }

    #[test]
    fn isochoric_alpha_two_reduces_to_trace_form() {
        let m = mat();
        let mu = m.shear_modulus();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let mut f = random_f(&mut rng, 0.4);
            let j = det3(&f);
            let s = j.cbrt();
            for row in &mut f {
                for x in row.iter_mut() {
                    *x /= s;
                }
            }
            let tr: f64 = (0..3).map(|c| (0..3).map(|r| f[r][c] * f[r][c]).sum::<f64>()).sum();
            let expected = 0.5 * mu * (tr - 3.0);
            let w = neo_hookean_energy(&f, &m).unwrap();
            assert!((w - expected).abs() <= 1e-12 * expected.abs().max(mu), "{w} vs {expected}");
        }
    }

    #[test]
    fn energy_is_positive_away_from_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for alpha in [2.0, -1.5, 4.0] {
            let m = Material { alpha, ..mat() };
            for _ in 0..50 {
                let f = random_f(&mut rng, 0.2);
                assert!(neo_hookean_energy(&f, &m).unwrap() > 0.0);
            }
        }
        assert!(neo_hookean_energy(&diag(1.1, 1.0, 1.0), &mat()).unwrap() > 0.0);
    }

    #[test]
    fn stress_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for alpha in [2.0, 3.0, -2.0] {
            let m = Material { alpha, ..mat() };
            for _ in 0..10 {
                let f = random_f(&mut rng, 0.3);
                let (p, _) = neo_hookean_stress(&f, &m).unwrap();
                let h = 1e-6;
                for r in 0..3 {
                    for c in 0..3 {
                        let mut fp = f;
                        let mut fm = f;
                        fp[r][c] += h;
                        fm[r][c] -= h;
                        let num = (neo_hookean_energy(&fp, &m).unwrap() - neo_hookean_energy(&fm, &m).unwrap())
                            / (2.0 * h);
                        let denom = num.abs().max(p[r][c].abs()).max(1e-8);
                        assert!((num - p[r][c]).abs() / denom < 1e-5, "{num} vs {}", p[r][c]);
                    }
                }
            }
        }
    }
}
