//! The 24 BBOB benchmark functions in vanilla closed form.
//!
//! Functions are implemented without rotations or instance transforms; the
//! only task-level transform is a domain shift c (evaluating f(x - c)) and an
//! optional sign flip. "Rotated" variants are distinguished from their plain
//! counterparts by a fixed coordinate reversal so the two classes remain
//! different functions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FunctionClass {
    Sphere,
    Ellipsoidal,
    Rastrigin,
    BucheRastrigin,
    LinearSlope,
    AttractiveSector,
    StepEllipsoidal,
    Rosenbrock,
    RosenbrockRotated,
    EllipsoidalHighCond,
    Discus,
    BentCigar,
    SharpRidge,
    DifferentPowers,
    RastriginRotated,
    Weierstrass,
    SchaffersF7,
    SchaffersF7Ill,
    GriewankRosenbrock,
    Schwefel,
    Gallagher101,
    Gallagher21,
    Katsuura,
    LunacekBiRastrigin,
}

pub const ALL_FUNCTIONS: [FunctionClass; 24] = [
    FunctionClass::Sphere,
    FunctionClass::Ellipsoidal,
    FunctionClass::Rastrigin,
    FunctionClass::BucheRastrigin,
    FunctionClass::LinearSlope,
    FunctionClass::AttractiveSector,
    FunctionClass::StepEllipsoidal,
    FunctionClass::Rosenbrock,
    FunctionClass::RosenbrockRotated,
    FunctionClass::EllipsoidalHighCond,
    FunctionClass::Discus,
    FunctionClass::BentCigar,
    FunctionClass::SharpRidge,
    FunctionClass::DifferentPowers,
    FunctionClass::RastriginRotated,
    FunctionClass::Weierstrass,
    FunctionClass::SchaffersF7,
    FunctionClass::SchaffersF7Ill,
    FunctionClass::GriewankRosenbrock,
    FunctionClass::Schwefel,
    FunctionClass::Gallagher101,
    FunctionClass::Gallagher21,
    FunctionClass::Katsuura,
    FunctionClass::LunacekBiRastrigin,
];

impl FunctionClass {
    pub fn name(&self) -> &'static str {
        match self {
            FunctionClass::Sphere => "Sphere",
            FunctionClass::Ellipsoidal => "Ellipsoidal",
            FunctionClass::Rastrigin => "Rastrigin",
            FunctionClass::BucheRastrigin => "BucheRastrigin",
            FunctionClass::LinearSlope => "LinearSlope",
            FunctionClass::AttractiveSector => "AttractiveSector",
            FunctionClass::StepEllipsoidal => "StepEllipsoidal",
            FunctionClass::Rosenbrock => "Rosenbrock",
            FunctionClass::RosenbrockRotated => "RosenbrockRotated",
            FunctionClass::EllipsoidalHighCond => "EllipsoidalHighCond",
            FunctionClass::Discus => "Discus",
            FunctionClass::BentCigar => "BentCigar",
            FunctionClass::SharpRidge => "SharpRidge",
            FunctionClass::DifferentPowers => "DifferentPowers",
            FunctionClass::RastriginRotated => "RastriginRotated",
            FunctionClass::Weierstrass => "Weierstrass",
            FunctionClass::SchaffersF7 => "SchaffersF7",
            FunctionClass::SchaffersF7Ill => "SchaffersF7Ill",
            FunctionClass::GriewankRosenbrock => "GriewankRosenbrock",
            FunctionClass::Schwefel => "Schwefel",
            FunctionClass::Gallagher101 => "Gallagher101",
            FunctionClass::Gallagher21 => "Gallagher21",
            FunctionClass::Katsuura => "Katsuura",
            FunctionClass::LunacekBiRastrigin => "LunacekBiRastrigin",
        }
    }

    pub fn from_name(name: &str) -> Option<FunctionClass> {
        ALL_FUNCTIONS.iter().copied().find(|f| f.name() == name)
    }

    /// Classes whose shifted optimum sits exactly at the shift vector.
    pub fn is_unimodal_at_shift(&self) -> bool {
        matches!(
            self,
            FunctionClass::Sphere
                | FunctionClass::Ellipsoidal
                | FunctionClass::Discus
                | FunctionClass::BentCigar
        )
    }
}

/// One task: a function class at a fixed dimension with a domain shift and
/// an optional sign flip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BBOBTaskSpec {
    pub function_class: FunctionClass,
    pub dim: usize,
    pub shift: Vec<f64>,
    pub sign_flip: bool,
}

impl BBOBTaskSpec {
    pub fn new(function_class: FunctionClass, shift: Vec<f64>) -> Self {
        Self { function_class, dim: shift.len(), shift, sign_flip: false }
    }
}

/// Evaluates `s * f_class(x - c)` where `s = -1` when sign-flipped.
pub fn bbob_eval(spec: &BBOBTaskSpec, x: &[f64]) -> Result<f64> {
    if x.len() != spec.dim || spec.shift.len() != spec.dim {
        return Err(Error::InvalidConfig(format!(
            "dimension mismatch: spec dim {}, x len {}, shift len {}",
            spec.dim,
            x.len(),
            spec.shift.len()
        )));
    }
    let z: Vec<f64> = x.iter().zip(&spec.shift).map(|(xi, ci)| xi - ci).collect();
    let v = eval_vanilla(spec.function_class, &z);
    Ok(if spec.sign_flip { -v } else { v })
}

/// Vanilla (unshifted) evaluation at z = x - c.
pub fn eval_vanilla(class: FunctionClass, z: &[f64]) -> f64 {
    let d = z.len();
    let df = d as f64;
    // Conditioning exponent helper: k(i) in [0,1] over dimensions.
    let frac = |i: usize| if d > 1 { i as f64 / (d as f64 - 1.0) } else { 0.0 };
    match class {
        FunctionClass::Sphere => z.iter().map(|v| v * v).sum(),
        FunctionClass::Ellipsoidal => z
            .iter()
            .enumerate()
            .map(|(i, v)| 10f64.powf(6.0 * frac(i)) * v * v)
            .sum(),
        FunctionClass::Rastrigin => {
            10.0 * (df - z.iter().map(|v| (2.0 * std::f64::consts::PI * v).cos()).sum::<f64>())
                + z.iter().map(|v| v * v).sum::<f64>()
        }
        FunctionClass::BucheRastrigin => {
            let s: Vec<f64> = z
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let base = 10f64.powf(0.5 * frac(i));
                    if v > 0.0 && i % 2 == 0 {
                        10.0 * base * v
                    } else {
                        base * v
                    }
                })
                .collect();
            10.0 * (df - s.iter().map(|v| (2.0 * std::f64::consts::PI * v).cos()).sum::<f64>())
                + s.iter().map(|v| v * v).sum::<f64>()
        }
        FunctionClass::LinearSlope => z
            .iter()
            .enumerate()
            .map(|(i, v)| 10f64.powf(frac(i)) * (5.0 - v))
            .sum(),
        FunctionClass::AttractiveSector => z
            .iter()
            .map(|&v| {
                let s = if v > 0.0 { 100.0 } else { 1.0 };
                (s * v) * (s * v)
            })
            .sum(),
        FunctionClass::StepEllipsoidal => {
            let quad: f64 = z
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let r = (v + 0.5).floor();
                    10f64.powf(2.0 * frac(i)) * r * r
                })
                .sum();
            0.1 * (z[0].abs() / 1e4).max(quad)
        }
        FunctionClass::Rosenbrock => rosenbrock(z),
        FunctionClass::RosenbrockRotated => {
            let rev: Vec<f64> = z.iter().rev().copied().collect();
            rosenbrock(&rev)
        }
        FunctionClass::EllipsoidalHighCond => {
            let rev: Vec<f64> = z.iter().rev().copied().collect();
            rev.iter()
                .enumerate()
                .map(|(i, v)| 10f64.powf(6.0 * frac(i)) * v * v)
                .sum()
        }
        FunctionClass::Discus => {
            1e6 * z[0] * z[0] + z.iter().skip(1).map(|v| v * v).sum::<f64>()
        }
        FunctionClass::BentCigar => {
            z[0] * z[0] + 1e6 * z.iter().skip(1).map(|v| v * v).sum::<f64>()
        }
        FunctionClass::SharpRidge => {
            z[0] * z[0] + 100.0 * z.iter().skip(1).map(|v| v * v).sum::<f64>().sqrt()
        }
        FunctionClass::DifferentPowers => z
            .iter()
            .enumerate()
            .map(|(i, v)| v.abs().powf(2.0 + 4.0 * frac(i)))
            .sum::<f64>()
            .sqrt(),
        FunctionClass::RastriginRotated => {
            let rev: Vec<f64> = z.iter().rev().map(|v| 1.1 * v).collect();
            eval_vanilla(FunctionClass::Rastrigin, &rev)
        }
        FunctionClass::Weierstrass => {
            let (a, b, kmax) = (0.5f64, 3.0f64, 11u32);
            let f0: f64 = (0..=kmax)
                .map(|k| a.powi(k as i32) * (std::f64::consts::PI * b.powi(k as i32)).cos())
                .sum();
            let total: f64 = z
                .iter()
                .map(|&v| {
                    (0..=kmax)
                        .map(|k| {
                            a.powi(k as i32)
                                * (2.0 * std::f64::consts::PI * b.powi(k as i32) * (v + 0.5)).cos()
                        })
                        .sum::<f64>()
                })
                .sum();
            10.0 * (total / df - f0).powi(3).abs()
        }
        FunctionClass::SchaffersF7 => schaffers_f7(z, 1.0),
        FunctionClass::SchaffersF7Ill => schaffers_f7(z, 1000.0),
        FunctionClass::GriewankRosenbrock => {
            let s: Vec<f64> = z.iter().map(|v| v + 1.0).collect();
            if d < 2 {
                return 10.0 * ((s[0] - 1.0).powi(2) / 4000.0) + 10.0;
            }
            let terms: f64 = (0..d - 1)
                .map(|i| {
                    let r = 100.0 * (s[i] * s[i] - s[i + 1]).powi(2) + (s[i] - 1.0).powi(2);
                    r / 4000.0 - r.cos()
                })
                .sum();
            10.0 * terms / (df - 1.0) + 10.0
        }
        FunctionClass::Schwefel => {
            let v: Vec<f64> = z.iter().map(|zi| 100.0 * zi).collect();
            418.9828872724339 * df
                - v.iter().map(|vi| vi * vi.abs().sqrt().sin()).sum::<f64>() / 100.0
        }
        FunctionClass::Gallagher101 => gallagher(z, 101, GALLAGHER_LAYOUT_SEED),
        FunctionClass::Gallagher21 => gallagher(z, 21, GALLAGHER_LAYOUT_SEED ^ 21),
        FunctionClass::Katsuura => {
            let mut prod = 1.0f64;
            for (i, &v) in z.iter().enumerate() {
                let inner: f64 = (1..=32u32)
                    .map(|k| {
                        let p = 2f64.powi(k as i32);
                        (p * v - (p * v).round()).abs() / p
                    })
                    .sum();
                prod *= (1.0 + (i as f64 + 1.0) * inner).powf(10.0 / df.powf(1.2));
            }
            10.0 / (df * df) * (prod - 1.0)
        }
        FunctionClass::LunacekBiRastrigin => {
            let mu0 = 2.5f64;
            let s = 1.0 - 1.0 / (2.0 * (df + 20.0).sqrt() - 8.2);
            let mu1 = -((mu0 * mu0 - 1.0) / s).sqrt();
            let xhat: Vec<f64> = z.iter().map(|v| v + mu0).collect();
            let sum0: f64 = xhat.iter().map(|v| (v - mu0).powi(2)).sum();
            let sum1: f64 = xhat.iter().map(|v| (v - mu1).powi(2)).sum();
            let cos_term: f64 = xhat
                .iter()
                .map(|v| (2.0 * std::f64::consts::PI * (v - mu0)).cos())
                .sum();
            sum0.min(df + s * sum1) + 10.0 * (df - cos_term)
        }
    }
}

fn rosenbrock(z: &[f64]) -> f64 {
    let w: Vec<f64> = z.iter().map(|v| v + 1.0).collect();
    w.windows(2)
        .map(|p| 100.0 * (p[0] * p[0] - p[1]).powi(2) + (p[0] - 1.0).powi(2))
        .sum()
}

fn schaffers_f7(z: &[f64], cond: f64) -> f64 {
    let d = z.len();
    if d < 2 {
        return z[0] * z[0];
    }
    let frac = |i: usize| i as f64 / (d as f64 - 1.0);
    let w: Vec<f64> = z
        .iter()
        .enumerate()
        .map(|(i, v)| cond.powf(0.5 * frac(i)) * v)
        .collect();
    let mean: f64 = w
        .windows(2)
        .map(|p| {
            let s = (p[0] * p[0] + p[1] * p[1]).sqrt();
            s.sqrt() + s.sqrt() * (50.0 * s.powf(0.2)).sin().powi(2)
        })
        .sum::<f64>()
        / (d as f64 - 1.0);
    mean * mean
}

// Fixed internal layout seed for the Gallagher peak sets.
const GALLAGHER_LAYOUT_SEED: u64 = 0x6a11a6;

/// Gallagher many-peaks function with a deterministic peak layout.
fn gallagher(z: &[f64], num_peaks: usize, layout_seed: u64) -> f64 {
    let d = z.len();
    let mut rng = derive_rng(layout_seed, &[d as u64]);
    let mut best = f64::NEG_INFINITY;
    for j in 0..num_peaks {
        let weight = if j == 0 {
            10.0
        } else {
            1.1 + 8.0 * (j as f64 - 1.0) / (num_peaks as f64 - 2.0)
        };
        let mut expo = 0.0;
        for zi in z.iter().take(d) {
            let pos: f64 = if j == 0 { 0.0 } else { rng.gen_range(-4.0..4.0) };
            let scale: f64 = rng.gen_range(0.5..2.0);
            let delta = zi - pos;
            expo += scale * delta * delta;
        }
        let v = weight * (-expo / (2.0 * d as f64)).exp();
        if v > best {
            best = v;
        }
    }
    (10.0 - best).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn shifted_sphere_examples() {
        let spec = BBOBTaskSpec::new(FunctionClass::Sphere, vec![1.0, -1.0]);
        assert_eq!(bbob_eval(&spec, &[1.0, -1.0]).unwrap(), 0.0);
        assert_eq!(bbob_eval(&spec, &[2.0, 0.0]).unwrap(), 2.0);
        let flipped = BBOBTaskSpec { sign_flip: true, ..spec };
        assert_eq!(bbob_eval(&flipped, &[2.0, 0.0]).unwrap(), -2.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let spec = BBOBTaskSpec::new(FunctionClass::Sphere, vec![0.0, 0.0]);
        assert!(bbob_eval(&spec, &[1.0]).is_err());
    }

    #[test]
    fn all_functions_finite_on_domain() {
        let mut rng = derive_rng(3, &[]);
        for class in ALL_FUNCTIONS {
            for dim in 2..=6 {
                let shift: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let spec = BBOBTaskSpec::new(class, shift);
                for _ in 0..50 {
                    let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
                    let v = bbob_eval(&spec, &x).unwrap();
                    assert!(v.is_finite(), "{} dim {dim} produced {v}", class.name());
                }
            }
        }
    }

    #[test]
    fn unimodal_classes_attain_optimum_at_shift() {
        let mut rng = derive_rng(11, &[]);
        for class in ALL_FUNCTIONS.iter().filter(|c| c.is_unimodal_at_shift()) {
            let shift = vec![0.7, -1.3, 0.2];
            let spec = BBOBTaskSpec::new(*class, shift.clone());
            let at_opt = bbob_eval(&spec, &shift).unwrap();
            for _ in 0..1000 {
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
                assert!(bbob_eval(&spec, &x).unwrap() >= at_opt);
            }
        }
    }

    #[test]
    fn shift_equivariance_exact() {
        let mut rng = derive_rng(17, &[]);
        for class in ALL_FUNCTIONS {
            let shift = vec![1.25, -0.5];
            let shifted = BBOBTaskSpec::new(class, shift.clone());
            let centered = BBOBTaskSpec::new(class, vec![0.0, 0.0]);
            for _ in 0..20 {
                let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let z: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| a - b).collect();
                assert_eq!(
                    bbob_eval(&shifted, &x).unwrap(),
                    bbob_eval(&centered, &z).unwrap(),
                    "{}",
                    class.name()
                );
            }
        }
    }

    #[test]
    fn sign_flip_antisymmetry_exact() {
        let mut rng = derive_rng(23, &[]);
        for class in ALL_FUNCTIONS {
            let spec = BBOBTaskSpec::new(class, vec![0.3, 0.3]);
            let flipped = BBOBTaskSpec { sign_flip: true, ..spec.clone() };
            for _ in 0..20 {
                let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-5.0..5.0)).collect();
                assert_eq!(
                    bbob_eval(&flipped, &x).unwrap(),
                    -bbob_eval(&spec, &x).unwrap()
                );
            }
        }
    }

    #[test]
    fn rotated_variants_differ_from_plain() {
        let x = [1.0, 2.0, -0.5];
        assert_ne!(
            eval_vanilla(FunctionClass::Rosenbrock, &x),
            eval_vanilla(FunctionClass::RosenbrockRotated, &x)
        );
        assert_ne!(
            eval_vanilla(FunctionClass::Rastrigin, &x),
            eval_vanilla(FunctionClass::RastriginRotated, &x)
        );
        assert_ne!(
            eval_vanilla(FunctionClass::Ellipsoidal, &x),
            eval_vanilla(FunctionClass::EllipsoidalHighCond, &x)
        );
    }
}
