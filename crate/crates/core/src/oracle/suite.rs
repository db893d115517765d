//! Synthetic test problems with known ground truth and deterministic,
//! smooth injected inexactness.
//!
//! An inexact evaluation is the exact value plus `scale · g · η(x)` where `η`
//! is a product of sines, so the perturbed functions stay smooth in `x` and
//! every bound below is analytic.

use nalgebra::{DMatrix, DVector};

use crate::diagnostics::{Kappas, TheoreticalConstants};
use crate::oracle::{InexactProblem, OracleBounds};
use crate::types::{AlgorithmParams, BoxPolytope, DecisionPoint, PrecisionLevel, ProblemConstants, Provenance};

/// Identifiers accepted by [`make_problem`].
pub const SUITE_IDS: [&str; 5] = ["p1", "p2", "p3", "p4", "p1-pdp"];

/// Upper bound on the objective noise assumed while deriving the constants
/// that fix the objective noise scale itself.
const F_NOISE_CAP: f64 = 1e-3;
const C_G: f64 = 1.0;
const GAMMA: f64 = 0.5;
const N_PDP: usize = 2;

#[derive(Debug, Clone)]
enum Objective {
    /// `Σ q_i (x_i − c_i)²`
    Quadratic { q: Vec<f64>, c: Vec<f64> },
    /// `(1 − x₁)² + b (x₂ − x₁²)²`
    Rosenbrock { b: f64 },
    /// `‖x‖²`
    SumSquares,
}

#[derive(Debug, Clone)]
enum Constraint {
    /// `aᵀx − b`
    Linear { a: Vec<f64>, b: f64 },
    /// `‖x‖² − 1`
    Circle,
    /// `x₁² + 1`, which never vanishes.
    ShiftedSquare,
}

/// `offset + amplitude · Π sin(ω x_i + φ_i)`
#[derive(Debug, Clone)]
struct NoiseField {
    offset: f64,
    amplitude: f64,
    omega: f64,
    phase: Vec<f64>,
}

impl NoiseField {
    fn new(offset: f64, amplitude: f64, omega: f64, n: usize, seed: f64) -> Self {
        let phase = (0..n).map(|i| seed + 0.7 * i as f64).collect();
        NoiseField {
            offset,
            amplitude,
            omega,
            phase,
        }
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let prod: f64 = x
            .iter()
            .zip(&self.phase)
            .map(|(xi, p)| (self.omega * xi + p).sin())
            .product();
        self.offset + self.amplitude * prod
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = x.len();
        let s: Vec<f64> = (0..n).map(|i| (self.omega * x[i] + self.phase[i]).sin()).collect();
        let c: Vec<f64> = (0..n).map(|i| (self.omega * x[i] + self.phase[i]).cos()).collect();
        DVector::from_fn(n, |i, _| {
            let others: f64 = (0..n).filter(|&j| j != i).map(|j| s[j]).product();
            self.amplitude * self.omega * c[i] * others
        })
    }

    fn max_abs(&self) -> f64 {
        self.offset.abs() + self.amplitude
    }

    fn grad_bound(&self) -> f64 {
        self.amplitude * self.omega * (self.phase.len() as f64).sqrt()
    }

    fn hess_bound(&self) -> f64 {
        self.amplitude * self.omega * self.omega * self.phase.len() as f64
    }
}

/// A closed-form problem from the built-in suite.
#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    id: String,
    objective: Objective,
    constraint: Constraint,
    domain: BoxPolytope,
    x0: DecisionPoint,
    y0: PrecisionLevel,
    noise_f: NoiseField,
    noise_h: Vec<NoiseField>,
    noise_scale_f: f64,
    noise_scale_h: f64,
    with_pdp: bool,
    constants: ProblemConstants,
}

fn max_abs_on(lo: f64, hi: f64, shift: f64) -> f64 {
    (lo - shift).abs().max((hi - shift).abs())
}

impl SyntheticProblem {
    #[allow(clippy::too_many_arguments)]
    fn build(
        id: &str,
        objective: Objective,
        constraint: Constraint,
        domain: BoxPolytope,
        x0: Vec<f64>,
        y0: PrecisionLevel,
        noise_scale_h: f64,
        with_pdp: bool,
    ) -> Self {
        let n = domain.dim();
        let m = 1;
        let noise_f = NoiseField::new(0.0, 1.0, 1.3, n, 0.3);
        // Constraint noise keeps a fixed sign so restored points see a
        // perturbation comparable to the precision level itself.
        let noise_h = (0..m)
            .map(|j| NoiseField::new(0.8, 0.2, 0.7, n, 1.1 + 0.37 * j as f64))
            .collect();
        let mut p = SyntheticProblem {
            id: id.to_string(),
            objective,
            constraint,
            domain,
            x0: DecisionPoint::from_slice(&x0),
            y0,
            noise_f,
            noise_h,
            noise_scale_f: 0.0,
            noise_scale_h,
            with_pdp,
            constants: ProblemConstants {
                l_f: 0.0,
                l_h: 0.0,
                l_c: 0.0,
                c_f: 0.0,
                c_h: 0.0,
                c_g: C_G,
                provenance: Provenance::Analytic,
            },
        };
        p.constants = p.derive_constants(F_NOISE_CAP);
        if !y0.is_exact() {
            let tc = TheoreticalConstants::compute(
                &p.constants,
                &AlgorithmParams::default(),
                &Kappas::default(),
                &p.bounds_for(0.0),
            )
            .expect("suite constants are valid");
            p.noise_scale_f = tc.beta_bar.expect("bounds supplied") / 2.0;
            assert!(p.noise_scale_f * C_G <= F_NOISE_CAP);
        }
        p
    }

    fn bounds_for(&self, noise_scale_f: f64) -> OracleBounds {
        OracleBounds {
            beta: 2.0 * noise_scale_f,
            gamma: GAMMA,
            k_r: 0,
            n_pdp: if self.with_pdp { N_PDP } else { 0 },
        }
    }

    pub fn noise_scale_f(&self) -> f64 {
        self.noise_scale_f
    }

    pub fn noise_scale_h(&self) -> f64 {
        self.noise_scale_h
    }

    /// Bounds of the exact functions over the box plus the worst-case noise
    /// contribution at `g ≤ C_g`.
    fn derive_constants(&self, f_noise: f64) -> ProblemConstants {
        let lo = self.domain.lower();
        let hi = self.domain.upper();
        let (f_max, gradf_max, hessf_max) = match &self.objective {
            Objective::Quadratic { q, c } => {
                let d: Vec<f64> = (0..q.len()).map(|i| max_abs_on(lo[i], hi[i], c[i])).collect();
                let f: f64 = q.iter().zip(&d).map(|(qi, di)| qi * di * di).sum();
                let g = q
                    .iter()
                    .zip(&d)
                    .map(|(qi, di)| (2.0 * qi * di).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let hs = 2.0 * q.iter().cloned().fold(0.0, f64::max);
                (f, g, hs)
            }
            Objective::Rosenbrock { b } => {
                let a1 = max_abs_on(lo[0], hi[0], 0.0);
                let a2 = max_abs_on(lo[1], hi[1], 0.0);
                let r = a2 + a1 * a1;
                let f = (1.0 + a1).powi(2) + b * r * r;
                let g1 = 2.0 * (1.0 + a1) + 4.0 * b * a1 * r;
                let g2 = 2.0 * b * r;
                let h11 = 2.0 + 4.0 * b * a2 + 12.0 * b * a1 * a1;
                let h12 = 4.0 * b * a1;
                let h22 = 2.0 * b;
                let hs = (h11 * h11 + 2.0 * h12 * h12 + h22 * h22).sqrt();
                (f, g1.hypot(g2), hs)
            }
            Objective::SumSquares => {
                let r2: f64 = (0..lo.len()).map(|i| max_abs_on(lo[i], hi[i], 0.0).powi(2)).sum();
                (r2, 2.0 * r2.sqrt(), 2.0)
            }
        };
        let (h_max, gradh_max, hessh_max) = match &self.constraint {
            Constraint::Linear { a, b } => {
                let top: f64 = (0..a.len()).map(|i| (a[i] * lo[i]).max(a[i] * hi[i])).sum();
                let bot: f64 = (0..a.len()).map(|i| (a[i] * lo[i]).min(a[i] * hi[i])).sum();
                let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                ((top - b).abs().max((bot - b).abs()), norm, 0.0)
            }
            Constraint::Circle => {
                let r2: f64 = (0..lo.len()).map(|i| max_abs_on(lo[i], hi[i], 0.0).powi(2)).sum();
                ((r2 - 1.0).abs().max(1.0), 2.0 * r2.sqrt(), 2.0)
            }
            Constraint::ShiftedSquare => {
                let a1 = max_abs_on(lo[0], hi[0], 0.0);
                (a1 * a1 + 1.0, 2.0 * a1, 2.0)
            }
        };
        let nf = &self.noise_f;
        let sf = f_noise;
        let c_f = f_max + sf * nf.max_abs();
        let lip_f = gradf_max + sf * nf.grad_bound();
        let lip_gradf = hessf_max + sf * nf.hess_bound();
        // The m components are each scaled by 1/√m, see `h`.
        let sh = self.noise_scale_h * C_G;
        let eta = &self.noise_h[0];
        let c_h = (h_max + sh * eta.max_abs()).max(gradh_max + sh * eta.grad_bound());
        let l_h = (gradh_max + sh * eta.grad_bound()).max(hessh_max + sh * eta.hess_bound());
        ProblemConstants {
            l_f: lip_f.max(lip_gradf),
            l_h,
            l_c: 2.0 * c_h * l_h,
            c_f,
            c_h,
            c_g: C_G,
            provenance: Provenance::Analytic,
        }
    }

    fn objective_value(&self, x: &DVector<f64>) -> f64 {
        match &self.objective {
            Objective::Quadratic { q, c } => (0..q.len()).map(|i| q[i] * (x[i] - c[i]).powi(2)).sum(),
            Objective::Rosenbrock { b } => (1.0 - x[0]).powi(2) + b * (x[1] - x[0] * x[0]).powi(2),
            Objective::SumSquares => x.norm_squared(),
        }
    }

    fn objective_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.objective {
            Objective::Quadratic { q, c } => DVector::from_fn(q.len(), |i, _| 2.0 * q[i] * (x[i] - c[i])),
            Objective::Rosenbrock { b } => {
                let r = x[1] - x[0] * x[0];
                DVector::from_vec(vec![-2.0 * (1.0 - x[0]) - 4.0 * b * x[0] * r, 2.0 * b * r])
            }
            Objective::SumSquares => 2.0 * x,
        }
    }

    fn constraint_value(&self, x: &DVector<f64>) -> DVector<f64> {
        let v = match &self.constraint {
            Constraint::Linear { a, b } => (0..a.len()).map(|i| a[i] * x[i]).sum::<f64>() - b,
            Constraint::Circle => x.norm_squared() - 1.0,
            Constraint::ShiftedSquare => x[0] * x[0] + 1.0,
        };
        DVector::from_element(1, v)
    }

    fn constraint_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = x.len();
        let col = match &self.constraint {
            Constraint::Linear { a, .. } => DVector::from_column_slice(a),
            Constraint::Circle => 2.0 * x,
            Constraint::ShiftedSquare => DVector::from_fn(n, |i, _| if i == 0 { 2.0 * x[0] } else { 0.0 }),
        };
        DMatrix::from_columns(&[col])
    }

    fn h_weight(&self) -> f64 {
        self.noise_scale_h / (self.noise_h.len() as f64).sqrt()
    }
}

impl InexactProblem for SyntheticProblem {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn num_constraints(&self) -> usize {
        self.noise_h.len()
    }

    fn domain(&self) -> &BoxPolytope {
        &self.domain
    }

    fn start(&self) -> (DecisionPoint, PrecisionLevel) {
        (self.x0.clone(), self.y0)
    }

    fn f(&self, x: &DVector<f64>, y: &PrecisionLevel) -> f64 {
        let exact = self.objective_value(x);
        if y.gf == 0.0 {
            return exact;
        }
        exact + self.noise_scale_f * y.gf * self.noise_f.value(x)
    }

    fn grad_f(&self, x: &DVector<f64>, y: &PrecisionLevel) -> DVector<f64> {
        let exact = self.objective_gradient(x);
        if y.gf == 0.0 {
            return exact;
        }
        exact + self.noise_scale_f * y.gf * self.noise_f.gradient(x)
    }

    fn h(&self, x: &DVector<f64>, y: &PrecisionLevel) -> DVector<f64> {
        let exact = self.constraint_value(x);
        if y.gh == 0.0 {
            return exact;
        }
        let w = self.h_weight() * y.gh;
        DVector::from_fn(exact.len(), |j, _| exact[j] + w * self.noise_h[j].value(x))
    }

    fn grad_h(&self, x: &DVector<f64>, y: &PrecisionLevel) -> DMatrix<f64> {
        let mut jac = self.constraint_jacobian(x);
        if y.gh == 0.0 {
            return jac;
        }
        let w = self.h_weight() * y.gh;
        for (j, field) in self.noise_h.iter().enumerate() {
            let mut col = jac.column_mut(j);
            col += w * field.gradient(x);
        }
        jac
    }

    fn constants(&self) -> ProblemConstants {
        self.constants.clone()
    }

    fn exact_f(&self, x: &DVector<f64>) -> Option<f64> {
        Some(self.objective_value(x))
    }

    fn exact_h(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        Some(self.constraint_value(x))
    }

    /// Projects onto the exact constraint hyperplane and halves the precision.
    fn pdp(&self, x: &DecisionPoint, y: &PrecisionLevel) -> Option<(DecisionPoint, PrecisionLevel)> {
        if !self.with_pdp {
            return None;
        }
        let Constraint::Linear { a, b } = &self.constraint else {
            return None;
        };
        let a = DVector::from_column_slice(a);
        let shift = (b - a.dot(x)) / a.norm_squared();
        let z = self.domain.clamp(&(x.as_vector() + shift * &a));
        let y_r = PrecisionLevel {
            gf: 0.5 * y.gf,
            gh: 0.5 * y.gh,
        };
        Some((DecisionPoint::new(z), y_r))
    }

    fn oracle_bounds(&self) -> Option<OracleBounds> {
        Some(self.bounds_for(self.noise_scale_f))
    }
}

fn p1_like(id: &str, with_pdp: bool) -> SyntheticProblem {
    SyntheticProblem::build(
        id,
        Objective::Quadratic {
            q: vec![1.0, 1.5, 2.0, 2.5, 3.0],
            c: vec![1.0, 2.0, 3.0, 4.0, 5.0],
        },
        Constraint::Linear {
            a: vec![1.0; 5],
            b: 5.0,
        },
        BoxPolytope::cube(5, -10.0, 10.0).expect("valid box"),
        vec![0.0; 5],
        PrecisionLevel { gf: 0.25, gh: 0.5 },
        2.0,
        with_pdp,
    )
}

/// Builds one suite problem by identifier.
pub fn make_problem(id: &str) -> Option<SyntheticProblem> {
    let p = match id {
        "p1" => p1_like("p1", false),
        "p1-pdp" => p1_like("p1-pdp", true),
        "p2" => SyntheticProblem::build(
            "p2",
            Objective::Rosenbrock { b: 10.0 },
            Constraint::Circle,
            BoxPolytope::cube(2, -2.0, 2.0).expect("valid box"),
            vec![-1.2, 1.0],
            PrecisionLevel { gf: 0.25, gh: 0.5 },
            2.0,
            false,
        ),
        "p3" => SyntheticProblem::build(
            "p3",
            Objective::SumSquares,
            Constraint::ShiftedSquare,
            BoxPolytope::cube(2, -1.0, 1.0).expect("valid box"),
            vec![0.8, 0.3],
            PrecisionLevel::EXACT,
            0.0,
            false,
        ),
        "p4" => {
            let q = vec![1.0, 1.5, 2.0, 2.5, 3.0];
            let c = q.iter().map(|v| 1.0 / v).collect();
            SyntheticProblem::build(
                "p4",
                Objective::Quadratic { q, c },
                Constraint::Linear {
                    a: vec![1.0; 5],
                    b: 0.0,
                },
                BoxPolytope::cube(5, -10.0, 10.0).expect("valid box"),
                vec![0.0; 5],
                PrecisionLevel::EXACT,
                0.0,
                false,
            )
        }
        _ => return None,
    };
    Some(p)
}

/// All built-in problems, in [`SUITE_IDS`] order.
pub fn make_suite() -> Vec<SyntheticProblem> {
    SUITE_IDS
        .iter()
        .map(|id| make_problem(id).expect("suite ids are valid"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(p: &SyntheticProblem, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let d = p.domain();
        DVector::from_fn(p.dim(), |i, _| rng.gen_range(d.lower()[i]..=d.upper()[i]))
    }

    #[test]
    fn suite_has_the_expected_members() {
        let suite = make_suite();
        let ids: Vec<&str> = suite.iter().map(|p| p.id()).collect();
        assert_eq!(ids, SUITE_IDS);
        assert!(make_problem("p9").is_none());
        for p in &suite {
            p.constants().validate().unwrap();
            assert!(p.domain().contains(p.start().0.as_vector()));
        }
    }

    #[test]
    fn p3_is_infeasible_everywhere() {
        let p = make_problem("p3").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x = random_point(&p, &mut rng);
            assert!(p.exact_h(&x).unwrap()[0] >= 1.0);
        }
    }

    #[test]
    fn p4_start_is_feasible_and_exact() {
        let p = make_problem("p4").unwrap();
        let (x0, y0) = p.start();
        assert_eq!(p.h(&x0, &y0).norm() + y0.g(), 0.0);
    }

    #[test]
    fn noise_is_bounded_by_scale_times_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in make_suite() {
            for _ in 0..100 {
                let x = random_point(&p, &mut rng);
                let y = PrecisionLevel {
                    gf: rng.gen_range(0.0..1.0),
                    gh: rng.gen_range(0.0..1.0),
                };
                let df = (p.f(&x, &y) - p.exact_f(&x).unwrap()).abs();
                assert!(df <= p.noise_scale_f() * y.gf * (1.0 + 1e-12) + 1e-300);
                let dh = (p.h(&x, &y) - p.exact_h(&x).unwrap()).norm();
                assert!(dh <= p.noise_scale_h() * y.gh * (1.0 + 1e-12) + 1e-15);
            }
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let step = 1e-5;
        for p in make_suite() {
            for _ in 0..20 {
                // Stay a step away from the faces.
                let x = random_point(&p, &mut rng) * 0.99;
                let y = PrecisionLevel { gf: 0.3, gh: 0.7 };
                let g = p.grad_f(&x, &y);
                let jac = p.grad_h(&x, &y);
                for i in 0..p.dim() {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += step;
                    xm[i] -= step;
                    let fd = (p.f(&xp, &y) - p.f(&xm, &y)) / (2.0 * step);
                    assert!((fd - g[i]).abs() <= 1e-6, "{} df/dx{i}", p.id());
                    let hd = (p.h(&xp, &y)[0] - p.h(&xm, &y)[0]) / (2.0 * step);
                    assert!((hd - jac[(i, 0)]).abs() <= 1e-6, "{} dh/dx{i}", p.id());
                }
            }
        }
    }

    #[test]
    fn objective_noise_scale_is_half_beta_bar() {
        let p = make_problem("p1").unwrap();
        assert!(p.noise_scale_f() > 0.0);
        assert!(p.noise_scale_f() <= F_NOISE_CAP);
        assert_eq!(p.oracle_bounds().unwrap().beta, 2.0 * p.noise_scale_f());
        assert_eq!(make_problem("p3").unwrap().noise_scale_f(), 0.0);
    }

    #[test]
    fn pdp_lands_on_the_hyperplane() {
        let p = make_problem("p1-pdp").unwrap();
        let (x0, y0) = p.start();
        let (xr, yr) = p.pdp(&x0, &y0).unwrap();
        assert!(p.exact_h(&xr).unwrap()[0].abs() < 1e-12);
        assert_eq!(yr, PrecisionLevel { gf: 0.125, gh: 0.25 });
        assert!(make_problem("p1").unwrap().pdp(&x0, &y0).is_none());
    }
}
