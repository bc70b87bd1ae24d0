//! Builds the polynomial training program for the newsvendor family: the
//! empirical regularized cost of kernel-surrogate decisions at affine
//! hypothesis outputs, with positive parts lifted to complementarity
//! equalities and the simplex membership system appended. The program is
//! exported for external polynomial solvers, never solved here.

use crate::error::{Error, Result};
use crate::problems::{CostModel, ProblemInstance};
use crate::surrogate::KernelModel;

use super::poly::{Poly, PolyProgram, Rel};
use super::PolyhedralDomain;

pub fn build_newsvendor_training_program(
    problem: &ProblemInstance,
    features: &[Vec<f64>],
    labels: &[usize],
    surrogate: &KernelModel,
    domain: &PolyhedralDomain,
    rho: f64,
) -> Result<PolyProgram> {
    let CostModel::Newsvendor { holding, stockout } = problem.cost_model() else {
        return Err(Error::domain("the polynomial lift covers the newsvendor cost"));
    };
    let n = features.len();
    if n == 0 {
        return Err(Error::domain("need at least one training sample"));
    }
    let p = domain.dim();
    if features.iter().any(|x| x.len() != p) {
        return Err(Error::dim("feature length disagrees with the domain"));
    }
    if labels.len() != n {
        return Err(Error::dim(format!("{} features vs {} labels", n, labels.len())));
    }
    let k = problem.num_scenarios();
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::domain(format!("label {bad} outside {k} scenarios")));
    }
    if surrogate.k() != k {
        return Err(Error::dim("surrogate class count disagrees with the scenarios"));
    }
    let d = problem.dim();
    if surrogate.decision_dim() != d {
        return Err(Error::dim("surrogate decision dimension disagrees"));
    }
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::domain("regularization must be finite and nonnegative"));
    }
    let m = domain.num_rows();

    // Variable layout: hypothesis entries, per-sample decisions, lifted
    // positive parts, then the membership multipliers.
    let var_b = |class: usize, r: usize| class * p + r;
    let off_bias = k * p;
    let var_bias = |class: usize| off_bias + class;
    let off_w = off_bias + k;
    let var_w = |i: usize, dd: usize| off_w + i * d + dd;
    let off_lift = off_w + n * d;
    let var_over = |i: usize, l: usize| off_lift + 2 * (i * d + l);
    let var_under = |i: usize, l: usize| var_over(i, l) + 1;
    let off_mult = off_lift + 2 * n * d;
    let var_y = |class: usize, j: usize| off_mult + class * m + j;
    let var_z = |j: usize| off_mult + k * m + j;
    let var_u = |j: usize| off_mult + (k + 1) * m + j;

    let mut variables = Vec::with_capacity(off_mult + (k + 2) * m);
    for class in 1..=k {
        for r in 1..=p {
            variables.push(format!("B_{class}_{r}"));
        }
    }
    for class in 1..=k {
        variables.push(format!("b_{class}"));
    }
    for i in 1..=n {
        for dd in 1..=d {
            variables.push(format!("w_{i}_{dd}"));
        }
    }
    for i in 1..=n {
        for l in 1..=d {
            variables.push(format!("over_{i}_{l}"));
            variables.push(format!("under_{i}_{l}"));
        }
    }
    for class in 1..=k {
        for j in 1..=m {
            variables.push(format!("y_{class}_{j}"));
        }
    }
    for j in 1..=m {
        variables.push(format!("z_{j}"));
    }
    for j in 1..=m {
        variables.push(format!("u_{j}"));
    }

    let inv_n = 1.0 / n as f64;
    let mut objective = Poly::zero();
    for i in 0..n {
        for l in 0..d {
            objective.add_scaled(&Poly::var(var_over(i, l)), holding[l] * inv_n);
            objective.add_scaled(&Poly::var(var_under(i, l)), stockout[l] * inv_n);
        }
        for dd in 0..d {
            let w = Poly::var(var_w(i, dd));
            objective.add_scaled(&w.mul(&w), 0.5 * rho * inv_n);
        }
    }

    let mut constraints = Vec::new();

    // Decisions equal the kernel surrogate at the hypothesis output: the
    // kernel argument offset + support_j . (B x_i + b) is linear in (B, b),
    // so each power expands to an explicit polynomial.
    for (i, x) in features.iter().enumerate() {
        let powers: Vec<Poly> = surrogate
            .support()
            .iter()
            .map(|s_j| {
                let mut coeffs = Vec::with_capacity(k * (p + 1));
                for class in 0..k {
                    for r in 0..p {
                        coeffs.push((var_b(class, r), s_j[class] * x[r]));
                    }
                    coeffs.push((var_bias(class), s_j[class]));
                }
                Poly::linear(surrogate.offset(), &coeffs).pow(surrogate.degree())
            })
            .collect();
        for dd in 0..d {
            let mut poly = Poly::var(var_w(i, dd));
            for (j, power) in powers.iter().enumerate() {
                poly.add_scaled(power, -surrogate.coefficients()[j][dd]);
            }
            constraints.push((Rel::Eq, poly));
        }
    }

    // Positive parts: v+ >= v, v+ >= 0, v+ (v+ - v) = 0 pins v+ = max(v, 0).
    for i in 0..n {
        let xi = problem.scenarios().point(labels[i]);
        for l in 0..d {
            let over_gap = Poly::linear(xi[l], &[(var_over(i, l), 1.0), (var_w(i, l), -1.0)]);
            constraints.push((Rel::Ge, over_gap.clone()));
            constraints.push((Rel::Ge, Poly::var(var_over(i, l))));
            constraints.push((Rel::Eq, Poly::var(var_over(i, l)).mul(&over_gap)));
            let under_gap = Poly::linear(-xi[l], &[(var_under(i, l), 1.0), (var_w(i, l), 1.0)]);
            constraints.push((Rel::Ge, under_gap.clone()));
            constraints.push((Rel::Ge, Poly::var(var_under(i, l))));
            constraints.push((Rel::Eq, Poly::var(var_under(i, l)).mul(&under_gap)));
        }
    }

    // Simplex membership system, one dual block per hypothesis row plus the
    // two sum blocks.
    let rows = domain.rows();
    let bounds = domain.bounds();
    for class in 0..k {
        for r in 0..p {
            let mut coeffs: Vec<(usize, f64)> =
                (0..m).map(|j| (var_y(class, j), rows[j][r])).collect();
            coeffs.push((var_b(class, r), -1.0));
            constraints.push((Rel::Eq, Poly::linear(0.0, &coeffs)));
        }
        let mut coeffs: Vec<(usize, f64)> =
            (0..m).map(|j| (var_y(class, j), bounds[j])).collect();
        coeffs.push((var_bias(class), 1.0));
        constraints.push((Rel::Ge, Poly::linear(0.0, &coeffs)));
        for j in 0..m {
            constraints.push((Rel::Ge, Poly::var(var_y(class, j))));
        }
    }
    for r in 0..p {
        let mut coeffs: Vec<(usize, f64)> = (0..m).map(|j| (var_z(j), rows[j][r])).collect();
        for class in 0..k {
            coeffs.push((var_b(class, r), -1.0));
        }
        constraints.push((Rel::Eq, Poly::linear(0.0, &coeffs)));
    }
    let mut coeffs: Vec<(usize, f64)> = (0..m).map(|j| (var_z(j), bounds[j])).collect();
    for class in 0..k {
        coeffs.push((var_bias(class), 1.0));
    }
    constraints.push((Rel::Ge, Poly::linear(-1.0, &coeffs)));
    for j in 0..m {
        constraints.push((Rel::Ge, Poly::var(var_z(j))));
    }
    for r in 0..p {
        let mut coeffs: Vec<(usize, f64)> = (0..m).map(|j| (var_u(j), rows[j][r])).collect();
        for class in 0..k {
            coeffs.push((var_b(class, r), 1.0));
        }
        constraints.push((Rel::Eq, Poly::linear(0.0, &coeffs)));
    }
    let mut coeffs: Vec<(usize, f64)> = (0..m).map(|j| (var_u(j), bounds[j])).collect();
    for class in 0..k {
        coeffs.push((var_bias(class), -1.0));
    }
    constraints.push((Rel::Ge, Poly::linear(1.0, &coeffs)));
    for j in 0..m {
        constraints.push((Rel::Ge, Poly::var(var_u(j))));
    }

    Ok(PolyProgram {
        variables,
        objective,
        constraints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::OracleConfig;
    use crate::problems::phi;
    use crate::semialgebraic::{
        build_membership_system, check_feasibility, random_certified_instance, Certification,
    };
    use crate::simplex::{ProbVector, ScenarioSet};
    use crate::surrogate::{generate_surrogate_samples, SurrogateSampling};

    fn fitted_surrogate(problem: &ProblemInstance, rho: f64) -> KernelModel {
        let samples = generate_surrogate_samples(
            problem,
            rho,
            SurrogateSampling::Uniform { count: 12 },
            0.0,
            5,
            &OracleConfig::default(),
        )
        .unwrap();
        KernelModel::fit(&samples, 1.0, 2, 1e-4).unwrap()
    }

    #[test]
    fn composed_assignment_satisfies_the_program() {
        let problem = ProblemInstance::example_newsvendor();
        let domain = PolyhedralDomain::boxed(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let rho = 0.1;
        let surrogate = fitted_surrogate(&problem, rho);
        let (b_rows, b_off) = random_certified_instance(&domain, 4, 3).unwrap();
        let features = domain.sample(3, 7).unwrap();
        let labels = vec![0, 2, 3];
        let program =
            build_newsvendor_training_program(&problem, &features, &labels, &surrogate, &domain, rho)
                .unwrap();

        let index = |name: &str| {
            program
                .variables
                .iter()
                .position(|v| v == name)
                .unwrap_or_else(|| panic!("missing variable {name}"))
        };
        let mut vals = vec![0.0; program.variables.len()];
        for (class, row) in b_rows.iter().enumerate() {
            for (r, &v) in row.iter().enumerate() {
                vals[index(&format!("B_{}_{}", class + 1, r + 1))] = v;
            }
            vals[index(&format!("b_{}", class + 1))] = b_off[class];
        }
        let mut direct_objective = 0.0;
        for (i, x) in features.iter().enumerate() {
            let image: Vec<f64> = b_rows
                .iter()
                .zip(&b_off)
                .map(|(row, &off)| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + off)
                .collect();
            let probs = ProbVector::new(image).unwrap();
            let w = surrogate.eval(&probs).unwrap();
            let xi = problem.scenarios().point(labels[i]);
            for dd in 0..w.len() {
                vals[index(&format!("w_{}_{}", i + 1, dd + 1))] = w[dd];
                vals[index(&format!("over_{}_{}", i + 1, dd + 1))] = (w[dd] - xi[dd]).max(0.0);
                vals[index(&format!("under_{}_{}", i + 1, dd + 1))] = (xi[dd] - w[dd]).max(0.0);
            }
            direct_objective += problem.cost(&w, labels[i]) + rho * phi(&w);
        }
        direct_objective /= features.len() as f64;

        let system = build_membership_system(&domain, 4).unwrap();
        let Certification::Certified { blocks } =
            check_feasibility(&system, &b_rows, &b_off).unwrap()
        else {
            panic!("instance must certify");
        };
        let m = domain.num_rows();
        for (class, block) in blocks.iter().take(4).enumerate() {
            for j in 0..m {
                vals[index(&format!("y_{}_{}", class + 1, j + 1))] = block[j];
            }
        }
        for j in 0..m {
            vals[index(&format!("z_{}", j + 1))] = blocks[4][j];
            vals[index(&format!("u_{}", j + 1))] = blocks[5][j];
        }

        assert!((program.objective.eval(&vals) - direct_objective).abs() <= 1e-9);
        for (rel, poly) in &program.constraints {
            let value = poly.eval(&vals);
            match rel {
                Rel::Eq => assert!(value.abs() <= 1e-6, "equality off by {value}"),
                Rel::Ge => assert!(value >= -1e-9, "inequality at {value}"),
            }
        }
    }

    #[test]
    fn program_shape_matches_the_block_structure() {
        let problem = ProblemInstance::example_newsvendor();
        let domain = PolyhedralDomain::boxed(&[0.0], &[1.0]).unwrap();
        let surrogate = fitted_surrogate(&problem, 0.1);
        let features = vec![vec![0.25], vec![0.75]];
        let labels = vec![1, 0];
        let program =
            build_newsvendor_training_program(&problem, &features, &labels, &surrogate, &domain, 0.1)
                .unwrap();
        // k p + k + n d + 2 n d + (k + 2) m with k=4, p=1, n=2, d=2, m=2.
        assert_eq!(program.variables.len(), 4 + 4 + 4 + 8 + 12);
        assert_eq!(program.variables[0], "B_1_1");
        assert_eq!(program.variables.last().unwrap(), "u_2");
        // n d surrogate equalities, 6 n d lift rows, (k+2)(p + 1 + m)
        // membership rows.
        assert_eq!(program.constraints.len(), 4 + 24 + 6 * (1 + 1 + 2));
        let text = program.to_text().unwrap();
        assert!(text.starts_with("polyprog 1\nvars 32\n"));
        assert_eq!(text, program.to_text().unwrap());
    }

    #[test]
    fn builder_rejects_mismatched_inputs() {
        let problem = ProblemInstance::example_newsvendor();
        let domain = PolyhedralDomain::boxed(&[0.0], &[1.0]).unwrap();
        let surrogate = fitted_surrogate(&problem, 0.1);
        let ok_features = vec![vec![0.5]];
        assert!(build_newsvendor_training_program(
            &problem, &[], &[], &surrogate, &domain, 0.1
        )
        .is_err());
        assert!(build_newsvendor_training_program(
            &problem,
            &[vec![0.5, 0.5]],
            &[0],
            &surrogate,
            &domain,
            0.1
        )
        .is_err());
        assert!(build_newsvendor_training_program(
            &problem,
            &ok_features,
            &[9],
            &surrogate,
            &domain,
            0.1
        )
        .is_err());
        assert!(build_newsvendor_training_program(
            &problem,
            &ok_features,
            &[0],
            &surrogate,
            &domain,
            -0.1
        )
        .is_err());

        let scenarios = ScenarioSet::new(vec![vec![0.5, 0.2], vec![0.1, 0.3]]).unwrap();
        let portfolio = ProblemInstance::portfolio(scenarios, 1.0, 1.0).unwrap();
        let err = build_newsvendor_training_program(
            &portfolio,
            &ok_features,
            &[0],
            &surrogate,
            &domain,
            0.1,
        );
        assert!(err.is_err());
    }
}
