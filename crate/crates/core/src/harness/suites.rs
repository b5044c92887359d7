//! Property suites run against a configured system. Each suite reports its
//! worst residual against a fixed tolerance. When validation fails, every
//! other suite is skipped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{act, averages, FixedPointProjector, SpectralAverager};
use crate::group_kernel::{defect_to_f64, GroupElement, GroupKind};
use crate::invariant_opt::MaxResult;
use crate::matrix_core::{norming_state, operator_norm, state_eval, trace_pairing, BlockElement, BlockState};
use crate::sample;

use super::config::{validation_report, Experiment};
use super::report::{maxima, sweep, Maxima, RunError};

pub const DEFECT_KMAX: u64 = 200;
pub const DEFECT_SAMPLES: usize = 20;
pub const SANDWICH_SAMPLES: usize = 100;
pub const NORMING_SAMPLES: usize = 100;
pub const ROUND_TRIP_SAMPLES: usize = 20;
pub const AVERAGE_SAMPLES: usize = 5;
pub const PROJECTION_SAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteVerdict {
    pub name: String,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub skipped: bool,
    pub detail: String,
}

impl SuiteVerdict {
    fn measured(name: &str, worst: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        SuiteVerdict { name: name.into(), worst, tolerance, passed: worst <= tolerance, skipped: false, detail: detail.into() }
    }

    fn skipped(name: &str, tolerance: f64, detail: impl Into<String>) -> Self {
        SuiteVerdict { name: name.into(), worst: 0.0, tolerance, passed: true, skipped: true, detail: detail.into() }
    }

    fn errored(name: &str, tolerance: f64, err: String) -> Self {
        SuiteVerdict { name: name.into(), worst: f64::INFINITY, tolerance, passed: false, skipped: false, detail: err }
    }
}

/// Suite names and tolerances in report order.
pub const SUITES: [(&str, f64); 17] = [
    ("validation", 0.0),
    ("group-axioms", 1e-8),
    ("norming-identity", 1e-10),
    ("defect-lipschitz", 1e-9),
    ("rho-compatibility", 1e-9),
    ("contraction", 1e-10),
    ("sandwich-lower", 1e-9),
    ("sandwich-upper", 1e-10),
    ("oracle-equivalence", 1e-6),
    ("witness-certification", 1e-8),
    ("quotient-round-trip", 1e-12),
    ("quotient-invariance", 1e-8),
    ("faithful-equality", 1e-8),
    ("monotonicity", 1e-9),
    ("projection-idempotent", 1e-10),
    ("projection-equivariant", 1e-8),
    ("finite-exactness", 1e-10),
];

fn tolerance(name: &str) -> f64 {
    SUITES.iter().find(|(n, _)| *n == name).expect("known suite").1
}

fn rng_for(exp: &Experiment, suite: &str) -> ChaCha8Rng {
    let salt = suite.bytes().fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3));
    ChaCha8Rng::seed_from_u64(exp.seed ^ salt)
}

fn finish(name: &str, r: SuiteResult) -> SuiteVerdict {
    let tol = tolerance(name);
    match r {
        Ok((worst, detail)) => SuiteVerdict::measured(name, worst, tol, detail),
        Err(e) => SuiteVerdict::errored(name, tol, e),
    }
}

/// Runs every suite against the experiment.
pub fn check_inequalities(exp: &Experiment) -> Vec<SuiteVerdict> {
    let validation = validation_report(exp);
    let failures: Vec<String> = validation.failures().iter().map(|c| c.to_string()).collect();
    let mut out = vec![SuiteVerdict {
        name: "validation".into(),
        worst: if failures.is_empty() { 0.0 } else { 1.0 },
        tolerance: 0.0,
        passed: failures.is_empty(),
        skipped: false,
        detail: if failures.is_empty() { format!("{} checks", validation.checks.len()) } else { failures.join("; ") },
    }];
    if !failures.is_empty() {
        out.extend(SUITES[1..].iter().map(|(n, t)| SuiteVerdict::skipped(n, *t, "validation failed")));
        return out;
    }
    let m = match maxima(exp) {
        Ok(m) => m,
        Err(e) => {
            let msg = e.to_string();
            out.extend(SUITES[1..].iter().map(|(n, t)| SuiteVerdict {
                name: n.to_string(),
                worst: f64::INFINITY,
                tolerance: *t,
                passed: false,
                skipped: false,
                detail: msg.clone(),
            }));
            return out;
        }
    };
    let norms = sweep(exp);
    out.push(finish("group-axioms", group_axioms(exp).map_err(message)));
    out.push(finish("norming-identity", norming_identity(exp).map_err(message)));
    out.push(finish("defect-lipschitz", defect_lipschitz(exp).map_err(message)));
    let (rho, contraction) = averaging_suites(exp);
    out.push(finish("rho-compatibility", rho));
    out.push(finish("contraction", contraction));
    let (lower, upper) = match &norms {
        Ok(rows) => sandwich(exp, rows),
        Err(e) => (Err(e.to_string()), Err(e.to_string())),
    };
    out.push(finish("sandwich-lower", lower));
    out.push(finish("sandwich-upper", upper));
    out.push(finish("oracle-equivalence", Ok(oracle_equivalence(&m))));
    out.push(finish("witness-certification", witness_certification(exp, &m).map_err(message)));
    let (trip, inv) = quotient_suites(exp);
    out.push(finish("quotient-round-trip", trip));
    out.push(finish("quotient-invariance", inv));
    out.push(if exp.model.is_faithful() {
        let gap = (m.annihilator.value - m.full.value).abs();
        SuiteVerdict::measured("faithful-equality", gap, tolerance("faithful-equality"), "|m(ann) - m(full)|")
    } else {
        SuiteVerdict::skipped("faithful-equality", tolerance("faithful-equality"), "model has a kernel")
    });
    out.push(SuiteVerdict::measured(
        "monotonicity",
        m.annihilator.value - m.full.value,
        tolerance("monotonicity"),
        format!("m(ann) = {}, m(full) = {}", m.annihilator.value, m.full.value),
    ));
    let (idem, equiv) = projection_suites(exp);
    out.push(finish("projection-idempotent", idem));
    out.push(finish("projection-equivariant", equiv));
    out.push(match (exp.model.target().group().kind(), &norms) {
        (GroupKind::Finite(_), Ok(rows)) => {
            let worst = rows.iter().map(|r| (r.2 - m.annihilator.value).abs()).fold(0.0, f64::max);
            SuiteVerdict::measured("finite-exactness", worst, tolerance("finite-exactness"), "max_k |norm_k - m|")
        }
        (GroupKind::Finite(_), Err(e)) => SuiteVerdict::errored("finite-exactness", tolerance("finite-exactness"), e.to_string()),
        _ => SuiteVerdict::skipped("finite-exactness", tolerance("finite-exactness"), "group is infinite"),
    });
    out
}

fn message(e: RunError) -> String {
    e.to_string()
}

/// Group laws on sampled elements (exact) and `U_{gh} = U_g U_h` (numeric).
fn group_axioms(exp: &Experiment) -> Result<(f64, String), RunError> {
    let action = exp.model.theta();
    let group = action.group();
    let mut elements: Vec<GroupElement> = match group.finite_elements() {
        Some(all) => all,
        None => exp.model.target().folner().set(2)?,
    };
    let mut rng = rng_for(exp, "group-axioms");
    if group.finite_elements().is_none() {
        for _ in 0..10 {
            let coords = group.identity().coords().iter().map(|_| rng.random_range(-4i64..=4)).collect();
            elements.push(group.element(coords)?);
        }
    }
    let e = group.identity();
    let mut law_failures = 0usize;
    for g in &elements {
        if group.multiply(g, &e)? != *g || group.multiply(&e, g)? != *g {
            law_failures += 1;
        }
        if group.multiply(g, &group.inverse(g)?)? != e {
            law_failures += 1;
        }
    }
    let few = &elements[..elements.len().min(12)];
    for g in few {
        for h in few {
            for k in few {
                let left = group.multiply(&group.multiply(g, h)?, k)?;
                let right = group.multiply(g, &group.multiply(h, k)?)?;
                if left != right {
                    law_failures += 1;
                }
            }
        }
    }
    let mut worst: f64 = 0.0;
    for g in &elements {
        for h in &elements {
            let ug = action.unitary(g)?;
            let uh = action.unitary(h)?;
            let ugh = action.unitary(&group.multiply(g, h)?)?;
            worst = worst.max(ugh.distance(&(&ug * &uh)));
        }
    }
    if law_failures > 0 {
        worst = f64::INFINITY;
    }
    Ok((worst, format!("{} elements, {law_failures} law violations", elements.len())))
}

fn norming_identity(exp: &Experiment) -> Result<(f64, String), RunError> {
    let mut rng = rng_for(exp, "norming-identity");
    let sig = exp.model.target().signature();
    let mut worst: f64 = 0.0;
    for _ in 0..NORMING_SAMPLES {
        let x = sample::positive(&mut rng, sig);
        let s = norming_state(&x).map_err(crate::dynamics::DynamicsError::from)?;
        worst = worst.max((state_eval(&s, &x).map_err(crate::dynamics::DynamicsError::from)?.re - operator_norm(&x)).abs());
    }
    Ok((worst, format!("{NORMING_SAMPLES} positive samples")))
}

/// `|σ_k(avg_k(Ξ_g x)) − σ_k(avg_k(x))| − defect_k(g)·‖x‖` maximized over
/// `k ≤ 200`, generators and seeded Hermitian `x`, with `σ_k` the norming
/// state of `avg_k(ι(a))`.
fn defect_lipschitz(exp: &Experiment) -> Result<(f64, String), RunError> {
    let sys = exp.model.target();
    let averager = SpectralAverager::new(sys.action(), DEFECT_KMAX)?;
    let ia = exp.model.apply_iota(&exp.a)?;
    let mut rng = rng_for(exp, "defect-lipschitz");
    let xs: Vec<BlockElement> =
        (0..DEFECT_SAMPLES).map(|_| sample::hermitian_element(&mut rng, sys.signature())).collect();
    let gens = sys.group().generators().to_vec();
    let moved: Vec<Vec<BlockElement>> =
        gens.iter().map(|g| xs.iter().map(|x| act(sys, g, x)).collect::<Result<_, _>>()).collect::<Result<_, _>>()?;
    let norms: Vec<f64> = xs.iter().map(operator_norm).collect();
    let per_k: Vec<f64> = (1..=DEFECT_KMAX)
        .into_par_iter()
        .map(|k| -> Result<f64, RunError> {
            let sigma = norming_state(&averager.average(&ia, k)?.hermitian_part())
                .map_err(crate::dynamics::DynamicsError::from)?;
            // y ↦ σ(avg_k y) as a single density, so each sample is one pairing
            let pulled = averager.dual_average(&sigma.weighted_density(), k)?;
            let eval = |y: &BlockElement| trace_pairing(&pulled, y).re;
            let mut worst = f64::NEG_INFINITY;
            for (gi, g) in gens.iter().enumerate() {
                let defect = defect_to_f64(sys.folner().defect(k, g)?);
                for (xi, x) in xs.iter().enumerate() {
                    let lhs = (eval(&moved[gi][xi]) - eval(x)).abs();
                    worst = worst.max(lhs - defect * norms[xi]);
                }
            }
            Ok(worst)
        })
        .collect::<Result<_, _>>()?;
    let worst = per_k.into_iter().fold(f64::NEG_INFINITY, f64::max);
    Ok((worst, format!("k <= {DEFECT_KMAX}, {} generators, {DEFECT_SAMPLES} samples; worst excess over the bound", gens.len())))
}

type SuiteResult = Result<(f64, String), String>;

/// `ρ(avg_k x) = ρ(x)` and `‖avg_k x‖ ≤ ‖x‖` along the schedule.
fn averaging_suites(exp: &Experiment) -> (SuiteResult, SuiteResult) {
    let run = || -> Result<(f64, f64), RunError> {
        let sys = exp.model.target();
        let mut rng = rng_for(exp, "averaging");
        let (mut rho_worst, mut norm_worst) = (0.0f64, f64::NEG_INFINITY);
        for _ in 0..AVERAGE_SAMPLES {
            let x = sample::hermitian_element(&mut rng, sys.signature());
            let rx = state_eval(sys.rho(), &x).map_err(crate::dynamics::DynamicsError::from)?;
            let nx = operator_norm(&x);
            for (_, _, avg) in averages(sys.action(), sys.folner(), &x, &exp.ks)? {
                let r = state_eval(sys.rho(), &avg).map_err(crate::dynamics::DynamicsError::from)?;
                rho_worst = rho_worst.max((r - rx).norm());
                norm_worst = norm_worst.max(operator_norm(&avg) - nx);
            }
        }
        Ok((rho_worst, norm_worst))
    };
    let detail = format!("{AVERAGE_SAMPLES} samples over {} scheduled k", exp.ks.len());
    match run() {
        Ok((r, n)) => (Ok((r, detail.clone())), Ok((n, detail))),
        Err(e) => (Err(e.to_string()), Err(e.to_string())),
    }
}

/// Invariant states of the domain that vanish on the kernel: random states
/// of the quotient, averaged onto the fixed space and pulled back.
fn annihilator_states(exp: &Experiment, rng: &mut ChaCha8Rng, count: usize) -> Result<Vec<BlockState>, RunError> {
    let quotient = exp.model.quotient_model();
    let projector = FixedPointProjector::new(quotient.theta())?;
    (0..count)
        .map(|_| {
            let s = sample::state(rng, quotient.domain());
            let d = projector.project(&s.weighted_density()).hermitian_part();
            let inv = BlockState::from_weighted_density(&d).map_err(crate::dynamics::DynamicsError::from)?;
            Ok(exp.model.pullback_state(&inv)?)
        })
        .collect()
}

fn sandwich(exp: &Experiment, rows: &[(u64, u64, f64, f64)]) -> (SuiteResult, SuiteResult) {
    let mut rng = rng_for(exp, "sandwich");
    let states = match annihilator_states(exp, &mut rng, SANDWICH_SAMPLES) {
        Ok(s) => s,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let mut best = f64::NEG_INFINITY;
    for s in &states {
        match state_eval(s, &exp.a) {
            Ok(v) => best = best.max(v.re),
            Err(e) => return (Err(e.to_string()), Err(e.to_string())),
        }
    }
    let norm_a = operator_norm(&exp.a);
    let lower = rows.iter().map(|r| best - r.2).fold(f64::NEG_INFINITY, f64::max);
    let upper = rows.iter().map(|r| r.2 - norm_a).fold(f64::NEG_INFINITY, f64::max);
    let detail = format!("{SANDWICH_SAMPLES} invariant states, {} scheduled k", rows.len());
    (Ok((lower, detail.clone())), Ok((upper, detail)))
}

fn oracle_equivalence(m: &Maxima) -> (f64, String) {
    let ann = (m.annihilator.value - m.annihilator_cross_check.value).abs();
    let full = (m.full.value - m.full_cross_check.value).abs();
    (ann.max(full), format!("annihilator gap {ann:.3e}, full gap {full:.3e}"))
}

fn witness_worst(r: &MaxResult) -> f64 {
    r.residuals.invariance.max(r.residuals.kernel_mass).max(r.residuals.value)
}

/// Witness residuals, and agreement of the witness value with `‖E(·)‖`.
fn witness_certification(exp: &Experiment, m: &Maxima) -> Result<(f64, String), RunError> {
    let ia = exp.model.apply_iota(&exp.a)?;
    let upper_ann = operator_norm(&FixedPointProjector::new(exp.model.target().action())?.project(&ia));
    let upper_full = operator_norm(&FixedPointProjector::new(exp.model.theta())?.project(&exp.a));
    let lower_ann = state_eval(&m.annihilator.witness, &exp.a).map_err(crate::dynamics::DynamicsError::from)?.re;
    let lower_full = state_eval(&m.full.witness, &exp.a).map_err(crate::dynamics::DynamicsError::from)?.re;
    let worst = witness_worst(&m.annihilator)
        .max(witness_worst(&m.full))
        .max((upper_ann - lower_ann).abs())
        .max((upper_full - lower_full).abs());
    Ok((worst, "witness residuals and |witness(a) - ||E(a)|||".into()))
}

fn quotient_suites(exp: &Experiment) -> (SuiteResult, SuiteResult) {
    let run = || -> Result<(f64, f64), RunError> {
        let model = &exp.model;
        let mut rng = rng_for(exp, "quotient");
        let mut trip: f64 = 0.0;
        for _ in 0..ROUND_TRIP_SAMPLES {
            let q = sample::state(&mut rng, &model.quotient_signature());
            let psi = model.pullback_state(&q)?;
            let back = model.pushforward_state(&psi)?;
            trip = trip.max(back.weighted_density().max_abs_diff(&q.weighted_density()));
            let again = model.pullback_state(&back)?;
            trip = trip.max(again.weighted_density().max_abs_diff(&psi.weighted_density()));
        }
        let mut inv: f64 = 0.0;
        for psi in annihilator_states(exp, &mut rng, ROUND_TRIP_SAMPLES)? {
            inv = inv.max(model.theta().state_invariance_residual(&psi)?);
            let q = model.pushforward_state(&psi)?;
            inv = inv.max(model.target().action().state_invariance_residual(&q)?);
        }
        Ok((trip, inv))
    };
    match run() {
        Ok((t, i)) => (
            Ok((t, format!("{ROUND_TRIP_SAMPLES} states each way"))),
            Ok((i, format!("{ROUND_TRIP_SAMPLES} invariant annihilator states"))),
        ),
        Err(e) => (Err(e.to_string()), Err(e.to_string())),
    }
}

fn projection_suites(exp: &Experiment) -> (SuiteResult, SuiteResult) {
    let run = || -> Result<(f64, f64), RunError> {
        let sys = exp.model.target();
        let p = FixedPointProjector::new(sys.action())?;
        let mut rng = rng_for(exp, "projection");
        let (mut idem, mut equiv) = (0.0f64, 0.0f64);
        for _ in 0..PROJECTION_SAMPLES {
            let x = sample::element(&mut rng, sys.signature());
            let e = p.project(&x);
            idem = idem.max(p.project(&e).distance(&e));
            for g in sys.group().generators() {
                equiv = equiv.max(p.project(&act(sys, g, &x)?).distance(&e));
                equiv = equiv.max(act(sys, g, &e)?.distance(&e));
            }
        }
        Ok((idem, equiv))
    };
    match run() {
        Ok((i, e)) => (
            Ok((i, format!("{PROJECTION_SAMPLES} samples"))),
            Ok((e, format!("{PROJECTION_SAMPLES} samples, every generator"))),
        ),
        Err(e) => (Err(e.to_string()), Err(e.to_string())),
    }
}
