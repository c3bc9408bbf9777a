//! Acceptance criteria 1-10. Prints one line per criterion and exits non-zero
//! if any of them fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use koopman_prior::experiments::{
    forward_experiment, nelder_mead, nm_trials, sweep_errors, sweep_estimate, ForwardSetup,
    NMOptions, NmSetup, NmTrialsSetup, SweepSetup,
};
use koopman_prior::rng::SeededRng;
use koopman_prior::{
    build_generator, duffing_field, edmd_fit, generate_snapshots, learn_small_dataset,
    prior_for_params, prior_koopman, vdp_field, Dictionary, MultiIndex, OnlineState,
    PolynomialVectorField, System, Term,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn dict25() -> Arc<Dictionary> {
    Arc::new(Dictionary::new(2, 5).unwrap())
}

fn decay_field() -> PolynomialVectorField {
    PolynomialVectorField::new(vec![vec![Term::new(-1.0, vec![1])]], vec![], vec![]).unwrap()
}

fn c1_dictionary_count() -> Outcome {
    let n = Dictionary::new(2, 5).unwrap().size();
    outcome(n == 21, format!("N_dic = {n}"))
}

fn c2_linear_prior() -> Outcome {
    let dict = Arc::new(Dictionary::new(1, 3).unwrap());
    let k = prior_koopman(&build_generator(&decay_field(), dict).unwrap(), 0.1, 100).unwrap();
    let want = DMatrix::from_fn(
        4,
        4,
        |i, j| if i == j { (-0.1 * i as f64).exp() } else { 0.0 },
    );
    let err = (k.entries() - want).amax();
    outcome(err <= 1e-9, format!("max entry error {err:.2e} (tol 1e-9)"))
}

fn c3_nonlinear_prior() -> Outcome {
    let dict = dict25();
    let field = duffing_field(1.9, -1.9, 1.4);
    let k = prior_for_params(&System::Duffing, &[1.9, -1.9, 1.4], dict.clone(), 0.1, 100).unwrap();
    let mut rng = SeededRng::new(2024);
    let (mut worst, mut worst_state) = (0.0f64, 0.0f64);
    let mut worst_index = MultiIndex::zeros(2);
    for _ in 0..100 {
        let x0 = [rng.uniform_in(-0.5, 0.5), rng.uniform_in(-0.5, 0.5)];
        let pred = k.apply(&x0).unwrap();
        let y = field.integrate(&x0, 0.1, 1000).unwrap();
        for (i, m) in dict.indices().iter().enumerate() {
            let exact = y[0].powi(m.exponents()[0] as i32) * y[1].powi(m.exponents()[1] as i32);
            let d = (pred[i] - exact).abs();
            if d > worst {
                worst = d;
                worst_index = m.clone();
            }
            if m.degree() == 1 {
                worst_state = worst_state.max(d);
            }
        }
    }
    outcome(
        worst <= 1e-3,
        format!("max ‖Kψ(x0) − ψ(flow)‖_∞ = {worst:.2e} at monomial {worst_index} (tol 1e-3); state rows {worst_state:.2e}"),
    )
}

fn c4_batch_online() -> Outcome {
    let dict = dict25();
    let ds = generate_snapshots(
        &duffing_field(1.9, -1.9, 1.4),
        40,
        &[-1.0, -1.0],
        &[1.0, 1.0],
        0.1,
        40,
        100,
    )
    .unwrap();
    let mut state = OnlineState::from_data(&ds.slice(0, 30), dict.clone()).unwrap();
    for i in 30..40 {
        let (x, y) = ds.pair(i);
        state.update(&x, &y).unwrap();
    }
    let batch = edmd_fit(&ds, dict).unwrap();
    let rel = (state.koopman().entries() - batch.entries()).norm() / batch.entries().norm();
    outcome(
        rel <= 1e-7,
        format!("relative Frobenius difference {rel:.2e} (tol 1e-7)"),
    )
}

fn c5_forward_duffing() -> Outcome {
    let setup = ForwardSetup::duffing_reference();
    let r = forward_experiment(&setup).unwrap();
    let finite = r
        .proposed_curves
        .iter()
        .filter(|c| c.at(10).is_some_and(f64::is_finite))
        .count();
    let diverged = r.conventional.diverged_by(10);
    outcome(
        finite >= 95 && diverged >= 50,
        format!(
            "proposed finite at step 10 in {finite}/100 (need 95); conventional diverged by step 10 in {diverged}/100 (need 50)"
        ),
    )
}

fn c6_forward_vdp() -> Outcome {
    let r = forward_experiment(&ForwardSetup::vdp_reference()).unwrap();
    let mut violations = Vec::new();
    for t in 0..=10 {
        let (p, c) = (r.proposed.median[t], r.conventional.median[t]);
        if !(p.is_finite() && c.is_finite()) {
            continue;
        }
        if p > c {
            violations.push(t);
        }
    }
    outcome(
        violations.is_empty(),
        format!(
            "median proposed ≤ conventional at all comparable steps: violations {violations:?}; step 10 medians {:.3} vs {:.3}",
            r.proposed.median[10], r.conventional.median[10]
        ),
    )
}

fn c7_sweep() -> Outcome {
    let setup = SweepSetup::vdp_reference();
    let mut hits = 0;
    let mut estimates = Vec::new();
    for seed in 0..10 {
        let ds = generate_snapshots(
            &vdp_field(1.0),
            10,
            &[-1.0, -1.0],
            &[1.0, 1.0],
            0.1,
            seed,
            100,
        )
        .unwrap();
        match sweep_estimate(&setup, &ds) {
            Ok(r) => {
                hits += usize::from((r.estimate - 1.0).abs() <= 0.05);
                estimates.push(format!("{:.4}", r.estimate));
            }
            Err(e) => estimates.push(format!("err({e})")),
        }
    }
    outcome(
        hits >= 9,
        format!(
            "{hits}/10 within 0.05 of 1.0; estimates [{}]",
            estimates.join(", ")
        ),
    )
}

fn c8_nelder_mead() -> Outcome {
    let box10 = vec![(-10.0, 10.0); 3];
    let setup = NmTrialsSetup {
        estimator: NmSetup::new(System::Duffing, dict25(), 0.1, box10.clone(), 0),
        truth_box: box10,
        m: 10,
        sample_box: (-1.0, 1.0),
        trials: 10,
        base_seed: 0,
    };
    let rows = nm_trials(&setup).unwrap();
    let mean = rows.iter().map(|r| r.error).sum::<f64>() / rows.len() as f64;
    let std = (rows.iter().map(|r| (r.error - mean).powi(2)).sum::<f64>()
        / (rows.len() - 1) as f64)
        .sqrt();
    let slowest = rows.iter().map(|r| r.seconds).fold(0.0, f64::max);
    outcome(
        mean <= 0.05 && slowest < 120.0,
        format!("mean ‖θ̂ − θ‖ = {mean:.6} ± {std:.6} (tol 0.05); slowest trial {slowest:.2} s (limit 120 s)"),
    )
}

fn c9_zero_innovation() -> Outcome {
    let dict = dict25();
    let mut setup = SweepSetup::vdp_reference();
    setup.epsilons = vec![0.1, 1.0, 10.0];
    let truth = setup.assumed[1];
    let prior = prior_for_params(&System::VanDerPol, &[truth], dict, 0.1, 100).unwrap();
    let (mut worst_change, mut worst_spread) = (0.0f64, 0.0f64);
    for seed in 0..5 {
        let ds = generate_snapshots(
            &vdp_field(truth),
            10,
            &[-1.0, -1.0],
            &[1.0, 1.0],
            0.1,
            seed,
            100,
        )
        .unwrap();
        for eps in [0.1, 1.0] {
            let k = learn_small_dataset(&prior, &ds, eps).unwrap();
            let change = (k.entries() - prior.entries()).norm() / prior.entries().norm();
            worst_change = worst_change.max(change);
        }
        let errors = sweep_errors(&setup, &ds).unwrap();
        let row = errors.row(1);
        worst_spread = worst_spread.max(row.max() - row.min());
    }
    outcome(
        worst_change <= 1e-3 && worst_spread <= 1e-6,
        format!(
            "relative prior change at truth {worst_change:.2e} (tol 1e-3); ε-spread of the error row at truth {worst_spread:.2e} (tol 1e-6)"
        ),
    )
}

fn c10_properties() -> Outcome {
    let mut rng = SeededRng::new(10);
    let mut failures: Vec<&str> = Vec::new();

    let dict = Dictionary::new(2, 5).unwrap();
    let homogeneous = (0..200).all(|_| {
        let x = [rng.uniform_in(-2.0, 2.0), rng.uniform_in(-2.0, 2.0)];
        let c = rng.uniform_in(-3.0, 3.0);
        let base = dict.evaluate(&x).unwrap();
        let scaled = dict.evaluate(&[c * x[0], c * x[1]]).unwrap();
        dict.indices().iter().enumerate().all(|(n, m)| {
            let want = c.powi(m.degree() as i32) * base[n];
            (scaled[n] - want).abs() <= 1e-12 * (1.0 + want.abs())
        })
    });
    if !homogeneous {
        failures.push("homogeneity");
    }

    let d25 = dict25();
    let prior =
        prior_for_params(&System::Duffing, &[1.0, -1.0, 0.5], d25.clone(), 0.1, 100).unwrap();
    let mut state = OnlineState::from_prior(prior, 1e10).unwrap();
    let ds = generate_snapshots(
        &duffing_field(1.9, -1.9, 1.4),
        10,
        &[-1.0, -1.0],
        &[1.0, 1.0],
        0.1,
        1,
        100,
    )
    .unwrap();
    let mut definite = true;
    for i in 0..ds.len() {
        let (x, y) = ds.pair(i);
        state.update(&x, &y).unwrap();
        definite &= state.p().clone().cholesky().is_some();
    }
    if !definite {
        failures.push("P positive-definiteness");
    }

    let f = duffing_field(2.0, -3.0, 1.0);
    let g = vdp_field(4.0);
    let gf = build_generator(&f, d25.clone()).unwrap();
    let gg = build_generator(&g, d25.clone()).unwrap();
    let gsum = build_generator(&f.sum(&g).unwrap(), d25.clone()).unwrap();
    let gscaled = build_generator(&f.scaled(0.5), d25.clone()).unwrap();
    if gsum.entries() != &(gf.entries() + gg.entries())
        || gscaled.entries() != &(gf.entries() * 0.5)
    {
        failures.push("generator linearity");
    }

    let stencil_ok = d25.indices().iter().enumerate().all(|(col, z)| {
        let (z1, z2) = (z.exponents()[0] as i64, z.exponents()[1] as i64);
        d25.indices().iter().enumerate().all(|(row, t)| {
            let (t1, t2) = (t.exponents()[0] as i64, t.exponents()[1] as i64);
            gf.entries()[(row, col)] == 0.0
                || [(-1, 1), (0, 0), (1, -1), (3, -1)].contains(&(t1 - z1, t2 - z2))
        })
    });
    if !stencil_ok {
        failures.push("Duffing stencil");
    }

    let nm = nelder_mead(
        |p| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2),
        &[-1.2, 1.0],
        &NMOptions::for_dim(2),
    )
    .unwrap();
    if !nm.best_history.windows(2).all(|w| w[1] <= w[0]) {
        failures.push("Nelder-Mead monotonicity");
    }

    let decay = decay_field();
    let err = |n: usize| (decay.integrate(&[1.0], 0.1, n).unwrap()[0] - (-0.1f64).exp()).abs();
    let ratio = err(2) / err(4);
    if !(12.0..=20.0).contains(&ratio) {
        failures.push("RK4 order ratio");
    }

    outcome(
        failures.is_empty(),
        format!("failed: {failures:?}; RK4 halving ratio {ratio:.2}"),
    )
}

fn main() -> ExitCode {
    type Criterion = (u32, &'static str, Duration, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        (
            1,
            "dictionary count",
            Duration::from_millis(1),
            c1_dictionary_count,
        ),
        (
            2,
            "linear prior oracle",
            Duration::from_millis(10),
            c2_linear_prior,
        ),
        (
            3,
            "nonlinear prior oracle",
            Duration::from_secs(1),
            c3_nonlinear_prior,
        ),
        (
            4,
            "batch/online equivalence",
            Duration::from_secs(1),
            c4_batch_online,
        ),
        (
            5,
            "forward Duffing",
            Duration::from_secs(120),
            c5_forward_duffing,
        ),
        (
            6,
            "forward van der Pol",
            Duration::from_secs(120),
            c6_forward_vdp,
        ),
        (7, "inverse sweep", Duration::from_secs(60), c7_sweep),
        (
            8,
            "inverse Nelder-Mead",
            Duration::from_secs(25 * 60),
            c8_nelder_mead,
        ),
        (
            9,
            "zero-innovation fixed point",
            Duration::from_secs(10),
            c9_zero_innovation,
        ),
        (
            10,
            "property suites",
            Duration::from_secs(60),
            c10_properties,
        ),
    ];
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= budget;
        failed += usize::from(!pass);
        println!(
            "criterion {id:>2} [{}] {name}: {} ({:.3} s, budget {:.3} s)",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs_f64()
        );
    }
    println!("acceptance: {}/10 passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
