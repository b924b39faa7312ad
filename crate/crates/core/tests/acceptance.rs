//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the summary lines are always printed.

mod support;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robustroa::clf::{synthesize, verify_closed_loop, ClfParams};
use robustroa::harness::{reproduce, wmax, Figure, HjDynamicsConfig, Scenario};
use robustroa::hj::{signed_target, solve_brs, AffineDynamics2, Grid2, Horizon, QuantifierOrder, TargetSet, ValueGrid};
use robustroa::lmi::SdpStatus;
use robustroa::matrixkit::DenseMatrix;
use robustroa::mpc::{mpc_step, LinearNominal, MpcConfig, RefPoint};
use robustroa::plants::quadcopter::{quadcopter_f, quadcopter_linearize, QuadcopterParams};
use robustroa::plants::rk4_step;
use robustroa::roa::{ellipsoid_contained, find_wmax_ellipse, Ellipsoid2, SafeRegion, WmaxOptions};
use support::{hausdorff, random_safe_set, DoubleIntegratorCase};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn within(elapsed: Duration, limit_s: f64, what: &str) -> Result<(), String> {
    check(
        elapsed.as_secs_f64() < limit_s,
        format!("{what} took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64()),
    )
}

fn quadcopter_clf() -> ClfParams {
    ClfParams {
        q: vec![1e-1, 1.0, 1.0, 1.0, 1.0, 1e-2],
        r: vec![1e-2, 1e-4],
        lambda: 0.5,
        mu: 0.1,
    }
}

fn criterion_1() -> Outcome {
    let model = quadcopter_linearize(&QuadcopterParams::default());
    let start = Instant::now();
    let s = synthesize(&model, &quadcopter_clf()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let cert_eig = verify_closed_loop(&model, &s.certificate).map_err(|e| e.to_string())?;
    check(
        s.solution.status == SdpStatus::Optimal,
        format!("status {:?}", s.solution.status),
    )?;
    check(
        s.block_max_eig < -1e-8,
        format!("block LMI max eig {:.3e}", s.block_max_eig),
    )?;
    check(
        cert_eig < 0.0,
        format!("closed-loop certificate max eig {cert_eig:.3e}"),
    )?;
    within(elapsed, 30.0, "synthesis")?;
    Ok(format!(
        "Optimal, block max eig {:.3e}, certificate max eig {cert_eig:.3e}, {:.2} s",
        s.block_max_eig,
        elapsed.as_secs_f64()
    ))
}

fn criterion_2() -> Outcome {
    let model = quadcopter_linearize(&QuadcopterParams::default());
    let params = quadcopter_clf();
    let mut cert = synthesize(&model, &params).map_err(|e| e.to_string())?.certificate;
    let w_bound = 3.5;
    cert.set_w_max(w_bound);
    let c = cert.roa_level;
    check((c - 2.45).abs() < 1e-12, format!("level {c}"))?;
    let acl = model.closed_loop(&cert.k);
    let edot = |e: &[f64], w: &[f64]| -> Vec<f64> {
        let a = acl.mul_vec(e);
        let b = model.b_w.mul_vec(w);
        a.iter().zip(&b).map(|(x, y)| x + y).collect()
    };
    let e_of = |e: &[f64]| cert.p.quad_form(e);
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..100 {
        let e: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..2).map(|_| rng.gen_range(-w_bound..w_bound)).collect();
        let pe = cert.p.mul_vec(&e);
        let de: f64 = 2.0 * pe.iter().zip(edot(&e, &w)).map(|(a, b)| a * b).sum::<f64>();
        let ww: f64 = w.iter().map(|v| v * v).sum();
        let lhs = de + params.lambda * e_of(&e) - params.mu * ww;
        worst = worst.max(lhs);
    }
    check(worst < 0.0, format!("decay inequality violated, max lhs {worst:.3e}"))?;

    // Piecewise-constant disturbances inside the box: even runs switch
    // between box corners, odd runs use full-magnitude directions on the
    // circle of radius w_max.
    let (dt, t_end, hold) = (1e-3, 5.0, 0.1);
    let mut max_ratio: f64 = 0.0;
    for run in 0..50 {
        let dir: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scale = (rng.gen_range(0.0..1.0) * c / e_of(&dir)).sqrt();
        let mut e: Vec<f64> = dir.iter().map(|v| v * scale).collect();
        let mut w = vec![0.0; 2];
        let steps = (t_end / dt) as usize;
        let every = (hold / dt) as usize;
        for k in 0..steps {
            if k % every == 0 {
                w = if run % 2 == 0 {
                    (0..2)
                        .map(|_| if rng.gen::<bool>() { w_bound } else { -w_bound })
                        .collect()
                } else {
                    let th = rng.gen_range(0.0..std::f64::consts::TAU);
                    vec![w_bound * th.cos(), w_bound * th.sin()]
                };
            }
            let f = |x: &[f64], _: &[f64], w: &[f64]| Ok(edot(x, w));
            e = rk4_step(f, &e, &[], &w, dt).map_err(|e| e.to_string())?;
            max_ratio = max_ratio.max(e_of(&e) / c);
        }
    }
    check(
        max_ratio <= 1.0 + 1e-6,
        format!("trajectory reached E/c = {max_ratio:.6}"),
    )?;
    Ok(format!(
        "decay max lhs {worst:.3e}; 50 trajectories, max E/c {max_ratio:.4}"
    ))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let case = DoubleIntegratorCase::default();
    let v = case.solve(101);
    let d = hausdorff(&v.zero_crossings(), &case.analytic_boundary(1440));
    let cell = v.grid.spacing()[0];
    check(d <= 2.0 * cell, format!("Hausdorff {:.2} cells", d / cell))?;

    let grid = Grid2::new([-2.0, -2.0], [2.0, 2.0], [101, 101]).map_err(|e| e.to_string())?;
    let target = TargetSet::circle([0.3, -0.2], 0.7);
    let l = signed_target(&grid, &target).map_err(|e| e.to_string())?;
    let still = solve_brs(
        &grid,
        &target,
        &AffineDynamics2::zero(),
        Horizon::Fixed(-1.0),
        QuantifierOrder::ControlMinimizes,
    )
    .map_err(|e| e.to_string())?;
    let diff = still.value.sup_diff(&l);
    check(diff <= 1e-12, format!("zero dynamics changed l by {diff:.3e}"))?;
    within(start.elapsed(), 60.0, "HJ oracle")?;
    Ok(format!(
        "Hausdorff {:.2} cells at 101x101, zero-dynamics drift {diff:.1e}, {:.1} s",
        d / cell,
        start.elapsed().as_secs_f64()
    ))
}

fn criterion_4() -> Outcome {
    let case = DoubleIntegratorCase::default();
    let exact = case.analytic_boundary(1440);
    let d: Vec<f64> = [51, 101, 201]
        .into_iter()
        .map(|n| hausdorff(&case.solve(n).zero_crossings(), &exact))
        .collect();
    check(d[0] > d[1] && d[1] > d[2], format!("not decreasing: {d:?}"))?;
    Ok(format!("Hausdorff {:.4} > {:.4} > {:.4}", d[0], d[1], d[2]))
}

fn criterion_5() -> Outcome {
    // circle in circle: P = I, safe disk of radius rho
    let (rho, n, half) = (1.2, 201, 2.0);
    let params = ClfParams {
        q: vec![1.0, 1.0],
        r: vec![1.0],
        lambda: 0.8,
        mu: 2.0,
    };
    let grid = Grid2::new([-half; 2], [half; 2], [n, n]).map_err(|e| e.to_string())?;
    let disk = ValueGrid::from_fn(grid, |x| x[0].hypot(x[1]) - rho);
    let safe = SafeRegion::from_grids(disk.clone(), disk).map_err(|e| e.to_string())?;
    let opts = WmaxOptions::default();
    let rep =
        find_wmax_ellipse(&DenseMatrix::identity(2), [0.0, 0.0], &params, &safe, opts).map_err(|e| e.to_string())?;
    let exact = rho * (params.lambda / params.mu).sqrt();
    let cell_in_w = grid.spacing()[0] * (params.lambda / params.mu).sqrt();
    check(
        rep.w_max <= exact && exact - rep.w_max <= opts.tol + cell_in_w,
        format!("w_max {} vs analytic {exact}", rep.w_max),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 20 {
        let safe = random_safe_set(&mut rng);
        if safe.is_safe([0.0, 0.0]) != Some(true) {
            continue;
        }
        checked += 1;
        let p = [[rng.gen_range(0.5..3.0), 0.3], [0.3, rng.gen_range(0.5..3.0)]];
        let mut lost = false;
        for k in 0..=60 {
            let w = 0.025 * k as f64;
            let e = Ellipsoid2::new(p, [0.0, 0.0], w * w).map_err(|e| e.to_string())?;
            let inside = ellipsoid_contained(&e, &safe).unwrap_or(false);
            check(!(lost && inside), format!("containment regained at w = {w}"))?;
            lost |= !inside;
        }
    }

    let base = Figure::Fig4a.scenario();
    let z_wmax = |dm: f64| -> Result<f64, String> {
        let mut sc: Scenario = base.clone();
        sc.ancillary.retain(|a| a.name == "z");
        if let Some(HjDynamicsConfig::MassAxis { delta_m, .. }) = sc.ancillary[0].hj.as_mut().map(|h| &mut h.dynamics) {
            *delta_m = Some(dm);
        }
        let r = wmax(&sc).map_err(|e| e.to_string())?;
        r[0].certificate.w_max.ok_or_else(|| "no w_max".to_string())
    };
    let (w0, w5) = (z_wmax(0.0)?, z_wmax(5.0)?);
    check(w0 > w5, format!("w_max(dm = 0) = {w0} not above w_max(dm = 5) = {w5}"))?;
    Ok(format!(
        "circle {:.5} vs {exact:.5}; 20 random sets monotone; w_max(dm=0) {w0:.4} > w_max(dm=5) {w5:.4}",
        rep.w_max
    ))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let rep = reproduce(Figure::Fig3, None).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let (nom, rob) = (&rep.nominal, &rep.robust);
    let nb = &nom.metrics.blocks[0];
    let rb = &rob.metrics.blocks[0];
    let nominal_fails = nom.metrics.diverged || nb.exits > 0 || nb.entry_time.is_none();
    check(nominal_fails, "nominal MPC stayed inside the invariant set".into())?;
    let fail_time = nb.first_exit_time.unwrap_or(nom.metrics.final_time);
    check(
        nom.metrics.diverged || fail_time < 5.0,
        format!("nominal leaves only at t = {fail_time}"),
    )?;
    check(
        rb.exits == 0 && rb.max_ratio_after_entry <= 1.0,
        format!("robust exits {}, max E/c {}", rb.exits, rb.max_ratio_after_entry),
    )?;
    check(
        rob.metrics.final_time >= 5.0 - 1e-9 && !rob.metrics.diverged,
        "robust run ended early".into(),
    )?;
    let blk = &rep.blocks[0];
    let bands = blk.error_bands().map_err(|e| e.to_string())?;
    let tr = &rob.trajectory;
    let outside = tr
        .states
        .iter()
        .zip(&tr.anchors)
        .filter(|(x, r)| (0..2).any(|i| (x[i] - r[i]).abs() > bands[i]))
        .count();
    check(
        outside == 0,
        format!("{outside} samples with y/z error outside the band"),
    )?;
    within(elapsed, 120.0, "fig3 reproduction")?;
    Ok(format!(
        "nominal first exit t = {fail_time:.3} s (max E/c {:.1}); robust max E/c {:.3}, 0 exits; {:.1} s",
        nb.max_ratio_after_entry,
        rb.max_ratio_after_entry,
        elapsed.as_secs_f64()
    ))
}

fn criterion_7() -> Outcome {
    let carry = reproduce(Figure::Fig4a, None).map_err(|e| e.to_string())?;
    let push = reproduce(Figure::Fig4c, None).map_err(|e| e.to_string())?;
    let block = |r: &robustroa::harness::RunOutput, name: &str| {
        r.metrics
            .blocks
            .iter()
            .find(|b| b.name == name)
            .cloned()
            .expect("block exists")
    };
    for r in [&carry.nominal, &carry.robust, &push.nominal, &push.robust] {
        check(
            r.metrics.stopped.is_none() && r.metrics.final_time >= 10.0 - 1e-9,
            format!("{:?} run stopped: {:?}", r.mode, r.metrics.stopped),
        )?;
    }
    let (cn, cr) = (block(&carry.nominal, "z"), block(&carry.robust, "z"));
    check(
        cr.exits == 0 && cr.max_ratio_after_entry <= 1.0,
        format!("carry robust z exits {}", cr.exits),
    )?;
    check(cn.exits > 0, "carry nominal z never exits".into())?;
    let (pn, pr) = (block(&push.nominal, "y"), block(&push.robust, "y"));
    check(
        pr.exits == 0 && pr.max_ratio_after_entry <= 1.0,
        format!("push robust y exits {}", pr.exits),
    )?;
    check(pn.exits > 0, "push nominal y never exits".into())?;
    Ok(format!(
        "carry z: nominal {} exits (max E/c {:.3}), robust max E/c {:.3}; push y: nominal {} exits ({:.3}), robust {:.3}",
        cn.exits, cn.max_ratio_after_entry, cr.max_ratio_after_entry, pn.exits, pn.max_ratio_after_entry, pr.max_ratio_after_entry
    ))
}

fn criterion_8() -> Outcome {
    let p = QuadcopterParams::default();
    let lin = quadcopter_linearize(&p);
    let (x0, u0, w0) = (vec![0.0; 6], vec![p.hover_thrust(), 0.0], vec![0.0; 2]);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for j in 0..8 {
        let bump = |s: f64| {
            let (mut x, mut u) = (x0.clone(), u0.clone());
            if j < 6 {
                x[j] += s;
            } else {
                u[j - 6] += s;
            }
            quadcopter_f(&x, &u, &w0, &p)
        };
        let (fp, fm) = (bump(h), bump(-h));
        for i in 0..6 {
            let fd = (fp[i] - fm[i]) / (2.0 * h);
            let exact = if j < 6 { lin.a[(i, j)] } else { lin.b[(i, j - 6)] };
            worst = worst.max((fd - exact).abs());
        }
    }
    check(worst <= 1e-6, format!("Jacobian mismatch {worst:.3e}"))?;

    let decay = |x: &[f64], _: &[f64], _: &[f64]| Ok(vec![-x[0]]);
    let err = |dt: f64| -> Result<f64, String> {
        let mut x = vec![1.0];
        for _ in 0..(1.0 / dt).round() as usize {
            x = rk4_step(decay, &x, &[], &[], dt).map_err(|e| e.to_string())?;
        }
        Ok((x[0] - (-1.0f64).exp()).abs())
    };
    let ratio = err(0.1)? / err(0.05)?;
    check((13.0..19.0).contains(&ratio), format!("RK4 error ratio {ratio:.2}"))?;

    let (x0, dt, q, r) = (0.8, 0.1, 1.0, 0.01);
    let model = LinearNominal {
        a: DenseMatrix::zeros(1, 1),
        b: DenseMatrix::identity(1),
    };
    let refs = vec![
        RefPoint {
            x: vec![0.0],
            u: vec![0.0]
        };
        3
    ];
    let sol = mpc_step(&model, &[x0], &refs, &MpcConfig::new(vec![q], vec![r], dt, 2)).map_err(|e| e.to_string())?;
    let cost = |u0: f64, u1: f64| {
        let x1 = x0 + dt * u0;
        let x2 = x1 + dt * u1;
        q * (x1 * x1 + x2 * x2) + r * (u0 * u0 + u1 * u1)
    };
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in -10_000..=10_000 {
        for j in -1000..=1000 {
            let (u0, u1) = (i as f64 * 1e-3, -5.0 + j as f64 * 1e-2);
            let c = cost(u0, u1);
            if c < best.0 {
                best = (c, u0, u1);
            }
        }
    }
    let (_, b0, b1) = best;
    for i in -100..=100 {
        for j in -100..=100 {
            let (u0, u1) = (b0 + i as f64 * 1e-4, b1 + j as f64 * 1e-4);
            let c = cost(u0, u1);
            if c < best.0 {
                best = (c, u0, u1);
            }
        }
    }
    let gap = (sol.du[0] - best.1).abs().max((sol.du[1] - best.2).abs());
    check(gap < 1e-3, format!("MPC vs grid search gap {gap:.3e}"))?;
    Ok(format!(
        "Jacobian error {worst:.1e}; RK4 halving ratio {ratio:.2}; MPC grid gap {gap:.1e}"
    ))
}

fn main() {
    // libtest-style filter: `cargo test --test acceptance -- 6` runs criterion 6
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 8] = [
        ("1 quadcopter CLF synthesis", criterion_1),
        ("2 Lyapunov decay and invariance", criterion_2),
        ("3 HJ double-integrator oracle", criterion_3),
        ("4 HJ grid convergence", criterion_4),
        ("5 w_max line search", criterion_5),
        ("6 quadcopter figure-eight", criterion_6),
        ("7 quadruped load scenarios", criterion_7),
        ("8 numerical hygiene", criterion_8),
    ];
    let selected: Vec<_> = criteria
        .iter()
        .filter(|(name, _)| filter.is_empty() || filter.iter().any(|f| name.contains(f.as_str())))
        .collect();
    let results: Vec<(&str, Outcome)> = std::thread::scope(|s| {
        let handles: Vec<_> = selected.iter().map(|(name, f)| (*name, s.spawn(f))).collect();
        handles
            .into_iter()
            .map(|(name, h)| (name, h.join().unwrap_or_else(|_| Err("panicked".into()))))
            .collect()
    });
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(why) => {
                failed += 1;
                println!("criterion {name}: FAIL ({why})");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
