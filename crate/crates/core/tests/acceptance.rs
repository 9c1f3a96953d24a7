//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero on any failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use byzopt::adversary::{craft_messages, x_survives, y_survives, AdversaryContext};
use byzopt::analysis::{max_f_for_robustness, max_tolerance, aux_consensus_constants};
use byzopt::filters::{self, distance_filter, minmax_filter_x, minmax_filter_y, LabeledScalar, LabeledVector};
use byzopt::graph::{generate_robust_graph, select_f_local_adversaries, Topology};
use byzopt::harness::dataset::Dataset;
use byzopt::harness::{self, preset, RunOutcome};
use byzopt::objectives::{LogisticObjective, Objective, QuadraticObjective};
use byzopt::protocol::{
    regular_objective, run_rounds, step_regular_agent, AgentState, Algorithm, RoundMessages, SimulationConfig,
    StepParams, StepSize, WeightProvider,
};
use byzopt::vecops::{dist, max_pairwise_dist, mean};
use byzopt::{AgentId, AdversaryStrategy, WeightAssignment, WeightPolicy};

const SEED: u64 = 1;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lv(owner: AgentId, v: &[f64]) -> LabeledVector {
    LabeledVector::new(owner, v.to_vec())
}

fn values(coord: &[LabeledScalar]) -> Vec<f64> {
    let mut v: Vec<f64> = coord.iter().map(|s| s.value).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Fixed weights for agent 0: `0.5, 0.25, 0.25` on `x`, uniform on `y`.
struct ExampleWeights;

impl WeightProvider for ExampleWeights {
    fn x_weights(&self, _: AgentId, _: usize, owners: Vec<AgentId>) -> filters::Result<WeightAssignment> {
        let w = owners.iter().map(|&o| if o == 0 { 0.5 } else { 0.25 }).collect();
        WeightAssignment::explicit(owners, w)
    }

    fn y_weights(&self, _: AgentId, _: usize, _: usize, owners: Vec<AgentId>) -> filters::Result<WeightAssignment> {
        WeightAssignment::uniform(owners)
    }
}

/// Eight agents on the complete graph, agents 3 and 7 Byzantine, `F = 2`,
/// `f_1(x) = (x1 + 1)^2 + (x2 - 1)^2`, `eta = 0.1`.
fn worked_example() -> Check {
    let xs = [
        [4.0, 2.0],
        [4.0, 1.0],
        [3.0, 3.0],
        [3.0, 2.0],
        [2.0, 1.0],
        [1.0, 4.0],
        [0.0, 0.0],
        [0.0, 5.0],
    ];
    let ys = [
        [0.0, 0.0],
        [-1.0, -2.0],
        [-2.0, 1.0],
        [-1.0, 1.0],
        [0.0, 2.0],
        [1.0, 3.0],
        [1.0, 3.0],
        [2.0, 2.0],
    ];
    let x_inbox: Vec<_> = xs.iter().enumerate().map(|(i, v)| lv(i, v)).collect();
    let y_inbox: Vec<_> = ys.iter().enumerate().map(|(i, v)| lv(i, v)).collect();
    let f1 = QuadraticObjective::with_constant(DMatrix::identity(2, 2) * 2.0, vec![2.0, -2.0], 2.0)
        .map_err(|e| e.to_string())?;
    let params = StepParams {
        algorithm: Algorithm::DistMinMax,
        f: 2,
        eta: 0.1,
        grad_bound: 1e6,
    };
    let out = step_regular_agent(&params, 0, 0, &f1, &x_inbox, &y_inbox, &ExampleWeights).map_err(|e| e.to_string())?;

    let dist_owners: Vec<_> = out.x_dist.iter().map(|e| e.owner).collect();
    ensure(dist_owners == [0, 1, 2, 3, 4, 5, 6], || format!("distance filter kept {dist_owners:?}"))?;
    let mut kept: Vec<Vec<f64>> = out.x_kept.iter().map(|e| e.value.clone()).collect();
    kept.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    ensure(kept == [vec![3.0, 2.0], vec![4.0, 1.0], vec![4.0, 2.0]], || format!("min-max kept {kept:?}"))?;
    ensure(out.z == [3.75, 1.75], || format!("z = {:?}", out.z))?;
    ensure(out.g == [9.5, 1.5], || format!("g = {:?}", out.g))?;
    let y0 = values(&out.y_kept[0]);
    let y1 = values(&out.y_kept[1]);
    ensure(y0 == [-1.0, 0.0, 0.0, 1.0], || format!("y coordinate 0 kept {y0:?}"))?;
    ensure(y1 == [0.0, 1.0, 1.0, 2.0, 2.0], || format!("y coordinate 1 kept {y1:?}"))?;
    ensure(out.state.x == [2.8, 1.6], || format!("x = {:?}", out.state.x))?;
    ensure(out.state.y == [0.0, 1.2], || format!("y = {:?}", out.state.y))?;
    Ok("x = (2.8, 1.6), y = (0, 1.2) bit-exact; intermediate sets match".into())
}

/// Independent `r`-robustness: every assignment of nodes to {none, S1, S2}
/// with both sets nonempty has a node in S1 or S2 with `r` in-neighbors outside its set.
fn brute_force_robust(g: &Topology, r: usize) -> bool {
    let n = g.n();
    let total = 3usize.pow(n as u32);
    let mut side = vec![0u8; n];
    for code in 0..total {
        let mut c = code;
        for s in side.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        if !side.contains(&1) || !side.contains(&2) {
            continue;
        }
        let reachable = (0..n).filter(|&v| side[v] != 0).any(|v| {
            (0..n)
                .filter(|&u| u != v && side[u] != side[v] && g.has_edge(u, v))
                .count()
                >= r
        });
        if !reachable {
            return false;
        }
    }
    true
}

fn robustness_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut robust_counts = [0usize; 3];
    for sample in 0..200 {
        let n = rng.random_range(2..=7);
        let p = rng.random_range(0.3..1.0);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random_bool(p) {
                    edges.push((i, j));
                }
            }
        }
        let g = Topology::from_edges(n, edges).map_err(|e| e.to_string())?;
        for r in 1..=3 {
            let fast = g.is_r_robust(r).map_err(|e| e.to_string())?;
            let slow = brute_force_robust(&g, r);
            ensure(fast == slow, || format!("sample {sample} (n = {n}), r = {r}: {fast} vs brute force {slow}"))?;
            robust_counts[r - 1] += fast as usize;
        }
    }
    let k8 = Topology::complete(8).map_err(|e| e.to_string())?;
    ensure(matches!(k8.is_r_robust(4), Ok(true)), || "K8 not certified 4-robust".into())?;
    ensure(matches!(k8.is_r_robust(5), Ok(false)), || "K8 certified 5-robust".into())?;
    ensure(brute_force_robust(&k8, 4) && !brute_force_robust(&k8, 5), || "K8 brute force disagrees".into())?;
    Ok(format!(
        "200 samples agree for r = 1, 2, 3 (robust counts {robust_counts:?}); K8 is 4- but not 5-robust"
    ))
}

fn small_config(run: u64) -> Result<SimulationConfig, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + run);
    let n = rng.random_range(7..=12);
    let topology = generate_robust_graph(n, 3, run).map_err(|e| e.to_string())?;
    ensure(matches!(topology.is_r_robust(3), Ok(true)), || format!("run {run}: graph not 3-robust"))?;
    let adversaries = select_f_local_adversaries(&topology, 1, 1, run).map_err(|e| e.to_string())?;
    let objectives = (0..n)
        .map(|_| Arc::new(QuadraticObjective::random(2, &mut rng)) as Arc<dyn Objective>)
        .collect();
    Ok(SimulationConfig {
        omega: harness::config::default_omega(&topology),
        topology,
        algorithm: Algorithm::DistMinMax,
        f: 1,
        step: StepSize::default(),
        grad_bound: 1e5,
        weight_policy: WeightPolicy::Random,
        horizon: 400,
        seed: run,
        objectives,
        adversaries,
        strategy: AdversaryStrategy::default(),
        optimize_tol: 1e-10,
        initial_states: None,
    })
}

fn y_diameters(traj: &byzopt::protocol::Trajectory, k: usize) -> Vec<f64> {
    let ys = traj.regular_y(k);
    (0..ys[0].len())
        .map(|l| {
            let hi = ys.iter().map(|y| y[l]).fold(f64::NEG_INFINITY, f64::max);
            let lo = ys.iter().map(|y| y[l]).fold(f64::INFINITY, f64::min);
            hi - lo
        })
        .collect()
}

fn aux_contraction() -> Check {
    let mut worst_ratio = 0.0f64;
    let mut total_checks = 0;
    for run in 0..20 {
        let config = small_config(run)?;
        let traj = run_rounds(&config).map_err(|e| e.to_string())?;
        let r = traj.regular.len();
        let gamma = aux_consensus_constants(config.omega, r, 0.0).map_err(|e| e.to_string())?.gamma;
        ensure(gamma == 1.0 - config.omega.powi(r as i32 - 1) / 2.0, || "gamma formula".into())?;
        let diam: Vec<Vec<f64>> = (0..=traj.rounds()).map(|k| y_diameters(&traj, k)).collect();
        for k in 0..diam.len().saturating_sub(r - 1) {
            for l in 0..diam[k].len() {
                total_checks += 1;
                let later = diam[k + r - 1][l];
                ensure(later <= gamma * diam[k][l] + 1e-9, || {
                    format!("run {run}, k = {k}, coordinate {l}: {later} > {gamma} * {}", diam[k][l])
                })?;
            }
        }
        let initial = diam[0].iter().cloned().fold(0.0, f64::max);
        let last = diam.last().unwrap().iter().cloned().fold(0.0, f64::max);
        ensure(last < 1e-8 * initial, || format!("run {run}: final y diameter {last} vs initial {initial}"))?;
        worst_ratio = worst_ratio.max(last / initial);
        ensure(traj.checks.passed(), || format!("run {run}: runtime violations {:?}", traj.checks.violations))?;
    }
    Ok(format!("{total_checks} contraction checks hold; worst final/initial y diameter {worst_ratio:.2e}"))
}

struct Experiments {
    quadratic: Vec<RunOutcome>,
    dist_only: Vec<RunOutcome>,
    logistic: Vec<RunOutcome>,
}

fn run_named(name: &str) -> Result<Vec<RunOutcome>, String> {
    let p = preset(name).ok_or_else(|| format!("missing preset {name}"))?;
    harness::run_preset(&p, p.runs, SEED).map_err(|e| e.to_string())
}

fn consensus(exp: &Experiments) -> Check {
    ensure(exp.quadratic.len() == 10, || "expected 10 runs".into())?;
    let mut worst = 0.0f64;
    for o in &exp.quadratic {
        let t = &o.trajectory;
        ensure(t.rounds() == 300 && o.config.topology.n() == 25 && o.config.f == 2, || "preset shape".into())?;
        let initial = max_pairwise_dist(&t.regular_x(0));
        let last = max_pairwise_dist(&t.regular_x(t.rounds()));
        let ratio = last / initial;
        ensure(ratio <= 0.05, || format!("run {}: final spread {ratio:.4} of initial", o.index))?;
        worst = worst.max(ratio);
    }
    Ok(format!("10/10 runs; worst final x spread {:.2}% of initial", 100.0 * worst))
}

fn containment(exp: &Experiments) -> Check {
    let mut certified = 0;
    for (name, runs) in [("quadratic", &exp.quadratic), ("quadratic-dist-only", &exp.dist_only), ("logistic", &exp.logistic)] {
        for o in runs {
            let cert = o.certificate.as_ref().map_err(|e| format!("{name} run {}: {e}", o.index))?;
            let t = &o.trajectory;
            let k = t.rounds();
            let tol = y_diameters(t, k).iter().map(|v| v * v).sum::<f64>().sqrt() + 1e-6;
            let radius = cert.s_star_min + tol;
            let y_inf = &cert.y_inf_hat;
            let d_star = dist(&t.x_star, y_inf);
            ensure(d_star <= radius, || format!("{name} run {}: |x* - y| = {d_star} > {radius}", o.index))?;
            let far = t.regular_x(k).iter().map(|x| dist(x, y_inf)).fold(0.0, f64::max);
            ensure(far <= radius, || format!("{name} run {}: max |x_i - y| = {far} > {radius}", o.index))?;
            certified += 1;
        }
    }
    let mut below = 0;
    for o in &exp.quadratic {
        let avg = regular_objective(&o.config).map_err(|e| e.to_string())?;
        let t = &o.trajectory;
        let k = t.rounds();
        let gap_x = avg.value(&mean(&t.regular_x(k)).unwrap()) - t.f_star;
        let gap_y = avg.value(&mean(&t.regular_y(k)).unwrap()) - t.f_star;
        below += (gap_x < gap_y) as usize;
    }
    ensure(below >= 9, || format!("f(x_bar) - f* < f(y_bar) - f* in only {below}/10 runs"))?;
    Ok(format!("{certified} certified runs contained; x gap below y gap in {below}/10 runs"))
}

fn tolerance_formulas() -> Check {
    ensure(max_tolerance(25, 2, Algorithm::DistMinMax) == 2, || {
        format!("max_tolerance(25, 2, DistMinMax) = {}", max_tolerance(25, 2, Algorithm::DistMinMax))
    })?;
    let f = max_f_for_robustness(11, 2, Algorithm::DistOnly);
    ensure(f == 5, || format!("11-robust admits F = {f} without min-max"))?;
    ensure(2 * f + 1 <= 11 && Algorithm::DistOnly.required_robustness(2, 5) == 11, || "2F + 1 <= 11".into())?;
    Ok("max_tolerance(25, 2) = 2 with min-max; 11-robust admits F = 5 with the distance filter only".into())
}

fn z_radius_check(exp: &Experiments) -> Check {
    let mut checked = 0usize;
    for o in exp.quadratic.iter().chain(&exp.dist_only).chain(&exp.logistic) {
        let t = &o.trajectory;
        ensure(t.checks.passed(), || format!("run {}: {:?}", o.index, t.checks.violations.first()))?;
        for k in 0..t.rounds() {
            let st = &t.states[k];
            for (r, &i) in t.regular.iter().enumerate() {
                let reach = o.config.topology.in_neighbors(i)
                    .iter()
                    .copied()
                    .filter(|&j| !o.config.adversaries.contains(j))
                    .chain([i])
                    .map(|j| dist(&st[j].x, &st[i].y))
                    .fold(0.0, f64::max);
                let lhs = dist(&t.z[k][r], &st[i].y);
                ensure(lhs <= reach + 1e-9, || format!("run {} k = {k} agent {i}: {lhs} > {reach}", o.index))?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} agent-rounds recomputed, no violations"))
}

fn central_difference(obj: &dyn Objective, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|l| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[l] += h;
            m[l] -= h;
            (obj.value(&p) - obj.value(&m)) / (2.0 * h)
        })
        .collect()
}

fn gradient_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let data = Dataset::synthetic(200, SEED);
    let quad = QuadraticObjective::random(4, &mut rng);
    let logi = LogisticObjective::new(&data.features[..40], &data.labels[..40], 0.5, 3.0).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (name, obj, spread) in [("quadratic", &quad as &dyn Objective, 5.0), ("logistic", &logi as &dyn Objective, 1.0)] {
        for p in 0..100 {
            let x: Vec<f64> = (0..obj.dim()).map(|_| rng.random_range(-spread..spread)).collect();
            let g = obj.subgradient(&x);
            let fd = central_difference(obj, &x, 1e-5);
            let err = dist(&g, &fd) / g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            ensure(err <= 1e-4, || format!("{name} point {p}: relative error {err:.3e}"))?;
            worst = worst.max(err);
        }
    }
    Ok(format!("200 points; worst relative error {worst:.2e}"))
}

fn logistic_accuracy(exp: &Experiments) -> Check {
    ensure(exp.logistic.len() == 5, || "expected 5 runs".into())?;
    let mut gaps = Vec::new();
    for o in &exp.logistic {
        let rep = o.logistic.as_ref().ok_or("missing logistic report")?;
        ensure(o.trajectory.rounds() == 200 && o.config.f == 2, || "preset shape".into())?;
        let gap = rep.centralized.test - rep.distributed.test;
        ensure(gap <= 0.03, || {
            format!("run {}: test accuracy {:.4} vs centralized {:.4}", o.index, rep.distributed.test, rep.centralized.test)
        })?;
        gaps.push(format!("{:+.2}", 100.0 * gap));
    }
    Ok(format!("centralized minus distributed test accuracy (pp): {}", gaps.join(", ")))
}

/// Reconstructs 100 rounds of attack messages and replays each through the
/// receiver's complete inbox.
fn attack_soundness() -> Check {
    let p = preset("quadratic").ok_or("missing preset")?;
    let mut file = p.config_for_run(SEED, 0);
    file.horizon = 100;
    let config = file.build(std::path::Path::new(".")).map_err(|e| e.to_string())?.config;
    let traj = run_rounds(&config).map_err(|e| e.to_string())?;
    let topo = &config.topology;
    let (mut total, mut kept) = (0usize, 0usize);
    for k in 0..traj.rounds() {
        let states: &[AgentState] = &traj.states[k];
        let mut messages = RoundMessages::from_regular(topo, states, &config.adversaries);
        let ctx = AdversaryContext {
            round: k,
            states,
            topology: topo,
            f: config.f,
            algorithm: config.algorithm,
            adversaries: &config.adversaries,
            x_star: &traj.x_star,
            seed: config.seed,
        };
        let crafted = craft_messages(&config.strategy, &ctx, &messages).map_err(|e| e.to_string())?;
        for c in &crafted {
            messages.insert(c.sender, c.receiver, c.message.clone());
        }
        for c in &crafted {
            let i = c.receiver;
            let (xs, ys) = messages.inbox(topo, i, &states[i]);
            let xs: Vec<_> = xs.into_iter().filter(|e| e.owner != c.sender).collect();
            let ys: Vec<_> = ys.into_iter().filter(|e| e.owner != c.sender).collect();
            let x_ok = x_survives(config.f, config.algorithm, i, &states[i].y, &xs, c.sender, &c.message.x);
            let y_ok = y_survives(config.f, i, &ys, c.sender, &c.message.y).iter().all(|&b| b);
            total += 1;
            kept += (x_ok && y_ok) as usize;
        }
        // The logged next state must follow from these exact messages.
        for &i in &traj.regular {
            let (xs, ys) = messages.inbox(topo, i, &states[i]);
            let x_dist = distance_filter(config.f, i, &states[i].y, &xs).map_err(|e| e.to_string())?;
            let x_mm = minmax_filter_x(config.f, i, &x_dist).map_err(|e| e.to_string())?;
            let y_mm = minmax_filter_y(config.f, i, &ys).map_err(|e| e.to_string())?;
            for a in config.adversaries.members() {
                if topo.has_edge(*a, i) {
                    ensure(x_mm.iter().any(|e| e.owner == *a), || format!("round {k}: {a} -> {i} x dropped"))?;
                    ensure(y_mm.iter().all(|c| c.iter().any(|s| s.owner == *a)), || {
                        format!("round {k}: {a} -> {i} y dropped")
                    })?;
                }
            }
        }
    }
    ensure(total > 0 && kept == total, || format!("{kept}/{total} messages survived"))?;
    ensure(traj.audit.promised_failures.is_empty(), || "in-run audit reported failures".into())?;
    Ok(format!("{}/{} messages over 100 rounds survive replay", kept, total))
}

fn report(n: usize, name: &str, result: std::thread::Result<Check>) -> bool {
    let (ok, detail) = match result {
        Ok(Ok(d)) => (true, d),
        Ok(Err(d)) => (false, d),
        Err(p) => (
            false,
            p.downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()),
        ),
    };
    println!("criterion {n:>2} {}: {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn check(n: usize, name: &str, f: impl FnOnce() -> Check) -> bool {
    report(n, name, catch_unwind(AssertUnwindSafe(f)))
}

fn main() -> ExitCode {
    let mut ok = check(1, "worked example", worked_example);
    ok &= check(2, "robustness oracle", robustness_oracle);
    ok &= check(3, "auxiliary contraction", aux_contraction);

    let exp = catch_unwind(|| -> Result<Experiments, String> {
        Ok(Experiments {
            quadratic: run_named("quadratic")?,
            dist_only: run_named("quadratic-dist-only")?,
            logistic: run_named("logistic")?,
        })
    })
    .unwrap_or_else(|_| Err("experiments panicked".into()));
    let with_exp = |n: usize, name: &str, f: fn(&Experiments) -> Check| {
        check(n, name, || exp.as_ref().map_err(|e| format!("experiments unavailable: {e}")).and_then(f))
    };
    ok &= with_exp(4, "consensus of states", consensus);
    ok &= with_exp(5, "containment", containment);
    ok &= check(6, "tolerance formulas", tolerance_formulas);
    ok &= with_exp(7, "z within regular radius", z_radius_check);
    ok &= check(8, "gradient checks", gradient_checks);
    ok &= with_exp(9, "logistic accuracy", logistic_accuracy);
    ok &= check(10, "attack soundness", attack_soundness);

    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
