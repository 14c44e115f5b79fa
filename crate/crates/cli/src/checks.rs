//! Self-checks shared by `equm oracle-check` and the acceptance target.
//!
//! Each check compares library code against an independent computation:
//! hand-derived closed forms, finite differences or brute force.

use std::time::Instant;

use equm::learners::{
    compare_double_sampling_demo, episode_gradient_dual, episode_gradient_equm, episode_gradient_reinforce,
    episode_gradient_second_moment, UtilitySpec,
};
use equm::metrics::{max_drawdown, pareto_filter, read_report_csv, write_report_csv, EvalReport, FrontierPoint};
use equm::oracle::{enumerate_trajectories, exact_mean_and_gradients, TabularMdp};
use equm::policy::{softmax, MlpPolicy, TabularSoftmax};
use equm::{rollout, ActionId, GradVector, Policy, RngStream};

#[derive(Clone, Debug)]
pub struct CheckResult {
    /// Acceptance criterion this check backs.
    pub criterion: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {}: {} ({}; {:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.criterion,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn timed(criterion: usize, name: &'static str, f: impl FnOnce() -> Result<String, String>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    CheckResult {
        criterion,
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_all() -> Vec<CheckResult> {
    vec![
        estimator_identities(),
        mlp_finite_differences(),
        algebraic_identities(),
        mse_equivalence(),
        double_sampling(),
        pareto_oracle(),
        metrics_examples(),
    ]
}

const TREE_FIRST: [f64; 2] = [0.5, -1.0];
const TREE_LEAVES: [f64; 4] = [2.0, -1.5, 3.0, 0.25];

fn tree() -> TabularMdp {
    TabularMdp::binary_tree(TREE_FIRST, TREE_LEAVES)
}

/// Exact `grad E[f(R)]` on the binary tree, by differentiating
/// `sum_{a,b} p0(a) p_a(b) f(R_ab)` through the softmax directly.
fn tree_gradient(params: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    // tabular layout: logit of action k in state s is params[k * 3 + s]
    let probs = |s: usize| softmax(&[params[s], params[3 + s]]).expect("finite logits");
    let p0 = probs(0);
    let leaf = |a: usize, b: usize| f(TREE_FIRST[a] + TREE_LEAVES[2 * a + b]);
    let value = |a: usize| {
        let pa = probs(1 + a);
        (0..2).map(|b| pa[b] * leaf(a, b)).sum::<f64>()
    };
    let mut g = vec![0.0; 6];
    for k in 0..2 {
        g[k * 3] = (0..2)
            .map(|a| p0[a] * (f64::from(u8::from(a == k)) - p0[k]) * value(a))
            .sum();
        for a in 0..2 {
            let pa = probs(1 + a);
            g[k * 3 + 1 + a] = p0[a]
                * (0..2)
                    .map(|b| pa[b] * (f64::from(u8::from(b == k)) - pa[k]) * leaf(a, b))
                    .sum::<f64>();
        }
    }
    g
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn estimator_identities() -> CheckResult {
    timed(1, "estimator identities on the enumerable tree", || {
        let env = tree();
        let mut rng = RngStream::new(11, 0);
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let params: Vec<f64> = (0..6).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
            let policy = TabularSoftmax::from_params(3, 2, params.clone()).map_err(|e| e.to_string())?;
            let (alpha, beta) = (rng.uniform_range(0.1, 3.0), rng.uniform_range(0.0, 2.0));
            let u = UtilitySpec::new(alpha, beta).map_err(|e| e.to_string())?;
            let mut first = GradVector::zeros(6);
            let mut second = GradVector::zeros(6);
            let mut equm = GradVector::zeros(6);
            let trajs = enumerate_trajectories(&env, &policy, 1.0).map_err(|e| e.to_string())?;
            if trajs.len() != 4 {
                return Err(format!("expected 4 trajectories, enumerated {}", trajs.len()));
            }
            for wt in &trajs {
                let t = &wt.trajectory;
                first.add_scaled(&episode_gradient_reinforce(&policy, t).map_err(|e| e.to_string())?, wt.probability);
                second.add_scaled(
                    &episode_gradient_second_moment(&policy, t).map_err(|e| e.to_string())?,
                    wt.probability,
                );
                equm.add_scaled(&episode_gradient_equm(&policy, t, &u).map_err(|e| e.to_string())?, wt.probability);
            }
            let g1 = tree_gradient(&params, |r| r);
            let g2 = tree_gradient(&params, |r| r * r);
            let gu: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| alpha * a - 0.5 * beta * b).collect();
            let exact = exact_mean_and_gradients(&env, &policy, 1.0).map_err(|e| e.to_string())?;
            worst = worst
                .max(max_abs_diff(&first, &g1))
                .max(max_abs_diff(&second, &g2))
                .max(max_abs_diff(&equm, &gu))
                .max(max_abs_diff(&exact.grad_mean, &g1))
                .max(max_abs_diff(&exact.grad_second, &g2));
        }
        let detail = format!("max coordinate error {worst:.2e} over 50 random policies");
        if worst <= 1e-10 {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

/// Smallest `|pre-activation|` over the hidden units; central differences
/// are only meaningful when every rectifier is away from its kink.
fn hidden_margin(dims: &[usize], params: &[f64], x: &[f64]) -> f64 {
    let mut current = x.to_vec();
    let mut offset = 0;
    let mut margin = f64::INFINITY;
    for (l, w) in dims.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        let (weights, rest) = params[offset..].split_at(n_in * n_out);
        let next: Vec<f64> = weights
            .chunks(n_in)
            .zip(&rest[..n_out])
            .map(|(row, b)| b + row.iter().zip(&current).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        offset += n_in * n_out + n_out;
        if l + 2 < dims.len() {
            margin = next.iter().fold(margin, |m, z| m.min(z.abs()));
            current = next.into_iter().map(|z| z.max(0.0)).collect();
        }
    }
    margin
}

pub fn mlp_finite_differences() -> CheckResult {
    timed(2, "log-probability gradient vs central differences", || {
        let mut rng = RngStream::new(12, 0);
        let dims = [4, 7, 5, 3];
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        let mut redrawn = 0;
        let mut probes = 0;
        while probes < 100 {
            let mut policy = MlpPolicy::glorot(&dims, &mut rng).map_err(|e| e.to_string())?;
            for p in policy.params_mut() {
                *p += rng.uniform_range(-0.5, 0.5);
            }
            let state: Vec<f64> = (0..dims[0]).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
            // a parameter step of h moves a pre-activation by at most ~h * |input|
            if hidden_margin(&dims, policy.params(), &state) < 1e-2 {
                redrawn += 1;
                continue;
            }
            probes += 1;
            let action = ActionId(rng.index(dims[3]));
            let analytic = policy.log_prob_grad(&state, action).map_err(|e| e.to_string())?;
            let mut numeric = vec![0.0; policy.num_params()];
            for (i, slot) in numeric.iter_mut().enumerate() {
                let orig = policy.params()[i];
                policy.params_mut()[i] = orig + h;
                let up = policy.log_prob(&state, action).map_err(|e| e.to_string())?;
                policy.params_mut()[i] = orig - h;
                let down = policy.log_prob(&state, action).map_err(|e| e.to_string())?;
                policy.params_mut()[i] = orig;
                *slot = (up - down) / (2.0 * h);
            }
            let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = analytic.norm().max(GradVector(numeric).norm()).max(1e-12);
            worst = worst.max(diff / scale);
        }
        let detail = format!("worst relative error {worst:.2e} over 100 probes ({redrawn} redrawn near a kink)");
        if worst < 1e-5 {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn algebraic_identities() -> CheckResult {
    timed(3, "decomposition, regularization and dual identities", || {
        let mut rng = RngStream::new(13, 0);
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let n = 2 + rng.index(50);
            let returns: Vec<f64> = (0..n).map(|_| rng.uniform_range(-5.0, 10.0)).collect();
            let (alpha, beta) = (rng.uniform_range(0.1, 3.0), rng.uniform_range(0.01, 2.0));
            let u = UtilitySpec::new(alpha, beta).map_err(|e| e.to_string())?;
            let mean = returns.iter().sum::<f64>() / n as f64;
            let second = returns.iter().map(|r| r * r).sum::<f64>() / n as f64;
            let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n as f64;
            let avg_utility = returns.iter().map(|&r| u.utility(r)).sum::<f64>() / n as f64;
            let decomposed =
                -0.5 * beta * (mean - alpha / beta).powi(2) + alpha * alpha / (2.0 * beta) - 0.5 * beta * var;
            worst = worst.max(rel_err(avg_utility, decomposed));
            worst = worst.max(rel_err(u.mean_variance_form(mean, var), decomposed));
            let psi = u.risk_weight();
            worst = worst.max(rel_err(-mean + psi * second, -avg_utility / alpha));
        }

        let env = tree();
        for _ in 0..200 {
            let params: Vec<f64> = (0..6).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
            let policy = TabularSoftmax::from_params(3, 2, params).map_err(|e| e.to_string())?;
            let traj = rollout(&env, &policy, &mut rng, 1.0).map_err(|e| e.to_string())?;
            let y = rng.uniform_range(0.1, 10.0);
            let dual = episode_gradient_dual(&policy, &traj, y).map_err(|e| e.to_string())?;
            let u = UtilitySpec::new(y, 1.0).map_err(|e| e.to_string())?;
            let equm = episode_gradient_equm(&policy, &traj, &u).map_err(|e| e.to_string())?;
            for (d, e) in dual.iter().zip(equm.iter()) {
                worst = worst.max(rel_err(*d, 2.0 * e));
            }
        }
        let detail = format!("worst relative error {worst:.2e}");
        if worst <= 1e-10 {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

/// Grid cell maximizing `score`; ties keep the first.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn mse_equivalence() -> CheckResult {
    timed(4, "utility argmax equals target-MSE argmin on a 21x21 grid", || {
        let env = tree();
        let grid: Vec<f64> = (0..21).map(|i| -3.0 + 0.3 * i as f64).collect();
        let mut moments = Vec::with_capacity(grid.len() * grid.len());
        for &root in &grid {
            for &shared in &grid {
                // action-1 logit at the root, and one logit shared by both second-step states
                let params = vec![0.0, 0.0, 0.0, root, shared, shared];
                let policy = TabularSoftmax::from_params(3, 2, params).map_err(|e| e.to_string())?;
                let m = exact_mean_and_gradients(&env, &policy, 1.0).map_err(|e| e.to_string())?;
                moments.push((m.mean, m.second_moment));
            }
        }
        let mut cells = Vec::new();
        for (alpha, beta) in [(1.0, 0.5), (1.0, 0.2), (2.0, 1.5)] {
            let zeta: f64 = alpha / beta;
            let utility: Vec<f64> = moments.iter().map(|(m, q)| alpha * m - 0.5 * beta * q).collect();
            let neg_mse: Vec<f64> = moments.iter().map(|(m, q)| -(zeta * zeta - 2.0 * zeta * m + q)).collect();
            let (a, b) = (argmax(&utility), argmax(&neg_mse));
            if a != b {
                return Err(format!("alpha={alpha} beta={beta}: utility cell {a}, mse cell {b}"));
            }
            cells.push((a / 21, a % 21));
        }
        Ok(format!("argmax cells {cells:?}"))
    })
}

pub fn double_sampling() -> CheckResult {
    timed(5, "double-sampling bias demo", || {
        let u = UtilitySpec::new(1.0, 0.5).map_err(|e| e.to_string())?;
        let constant = TabularMdp::constant(2.0, 3, 2);
        let flat = compare_double_sampling_demo(&constant, &TabularSoftmax::zeros(3, 2), &u, 1.0)
            .map_err(|e| e.to_string())?;
        // away from the uniform policy the score terms cancel only up to rounding
        let skewed = TabularSoftmax::from_params(3, 2, vec![0.3, -0.2, 0.1, 0.7, -0.4, 0.0]).map_err(|e| e.to_string())?;
        let skewed = compare_double_sampling_demo(&constant, &skewed, &u, 1.0).map_err(|e| e.to_string())?;
        let bandit = TabularMdp::bandit(&[0.0, 2.0]);
        let policy = TabularSoftmax::from_params(1, 2, vec![0.0, 0.4]).map_err(|e| e.to_string())?;
        let noisy = compare_double_sampling_demo(&bandit, &policy, &u, 1.0).map_err(|e| e.to_string())?;
        let detail = format!(
            "deterministic gaps {:.1e}/{:.1e}, bandit gap {:.3}, utility gaps {:.1e}/{:.1e}",
            flat.gap_norm(),
            skewed.gap_norm(),
            noisy.gap_norm(),
            flat.utility_gap,
            noisy.utility_gap
        );
        if flat.gap_norm() == 0.0 && skewed.gap_norm() <= 1e-12 && noisy.gap_norm() > 0.0 && flat.utility_gap <= 1e-12 && noisy.utility_gap <= 1e-12 {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

fn brute_force_dominated(points: &[FrontierPoint]) -> Vec<bool> {
    points
        .iter()
        .map(|p| {
            points.iter().any(|q| {
                q.var <= p.var && q.cr >= p.cr && (q.var < p.var || q.cr > p.cr)
            })
        })
        .collect()
}

pub fn pareto_oracle() -> CheckResult {
    timed(9, "Pareto filter vs brute force", || {
        let mut rng = RngStream::new(19, 0);
        for set in 0..1000 {
            let n = 1 + rng.index(200);
            // coarse grid so that ties in either coordinate are common
            let levels = 2 + rng.index(30);
            let points: Vec<FrontierPoint> = (0..n)
                .map(|i| FrontierPoint::new(i.to_string(), rng.index(levels) as f64, rng.index(levels) as f64 - 5.0))
                .collect();
            let expected = brute_force_dominated(&points);
            let got: Vec<bool> = pareto_filter(points).iter().map(|p| p.dominated).collect();
            if got != expected {
                return Err(format!("set {set} of size {n} disagrees"));
            }
        }
        Ok("1000 sets agree".into())
    })
}

pub fn metrics_examples() -> CheckResult {
    timed(10, "drawdown examples and report round trip", || {
        let examples: [(&[f64], f64); 3] = [
            (&[0.1, 0.2, 0.05], 0.0),
            (&[1.0, -0.5], -0.5),
            (&[0.1, -0.2, 0.05, -0.1], -0.244),
        ];
        for (returns, expected) in examples {
            let got = max_drawdown(returns).map_err(|e| e.to_string())?;
            if (got - expected).abs() > 1e-12 {
                return Err(format!("max drawdown of {returns:?} is {got}, expected {expected}"));
            }
        }
        let mut rng = RngStream::new(20, 0);
        let reports: Vec<EvalReport> = (0..50)
            .map(|i| {
                let cr = rng.uniform_range(-10.0, 10.0) / 3.0;
                let var = if i % 7 == 0 { 0.0 } else { rng.uniform_range(0.0, 50.0) / 7.0 };
                EvalReport {
                    label: format!("run \"{i}\", x"),
                    n_trials: 1 + rng.index(100_000),
                    cr,
                    var,
                    rr: EvalReport::risk_return(cr, var, 12f64.sqrt()),
                    maxdd: (i % 2 == 0).then(|| -rng.uniform()),
                    mse_to_target: (i % 3 == 0).then(|| rng.uniform() * 1e-7),
                    zeta: (i % 3 == 0).then_some(4.0),
                    returns: None,
                }
            })
            .collect();
        let text = write_report_csv(&reports);
        let back = read_report_csv(&text).map_err(|e| e.to_string())?;
        if back != reports {
            return Err("report CSV does not round-trip".into());
        }
        if write_report_csv(&back) != text {
            return Err("report CSV re-serialization differs".into());
        }
        Ok("3 examples exact, 50-row CSV round-trips".into())
    })
}
