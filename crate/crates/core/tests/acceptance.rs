//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_rational::Rational64;

use blockrr::dataset::{generate_synthetic, ClassCountProfile, LabelDataset};
use blockrr::mechanisms::regression::RegressionMechanismConfig;
use blockrr::mechanisms::SystemShape;
use blockrr::partition::{build_pipeline, derive_partition, run_pipeline, PipelineParams};
use blockrr::prior::{estimate_prior, estimate_prior_without_noise, sample_laplace};
use blockrr::verifier::{
    check_label_dp, check_lp_conditions, check_monotonicity, check_unification,
    empirical_rpwithprior_mass, empirical_transition, random_config, UnificationParams,
};
use blockrr::{
    build_blockrr_matrix, build_rr_matrix, solve_beta_gamma, BlockMapping, Label, LabelSet,
    MechanismMatrix, PartitionConfig, PriorDistribution, RandomStream,
};

const SWEEP: usize = 1000;

/// The same 1000 configurations feed every sweep criterion.
fn sweep() -> Vec<PartitionConfig> {
    let mut s = RandomStream::new(2024).fork("acceptance-sweep");
    (0..SWEEP).map(|_| random_config(&mut s, 12, 0.1, 8.0)).collect()
}

fn k4(l: usize) -> PartitionConfig {
    PartitionConfig::new(
        4,
        LabelSet::from([0, 1]),
        LabelSet::from([2, 3]),
        (0..4).collect(),
        (0..l).collect(),
        2f64.ln(),
        BlockMapping::identity(4),
    )
    .unwrap()
}

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Exact β and γ at `e^ε = 2` by Cramer's rule on the two normalization
/// equations.
fn rational_beta_gamma(c: &PartitionConfig) -> (Rational64, Rational64) {
    let r = |x: usize| Rational64::from_integer(x as i64);
    let a = r(c.mapping().block_size());
    let (n, n1, n2, l) = (r(c.s_tilde().len()), r(c.s_tilde1().len()), r(c.s_tilde2().len()), r(c.l()));
    let one = Rational64::from_integer(1);
    let rhs2 = one - l / n;
    let det = (a + n1) * (a + n2) - n2 * (n1 - l);
    let beta = ((a + n2) - n2 * rhs2) / det;
    let gamma = ((a + n1) * rhs2 - (n1 - l)) / det;
    (beta, gamma)
}

/// The transition rule evaluated in exact arithmetic at `e^ε = 2`.
fn rational_matrix(c: &PartitionConfig) -> Vec<Vec<Rational64>> {
    let (beta, gamma) = rational_beta_gamma(c);
    let two = Rational64::from_integer(2);
    let uniform = Rational64::new(1, c.s_tilde().len() as i64);
    (0..c.k())
        .map(|y| {
            let block = c.mapping().block(y);
            c.s_tilde()
                .iter()
                .map(|t| {
                    if c.s1().contains(&y) {
                        if c.s_tilde2().contains(t) {
                            gamma
                        } else if block.contains(t) {
                            two * beta
                        } else {
                            beta
                        }
                    } else if c.delta().contains(t) || c.s_tilde2().is_empty() {
                        uniform
                    } else if block.contains(t) {
                        two * gamma
                    } else if c.s_tilde1().contains(t) {
                        beta
                    } else {
                        gamma
                    }
                })
                .collect()
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (i, c) in sweep().iter().enumerate() {
        let m = build_blockrr_matrix(c).map_err(|e| format!("config {i}: {e}"))?;
        let r = check_label_dp(&m, c.epsilon()).map_err(|e| e.to_string())?;
        let bound = c.epsilon().exp() * (1.0 + 1e-9);
        ensure(r.dp_pass && r.max_ratio <= bound, || {
            format!("config {i}: ratio {} > {bound}", r.max_ratio)
        })?;
        worst = worst.max(r.max_ratio / c.epsilon().exp());
    }
    let elapsed = start.elapsed();

    // Exact-rational cross-check at e^ε = 2 for K ≤ 6.
    let mut s = RandomStream::new(7).fork("rational");
    let two = Rational64::from_integer(2);
    for i in 0..200 {
        let c = random_config(&mut s, 6, 2f64.ln(), 2f64.ln());
        let exact = rational_matrix(&c);
        for row in &exact {
            ensure(row.iter().sum::<Rational64>() == Rational64::from_integer(1), || {
                format!("rational config {i}: row does not sum to 1")
            })?;
        }
        for j in 0..c.s_tilde().len() {
            let col: Vec<Rational64> = exact.iter().map(|r| r[j]).collect();
            let max = *col.iter().max().unwrap();
            let min = *col.iter().min().unwrap();
            ensure(min > Rational64::from_integer(0) && max <= two * min, || {
                format!("rational config {i}: column {j} ratio {max}/{min}")
            })?;
        }
        let m = build_blockrr_matrix(&c).unwrap();
        for (fr, er) in m.rows().iter().zip(&exact) {
            for (f, e) in fr.iter().zip(er) {
                let e = *e.numer() as f64 / *e.denom() as f64;
                ensure((f - e).abs() <= 1e-15, || format!("rational config {i}: {f} vs {e}"))?;
            }
        }
    }
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{SWEEP} configs, max ratio/e^eps = {worst:.15}, {:.2?}; 200 exact-rational configs agree",
        elapsed
    ))
}

fn criterion_2() -> Outcome {
    let mut worst_res = 0.0f64;
    let mut worst_kappa = 0.0f64;
    for (i, c) in sweep().iter().enumerate() {
        let shape = SystemShape::from_config(c);
        let bg = solve_beta_gamma(c).map_err(|e| e.to_string())?;
        let (r1, r2) = shape.residuals(&bg);
        // Only the minority equation binds when S~2 is empty and l = |S~1|;
        // the majority one then holds too.
        worst_res = worst_res.max(r1.abs()).max(r2.abs());
        let rel = (bg.kappa - shape.kappa_expansion()).abs() / bg.kappa;
        worst_kappa = worst_kappa.max(rel);
        ensure(r1.abs() <= 1e-12 && r2.abs() <= 1e-12, || format!("config {i}: residuals {r1:e}, {r2:e}"))?;
        ensure(rel <= 1e-12, || format!("config {i}: kappa relative gap {rel:e}"))?;
    }
    Ok(format!(
        "max residual {worst_res:.2e}, max relative kappa-expansion gap {worst_kappa:.2e}"
    ))
}

fn criterion_3() -> Outcome {
    for (i, c) in sweep().iter().take(500).enumerate() {
        let r = check_monotonicity(c, c.epsilon()).map_err(|e| e.to_string())?;
        ensure(r.pass, || format!("config {i}: {r:?}"))?;
    }
    let r = check_monotonicity(&k4(0), 2f64.ln()).map_err(|e| e.to_string())?;
    for l in 0..=2 {
        let (b, g) = rational_beta_gamma(&k4(l));
        let (b, g) = (*b.numer() as f64 / *b.denom() as f64, *g.numer() as f64 / *g.denom() as f64);
        ensure((r.betas[l] - b).abs() <= 1e-15 && (r.gammas[l] - g).abs() <= 1e-15, || {
            format!("l = {l}: ({}, {}) vs exact ({b}, {g})", r.betas[l], r.gammas[l])
        })?;
    }
    let expected = [(1, 5, 1, 5), (3, 14, 5, 28), (2, 9, 1, 6)];
    for (l, &(bn, bd, gn, gd)) in expected.iter().enumerate() {
        let (b, g) = rational_beta_gamma(&k4(l));
        ensure(b == Rational64::new(bn, bd) && g == Rational64::new(gn, gd), || {
            format!("l = {l}: exact solve gave ({b}, {g})")
        })?;
    }
    ensure(r.argmin_gamma == 2, || "minimal gamma not at l = |S~1|".into())?;
    Ok("500 configs monotone; K=4 sweep (1/5,1/5) (3/14,5/28) (2/9,1/6)".into())
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0f64;
    let mut count = 0;
    for k in 2..=10usize {
        for eps in [0.5, 1.0, 2.0, 4.0] {
            let mut p = UnificationParams::new(k, eps);
            let weights: Vec<f64> = (0..k).map(|i| 1.0 / (i as f64 + 1.0)).collect();
            p.prior = Some(PriorDistribution::from_weights(&weights).unwrap());
            for name in ["RR", "RRWithPrior", "RRonBins"] {
                for d in check_unification(name, &p).map_err(|e| e.to_string())? {
                    ensure(d.pass, || format!("K={k} eps={eps}: {d:?}"))?;
                    worst = worst.max(d.value);
                    count += 1;
                }
            }
        }
    }
    let mut rp = String::new();
    for eps in [0.5, 1.0, 2.0, 4.0] {
        let p = UnificationParams::new(2, eps);
        for d in check_unification("RPWithPrior", &p).map_err(|e| e.to_string())? {
            ensure(d.pass, || format!("RPWithPrior eps={eps}: {d:?}"))?;
            if eps == 1.0 {
                rp.push_str(&format!(" {}={:.1e}", d.check, d.value));
            }
        }
    }
    Ok(format!("{count} matrix comparisons, max diff {worst:.1e}; RPWithPrior eps=1:{rp}"))
}

fn criterion_5() -> Outcome {
    // Equality e^ε·β = 1/|S~| holds in exact arithmetic whenever a block
    // covers all of S~, so both sides get a relative 1e-12 allowance.
    let mut tight = 0;
    for (i, c) in sweep().iter().enumerate() {
        let bg = solve_beta_gamma(c).map_err(|e| e.to_string())?;
        let n = c.s_tilde().len() as f64;
        let e = c.epsilon().exp();
        let upper = e * bg.beta;
        ensure(bg.beta <= (1.0 / n) * (1.0 + 1e-12) && upper >= (1.0 / n) * (1.0 - 1e-12), || {
            format!("config {i}: beta {}, e^eps beta {upper}, 1/|S~| {}", bg.beta, 1.0 / n)
        })?;
        if (upper * n - 1.0).abs() <= 1e-12 {
            tight += 1;
        }
    }
    Ok(format!("{SWEEP} configs, {tight} with e^eps beta = 1/|S~|"))
}

fn criterion_6() -> Outcome {
    let mut worst = 0.0f64;
    for (i, c) in sweep().iter().enumerate() {
        let m = build_blockrr_matrix(c).map_err(|e| e.to_string())?;
        let r = check_lp_conditions(&m, c);
        ensure(r.pass(), || format!("config {i}: {r:?}"))?;
        worst = worst
            .max(r.majority_boundary_gap)
            .max(r.minority_boundary_gap)
            .max(r.delta_uniform_deviation);
    }
    Ok(format!("{SWEEP} configs feasible, max boundary gap {worst:.1e}"))
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let n = 1_000_000;
    let mut lines = Vec::new();
    let matrices: Vec<(&str, MechanismMatrix)> = vec![
        ("K=4 l=1", build_blockrr_matrix(&k4(1)).unwrap()),
        ("K=4 l=2", build_blockrr_matrix(&k4(2)).unwrap()),
        ("RR K=10", build_rr_matrix(10, 1.0).unwrap()),
    ];
    for (i, (name, m)) in matrices.iter().enumerate() {
        let r = empirical_transition(m, n, &RandomStream::new(100 + i as u64)).map_err(|e| e.to_string())?;
        ensure(r.max_tv <= 0.01, || format!("{name}: TV {}", r.max_tv))?;
        lines.push(format!("{name} TV {:.4}", r.max_tv));
    }
    let cfg = RegressionMechanismConfig::new(0.0, 1.0, 0.1, 2f64.ln(), 10, 101).unwrap();
    for (i, y) in [0.5, 0.0, 0.05].into_iter().enumerate() {
        let mass = empirical_rpwithprior_mass(y, &cfg, n, &mut RandomStream::new(200 + i as u64))
            .map_err(|e| e.to_string())?;
        ensure((mass - 2.0 / 7.0).abs() <= 0.002, || format!("y={y}: mass {mass}"))?;
        lines.push(format!("N_y mass at {y}: {mass:.4}"));
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("{}; {elapsed:.2?}", lines.join(", ")))
}

fn criterion_8() -> Outcome {
    let n = 1_000_000;
    let mut out = Vec::new();
    for eps in [1.0, 0.5] {
        let b = 2.0 / eps;
        let mut s = RandomStream::new(8);
        let xs: Vec<f64> = (0..n).map(|_| sample_laplace(b, &mut s).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let target = 2.0 * b * b;
        ensure((var / target - 1.0).abs() <= 0.05, || format!("eps={eps}: variance {var} vs {target}"))?;
        out.push(format!("eps={eps} var {var:.3}/{target}"));
    }

    // The estimator itself: noise on unclamped counts, 20000 runs x 50 classes.
    let eps = 1.0;
    let labels: Vec<Label> = (0..50_000).map(|i| i % 50).collect();
    let mut s = RandomStream::new(9);
    let mut noise = Vec::with_capacity(n);
    for _ in 0..20_000 {
        let est = estimate_prior(&labels, eps, 50, &mut s).unwrap();
        ensure(est.histogram.scale == 2.0 / eps, || "scale is not 2/eps".into())?;
        for (&raw, &noisy) in est.histogram.raw_counts.iter().zip(&est.histogram.noisy_counts) {
            noise.push(noisy - raw as f64);
        }
    }
    let mean = noise.iter().sum::<f64>() / noise.len() as f64;
    let var = noise.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (noise.len() - 1) as f64;
    ensure((var / 8.0 - 1.0).abs() <= 0.05, || format!("estimator noise variance {var}"))?;
    out.push(format!("estimator noise var {var:.3}/8"));

    let d = generate_synthetic(&ClassCountProfile::cifar10_2(), &mut RandomStream::new(3)).unwrap();
    let est = estimate_prior_without_noise(&d.labels(), 1.0, 10).unwrap();
    let mut counts = [0u64; 10];
    for r in d.records() {
        counts[r.label] += 1;
    }
    for y in 0..10 {
        let direct = counts[y] as f64 / d.len() as f64;
        ensure(est.prior.get(y) == direct, || format!("class {y}: {} vs {direct}", est.prior.get(y)))?;
    }
    out.push("noiseless hook equals histogram".into());
    Ok(out.join(", "))
}

fn run_bytes(d: &LabelDataset, params: &PipelineParams, seed: u64) -> Vec<u8> {
    let run = run_pipeline(d, params, seed).unwrap();
    let mut bytes = Vec::new();
    run.randomized.write_csv(&mut bytes).unwrap();
    bytes.extend(serde_json::to_vec(&run.manifest).unwrap());
    bytes
}

fn criterion_9() -> Outcome {
    let d = generate_synthetic(&ClassCountProfile::cifar10_2(), &mut RandomStream::new(11)).unwrap();
    let params = PipelineParams::new(1.0, 1.2, 5);
    let root = RandomStream::new(7);
    let out = build_pipeline(&d, &params, &root).map_err(|e| e.to_string())?;
    let d2_ids = out.d2_ids();
    ensure(out.d1_ids.is_disjoint(&d2_ids), || "D1 and D2 overlap".into())?;
    ensure(out.d1_ids.len() == 307 && out.d1_ids.len() + d2_ids.len() == d.len(), || {
        format!("split sizes {} + {}", out.d1_ids.len(), d2_ids.len())
    })?;

    // Rewriting every D2 label leaves the prior and partition untouched.
    let scrambled: Vec<_> = d
        .records()
        .iter()
        .map(|r| {
            let mut r = *r;
            if d2_ids.contains(&r.id) {
                r.label = (r.label + 3) % 10;
            }
            r
        })
        .collect();
    let again = build_pipeline(&d.subset(scrambled), &params, &root).map_err(|e| e.to_string())?;
    ensure(again.prior_estimate == out.prior_estimate, || "prior read D2".into())?;
    ensure(again.config.partition == out.config.partition, || "partition read D2".into())?;

    // The randomized output covers exactly D2.
    let run = run_pipeline(&d, &params, 7).map_err(|e| e.to_string())?;
    let out_ids: std::collections::BTreeSet<u64> = run.randomized.records.iter().map(|r| r.id).collect();
    ensure(out_ids == d2_ids, || "randomized ids differ from D2".into())?;

    let a = run_bytes(&d, &params, 7);
    let b = run_bytes(&d, &params, 7);
    ensure(a == b, || "two runs differ".into())?;
    let mut reversed = d.records().to_vec();
    reversed.reverse();
    let c = run_pipeline(&d.subset(reversed), &params, 7).unwrap();
    ensure(c.randomized.by_id() == run.randomized.by_id(), || "input order changed output".into())?;
    Ok(format!(
        "|D1|={} |D2|={}, l={} sigma=1.2, {} output bytes identical across runs",
        out.d1_ids.len(),
        d2_ids.len(),
        out.derived.l_effective,
        a.len()
    ))
}

fn criterion_10() -> Outcome {
    let profile = ClassCountProfile::cifar10_2();
    let weights: Vec<f64> = profile.counts().iter().map(|&c| c as f64).collect();
    let prior = PriorDistribution::from_weights(&weights).unwrap();
    let derived = derive_partition(&prior, 8.0, 0.2, 0, &BlockMapping::identity(10)).map_err(|e| e.to_string())?;
    ensure(derived.config.s2().is_empty(), || format!("S2 = {:?}", derived.config.s2()))?;
    let rr = build_rr_matrix(10, 8.0).unwrap();
    let diff = build_blockrr_matrix(&derived.config).unwrap().max_abs_diff(&rr).unwrap();
    ensure(diff <= 1e-12, || format!("class-count prior: diff {diff}"))?;

    let d = generate_synthetic(&profile, &mut RandomStream::new(5)).unwrap();
    let mut worst = diff;
    for seed in 0..20 {
        let out = build_pipeline(&d, &PipelineParams::new(8.0, 0.2, 5), &RandomStream::new(seed))
            .map_err(|e| e.to_string())?;
        ensure(out.derived.degraded_to_rr, || format!("seed {seed}: S2 = {:?}", out.config.partition.s2()))?;
        let diff = out.matrix().unwrap().max_abs_diff(&rr).unwrap();
        ensure(diff <= 1e-12, || format!("seed {seed}: diff {diff}"))?;
        worst = worst.max(diff);
    }
    Ok(format!("S2 empty for the exact prior and 20 pipeline seeds; max diff to RR {worst:.1e}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("label-DP ratio bound", criterion_1),
        ("normalization residuals and kappa expansion", criterion_2),
        ("monotonicity of beta and gamma in l", criterion_3),
        ("recovery of RR, RRWithPrior, RRonBins, RPWithPrior", criterion_4),
        ("beta <= 1/|S~| <= e^eps beta", criterion_5),
        ("LP feasibility and tight ratio chains", criterion_6),
        ("sampler fidelity", criterion_7),
        ("Laplace prior estimator", criterion_8),
        ("pipeline data separation and determinism", criterion_9),
        ("large-epsilon convergence to RR", criterion_10),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            });
        let t = start.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name} [{t:.2?}]: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} [{t:.2?}]: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
