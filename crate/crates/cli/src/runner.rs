//! Suite execution.

use std::path::{Path, PathBuf};
use std::time::Instant;

use polymorph::coupling::solve_coupling;
use polymorph::markov_op::{
    antiisomorphism_check, axioms_check, isometric_subalgebra_scan, operator_of, SubalgebraInvariance,
};
use polymorph::polymorphism::{
    chain_csv, compose, conjugate, convex_combination, entropy_rate_estimate, factor, is_prime, mixing_report, power,
    sample_markov_chain, DEFAULT_MIXING_TOL,
};
use polymorph::symbolic::{
    centred, gamma_pairing, gamma_series, intertwining_pairing_check, lambda_pairing, lambda_series,
    phi_k_identity_check, pi_pairing, CylinderFunction, PerturbationSpec, SymbolicConfig,
};
use polymorph::{Error, Partition, Polymorphism, Rational, Scalar};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{Command, ExperimentConfig, Mode};
use crate::corpus::{self, NamedKernel};
use crate::report::{Artifact, Check, ReportDocument, Series, Status};
use crate::RunError;

/// Largest cylinder table drawn for a symbolic test function.
const MAX_TEST_TABLE: usize = 1024;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Directory that relative kernel paths are resolved against.
    pub base_dir: PathBuf,
    /// Record wall-clock time in the report.
    pub timing: bool,
}

struct Outcome {
    status: Status,
    checks: Vec<Check>,
    results: Value,
    series: Vec<Series>,
}

impl Outcome {
    fn checked(checks: Vec<Check>, results: Value, series: Vec<Series>) -> Self {
        let status = if checks.iter().all(|c| c.passed) { Status::Ok } else { Status::Violated };
        Self { status, checks, results, series }
    }
}

/// Validates `cfg` and executes its suite.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ReportDocument, RunError> {
    let cfg = cfg.validate().map_err(RunError::Invalid)?;
    let start = Instant::now();
    let extra = corpus::load(&cfg.kernels, &opts.base_dir)?;
    let outcome = match cfg.mode {
        Mode::Exact => dispatch::<Rational>(&cfg, extra)?,
        Mode::Float => dispatch::<f64>(&cfg, extra)?,
    };
    Ok(ReportDocument {
        artifact: Artifact::default(),
        config: cfg,
        status: outcome.status,
        checks: outcome.checks,
        results: outcome.results,
        series: outcome.series,
        wall_clock_seconds: opts.timing.then(|| start.elapsed().as_secs_f64()),
    })
}

/// Every command with its defaults, in declaration order.
pub fn full_suite(seed: u64, mode: Mode) -> Vec<ExperimentConfig> {
    [
        Command::Axioms,
        Command::Coupling,
        Command::ScanPrime,
        Command::ScanIsometry,
        Command::Mixing,
        Command::Limits,
        Command::Intertwine,
        Command::Corollary1,
        Command::Chain,
        Command::MixingScan,
    ]
    .into_iter()
    .map(|command| {
        let mut cfg = ExperimentConfig::new(command);
        cfg.seed = seed;
        cfg.mode = mode;
        if command == Command::Coupling {
            cfg.p = Some(["0.4", "0.3", "0.2", "0.1"].map(String::from).to_vec());
        }
        cfg
    })
    .collect()
}

/// Writes `report.json` and the CSV series under `dir`.
pub fn write_outputs(report: &ReportDocument, dir: &Path) -> Result<(), RunError> {
    let io = |p: &Path| {
        let p = p.display().to_string();
        move |e| RunError::Io(p, e)
    };
    let series_dir = dir.join("series");
    std::fs::create_dir_all(&series_dir).map_err(io(&series_dir))?;
    for s in &report.series {
        let path = dir.join(&s.path);
        std::fs::write(&path, &s.csv).map_err(io(&path))?;
    }
    let path = dir.join("report.json");
    std::fs::write(&path, report.to_json()).map_err(io(&path))
}

fn dispatch<S: Scalar>(cfg: &ExperimentConfig, extra: Vec<NamedKernel>) -> Result<Outcome, RunError> {
    let n = cfg.n.unwrap_or(0);
    let count = cfg.count.unwrap_or(0);
    let with_generated = || {
        let mut ks = corpus::bundled();
        ks.extend(extra.iter().cloned());
        ks.extend(corpus::generated(cfg.seed, count, n));
        ks
    };
    match cfg.command {
        Command::Axioms => axioms::<S>(&with_generated()),
        Command::Coupling => coupling::<S>(cfg.p.as_deref().unwrap_or_default()),
        Command::ScanPrime => scan_prime::<S>(&with_generated(), cfg.size_limit),
        Command::ScanIsometry => scan_isometry::<S>(&with_generated(), cfg.size_limit),
        Command::Mixing => {
            let mut ks = corpus::bundled();
            ks.extend(extra);
            mixing::<S>(&ks, n)
        }
        Command::Chain => chain::<S>(&extra, n, cfg.seed),
        Command::Limits | Command::Intertwine | Command::Corollary1 | Command::MixingScan => {
            let sym = cfg.symbolic.as_ref().expect("validated symbolic config");
            symbolic::<S>(cfg.command, sym, count, cfg.seed)
        }
    }
}

fn tolerance<S: Scalar>() -> String {
    if S::EXACT {
        "0".into()
    } else {
        format!("{:e}", S::TOLERANCE)
    }
}

/// Residual check: passes when the worst residual is negligible.
fn residual_check<S: Scalar>(name: &str, worst: &S) -> Check {
    Check { name: name.into(), passed: worst.is_negligible(), residual: worst.to_string(), tolerance: tolerance::<S>() }
}

/// Counting check: passes when nothing failed.
fn count_check(name: &str, failures: usize) -> Check {
    Check { name: name.into(), passed: failures == 0, residual: failures.to_string(), tolerance: "0".into() }
}

fn max_abs<S: Scalar>(acc: &mut S, v: &S) {
    let a = v.abs();
    if a > *acc {
        *acc = a;
    }
}

fn kernels<S: Scalar>(named: &[NamedKernel]) -> Result<Vec<(String, Polymorphism<S>)>, RunError> {
    named.iter().map(|k| Ok((k.name.clone(), k.kernel()?))).collect()
}

/// Ordered pairs of kernels on the same space.
fn same_space_pairs<S: Scalar>(ks: &[(String, Polymorphism<S>)]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..ks.len() {
        for j in 0..ks.len() {
            if ks[i].1.space() == ks[j].1.space() {
                out.push((i, j));
            }
        }
    }
    out
}

fn halves(n: usize) -> Partition {
    Partition::from_labels(&(0..n).map(|x| usize::from(2 * x >= n)).collect::<Vec<_>>())
}

fn axioms<S: Scalar>(named: &[NamedKernel]) -> Result<Outcome, RunError> {
    let ks = kernels::<S>(named)?;
    let mut per_kernel = Vec::new();
    let mut axiom_failures = 0;
    for (name, k) in &ks {
        let report = axioms_check(&operator_of(k));
        if !report.passed() {
            axiom_failures += 1;
        }
        per_kernel
            .push(json!({ "name": name, "size": k.size(), "passed": report.passed(), "failure": report.failure() }));
    }

    let pairs = same_space_pairs(&ks);
    let mut anti = 0.0_f64;
    let mut closure_failures = Vec::new();
    let third = S::from_ratio(1, 3);
    for &(i, j) in &pairs {
        let (a, b) = (&ks[i].1, &ks[j].1);
        anti = anti.max(antiisomorphism_check(a, b)?);
        let products = [
            ("compose", compose(a, b)),
            ("conjugate", Ok(conjugate(a))),
            ("power", Ok(power(a, 3))),
            ("convex", convex_combination(&[a.clone(), b.clone()], &[third.clone(), S::one() - third.clone()])),
            ("factor", factor(a, &halves(a.size()))),
        ];
        for (op, p) in products {
            if p.and_then(|p| p.validate()).is_err() {
                closure_failures.push(format!("{op}({}, {})", ks[i].0, ks[j].0));
            }
        }
    }
    let anti_check = Check {
        name: "anti-isomorphism".into(),
        passed: anti <= S::TOLERANCE,
        residual: anti.to_string(),
        tolerance: tolerance::<S>(),
    };
    let checks = vec![
        count_check("markov-axioms", axiom_failures),
        anti_check,
        count_check("semigroup-closure", closure_failures.len()),
    ];
    let results = json!({ "kernels": per_kernel, "pairs": pairs.len(), "closure_failures": closure_failures });
    Ok(Outcome::checked(checks, results, Vec::new()))
}

fn coupling<S: Scalar>(p: &[String]) -> Result<Outcome, RunError> {
    let p = p.iter().map(|s| S::parse(s)).collect::<polymorph::Result<Vec<S>>>()?;
    match solve_coupling(&p) {
        Ok(c) => {
            let wire = c.to_wire();
            let checks = vec![
                count_check("zero-diagonal", usize::from(!wire.diagnostics.zero_diagonal)),
                count_check("marginals", usize::from(c.validate().is_err())),
            ];
            Ok(Outcome::checked(checks, serde_json::to_value(wire).expect("coupling serializes"), Vec::new()))
        }
        Err(Error::Infeasible { index }) => Ok(Outcome {
            status: Status::Infeasible,
            checks: Vec::new(),
            results: json!({
                "infeasible": { "index": index, "weight": p[index].to_string(), "bound": "1/2" }
            }),
            series: Vec::new(),
        }),
        Err(e) => Err(e.into()),
    }
}

fn scan_prime<S: Scalar>(named: &[NamedKernel], size_limit: usize) -> Result<Outcome, RunError> {
    let ks = kernels::<S>(named)?;
    let mut rows = Vec::new();
    let (mut disagreements, mut skipped) = (0, 0);
    for (name, k) in &ks {
        if k.size() > size_limit {
            skipped += 1;
            rows.push(json!({ "name": name, "size": k.size(), "skipped": "size_limit" }));
            continue;
        }
        let prime = is_prime(k, size_limit)?;
        let scan = isometric_subalgebra_scan(&operator_of(k), size_limit, SubalgebraInvariance::Forward)?;
        if prime.prime != scan.totally_nonisometric {
            disagreements += 1;
        }
        rows.push(json!({
            "name": name,
            "size": k.size(),
            "prime": prime.prime,
            "totally_nonisometric": scan.totally_nonisometric,
            "witness": prime.witness,
        }));
    }
    let results = json!({ "kernels": rows, "scanned": ks.len() - skipped, "skipped": skipped });
    Ok(Outcome::checked(vec![count_check("prime-iff-totally-nonisometric", disagreements)], results, Vec::new()))
}

fn scan_isometry<S: Scalar>(named: &[NamedKernel], size_limit: usize) -> Result<Outcome, RunError> {
    let ks = kernels::<S>(named)?;
    let mut rows = Vec::new();
    let mut inconsistent = 0;
    for (name, k) in ks.iter().filter(|(_, k)| k.size() <= size_limit) {
        let v = operator_of(k);
        let forward = isometric_subalgebra_scan(&v, size_limit, SubalgebraInvariance::Forward)?;
        let both = isometric_subalgebra_scan(&v, size_limit, SubalgebraInvariance::Both)?;
        // A witness invariant under V and V* is in particular V-invariant.
        if !both.totally_nonisometric && forward.totally_nonisometric {
            inconsistent += 1;
        }
        rows.push(json!({
            "name": name,
            "forward": forward.totally_nonisometric,
            "both": both.totally_nonisometric,
            "witness": forward.witness,
        }));
    }
    Ok(Outcome::checked(
        vec![count_check("both-witness-is-forward-witness", inconsistent)],
        json!({ "kernels": rows }),
        Vec::new(),
    ))
}

fn mixing<S: Scalar>(named: &[NamedKernel], steps: usize) -> Result<Outcome, RunError> {
    let ks = kernels::<S>(named)?;
    let mut csv = String::from("kernel,n,distance\n");
    let mut rows = Vec::new();
    let mut worst_increase = S::zero();
    for (name, k) in &ks {
        let report = mixing_report(k, steps, DEFAULT_MIXING_TOL);
        for (i, d) in report.distances.iter().enumerate() {
            csv.push_str(&format!("{name},{},{}\n", i + 1, d.to_f64()));
        }
        for w in report.distances.windows(2) {
            let increase = w[1].clone() - w[0].clone();
            if increase > worst_increase {
                worst_increase = increase;
            }
        }
        rows.push(json!({
            "name": name,
            "is_mixing": report.is_mixing,
            "rate": report.rate,
            "final_distance": report.distances.last().map(Scalar::to_f64),
        }));
    }
    let checks = vec![residual_check("distance-non-increasing", &worst_increase)];
    Ok(Outcome::checked(checks, json!({ "kernels": rows }), vec![Series::new("mixing", csv)]))
}

fn chain<S: Scalar>(extra: &[NamedKernel], length: usize, seed: u64) -> Result<Outcome, RunError> {
    let named = match extra.first() {
        Some(k) => k.clone(),
        None => corpus::bundled().into_iter().find(|k| k.name == "random-weighted-4").expect("bundled kernel"),
    };
    let k = named.kernel::<S>()?;
    let seq = sample_markov_chain(&k, length, seed);
    let mut counts = vec![0usize; k.size()];
    for &s in &seq {
        counts[s] += 1;
    }
    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / length as f64).collect();
    let deviation = freqs.iter().zip(k.space().weights()).map(|(f, w)| (f - w.to_f64()).abs()).fold(0.0, f64::max);
    let bound = 4.0 / (length as f64).sqrt();
    let entropy: Vec<f64> = (1..=4).map(|b| entropy_rate_estimate(&seq, b)).collect();
    let checks = vec![Check {
        name: "empirical-marginal".into(),
        passed: deviation <= bound,
        residual: deviation.to_string(),
        tolerance: bound.to_string(),
    }];
    let results = json!({ "kernel": named.name, "length": length, "frequencies": freqs, "entropy_rate": entropy });
    Ok(Outcome::checked(checks, results, vec![Series::new("chain", chain_csv(&seq))]))
}

/// Seeded test functions with windows inside `[-w, w]`.
pub fn test_pairs<S: Scalar>(
    alphabet: usize,
    w: i64,
    count: usize,
    seed: u64,
) -> Vec<(CylinderFunction<S>, CylinderFunction<S>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_len = (2 * w + 1) as usize;
    while alphabet.max(2).pow(max_len as u32) > MAX_TEST_TABLE {
        max_len -= 1;
    }
    (0..count)
        .map(|_| {
            let f = CylinderFunction::random(alphabet, -w, w, max_len, &mut rng);
            let g = CylinderFunction::random(alphabet, -w, w, max_len, &mut rng);
            (f, g)
        })
        .collect()
}

fn window_json(f: &CylinderFunction<impl Scalar>) -> Value {
    f.window().map_or(Value::Null, |(lo, hi)| json!([lo, hi]))
}

fn symbolic<S: Scalar>(command: Command, sym: &SymbolicConfig, count: usize, seed: u64) -> Result<Outcome, RunError> {
    let spec = sym.spec::<S>()?;
    let pairs = test_pairs::<S>(sym.alphabet, sym.sweeps.w, count, seed);
    let mut outcome = match command {
        Command::Limits => limits(&spec, &pairs, sym),
        Command::Intertwine => intertwine(&spec, &pairs, sym.sweeps.n),
        Command::Corollary1 => corollary1(&spec, &pairs, sym),
        _ => mixing_scan(&spec, &pairs, sym.sweeps.n),
    }?;
    let header = json!({
        "residual_mass": spec.residual_mass().to_string(),
        "association": spec.association(),
        "pairs": pairs.iter().map(|(f, g)| json!({ "f": window_json(f), "g": window_json(g) })).collect::<Vec<_>>(),
    });
    if let Value::Object(map) = &mut outcome.results {
        map.insert("perturbation".into(), header);
    }
    Ok(outcome)
}

type Pairs<S> = [(CylinderFunction<S>, CylinderFunction<S>)];

fn limits<S: Scalar>(spec: &PerturbationSpec<S>, pairs: &Pairs<S>, sym: &SymbolicConfig) -> Result<Outcome, RunError> {
    let n = sym.sweeps.n;
    let bound = sym.sweeps.w as usize + sym.r + 1;
    let r = sym.r as i64;
    let (mut late_lambda, mut late_gamma, mut lambda_sites, mut gamma_sites) = (0, 0, 0, 0);
    let mut gap = S::zero();
    let mut csv = String::from("pair,n,lambda,gamma\n");
    let mut rows = Vec::new();
    for (i, (f, g)) in pairs.iter().enumerate() {
        let lp = lambda_pairing(f, g, spec, n)?;
        let gp = gamma_pairing(f, g, spec, n)?;
        late_lambda += usize::from(lp.stabilized_at > bound);
        late_gamma += usize::from(gp.stabilized_at > bound);
        lambda_sites += usize::from(lp.touched.iter().any(|&s| s < 0));
        gamma_sites += usize::from(gp.touched.iter().any(|&s| s > r - 2));
        if n >= bound {
            max_abs(&mut gap, &(lp.value.clone() - lp.limit.clone()));
            max_abs(&mut gap, &(gp.value.clone() - gp.limit.clone()));
        }
        let ls = lambda_series(f, g, spec, n)?;
        let gs = gamma_series(f, g, spec, n)?;
        for (k, (a, b)) in ls.iter().zip(&gs).enumerate() {
            csv.push_str(&format!("{i},{k},{a},{b}\n"));
        }
        rows.push(json!({
            "lambda": { "limit": lp.limit.to_string(), "stabilized_at": lp.stabilized_at },
            "gamma": { "limit": gp.limit.to_string(), "stabilized_at": gp.stabilized_at },
        }));
    }
    let checks = vec![
        count_check("lambda-stabilizes-by-W+r+1", late_lambda),
        count_check("gamma-stabilizes-by-W+r+1", late_gamma),
        residual_check("value-at-N-equals-limit", &gap),
        count_check("lambda-touches-only-nonnegative-sites", lambda_sites),
        count_check("gamma-touches-only-sites-below-r-1", gamma_sites),
    ];
    Ok(Outcome::checked(checks, json!({ "limits": rows, "bound": bound }), vec![Series::new("limits", csv)]))
}

fn intertwine<S: Scalar>(spec: &PerturbationSpec<S>, pairs: &Pairs<S>, n_max: usize) -> Result<Outcome, RunError> {
    let (mut lambda, mut gamma) = (S::zero(), S::zero());
    let mut rows = Vec::new();
    for (f, g) in pairs {
        let (mut pl, mut pg) = (S::zero(), S::zero());
        for n in 0..=n_max {
            let res = intertwining_pairing_check(f, g, spec, n)?;
            max_abs(&mut pl, &res.lambda);
            max_abs(&mut pg, &res.gamma);
        }
        rows.push(json!({ "lambda": pl.to_string(), "gamma": pg.to_string() }));
        max_abs(&mut lambda, &pl);
        max_abs(&mut gamma, &pg);
    }
    let checks = vec![residual_check("lambda-intertwining", &lambda), residual_check("gamma-intertwining", &gamma)];
    Ok(Outcome::checked(checks, json!({ "residuals": rows, "n_max": n_max }), Vec::new()))
}

fn disjoint(window: Option<(i64, i64)>, lo: i64, hi: i64) -> bool {
    window.is_none_or(|(a, b)| b < lo || hi < a)
}

fn corollary1<S: Scalar>(
    spec: &PerturbationSpec<S>,
    pairs: &Pairs<S>,
    sym: &SymbolicConfig,
) -> Result<Outcome, RunError> {
    let r = sym.r as i64;
    let reach = sym.sweeps.w + r + 2;
    let mut outside = S::zero();
    let mut csv = String::from("pair,k,value\n");
    let mut nonzero_inside = 0;
    for (i, (f, g)) in pairs.iter().enumerate() {
        for k in -reach..=reach {
            let v = phi_k_identity_check(f, g, spec, k)?;
            csv.push_str(&format!("{i},{k},{v}\n"));
            if disjoint(f.window(), k, k + r - 1) || disjoint(g.window(), k, k + r - 1) {
                max_abs(&mut outside, &v);
            } else if !v.is_negligible() {
                nonzero_inside += 1;
            }
        }
    }
    let checks = vec![residual_check("zero-outside-windows", &outside)];
    let results = json!({ "k_range": [-reach, reach], "nonzero_inside": nonzero_inside });
    Ok(Outcome::checked(checks, results, vec![Series::new("corollary1", csv)]))
}

fn mixing_scan<S: Scalar>(spec: &PerturbationSpec<S>, pairs: &Pairs<S>, n_max: usize) -> Result<Outcome, RunError> {
    let sys = spec.system();
    let mut csv = String::from("pair,n,value\n");
    let mut excess = S::zero();
    let mut rows = Vec::new();
    for (i, (f, g)) in pairs.iter().enumerate() {
        let (f, g) = (centred(f, sys), centred(g, sys));
        let bound = f.norm_sq(sys) * g.norm_sq(sys);
        let mut truncated_at = None;
        let mut last = S::zero();
        for n in 0..=n_max {
            let v = match pi_pairing(&f, &g, spec, n) {
                Ok(v) => v,
                Err(Error::Guard(_)) => {
                    truncated_at = Some(n);
                    break;
                }
                Err(e) => return Err(e.into()),
            };
            csv.push_str(&format!("{i},{n},{v}\n"));
            // Cauchy-Schwarz for a contraction: ⟨Πⁿf, g⟩² ≤ |f|²|g|².
            let over = v.clone() * v.clone() - bound.clone();
            if over > excess {
                excess = over;
            }
            last = v;
        }
        rows.push(json!({ "final": last.to_string(), "truncated_at": truncated_at }));
    }
    let checks = vec![residual_check("contraction-bound", &excess)];
    Ok(Outcome::checked(checks, json!({ "series": rows, "n_max": n_max }), vec![Series::new("mixing_scan", csv)]))
}
