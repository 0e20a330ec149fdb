//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use utfm::dataset::{segment, CvConfig, DatasetSplit, SplitConfig};
use utfm::features::{build_observation_matrix, periodic_encode, route_distance, GeoPoint, TOD_PERIOD};
use utfm::hmm::{baum_welch, forward_backward, sample, viterbi, GaussianHmm, ObservationSequence, TrainConfig};
use utfm::synthgen::{generate, NetworkConfig};
use utfm::utfm::{
    build_topology, export_dot, utfm_cross_validate, utfm_decode, utfm_learn, AssessmentReport, EdgeKind,
    LearnConfig, Lot, NormalizationMode, TrainingLog, UtfmModel, ZERO_MASS_THRESHOLD,
};

type Outcome = Result<String, String>;

fn check(cond: bool, fail: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(fail())
    }
}

// ---------------------------------------------------------------- oracles

const LN_2PI: f64 = 1.8378770664093453;

fn normal_log_pdf(mean: &[f64], var: &[f64], x: &[f64]) -> f64 {
    (0..x.len())
        .map(|d| -0.5 * (LN_2PI + var[d].ln() + (x[d] - mean[d]).powi(2) / var[d]))
        .sum()
}

fn path_prob(hmm: &GaussianHmm, seq: &[Vec<f64>], path: &[usize]) -> f64 {
    let mut p = hmm.initial[path[0]];
    for t in 0..path.len() {
        if t > 0 {
            p *= hmm.transitions[path[t - 1]][path[t]];
        }
        let s = path[t];
        p *= normal_log_pdf(&hmm.emission_means[s], &hmm.emission_vars[s], &seq[t]).exp();
    }
    if hmm.end_probs.iter().any(|&e| e > 0.0) {
        p *= hmm.end_probs[path[path.len() - 1]];
    }
    p
}

fn all_paths(k: usize, len: usize) -> Vec<Vec<usize>> {
    (0..k.pow(len as u32))
        .map(|mut code| {
            let mut path = vec![0; len];
            for slot in path.iter_mut().rev() {
                *slot = code % k;
                code /= k;
            }
            path
        })
        .collect()
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

fn random_model(rng: &mut ChaCha8Rng, k: usize, dim: usize, absorbing: bool) -> GaussianHmm {
    let mut transitions = Vec::new();
    let mut end_probs = Vec::new();
    for _ in 0..k {
        let row = random_simplex(rng, if absorbing { k + 1 } else { k });
        transitions.push(row[..k].to_vec());
        end_probs.push(if absorbing { row[k] } else { 0.0 });
    }
    for (row, end) in transitions.iter_mut().zip(end_probs.iter_mut()) {
        let s: f64 = row.iter().sum::<f64>() + *end;
        row.iter_mut().for_each(|v| *v /= s);
        *end /= s;
    }
    GaussianHmm::new(
        (0..k).map(|i| format!("s{i}")).collect(),
        random_simplex(rng, k),
        transitions,
        end_probs,
        (0..k).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(),
        (0..k).map(|_| (0..dim).map(|_| rng.random_range(0.3..2.0)).collect()).collect(),
    )
    .unwrap()
}

fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (phi1, phi2) = (a.0.to_radians(), b.0.to_radians());
    let dphi = phi2 - phi1;
    let dlam = (b.1 - a.1).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlam / 2.0).sin().powi(2);
    2.0 * 6371.0088 * h.sqrt().min(1.0).asin()
}

// ---------------------------------------------------------- shared fixture

struct Fixture {
    split: DatasetSplit,
    model: UtfmModel,
    log: TrainingLog,
    seconds: f64,
}

fn fixture() -> Fixture {
    let records = generate(&NetworkConfig::default(), 10_000, 42).unwrap();
    let split = segment(records, &SplitConfig::default()).unwrap();
    let start = Instant::now();
    let (model, log) = utfm_learn(&split, &LearnConfig::default()).unwrap();
    Fixture {
        split,
        model,
        log,
        seconds: start.elapsed().as_secs_f64(),
    }
}

// --------------------------------------------------------------- criteria

fn c1_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for trial in 0..1000 {
        let k = rng.random_range(1..=4);
        let dim = rng.random_range(1..=2);
        let len = rng.random_range(1..=6);
        let hmm = random_model(&mut rng, k, dim, trial % 2 == 1);
        let rows: Vec<Vec<f64>> = (0..len)
            .map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let seq = ObservationSequence::new(rows.clone()).unwrap();
        let paths = all_paths(k, len);
        let probs: Vec<f64> = paths.iter().map(|p| path_prob(&hmm, &rows, p)).collect();
        let brute = probs.iter().sum::<f64>().ln();
        let ll = forward_backward(&hmm, &seq).unwrap().log_likelihood;
        let rel = (ll - brute).abs() / brute.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        check(rel <= 1e-9, || format!("trial {trial}: forward {ll} vs brute force {brute}"))?;
        let best = (0..probs.len()).fold(0, |b, i| if probs[i] > probs[b] { i } else { b });
        let v = viterbi(&hmm, &seq).unwrap();
        check(v.path == paths[best], || format!("trial {trial}: Viterbi path {:?} vs {:?}", v.path, paths[best]))?;
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 30.0, || format!("took {secs:.1} s"))?;
    Ok(format!("1000 models, worst relative log-likelihood error {worst:.2e}, {secs:.1} s"))
}

fn c2_em_monotonicity(f: &Fixture) -> Outcome {
    check(f.log.entries.len() == 29, || format!("{} training logs", f.log.entries.len()))?;
    for e in &f.log.entries {
        if let Some(w) = e.trace.windows(2).find(|w| w[1] < w[0] - 1e-8) {
            return Err(format!("{}: log-likelihood fell from {} to {}", e.component, w[0], w[1]));
        }
    }
    let converged: Vec<_> = f
        .log
        .entries
        .iter()
        .filter(|e| e.converged && e.iterations <= 500)
        .collect();
    for e in &converged {
        let t = &e.trace;
        check((t[t.len() - 1] - t[t.len() - 2]).abs() < 1e-9, || format!("{}: final step too large", e.component))?;
    }
    let max_iter = f.log.entries.iter().map(|e| e.iterations).max().unwrap();
    check(converged.len() >= 27, || format!("only {}/29 converged within 500 iterations", converged.len()))?;
    check(f.seconds < 300.0, || format!("training took {:.0} s", f.seconds))?;
    Ok(format!(
        "29 traces monotone, {}/29 converged (max {max_iter} iterations), {:.0} s",
        converged.len(),
        f.seconds
    ))
}

fn c3_parameter_recovery() -> Outcome {
    let truth = GaussianHmm::new(
        vec!["calm".into(), "stressed".into()],
        vec![0.5, 0.5],
        vec![vec![0.9, 0.1], vec![0.2, 0.8]],
        vec![0.0; 2],
        vec![vec![-2.0], vec![2.0]],
        vec![vec![1.0], vec![1.0]],
    )
    .unwrap();
    let align_error = |learned: &[Vec<f64>], perm: [usize; 2]| {
        (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| (truth.transitions[i][j] - learned[perm[i]][perm[j]]).abs())
            .fold(0.0, f64::max)
    };
    let mut passed = 0;
    let mut worst = 0.0f64;
    for trial in 0..100u64 {
        let seq = sample(&truth, 10_000, 1000 + trial).unwrap();
        let init = GaussianHmm::standard_init(vec!["a".into(), "b".into()], 1, false).unwrap();
        let out = baum_welch(&init, &[seq], &TrainConfig::default()).unwrap();
        let err = align_error(&out.model.transitions, [0, 1]).min(align_error(&out.model.transitions, [1, 0]));
        worst = worst.max(err);
        if err <= 0.05 {
            passed += 1;
        }
    }
    check(passed >= 95, || format!("only {passed}/100 trials within 0.05"))?;
    Ok(format!("{passed}/100 trials within 0.05 (worst {worst:.4})"))
}

fn c4_stochastic_groups(f: &Fixture) -> Outcome {
    let flights = f.split.disrupted_test();
    check(flights.len() >= 100, || format!("only {} held-out disrupted flights", flights.len()))?;
    for mode in [NormalizationMode::LogSumExp, NormalizationMode::RawProbSum] {
        for flight in &flights[..100] {
            let r = utfm_decode(&f.model, flight, mode).map_err(|e| e.to_string())?;
            for p in &r.phases {
                for (name, g) in [("schedule", p.schedule()), ("decision", p.decision()), ("outcome", p.outcome())] {
                    let sum: f64 = g.iter().sum();
                    check(g.iter().all(|x| (0.0..=1.0).contains(x)) && (sum - 1.0).abs() <= 1e-9, || {
                        format!("{} {:?} {name} group {g:?} ({})", r.flight_id, p.phase, mode.as_str())
                    })?;
                }
            }
        }
    }
    Ok("100 flights x 2 modes, every group sums to 1 within 1e-9".into())
}

fn run_pipeline(dir: &Path) -> Result<(Vec<u8>, Vec<u8>), String> {
    let bin = env!("CARGO_BIN_EXE_utfm");
    let run = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(bin)
            .args(args)
            .current_dir(dir)
            .env("RUST_LOG", "warn")
            .output()
            .map_err(|e| e.to_string())?;
        check(out.status.success(), || {
            format!("utfm {} failed: {}", args[0], String::from_utf8_lossy(&out.stderr).trim())
        })
    };
    run(&["gen", "--n", "3000", "--seed", "42", "--output", "legs.csv"])?;
    run(&["train", "--input", "legs.csv", "--seed", "42", "--output", "model.json"])?;
    run(&["decode", "--model", "model.json", "--input", "legs.csv", "--flight-id", "F1", "--output", "report.json"])?;
    let read = |name: &str| std::fs::read(dir.join(name)).map_err(|e| e.to_string());
    Ok((read("model.json")?, read("report.json")?))
}

fn c5_determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (model_a, report_a) = run_pipeline(a.path())?;
    let (model_b, report_b) = run_pipeline(b.path())?;
    check(model_a == model_b, || "model JSON differs between runs".into())?;
    check(report_a == report_b, || "report JSON differs between runs".into())?;
    Ok(format!(
        "gen -> train -> decode twice: model ({} bytes) and report ({} bytes) identical",
        model_a.len(),
        report_a.len()
    ))
}

fn c6_feature_pipeline(f: &Fixture) -> Outcome {
    let mut columns = 0;
    for m in f.model.intra.iter().chain(&f.model.inter) {
        let records = match m.lot {
            Lot::NonDisrupted => f.split.non_disrupted_train(),
            Lot::Disrupted => f.split.disrupted_train(),
        };
        let matrix = build_observation_matrix(&records, &m.layout, &m.standardizer).map_err(|e| e.to_string())?;
        let n = matrix.n_rows() as f64;
        for (j, name) in matrix.column_names.iter().enumerate() {
            let mean = matrix.rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let sd = (matrix.rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
            check(mean.abs() <= 1e-9 && (sd - 1.0).abs() <= 1e-9, || {
                format!("{} column {name}: mean {mean:e}, std {sd}", m.id)
            })?;
            columns += 1;
        }
    }

    let mut encodings = 0;
    for r in f.split.non_disrupted.iter().chain(&f.split.disrupted) {
        let tods = [r.tod_sched_pb, r.tod_sched_gp, r.tod_actl_pb, r.tod_actl_to, r.tod_actl_ld, r.tod_actl_gp];
        let mut values: Vec<(f64, f64)> = vec![
            (r.dow as f64, 7.0),
            (r.doy as f64, 365.25),
            (r.moy as f64, 12.0),
            (r.season as f64, 4.0),
        ];
        values.extend(tods.iter().flatten().map(|v| (*v, TOD_PERIOD)));
        for (v, period) in values {
            let (s, c) = periodic_encode(v, period).map_err(|e| e.to_string())?;
            check((s * s + c * c - 1.0).abs() <= 1e-12, || format!("{v} mod {period}: sin²+cos² = {}", s * s + c * c))?;
            encodings += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let a = (rng.random_range(-80.0..80.0), rng.random_range(-179.9..180.0));
        let b = (rng.random_range(-80.0..80.0), rng.random_range(-179.9..180.0));
        let pa = GeoPoint::new(a.0, a.1).map_err(|e| e.to_string())?;
        let pb = GeoPoint::new(b.0, b.1).map_err(|e| e.to_string())?;
        let d = route_distance(pa, pb).map_err(|e| e.to_string())?;
        let o = haversine_km(a, b);
        let rel = (d - o).abs() / o;
        worst = worst.max(rel);
        check(rel <= 1e-6, || format!("{a:?} -> {b:?}: {d} km vs oracle {o} km"))?;
    }
    Ok(format!(
        "{columns} standardized columns, {encodings} periodic encodings, 100 airport pairs (worst rel {worst:.1e})"
    ))
}

const TABLE_EDGES: [&str; 17] = [
    "TAS->TOS", "TOS->ES", "ES->TIS", "TAD->TOD", "TOD->ED", "ED->TID", "TAO->TOO", "TOO->EO", "EO->TIO",
    "TAS->TAD", "TOS->TOD", "ES->ED", "TIS->TID", "TAD->TAO", "TOD->TOO", "ED->EO", "TID->TIO",
];

const TABLE_HIDDEN: [(&str, &[&str]); 12] = [
    ("TAS", &["SWAP_FLT_FLAG", "SCHED_ACFT_TYPE", "SCHED_TURN_MINS", "tod_sched_PB"]),
    ("TOS", &["taxi_out", "tod_actl_TO", "sched_block_mins"]),
    ("ES", &["actl_enroute_mins", "tod_actl_LD", "sched_block_mins"]),
    ("TIS", &["taxi_in", "tod_sched_GP", "sched_block_mins"]),
    ("TAD", &["shiftper_sched_PB", "ADJST_TURN_MINS", "DELY_MIN", "SWAP_FLT_FLAG"]),
    ("TOD", &["late_out_vs_sched_mins", "shiftper_actl_PB", "DELY_MIN"]),
    ("ED", &["shiftper_actl_TO", "shiftper_actl_LD", "DOT_DELAY_MINS"]),
    ("TID", &["DOT_DELAY_MINS", "shiftper_sched_GP", "shiftper_actl_GP"]),
    ("TAO", &["SWAP_FLT_FLAG", "ACTL_ACFT_TYPE", "ACTL_TURN_MINS", "tod_actl_PB"]),
    ("TOO", &["taxi_out", "tod_actl_TO", "actl_block_mins"]),
    ("EO", &["actl_enroute_mins", "tod_actl_LD", "actl_block_mins"]),
    ("TIO", &["taxi_in", "tod_actl_GP", "actl_block_mins"]),
];

fn c7_topology(f: &Fixture) -> Outcome {
    let t = build_topology();
    let nodes: Vec<&str> = t.intra_nodes.iter().map(|n| n.name()).collect();
    let want: Vec<&str> = TABLE_HIDDEN.iter().map(|(n, _)| *n).collect();
    check(nodes == want, || format!("nodes {nodes:?}"))?;
    let edges: Vec<String> = t.inter_edges.iter().map(|e| e.name()).collect();
    check(edges == TABLE_EDGES, || format!("edges {edges:?}"))?;
    let hidden = |name: &str| -> Vec<String> {
        TABLE_HIDDEN.iter().find(|(n, _)| *n == name).unwrap().1.iter().map(|s| s.to_string()).collect()
    };
    for m in &f.model.intra {
        check(m.hmm.state_labels == hidden(&m.id), || format!("{}: labels {:?}", m.id, m.hmm.state_labels))?;
    }
    for (m, name) in f.model.inter.iter().zip(TABLE_EDGES) {
        let source = name.split("->").next().unwrap();
        check(m.id == name && m.hmm.state_labels == hidden(source), || {
            format!("{}: labels {:?}", m.id, m.hmm.state_labels)
        })?;
    }
    Ok("12 nodes, 17 edges in table order, 29 label lists verbatim".into())
}

fn c8_cross_validation() -> Outcome {
    let records = generate(&NetworkConfig::default(), 3000, 42).unwrap();
    let split = segment(records, &SplitConfig::default()).unwrap();
    let config = CvConfig::default();
    let results = utfm_cross_validate(&split, &config, None).map_err(|e| e.to_string())?;
    check(results.len() == 29, || format!("{} components cross-validated", results.len()))?;
    let mut max_z = 0.0f64;
    for r in &results {
        check(r.report.folds.len() == 5, || format!("{}: {} folds", r.component, r.report.folds.len()))?;
        let sd = r.report.std_test_per_observation;
        if sd > 0.0 {
            for fold in &r.report.folds {
                max_z = max_z.max((fold.test_per_observation - r.report.mean_test_per_observation).abs() / sd);
            }
        }
        check(!r.report.consistency_flag, || {
            format!("{}: folds {:?} flagged at threshold {}", r.component, r.report.flagged_folds, config.flag_threshold)
        })?;
    }
    Ok(format!(
        "29 components x 5 folds, no consistency flag at threshold {} (largest fold z-score {max_z:.2})",
        config.flag_threshold
    ))
}

fn check_dot_layout(report: &AssessmentReport, dot: &str) -> Result<(), String> {
    let rows: Vec<&str> = dot.split("subgraph row_").skip(1).collect();
    check(rows.len() == 3, || format!("{} row subgraphs", rows.len()))?;
    for (i, (row, names)) in rows
        .iter()
        .zip([["TAS", "TOS", "ES", "TIS"], ["TAD", "TOD", "ED", "TID"], ["TAO", "TOO", "EO", "TIO"]])
        .enumerate()
    {
        let body = &row[..row.find('}').unwrap()];
        check(body.contains("rank=same"), || format!("row {i} is not ranked together"))?;
        for (col, name) in names.iter().enumerate() {
            let p = report.transition(name, name).unwrap();
            let node = format!("{name} [label=\"{name}\\n{p:.2}\", pos=\"{},{}!\"]", col * 2, (2 - i) * 2);
            check(body.contains(&node), || format!("missing node line {node}"))?;
        }
    }
    let edge_lines: Vec<&str> = dot.lines().filter(|l| l.contains(" -> ")).collect();
    check(edge_lines.len() == 17, || format!("{} edge lines", edge_lines.len()))?;
    for name in TABLE_EDGES {
        let (from, to) = name.split_once("->").unwrap();
        let p = report.transition(from, to).unwrap();
        let line = edge_lines
            .iter()
            .find(|l| l.trim_start().starts_with(&format!("{from} -> {to} ")))
            .ok_or_else(|| format!("no edge {name}"))?;
        check(line.contains(&format!("label=\"{p:.2}")), || format!("edge {name}: {line}"))?;
        let alpha = from.ends_with('S') && to.ends_with('S');
        let flagged = line.contains("tactical measure ineffective");
        check(flagged == (alpha && p < ZERO_MASS_THRESHOLD), || format!("edge {name} flag mismatch: {line}"))?;
        check(!flagged || (line.contains("style=dashed") && line.contains("color=red")), || {
            format!("flagged edge {name} not highlighted: {line}")
        })?;
    }
    Ok(())
}

fn c9_dot_format(f: &Fixture) -> Outcome {
    let topology = build_topology();
    let alpha: Vec<_> = topology.inter_edges.iter().filter(|e| e.kind() == EdgeKind::Alpha).collect();
    let mut natural_flags = 0;
    for flight in f.split.disrupted_test() {
        let r = utfm_decode(&f.model, flight, NormalizationMode::LogSumExp).map_err(|e| e.to_string())?;
        let dot = export_dot(&r);
        check_dot_layout(&r, &dot).map_err(|e| format!("{}: {e}", r.flight_id))?;
        let zero = alpha
            .iter()
            .filter(|e| r.transition(e.from.name(), e.to.name()).unwrap() < ZERO_MASS_THRESHOLD)
            .count();
        check(r.flags.len() == zero, || format!("{}: {} flags for {zero} zero-mass edges", r.flight_id, r.flags.len()))?;
        natural_flags += zero;
    }

    // A report with the turnaround schedule mass moved entirely onto TAS->TAD.
    let flight = f.split.disrupted_test()[0];
    let mut r = utfm_decode(&f.model, flight, NormalizationMode::LogSumExp).map_err(|e| e.to_string())?;
    for t in r.transitions.iter_mut() {
        match (t.from.as_str(), t.to.as_str()) {
            ("TAS", "TOS") => t.probability = 0.0,
            ("TAS", "TAD") => t.probability = 1.0,
            _ => {}
        }
    }
    let dot = export_dot(&r);
    check_dot_layout(&r, &dot)?;
    check(
        dot.contains("TAS -> TOS [label=\"0.00\\ntactical measure ineffective\", style=dashed, color=red"),
        || "zero TAS->TOS mass not flagged".into(),
    )?;
    Ok(format!(
        "{} decoded flights render 3x4 grids with 2-decimal labels; {natural_flags} naturally occurring zero-mass edges flagged; constructed TAS->TOS = 0 flagged",
        f.split.disrupted_test().len()
    ))
}

fn main() {
    let mut failed = 0;
    let mut report = |id: u32, title: &str, outcome: Outcome| {
        match outcome {
            Ok(detail) => println!("PASS  criterion {id}: {title}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {id}: {title}: {why}");
            }
        }
    };

    report(1, "HMM oracle equivalence", c1_oracle_equivalence());
    let f = fixture();
    report(2, "EM monotonicity and convergence", c2_em_monotonicity(&f));
    report(3, "parameter recovery", c3_parameter_recovery());
    report(4, "stochastic-matrix property", c4_stochastic_groups(&f));
    report(5, "determinism", c5_determinism());
    report(6, "feature pipeline", c6_feature_pipeline(&f));
    report(7, "topology conformance", c7_topology(&f));
    report(8, "cross-validation parity", c8_cross_validation());
    report(9, "DOT format parity", c9_dot_format(&f));

    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 9 acceptance criteria passed");
}
