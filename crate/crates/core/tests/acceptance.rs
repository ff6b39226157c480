//! Acceptance suite: one line per criterion, non-zero exit on any failure.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use memopt::affine::StructuralClass;
use memopt::bankmap::{propagate_arcs, run_global, run_local_baseline, seed_anchors, transfer_arcs, AnchorRegistry, DEFAULT_BANKS};
use memopt::dme::run_dme;
use memopt::frontend::{
    generate_random, generate_resnet_analog, generate_wavenet_analog, optimize, parse, print, MappingMode, PassSpec,
    ReportDocument, REPORT_SCHEMA,
};
use memopt::interp::equivalent;
use memopt::ir::Program;
use memopt::par;
use memopt::traffic::{account, TrafficOptions};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_memopt")
}

/// `gen wavenet 124 1` then `optimize --pass dme` through the CLI.
fn wavenet_run(dir: &Path) -> Result<(Program, Program, Value, Duration), String> {
    let (src, opt, rep) = (dir.join("w.ir"), dir.join("w.opt.ir"), dir.join("w.json"));
    let gen = Command::new(bin()).args(["gen", "wavenet", "124", "1", "--seed", "0", "-o"]).arg(&src).status();
    check(gen.map_err(|e| e.to_string())?.success(), "gen wavenet failed")?;
    let start = Instant::now();
    let out = Command::new(bin())
        .arg("optimize")
        .arg(&src)
        .args(["--pass", "dme", "-o"])
        .arg(&opt)
        .arg("--report")
        .arg(&rep)
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(out.status.success(), String::from_utf8_lossy(&out.stderr).to_string())?;
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| e.to_string());
    let before = parse(&read(&src)?).map_err(|e| e.to_string())?;
    let after = parse(&read(&opt)?).map_err(|e| e.to_string())?;
    let report: Value = serde_json::from_str(&read(&rep)?).map_err(|e| e.to_string())?;
    Ok((before, after, report, elapsed))
}

fn criterion_1(dir: &Path) -> Outcome {
    let (before, after, report, elapsed) = wavenet_run(dir)?;
    let pass = &report["passes"][0];
    let eliminated = pass["eliminated"].as_u64().unwrap_or(0);
    let total = report["before"]["copy_pairs_total"].as_u64().unwrap_or(0);
    check(total == 124, format!("generated {total} pairs, expected 124"))?;
    check(eliminated == 123, format!("eliminated {eliminated} of {total}"))?;
    let left = memopt::ir::find_copy_pairs(&after).len();
    check(left == 1, format!("{left} pairs remain in the optimized program"))?;
    check(equivalent(&before, &after, 5, 0).map_err(|e| e.to_string())?.equivalent, "optimized program differs")?;
    check(elapsed < Duration::from_secs(10), format!("optimize took {elapsed:?}"))?;
    let reason = pass["records"].as_array().and_then(|r| r.iter().find_map(|x| x["skipped"].as_str())).unwrap_or("?");
    Ok(format!("{eliminated}/{total} pairs eliminated (skip: {reason}), optimize {:.2?}", elapsed))
}

fn criterion_2(dir: &Path) -> Outcome {
    let (before, after, report, _) = wavenet_run(dir)?;
    let records = report["passes"][0]["records"].as_array().ok_or("no records")?;
    // footprints from the original declarations, not from the records
    let freed: u64 = records
        .iter()
        .filter(|r| r.get("skipped").is_none())
        .map(|r| before.tensor(r["tensor"].as_str().unwrap_or("")).map_or(0, |t| t.bytes()))
        .sum();
    let drop = before.intermediate_bytes() - after.intermediate_bytes();
    let reported = -report["compare"]["intermediate_tensor_bytes"]["delta"].as_i64().unwrap_or(0);
    check(drop == freed, format!("footprint drop {drop} != eliminated footprints {freed}"))?;
    check(reported as u64 == drop, format!("report delta {reported} != drop {drop}"))?;
    Ok(format!("{drop} of {} intermediate bytes eliminated, equal to the 123 tensors' footprints", before.intermediate_bytes()))
}

fn criterion_3() -> Outcome {
    const PROGRAMS: usize = 1000;
    let reg = AnchorRegistry::default();
    let failures: Vec<String> = par::map_range(PROGRAMS, |s| {
        let seed = s as u64;
        let p = generate_random(seed);
        let mut bad = Vec::new();
        let dme = run_dme(&p).program;
        let global = run_global(&p, &reg, DEFAULT_BANKS).map(|r| r.0);
        let local = run_local_baseline(&p, &reg, DEFAULT_BANKS).map(|r| r.0);
        for (name, q) in [("dme", Ok(dme)), ("global", global), ("local", local)] {
            match q.map_err(|e| e.to_string()).and_then(|q| equivalent(&p, &q, 5, seed).map_err(|e| e.to_string())) {
                Ok(e) if e.equivalent => {}
                Ok(e) => bad.push(format!("seed {seed} {name}: {:?}", e.counterexample)),
                Err(e) => bad.push(format!("seed {seed} {name}: {e}")),
            }
        }
        bad
    })
    .into_iter()
    .flatten()
    .collect();
    check(failures.is_empty(), format!("{} counterexamples, first: {}", failures.len(), failures.first().cloned().unwrap_or_default()))?;
    Ok(format!("seeds 0..{PROGRAMS} x (dme, global, local), 5 trials each, 0 counterexamples"))
}

fn criterion_4() -> Outcome {
    let reg = AnchorRegistry::default();
    let opts = TrafficOptions::default();
    let start = Instant::now();
    let mut worst = String::new();
    let mut best_ratio = f64::INFINITY;
    for b in 1..=8 {
        for t in 0..=3 {
            let p = generate_resnet_analog(b, t, (10 * b + t) as u64);
            let (gp, g, _) = run_global(&p, &reg, DEFAULT_BANKS).map_err(|e| e.to_string())?;
            let (lp, l) = run_local_baseline(&p, &reg, DEFAULT_BANKS).map_err(|e| e.to_string())?;
            let (gi, li) = (g.copy_bytes(), l.copy_bytes());
            let (gt, lt) = (account(&gp, &opts).on_chip_copy_bytes, account(&lp, &opts).on_chip_copy_bytes);
            check(gi <= li && gt <= lt, format!("B={b} T={t}: global {gi}/{gt} > local {li}/{lt}"))?;
            if t >= 1 {
                check(gi < li && gt < lt, format!("B={b} T={t}: global {gi}/{gt} not below local {li}/{lt}"))?;
                let ratio = gt as f64 / lt as f64;
                if ratio < best_ratio {
                    best_ratio = ratio;
                    worst = format!("B={b} T={t}");
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(30), format!("took {elapsed:?}"))?;
    Ok(format!(
        "32 configs, global <= local everywhere, strict for T>=1 (largest cut {:.0}% at {worst}), {:.2?}",
        100.0 * (1.0 - best_ratio),
        elapsed
    ))
}

fn criterion_5() -> Outcome {
    const MAPS: usize = 10_000;
    const MAX_POINTS: u64 = 10_000;
    // (class, invertible, failure)
    let results = par::map_range(MAPS, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let f = common::map_of_class(&mut rng, common::CLASSES[k % 4], MAX_POINTS);
        let g = common::outer_for(&mut rng, &f);
        let inv = f.reverse();
        let gf = match g.compose(&f) {
            Ok(m) => m,
            Err(e) => return (f.class(), false, Some(format!("map {k}: compose failed: {e}"))),
        };
        for p in f.domain().points() {
            let y = f.evaluate(&p).expect("in domain");
            if inv.is_invertible() && inv.apply(&y).as_deref() != Some(&p[..]) {
                return (f.class(), true, Some(format!("map {k} ({f}): reverse fails at {p:?}")));
            }
            let direct = g.evaluate(&y).expect("outer covers image");
            if gf.evaluate(&p).expect("in domain") != direct {
                return (f.class(), false, Some(format!("map {k}: compose differs at {p:?}")));
            }
        }
        if !inv.is_invertible() {
            let mut seen = std::collections::HashSet::new();
            if f.domain().points().all(|p| seen.insert(f.evaluate(&p).expect("in domain"))) {
                return (f.class(), false, Some(format!("map {k} ({f}) is injective but reported non-invertible")));
            }
        }
        (f.class(), inv.is_invertible(), None)
    });
    let mut by_class: BTreeMap<String, usize> = BTreeMap::new();
    let mut invertible = 0;
    for (class, inv, failure) in &results {
        if let Some(f) = failure {
            return Err(f.clone());
        }
        *by_class.entry(format!("{class:?}")).or_default() += 1;
        invertible += *inv as usize;
    }
    for c in [StructuralClass::PermShift, StructuralClass::StridedEmbed, StructuralClass::MixedRadix, StructuralClass::General] {
        check(by_class.get(&format!("{c:?}")).copied().unwrap_or(0) >= 500, format!("class {c:?} underrepresented: {by_class:?}"))?;
    }
    Ok(format!("{MAPS} maps {by_class:?}, {invertible} invertible, 0 failures"))
}

fn criterion_6() -> Outcome {
    let p = generate_resnet_analog(4, 2, 6);
    let reg = AnchorRegistry::default();
    let seeded = seed_anchors(&p, &reg, DEFAULT_BANKS).map_err(|e| e.to_string())?;
    let mut arcs = transfer_arcs(&p, &reg);
    let reference = propagate_arcs(&p, &seeded, &arcs);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for k in 0..100 {
        arcs.shuffle(&mut rng);
        let other = propagate_arcs(&p, &seeded, &arcs);
        check(other.state == reference.state, format!("permutation {k} reached a different state"))?;
    }
    Ok(format!("100 permutations of {} arcs, one fixpoint ({} rounds)", arcs.len(), reference.rounds))
}

fn criterion_7() -> Outcome {
    let mut programs: Vec<(String, Program)> = Vec::new();
    for s in 0..500u64 {
        programs.push((format!("random {s}"), generate_random(s)));
    }
    for (pairs, bad) in [(124, 1), (0, 0), (5, 5), (40, 3), (17, 0)] {
        programs.push((format!("wavenet {pairs} {bad}"), generate_wavenet_analog(pairs, bad, pairs as u64)));
    }
    for b in 1..=4 {
        programs.push((format!("resnet {b} 2"), generate_resnet_analog(b, 2, 0)));
    }
    let mut max_ratio = 0.0f64;
    for (name, p) in &programs {
        let once = run_dme(p);
        check(once.iterations <= p.tensors.len(), format!("{name}: {} iterations for {} tensors", once.iterations, p.tensors.len()))?;
        let twice = run_dme(&once.program);
        check(twice.program == once.program && twice.eliminated().count() == 0, format!("{name}: second run changed the program"))?;
        if !p.tensors.is_empty() {
            max_ratio = max_ratio.max(once.iterations as f64 / p.tensors.len() as f64);
        }
    }
    Ok(format!("{} programs, idempotent, max iterations/tensors {:.2}", programs.len(), max_ratio))
}

fn criterion_8() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let mut files: Vec<_> = fs::read_dir(&dir).map_err(|e| e.to_string())?.map(|e| e.unwrap().path()).collect();
    files.retain(|p| p.extension().is_some_and(|e| e == "ir"));
    files.sort();
    check(!files.is_empty(), "empty golden corpus")?;

    let schema: Value = serde_json::from_str(REPORT_SCHEMA).map_err(|e| e.to_string())?;
    let validator = jsonschema::validator_for(&schema).map_err(|e| e.to_string())?;
    let reg = AnchorRegistry::default();
    let pipelines: Vec<Vec<PassSpec>> = vec![
        vec![PassSpec::Dme],
        vec![PassSpec::Bankmap { mode: MappingMode::Global, banks: 4 }],
        vec![PassSpec::Bankmap { mode: MappingMode::Local, banks: 2 }],
        vec![PassSpec::Dme, PassSpec::Bankmap { mode: MappingMode::Global, banks: 8 }],
    ];
    let mut reports = 0;
    let mut validate = |doc: &ReportDocument, what: &str| -> Result<(), String> {
        let v: Value = serde_json::from_str(&doc.to_json()).map_err(|e| e.to_string())?;
        if let Some(err) = validator.iter_errors(&v).next() {
            return Err(format!("{what}: report invalid at {}: {err}", err.instance_path));
        }
        reports += 1;
        Ok(())
    };
    for f in &files {
        let name = f.file_name().unwrap().to_string_lossy().to_string();
        let text = fs::read_to_string(f).map_err(|e| e.to_string())?;
        let p = parse(&text).map_err(|e| format!("{name}: {e}"))?;
        check(print(&p) == text, format!("{name}: print(parse(text)) != text"))?;
        check(parse(&print(&p)).as_ref() == Ok(&p), format!("{name}: parse(print(p)) != p"))?;
        for opts in [TrafficOptions::default(), TrafficOptions { count_all_onchip: true, interbank_via_dram: true }] {
            validate(&ReportDocument::traffic_only(&name, &p, opts), &name)?;
            for pipe in &pipelines {
                let (_, doc) = optimize(&name, &p, pipe, &reg, opts).map_err(|e| format!("{name}: {e}"))?;
                validate(&doc, &name)?;
            }
        }
    }
    // the validator must reject a wrong version
    let mut bad: Value = serde_json::from_str(&ReportDocument::traffic_only("x", &Program::default(), TrafficOptions::default()).to_json())
        .map_err(|e| e.to_string())?;
    bad["schema"] = Value::from(2);
    check(!validator.is_valid(&bad), "schema accepted version 2")?;
    Ok(format!("{} golden files canonical, {reports} reports valid against schema 1", files.len()))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: [Criterion; 8] = [
        ("WaveNet-analog elimination count", Box::new(|| criterion_1(dir.path()))),
        ("footprint accounting", Box::new(|| criterion_2(dir.path()))),
        ("oracle soundness", Box::new(criterion_3)),
        ("global <= local", Box::new(criterion_4)),
        ("affine algebra round-trip", Box::new(criterion_5)),
        ("fixpoint determinism", Box::new(criterion_6)),
        ("idempotence and termination", Box::new(criterion_7)),
        ("round-trips and report schema", Box::new(criterion_8)),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|e| Err(e.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail} [{secs:.1}s]", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why} [{secs:.1}s]", k + 1);
            }
        }
    }
    println!("acceptance: {}/8 passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
