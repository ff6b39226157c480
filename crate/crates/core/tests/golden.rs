use std::fs;
use std::path::{Path, PathBuf};

use memopt::bankmap::{run_global, run_local_baseline, AnchorRegistry, DEFAULT_BANKS};
use memopt::dme::run_dme;
use memopt::frontend::{generate_random, generate_resnet_analog, generate_wavenet_analog, parse, print};
use memopt::ir::{validate, Program};

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn corpus() -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(golden_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "ir"))
        .collect();
    files.sort();
    files
}

fn load(name: &str) -> (String, Program) {
    let text = fs::read_to_string(golden_dir().join(name)).unwrap();
    let p = parse(&text).unwrap();
    (text, p)
}

#[test]
fn corpus_is_canonical() {
    let files = corpus();
    assert!(files.len() >= 10);
    for f in files {
        let text = fs::read_to_string(&f).unwrap();
        let p = parse(&text).unwrap_or_else(|e| panic!("{}: {e}", f.display()));
        assert!(validate(&p).is_empty(), "{}", f.display());
        assert_eq!(print(&p), text, "{} is not in canonical form", f.display());
        assert_eq!(parse(&print(&p)).unwrap(), p);
    }
}

#[test]
fn generated_files_are_reproducible() {
    assert_eq!(load("wavenet_124_1.ir").0, print(&generate_wavenet_analog(124, 1, 0)));
    assert_eq!(load("wavenet_12_2.ir").0, print(&generate_wavenet_analog(12, 2, 7)));
    assert_eq!(load("resnet_4_1.ir").0, print(&generate_resnet_analog(4, 1, 0)));
    assert_eq!(load("resnet_2_3.ir").0, print(&generate_resnet_analog(2, 3, 5)));
    for s in 1..=3 {
        assert_eq!(load(&format!("random_{s}.ir")).0, print(&generate_random(s)));
    }
}

#[test]
fn wavenet_reparses_to_its_nests() {
    let (_, p) = load("wavenet_124_1.ir");
    let copies = p.nests.iter().filter(|n| n.kind.is_copy_kind()).count();
    let pairs = memopt::ir::find_copy_pairs(&p).len();
    assert_eq!(pairs, 124);
    assert!((62..=124).contains(&copies));
}

#[test]
fn pass_outputs_match_expected() {
    let reg = AnchorRegistry::default();
    let expect = |name: &str| fs::read_to_string(golden_dir().join("expected").join(name)).unwrap();
    assert_eq!(print(&run_dme(&load("quasi.ir").1).program), expect("quasi.dme.ir"));
    assert_eq!(print(&run_dme(&load("wavenet_12_2.ir").1).program), expect("wavenet_12_2.dme.ir"));
    let (_, resnet) = load("resnet_2_3.ir");
    assert_eq!(print(&run_global(&resnet, &reg, DEFAULT_BANKS).unwrap().0), expect("resnet_2_3.global.ir"));
    assert_eq!(print(&run_local_baseline(&resnet, &reg, DEFAULT_BANKS).unwrap().0), expect("resnet_2_3.local.ir"));
}
