//! End-to-end checks of the command-line interface: output shapes, seeds
//! and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn langsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_langsim"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.xml");
    std::fs::write(
        &path,
        r#"<beast version='2.0'>
    <tree id='tree' spec='beast.util.TreeParser' IsLabelledNewick='true' newick='((((english:0.02,(german:0.01,french:0.01):0.4):0.01,spanish:0.3):0.2,italian:0.6):0.3,irish:0.6)'/>
    <run spec="beast.app.seqgen.LanguageSequenceGen" tree='@tree'>
        <root spec='Sequence' value="01010101010100100010101010000100" taxon="root"/>
        <subModel spec='ExplicitBinaryStochasticDollo' birth="0.5" death="0.5" borrowrate="0.1" borrowzrate="0.0" noEmptyTrait="false"/>
        <missingModel spec='MissingLanguageModel' rate="0.2"/>
    </run>
</beast>
"#,
    )
    .unwrap();
    path
}

fn strip_timestamp(text: &str) -> String {
    text.lines()
        .filter(|l| !l.contains("Created at"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn generate_writes_binary_data_xml() {
    let dir = tempdir("generate");
    write_config(&dir);
    let out = langsim(&["generate", "config.xml", "2", "--seed", "11"], &dir);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("<beast version='2.0'>"));
    assert!(text.contains("<data id='SD' dataType='binary'>"));
    for taxon in ["english", "german", "french", "spanish", "italian", "irish"] {
        assert!(
            text.contains(&format!("taxon='{taxon}'")),
            "missing {taxon}"
        );
    }
    assert!(text.contains("<!-- Meaning Classes: 0 16 -->"));
    assert!(text.contains("<!-- Created at: "));

    // Same seed, byte-identical output apart from the timestamp.
    let again = langsim(&["generate", "config.xml", "2", "--seed", "11"], &dir);
    assert_eq!(
        strip_timestamp(&text),
        strip_timestamp(&String::from_utf8(again.stdout).unwrap())
    );
    let other = langsim(&["generate", "config.xml", "2", "--seed", "12"], &dir);
    assert_ne!(
        strip_timestamp(&text),
        strip_timestamp(&String::from_utf8(other.stdout).unwrap())
    );
}

#[test]
fn generate_replicates_to_indexed_files() {
    let dir = tempdir("replicates");
    write_config(&dir);
    let out = langsim(
        &[
            "generate",
            "config.xml",
            "0",
            "out.xml",
            "--replicates",
            "3",
            "--seed",
            "5",
        ],
        &dir,
    );
    assert!(out.status.success());
    for i in 0..3 {
        let path = dir.join(format!("out.{i}.xml"));
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("dataType='binary'"), "{}", path.display());
    }
}

#[test]
fn generate_rejects_bad_config_with_code_2() {
    let dir = tempdir("badconfig");
    std::fs::write(dir.join("bad.xml"), "<beast version='2.0'><run/></beast>").unwrap();
    let out = langsim(&["generate", "bad.xml", "0"], &dir);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("config error"), "{err}");
}

#[test]
fn usage_errors_exit_with_code_1() {
    let dir = tempdir("usage");
    let out = langsim(&["frobnicate"], &dir);
    assert_eq!(out.status.code(), Some(1));
    let out = langsim(&["validate", "--suite", "fig99", "--n", "2000"], &dir);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn validate_small_suite_passes_and_writes_csv() {
    let dir = tempdir("validate");
    let out = langsim(
        &[
            "validate", "--suite", "fig3", "--n", "3000", "--seed", "1", "--out", "reports",
        ],
        &dir,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = std::fs::read_to_string(dir.join("reports/fig3_fit_report.csv")).unwrap();
    assert!(report.starts_with("test,statistic,critical,pass\n"));
    assert!(report.contains("sd_vs_poisson"));
    let hist = std::fs::read_to_string(dir.join("reports/fig3_sd_alive_histogram.csv")).unwrap();
    assert!(hist.starts_with("value,count\n"));
}

#[test]
fn compare_identical_trees_gives_zero_distances() {
    let dir = tempdir("compare");
    let newick = "(((a:1,b:1):1,(c:1.5,d:1.5):0.5):1,e:3);\n";
    std::fs::write(dir.join("true.nwk"), newick).unwrap();
    std::fs::write(dir.join("same.nwk"), newick).unwrap();
    let out = langsim(
        &["compare", "--true-tree", "true.nwk", "--others", "same.nwk"],
        &dir,
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "file,index,quartet_distance,height_difference"
    );
    assert_eq!(lines.next().unwrap(), "same.nwk,0,0,0");
}

#[test]
fn sweep_emits_per_rate_trees_and_alignments() {
    let dir = tempdir("sweep");
    let out = langsim(
        &[
            "sweep",
            "--model",
            "gtr",
            "--rates",
            "0,0.045",
            "--trees",
            "1",
            "--leaves",
            "6",
            "--root-length",
            "12",
            "--seed",
            "3",
            "--out",
            "cells",
        ],
        &dir,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for rate in ["0", "0.045"] {
        let tree =
            std::fs::read_to_string(dir.join(format!("cells/rate_{rate}/tree_000.nwk"))).unwrap();
        assert!(tree.trim_end().ends_with(';'));
        let align =
            std::fs::read_to_string(dir.join(format!("cells/rate_{rate}/alignment_000.xml")))
                .unwrap();
        assert!(align.contains("dataType='binary'"));
        assert_eq!(align.matches("<sequence").count(), 6);
    }
}

fn tempdir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("langsim-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
