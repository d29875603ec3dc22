use std::path::Path;
use std::process::Command;

fn header() -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/cfgmorph.h")).unwrap()
}

#[test]
fn header_declares_the_abi() {
    let h = header();
    for sym in [
        "typedef struct CfmProgram CfmProgram;",
        "typedef struct CfmObfuscated CfmObfuscated;",
        "CFM_STATUS_STEP_LIMIT = 6",
        "cfm_program_parse(",
        "cfm_program_run(",
        "cfm_obfuscate(",
        "cfm_obfuscated_metadata(",
        "cfm_last_error(void)",
        "cfm_string_free(",
    ] {
        assert!(h.contains(sym), "{sym}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = Command::new("cc").arg("--version").output() else { return };
    if !cc.status.success() {
        return;
    }
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-std=c99", "-x", "c"])
        .arg(dir.join("cfgmorph.h"))
        .status()
        .unwrap();
    assert!(status.success());
}
