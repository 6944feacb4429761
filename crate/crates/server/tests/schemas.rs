use std::path::PathBuf;

use memctl_core::canonical;
use memctl_server::schemas::tool_list;
use memctl_server::TOOL_NAMES;

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/tool_schemas.json")
}

#[test]
fn published_schemas_match_golden_file() {
    let mut encoded = canonical::value_to_vec(&tool_list()).unwrap();
    encoded.push(b'\n');
    if std::env::var_os("MEMCTL_BLESS").is_some() {
        std::fs::write(golden_path(), &encoded).unwrap();
    }
    let golden = std::fs::read(golden_path()).expect("docs/tool_schemas.json present");
    assert_eq!(
        String::from_utf8(golden).unwrap(),
        String::from_utf8(encoded).unwrap()
    );
}

#[test]
fn exactly_five_tools_in_order() {
    let list = tool_list();
    let names: Vec<&str> = list["tools"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, TOOL_NAMES);
    for t in list["tools"].as_array().unwrap() {
        assert_eq!(t["inputSchema"]["type"], "object");
        assert_eq!(t["inputSchema"]["additionalProperties"], false);
    }
}
