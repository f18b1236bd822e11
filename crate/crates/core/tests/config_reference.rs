use semitrace_core::config::ExperimentConfig;

fn toml_blocks(md: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<String> = None;
    for line in md.lines() {
        match (&mut current, line.trim()) {
            (None, "```toml") => current = Some(String::new()),
            (Some(_), "```") => blocks.push(current.take().unwrap()),
            (Some(b), _) => {
                b.push_str(line);
                b.push('\n');
            }
            _ => {}
        }
    }
    blocks
}

#[test]
fn documented_defaults_match_the_code() {
    let md = include_str!("../../../docs/config-reference.md");
    let blocks = toml_blocks(md);
    assert_eq!(blocks.len(), 2);
    let cfg = ExperimentConfig::from_toml_str(&blocks[0]).unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
    // round trip through the serializer
    assert_eq!(ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap(), cfg);
}

#[test]
fn documented_seed_block_parses() {
    let md = include_str!("../../../docs/config-reference.md");
    let text = format!("[system]\nfamily = \"ho2d_aniso\"\n{}", toml_blocks(md)[1]);
    let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
    assert_eq!(cfg.orbits.seeds.len(), 1);
    assert_eq!(cfg.seed_strategy().unwrap().seeds[0].1, 3.1);
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 3);
}
