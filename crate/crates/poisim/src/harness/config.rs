//! Config-file loading with `--set key=value` overrides.
//!
//! The declarative file is TOML. Overrides address fields by dotted path
//! into the TOML value tree and are applied before deserialization, so they
//! go through the same validation as the file itself.

use std::path::Path;

use crate::error::Error;
use crate::Result;

use super::ExperimentConfig;

/// One parsed `--set` override.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigOverride {
    pub path: Vec<String>,
    pub value: toml::Value,
}

/// Parse `key.path=value`; the value is parsed as TOML (so strings need no
/// quotes only when they look like bare words).
pub fn parse_override(arg: &str) -> Result<ConfigOverride> {
    let (path, raw) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {arg:?} is not key=value")))?;
    if path.is_empty() {
        return Err(Error::Config("empty override path".into()));
    }
    let value: toml::Value = raw
        .parse()
        .or_else(|_| format!("\"{raw}\"").parse())
        .map_err(|e| Error::Config(format!("unparseable override value {raw:?}: {e}")))?;
    Ok(ConfigOverride {
        path: path.split('.').map(str::to_string).collect(),
        value,
    })
}

fn apply_override(root: &mut toml::Value, o: &ConfigOverride) -> Result<()> {
    let mut node = root;
    for key in &o.path[..o.path.len() - 1] {
        node = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key} is not a table")))?
            .entry(key.clone())
            .or_insert(toml::Value::Table(Default::default()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::Config("override path runs through a non-table".into()))?;
    table.insert(o.path.last().unwrap().clone(), o.value.clone());
    Ok(())
}

/// Load a config file and apply overrides.
pub fn load_config(path: &Path, overrides: &[ConfigOverride]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut value: toml::Value = text
        .parse()
        .map_err(|e| Error::Config(format!("bad TOML in {}: {e}", path.display())))?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let cfg: ExperimentConfig = value
        .try_into()
        .map_err(|e| Error::Config(format!("bad config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{AttackKind, DefenseConfig};

    const BASE: &str = r#"
protocol = "model_sharing"
attack = "ptia"
seeds = [1, 2]

[dataset]
source = "synthetic"

[dataset.spec]
users = 12
pois = 60
regions = 3
categories = 6
regions_per_user = 2
major_share = 0.6
seqs_per_user = [8, 10]
seq_len = [12, 20]
favorites_per_region = 6
seed = 7

[defense]
kind = "none"

[hyper]
regions = 3
group_size = 2

[hyper.dim]
mode = "fixed"
d = 8

[hyper.train]
learning_rate = 0.3
batch_size = 16
max_epochs = 15
dropout = 0.2
"#;

    fn write_base() -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(BASE.as_bytes()).unwrap();
        f
    }

    #[test]
    fn file_loads_and_validates() {
        let f = write_base();
        let cfg = load_config(f.path(), &[]).unwrap();
        assert_eq!(cfg.attack, AttackKind::Ptia);
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.hyper.regions, 3);
    }

    #[test]
    fn overrides_rewrite_nested_fields() {
        let f = write_base();
        let overrides = vec![
            parse_override("attack=kmeans").unwrap(),
            parse_override("hyper.train.learning_rate=0.5").unwrap(),
            parse_override("defense.kind=ldp").unwrap(),
            parse_override("defense.lambda=0.01").unwrap(),
            parse_override("seeds=[5]").unwrap(),
        ];
        let cfg = load_config(f.path(), &overrides).unwrap();
        assert_eq!(cfg.attack, AttackKind::Kmeans);
        assert_eq!(cfg.hyper.train.learning_rate, 0.5);
        assert_eq!(cfg.defense, DefenseConfig::Ldp { lambda: 0.01 });
        assert_eq!(cfg.seeds, vec![5]);
    }

    #[test]
    fn invalid_override_value_is_a_config_error() {
        assert!(matches!(
            parse_override("no-equals-sign"),
            Err(Error::Config(_))
        ));
        let f = write_base();
        let o = vec![parse_override("hyper.train.learning_rate=-1").unwrap()];
        assert!(matches!(load_config(f.path(), &o), Err(Error::Config(_))));
    }
}
