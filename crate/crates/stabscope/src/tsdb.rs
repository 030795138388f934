//! On-disk transient stability database: `features.csv`, `targets.csv` and
//! `schema.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use stabscope_core::features::{FeatureSchema, TSDb, Target};
use stabscope_core::network::BusId;
use stabscope_core::scenario::ScenarioConfig;

use crate::error::{Error, Result};
use crate::io::{self, fmt_f64, Csv, CsvTable};

pub const FEATURES: &str = "features.csv";
pub const TARGETS: &str = "targets.csv";
pub const SCHEMA: &str = "schema.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub schema_hash: String,
    pub fingerprint: String,
    pub network: String,
    pub fault_buses: Vec<BusId>,
    pub scenario_config: ScenarioConfig,
    pub schema: FeatureSchema,
}

fn provenance(fingerprint: &str, schema_hash: &str) -> String {
    format!("stabscope build-db fingerprint={fingerprint} schema_hash={schema_hash}")
}

/// The three files of `db` by name.
pub fn encode_tsdb(db: &TSDb, meta: &SchemaFile) -> Result<Vec<(&'static str, Vec<u8>)>> {
    db.validate().map_err(|e| Error::malformed(FEATURES, e.to_string()))?;
    let hash = db.schema.hash();
    if meta.schema_hash != hash || meta.schema != db.schema {
        return Err(Error::malformed(SCHEMA, "schema metadata does not describe the database"));
    }
    let prov = provenance(&meta.fingerprint, &hash);
    let mut header = vec!["scenario_id".to_string()];
    header.extend(db.schema.names().map(String::from));
    let mut f = Csv::new(&prov, &header);
    for (id, row) in db.scenario_ids.iter().zip(&db.x) {
        f.row(std::iter::once(id.to_string()).chain(row.iter().map(|&v| fmt_f64(v))));
    }
    let mut header = vec!["scenario_id".to_string()];
    header.extend(db.targets.iter().map(|t| t.name.clone()));
    let mut t = Csv::new(&prov, &header);
    for (r, id) in db.scenario_ids.iter().enumerate() {
        t.row(std::iter::once(id.to_string()).chain(db.targets.iter().map(|t| fmt_f64(t.values[r]))));
    }
    Ok(vec![(FEATURES, f.finish()), (TARGETS, t.finish()), (SCHEMA, io::to_json(meta))])
}

pub fn write_tsdb(db: &TSDb, dir: &Path, meta: &SchemaFile) -> Result<()> {
    for (name, bytes) in encode_tsdb(db, meta)? {
        io::write_atomic(&dir.join(name), &bytes)?;
    }
    Ok(())
}

fn schema_error(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::malformed(path, format!("schema mismatch: {msg}"))
}

pub fn read_tsdb(dir: &Path) -> Result<(TSDb, SchemaFile)> {
    let schema_path = dir.join(SCHEMA);
    let meta: SchemaFile = io::read_json(&schema_path)?;
    let hash = meta.schema.hash();
    if hash != meta.schema_hash {
        return Err(schema_error(&schema_path, format!("recorded hash {} but schema hashes to {hash}", meta.schema_hash)));
    }
    let expected_prov = provenance(&meta.fingerprint, &hash);
    let features = CsvTable::read(&dir.join(FEATURES))?;
    let targets = CsvTable::read(&dir.join(TARGETS))?;
    for t in [&features, &targets] {
        if t.provenance != expected_prov {
            return Err(schema_error(&t.path, format!("provenance '{}' does not match {SCHEMA}", t.provenance)));
        }
        if t.header.first().map(String::as_str) != Some("scenario_id") {
            return Err(schema_error(&t.path, "first column must be scenario_id"));
        }
    }
    let names: Vec<&str> = meta.schema.names().collect();
    if features.header[1..] != names[..] {
        let bad = features.header[1..]
            .iter()
            .zip(&names)
            .find(|(a, b)| a.as_str() != **b)
            .map(|(a, b)| format!("column '{a}' where the schema has '{b}'"))
            .unwrap_or_else(|| format!("{} feature columns, schema has {}", features.header.len() - 1, names.len()));
        return Err(schema_error(&features.path, bad));
    }
    let target_names = stabscope_core::features::target_names(&meta.fault_buses);
    if targets.header[1..] != target_names[..] {
        return Err(schema_error(&targets.path, format!("target columns {:?}, expected {target_names:?}", &targets.header[1..])));
    }
    if features.rows.len() != targets.rows.len() {
        return Err(Error::malformed(&targets.path, "row count differs from features.csv"));
    }
    let mut db = TSDb {
        schema: meta.schema.clone(),
        scenario_ids: Vec::with_capacity(features.rows.len()),
        x: Vec::with_capacity(features.rows.len()),
        targets: target_names.iter().map(|n| Target { name: n.clone(), values: Vec::new() }).collect(),
    };
    for r in 0..features.rows.len() {
        for t in [&features, &targets] {
            if t.rows[r].len() != t.header.len() {
                return Err(Error::malformed(&t.path, format!("row {} has {} fields, expected {}", r + 1, t.rows[r].len(), t.header.len())));
            }
        }
        let id = features.usize_at(r, 0)?;
        if targets.usize_at(r, 0)? != id {
            return Err(Error::malformed(&targets.path, format!("row {} is scenario {}, features.csv has {id}", r + 1, targets.rows[r][0])));
        }
        db.scenario_ids.push(id);
        db.x.push((1..features.header.len()).map(|c| features.f64_at(r, c)).collect::<Result<_>>()?);
        for (k, t) in db.targets.iter_mut().enumerate() {
            t.values.push(targets.f64_at(r, k + 1)?);
        }
    }
    Ok((db, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use stabscope_core::features::{Category, FeatureDesc};

    fn small() -> (TSDb, SchemaFile) {
        let schema = FeatureSchema {
            features: (0..10)
                .map(|j| FeatureDesc { name: format!("f{j}"), category: Category::System, unit: "MW".into() })
                .collect(),
            monitored_branches: vec![],
        };
        let x: Vec<Vec<f64>> = (0..5).map(|i| (0..10).map(|j| ((i * 10 + j) as f64).sin() / 3.0).collect()).collect();
        let db = TSDb {
            schema: schema.clone(),
            scenario_ids: vec![0, 3, 4, 8, 11],
            targets: vec![
                Target { name: "cct_bus_5".into(), values: vec![0.1, 0.2, 0.30000000000000004, 0.4, 1.4] },
                Target { name: "cct_min".into(), values: vec![0.1, 0.2, 0.30000000000000004, 0.4, 1.4] },
            ],
            x,
        };
        let meta = SchemaFile {
            schema_hash: schema.hash(),
            fingerprint: "abc".into(),
            network: "toy".into(),
            fault_buses: vec![5],
            scenario_config: ScenarioConfig {
                demand_min: 1.0,
                demand_max: 1.0,
                demand_step: 0.1,
                s_values: vec![0.0],
                r_values: vec![1.0],
                displaceable: vec![],
                res_siting: Default::default(),
            },
            schema,
        };
        (db, meta)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (db, meta) = small();
        write_tsdb(&db, dir.path(), &meta).unwrap();
        let (back, back_meta) = read_tsdb(dir.path()).unwrap();
        assert_eq!(back, db);
        assert_eq!(back_meta, meta);
    }

    #[test]
    fn edited_header_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let (db, meta) = small();
        write_tsdb(&db, dir.path(), &meta).unwrap();
        let p = dir.path().join(FEATURES);
        let text = std::fs::read_to_string(&p).unwrap().replacen(",f3,", ",f3x,", 1);
        std::fs::write(&p, text).unwrap();
        let msg = read_tsdb(dir.path()).unwrap_err().to_string();
        assert!(msg.contains("schema mismatch") && msg.contains("f3x"), "{msg}");
    }

    #[test]
    fn malformed_number_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let (db, meta) = small();
        write_tsdb(&db, dir.path(), &meta).unwrap();
        let p = dir.path().join(TARGETS);
        let mut lines: Vec<String> = std::fs::read_to_string(&p).unwrap().lines().map(String::from).collect();
        lines[3] = "3,zero,0.2".into();
        std::fs::write(&p, lines.join("\n")).unwrap();
        let msg = read_tsdb(dir.path()).unwrap_err().to_string();
        assert!(msg.contains("row 2") && msg.contains("cct_bus_5"), "{msg}");
    }
}
