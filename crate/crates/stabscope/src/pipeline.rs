//! The staged pipeline behind the command line. Every stage reads the
//! artifacts of earlier stages from the output directory, checks that they are
//! current, and writes its own artifacts plus a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use stabscope_core::cct::CctSurface;
use stabscope_core::explain::pfi::pfi;
use stabscope_core::explain::plots::{dependence_data, mean_abs, summary_data};
use stabscope_core::explain::{background_sample, explain_all_locations, ExplainerConfig, ShapCube};
use stabscope_core::features::{assemble_databases, extract_features, target_names, DbRow, TSDb};
use stabscope_core::intervention::{apply_rule, evaluate_intervention, BoxStats, InterventionResult};
use stabscope_core::ml::select::{select_algorithm, TierReport, TABLE_ROWS};
use stabscope_core::ml::{Algorithm, Regressor};
use stabscope_core::network::PowerNetwork;
use stabscope_core::scenario::Scenario;
use stabscope_core::seed::{derive_indexed, derive_seed};
use stabscope_core::study::{scenario_ccts, solve_scenario, SolveStatus, SolvedScenario};
use stabscope_core::trends::{voi_trend, TrendReport};
use stabscope_core::{Error as CoreError, Executor};

use crate::config::{Loaded, PipelineConfig};
use crate::error::{Error, Result, StageContext};
use crate::io::{self, file_token, fmt_f64, fmt_opt, Csv, CsvTable};
use crate::manifest::{Manifest, Stage, StageOutput};
use crate::tsdb::{encode_tsdb, read_tsdb, SchemaFile};

pub const SCENARIOS_JSON: &str = "scenarios/scenarios.json";
pub const OPERATING_POINTS_JSON: &str = "operating_points/operating_points.json";
pub const SURFACES_JSON: &str = "cct/surfaces.json";
pub const SELECTION_JSON: &str = "models/selection.json";
pub const BASE_VALUES_CSV: &str = "shap_cube/base_values.csv";

/// JSON artifact tagged with the fingerprint of the stage that wrote it.
#[derive(Debug, Serialize, Deserialize)]
struct Envelope<T> {
    fingerprint: String,
    data: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSurface {
    pub scenario_id: usize,
    pub surface: CctSurface,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub target: String,
    pub fingerprint: String,
    pub schema_hash: String,
    pub regressor: Regressor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionFile {
    pub fingerprint: String,
    pub schema_hash: String,
    pub selected: Algorithm,
    pub threshold_unmet: bool,
    pub theta: f64,
    pub targets: Vec<String>,
    pub tiers: Vec<TierReport>,
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionFile {
    pub fingerprint: String,
    /// `None` when the rule affects no scenario.
    pub result: Option<InterventionResult>,
    pub n_affected: usize,
}

pub fn model_path(target: &str) -> String {
    format!("models/{}.json", file_token(target))
}

pub fn intervention_stem(slug: &str, bus: u32) -> String {
    format!("interventions/intervention_{}_{bus}", file_token(slug))
}

pub struct Pipeline<E: Executor> {
    pub loaded: Loaded,
    pub out: PathBuf,
    pub exec: E,
}

fn compact<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("in-memory JSON serialisation")
}

impl<E: Executor> Pipeline<E> {
    pub fn new(loaded: Loaded, out: PathBuf, exec: E) -> Self {
        Self { loaded, out, exec }
    }

    fn cfg(&self) -> &PipelineConfig {
        &self.loaded.config
    }

    fn net(&self) -> &PowerNetwork {
        &self.loaded.network
    }

    /// Hash of the configuration a stage depends on, chained through the
    /// fingerprints of the stages it reads.
    pub fn fingerprint(&self, stage: Stage) -> String {
        let c = self.cfg();
        let seed = c.seed.to_le_bytes().to_vec();
        let parts: Vec<Vec<u8>> = match stage {
            Stage::Scenarios => vec![self.loaded.case_hash.clone().into_bytes(), compact(&c.scenarios)],
            Stage::Simulate => vec![self.fingerprint(Stage::Scenarios).into_bytes(), compact(&c.study)],
            Stage::BuildDb => vec![self.fingerprint(Stage::Simulate).into_bytes(), compact(&c.monitored_branches)],
            Stage::Train => vec![self.fingerprint(Stage::BuildDb).into_bytes(), compact(&c.ladder), seed],
            Stage::Explain => vec![self.fingerprint(Stage::Train).into_bytes(), compact(&c.explain), seed],
            Stage::Trends => vec![self.fingerprint(Stage::Explain).into_bytes(), compact(&c.trends)],
            Stage::Intervene => vec![self.fingerprint(Stage::Simulate).into_bytes(), compact(&c.interventions)],
            Stage::Report => vec![
                self.fingerprint(Stage::Trends).into_bytes(),
                self.fingerprint(Stage::Intervene).into_bytes(),
            ],
        };
        let mut blob = stage.name().as_bytes().to_vec();
        for p in parts {
            blob.push(0);
            blob.extend(p);
        }
        io::sha256_hex(&blob)
    }

    fn provenance(&self, stage: Stage) -> String {
        format!("stabscope {stage} fingerprint={}", self.fingerprint(stage))
    }

    /// Checks the upstream stages and returns their fingerprints.
    fn require(&self, stage: Stage, upstream: &[Stage]) -> Result<BTreeMap<String, String>> {
        let mut inputs = BTreeMap::new();
        for &u in upstream {
            let fp = self.fingerprint(u);
            Manifest::require(&self.out, stage, u, &fp)?;
            inputs.insert(u.name().to_string(), fp);
        }
        Ok(inputs)
    }

    fn commit(&self, stage: Stage, output: StageOutput, inputs: BTreeMap<String, String>) -> Result<Manifest> {
        let m = output.commit(&self.out, &self.fingerprint(stage), &self.loaded.config_hash, inputs)?;
        log::info!("{stage}: wrote {} files", m.files.len());
        Ok(m)
    }

    fn read_envelope<T: DeserializeOwned>(&self, stage: Stage, upstream: Stage, rel: &str) -> Result<T> {
        let path = self.out.join(rel);
        let env: Envelope<T> = io::read_json(&path)?;
        let expected = self.fingerprint(upstream);
        if env.fingerprint != expected {
            return Err(Error::HashMismatch { stage: stage.name(), artifact: rel.into(), expected, found: env.fingerprint });
        }
        Ok(env.data)
    }

    fn envelope<T: Serialize>(&self, stage: Stage, data: T) -> Vec<u8> {
        io::to_json(&Envelope { fingerprint: self.fingerprint(stage), data })
    }

    pub fn run_stage(&self, stage: Stage) -> Result<Manifest> {
        match stage {
            Stage::Scenarios => self.scenarios(),
            Stage::Simulate => self.simulate(),
            Stage::BuildDb => self.build_db(),
            Stage::Train => self.train(),
            Stage::Explain => self.explain(),
            Stage::Trends => self.trends(),
            Stage::Intervene => self.intervene(),
            Stage::Report => self.report(),
        }
    }

    /// Every stage in order; the intervention stage only when rules are
    /// configured.
    pub fn run_all(&self) -> Result<()> {
        for stage in Stage::ALL {
            if stage == Stage::Intervene && self.cfg().interventions.is_empty() {
                continue;
            }
            log::info!("running {stage}");
            self.run_stage(stage)?;
        }
        Ok(())
    }

    pub fn scenarios(&self) -> Result<Manifest> {
        const S: Stage = Stage::Scenarios;
        let scenarios = stabscope_core::scenario::generate_scenarios(self.net(), &self.cfg().scenarios).stage(S.name())?;
        log::info!("{S}: {} scenarios", scenarios.len());
        let res_ids: Vec<String> = self.net().res_units.iter().map(|r| r.id.clone()).collect();
        let mut header: Vec<String> = ["scenario_id", "demand_mult", "displaced_sg", "u", "s", "r"].map(String::from).to_vec();
        header.extend(res_ids.iter().map(|id| format!("res_mva_{id}")));
        let mut csv = Csv::new(&self.provenance(S), &header);
        for sc in &scenarios {
            let mut row = vec![
                sc.id.to_string(),
                fmt_f64(sc.demand_mult),
                sc.displaced_sg.clone().unwrap_or_default(),
                sc.u.to_string(),
                fmt_f64(sc.s),
                fmt_f64(sc.r),
            ];
            row.extend(res_ids.iter().map(|id| fmt_opt(sc.res_mva.get(id).copied())));
            csv.row(row);
        }
        let mut out = StageOutput::new(S);
        out.add(SCENARIOS_JSON, self.envelope(S, &scenarios));
        out.add("scenarios/scenarios.csv", csv.finish());
        self.commit(S, out, BTreeMap::new())
    }

    fn load_scenarios(&self, stage: Stage) -> Result<Vec<Scenario>> {
        self.read_envelope(stage, Stage::Scenarios, SCENARIOS_JSON)
    }

    pub fn simulate(&self) -> Result<Manifest> {
        const S: Stage = Stage::Simulate;
        let inputs = self.require(S, &[Stage::Scenarios])?;
        let scenarios = self.load_scenarios(S)?;
        let (net, study) = (self.net(), &self.cfg().study);
        let results = self.exec.map(scenarios.iter().collect(), |sc: &Scenario| {
            let run = || -> stabscope_core::Result<(SolvedScenario, Option<CctSurface>)> {
                let solved = solve_scenario(net, sc)?;
                let surface = match solved.converged() {
                    Some(op) => Some(scenario_ccts(net, sc, op, study)?),
                    None => None,
                };
                Ok((solved, surface))
            };
            run().map_err(|e| CoreError::Row { row: sc.id, source: Box::new(e) })
        });
        let mut solved = Vec::with_capacity(results.len());
        let mut surfaces = Vec::new();
        for r in results {
            let (s, surface) = r.stage(S.name())?;
            if let Some(surface) = surface {
                surfaces.push(ScenarioSurface { scenario_id: s.scenario_id, surface });
            }
            solved.push(s);
        }
        log::info!("{S}: {} of {} scenarios converged", surfaces.len(), solved.len());

        let prov = self.provenance(S);
        let mut status = Csv::new(&prov, &["scenario_id", "status", "detail", "iterations", "mismatch"].map(String::from));
        for s in &solved {
            let (name, detail) = match &s.status {
                SolveStatus::Converged => ("converged", String::new()),
                SolveStatus::NotConverged => ("not_converged", String::new()),
                SolveStatus::Infeasible(why) => ("infeasible", why.clone()),
            };
            let op = s.operating_point.as_ref();
            status.row([
                s.scenario_id.to_string(),
                name.into(),
                detail,
                op.map(|o| o.iterations.to_string()).unwrap_or_default(),
                fmt_opt(op.map(|o| o.mismatch)),
            ]);
        }
        let mut header = vec!["scenario_id".to_string()];
        header.extend(target_names(&study.fault_buses));
        header.extend(["cct_min_bus".into(), "capped_buses".into()]);
        let mut cct = Csv::new(&prov, &header);
        for s in &surfaces {
            let mut row = vec![s.scenario_id.to_string()];
            for &bus in &study.fault_buses {
                let r = s.surface.entries.iter().find(|e| e.bus == bus).and_then(|e| e.result);
                row.push(fmt_opt(r.map(|r| r.cct)));
            }
            row.push(fmt_opt(s.surface.cct_min.map(|m| m.0)));
            row.push(s.surface.cct_min.map(|m| m.1.to_string()).unwrap_or_default());
            let capped: Vec<String> =
                s.surface.entries.iter().filter(|e| e.result.is_some_and(|r| r.capped)).map(|e| e.bus.to_string()).collect();
            row.push(capped.join(";"));
            cct.row(row);
        }
        let mut out = StageOutput::new(S);
        out.add(OPERATING_POINTS_JSON, self.envelope(S, &solved));
        out.add("operating_points/status.csv", status.finish());
        out.add(SURFACES_JSON, self.envelope(S, &surfaces));
        out.add("cct/cct.csv", cct.finish());
        self.commit(S, out, inputs)
    }

    /// Scenarios, solved operating points and CCT surfaces from disk.
    pub fn load_simulation(&self, stage: Stage) -> Result<(Vec<Scenario>, Vec<SolvedScenario>, Vec<ScenarioSurface>)> {
        Ok((
            self.load_scenarios(stage)?,
            self.read_envelope(stage, Stage::Simulate, OPERATING_POINTS_JSON)?,
            self.read_envelope(stage, Stage::Simulate, SURFACES_JSON)?,
        ))
    }

    pub fn build_db(&self) -> Result<Manifest> {
        const S: Stage = Stage::BuildDb;
        let inputs = self.require(S, &[Stage::Scenarios, Stage::Simulate])?;
        let (scenarios, solved, surfaces) = self.load_simulation(S)?;
        let by_id: BTreeMap<usize, (&Scenario, &SolvedScenario)> = scenarios
            .iter()
            .zip(&solved)
            .map(|(sc, s)| (sc.id, (sc, s)))
            .collect();
        let (net, schema) = (self.net(), &self.loaded.schema);
        let jobs: Vec<&ScenarioSurface> = surfaces.iter().collect();
        let rows = self.exec.map(jobs, |s| -> stabscope_core::Result<DbRow> {
            let wrap = |e: CoreError| CoreError::Row { row: s.scenario_id, source: Box::new(e) };
            let (sc, solved) = by_id.get(&s.scenario_id).ok_or_else(|| {
                wrap(CoreError::SchemaMismatch("CCT surface without a scenario".into()))
            })?;
            let op = solved.converged().ok_or_else(|| wrap(CoreError::NotConverged))?;
            Ok(DbRow {
                scenario_id: s.scenario_id,
                features: extract_features(net, schema, sc, op).map_err(wrap)?,
                surface: s.surface.clone(),
            })
        });
        let rows = rows.into_iter().collect::<stabscope_core::Result<Vec<_>>>().stage(S.name())?;
        let db = assemble_databases(schema, &self.cfg().study.fault_buses, rows).stage(S.name())?;
        log::info!("{S}: {} rows, {} features", db.n_rows(), db.schema.len());
        let meta = SchemaFile {
            schema_hash: schema.hash(),
            fingerprint: self.fingerprint(S),
            network: net.name.clone(),
            fault_buses: self.cfg().study.fault_buses.clone(),
            scenario_config: self.cfg().scenarios.clone(),
            schema: schema.clone(),
        };
        let mut out = StageOutput::new(S);
        for (name, bytes) in encode_tsdb(&db, &meta)? {
            out.add(format!("tsdb/{name}"), bytes);
        }
        self.commit(S, out, inputs)
    }

    pub fn load_db(&self) -> Result<TSDb> {
        let (db, meta) = read_tsdb(&self.out.join("tsdb"))?;
        if meta.schema != self.loaded.schema {
            return Err(Error::malformed(self.out.join("tsdb"), "schema mismatch: database schema differs from the configured network"));
        }
        Ok(db)
    }

    pub fn train(&self) -> Result<Manifest> {
        const S: Stage = Stage::Train;
        let inputs = self.require(S, &[Stage::BuildDb])?;
        let db = self.load_db()?;
        let selection = select_algorithm(&db, &self.cfg().ladder, derive_seed(self.cfg().seed, "train"), &self.exec)
            .stage(S.name())?;
        log::info!("{S}: selected {}{}", selection.selected, if selection.threshold_unmet { " (threshold not met)" } else { "" });
        let fp = self.fingerprint(S);
        let schema_hash = db.schema.hash();
        let mut out = StageOutput::new(S);
        for (target, regressor) in &selection.models {
            let file = ModelFile {
                target: target.clone(),
                fingerprint: fp.clone(),
                schema_hash: schema_hash.clone(),
                regressor: regressor.clone(),
            };
            out.add(model_path(target), io::to_json(&file));
        }
        let ids = |rows: &[usize]| rows.iter().map(|&r| db.scenario_ids[r]).collect::<Vec<_>>();
        let sel = SelectionFile {
            fingerprint: fp,
            schema_hash,
            selected: selection.selected,
            threshold_unmet: selection.threshold_unmet,
            theta: selection.theta,
            targets: selection.models.iter().map(|(t, _)| t.clone()).collect(),
            tiers: selection.tiers.clone(),
            train_ids: ids(&selection.train_rows),
            test_ids: ids(&selection.test_rows),
        };
        out.add(SELECTION_JSON, io::to_json(&sel));
        out.add("models/selection_report.csv", selection_table(&self.provenance(S), &sel.tiers));
        self.commit(S, out, inputs)
    }

    pub fn load_models(&self, stage: Stage) -> Result<(SelectionFile, Vec<(String, Regressor)>)> {
        let fp = self.fingerprint(Stage::Train);
        let check = |found: &str, rel: &str| {
            if found != fp {
                return Err(Error::HashMismatch { stage: stage.name(), artifact: rel.into(), expected: fp.clone(), found: found.into() });
            }
            Ok(())
        };
        let sel: SelectionFile = io::read_json(&self.out.join(SELECTION_JSON))?;
        check(&sel.fingerprint, SELECTION_JSON)?;
        let mut models = Vec::new();
        for target in &sel.targets {
            let rel = model_path(target);
            let m: ModelFile = io::read_json(&self.out.join(&rel))?;
            check(&m.fingerprint, &rel)?;
            if m.schema_hash != self.loaded.schema.hash() || m.target != *target {
                return Err(Error::malformed(self.out.join(&rel), "model does not belong to this database"));
            }
            models.push((m.target, m.regressor));
        }
        Ok((sel, models))
    }

    pub fn explain(&self) -> Result<Manifest> {
        const S: Stage = Stage::Explain;
        let inputs = self.require(S, &[Stage::BuildDb, Stage::Train])?;
        let db = self.load_db()?;
        let (sel, models) = self.load_models(S)?;
        let settings = &self.cfg().explain;
        let seed = derive_seed(self.cfg().seed, "explain");
        let row_of: BTreeMap<usize, usize> = db.scenario_ids.iter().enumerate().map(|(r, &id)| (id, r)).collect();
        let rows_of = |ids: &[usize]| -> Result<Vec<usize>> {
            ids.iter()
                .map(|id| row_of.get(id).copied().ok_or_else(|| Error::malformed(self.out.join(SELECTION_JSON), format!("scenario {id} is not in the database"))))
                .collect()
        };
        let train_rows = rows_of(&sel.train_ids)?;
        let test_rows = rows_of(&sel.test_ids)?;
        let picks = background_sample(train_rows.len(), settings.background.unwrap_or(usize::MAX), derive_seed(seed, "background"));
        let background: Vec<Vec<f64>> = picks.iter().map(|&i| db.x[train_rows[i]].clone()).collect();
        let names: Vec<String> = db.schema.names().map(String::from).collect();
        let ecfg = ExplainerConfig { method: settings.method, budget: settings.budget, seed };
        log::info!("{S}: {} rows x {} locations, background {}", db.n_rows(), models.len(), background.len());
        let cube = explain_all_locations(&models, &names, &db.scenario_ids, &db.x, &background, &ecfg, &self.exec).stage(S.name())?;

        let prov = self.provenance(S);
        let mut out = StageOutput::new(S);
        let mut base = Csv::new(&prov, &["location".into(), "base_value".into()]);
        let test_db = db.select_rows(&test_rows);
        for (l, loc) in cube.locations.iter().enumerate() {
            base.row([loc.clone(), fmt_f64(cube.base_values[l])]);
            let phi = &cube.values[l];
            let mut header = vec!["scenario_id".to_string()];
            header.extend(names.iter().cloned());
            let mut c = Csv::new(&format!("{prov} location={loc}"), &header);
            for (id, row) in cube.scenario_ids.iter().zip(phi) {
                c.row(std::iter::once(id.to_string()).chain(row.iter().map(|&v| fmt_f64(v))));
            }
            let tok = file_token(loc);
            out.add(format!("shap_cube/{tok}.csv"), c.finish());

            let summary = summary_data(phi, &db.x, &names, settings.top_k).stage(S.name())?;
            let mut c = Csv::new(
                &format!("{prov} location={loc}"),
                &["rank", "feature", "mean_abs_phi", "scenario_id", "value", "phi"].map(String::from),
            );
            for f in &summary {
                for (r, id) in cube.scenario_ids.iter().enumerate() {
                    c.row([f.rank.to_string(), f.feature.clone(), fmt_f64(f.mean_abs_phi), id.to_string(), fmt_f64(f.value[r]), fmt_f64(f.phi[r])]);
                }
            }
            out.add(format!("shap_cube/summary_{tok}.csv"), c.finish());

            for d in &settings.dependence {
                let pts = dependence_data(phi, &db.x, &names, &d.voi, &d.color).stage(S.name())?;
                let mut c = Csv::new(
                    &format!("{prov} location={loc} voi={} color={}", d.voi, d.color),
                    &["scenario_id", "value", "phi", "color"].map(String::from),
                );
                for (p, id) in pts.iter().zip(&cube.scenario_ids) {
                    c.row([id.to_string(), fmt_f64(p.value), fmt_f64(p.phi), fmt_f64(p.color)]);
                }
                out.add(format!("shap_cube/dependence_{tok}_{}.csv", file_token(&d.voi)), c.finish());
            }

            let model = &models[l].1;
            let rep = pfi(model, &test_db.x, test_db.target(loc).stage(S.name())?, settings.pfi_repeats, derive_indexed(seed, "pfi", l as u64), settings.pfi_score)
                .stage(S.name())?;
            let mut c = Csv::new(
                &format!(
                    "{prov} location={loc} score={} reference={} repeats={} rows={}",
                    serde_json::to_value(rep.score).expect("enum").as_str().unwrap_or_default(),
                    fmt_f64(rep.reference),
                    rep.repeats,
                    test_db.n_rows()
                ),
                &["feature".into(), "importance".into()],
            );
            for (name, imp) in names.iter().zip(&rep.importance) {
                c.row([name.clone(), fmt_f64(*imp)]);
            }
            out.add(format!("shap_cube/pfi_{tok}.csv"), c.finish());
        }
        out.add(BASE_VALUES_CSV, base.finish());
        self.commit(S, out, inputs)
    }

    /// Reassembles the SHAP cube from its CSV files.
    pub fn load_cube(&self, stage: Stage) -> Result<ShapCube> {
        let prov = self.provenance(Stage::Explain);
        let stale = |t: &CsvTable| -> Result<()> {
            if !t.provenance.starts_with(&prov) {
                return Err(Error::HashMismatch {
                    stage: stage.name(),
                    artifact: t.path.display().to_string(),
                    expected: self.fingerprint(Stage::Explain),
                    found: t.provenance.clone(),
                });
            }
            Ok(())
        };
        let base = CsvTable::read(&self.out.join(BASE_VALUES_CSV))?;
        stale(&base)?;
        let names: Vec<String> = self.loaded.schema.names().map(String::from).collect();
        let mut cube = ShapCube {
            locations: Vec::new(),
            scenario_ids: Vec::new(),
            features: names.clone(),
            base_values: Vec::new(),
            values: Vec::new(),
        };
        for r in 0..base.rows.len() {
            let loc = base.rows[r][0].clone();
            let t = CsvTable::read(&self.out.join(format!("shap_cube/{}.csv", file_token(&loc))))?;
            stale(&t)?;
            if t.header.len() != names.len() + 1 || t.header[1..] != names[..] {
                return Err(Error::malformed(&t.path, "schema mismatch: SHAP columns differ from the feature schema"));
            }
            let ids = (0..t.rows.len()).map(|i| t.usize_at(i, 0)).collect::<Result<Vec<_>>>()?;
            if r == 0 {
                cube.scenario_ids = ids;
            } else if ids != cube.scenario_ids {
                return Err(Error::malformed(&t.path, "rows differ from the other locations"));
            }
            let values = (0..t.rows.len())
                .map(|i| (1..t.header.len()).map(|c| t.f64_at(i, c)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            cube.base_values.push(base.f64_at(r, 1)?);
            cube.locations.push(loc);
            cube.values.push(values);
        }
        Ok(cube)
    }

    pub fn trends(&self) -> Result<Manifest> {
        const S: Stage = Stage::Trends;
        let inputs = self.require(S, &[Stage::BuildDb, Stage::Explain])?;
        let db = self.load_db()?;
        let cube = self.load_cube(S)?;
        let prov = self.provenance(S);
        let mut out = StageOutput::new(S);
        for voi in &self.cfg().trends.vois {
            let rep = voi_trend(&cube, &db, voi).stage(S.name())?;
            out.add(format!("trends/trend_{}.csv", file_token(voi)), trend_csv(&prov, &rep));
        }
        self.commit(S, out, inputs)
    }

    pub fn intervene(&self) -> Result<Manifest> {
        const S: Stage = Stage::Intervene;
        let inputs = self.require(S, &[Stage::Scenarios, Stage::Simulate])?;
        let (scenarios, _, surfaces) = self.load_simulation(S)?;
        let stored: BTreeMap<usize, &CctSurface> = surfaces.iter().map(|s| (s.scenario_id, &s.surface)).collect();
        let cfg = self.cfg();
        let prov = self.provenance(S);
        let mut out = StageOutput::new(S);
        for spec in &cfg.interventions {
            let pairs = apply_rule(self.net(), &scenarios, &spec.rule, &cfg.scenarios.res_siting).stage(S.name())?;
            log::info!("{S}: {} affects {} scenarios", spec.rule.slug(), pairs.len());
            let result = if pairs.is_empty() {
                None
            } else {
                let r = evaluate_intervention(self.net(), &spec.rule, &pairs, spec.target_bus, &cfg.study.search, &cfg.study.sim, &self.exec)
                    .stage(S.name())?;
                for p in &r.pairs {
                    let kept = stored
                        .get(&p.scenario_id)
                        .and_then(|s| s.entries.iter().find(|e| e.bus == spec.target_bus))
                        .and_then(|e| e.result)
                        .map(|c| c.cct);
                    if kept != p.baseline {
                        return Err(Error::Stage {
                            stage: S.name(),
                            source: CoreError::SchemaMismatch(format!(
                                "scenario {}: baseline CCT {:?} differs from the stored {:?}",
                                p.scenario_id, p.baseline, kept
                            )),
                        });
                    }
                }
                Some(r)
            };
            let stem = intervention_stem(&spec.rule.slug(), spec.target_bus);
            let header = format!("{prov} rule={} target_bus={}", spec.rule.slug(), spec.target_bus);
            out.add(format!("{stem}.csv"), intervention_csv(&header, result.as_ref(), pairs.len()));
            let file = InterventionFile { fingerprint: self.fingerprint(S), result, n_affected: pairs.len() };
            out.add(format!("{stem}.json"), io::to_json(&file));
        }
        self.commit(S, out, inputs)
    }

    pub fn report(&self) -> Result<Manifest> {
        const S: Stage = Stage::Report;
        let cfg = self.cfg();
        let mut upstream = vec![Stage::BuildDb, Stage::Train, Stage::Explain, Stage::Trends];
        if !cfg.interventions.is_empty() {
            upstream.push(Stage::Intervene);
        }
        let inputs = self.require(S, &upstream)?;
        let db = self.load_db()?;
        let (sel, _) = self.load_models(S)?;
        let cube = self.load_cube(S)?;
        let mut trends = Vec::new();
        for voi in &cfg.trends.vois {
            trends.push(voi_trend(&cube, &db, voi).stage(S.name())?);
        }
        let mut interventions = Vec::new();
        for spec in &cfg.interventions {
            let rel = format!("{}.json", intervention_stem(&spec.rule.slug(), spec.target_bus));
            let f: InterventionFile = io::read_json(&self.out.join(&rel))?;
            interventions.push((spec.rule.description(), spec.target_bus, f));
        }
        let top: Vec<(String, Vec<(String, f64)>)> = cube
            .locations
            .iter()
            .enumerate()
            .map(|(l, loc)| {
                let scores = mean_abs(&cube.values[l], cube.features.len());
                let mut order: Vec<usize> = (0..scores.len()).collect();
                order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
                let list = order.iter().take(cfg.explain.top_k).map(|&j| (cube.features[j].clone(), scores[j])).collect();
                (loc.clone(), list)
            })
            .collect();
        let summary = RunSummary {
            fingerprint: self.fingerprint(S),
            network: self.net().name.clone(),
            n_rows: db.n_rows(),
            n_features: db.schema.len(),
            fault_buses: cfg.study.fault_buses.clone(),
            selection: sel,
            top_features: top,
            trends,
            interventions: interventions.iter().map(|(_, _, f)| f.clone()).collect(),
        };
        let md = report_markdown(&summary, &interventions);
        let mut out = StageOutput::new(S);
        out.add("report/report.md", md.into_bytes());
        out.add("report/summary.json", io::to_json(&summary));
        self.commit(S, out, inputs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub fingerprint: String,
    pub network: String,
    pub n_rows: usize,
    pub n_features: usize,
    pub fault_buses: Vec<u32>,
    pub selection: SelectionFile,
    /// Per location, the top features by mean |SHAP|.
    pub top_features: Vec<(String, Vec<(String, f64)>)>,
    pub trends: Vec<TrendReport>,
    pub interventions: Vec<InterventionFile>,
}

/// Accuracy table: one row per metric, one column per evaluated tier.
pub fn selection_table(provenance: &str, tiers: &[TierReport]) -> Vec<u8> {
    let mut header = vec!["metric".to_string()];
    header.extend(tiers.iter().map(|t| t.algorithm.name().to_string()));
    let mut c = Csv::new(provenance, &header);
    for (i, label) in TABLE_ROWS.iter().enumerate() {
        c.row(std::iter::once(label.to_string()).chain(tiers.iter().map(|t| fmt_f64(t.table_values()[i]))));
    }
    c.row(std::iter::once("Passed".to_string()).chain(tiers.iter().map(|t| t.passed.to_string())));
    c.finish()
}

fn trend_csv(prov: &str, rep: &TrendReport) -> Vec<u8> {
    let mut c = Csv::new(
        &format!("{prov} voi={} unit=s*{} n={}", rep.voi, rep.unit, rep.n),
        &["location", "covariance", "correlation"].map(String::from),
    );
    for l in &rep.locations {
        c.row([l.location.clone(), fmt_f64(l.covariance), fmt_opt(l.correlation)]);
    }
    c.finish()
}

fn stats_row(name: &str, f: impl Fn(&BoxStats) -> f64, r: &InterventionResult) -> String {
    format!("{name},{},{},{}", fmt_f64(f(&r.baseline)), fmt_f64(f(&r.ruled)), fmt_f64(f(&r.delta)))
}

fn intervention_csv(prov: &str, result: Option<&InterventionResult>, n_affected: usize) -> Vec<u8> {
    let mut c = Csv::new(prov, &["scenario_id", "baseline_cct", "ruled_cct", "delta"].map(String::from));
    let mut footer = vec![format!("n_affected,{n_affected}")];
    if let Some(r) = result {
        for p in &r.pairs {
            let delta = p.both().map(|(b, x)| x - b);
            c.row([p.scenario_id.to_string(), fmt_opt(p.baseline), fmt_opt(p.ruled), fmt_opt(delta)]);
        }
        footer.push(format!("n_compared,{}", r.n_compared));
        footer.push("stat,baseline,ruled,delta".into());
        footer.push(stats_row("min", |s| s.min, r));
        footer.push(stats_row("q1", |s| s.q1, r));
        footer.push(stats_row("median", |s| s.median, r));
        footer.push(stats_row("q3", |s| s.q3, r));
        footer.push(stats_row("max", |s| s.max, r));
        footer.push(stats_row("mean", |s| s.mean, r));
    }
    c.finish_with_footer(&footer)
}

fn report_markdown(s: &RunSummary, interventions: &[(String, u32, InterventionFile)]) -> String {
    use std::fmt::Write;
    let mut md = String::new();
    let w = &mut md;
    let _ = writeln!(w, "# stabscope run report\n");
    let _ = writeln!(w, "- network: {}", s.network);
    let _ = writeln!(w, "- database: {} scenarios x {} features", s.n_rows, s.n_features);
    let buses: Vec<String> = s.fault_buses.iter().map(|b| b.to_string()).collect();
    let _ = writeln!(w, "- fault buses: {}", buses.join(", "));
    let _ = writeln!(w, "- fingerprint: `{}`\n", s.fingerprint);

    let sel = &s.selection;
    let _ = writeln!(w, "## Algorithm selection (theta = {} s)\n", sel.theta);
    let names: Vec<&str> = sel.tiers.iter().map(|t| t.algorithm.name()).collect();
    let _ = writeln!(w, "| Metric | {} |", names.join(" | "));
    let _ = writeln!(w, "|---|{}", "---|".repeat(names.len()));
    for (i, label) in TABLE_ROWS.iter().enumerate() {
        let vals: Vec<String> = sel.tiers.iter().map(|t| format!("{:.4}", t.table_values()[i])).collect();
        let _ = writeln!(w, "| {label} | {} |", vals.join(" | "));
    }
    let _ = writeln!(
        w,
        "\nSelected: **{}**{}\n",
        sel.selected,
        if sel.threshold_unmet { " (no tier met theta; smallest worst-case error kept)" } else { "" }
    );

    let _ = writeln!(w, "## Most important features (mean |SHAP|, s)\n");
    for (loc, list) in &s.top_features {
        let _ = writeln!(w, "### {loc}\n\n| Rank | Feature | mean abs SHAP |\n|---|---|---|");
        for (k, (f, v)) in list.iter().enumerate() {
            let _ = writeln!(w, "| {} | {f} | {v:.5} |", k + 1);
        }
        let _ = writeln!(w);
    }

    if !s.trends.is_empty() {
        let _ = writeln!(w, "## Trends\n");
        for t in &s.trends {
            let _ = writeln!(w, "### {} (covariance in s*{}, n = {})\n\n| Location | Covariance | Correlation |\n|---|---|---|", t.voi, t.unit, t.n);
            for l in &t.locations {
                let corr = l.correlation.map(|c| format!("{c:.3}")).unwrap_or_else(|| "-".into());
                let _ = writeln!(w, "| {} | {:.6e} | {corr} |", l.location, l.covariance);
            }
            let _ = writeln!(w);
        }
    }

    if !interventions.is_empty() {
        let _ = writeln!(w, "## Interventions\n");
        for (desc, bus, f) in interventions {
            let _ = writeln!(w, "### {desc}, CCT at bus {bus}\n");
            match &f.result {
                None => {
                    let _ = writeln!(w, "No scenario is affected.\n");
                }
                Some(r) => {
                    let _ = writeln!(w, "{} affected scenarios, {} compared.\n", r.n_affected, r.n_compared);
                    let _ = writeln!(w, "| Statistic | Baseline | Ruled | Delta |\n|---|---|---|---|");
                    let rows: [(&str, fn(&BoxStats) -> f64); 6] = [
                        ("min", |b| b.min),
                        ("q1", |b| b.q1),
                        ("median", |b| b.median),
                        ("q3", |b| b.q3),
                        ("max", |b| b.max),
                        ("mean", |b| b.mean),
                    ];
                    for (name, f) in rows {
                        let _ = writeln!(w, "| {name} | {:.3} | {:.3} | {:+.3} |", f(&r.baseline), f(&r.ruled), f(&r.delta));
                    }
                    let _ = writeln!(w);
                }
            }
        }
    }
    md
}

/// Output directory: `--out` when given, else the config's.
pub fn output_dir(loaded: &Loaded, flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf).unwrap_or_else(|| loaded.default_out.clone())
}
