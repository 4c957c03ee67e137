//! On-disk layout shared by the commands.
//!
//! A corpus directory holds `index.json`, one DAG and one profile file per
//! query under `queries/`, and `histories.jsonl`. A model directory holds
//! `cluster_model.json`, `encoders/cluster_<c>.json` and
//! `loss/cluster_<c>.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use streamtune::clustering::ClusterModel;
use streamtune::dag::{parse_dag, serialize_dag, LogicalDag};
use streamtune::encoder::GnnParameters;
use streamtune::simulator::GroundTruthProfile;
use streamtune::workload::{History, Query, Template};

pub type Result<T> = std::result::Result<T, String>;

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    }
    fs::write(path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifacts serialize");
    s.push('\n');
    s
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn read_dag(path: &Path) -> Result<LogicalDag> {
    parse_dag(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    name: String,
    template: Template,
    dag: String,
    profile: String,
}

pub fn write_corpus(dir: &Path, corpus: &[Query], histories: &[History]) -> Result<()> {
    let mut index = Vec::with_capacity(corpus.len());
    for (i, q) in corpus.iter().enumerate() {
        let stem = format!("queries/{i:03}_{}", q.name);
        let entry = IndexEntry {
            name: q.name.clone(),
            template: q.template,
            dag: format!("{stem}.dag.json"),
            profile: format!("{stem}.profile.json"),
        };
        write(&dir.join(&entry.dag), serialize_dag(&q.dag) + "\n")?;
        write(&dir.join(&entry.profile), json(&q.profile))?;
        index.push(entry);
    }
    write(&dir.join("index.json"), json(&index))?;
    let mut lines = String::new();
    for h in histories {
        lines.push_str(&serde_json::to_string(h).expect("histories serialize"));
        lines.push('\n');
    }
    write(&dir.join("histories.jsonl"), lines)
}

pub fn read_queries(dir: &Path) -> Result<Vec<Query>> {
    let index: Vec<IndexEntry> = read_json(&dir.join("index.json"))?;
    index
        .into_iter()
        .map(|e| {
            Ok(Query {
                dag: read_dag(&dir.join(&e.dag))?,
                profile: read_json::<GroundTruthProfile>(&dir.join(&e.profile))?,
                name: e.name,
                template: e.template,
            })
        })
        .collect()
}

pub fn read_histories(dir: &Path, corpus_len: usize) -> Result<Vec<History>> {
    let path = dir.join("histories.jsonl");
    let text = read(&path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let h: History = serde_json::from_str(l).map_err(|e| format!("{}:{}: {e}", path.display(), n + 1))?;
            if h.query >= corpus_len {
                return Err(format!("{}:{}: query {} is not in the corpus", path.display(), n + 1, h.query));
            }
            Ok(h)
        })
        .collect()
}

pub fn model_path(dir: &Path) -> PathBuf {
    dir.join("cluster_model.json")
}

pub fn encoder_path(dir: &Path, cluster: usize) -> PathBuf {
    dir.join(format!("encoders/cluster_{cluster}.json"))
}

pub fn loss_path(dir: &Path, cluster: usize) -> PathBuf {
    dir.join(format!("loss/cluster_{cluster}.csv"))
}

pub fn read_model(dir: &Path) -> Result<ClusterModel> {
    read_json(&model_path(dir))
}

pub fn read_encoder(dir: &Path, cluster: usize) -> Result<GnnParameters> {
    let path = encoder_path(dir, cluster);
    GnnParameters::from_json(&read(&path)?).map_err(|e| format!("{}: {e}", path.display()))
}
