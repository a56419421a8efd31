use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RECORDS_HEADER: &str =
    "scene_id,policy,init_seed,step,iou,psnr_mean,u_selected,cam_x,cam_y,cam_z,wall_ms,error";
pub const SUMMARY_HEADER: &str = "policy,step,iou_mean,iou_worst,iou_std,psnr_mean,psnr_worst,psnr_std";

/// One row per (scene, policy, init, step). Failed steps carry an error
/// message and empty metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub scene_id: String,
    pub policy: String,
    pub init_seed: u64,
    pub step: usize,
    pub iou: Option<f64>,
    pub psnr_mean: Option<f64>,
    pub u_selected: Option<f64>,
    pub cam_x: Option<f64>,
    pub cam_y: Option<f64>,
    pub cam_z: Option<f64>,
    pub wall_ms: u64,
    pub error: String,
}

impl EpisodeRecord {
    pub fn failed(scene_id: &str, policy: &str, init_seed: u64, step: usize, error: &str) -> Self {
        Self {
            scene_id: scene_id.to_owned(),
            policy: policy.to_owned(),
            init_seed,
            step,
            iou: None,
            psnr_mean: None,
            u_selected: None,
            cam_x: None,
            cam_y: None,
            cam_z: None,
            wall_ms: 0,
            error: error.to_owned(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub step: usize,
    pub iou_mean: f64,
    pub iou_worst: f64,
    pub iou_std: f64,
    pub psnr_mean: f64,
    pub psnr_worst: f64,
    pub psnr_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Stats {
    mean: f64,
    worst: f64,
    std: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean over every value; worst = mean over scenes of the per-scene minimum;
/// std = mean over scenes of the population std over inits.
fn stats(per_scene: &BTreeMap<&str, Vec<f64>>) -> Stats {
    let all: Vec<f64> = per_scene.values().flatten().copied().collect();
    let worst: Vec<f64> = per_scene
        .values()
        .map(|v| v.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let std: Vec<f64> = per_scene
        .values()
        .map(|v| {
            let m = mean(v);
            (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
        })
        .collect();
    Stats {
        mean: mean(&all),
        worst: mean(&worst),
        std: mean(&std),
    }
}

/// Per-policy, per-step summary over successful rows. Policies appear in
/// first-seen order, steps ascending.
pub fn summarize(records: &[EpisodeRecord]) -> Vec<SummaryRow> {
    let mut order: Vec<&str> = Vec::new();
    type Groups<'a> = BTreeMap<usize, (BTreeMap<&'a str, Vec<f64>>, BTreeMap<&'a str, Vec<f64>>)>;
    let mut groups: BTreeMap<&str, Groups<'_>> = BTreeMap::new();
    for r in records {
        if !order.contains(&r.policy.as_str()) {
            order.push(&r.policy);
        }
        let (Some(iou), Some(psnr)) = (r.iou, r.psnr_mean) else {
            continue;
        };
        if !r.is_ok() {
            continue;
        }
        let step = groups.entry(&r.policy).or_default().entry(r.step).or_default();
        step.0.entry(&r.scene_id).or_default().push(iou);
        step.1.entry(&r.scene_id).or_default().push(psnr);
    }
    let mut rows = Vec::new();
    for policy in order {
        let Some(steps) = groups.get(policy) else {
            continue;
        };
        for (&step, (iou, psnr)) in steps {
            let a = stats(iou);
            let b = stats(psnr);
            rows.push(SummaryRow {
                policy: policy.to_owned(),
                step,
                iou_mean: a.mean,
                iou_worst: a.worst,
                iou_std: a.std,
                psnr_mean: b.mean,
                psnr_worst: b.worst,
                psnr_std: b.std,
            });
        }
    }
    rows
}

/// Writes rows under `header`, which must list the serialized field names.
/// An empty table still gets its header line.
pub fn write_csv<W: Write, T: Serialize>(rows: &[T], header: &str, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))
}

pub fn write_csv_file<T: Serialize>(rows: &[T], header: &str, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(rows, header, std::io::BufWriter::new(file))
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<EpisodeRecord>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(Error::from)
}

pub fn read_records_file(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(file)
}
