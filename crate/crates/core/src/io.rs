//! File formats: trajectory and match-log JSON Lines, rating exports,
//! Elo-RCC snapshots, run manifests and SVG heatmaps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::counter::EloRccSnapshot;
use crate::error::{Error, Result};
use crate::rating::{check_outcome, Composition, MatchLog, MatchRecord, RatingMethod};
use crate::trajectory::{
    ActionSpace, ActionValue, Image, Observation, ObservationShape, Step, TrajectoryDataset,
};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

/// Optional first record of a trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryHeader {
    pub action_space: ActionSpace,
    /// Encoder ids allowed in precomputed states.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoders: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct HeaderLine {
    header: TrajectoryHeader,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImgJson {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObsJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vec: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    img: Option<ImgJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    states: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepJson {
    dataset: String,
    episode: u64,
    step: u64,
    obs: ObsJson,
    action: ActionJson,
}

impl ObsJson {
    fn into_observation(self) -> std::result::Result<Observation, String> {
        match (self.vec, self.img, self.states) {
            (Some(v), None, None) => Ok(Observation::Vector(v)),
            (None, Some(i), None) => Image::new(i.w, i.h, i.data)
                .map(Observation::Image)
                .map_err(|e| e.to_string()),
            (None, None, Some(s)) => Ok(Observation::States(s)),
            _ => Err("obs must hold exactly one of `vec`, `img`, `states`".into()),
        }
    }

    fn from_observation(obs: &Observation) -> Self {
        match obs {
            Observation::Vector(v) => ObsJson {
                vec: Some(v.clone()),
                ..Default::default()
            },
            Observation::Image(img) => ObsJson {
                img: Some(ImgJson {
                    w: img.width,
                    h: img.height,
                    data: img.data.clone(),
                }),
                ..Default::default()
            },
            Observation::States(s) => ObsJson {
                states: Some(s.clone()),
                ..Default::default()
            },
        }
    }
}

impl ActionJson {
    fn into_action(self) -> std::result::Result<ActionValue, String> {
        match (self.d, self.c) {
            (Some(d), None) => Ok(ActionValue::Discrete(d)),
            (None, Some(c)) => Ok(ActionValue::Continuous(c)),
            _ => Err("action must hold exactly one of `d`, `c`".into()),
        }
    }

    fn from_action(a: &ActionValue) -> Self {
        match a {
            ActionValue::Discrete(d) => ActionJson {
                d: Some(*d),
                c: None,
            },
            ActionValue::Continuous(c) => ActionJson {
                d: None,
                c: Some(c.clone()),
            },
        }
    }
}

struct PendingDataset {
    episodes: BTreeMap<u64, BTreeMap<u64, Step>>,
    shape: ObservationShape,
}

/// Reads every dataset of a trajectory file, in order of first appearance.
pub fn read_trajectory_file(path: &Path) -> Result<Vec<TrajectoryDataset>> {
    read_trajectories_from(open(path)?, path)
}

pub fn read_trajectories_from<R: BufRead>(reader: R, path: &Path) -> Result<Vec<TrajectoryDataset>> {
    let mut header: Option<TrajectoryHeader> = None;
    let mut inferred: Option<(ActionSpace, usize)> = None;
    let mut order: Vec<String> = Vec::new();
    let mut pending: BTreeMap<String, PendingDataset> = BTreeMap::new();
    let mut seen_record = false;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(&line).map_err(|e| parse_err(path, lineno, e.to_string()))?;
        if value.get("header").is_some() {
            if seen_record || header.is_some() {
                return Err(parse_err(path, lineno, "header must be the first record"));
            }
            let h: HeaderLine =
                serde_json::from_value(value).map_err(|e| parse_err(path, lineno, e.to_string()))?;
            header = Some(h.header);
            continue;
        }
        seen_record = true;
        let rec: StepJson =
            serde_json::from_value(value).map_err(|e| parse_err(path, lineno, e.to_string()))?;
        let obs = rec
            .obs
            .into_observation()
            .map_err(|m| parse_err(path, lineno, m))?;
        let action = rec
            .action
            .into_action()
            .map_err(|m| parse_err(path, lineno, m))?;

        if let (Some(h), Observation::States(s)) = (&header, &obs) {
            if let Some(allowed) = &h.encoders {
                if let Some(bad) = s.keys().find(|k| !allowed.contains(k)) {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!("unknown encoder id `{bad}` in precomputed states"),
                    ));
                }
            }
        }
        match &header {
            Some(h) => h
                .action_space
                .check(&action)
                .map_err(|e| parse_err(path, lineno, e.to_string()))?,
            None => infer_space(&mut inferred, &action, lineno)
                .map_err(|m| parse_err(path, lineno, m))?,
        }

        let shape = obs.shape();
        let entry = pending.entry(rec.dataset.clone()).or_insert_with(|| {
            order.push(rec.dataset.clone());
            PendingDataset {
                episodes: BTreeMap::new(),
                shape: shape.clone(),
            }
        });
        if entry.shape != shape {
            return Err(parse_err(
                path,
                lineno,
                format!(
                    "observation shape {shape:?} differs from {:?} earlier in dataset `{}`",
                    entry.shape, rec.dataset
                ),
            ));
        }
        let ep = entry.episodes.entry(rec.episode).or_default();
        if ep.insert(rec.step, Step::new(obs, action)).is_some() {
            return Err(parse_err(
                path,
                lineno,
                format!(
                    "duplicate step {} in episode {} of `{}`",
                    rec.step, rec.episode, rec.dataset
                ),
            ));
        }
    }
    let space = match (&header, inferred) {
        (Some(h), _) => h.action_space,
        (None, Some((space, _))) => space,
        (None, None) => return Err(Error::EmptyDataset(path.display().to_string())),
    };
    order
        .into_iter()
        .map(|id| {
            let p = pending.remove(&id).expect("dataset was registered");
            let episodes = p
                .episodes
                .into_values()
                .map(|steps| steps.into_values().collect())
                .collect();
            TrajectoryDataset::new(id, space, episodes)
        })
        .collect()
}

/// Tracks the action space implied by a header-less file: the first
/// action fixes the kind (and dimension), discrete counts grow to the
/// largest index seen.
fn infer_space(
    inferred: &mut Option<(ActionSpace, usize)>,
    action: &ActionValue,
    line: usize,
) -> std::result::Result<(), String> {
    match (inferred.as_mut(), action) {
        (None, ActionValue::Discrete(d)) => *inferred = Some((ActionSpace::Discrete(d + 1), line)),
        (None, ActionValue::Continuous(c)) => {
            if c.is_empty() {
                return Err("continuous action has no components".into());
            }
            *inferred = Some((ActionSpace::Continuous(c.len()), line));
        }
        (Some((ActionSpace::Discrete(n), _)), ActionValue::Discrete(d)) => *n = (*n).max(d + 1),
        (Some((ActionSpace::Continuous(dim), first)), ActionValue::Continuous(c)) => {
            if c.len() != *dim {
                return Err(format!(
                    "continuous action has {} components, line {first} has {dim}",
                    c.len()
                ));
            }
        }
        (Some((_, first)), _) => {
            return Err(format!(
                "mixed discrete and continuous actions (first action on line {first})"
            ))
        }
    }
    Ok(())
}

/// Reads a file that must hold exactly one dataset.
pub fn load_trajectories(path: &Path) -> Result<TrajectoryDataset> {
    let mut all = read_trajectory_file(path)?;
    match all.len() {
        1 => Ok(all.pop().expect("one dataset")),
        n => Err(Error::invalid(format!(
            "{} holds {n} datasets, expected exactly one",
            path.display()
        ))),
    }
}

pub fn write_trajectories<W: Write>(
    mut w: W,
    datasets: &[TrajectoryDataset],
    header: Option<&TrajectoryHeader>,
) -> Result<()> {
    if let Some(h) = header {
        serde_json::to_writer(&mut w, &HeaderLine { header: h.clone() })?;
        w.write_all(b"\n")?;
    }
    for ds in datasets {
        for (e, episode) in ds.episodes().iter().enumerate() {
            for (s, step) in episode.iter().enumerate() {
                let rec = StepJson {
                    dataset: ds.id().to_string(),
                    episode: e as u64,
                    step: s as u64,
                    obs: ObsJson::from_observation(&step.obs),
                    action: ActionJson::from_action(&step.action),
                };
                serde_json::to_writer(&mut w, &rec)?;
                w.write_all(b"\n")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn composition_from(value: &Value) -> std::result::Result<Composition, String> {
    match value {
        Value::String(s) => Composition::parse(s).map_err(|e| e.to_string()),
        Value::Array(items) => {
            let elems = items
                .iter()
                .map(|v| {
                    v.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| "composition elements must be strings".to_string())
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Composition::new(elems).map_err(|e| e.to_string())
        }
        _ => Err("composition must be a string id or an array of element ids".into()),
    }
}

pub fn read_match_file(path: &Path) -> Result<MatchLog> {
    read_matches_from(open(path)?, path)
}

pub fn read_matches_from<R: BufRead>(reader: R, path: &Path) -> Result<MatchLog> {
    let mut log = MatchLog::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(&line).map_err(|e| parse_err(path, lineno, e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| parse_err(path, lineno, "match record must be an object"))?;
        if let Some(k) = obj.keys().find(|k| !matches!(k.as_str(), "a" | "b" | "w")) {
            return Err(parse_err(path, lineno, format!("unknown field `{k}`")));
        }
        let field = |k: &str| {
            obj.get(k)
                .ok_or_else(|| parse_err(path, lineno, format!("missing field `{k}`")))
        };
        let a = composition_from(field("a")?).map_err(|m| parse_err(path, lineno, m))?;
        let b = composition_from(field("b")?).map_err(|m| parse_err(path, lineno, m))?;
        let w = field("w")?
            .as_f64()
            .ok_or_else(|| parse_err(path, lineno, "`w` must be a number"))?;
        check_outcome(w).map_err(|e| parse_err(path, lineno, e.to_string()))?;
        log.push(MatchRecord { a, b, outcome: w });
    }
    if log.is_empty() {
        return Err(Error::invalid(format!("{} holds no matches", path.display())));
    }
    Ok(log)
}

#[derive(Serialize)]
struct MatchJson<'a> {
    a: &'a str,
    b: &'a str,
    w: f64,
}

pub fn write_matches<'a, W, I>(mut w: W, records: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a MatchRecord>,
{
    for r in records {
        serde_json::to_writer(
            &mut w,
            &MatchJson {
                a: r.a.id(),
                b: r.b.id(),
                w: r.outcome,
            },
        )?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// How exported ratings map to positive strengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingScale {
    /// Natural-log strengths: strength = e^x.
    Logit,
    /// 400-point Elo: strength = 10^(x/400).
    Elo,
    /// Mean win values; no strength interpretation.
    WinValue,
    /// Pairwise table only.
    Pairwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub a: String,
    pub b: String,
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingExport {
    pub method: RatingMethod,
    pub scale: RatingScale,
    pub ratings: BTreeMap<String, f64>,
    /// Cyclic 2-vectors (mElo2 only).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub vectors: BTreeMap<String, [f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<PairEntry>,
    /// Compositions answered by the unseen-entity fallback.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub unseen: BTreeSet<String>,
}

impl RatingExport {
    /// Positive strengths relative to the strongest composition.
    pub fn strengths(&self) -> Result<BTreeMap<String, f64>> {
        let factor = match self.scale {
            RatingScale::Logit => 1.0,
            RatingScale::Elo => std::f64::consts::LN_10 / 400.0,
            RatingScale::WinValue | RatingScale::Pairwise => {
                return Err(Error::invalid(format!(
                    "{} ratings have no strength scale",
                    self.method
                )))
            }
        };
        if self.ratings.is_empty() {
            return Err(Error::invalid("rating export is empty"));
        }
        let max = self
            .ratings
            .values()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(self
            .ratings
            .iter()
            .map(|(k, &r)| (k.clone(), ((r - max) * factor).exp()))
            .collect())
    }
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_pretty(value)?)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let mut s = String::new();
    open(path)?.read_to_string(&mut s)?;
    serde_json::from_str(&s).map_err(|e| parse_err(path, e.line(), e.to_string()))
}

pub fn write_snapshot(path: &Path, snapshot: &EloRccSnapshot) -> Result<()> {
    write_json(path, snapshot)
}

pub fn read_snapshot(path: &Path) -> Result<EloRccSnapshot> {
    read_json(path)
}

/// Lowercase hex SHA-256 of a file.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut reader = open(path)?;
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Sidecar record of a run: what was asked, with which inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: impl Into<String>, seed: Option<u64>, config: Value) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: file_digest(path)?,
        });
        Ok(())
    }
}

/// Buffered file writer.
pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// White-to-blue ramp for `v` in `[0, 1]`.
fn ramp(v: f64) -> (u8, u8, u8) {
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let lerp = |a: f64, b: f64| (a + (b - a) * v).round() as u8;
    (lerp(247.0, 8.0), lerp(251.0, 48.0), lerp(255.0, 107.0))
}

/// Annotated heatmap of `values[row][col]`; colors span `[lo, hi]`.
/// Missing cells (`None`) are drawn grey.
pub fn svg_heatmap(
    rows: &[String],
    cols: &[String],
    values: &[Vec<Option<f64>>],
    lo: f64,
    hi: f64,
) -> String {
    let cell = 48.0;
    let left = 120.0;
    let top = 120.0;
    let width = left + cell * cols.len() as f64 + 10.0;
    let height = top + cell * rows.len() as f64 + 10.0;
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    for (j, c) in cols.iter().enumerate() {
        let x = left + cell * (j as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" transform="rotate(-45 {x} {})" text-anchor="start">{}</text>"#,
            top - 6.0,
            top - 6.0,
            escape_xml(c)
        );
    }
    for (i, r) in rows.iter().enumerate() {
        let y = top + cell * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + cell / 2.0 + 4.0,
            escape_xml(r)
        );
        for (j, v) in values[i].iter().enumerate() {
            let x = left + cell * j as f64;
            let (fill, label, dark) = match v {
                Some(v) => {
                    let t = (v - lo) / span;
                    let (r, g, b) = ramp(t);
                    (format!("rgb({r},{g},{b})"), format!("{v:.2}"), t > 0.5)
                }
                None => ("rgb(200,200,200)".to_string(), "n/a".to_string(), false),
            };
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="white"/>"#
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{}">{label}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0,
                if dark { "white" } else { "black" }
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
