use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Number, Value};

use super::lexicon::{Domain, Lexicon, LexiconFile, Step, Task};
use super::{AnnotationSet, DetectionSet, ProposalFile};
use crate::error::{Error, Result};

/// Decimal rendering with 9 significant digits, ties rounded to even.
pub fn format_sig9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Rounds `x` to the nearest value representable with 9 significant digits.
pub fn quantize(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format_sig9(x).parse().expect("formatted float parses")
}

fn quantize_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let q = quantize(n.as_f64().expect("f64 number"));
            if let Some(num) = Number::from_f64(q) {
                *n = num;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(quantize_value),
        Value::Object(map) => map.values_mut().for_each(quantize_value),
        _ => {}
    }
}

/// Serializes `value` as pretty JSON with sorted keys and every float
/// rounded to 9 significant digits. Output is byte-stable for equal inputs.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)
        .map_err(|e| Error::invalid(format!("cannot serialize: {e}")))?;
    quantize_value(&mut v);
    let mut out = serde_json::to_string_pretty(&v)
        .map_err(|e| Error::invalid(format!("cannot serialize: {e}")))?;
    out.push('\n');
    Ok(out)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = to_json_string(value)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Parse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_lexicon(path: &Path) -> Result<Lexicon> {
    let raw: LexiconFile = read_json(path)?;
    Lexicon::new(raw.domains, raw.tasks, raw.steps).map_err(|e| e.at(path))
}

#[derive(Serialize)]
struct LexiconDoc<'a> {
    domains: &'a [Domain],
    tasks: &'a [Task],
    steps: Vec<&'a Step>,
}

/// Writes the lexicon with steps grouped by task in canonical order, so a
/// reload reproduces the same canonical step sequences.
pub fn write_lexicon(path: &Path, lexicon: &Lexicon) -> Result<()> {
    let steps = (0..lexicon.num_tasks())
        .flat_map(|t| lexicon.steps_of(t).iter().map(|&s| &lexicon.steps()[s]))
        .collect();
    write_json(
        path,
        &LexiconDoc {
            domains: lexicon.domains(),
            tasks: lexicon.tasks(),
            steps,
        },
    )
}

/// Loads `proposals.json`; with a lexicon every score vector must have length K.
pub fn load_proposals(path: &Path, lexicon: Option<&Lexicon>) -> Result<ProposalFile> {
    let file: ProposalFile = read_json(path)?;
    file.validate(lexicon.map(Lexicon::num_steps))
        .map_err(|e| e.at(path))?;
    Ok(file)
}

pub fn write_proposals(path: &Path, file: &ProposalFile) -> Result<()> {
    write_json(path, file)
}

pub fn load_annotations(path: &Path, lexicon: Option<&Lexicon>) -> Result<AnnotationSet> {
    let set: AnnotationSet = read_json(path)?;
    set.validate(lexicon).map_err(|e| e.at(path))?;
    Ok(set)
}

pub fn write_annotations(path: &Path, set: &AnnotationSet) -> Result<()> {
    write_json(path, set)
}

pub fn load_detections(path: &Path, lexicon: Option<&Lexicon>) -> Result<DetectionSet> {
    let set: DetectionSet = read_json(path)?;
    set.validate(lexicon.map(Lexicon::num_steps))
        .map_err(|e| e.at(path))?;
    Ok(set)
}

pub fn write_detections(path: &Path, set: &DetectionSet) -> Result<()> {
    write_json(path, set)
}
