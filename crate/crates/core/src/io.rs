//! Text file formats.
//!
//! * Matrix: UTF-8 CSV of decimal reals, row-major, with an optional first
//!   line `#shape <rows> <cols>`. Values are written with 17 significant
//!   digits so a write/read cycle is exact.
//! * Labels: one nonnegative integer per line.
//! * Partition: `num_classes=<C>` then `fine_tuning=<sorted comma-separated indices>`.
//! * Model: sections `[meta]`, `[hidden_map]`, `[head]`; matrices in the CSV format.
//! * Train config and toy spec: flat `key=value` lines, `#` comments allowed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::data::{LabelPartition, LinearHead};
use crate::error::{Error, Result};
use crate::trainer::{Activation, MlpModel, ToySpec, TrainConfig};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Formats a real with 17 significant digits.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn format_matrix(m: &Array2<f64>, with_shape: bool) -> String {
    let mut out = String::new();
    if with_shape {
        let _ = writeln!(out, "#shape {} {}", m.nrows(), m.ncols());
    }
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|&v| format_real(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Parses matrix text; `path` and line offsets are used for error messages.
pub fn parse_matrix(text: &str, path: &Path, first_line: usize) -> Result<Array2<f64>> {
    let mut shape: Option<(usize, usize)> = None;
    let mut values = Vec::new();
    let mut rows = 0usize;
    let mut cols: Option<usize> = None;
    let lines: Vec<&str> = text.lines().collect();
    let end = lines.iter().rposition(|l| !l.trim().is_empty()).map_or(0, |i| i + 1);
    for (idx, raw) in lines[..end].iter().enumerate() {
        let line_no = first_line + idx;
        let line = raw.trim_end();
        if idx == 0 && line.starts_with("#shape") {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let parsed = match parts.as_slice() {
                ["#shape", r, c] => r.parse::<usize>().ok().zip(c.parse::<usize>().ok()),
                _ => None,
            };
            shape = Some(parsed.ok_or_else(|| parse_err(path, line_no, "malformed `#shape <rows> <cols>` header"))?);
            continue;
        }
        if line.is_empty() {
            return Err(parse_err(path, line_no, "empty line inside matrix"));
        }
        let mut n = 0usize;
        for cell in line.split(',') {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("`{}` is not a number", cell.trim())))?;
            if !v.is_finite() {
                return Err(parse_err(path, line_no, format!("non-finite value `{}`", cell.trim())));
            }
            values.push(v);
            n += 1;
        }
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(parse_err(path, line_no, format!("row has {n} values, expected {c}")));
            }
            _ => {}
        }
        rows += 1;
    }
    let Some(cols) = cols else {
        return Err(parse_err(path, first_line, "no matrix rows"));
    };
    if let Some((r, c)) = shape {
        if (r, c) != (rows, cols) {
            return Err(Error::Shape(format!(
                "{}: header declares {r}x{c} but content is {rows}x{cols}",
                path.display()
            )));
        }
    }
    Ok(Array2::from_shape_vec((rows, cols), values).expect("row lengths checked"))
}

pub fn load_matrix(path: &Path) -> Result<Array2<f64>> {
    parse_matrix(&read(path)?, path, 1)
}

/// Writes the matrix with a `#shape` header.
pub fn save_matrix(m: &Array2<f64>, path: &Path) -> Result<()> {
    write_text(path, &format_matrix(m, true))
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read(path)?;
    let mut labels = Vec::new();
    let lines: Vec<&str> = text.lines().collect();
    let end = lines.iter().rposition(|l| !l.trim().is_empty()).map_or(0, |i| i + 1);
    for (i, line) in lines[..end].iter().enumerate() {
        let t = line.trim();
        let y = t
            .parse::<usize>()
            .map_err(|_| parse_err(path, i + 1, format!("`{t}` is not a nonnegative integer label")))?;
        labels.push(y);
    }
    if labels.is_empty() {
        return Err(parse_err(path, 1, "no labels"));
    }
    Ok(labels)
}

pub fn format_labels(labels: &[usize]) -> String {
    let mut out = String::with_capacity(labels.len() * 3);
    for y in labels {
        let _ = writeln!(out, "{y}");
    }
    out
}

pub fn save_labels(labels: &[usize], path: &Path) -> Result<()> {
    write_text(path, &format_labels(labels))
}

pub fn format_partition(p: &LabelPartition) -> String {
    let s: Vec<String> = p.fine_tuning().iter().map(|c| c.to_string()).collect();
    format!("num_classes={}\nfine_tuning={}\n", p.num_classes(), s.join(","))
}

/// Strict partition parser: exactly two lines, indices strictly increasing.
pub fn parse_partition(text: &str, path: &Path) -> Result<LabelPartition> {
    let lines: Vec<&str> = text.lines().map(str::trim_end).collect();
    let end = lines.iter().rposition(|l| !l.is_empty()).map_or(0, |i| i + 1);
    if end != 2 {
        return Err(parse_err(path, end.clamp(1, 3), "expected exactly two lines"));
    }
    let num_classes = lines[0]
        .strip_prefix("num_classes=")
        .and_then(|v| v.parse::<usize>().ok())
        .ok_or_else(|| parse_err(path, 1, "expected `num_classes=<C>`"))?;
    let list = lines[1]
        .strip_prefix("fine_tuning=")
        .ok_or_else(|| parse_err(path, 2, "expected `fine_tuning=<indices>`"))?;
    let mut classes = Vec::new();
    for part in list.split(',') {
        let c = part
            .parse::<usize>()
            .map_err(|_| parse_err(path, 2, format!("`{part}` is not a class index")))?;
        if classes.last().is_some_and(|&prev| prev >= c) {
            return Err(parse_err(path, 2, "indices must be strictly increasing"));
        }
        classes.push(c);
    }
    LabelPartition::new(num_classes, classes).map_err(|e| parse_err(path, 2, e.to_string()))
}

pub fn load_partition(path: &Path) -> Result<LabelPartition> {
    parse_partition(&read(path)?, path)
}

pub fn save_partition(p: &LabelPartition, path: &Path) -> Result<()> {
    write_text(path, &format_partition(p))
}

pub fn format_model(m: &MlpModel) -> String {
    let hm = m.hidden_map().to_owned();
    let head = m.head().weights().to_owned();
    let mut out = String::from("[meta]\n");
    let _ = writeln!(out, "activation={}", m.activation());
    let _ = writeln!(out, "hidden_map_shape={} {}", hm.nrows(), hm.ncols());
    let _ = writeln!(out, "head_shape={} {}", head.nrows(), head.ncols());
    out.push_str("[hidden_map]\n");
    out.push_str(&format_matrix(&hm, false));
    out.push_str("[head]\n");
    out.push_str(&format_matrix(&head, false));
    out
}

fn parse_shape(v: &str) -> Option<(usize, usize)> {
    let mut it = v.split_whitespace();
    let r = it.next()?.parse().ok()?;
    let c = it.next()?.parse().ok()?;
    it.next().is_none().then_some((r, c))
}

pub fn parse_model(text: &str, path: &Path) -> Result<MlpModel> {
    #[derive(PartialEq, Clone, Copy)]
    enum Section {
        Meta,
        Hidden,
        Head,
    }
    let mut sections: Vec<(Section, usize, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        let sec = match t {
            "[meta]" => Some(Section::Meta),
            "[hidden_map]" => Some(Section::Hidden),
            "[head]" => Some(Section::Head),
            _ => None,
        };
        match sec {
            Some(s) => {
                if sections.iter().any(|(x, _, _)| *x == s) {
                    return Err(parse_err(path, i + 1, format!("duplicate section `{t}`")));
                }
                sections.push((s, i + 2, String::new()));
            }
            None => match sections.last_mut() {
                Some((_, _, body)) => {
                    body.push_str(line);
                    body.push('\n');
                }
                None if t.is_empty() => {}
                None => return Err(parse_err(path, i + 1, "content before the first section")),
            },
        }
    }
    let find = |s: Section, name: &str| {
        sections
            .iter()
            .find(|(x, _, _)| *x == s)
            .ok_or_else(|| parse_err(path, 1, format!("missing `[{name}]` section")))
    };
    let (_, meta_line, meta) = find(Section::Meta, "meta")?;
    let mut activation = Activation::Linear;
    let mut hidden_shape = None;
    let mut head_shape = None;
    for (k, line) in meta.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let (key, value) = t
            .split_once('=')
            .ok_or_else(|| parse_err(path, meta_line + k, "expected key=value"))?;
        match key.trim() {
            "activation" => {
                activation = value.trim().parse().map_err(|e: Error| parse_err(path, meta_line + k, e.to_string()))?
            }
            "hidden_map_shape" => hidden_shape = parse_shape(value),
            "head_shape" => head_shape = parse_shape(value),
            other => return Err(parse_err(path, meta_line + k, format!("unknown meta key `{other}`"))),
        }
    }
    let (_, hl, hidden_text) = find(Section::Hidden, "hidden_map")?;
    let hidden = parse_matrix(hidden_text, path, *hl)?;
    let (_, wl, head_text) = find(Section::Head, "head")?;
    let head = parse_matrix(head_text, path, *wl)?;
    if let Some(s) = hidden_shape.filter(|&s| s != hidden.dim()) {
        return Err(Error::Shape(format!("hidden_map declared {s:?} but has {:?}", hidden.dim())));
    }
    if let Some(s) = head_shape.filter(|&s| s != head.dim()) {
        return Err(Error::Shape(format!("head declared {s:?} but has {:?}", head.dim())));
    }
    MlpModel::new(hidden, LinearHead::new(head)?, activation)
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    parse_model(&read(path)?, path)
}

pub fn save_model(m: &MlpModel, path: &Path) -> Result<()> {
    write_text(path, &format_model(m))
}

/// Parses `key=value` lines (blank lines and `#` comments skipped).
pub fn parse_key_values(text: &str, path: &Path) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| parse_err(path, i + 1, "expected key=value"))?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(path: &Path, line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| parse_err(path, line, format!("invalid value `{v}` for `{key}`")))
}

/// Train config from `key=value` text; missing keys keep their defaults.
pub fn parse_train_config(text: &str, path: &Path) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    for (line, key, v) in parse_key_values(text, path)? {
        match key.as_str() {
            "learning_rate" => cfg.learning_rate = parse_value(path, line, &key, &v)?,
            "momentum" => cfg.momentum = parse_value(path, line, &key, &v)?,
            "weight_decay" => cfg.weight_decay = parse_value(path, line, &key, &v)?,
            "epochs" => cfg.epochs = parse_value(path, line, &key, &v)?,
            "batch_size" => cfg.batch_size = parse_value(path, line, &key, &v)?,
            "mode" => cfg.mode = v.parse().map_err(|e: Error| parse_err(path, line, e.to_string()))?,
            "seed" => cfg.seed = parse_value(path, line, &key, &v)?,
            other => return Err(parse_err(path, line, format!("unknown config key `{other}`"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_train_config(path: &Path) -> Result<TrainConfig> {
    parse_train_config(&read(path)?, path)
}

fn parse_list<T: std::str::FromStr>(path: &Path, line: usize, key: &str, v: &str, sep: char) -> Result<Vec<T>> {
    v.split(sep)
        .map(|p| parse_value(path, line, key, p.trim()))
        .collect()
}

/// Toy spec from `key=value` text. Keys: `means` (`x:y;x:y;...`), `stddev`,
/// `shift` (comma list), `samples_per_class`, `fine_tuning` (comma list),
/// `activation`. Missing keys keep the defaults of [`ToySpec::default`].
pub fn parse_toy_spec(text: &str, path: &Path) -> Result<ToySpec> {
    let mut spec = ToySpec::default();
    let mut shift_given = false;
    for (line, key, v) in parse_key_values(text, path)? {
        match key.as_str() {
            "means" => {
                spec.class_means = v
                    .split(';')
                    .map(|pt| {
                        let xy: Vec<f64> = parse_list(path, line, &key, pt, ':')?;
                        match xy.as_slice() {
                            [x, y] => Ok([*x, *y]),
                            _ => Err(parse_err(path, line, format!("mean `{pt}` is not `x:y`"))),
                        }
                    })
                    .collect::<Result<_>>()?
            }
            "stddev" => spec.stddev = parse_value(path, line, &key, &v)?,
            "shift" => {
                spec.shift = parse_list(path, line, &key, &v, ',')?;
                shift_given = true;
            }
            "samples_per_class" => spec.samples_per_class = parse_value(path, line, &key, &v)?,
            "fine_tuning" => spec.fine_tuning_classes = parse_list(path, line, &key, &v, ',')?,
            "activation" => {
                spec.activation = v.parse().map_err(|e: Error| parse_err(path, line, e.to_string()))?
            }
            other => return Err(parse_err(path, line, format!("unknown toy spec key `{other}`"))),
        }
    }
    if !shift_given && spec.shift.len() != spec.class_means.len() {
        spec.shift = vec![0.0; spec.class_means.len()];
    }
    spec.validate()?;
    Ok(spec)
}

pub fn load_toy_spec(path: &Path) -> Result<ToySpec> {
    parse_toy_spec(&read(path)?, path)
}
