use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensor::Tensor;

use super::SeriesFrame;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read_records(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        out.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(out)
}

fn is_numeric_row(row: &[String]) -> bool {
    row.iter().all(|f| f.is_empty() || f.parse::<f64>().is_ok())
}

/// Rows are timestamps, columns features. A first row that does not parse
/// as numbers is taken as a header. Empty fields (and NaN) are missing.
pub fn read_values_csv(path: &Path) -> Result<(Tensor, Mask, Option<Vec<String>>)> {
    let mut rows = read_records(path)?;
    let header = match rows.first() {
        Some((_, r)) if !is_numeric_row(r) => Some(rows.remove(0).1),
        _ => None,
    };
    let Some((_, first)) = rows.first() else {
        return Err(parse_err(path, 1, "no data rows"));
    };
    let m = first.len();
    if let Some(h) = &header {
        if h.len() != m {
            return Err(parse_err(
                path,
                1,
                format!("header has {} columns, data has {m}", h.len()),
            ));
        }
    }
    let t_len = rows.len();
    let mut values = Tensor::zeros(&[m, t_len]);
    let mut mask = Mask::full(m, t_len, false);
    for (t, (line, row)) in rows.iter().enumerate() {
        if row.len() != m {
            return Err(parse_err(
                path,
                *line,
                format!("expected {m} fields, found {}", row.len()),
            ));
        }
        for (i, field) in row.iter().enumerate() {
            if field.is_empty() {
                continue;
            }
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, *line, format!("column {}: not a number: {field:?}", i + 1)))?;
            if v.is_nan() {
                continue;
            }
            if !v.is_finite() {
                return Err(parse_err(path, *line, format!("column {}: non-finite value", i + 1)));
            }
            values.set2(i, t, v);
            mask.set(i, t, true);
        }
    }
    Ok((values, mask, header))
}

/// One `0`/`1` per line.
pub fn read_labels(path: &Path) -> Result<Vec<bool>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| match l.trim().split(',').next().unwrap_or("").trim() {
            "0" | "0.0" => Ok(false),
            "1" | "1.0" => Ok(true),
            other => Err(parse_err(path, n + 1, format!("label must be 0 or 1, found {other:?}"))),
        })
        .collect()
}

/// Same layout as the values file; `0` marks a hidden cell.
pub fn read_mask(path: &Path, rows: usize, cols: usize) -> Result<Mask> {
    let (values, present, _) = read_values_csv(path)?;
    if values.shape() != [cols, rows] {
        return Err(parse_err(
            path,
            0,
            format!(
                "mask is {}x{}, values are {rows}x{cols}",
                values.shape()[1],
                values.shape()[0]
            ),
        ));
    }
    let mut mask = Mask::observed(cols, rows);
    for i in 0..cols {
        for t in 0..rows {
            if !present.get(i, t) || values.at2(i, t) == 0.0 {
                mask.set(i, t, false);
            }
        }
    }
    Ok(mask)
}

pub fn write_values_csv(w: &mut impl Write, frame: &SeriesFrame) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    if let Some(names) = &frame.feature_names {
        out.write_record(names).map_err(csv_err)?;
    }
    let m = frame.n_features();
    let mut row = vec![String::new(); m];
    for t in 0..frame.len() {
        for (i, cell) in row.iter_mut().enumerate() {
            *cell = if frame.mask.get(i, t) {
                frame.values.at2(i, t).to_string()
            } else {
                String::new()
            };
        }
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(e.to_string())
}

pub fn write_labels(w: &mut impl Write, labels: &[bool]) -> Result<()> {
    let mut s = String::with_capacity(labels.len() * 2);
    for &l in labels {
        s.push_str(if l { "1\n" } else { "0\n" });
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn write_mask(w: &mut impl Write, mask: &Mask) -> Result<()> {
    let mut s = String::new();
    for t in 0..mask.cols() {
        let row: Vec<&str> = (0..mask.rows())
            .map(|i| if mask.get(i, t) { "1" } else { "0" })
            .collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

/// Loads one values file plus optional label and mask files.
pub fn load_frame(values: &Path, labels: Option<&Path>, mask: Option<&Path>, entity_id: &str) -> Result<SeriesFrame> {
    let (values_t, mut present, names) = read_values_csv(values)?;
    let (m, t_len) = (values_t.shape()[0], values_t.shape()[1]);
    if let Some(p) = mask {
        present = present.and(&read_mask(p, t_len, m)?);
    }
    let labels = match labels {
        Some(p) => {
            let l = read_labels(p)?;
            if l.len() != t_len {
                return Err(parse_err(
                    p,
                    l.len(),
                    format!("{} labels for {t_len} rows of {}", l.len(), values.display()),
                ));
            }
            Some(l)
        }
        None => None,
    };
    let frame = SeriesFrame {
        values: values_t,
        mask: present,
        labels,
        entity_id: entity_id.to_owned(),
        feature_names: names,
    };
    frame.validate()?;
    Ok(frame)
}

/// One entity of a dataset directory.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityData {
    pub id: String,
    pub train: Option<SeriesFrame>,
    pub test: Option<SeriesFrame>,
}

fn entity_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if path.is_file() && (ext == "csv" || ext == "txt") {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_owned();
            out.push((stem, path));
        }
    }
    out.sort();
    Ok(out)
}

fn companion(dir: &Path, id: &str) -> Option<PathBuf> {
    ["csv", "txt"]
        .iter()
        .map(|e| dir.join(format!("{id}.{e}")))
        .find(|p| p.is_file())
}

/// Loads a dataset directory:
///
/// ```text
/// root/train/<entity>.csv        training values
/// root/test/<entity>.csv         test values
/// root/test_label/<entity>.csv   one 0/1 per test row
/// root/train_mask/<entity>.csv   optional, 0 = hidden
/// root/test_mask/<entity>.csv    optional, 0 = hidden
/// ```
///
/// A plain file instead of a directory loads as a single test-less entity.
pub fn load_dataset(root: &Path) -> Result<Vec<EntityData>> {
    if root.is_file() {
        let id = root.file_stem().and_then(|s| s.to_str()).unwrap_or("entity").to_owned();
        let train = load_frame(root, None, None, &id)?;
        return Ok(vec![EntityData {
            id,
            train: Some(train),
            test: None,
        }]);
    }
    if !root.is_dir() {
        return Err(Error::Data(format!("{}: no such file or directory", root.display())));
    }
    let train = entity_files(&root.join("train"))?;
    let test = entity_files(&root.join("test"))?;
    let mut ids: Vec<String> = train.iter().chain(&test).map(|(id, _)| id.clone()).collect();
    ids.sort();
    ids.dedup();
    if ids.is_empty() {
        return Err(Error::Data(format!(
            "{}: no train/ or test/ files found",
            root.display()
        )));
    }
    ids.into_iter()
        .map(|id| {
            let find = |sub: &str| companion(&root.join(sub), &id);
            let train = find("train")
                .map(|p| load_frame(&p, None, find("train_mask").as_deref(), &id))
                .transpose()?;
            let test = find("test")
                .map(|p| load_frame(&p, find("test_label").as_deref(), find("test_mask").as_deref(), &id))
                .transpose()?;
            if let (Some(a), Some(b)) = (&train, &test) {
                if a.n_features() != b.n_features() {
                    return Err(Error::Data(format!(
                        "entity {id}: train has {} features, test has {}",
                        a.n_features(),
                        b.n_features()
                    )));
                }
            }
            Ok(EntityData { id, train, test })
        })
        .collect()
}

/// Writes a dataset directory in the layout read by [`load_dataset`].
pub fn write_dataset(root: &Path, entities: &[EntityData]) -> Result<()> {
    for e in entities {
        for (sub, frame) in [("train", &e.train), ("test", &e.test)] {
            let Some(f) = frame else { continue };
            let dir = root.join(sub);
            fs::create_dir_all(&dir)?;
            write_values_csv(&mut fs::File::create(dir.join(format!("{}.csv", e.id)))?, f)?;
            if f.mask.count_observed() < f.mask.as_slice().len() {
                let mdir = root.join(format!("{sub}_mask"));
                fs::create_dir_all(&mdir)?;
                write_mask(&mut fs::File::create(mdir.join(format!("{}.csv", e.id)))?, &f.mask)?;
            }
            if let (Some(l), "test") = (&f.labels, sub) {
                let ldir = root.join("test_label");
                fs::create_dir_all(&ldir)?;
                write_labels(&mut fs::File::create(ldir.join(format!("{}.csv", e.id)))?, l)?;
            }
        }
    }
    Ok(())
}
