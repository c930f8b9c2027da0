//! File formats: portable graymaps (P5) for images and masks, plain-text
//! contours, and line-delimited header-row record tables for logs, reports
//! and manifests.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::cdr::{CdrRecord, Grade};
use crate::contour::{Contour, Point};
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::metrics::MetricsReport;
use crate::tensor::Tensor;
use crate::train::{TrainLog, TrainRecord};

fn parse_err(file: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.display().to_string(),
        line,
        message: message.into(),
    }
}

// ---------------------------------------------------------------- graymaps

/// Decoded portable graymap: 8-bit or 16-bit samples, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pgm {
    Eight {
        width: usize,
        height: usize,
        data: Vec<u8>,
    },
    Sixteen {
        width: usize,
        height: usize,
        data: Vec<u16>,
    },
}

impl Pgm {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Pgm::Eight { width, height, .. } | Pgm::Sixteen { width, height, .. } => {
                (*width, *height)
            }
        }
    }

    /// Samples rescaled to `[0, 1]` as a `[1, H, W]` tensor.
    pub fn to_tensor(&self) -> Result<Tensor<f64>> {
        let (w, h) = self.dims();
        let data: Vec<f64> = match self {
            Pgm::Eight { data, .. } => data.iter().map(|&v| v as f64 / 255.0).collect(),
            Pgm::Sixteen { data, .. } => data.iter().map(|&v| v as f64 / 65535.0).collect(),
        };
        Tensor::new(vec![1, h, w], data)
    }
}

/// Quantizes a `[1, H, W]` tensor of nominally `[0, 1]` values to a 16-bit
/// graymap (clamped, half away from zero).
pub fn tensor_to_pgm(image: &Tensor<f64>) -> Result<Pgm> {
    let shape = image.shape();
    if shape.len() != 3 || shape[0] != 1 {
        return Err(Error::dim(&[1, 0, 0], shape, "graymap export expects [1,H,W]"));
    }
    let data = image
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    Ok(Pgm::Sixteen {
        width: shape[2],
        height: shape[1],
        data,
    })
}

pub fn write_pgm(path: &Path, pgm: &Pgm) -> Result<()> {
    let mut out = Vec::new();
    match pgm {
        Pgm::Eight {
            width,
            height,
            data,
        } => {
            if data.len() != width * height {
                return Err(Error::dim(&[*width, *height], &[data.len()], "graymap payload"));
            }
            write!(&mut std::io::Cursor::new(&mut out), "P5\n{width} {height}\n255\n")?;
            out.extend_from_slice(data);
        }
        Pgm::Sixteen {
            width,
            height,
            data,
        } => {
            if data.len() != width * height {
                return Err(Error::dim(&[*width, *height], &[data.len()], "graymap payload"));
            }
            write!(
                &mut std::io::Cursor::new(&mut out),
                "P5\n{width} {height}\n65535\n"
            )?;
            for &v in data {
                out.extend_from_slice(&v.to_be_bytes()); // network order per the format
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Tolerant P5 reader: arbitrary header whitespace and `#` comments.
pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;
    let next_token = |pos: &mut usize| -> Result<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(parse_err(path, 0, "truncated graymap header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = next_token(&mut pos)?;
    if magic != "P5" {
        return Err(parse_err(path, 1, format!("bad magic '{magic}', expected P5")));
    }
    let read_usize = |pos: &mut usize, what: &str| -> Result<usize> {
        let tok = next_token(pos)?;
        tok.parse()
            .map_err(|_| parse_err(path, 0, format!("invalid {what} '{tok}'")))
    };
    let width = read_usize(&mut pos, "width")?;
    let height = read_usize(&mut pos, "height")?;
    let maxval = read_usize(&mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(parse_err(path, 0, "zero graymap dimension"));
    }
    pos += 1; // the single whitespace byte after maxval
    let n = width * height;
    match maxval {
        1..=255 => {
            if bytes.len() < pos + n {
                return Err(parse_err(path, 0, "truncated 8-bit payload"));
            }
            Ok(Pgm::Eight {
                width,
                height,
                data: bytes[pos..pos + n].to_vec(),
            })
        }
        256..=65535 => {
            if bytes.len() < pos + 2 * n {
                return Err(parse_err(path, 0, "truncated 16-bit payload"));
            }
            let data = bytes[pos..pos + 2 * n]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect();
            Ok(Pgm::Sixteen {
                width,
                height,
                data,
            })
        }
        _ => Err(parse_err(path, 0, format!("unsupported maxval {maxval}"))),
    }
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    write_pgm(
        path,
        &Pgm::Eight {
            width: mask.width(),
            height: mask.height(),
            data: mask.data().to_vec(),
        },
    )
}

/// Reads an 8-bit graymap whose samples are restricted to {0, 255}.
pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    match read_pgm(path)? {
        Pgm::Eight {
            width,
            height,
            data,
        } => BinaryMask::from_bytes(width, height, data),
        Pgm::Sixteen { .. } => Err(parse_err(path, 0, "masks must be 8-bit graymaps")),
    }
}

// ---------------------------------------------------------------- contours

/// One "x,y" pair per line; the polygon closes implicitly.
pub fn write_contour(path: &Path, contour: &Contour) -> Result<()> {
    let mut s = String::new();
    for p in contour.points() {
        // f64 Display is shortest-round-trip, so parsing recovers the bits
        writeln!(s, "{},{}", p.x, p.y).expect("string write");
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_contour(path: &Path) -> Result<Contour> {
    let file = fs::File::open(path)?;
    let mut points = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (xs, ys) = line
            .split_once(',')
            .ok_or_else(|| parse_err(path, i + 1, "expected 'x,y'"))?;
        let x: f64 = xs
            .trim()
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("invalid x '{xs}'")))?;
        let y: f64 = ys
            .trim()
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("invalid y '{ys}'")))?;
        points.push(Point::new(x, y));
    }
    Contour::new(points)
}

/// Locates `<stem>_expertN<ext>` siblings of `base`, ordered by N.
pub fn find_expert_files(base: &Path) -> Result<Vec<PathBuf>> {
    let dir = base.parent().unwrap_or_else(|| Path::new("."));
    let stem = base
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Config(format!("bad expert basename {}", base.display())))?;
    let ext = base.extension().and_then(|e| e.to_str()).unwrap_or("txt");
    let mut found: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let prefix = format!("{stem}_expert");
        let suffix = format!(".{ext}");
        if let Some(rest) = name.strip_prefix(&prefix) {
            if let Some(num) = rest.strip_suffix(&suffix) {
                if let Ok(n) = num.parse::<u64>() {
                    found.push((n, path));
                }
            }
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(Error::Config(format!(
            "no {stem}_expertN.{ext} files next to {}",
            base.display()
        )));
    }
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

// ----------------------------------------------------------------- records

/// Writes a comma-separated table with a fixed header row.
pub fn write_records(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut s = String::new();
    writeln!(s, "{}", header.join(",")).expect("string write");
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::Contract(format!(
                "record row {i} has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        writeln!(s, "{}", row.join(",")).expect("string write");
    }
    fs::write(path, s)?;
    Ok(())
}

/// Reads a table back, checking the header matches `expected` exactly.
pub fn read_records(path: &Path, expected: &[&str]) -> Result<Vec<Vec<String>>> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty record file"))??;
    let got: Vec<&str> = header.split(',').collect();
    if got != expected {
        return Err(parse_err(
            path,
            1,
            format!("header '{header}' does not match '{}'", expected.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(str::to_owned).collect();
        if fields.len() != expected.len() {
            return Err(parse_err(
                path,
                i + 2,
                format!("{} fields, expected {}", fields.len(), expected.len()),
            ));
        }
        rows.push(fields);
    }
    Ok(rows)
}

fn field_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| parse_err(path, line, format!("invalid number '{s}'")))
}

fn field_usize(path: &Path, line: usize, s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| parse_err(path, line, format!("invalid integer '{s}'")))
}

/// Marker used for undefined (0/0) metric values.
const UNDEFINED: &str = "-";

fn opt_to_field(v: Option<f64>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => UNDEFINED.into(),
    }
}

fn field_to_opt(path: &Path, line: usize, s: &str) -> Result<Option<f64>> {
    if s == UNDEFINED {
        Ok(None)
    } else {
        field_f64(path, line, s).map(Some)
    }
}

// ---- train log

pub const TRAIN_LOG_HEADER: [&str; 5] =
    ["iteration", "alpha", "train_loss", "val_loss", "wall_clock"];

pub fn write_train_log(path: &Path, log: &TrainLog) -> Result<()> {
    let rows: Vec<Vec<String>> = log
        .records
        .iter()
        .map(|r| {
            vec![
                r.iteration.to_string(),
                r.alpha.to_string(),
                r.train_loss.to_string(),
                r.val_loss.to_string(),
                r.wall_clock.to_string(),
            ]
        })
        .collect();
    write_records(path, &TRAIN_LOG_HEADER, &rows)
}

pub fn read_train_log(path: &Path) -> Result<TrainLog> {
    let rows = read_records(path, &TRAIN_LOG_HEADER)?;
    let mut records = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let ln = i + 2;
        records.push(TrainRecord {
            iteration: field_usize(path, ln, &row[0])?,
            alpha: field_f64(path, ln, &row[1])?,
            train_loss: field_f64(path, ln, &row[2])?,
            val_loss: field_f64(path, ln, &row[3])?,
            wall_clock: field_f64(path, ln, &row[4])?,
        });
    }
    Ok(TrainLog { records })
}

// ---- metrics table

pub const METRICS_HEADER: [&str; 7] = [
    "id",
    "sensitivity",
    "specificity",
    "accuracy",
    "precision",
    "dice",
    "jaccard",
];

pub fn metrics_row(id: &str, r: &MetricsReport) -> Vec<String> {
    let mut row = vec![id.to_string()];
    row.extend(r.fields().iter().map(|&f| opt_to_field(f)));
    row
}

pub fn write_metrics_table(path: &Path, rows: &[(String, MetricsReport)]) -> Result<()> {
    let body: Vec<Vec<String>> = rows.iter().map(|(id, r)| metrics_row(id, r)).collect();
    write_records(path, &METRICS_HEADER, &body)
}

pub fn read_metrics_table(path: &Path) -> Result<Vec<(String, MetricsReport)>> {
    let rows = read_records(path, &METRICS_HEADER)?;
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let ln = i + 2;
        out.push((
            row[0].clone(),
            MetricsReport {
                sensitivity: field_to_opt(path, ln, &row[1])?,
                specificity: field_to_opt(path, ln, &row[2])?,
                accuracy: field_to_opt(path, ln, &row[3])?,
                precision: field_to_opt(path, ln, &row[4])?,
                dice: field_to_opt(path, ln, &row[5])?,
                jaccard: field_to_opt(path, ln, &row[6])?,
            },
        ));
    }
    Ok(out)
}

// ---- cohort manifest and labels

pub const MANIFEST_HEADER: [&str; 3] = ["id", "true_cdr", "label"];

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub true_cdr: f64,
    /// 1 = suspect, 0 = normal.
    pub label: u8,
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let rows: Vec<Vec<String>> = entries
        .iter()
        .map(|e| vec![e.id.clone(), e.true_cdr.to_string(), e.label.to_string()])
        .collect();
    write_records(path, &MANIFEST_HEADER, &rows)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let rows = read_records(path, &MANIFEST_HEADER)?;
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let ln = i + 2;
        let label = field_usize(path, ln, &row[2])?;
        if label > 1 {
            return Err(parse_err(path, ln, format!("label must be 0 or 1, got {label}")));
        }
        out.push(ManifestEntry {
            id: row[0].clone(),
            true_cdr: field_f64(path, ln, &row[1])?,
            label: label as u8,
        });
    }
    Ok(out)
}

// ---- CDR table

pub const CDR_HEADER: [&str; 6] = [
    "id",
    "disc_diameter",
    "cup_diameter",
    "cdr",
    "grade",
    "cup_exceeds_disc",
];

fn grade_str(g: Grade) -> &'static str {
    match g {
        Grade::Normal => "normal",
        Grade::Suspect => "suspect",
    }
}

fn parse_grade(path: &Path, line: usize, s: &str) -> Result<Grade> {
    match s {
        "normal" => Ok(Grade::Normal),
        "suspect" => Ok(Grade::Suspect),
        other => Err(parse_err(path, line, format!("unknown grade '{other}'"))),
    }
}

pub fn write_cdr_table(path: &Path, rows: &[(String, CdrRecord)]) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(id, r)| {
            vec![
                id.clone(),
                r.disc_diameter.to_string(),
                r.cup_diameter.to_string(),
                r.cdr.to_string(),
                grade_str(r.grade).to_string(),
                (r.cup_exceeds_disc as u8).to_string(),
            ]
        })
        .collect();
    write_records(path, &CDR_HEADER, &body)
}

pub fn read_cdr_table(path: &Path) -> Result<Vec<(String, CdrRecord)>> {
    let rows = read_records(path, &CDR_HEADER)?;
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let ln = i + 2;
        out.push((
            row[0].clone(),
            CdrRecord {
                disc_diameter: field_usize(path, ln, &row[1])?,
                cup_diameter: field_usize(path, ln, &row[2])?,
                cdr: field_f64(path, ln, &row[3])?,
                grade: parse_grade(path, ln, &row[4])?,
                cup_exceeds_disc: field_usize(path, ln, &row[5])? != 0,
            },
        ));
    }
    Ok(out)
}

// ---- dispersion (per-angle MAD from fusion)

pub const DISPERSION_HEADER: [&str; 2] = ["angle_index", "mad"];

pub fn write_dispersion(path: &Path, mad: &[f64]) -> Result<()> {
    let rows: Vec<Vec<String>> = mad
        .iter()
        .enumerate()
        .map(|(k, v)| vec![k.to_string(), v.to_string()])
        .collect();
    write_records(path, &DISPERSION_HEADER, &rows)
}
