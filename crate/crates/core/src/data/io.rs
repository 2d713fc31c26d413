//! Readers for IDX (MNIST-style, big-endian) and labelled CSV files.

use std::fs;
use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::Batch;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn format_err(offset: u64, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| {
            format_err(
                bytes.len() as u64,
                format!("truncated header, need 4 bytes at {offset}"),
            )
        })
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != expected {
        return Err(format_err(
            0,
            format!("bad {what} magic 0x{magic:08x}, expected 0x{expected:08x}"),
        ));
    }
    Ok(())
}

fn check_len(bytes: &[u8], needed: usize, what: &str) -> Result<()> {
    if bytes.len() < needed {
        return Err(format_err(
            bytes.len() as u64,
            format!("truncated {what} file: {} bytes, header promises {needed}", bytes.len()),
        ));
    }
    Ok(())
}

/// Loads an IDX image/label pair. Pixels are scaled from `u8` to `[0, 1]`.
///
/// `num_classes` defaults to one more than the largest label (at least 2);
/// when given, any label at or above it is a format error.
pub fn load_idx(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    num_classes: Option<usize>,
) -> Result<LabeledDataset> {
    let img = fs::read(images)?;
    let lab = fs::read(labels)?;

    check_magic(&img, IDX_IMAGES_MAGIC, "image")?;
    let count = read_u32_be(&img, 4)? as usize;
    let rows = read_u32_be(&img, 8)? as usize;
    let cols = read_u32_be(&img, 12)? as usize;
    let width = rows * cols;
    if width == 0 {
        return Err(format_err(8, "image dimensions must be positive"));
    }
    check_len(&img, 16 + count * width, "image")?;

    check_magic(&lab, IDX_LABELS_MAGIC, "label")?;
    let label_count = read_u32_be(&lab, 4)? as usize;
    if label_count != count {
        return Err(format_err(4, format!("{label_count} labels for {count} images")));
    }
    check_len(&lab, 8 + count, "label")?;

    let raw_labels: Vec<usize> = lab[8..8 + count].iter().map(|&b| b as usize).collect();
    let classes = match num_classes {
        Some(c) => {
            if let Some(pos) = raw_labels.iter().position(|&l| l >= c) {
                return Err(format_err(
                    (8 + pos) as u64,
                    format!("label {} out of range for {c} classes", raw_labels[pos]),
                ));
            }
            c
        }
        None => raw_labels.iter().copied().max().map_or(2, |m| (m + 1).max(2)),
    };
    let features: Vec<f64> = img[16..16 + count * width]
        .iter()
        .map(|&p| f64::from(p) / 255.0)
        .collect();
    let batch = Batch::new(features, width, raw_labels)?;
    Ok(LabeledDataset::from_checked_labels(batch, classes))
}

/// Loads a CSV whose first column is the class label and whose remaining
/// columns are features.
pub fn load_csv(path: impl AsRef<Path>, num_classes: usize, has_header: bool) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .from_path(path.as_ref())
        .map_err(|e| format_err(0, e.to_string()))?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    let mut record = csv::StringRecord::new();
    loop {
        let more = reader
            .read_record(&mut record)
            .map_err(|e| format_err(e.position().map_or(0, |p| p.byte()), e.to_string()))?;
        if !more {
            break;
        }
        let offset = record.position().map_or(0, |p| p.byte());
        if record.len() < 2 {
            return Err(format_err(offset, "row needs a label and at least one feature"));
        }
        let w = record.len() - 1;
        match width {
            None => width = Some(w),
            Some(expected) if expected != w => {
                return Err(format_err(offset, format!("row has {w} features, expected {expected}")));
            }
            _ => {}
        }
        let label: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| format_err(offset, format!("label `{}` is not a class index", &record[0])))?;
        if label >= num_classes {
            return Err(format_err(
                offset,
                format!("label {label} out of range for {num_classes} classes"),
            ));
        }
        labels.push(label);
        for field in record.iter().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| format_err(offset, format!("feature `{field}` is not a number")))?;
            features.push(v);
        }
    }
    let width = width.ok_or_else(|| format_err(0, "no data rows"))?;
    let batch = Batch::new(features, width, labels)?;
    // Files smaller than the class count are still returned as read.
    Ok(LabeledDataset::from_checked_labels(batch, num_classes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn idx_pair(dir: &Path, labels: &[u8], truncate_labels: bool) -> (std::path::PathBuf, std::path::PathBuf) {
        let n = labels.len() as u32;
        let mut img = Vec::new();
        img.extend(IDX_IMAGES_MAGIC.to_be_bytes());
        img.extend(n.to_be_bytes());
        img.extend(2u32.to_be_bytes());
        img.extend(3u32.to_be_bytes());
        for i in 0..(n as usize * 6) {
            img.push((i * 10) as u8);
        }
        let mut lab = Vec::new();
        lab.extend(IDX_LABELS_MAGIC.to_be_bytes());
        lab.extend(n.to_be_bytes());
        lab.extend_from_slice(labels);
        if truncate_labels {
            lab.pop();
        }
        let ip = dir.join("images.idx");
        let lp = dir.join("labels.idx");
        fs::write(&ip, img).unwrap();
        fs::write(&lp, lab).unwrap();
        (ip, lp)
    }

    #[test]
    fn idx_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = idx_pair(dir.path(), &[3, 0, 1, 2], false);
        let d = load_idx(&ip, &lp, None).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d.input_dim(), 6);
        assert_eq!(d.num_classes, 4);
        assert_eq!(d.samples.labels(), &[3, 0, 1, 2]);
        for i in 0..4 {
            for j in 0..6 {
                let byte = ((i * 6 + j) * 10) as u8;
                assert_eq!(d.samples.row(i)[j], f64::from(byte) / 255.0);
            }
        }
    }

    #[test]
    fn idx_truncated_labels() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = idx_pair(dir.path(), &[1, 0, 1, 0], true);
        match load_idx(&ip, &lp, None) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 11),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn idx_bad_magic_and_range() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = idx_pair(dir.path(), &[1, 0, 5, 0], false);
        match load_idx(&ip, &lp, Some(3)) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 10),
            other => panic!("expected format error, got {other:?}"),
        }
        match load_idx(&lp, &ip, None) {
            Err(Error::Format { offset: 0, message }) => assert!(message.contains("magic")),
            other => panic!("expected magic error, got {other:?}"),
        }
    }

    #[test]
    fn csv_single_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "1,0.5,0.25\n").unwrap();
        let d = load_csv(&p, 2, false).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.samples.labels(), &[1]);
        assert_eq!(d.samples.row(0), &[0.5, 0.25]);

        let mut f = fs::File::create(&p).unwrap();
        writeln!(f, "label,a,b\n1,0.5,0.25\n0,1.0,2.0").unwrap();
        let d = load_csv(&p, 2, true).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.samples.labels()[0], 1);
        assert_eq!(d.samples.row(0), &[0.5, 0.25]);
    }

    #[test]
    fn csv_errors_name_offsets() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "0,1.0\n4,2.0\n").unwrap();
        match load_csv(&p, 2, false) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("{other:?}"),
        }
        fs::write(&p, "0,1.0\n1,2.0,3.0\n").unwrap();
        assert!(matches!(load_csv(&p, 2, false), Err(Error::Format { .. })));
    }
}
