//! Landmark files: JSONL (one video per line) and long-form CSV (one joint per
//! row).

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::canonical::CanonicalHand;
use crate::format::{jsonl_lines, write_atomic, FormatError};
use crate::geometry::Vec3;
use crate::landmark::{
    validate_landmarks, HandLandmarks, Handedness, LandmarkError, LandmarkSequence, NUM_JOINTS,
};

pub const CSV_HEADER: [&str; 8] = [
    "video_id",
    "frame_idx",
    "joint_idx",
    "x",
    "y",
    "z",
    "label",
    "handedness",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LandmarkFormat {
    Jsonl,
    Csv,
}

impl LandmarkFormat {
    /// `.csv` selects CSV; anything else is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Self::Csv,
            _ => Self::Jsonl,
        }
    }
}

impl FromStr for LandmarkFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(Self::Jsonl),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown landmark format {other:?}")),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct VideoRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    video_id: Option<String>,
    label: Option<String>,
    signer: Option<String>,
    #[serde(default)]
    handedness: Handedness,
    frames: Vec<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    canonical: bool,
}

fn frames_from_raw(
    record: usize,
    raw: &[Vec<[f64; 3]>],
) -> Result<Vec<HandLandmarks<f64>>, FormatError> {
    raw.iter()
        .enumerate()
        .map(|(f, joints)| {
            validate_landmarks(joints).map_err(|e| match e {
                LandmarkError::WrongArity { found } => FormatError::schema(
                    record,
                    format!("frame {f} has {found} joints, expected {NUM_JOINTS}"),
                ),
                other => FormatError::schema(record, format!("frame {f}: {other}")),
            })
        })
        .collect()
}

fn sequence_from_record(
    record: usize,
    rec: VideoRecord,
) -> Result<LandmarkSequence<f64>, FormatError> {
    let frames = frames_from_raw(record, &rec.frames)?;
    let mut seq = LandmarkSequence::new(frames)
        .map_err(|_| FormatError::schema(record, "video has no frames"))?;
    seq.video_id = rec.video_id;
    seq.label = rec.label;
    seq.signer_id = rec.signer;
    seq.handedness = rec.handedness;
    Ok(seq)
}

pub fn read_landmark_file(
    path: &Path,
    format: LandmarkFormat,
) -> Result<Vec<LandmarkSequence<f64>>, FormatError> {
    match format {
        LandmarkFormat::Jsonl => read_jsonl(path),
        LandmarkFormat::Csv => read_csv(path),
    }
}

pub fn write_landmark_file(
    path: &Path,
    format: LandmarkFormat,
    seqs: &[LandmarkSequence<f64>],
) -> Result<(), FormatError> {
    let bytes = match format {
        LandmarkFormat::Jsonl => jsonl_bytes(seqs.iter().map(|s| record_for(s, s.frames(), false))),
        LandmarkFormat::Csv => csv_bytes(seqs)?,
    };
    write_atomic(path, &bytes)
}

/// Writes canonical coordinates in the JSONL landmark schema, marked with
/// `"canonical": true`. `meta[i]` supplies the metadata for `canonical[i]`.
pub fn write_canonical_file(
    path: &Path,
    meta: &[LandmarkSequence<f64>],
    canonical: &[Vec<CanonicalHand<f64>>],
) -> Result<(), FormatError> {
    assert_eq!(meta.len(), canonical.len());
    let records = meta.iter().zip(canonical).map(|(m, frames)| {
        let frames: Vec<Vec<[f64; 3]>> = frames
            .iter()
            .map(|c| c.points().iter().map(|p| p.to_array()).collect())
            .collect();
        VideoRecord {
            video_id: m.video_id.clone(),
            label: m.label.clone(),
            signer: m.signer_id.clone(),
            handedness: m.handedness,
            frames,
            canonical: true,
        }
    });
    write_atomic(path, &jsonl_bytes(records))
}

/// Reads a file written by [`write_canonical_file`]. Fails if a record lacks
/// the canonical marker.
pub fn read_canonical_file(
    path: &Path,
) -> Result<Vec<(LandmarkSequence<f64>, Vec<CanonicalHand<f64>>)>, FormatError> {
    let mut out = Vec::new();
    for (line_no, line) in jsonl_lines(path)? {
        let rec = parse_record(line_no, &line)?;
        if !rec.canonical {
            return Err(FormatError::schema(line_no, "record is not marked canonical"));
        }
        let seq = sequence_from_record(line_no, rec)?;
        let canon = seq
            .frames()
            .iter()
            .map(|f| CanonicalHand::from_points(f.points()).expect("validated"))
            .collect();
        out.push((seq, canon));
    }
    Ok(out)
}

fn record_for(seq: &LandmarkSequence<f64>, frames: &[HandLandmarks<f64>], canonical: bool) -> VideoRecord {
    VideoRecord {
        video_id: seq.video_id.clone(),
        label: seq.label.clone(),
        signer: seq.signer_id.clone(),
        handedness: seq.handedness,
        frames: frames.iter().map(|f| f.to_arrays()).collect(),
        canonical,
    }
}

fn jsonl_bytes(records: impl Iterator<Item = VideoRecord>) -> Vec<u8> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, &r).expect("serializable");
        buf.push(b'\n');
    }
    buf
}

fn parse_record(line_no: usize, line: &str) -> Result<VideoRecord, FormatError> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| FormatError::parse(line_no, e))?;
    // Check joint arity before serde sees the fixed-size triples, so a short
    // frame is reported as such rather than as a type error.
    if let Some(frames) = value.get("frames").and_then(|f| f.as_array()) {
        for (f, joints) in frames.iter().enumerate() {
            if let Some(j) = joints.as_array() {
                if j.len() != NUM_JOINTS {
                    return Err(FormatError::schema(
                        line_no,
                        format!("frame {f} has {} joints, expected {NUM_JOINTS}", j.len()),
                    ));
                }
            }
        }
    }
    serde_json::from_value(value).map_err(|e| FormatError::schema(line_no, e.to_string()))
}

fn read_jsonl(path: &Path) -> Result<Vec<LandmarkSequence<f64>>, FormatError> {
    jsonl_lines(path)?
        .into_iter()
        .map(|(line_no, line)| sequence_from_record(line_no, parse_record(line_no, &line)?))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    video_id: String,
    frame_idx: usize,
    joint_idx: usize,
    x: f64,
    y: f64,
    z: f64,
    label: Option<String>,
    handedness: Option<String>,
}

struct PendingVideo {
    id: String,
    label: Option<String>,
    handedness: Handedness,
    frames: Vec<HandLandmarks<f64>>,
    current: Option<(usize, [Option<Vec3<f64>>; NUM_JOINTS])>,
    first_row: usize,
}

impl PendingVideo {
    fn flush_frame(&mut self, row: usize) -> Result<(), FormatError> {
        if let Some((frame_idx, joints)) = self.current.take() {
            let mut pts = Vec::with_capacity(NUM_JOINTS);
            for (j, p) in joints.iter().enumerate() {
                match p {
                    Some(p) => pts.push(*p),
                    None => {
                        return Err(FormatError::schema(
                            row,
                            format!(
                                "video {:?} frame {frame_idx} is missing joint {j}",
                                self.id
                            ),
                        ))
                    }
                }
            }
            let h = HandLandmarks::new(&pts).map_err(|e| {
                FormatError::schema(row, format!("video {:?} frame {frame_idx}: {e}", self.id))
            })?;
            self.frames.push(h);
        }
        Ok(())
    }

    fn finish(mut self, row: usize) -> Result<LandmarkSequence<f64>, FormatError> {
        self.flush_frame(row)?;
        let mut seq = LandmarkSequence::new(self.frames)
            .map_err(|_| FormatError::schema(self.first_row, "video has no frames"))?;
        seq.video_id = Some(self.id);
        seq.label = self.label;
        seq.handedness = self.handedness;
        Ok(seq)
    }
}

fn read_csv(path: &Path) -> Result<Vec<LandmarkSequence<f64>>, FormatError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => FormatError::io(path, io),
        other => FormatError::parse(0, format!("{other:?}")),
    })?;
    let headers = rdr
        .headers()
        .map_err(|e| FormatError::parse(1, e))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(FormatError::schema(
            1,
            format!("expected header {}", CSV_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    let mut pending: Option<PendingVideo> = None;
    let mut seen_ids = std::collections::HashSet::new();
    let mut last_row = 1;
    for (i, result) in rdr.deserialize::<CsvRow>().enumerate() {
        // Line number in the file; the header is line 1.
        let row = i + 2;
        last_row = row;
        let r = result.map_err(|e| match e.kind() {
            csv::ErrorKind::Deserialize { .. } | csv::ErrorKind::UnequalLengths { .. } => {
                FormatError::schema(row, e.to_string())
            }
            _ => FormatError::parse(row, e),
        })?;
        if r.joint_idx >= NUM_JOINTS {
            return Err(FormatError::schema(
                row,
                format!("joint_idx {} out of range", r.joint_idx),
            ));
        }
        let same_video = pending.as_ref().is_some_and(|p| p.id == r.video_id);
        if !same_video {
            if let Some(p) = pending.take() {
                out.push(p.finish(row)?);
            }
            if !seen_ids.insert(r.video_id.clone()) {
                return Err(FormatError::schema(
                    row,
                    format!("rows for video {:?} are not contiguous", r.video_id),
                ));
            }
            let handedness = r
                .handedness
                .as_deref()
                .unwrap_or("")
                .parse()
                .map_err(|e: String| FormatError::schema(row, e))?;
            pending = Some(PendingVideo {
                id: r.video_id.clone(),
                label: r.label.clone().filter(|l| !l.is_empty()),
                handedness,
                frames: Vec::new(),
                current: None,
                first_row: row,
            });
        }
        let p = pending.as_mut().expect("set above");
        match p.current {
            Some((f, _)) if f == r.frame_idx => {}
            Some((f, _)) if r.frame_idx < f => {
                return Err(FormatError::schema(
                    row,
                    format!("frame_idx {} after {f}: frames must ascend", r.frame_idx),
                ));
            }
            _ => {
                p.flush_frame(row)?;
                p.current = Some((r.frame_idx, [None; NUM_JOINTS]));
            }
        }
        let slot = &mut p.current.as_mut().expect("set above").1[r.joint_idx];
        if slot.is_some() {
            return Err(FormatError::schema(
                row,
                format!("duplicate joint {} in frame {}", r.joint_idx, r.frame_idx),
            ));
        }
        *slot = Some(Vec3::new(r.x, r.y, r.z));
    }
    if let Some(p) = pending.take() {
        out.push(p.finish(last_row)?);
    }
    Ok(out)
}

fn csv_bytes(seqs: &[LandmarkSequence<f64>]) -> Result<Vec<u8>, FormatError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (v, seq) in seqs.iter().enumerate() {
        let id = seq.video_id.clone().unwrap_or_else(|| format!("video_{v}"));
        for (f, frame) in seq.frames().iter().enumerate() {
            for (j, p) in frame.points().iter().enumerate() {
                w.serialize(CsvRow {
                    video_id: id.clone(),
                    frame_idx: f,
                    joint_idx: j,
                    x: p.x,
                    y: p.y,
                    z: p.z,
                    label: seq.label.clone(),
                    handedness: Some(seq.handedness.to_string()),
                })
                .map_err(|e| FormatError::parse(0, e))?;
            }
        }
    }
    if seqs.is_empty() {
        w.write_record(CSV_HEADER).map_err(|e| FormatError::parse(0, e))?;
    }
    w.into_inner()
        .map_err(|e| FormatError::parse(0, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn seq(frames: usize, offset: f64, label: &str) -> LandmarkSequence<f64> {
        let fs = (0..frames)
            .map(|f| {
                let raw: Vec<[f64; 3]> = (0..21)
                    .map(|j| {
                        [
                            offset + 0.1 * j as f64 + 1e-3 * f as f64,
                            -0.25 * j as f64,
                            1.0 / 3.0 + f as f64,
                        ]
                    })
                    .collect();
                validate_landmarks(&raw).unwrap()
            })
            .collect();
        LandmarkSequence::new(fs)
            .unwrap()
            .with_label(label)
            .with_video_id(format!("{label}_{frames}"))
            .with_handedness(Handedness::Right)
    }

    #[test]
    fn two_records_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.jsonl");
        write_landmark_file(&p, LandmarkFormat::Jsonl, &[seq(3, 0.0, "a"), seq(5, 1.0, "b")])
            .unwrap();
        let back = read_landmark_file(&p, LandmarkFormat::Jsonl).unwrap();
        assert_eq!(back.iter().map(|s| s.len()).collect::<Vec<_>>(), vec![3, 5]);
    }

    #[test]
    fn roundtrip_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let seqs = vec![seq(3, 0.0, "a"), seq(5, 1.0, "b")];
        for (name, fmt) in [("l.jsonl", LandmarkFormat::Jsonl), ("l.csv", LandmarkFormat::Csv)] {
            let p = dir.path().join(name);
            write_landmark_file(&p, fmt, &seqs).unwrap();
            assert_eq!(LandmarkFormat::from_path(&p), fmt);
            assert_eq!(read_landmark_file(&p, fmt).unwrap(), seqs);
        }
    }

    #[test]
    fn minimal_jsonl_schema() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        let frame = vec![[0.0, 0.0, 0.0]; 21];
        let line = serde_json::json!({
            "label": null, "signer": null, "handedness": "left", "frames": [frame]
        });
        writeln!(f, "{line}").unwrap();
        let s = read_landmark_file(f.path(), LandmarkFormat::Jsonl).unwrap();
        assert_eq!(s[0].handedness, Handedness::Left);
        assert_eq!(s[0].label, None);
    }

    #[test]
    fn short_frame_names_the_record() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        let good = vec![[0.0, 0.0, 0.0]; 21];
        let bad = vec![[0.0, 0.0, 0.0]; 20];
        let ok = serde_json::json!({"label":"a","signer":null,"handedness":"right","frames":[good]});
        let broken =
            serde_json::json!({"label":"b","signer":null,"handedness":"right","frames":[good, bad]});
        writeln!(f, "{ok}\n{broken}").unwrap();
        match read_landmark_file(f.path(), LandmarkFormat::Jsonl) {
            Err(FormatError::Schema { record, message }) => {
                assert_eq!(record, 2);
                assert!(message.contains("20 joints"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_json_is_parse_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{{not json").unwrap();
        assert!(matches!(
            read_landmark_file(f.path(), LandmarkFormat::Jsonl),
            Err(FormatError::Parse { record: 1, .. })
        ));
    }

    #[test]
    fn csv_missing_joint() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{}", CSV_HEADER.join(",")).unwrap();
        for j in 0..20 {
            writeln!(f, "v,0,{j},0,0,0,a,right").unwrap();
        }
        let err = read_landmark_file(f.path(), LandmarkFormat::Csv).unwrap_err();
        assert!(matches!(err, FormatError::Schema { .. }), "{err}");
    }

    #[test]
    fn csv_bad_header_and_bad_number() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "a,b,c").unwrap();
        assert!(matches!(
            read_landmark_file(f.path(), LandmarkFormat::Csv),
            Err(FormatError::Schema { record: 1, .. })
        ));
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{}", CSV_HEADER.join(",")).unwrap();
        writeln!(f, "v,0,0,zero,0,0,a,right").unwrap();
        assert!(matches!(
            read_landmark_file(f.path(), LandmarkFormat::Csv),
            Err(FormatError::Schema { record: 2, .. })
        ));
    }

    #[test]
    fn canonical_marker_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        let s = seq(2, 0.0, "a");
        let canon: Vec<CanonicalHand<f64>> = s
            .frames()
            .iter()
            .map(|f| CanonicalHand::from_points(f.points()).unwrap())
            .collect();
        write_canonical_file(&p, std::slice::from_ref(&s), std::slice::from_ref(&canon)).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"canonical\":true"));
        let back = read_canonical_file(&p).unwrap();
        assert_eq!(back[0].1, canon);
        // A plain landmark file is refused by the canonical reader.
        let q = dir.path().join("plain.jsonl");
        write_landmark_file(&q, LandmarkFormat::Jsonl, &[s]).unwrap();
        assert!(read_canonical_file(&q).is_err());
    }
}
