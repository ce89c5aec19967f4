//! On-disk formats for recordings, ratings, and manifests.
//!
//! All parsers here take the file content as a string or byte slice and do no
//! i/o themselves, so they can be driven by the fuzz targets; the `load_*`
//! functions wrap them with file reading and path resolution.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use super::{Electrode, IngestError, RatingRecord, RawRecording, NUM_CHANNELS};
use crate::fsutil;

/// Sidecar metadata stored next to each recording CSV as `<stem>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub subject_id: String,
    pub video_id: String,
    pub sample_rate_hz: f64,
    /// Sample index at which the stimulus starts; everything before it is
    /// baseline and is trimmed on load. Defaults to 0 (no baseline).
    #[serde(default)]
    pub stimulus_start_sample: usize,
}

/// Channel columns parsed out of a recording CSV, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingCsv {
    pub channel_names: Vec<String>,
    /// One column per entry of `channel_names`, all the same length.
    pub channels: Vec<Vec<f64>>,
}

/// Parses recording CSV text: a `time,<ch>,...` header, then one numeric row
/// per sample. The time column is validated but not kept.
pub fn parse_recording_csv(text: &str) -> Result<RecordingCsv, IngestError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| IngestError::BadHeader {
        detail: "empty file".to_string(),
    })?;
    let fields: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    if fields[0] != "time" {
        return Err(IngestError::BadHeader {
            detail: format!("first column must be 'time', got '{}'", fields[0]),
        });
    }
    if fields.len() < 2 {
        return Err(IngestError::BadHeader {
            detail: "no channel columns after 'time'".to_string(),
        });
    }
    let channel_names: Vec<String> = fields[1..].iter().map(|s| s.to_string()).collect();
    for (i, name) in channel_names.iter().enumerate() {
        if name.is_empty() {
            return Err(IngestError::BadHeader {
                detail: format!("channel column {} has an empty name", i + 1),
            });
        }
        if channel_names[..i].contains(name) {
            return Err(IngestError::BadHeader {
                detail: format!("duplicate channel column '{name}'"),
            });
        }
    }

    let mut channels: Vec<Vec<f64>> = vec![Vec::new(); channel_names.len()];
    for (row_idx, line) in lines.enumerate() {
        let line_no = row_idx + 2;
        let row: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
        if row.len() != channel_names.len() + 1 {
            return Err(IngestError::MalformedRow {
                line: line_no,
                detail: format!(
                    "expected {} fields, got {}",
                    channel_names.len() + 1,
                    row.len()
                ),
            });
        }
        for (col, field) in row.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| IngestError::MalformedRow {
                line: line_no,
                detail: format!("field '{field}' is not a number"),
            })?;
            if !value.is_finite() {
                return Err(IngestError::MalformedRow {
                    line: line_no,
                    detail: format!("non-finite value '{field}'"),
                });
            }
            if col > 0 {
                channels[col - 1].push(value);
            }
        }
    }
    Ok(RecordingCsv { channel_names, channels })
}

/// Parses sidecar metadata JSON.
pub fn parse_meta_json(text: &str) -> Result<RecordingMeta, IngestError> {
    let meta: RecordingMeta = serde_json::from_str(text)
        .map_err(|e| IngestError::BadMetadata { detail: e.to_string() })?;
    if !(meta.sample_rate_hz.is_finite() && meta.sample_rate_hz > 0.0) {
        return Err(IngestError::BadMetadata {
            detail: format!("sample_rate_hz must be positive, got {}", meta.sample_rate_hz),
        });
    }
    Ok(meta)
}

/// Parses and validates a ratings JSON document.
pub fn parse_ratings_json(text: &str) -> Result<RatingRecord, IngestError> {
    let record: RatingRecord = serde_json::from_str(text)
        .map_err(|e| IngestError::BadRatings { detail: e.to_string() })?;
    record.validate()?;
    Ok(record)
}

/// A batch of (recording, ratings) path pairs.
///
/// Relative paths are resolved against the manifest's own directory, so a
/// manifest can be shipped together with its data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub recording: PathBuf,
    pub ratings: PathBuf,
}

/// Parses a manifest JSON document.
pub fn parse_manifest_json(text: &str) -> Result<Manifest, IngestError> {
    serde_json::from_str(text).map_err(|e| IngestError::BadManifest { detail: e.to_string() })
}

fn meta_path_for(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Loads a recording CSV and its `.meta.json` sidecar.
///
/// Channels are reordered to [`Electrode::ALL`]; columns that are not part of
/// the canonical montage are dropped, and a missing canonical channel is an
/// error. Baseline samples before `stimulus_start_sample` are trimmed.
pub fn load_recording(csv_path: &Path) -> Result<RawRecording, IngestError> {
    let text =
        std::fs::read_to_string(csv_path).map_err(|e| IngestError::io(csv_path, e))?;
    let parsed = parse_recording_csv(&text)?;

    let meta_path = meta_path_for(csv_path);
    let meta_text =
        std::fs::read_to_string(&meta_path).map_err(|e| IngestError::io(&meta_path, e))?;
    let meta = parse_meta_json(&meta_text)?;

    let mut samples = Vec::with_capacity(NUM_CHANNELS);
    for electrode in Electrode::ALL {
        let col = parsed
            .channel_names
            .iter()
            .position(|n| n == electrode.name())
            .ok_or_else(|| IngestError::MissingChannel { channel: electrode.name().to_string() })?;
        samples.push(parsed.channels[col].clone());
    }

    let total = samples[0].len();
    if meta.stimulus_start_sample > 0 {
        if meta.stimulus_start_sample >= total {
            return Err(IngestError::BadMetadata {
                detail: format!(
                    "stimulus_start_sample {} is beyond the recording ({total} samples)",
                    meta.stimulus_start_sample
                ),
            });
        }
        for ch in &mut samples {
            ch.drain(..meta.stimulus_start_sample);
        }
    }

    let recording = RawRecording {
        subject_id: meta.subject_id,
        video_id: meta.video_id,
        sample_rate_hz: meta.sample_rate_hz,
        samples,
    };
    recording.validate()?;
    Ok(recording)
}

/// Loads and validates a ratings JSON file.
pub fn load_ratings(path: &Path) -> Result<RatingRecord, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    parse_ratings_json(&text)
}

/// Loads every (recording, ratings) pair listed in a manifest.
///
/// Errors from individual entries are annotated with the entry index. Each
/// pair must agree on subject and video ids.
pub fn load_manifest(path: &Path) -> Result<Vec<(RawRecording, RatingRecord)>, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    let manifest = parse_manifest_json(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));

    let mut pairs = Vec::with_capacity(manifest.entries.len());
    for (index, entry) in manifest.entries.iter().enumerate() {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let recording =
            load_recording(&resolve(&entry.recording)).map_err(|e| e.at_entry(index))?;
        let ratings = load_ratings(&resolve(&entry.ratings)).map_err(|e| e.at_entry(index))?;
        if recording.subject_id != ratings.subject_id || recording.video_id != ratings.video_id {
            return Err(IngestError::PairMismatch {
                detail: format!(
                    "recording {}/{} paired with ratings {}/{}",
                    recording.subject_id,
                    recording.video_id,
                    ratings.subject_id,
                    ratings.video_id
                ),
            }
            .at_entry(index));
        }
        pairs.push((recording, ratings));
    }
    Ok(pairs)
}

/// Number of decimal places recording CSVs are written with.
pub const CSV_DECIMALS: usize = 6;

/// Writes a recording as CSV plus `.meta.json` sidecar.
///
/// Values are written with [`CSV_DECIMALS`] decimal places; loading the pair
/// back reproduces the recording up to that precision. Both files are written
/// atomically (temp file + rename).
pub fn write_recording(recording: &RawRecording, csv_path: &Path) -> Result<(), IngestError> {
    recording.validate()?;
    let n = recording.num_samples();
    let mut out = String::with_capacity(n * NUM_CHANNELS * 12);
    out.push_str("time");
    for e in Electrode::ALL {
        out.push(',');
        out.push_str(e.name());
    }
    out.push('\n');
    for i in 0..n {
        let t = i as f64 / recording.sample_rate_hz;
        out.push_str(&format!("{:.*}", CSV_DECIMALS, t));
        for ch in &recording.samples {
            out.push_str(&format!(",{:.*}", CSV_DECIMALS, ch[i]));
        }
        out.push('\n');
    }
    fsutil::atomic_write(csv_path, out.as_bytes()).map_err(|e| IngestError::io(csv_path, e))?;

    let meta = RecordingMeta {
        subject_id: recording.subject_id.clone(),
        video_id: recording.video_id.clone(),
        sample_rate_hz: recording.sample_rate_hz,
        stimulus_start_sample: 0,
    };
    let meta_path = meta_path_for(csv_path);
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    fsutil::atomic_write(&meta_path, format!("{json}\n").as_bytes())
        .map_err(|e| IngestError::io(&meta_path, e))
}

/// Writes a ratings record as JSON (atomically).
pub fn write_ratings(record: &RatingRecord, path: &Path) -> Result<(), IngestError> {
    record.validate()?;
    let json = serde_json::to_string_pretty(record).expect("ratings serialize");
    fsutil::atomic_write(path, format!("{json}\n").as_bytes())
        .map_err(|e| IngestError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::QoEFactor;
    use std::collections::BTreeMap;

    fn full_scores(v: u8) -> BTreeMap<QoEFactor, u8> {
        QoEFactor::ALL.iter().map(|&f| (f, v)).collect()
    }

    fn tiny_recording() -> RawRecording {
        // 4 s at 250 Hz so the three-second minimum holds.
        let n = 1000;
        let samples = (0..NUM_CHANNELS)
            .map(|c| (0..n).map(|i| (c as f64) + (i as f64) * 0.001).collect())
            .collect();
        RawRecording {
            subject_id: "s01".into(),
            video_id: "v01".into(),
            sample_rate_hz: 250.0,
            samples,
        }
    }

    #[test]
    fn csv_round_trip_preserves_values_to_format_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.csv");
        let original = tiny_recording();
        write_recording(&original, &path).unwrap();
        let loaded = load_recording(&path).unwrap();
        assert_eq!(loaded.subject_id, "s01");
        assert_eq!(loaded.sample_rate_hz, 250.0);
        for c in 0..NUM_CHANNELS {
            for i in 0..original.num_samples() {
                let diff = (loaded.samples[c][i] - original.samples[c][i]).abs();
                assert!(diff <= 5.1e-7, "channel {c} sample {i} differs by {diff}");
            }
        }
    }

    #[test]
    fn channels_are_reordered_to_canonical_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.csv");
        // O2 first, an extra non-canonical channel in the middle.
        let mut text = String::from("time,O2,Cz,Fp1,Fp2,T3,T4,P3,P4,O1\n");
        for i in 0..1000 {
            let t = i as f64 / 250.0;
            text.push_str(&format!(
                "{t:.6},9.0,-1.0,1.0,2.0,3.0,4.0,5.0,6.0,8.0\n"
            ));
        }
        std::fs::write(&path, text).unwrap();
        std::fs::write(
            path.with_extension("meta.json"),
            r#"{"subject_id":"s01","video_id":"v01","sample_rate_hz":250.0}"#,
        )
        .unwrap();
        let rec = load_recording(&path).unwrap();
        assert_eq!(rec.channel(Electrode::Fp1)[0], 1.0);
        assert_eq!(rec.channel(Electrode::O1)[0], 8.0);
        assert_eq!(rec.channel(Electrode::O2)[0], 9.0);
        assert_eq!(rec.samples.len(), NUM_CHANNELS, "extra channel must be dropped");
    }

    #[test]
    fn missing_canonical_channel_is_reported_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.csv");
        let mut text = String::from("time,Fp1,Fp2,T3,T4,P3,P4,O1\n");
        for i in 0..800 {
            text.push_str(&format!("{:.6},1,1,1,1,1,1,1\n", i as f64 / 250.0));
        }
        std::fs::write(&path, text).unwrap();
        std::fs::write(
            path.with_extension("meta.json"),
            r#"{"subject_id":"s","video_id":"v","sample_rate_hz":250.0}"#,
        )
        .unwrap();
        match load_recording(&path) {
            Err(IngestError::MissingChannel { channel }) => assert_eq!(channel, "O2"),
            other => panic!("expected MissingChannel, got {other:?}"),
        }
    }

    #[test]
    fn ragged_row_reports_its_line_number() {
        let text = "time,Fp1,Fp2,T3,T4,P3,P4,O1,O2\n0.0,1,2,3,4,5,6,7,8\n0.004,1,2,3\n";
        match parse_recording_csv(text) {
            Err(IngestError::MalformedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected MalformedRow, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_field_is_rejected() {
        let text = "time,Fp1,Fp2,T3,T4,P3,P4,O1,O2\n0.0,1,2,x,4,5,6,7,8\n";
        assert!(matches!(
            parse_recording_csv(text),
            Err(IngestError::MalformedRow { line: 2, .. })
        ));
    }

    #[test]
    fn stimulus_start_trims_baseline() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.csv");
        write_recording(&tiny_recording(), &path).unwrap();
        // Rewrite the sidecar with a 100-sample baseline.
        std::fs::write(
            path.with_extension("meta.json"),
            r#"{"subject_id":"s01","video_id":"v01","sample_rate_hz":250.0,"stimulus_start_sample":100}"#,
        )
        .unwrap();
        let rec = load_recording(&path).unwrap();
        assert_eq!(rec.num_samples(), 900);
        // Channel 0 originally starts at 0.0 and steps by 0.001.
        assert!((rec.channel(Electrode::Fp1)[0] - 0.1).abs() < 1e-9);
    }

    #[test]
    fn ratings_score_out_of_range_names_the_factor() {
        let mut scores = full_scores(5);
        scores.insert(QoEFactor::VQ, 0);
        let record = RatingRecord {
            subject_id: "s01".into(),
            video_id: "v01".into(),
            scores,
        };
        let err = record.validate().unwrap_err();
        assert!(err.to_string().contains("VQ"), "error should name VQ: {err}");
    }

    #[test]
    fn ratings_missing_factor_is_an_error() {
        let mut scores = full_scores(5);
        scores.remove(&QoEFactor::IL);
        let record = RatingRecord {
            subject_id: "s01".into(),
            video_id: "v01".into(),
            scores,
        };
        let err = record.validate().unwrap_err();
        assert!(err.to_string().contains("IL"), "error should name IL: {err}");
    }

    #[test]
    fn manifest_loads_pairs_and_checks_ids() {
        let dir = tempfile::tempdir().unwrap();
        for (i, sid) in ["s01", "s02"].iter().enumerate() {
            let mut rec = tiny_recording();
            rec.subject_id = sid.to_string();
            write_recording(&rec, &dir.path().join(format!("rec{i}.csv"))).unwrap();
            let ratings = RatingRecord {
                subject_id: sid.to_string(),
                video_id: "v01".into(),
                scores: full_scores(7),
            };
            write_ratings(&ratings, &dir.path().join(format!("rat{i}.json"))).unwrap();
        }
        let manifest = r#"{"entries":[
            {"recording":"rec0.csv","ratings":"rat0.json"},
            {"recording":"rec1.csv","ratings":"rat1.json"}]}"#;
        let mpath = dir.path().join("manifest.json");
        std::fs::write(&mpath, manifest).unwrap();
        let pairs = load_manifest(&mpath).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[1].0.subject_id, "s02");

        // Cross-wire the ratings so the ids disagree.
        let bad = r#"{"entries":[{"recording":"rec0.csv","ratings":"rat1.json"}]}"#;
        std::fs::write(&mpath, bad).unwrap();
        let err = load_manifest(&mpath).unwrap_err();
        assert!(
            matches!(err, IngestError::Entry { index: 0, ref source }
                if matches!(**source, IngestError::PairMismatch { .. })),
            "expected entry-annotated PairMismatch, got {err:?}"
        );
    }
}
