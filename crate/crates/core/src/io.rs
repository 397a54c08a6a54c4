//! Sample file I/O.
//!
//! Corpora are stored as JSONL: a single header line followed by one
//! `RawSample` object per line. The header pins the format name, version
//! and units (positions in millimeters, angles in radians); files written
//! by the generator additionally echo the generator config under the
//! optional `generator` key. Writes go through a temp file + rename so a
//! crashed run never leaves a half-written corpus behind.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gesture::RawSample;

pub const SAMPLE_FORMAT: &str = "airgate-samples";
pub const SAMPLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Units {
    pub position: String,
    pub angle: String,
}

impl Default for Units {
    fn default() -> Self {
        Units { position: "mm".into(), angle: "rad".into() }
    }
}

/// First line of a sample file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFileHeader {
    pub format: String,
    pub version: u32,
    pub units: Units,
    /// Generator config echo, present when the file came from `synth`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

impl SampleFileHeader {
    pub fn new() -> Self {
        SampleFileHeader {
            format: SAMPLE_FORMAT.into(),
            version: SAMPLE_FORMAT_VERSION,
            units: Units::default(),
            generator: None,
        }
    }

    fn validate(&self, path: &Path) -> Result<()> {
        if self.format != SAMPLE_FORMAT {
            return Err(corpus_err(path, 1, format!("unexpected format {:?}", self.format)));
        }
        if self.version != SAMPLE_FORMAT_VERSION {
            return Err(corpus_err(path, 1, format!("unsupported version {}", self.version)));
        }
        if self.units != Units::default() {
            return Err(corpus_err(path, 1, "unexpected units; expected mm positions and rad angles".into()));
        }
        Ok(())
    }
}

impl Default for SampleFileHeader {
    fn default() -> Self {
        Self::new()
    }
}

fn corpus_err(path: &Path, line: usize, msg: String) -> Error {
    Error::Corpus { path: path.display().to_string(), line, msg }
}

/// Writes bytes atomically: temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn render_samples(samples: &[RawSample], header: &SampleFileHeader) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    serde_json::to_writer(&mut out, header)?;
    out.push(b'\n');
    for sample in samples {
        serde_json::to_writer(&mut out, sample)?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Writes a corpus with the standard header.
pub fn write_samples(samples: &[RawSample], path: impl AsRef<Path>) -> Result<()> {
    write_samples_with_header(samples, path, &SampleFileHeader::new())
}

pub fn write_samples_with_header(
    samples: &[RawSample],
    path: impl AsRef<Path>,
    header: &SampleFileHeader,
) -> Result<()> {
    atomic_write(path.as_ref(), &render_samples(samples, header)?)
}

/// Reads a corpus, validating the header and every sample. Malformed lines
/// are reported with their 1-based line number.
pub fn read_samples(path: impl AsRef<Path>) -> Result<Vec<RawSample>> {
    read_corpus(path).map(|(_, samples)| samples)
}

/// Like [`read_samples`], also returning the parsed header.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<(SampleFileHeader, Vec<RawSample>)> {
    let path = path.as_ref();
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let header = match lines.next() {
        None => return Ok((SampleFileHeader::new(), Vec::new())),
        Some((_, line)) => {
            let line = line?;
            if line.trim().is_empty() {
                return Ok((SampleFileHeader::new(), Vec::new()));
            }
            let header: SampleFileHeader = serde_json::from_str(&line)
                .map_err(|e| corpus_err(path, 1, format!("bad header: {e}")))?;
            header.validate(path)?;
            header
        }
    };

    let mut samples = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let sample: RawSample = serde_json::from_str(&line)
            .map_err(|e| corpus_err(path, lineno, e.to_string()))?;
        sample.validate().map_err(|e| corpus_err(path, lineno, e.to_string()))?;
        samples.push(sample);
    }
    Ok((header, samples))
}

/// SHA-256 of a file's bytes, lowercase hex.
pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gesture::{FingerData, GestureFlags, GestureType, HandType, RawFrame};

    fn sample(id: &str) -> RawSample {
        let finger = FingerData {
            tip_pos: [1.25, -3.5, 0.0625],
            tip_velocity: [10.0, 0.1, -0.2],
            tip_direction: [1.0, 0.0, 0.0],
            finger_length: 51.5,
            finger_width: 10.25,
        };
        let frame = RawFrame {
            grab_strength: 0.124_567_890_123_456_79,
            pinch_strength: 0.75,
            pitch: std::f64::consts::PI / 7.0,
            yaw: -0.1,
            roll: 0.0,
            palm_width: 84.123_456_789,
            palm_pos: [0.1, 200.0, -3.0],
            arm_pos: [0.2, 120.0, 4.0],
            wrist_pos: [0.15, 160.0, 1.0],
            hand_type: HandType::Left,
            gesture_flags: GestureFlags { swipe: true, ..GestureFlags::default() },
            fingers: [finger, finger, finger, finger, finger],
        };
        let mut second = frame.clone();
        second.fingers[1].tip_pos = [2.0, -3.0, 0.125];
        RawSample {
            sample_id: id.into(),
            user_id: "u1".into(),
            gesture: GestureType::Wave,
            batch: 2,
            frames: vec![frame, second],
        }
    }

    #[test]
    fn empty_file_reads_as_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(read_samples(&path).unwrap().is_empty());
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.jsonl");
        let samples = vec![sample("a"), sample("b")];
        write_samples(&samples, &path).unwrap();
        let back = read_samples(&path).unwrap();
        assert_eq!(back, samples);
    }

    #[test]
    fn header_line_is_pinned() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.jsonl");
        write_samples(&[], &path).unwrap();
        let content = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            content.lines().next().unwrap(),
            r#"{"format":"airgate-samples","version":1,"units":{"position":"mm","angle":"rad"}}"#
        );
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let mut content = String::new();
        content.push_str(r#"{"format":"airgate-samples","version":1,"units":{"position":"mm","angle":"rad"}}"#);
        content.push('\n');
        content.push_str(&serde_json::to_string(&sample("ok")).unwrap());
        content.push('\n');
        content.push_str("{not json\n");
        std::fs::write(&path, content).unwrap();
        let err = read_samples(&path).unwrap_err();
        match err {
            Error::Corpus { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_gesture_label_is_rejected_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("label.jsonl");
        let good = serde_json::to_string(&sample("ok")).unwrap();
        let bad = good.replace("\"wave\"", "\"twirl\"");
        let mut content = String::new();
        content.push_str(r#"{"format":"airgate-samples","version":1,"units":{"position":"mm","angle":"rad"}}"#);
        content.push('\n');
        content.push_str(&bad);
        content.push('\n');
        std::fs::write(&path, content).unwrap();
        let err = read_samples(&path).unwrap_err();
        match err {
            Error::Corpus { line, msg, .. } => {
                assert_eq!(line, 2);
                assert!(msg.contains("unknown variant") || msg.contains("twirl"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn wrong_format_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fmt.jsonl");
        std::fs::write(
            &path,
            r#"{"format":"other","version":1,"units":{"position":"mm","angle":"rad"}}"#,
        )
        .unwrap();
        assert!(read_samples(&path).is_err());
    }

    #[test]
    fn generator_echo_survives_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gen.jsonl");
        let mut header = SampleFileHeader::new();
        header.generator = Some(serde_json::json!({"seed": 7, "n_users": 3}));
        write_samples_with_header(&[sample("x")], &path, &header).unwrap();
        let (back, samples) = read_corpus(&path).unwrap();
        assert_eq!(back, header);
        assert_eq!(samples.len(), 1);
    }
}
