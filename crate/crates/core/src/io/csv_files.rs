use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use super::{format_sig9, write_atomic, HeightRecord, ImuSession, CHANNELS, CHANNEL_NAMES, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};
use crate::segmentation::{ClassVocabulary, Segment};

pub const SESSION_HEADER: &str = "t,ax,ay,az,gx,gy,gz";
pub const ANNOTATION_HEADER: &str = "start_sample,end_sample,label";
pub const HEIGHTS_HEADER: &str = "subject_id,start_sample,end_sample,label,height_m";

const TIME_TOLERANCE: f64 = 1e-6;

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn records(path: &Path) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut reader = open(path)?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn number<T: std::str::FromStr>(path: &Path, line: usize, column: &str, cell: &str) -> Result<T> {
    cell.parse()
        .map_err(|_| parse_err(path, line, format!("column {column}: {cell:?} is not a number")))
}

fn check_header(path: &Path, rec: Option<&(usize, csv::StringRecord)>, expected: &[&str]) -> Result<()> {
    let (line, rec) = rec.ok_or_else(|| parse_err(path, 1, "missing header"))?;
    let got: Vec<&str> = rec.iter().collect();
    if got != expected {
        let detail = got
            .iter()
            .zip(expected)
            .position(|(g, e)| g != e)
            .map(|i| format!("column {} is {:?}, expected {:?}", i + 1, got[i], expected[i]))
            .unwrap_or_else(|| format!("{} columns, expected {}", got.len(), expected.len()));
        return Err(parse_err(
            path,
            *line,
            format!("bad header ({detail}); expected {}", expected.join(",")),
        ));
    }
    Ok(())
}

/// Reads `t,ax,ay,az,gx,gy,gz[,label]`. Timestamps must advance by 0.01 s.
pub fn read_session_csv(path: &Path, vocab: &ClassVocabulary) -> Result<ImuSession> {
    let rows = records(path)?;
    let (hline, header) = rows.first().ok_or_else(|| parse_err(path, 1, "missing header"))?;
    let cols: Vec<&str> = header.iter().collect();
    let has_label = cols.last() == Some(&"label");
    let data_cols = if has_label { &cols[..cols.len() - 1] } else { &cols[..] };
    if data_cols.first() == Some(&"t") && data_cols.len() != CHANNELS + 1 {
        let names_ok = data_cols[1..].iter().all(|c| CHANNEL_NAMES.contains(c));
        if names_ok {
            return Err(parse_err(
                path,
                *hline,
                format!(
                    "channel mismatch: found {} channels ({}), expected {CHANNELS} ({})",
                    data_cols.len() - 1,
                    data_cols[1..].join(","),
                    CHANNEL_NAMES.join(",")
                ),
            ));
        }
    }
    let expected: Vec<&str> = SESSION_HEADER.split(',').collect();
    if has_label {
        let mut e = expected.clone();
        e.push("label");
        check_header(path, rows.first(), &e)?;
    } else {
        check_header(path, rows.first(), &expected)?;
    }

    let width = expected.len() + usize::from(has_label);
    let n = rows.len() - 1;
    if n == 0 {
        return Err(parse_err(path, *hline, "session has no samples"));
    }
    let mut samples = Array2::zeros((n, CHANNELS));
    let mut labels = has_label.then(|| Vec::with_capacity(n));
    let mut prev_t: Option<f64> = None;
    for (i, (line, rec)) in rows[1..].iter().enumerate() {
        if rec.len() != width {
            return Err(parse_err(path, *line, format!("expected {width} fields, found {}", rec.len())));
        }
        let t: f64 = number(path, *line, "t", &rec[0])?;
        if let Some(p) = prev_t {
            let step = 1.0 / SAMPLE_RATE_HZ;
            if (t - p - step).abs() > TIME_TOLERANCE {
                return Err(parse_err(
                    path,
                    *line,
                    format!("irregular timestamp {t}: expected {:.2} after {p}", p + step),
                ));
            }
        }
        prev_t = Some(t);
        for c in 0..CHANNELS {
            let v: f64 = number(path, *line, CHANNEL_NAMES[c], &rec[c + 1])?;
            if !v.is_finite() {
                return Err(parse_err(path, *line, format!("column {}: non-finite value", CHANNEL_NAMES[c])));
            }
            samples[[i, c]] = v;
        }
        if let Some(l) = labels.as_mut() {
            let id = vocab
                .require(&rec[CHANNELS + 1])
                .map_err(|e| parse_err(path, *line, e.to_string()))?;
            l.push(id);
        }
    }
    let subject = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    ImuSession::new(subject, samples, labels)
}

pub fn session_csv_string(session: &ImuSession, vocab: &ClassVocabulary) -> Result<String> {
    let mut out = String::with_capacity(session.len() * 64);
    out.push_str(SESSION_HEADER);
    if session.labels.is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for (i, row) in session.samples.rows().into_iter().enumerate() {
        write!(out, "{}", format_sig9(i as f64 / SAMPLE_RATE_HZ)).expect("string write");
        for v in row {
            write!(out, ",{}", format_sig9(*v)).expect("string write");
        }
        if let Some(labels) = &session.labels {
            let name = vocab
                .name(labels[i])
                .ok_or_else(|| Error::invalid(format!("label {} outside vocabulary", labels[i])))?;
            write!(out, ",{name}").expect("string write");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_session_csv(path: &Path, session: &ImuSession, vocab: &ClassVocabulary) -> Result<()> {
    write_atomic(path, session_csv_string(session, vocab)?.as_bytes())
}

fn validate_segments(path: &Path, segs: &[(usize, Segment)], len: Option<usize>) -> Result<()> {
    let mut sorted: Vec<&(usize, Segment)> = segs.iter().collect();
    sorted.sort_by_key(|(_, s)| (s.start, s.end));
    for w in sorted.windows(2) {
        if w[1].1.start < w[0].1.end {
            return Err(parse_err(
                path,
                w[1].0,
                format!(
                    "segment [{}, {}) overlaps [{}, {}) from line {}",
                    w[1].1.start, w[1].1.end, w[0].1.start, w[0].1.end, w[0].0
                ),
            ));
        }
    }
    if let Some(n) = len {
        if let Some((line, s)) = segs.iter().find(|(_, s)| s.end > n) {
            return Err(parse_err(path, *line, format!("segment end {} beyond session length {n}", s.end)));
        }
    }
    Ok(())
}

fn parse_interval(path: &Path, line: usize, start: &str, end: &str) -> Result<(usize, usize)> {
    let s: usize = number(path, line, "start_sample", start)?;
    let e: usize = number(path, line, "end_sample", end)?;
    if e <= s {
        return Err(parse_err(path, line, format!("reversed or empty interval [{s}, {e})")));
    }
    Ok((s, e))
}

fn class_of(path: &Path, line: usize, vocab: &ClassVocabulary, name: &str) -> Result<usize> {
    let id = vocab.require(name).map_err(|e| parse_err(path, line, e.to_string()))?;
    if id == crate::segmentation::BACKGROUND {
        return Err(parse_err(path, line, "annotations cannot use the background class"));
    }
    Ok(id)
}

/// Reads `start_sample,end_sample,label` rows; `session_len` bounds the
/// segments when known.
pub fn read_annotations(path: &Path, vocab: &ClassVocabulary, session_len: Option<usize>) -> Result<Vec<Segment>> {
    let rows = records(path)?;
    check_header(path, rows.first(), &ANNOTATION_HEADER.split(',').collect::<Vec<_>>())?;
    let mut segs = Vec::new();
    for (line, rec) in &rows[1..] {
        if rec.len() != 3 {
            return Err(parse_err(path, *line, format!("expected 3 fields, found {}", rec.len())));
        }
        let (s, e) = parse_interval(path, *line, &rec[0], &rec[1])?;
        let class = class_of(path, *line, vocab, &rec[2])?;
        segs.push((*line, Segment::new(s, e, class)));
    }
    validate_segments(path, &segs, session_len)?;
    let mut out: Vec<Segment> = segs.into_iter().map(|(_, s)| s).collect();
    out.sort();
    Ok(out)
}

pub fn write_annotations(path: &Path, segments: &[Segment], vocab: &ClassVocabulary) -> Result<()> {
    let mut out = format!("{ANNOTATION_HEADER}\n");
    for s in segments {
        let name = vocab
            .name(s.class_id)
            .ok_or_else(|| Error::invalid(format!("class {} outside vocabulary", s.class_id)))?;
        writeln!(out, "{},{},{name}", s.start, s.end).expect("string write");
    }
    write_atomic(path, out.as_bytes())
}

/// Reads `subject_id,start_sample,end_sample,label,height_m` rows.
pub fn read_heights(path: &Path, vocab: &ClassVocabulary) -> Result<Vec<HeightRecord>> {
    let rows = records(path)?;
    check_header(path, rows.first(), &HEIGHTS_HEADER.split(',').collect::<Vec<_>>())?;
    let mut out = Vec::new();
    let mut by_subject: std::collections::BTreeMap<String, Vec<(usize, Segment)>> = Default::default();
    for (line, rec) in &rows[1..] {
        if rec.len() != 5 {
            return Err(parse_err(path, *line, format!("expected 5 fields, found {}", rec.len())));
        }
        let (s, e) = parse_interval(path, *line, &rec[1], &rec[2])?;
        let class = class_of(path, *line, vocab, &rec[3])?;
        if !vocab.is_eligible(class) {
            return Err(parse_err(path, *line, format!("class {} carries no height", &rec[3])));
        }
        let h: f64 = number(path, *line, "height_m", &rec[4])?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(parse_err(path, *line, format!("height_m must be positive, got {h}")));
        }
        let seg = Segment::new(s, e, class);
        by_subject.entry(rec[0].to_string()).or_default().push((*line, seg));
        out.push(HeightRecord {
            subject_id: rec[0].to_string(),
            segment: seg,
            height_m: h,
        });
    }
    for segs in by_subject.values() {
        validate_segments(path, segs, None)?;
    }
    Ok(out)
}

pub fn write_heights(path: &Path, records: &[HeightRecord], vocab: &ClassVocabulary) -> Result<()> {
    let mut out = format!("{HEIGHTS_HEADER}\n");
    for r in records {
        let name = vocab
            .name(r.segment.class_id)
            .ok_or_else(|| Error::invalid(format!("class {} outside vocabulary", r.segment.class_id)))?;
        writeln!(
            out,
            "{},{},{},{name},{}",
            r.subject_id,
            r.segment.start,
            r.segment.end,
            format_sig9(r.height_m)
        )
        .expect("string write");
    }
    write_atomic(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn three_row_session() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "S01.csv",
            "t,ax,ay,az,gx,gy,gz,label\n0,0,1,0,0,0,0,NULL\n0.01,0.1,1.1,0,2,0,0,CMJ\n0.02,0,0.9,0,0,0,-1,CMJ\n",
        );
        let s = read_session_csv(&p, &ClassVocabulary::default()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.subject_id, "S01");
        assert_eq!(s.labels, Some(vec![0, 1, 1]));
        assert_eq!(s.samples[[1, 3]], 2.0);
    }

    #[test]
    fn header_swap_names_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "s.csv", "t,ax,az,ay,gx,gy,gz\n0,0,1,0,0,0,0\n");
        let err = read_session_csv(&p, &ClassVocabulary::default()).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(msg.contains("\"az\"") && msg.contains("column 3"), "{msg}");
    }

    #[test]
    fn five_channel_session_is_channel_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "s.csv", "t,ax,ay,az,gx,gy\n0,0,1,0,0,0\n");
        let msg = read_session_csv(&p, &ClassVocabulary::default()).unwrap_err().to_string();
        assert!(msg.contains("channel mismatch"), "{msg}");
    }

    #[test]
    fn bad_cells_and_timestamps() {
        let dir = tempfile::tempdir().unwrap();
        let v = ClassVocabulary::default();
        let p = write(dir.path(), "a.csv", "t,ax,ay,az,gx,gy,gz\n0,0,1,0,0,0,0\n0.01,x,1,0,0,0,0\n");
        let err = read_session_csv(&p, &v).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let p = write(dir.path(), "b.csv", "t,ax,ay,az,gx,gy,gz\n0,0,1,0,0,0,0\n0.02,0,1,0,0,0,0\n");
        let err = read_session_csv(&p, &v).unwrap_err();
        assert!(err.to_string().contains("irregular timestamp"));
        let p = write(dir.path(), "c.csv", "t,ax,ay,az,gx,gy,gz,label\n0,0,1,0,0,0,0,Jump\n");
        assert!(read_session_csv(&p, &v).unwrap_err().to_string().contains("CMJ"));
    }

    #[test]
    fn read_write_read_fixpoint() {
        let dir = tempfile::tempdir().unwrap();
        let v = ClassVocabulary::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let samples = Array2::from_shape_fn((10_000, 6), |_| rng.gen_range(-400.0..400.0));
        let labels: Vec<usize> = (0..10_000).map(|t| (t / 97) % 8).collect();
        let s = ImuSession::new("rt", samples, Some(labels)).unwrap();
        let p1 = dir.path().join("rt.csv");
        write_session_csv(&p1, &s, &v).unwrap();
        let first = read_session_csv(&p1, &v).unwrap();
        let p2 = dir.path().join("rt2.csv");
        write_session_csv(&p2, &first, &v).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let mut second = read_session_csv(&p2, &v).unwrap();
        second.subject_id = first.subject_id.clone();
        assert_eq!(first, second);
        for (a, b) in s.samples.iter().zip(first.samples.iter()) {
            assert!((a - b).abs() <= 1e-8 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn annotations() {
        let dir = tempfile::tempdir().unwrap();
        let v = ClassVocabulary::default();
        let p = write(dir.path(), "a.csv", "start_sample,end_sample,label\n");
        assert!(read_annotations(&p, &v, None).unwrap().is_empty());
        let p = write(dir.path(), "b.csv", "start_sample,end_sample,label\n10,20,CMJ\n15,30,Block\n");
        let err = read_annotations(&p, &v, None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let p = write(dir.path(), "c.csv", "start_sample,end_sample,label\n20,10,CMJ\n");
        assert!(read_annotations(&p, &v, None).is_err());
        let p = write(dir.path(), "d.csv", "start_sample,end_sample,label\n20,30,Spike\n");
        assert!(read_annotations(&p, &v, None).unwrap_err().to_string().contains("Smash"));
        let p = write(dir.path(), "e.csv", "start_sample,end_sample,label\n40,50,Dive\n10,20,CMJ\n");
        let segs = read_annotations(&p, &v, Some(60)).unwrap();
        assert_eq!(segs, vec![Segment::new(10, 20, 1), Segment::new(40, 50, 6)]);
        assert!(read_annotations(&p, &v, Some(45)).is_err());
        let out = dir.path().join("f.csv");
        write_annotations(&out, &segs, &v).unwrap();
        assert_eq!(read_annotations(&out, &v, None).unwrap(), segs);
    }

    #[test]
    fn heights() {
        let dir = tempfile::tempdir().unwrap();
        let v = ClassVocabulary::default();
        let p = write(dir.path(), "h.csv", "subject_id,start_sample,end_sample,label,height_m\nS01,10,90,CMJ,0.42\nS02,10,90,OS,0.3\n");
        let h = read_heights(&p, &v).unwrap();
        assert_eq!(h.len(), 2);
        assert_eq!(h[1].segment.class_id, 4);
        let p = write(dir.path(), "z.csv", "subject_id,start_sample,end_sample,label,height_m\nS01,10,90,CMJ,0\n");
        assert!(read_heights(&p, &v).unwrap_err().to_string().contains("positive"));
        let p = write(dir.path(), "q.csv", "subject_id,start_sample,end_sample,label,height_m\nS01,10,90,Squat,0.2\n");
        assert!(read_heights(&p, &v).is_err());
        let out = dir.path().join("o.csv");
        write_heights(&out, &h, &v).unwrap();
        assert_eq!(read_heights(&out, &v).unwrap(), h);
    }
}
