//! Shot files: `shot_index,prep_label,i,q,assigned_label`.

use std::io::Write;
use std::path::Path;

use crate::device::DimonLevel;
use crate::error::{Error, Result};

pub const SHOT_HEADER: &str = "shot_index,prep_label,i,q,assigned_label";

#[derive(Debug, Clone, PartialEq)]
pub struct ShotRecord {
    pub shot_index: u64,
    /// A level label (`"01"`) or a superposition tag such as `"+L"`.
    pub prep_label: String,
    pub i: f64,
    pub q: f64,
    pub assigned_label: Option<DimonLevel>,
}

pub fn write_shots_csv(path: &Path, shots: &[ShotRecord]) -> Result<()> {
    let mut body = String::with_capacity(48 * (shots.len() + 1));
    body.push_str(SHOT_HEADER);
    body.push('\n');
    for s in shots {
        let assigned = s.assigned_label.map(|l| l.to_string()).unwrap_or_default();
        body.push_str(&format!("{},{},{},{},{}\n", s.shot_index, s.prep_label, s.i, s.q, assigned));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_shots_csv(path: &Path) -> Result<Vec<ShotRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_shots(path, &text)
}

fn parse_shots(path: &Path, text: &str) -> Result<Vec<ShotRecord>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line: line as u64,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SHOT_HEADER => {}
        Some((_, h)) => return Err(err(1, format!("expected header '{SHOT_HEADER}', found '{h}'"))),
        None => return Err(err(1, "empty file".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(err(n, format!("expected 5 fields, found {}", f.len())));
        }
        let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| err(n, format!("bad {what} '{s}'")));
        out.push(ShotRecord {
            shot_index: f[0].parse().map_err(|_| err(n, format!("bad shot_index '{}'", f[0])))?,
            prep_label: f[1].to_string(),
            i: num(f[2], "i")?,
            q: num(f[3], "q")?,
            assigned_label: if f[4].is_empty() {
                None
            } else {
                Some(f[4].parse().map_err(|_| err(n, format!("bad assigned_label '{}'", f[4])))?)
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let shots = vec![
            ShotRecord {
                shot_index: 0,
                prep_label: "01".into(),
                i: -1.25,
                q: 3.0e-7,
                assigned_label: Some(DimonLevel::L01),
            },
            ShotRecord {
                shot_index: 1,
                prep_label: "+L".into(),
                i: 0.1,
                q: 0.2,
                assigned_label: None,
            },
        ];
        write_shots_csv(&p, &shots).unwrap();
        assert_eq!(read_shots_csv(&p).unwrap(), shots);
    }

    #[test]
    fn reports_line_number() {
        let text = format!("{SHOT_HEADER}\n0,01,1.0,2.0,01\n1,01,oops,2.0,\n");
        match parse_shots(Path::new("x.csv"), &text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
