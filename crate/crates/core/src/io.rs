//! Readers and writers for the scan JSON, spectrum CSV and AFM text formats.
//!
//! Every writer goes through [`write_atomic`]: output lands in a temporary
//! file next to the target and is renamed into place, so a failed run never
//! leaves a partial file behind.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AfmMap, PleScan, ScanFile, Spectrum, DEFAULT_RESOLUTION_NM};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    write_atomic(path, to_json_string(value).as_bytes())
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn parse_scan(text: &str) -> Result<PleScan> {
    let file: ScanFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("scan JSON: {e}")))?;
    file.into_scan()
}

pub fn read_scan(path: &Path) -> Result<PleScan> {
    parse_scan(&read_to_string(path)?)
}

pub fn write_scan(scan: &PleScan, path: &Path) -> Result<()> {
    write_json(scan, path)
}

pub fn parse_spectrum(text: &str) -> Result<Spectrum> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(format!("spectrum CSV header: {e}")))?;
    if headers.len() != 2 || &headers[0] != "wavelength_nm" || &headers[1] != "intensity" {
        return Err(Error::Parse(format!(
            "spectrum CSV header must be `wavelength_nm,intensity`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut wavelength = Vec::new();
    let mut intensity = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("spectrum CSV row {}: {e}", row + 2)))?;
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("spectrum CSV row {}: `{s}`: {e}", row + 2)))
        };
        wavelength.push(parse(&record[0])?);
        intensity.push(parse(&record[1])?);
    }
    Spectrum::new(wavelength, intensity, DEFAULT_RESOLUTION_NM)
}

pub fn read_spectrum(path: &Path) -> Result<Spectrum> {
    parse_spectrum(&read_to_string(path)?)
}

pub fn format_spectrum(spectrum: &Spectrum) -> String {
    let mut out = String::from("wavelength_nm,intensity\n");
    for (w, i) in spectrum.wavelength().iter().zip(spectrum.intensity()) {
        writeln!(out, "{w},{i}").unwrap();
    }
    out
}

pub fn write_spectrum(spectrum: &Spectrum, path: &Path) -> Result<()> {
    write_atomic(path, format_spectrum(spectrum).as_bytes())
}

pub fn parse_afm(text: &str) -> Result<AfmMap> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("AFM file is empty".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(Error::Parse(format!(
            "AFM header must be `nx ny dx_um dy_um`, got `{header}`"
        )));
    }
    let dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|e| Error::Parse(format!("AFM header `{s}`: {e}")))
    };
    let pitch = |s: &str| {
        s.parse::<f64>()
            .map_err(|e| Error::Parse(format!("AFM header `{s}`: {e}")))
    };
    let (nx, ny) = (dim(fields[0])?, dim(fields[1])?);
    let (dx, dy) = (pitch(fields[2])?, pitch(fields[3])?);

    let mut heights = Vec::with_capacity(nx.saturating_mul(ny).min(1 << 24));
    let mut n_rows = 0;
    for (r, line) in lines.enumerate() {
        let before = heights.len();
        for tok in line.split_whitespace() {
            let h = tok
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("AFM row {}: `{tok}`: {e}", r + 1)))?;
            heights.push(h);
        }
        if heights.len() - before != nx {
            return Err(Error::Parse(format!(
                "AFM row {} has {} values, header says {nx}",
                r + 1,
                heights.len() - before
            )));
        }
        n_rows += 1;
    }
    if n_rows != ny {
        return Err(Error::Parse(format!("AFM file has {n_rows} rows, header says {ny}")));
    }
    AfmMap::new(nx, ny, dx, dy, heights)
}

pub fn read_afm(path: &Path) -> Result<AfmMap> {
    parse_afm(&read_to_string(path)?)
}

pub fn format_afm(map: &AfmMap) -> String {
    let mut out = format!("{} {} {} {}\n", map.nx(), map.ny(), map.dx_um(), map.dy_um());
    for row in map.rows() {
        let mut first = true;
        for h in row {
            if !first {
                out.push(' ');
            }
            write!(out, "{h}").unwrap();
            first = false;
        }
        out.push('\n');
    }
    out
}

pub fn write_afm(map: &AfmMap, path: &Path) -> Result<()> {
    write_atomic(path, format_afm(map).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PleLine, ScanMeta};

    fn two_line_scan() -> PleScan {
        let v: Vec<f64> = (0..10).map(|i| -0.5 + 0.1 * i as f64 + 1e-17).collect();
        let lines = vec![
            PleLine::new(0, 0.0, v.clone(), (0..10).map(|i| i as f64 * 1.1).collect()).unwrap(),
            PleLine::new(1, 2.5, v, vec![3.0; 10]).unwrap(),
        ];
        let mut meta = ScanMeta::new("D3");
        meta.excitation_power_nw = Some(12.5);
        PleScan::new(meta, lines).unwrap()
    }

    #[test]
    fn scan_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scan.json");
        let scan = two_line_scan();
        write_scan(&scan, &path).unwrap();
        let back = read_scan(&path).unwrap();
        assert_eq!(back.lines().len(), 2);
        assert_eq!(back, scan);
    }

    #[test]
    fn scan_with_non_monotone_voltage_names_field() {
        let text = r#"{"meta":{"region_id":"x","splitting_mhz":1000,"excitation_power_nw":null,"notes":null},
            "lines":[{"index":0,"t0_s":0,"voltage_v":[0,1,2,3,5,4,6,7],"counts":[0,0,0,0,0,0,0,0]}]}"#;
        match parse_scan(text).unwrap_err() {
            Error::Validation { field, .. } => assert_eq!(field, "voltage"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn malformed_scan_is_parse_error() {
        assert!(matches!(parse_scan("{\"meta\":").unwrap_err(), Error::Parse(_)));
        let empty = r#"{"meta":{"region_id":"x"},"lines":[]}"#;
        assert!(matches!(parse_scan(empty).unwrap_err(), Error::Validation { field: "lines", .. }));
    }

    #[test]
    fn meta_defaults_when_omitted() {
        let text = r#"{"meta":{"region_id":"x"},
            "lines":[{"index":0,"t0_s":0,"voltage_v":[0,1,2,3,4,5,6,7],"counts":[0,0,0,0,0,0,0,0]}]}"#;
        let scan = parse_scan(text).unwrap();
        assert_eq!(scan.meta().splitting_mhz, 1000.0);
        assert_eq!(scan.meta().notes, None);
    }

    #[test]
    fn write_to_unwritable_path_is_io_error() {
        let scan = two_line_scan();
        let err = write_scan(&scan, Path::new("/nonexistent-dir/sub/scan.json")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn spectrum_csv() {
        let s = parse_spectrum("wavelength_nm,intensity\n900.0,1\n900.5,2.5\n901,0\n").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.intensity()[1], 2.5);
        assert_eq!(s.resolution_nm(), DEFAULT_RESOLUTION_NM);
        assert_eq!(parse_spectrum(&format_spectrum(&s)).unwrap(), s);
        assert!(matches!(parse_spectrum("a,b\n1,2\n").unwrap_err(), Error::Parse(_)));
        assert!(matches!(
            parse_spectrum("wavelength_nm,intensity\n1,x\n").unwrap_err(),
            Error::Parse(_)
        ));
    }

    #[test]
    fn afm_text() {
        let text = "4 4 1.25 1.25\n1 2 3 4\n5 6 7 8\n9 10 11 12\n13 14 15 16\n";
        let m = parse_afm(text).unwrap();
        assert_eq!((m.nx(), m.ny()), (4, 4));
        assert_eq!(m.dx_um(), 1.25);
        assert_eq!(m.get(3, 0), 13.0);
        assert_eq!(parse_afm(&format_afm(&m)).unwrap(), m);
    }

    #[test]
    fn afm_row_count_mismatch() {
        let text = "4 4 1.25 1.25\n1 2 3 4\n5 6 7 8\n9 10 11 12\n";
        assert!(matches!(parse_afm(text).unwrap_err(), Error::Parse(_)));
        let text = "4 4 1.25 1.25\n1 2 3 4\n5 6 7\n9 10 11 12\n13 14 15 16\n";
        assert!(matches!(parse_afm(text).unwrap_err(), Error::Parse(_)));
    }
}
