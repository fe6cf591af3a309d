//! Event files.
//!
//! Text: optional `# width=W height=H duration_us=D` metadata line, optional
//! `t_us,x,y,p` header, then one `t,x,y,p` record per line with `p` in {0,1}
//! (0 is OFF). Binary: `SPKEVT01`, u32 width, u32 height, u64 count, then
//! `count` records of (u64 t, u16 x, u16 y, i8 p), all little-endian.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{Event, EventStream, Polarity};
use crate::error::{Error, Result};
use crate::util::write_atomic;

pub const BINARY_MAGIC: &[u8; 8] = b"SPKEVT01";
const CSV_HEADER: &str = "t_us,x,y,p";
const RECORD_LEN: usize = 13;

pub fn write_csv<W: Write>(stream: &EventStream, mut out: W) -> Result<()> {
    writeln!(
        out,
        "# width={} height={} duration_us={}",
        stream.width(),
        stream.height(),
        stream.duration_us()
    )?;
    writeln!(out, "{CSV_HEADER}")?;
    for e in stream.events() {
        let p = u8::from(e.p == Polarity::On);
        writeln!(out, "{},{},{},{}", e.t, e.x, e.y, p)?;
    }
    Ok(())
}

/// Parses the text format. Without a metadata line the resolution is the
/// bounding box of the events and the duration is the last timestamp.
pub fn read_csv<R: Read>(input: R, origin: &Path) -> Result<EventStream> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut dims: Option<(u32, u32, u64)> = None;
    let mut events = Vec::new();
    let mut last_t = 0u64;

    for (idx, line) in BufReader::new(input).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line == CSV_HEADER {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some(d) = parse_metadata(meta) {
                dims = Some(d);
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(parse_err(
                line_no,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let num = |i: usize, name: &str| -> Result<u64> {
            fields[i].parse::<u64>().map_err(|_| {
                parse_err(
                    line_no,
                    format!("{name} `{}` is not a non-negative integer", fields[i]),
                )
            })
        };
        let t = num(0, "t")?;
        let x = num(1, "x")?;
        let y = num(2, "y")?;
        let p = match num(3, "p")? {
            0 => Polarity::Off,
            1 => Polarity::On,
            other => {
                return Err(Error::Validation(format!(
                    "{}:{line_no}: polarity must be 0 or 1, got {other}",
                    origin.display()
                )))
            }
        };
        if x > u16::MAX as u64 || y > u16::MAX as u64 {
            return Err(parse_err(
                line_no,
                format!("coordinate ({x}, {y}) exceeds 16 bits"),
            ));
        }
        if t < last_t {
            return Err(Error::Validation(format!(
                "{}:{line_no}: timestamp {t} precedes previous {last_t}",
                origin.display()
            )));
        }
        last_t = t;
        events.push(Event::new(t, x as u16, y as u16, p));
    }

    let (w, h, d) = match dims {
        Some(d) => d,
        None => {
            let w = events.iter().map(|e| e.x as u32 + 1).max().unwrap_or(1);
            let h = events.iter().map(|e| e.y as u32 + 1).max().unwrap_or(1);
            (w, h, last_t)
        }
    };
    EventStream::new(w, h, d, events)
}

fn parse_metadata(meta: &str) -> Option<(u32, u32, u64)> {
    let (mut w, mut h, mut d) = (None, None, None);
    for kv in meta.split_whitespace() {
        let (k, v) = kv.split_once('=')?;
        match k {
            "width" => w = v.parse().ok(),
            "height" => h = v.parse().ok(),
            "duration_us" => d = v.parse().ok(),
            _ => {}
        }
    }
    Some((w?, h?, d.unwrap_or(0)))
}

pub fn write_binary<W: Write>(stream: &EventStream, mut out: W) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + stream.len() * RECORD_LEN);
    buf.extend_from_slice(BINARY_MAGIC);
    buf.extend_from_slice(&stream.width().to_le_bytes());
    buf.extend_from_slice(&stream.height().to_le_bytes());
    buf.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    for e in stream.events() {
        buf.extend_from_slice(&e.t.to_le_bytes());
        buf.extend_from_slice(&e.x.to_le_bytes());
        buf.extend_from_slice(&e.y.to_le_bytes());
        buf.push(e.p.sign() as u8);
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Binary streams carry no duration; it is taken as the last timestamp.
pub fn read_binary(bytes: &[u8]) -> Result<EventStream> {
    if bytes.len() < 24 {
        return Err(Error::Truncated(format!(
            "event header needs 24 bytes, have {}",
            bytes.len()
        )));
    }
    if &bytes[..8] != BINARY_MAGIC {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(BINARY_MAGIC).into_owned(),
            found: String::from_utf8_lossy(&bytes[..8]).into_owned(),
        });
    }
    let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let h = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let body = &bytes[24..];
    if body.len() != count.saturating_mul(RECORD_LEN) {
        return Err(Error::Truncated(format!(
            "header declares {count} events ({} bytes), body has {} bytes",
            count.saturating_mul(RECORD_LEN),
            body.len()
        )));
    }
    let mut events = Vec::with_capacity(count);
    let mut last_t = 0;
    for (i, rec) in body.chunks_exact(RECORD_LEN).enumerate() {
        let t = u64::from_le_bytes(rec[0..8].try_into().unwrap());
        let x = u16::from_le_bytes(rec[8..10].try_into().unwrap());
        let y = u16::from_le_bytes(rec[10..12].try_into().unwrap());
        let p = Polarity::from_sign(rec[12] as i8)
            .map_err(|e| Error::Validation(format!("record {i}: {e}")))?;
        if t < last_t {
            return Err(Error::Validation(format!(
                "record {i}: timestamp {t} precedes previous {last_t}"
            )));
        }
        last_t = t;
        events.push(Event::new(t, x, y, p));
    }
    EventStream::new(w, h, last_t, events)
}

/// Reads either format, detected from the leading magic bytes.
pub fn read_events(path: &Path) -> Result<EventStream> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(BINARY_MAGIC) {
        read_binary(&bytes)
    } else {
        read_csv(bytes.as_slice(), path)
    }
}

/// Writes binary for a `.bin` extension and text otherwise.
pub fn write_events(stream: &EventStream, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    if path.extension().is_some_and(|e| e == "bin") {
        write_binary(stream, &mut buf)?;
    } else {
        write_csv(stream, &mut buf)?;
    }
    write_atomic(path, &buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<EventStream> {
        read_csv(text.as_bytes(), Path::new("mem.csv"))
    }

    #[test]
    fn record_line_decodes() {
        let s = parse("100,3,2,1\n").unwrap();
        assert_eq!(s.events(), &[Event::new(100, 3, 2, Polarity::On)]);
        assert_eq!((s.width(), s.height()), (4, 3));
    }

    #[test]
    fn header_is_optional() {
        let s = parse("t_us,x,y,p\n100,3,2,0\n").unwrap();
        assert_eq!(s.events()[0].p, Polarity::Off);
    }

    #[test]
    fn bad_polarity_is_a_validation_error() {
        let err = parse("100,3,2,2\n").unwrap_err();
        assert!(
            matches!(err, Error::Validation(ref m) if m.contains("polarity")),
            "{err}"
        );
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse("t_us,x,y,p\n1,0,0,1\n2,zero,0,1\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse("1,0,0\n").unwrap_err(),
            Error::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn decreasing_time_is_a_validation_error() {
        let err = parse("5,0,0,1\n4,0,0,1\n").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn binary_magic_and_truncation() {
        let s = EventStream::new(4, 4, 9, vec![Event::new(9, 1, 1, Polarity::Off)]).unwrap();
        let mut buf = Vec::new();
        write_binary(&s, &mut buf).unwrap();
        assert_eq!(buf.len(), 24 + 13);
        assert_eq!(read_binary(&buf).unwrap(), s);
        assert!(matches!(
            read_binary(&buf[..30]).unwrap_err(),
            Error::Truncated(_)
        ));
        buf[0] = b'X';
        assert!(matches!(
            read_binary(&buf).unwrap_err(),
            Error::BadMagic { .. }
        ));
    }

    #[test]
    fn file_round_trip_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let s = EventStream::new(
            6,
            5,
            400,
            vec![
                Event::new(3, 5, 4, Polarity::On),
                Event::new(3, 0, 0, Polarity::Off),
                Event::new(400, 2, 1, Polarity::On),
            ],
        )
        .unwrap();
        for name in ["ev.csv", "ev.bin"] {
            let p = dir.path().join(name);
            write_events(&s, &p).unwrap();
            assert_eq!(read_events(&p).unwrap(), s, "{name}");
        }
    }

    proptest! {
        #[test]
        fn csv_round_trip(w in 1u32..40, h in 1u32..40, raw in prop::collection::vec((0u64..10_000, any::<u16>(), any::<u16>(), any::<bool>()), 0..50), extra in 0u64..100) {
            let evs: Vec<Event> = raw.into_iter().map(|(t, x, y, on)| {
                Event::new(t, x % w as u16, y % h as u16, if on { Polarity::On } else { Polarity::Off })
            }).collect();
            let last = evs.iter().map(|e| e.t).max().unwrap_or(0);
            let s = EventStream::new(w, h, last + extra, evs).unwrap();
            let mut buf = Vec::new();
            write_csv(&s, &mut buf).unwrap();
            prop_assert_eq!(read_csv(buf.as_slice(), Path::new("p")).unwrap(), s.clone());

            let mut bin = Vec::new();
            write_binary(&s, &mut bin).unwrap();
            let b = read_binary(&bin).unwrap();
            prop_assert_eq!(b.events(), s.events());
            prop_assert_eq!((b.width(), b.height()), (w, h));
        }
    }
}
