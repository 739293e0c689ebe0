//! On-disk formats: the event binary and the ground-truth attitude CSV.
//!
//! Event binary layout (little-endian):
//! - magic `EBS1` (4 bytes)
//! - `u32` sensor width, `u32` sensor height
//! - `u64` event count
//! - count records of 16 bytes each: `u16 x`, `u16 y`, `u8 polarity`
//!   (1 = positive, 0 = negative), 3 reserved zero bytes, `u64 t` (µs).
//!
//! Truth CSV: header `t_us,qw,qx,qy,qz,wx,wy,wz` with ω in rad/s in the
//! camera frame; timestamps strictly increasing.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

use crate::event::{Event, EventStream, Polarity};
use crate::geometry::UnitQuat;
use crate::trajectory::{Trajectory, TrajectorySample};

const MAGIC: [u8; 4] = *b"EBS1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected `EBS1`")]
    BadMagic,
    #[error("truncated event record: last whole record has index {last_whole_index}")]
    TruncatedRecord { last_whole_index: i64 },
    #[error("malformed event file: {0}")]
    Malformed(String),
    #[error("truth parse error at line {line}: {message}")]
    TruthParse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Write an event stream in the binary format.
pub fn write_events(stream: &EventStream, path: &Path) -> Result<(), FormatError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    out.write_all(&MAGIC)?;
    out.write_all(&stream.width.to_le_bytes())?;
    out.write_all(&stream.height.to_le_bytes())?;
    out.write_all(&(stream.events.len() as u64).to_le_bytes())?;
    let mut record = [0u8; 16];
    for e in &stream.events {
        record[0..2].copy_from_slice(&e.x.to_le_bytes());
        record[2..4].copy_from_slice(&e.y.to_le_bytes());
        record[4] = e.polarity.to_byte();
        record[5..8].fill(0);
        record[8..16].copy_from_slice(&e.t_us.to_le_bytes());
        out.write_all(&record)?;
    }
    out.flush()?;
    Ok(())
}

/// Read an event stream; the inverse of [`write_events`], bit-exact.
pub fn read_events(path: &Path) -> Result<EventStream, FormatError> {
    let mut reader = BufReader::new(std::fs::File::open(path)?);
    let mut header = [0u8; 20];
    reader
        .read_exact(&mut header)
        .map_err(|_| FormatError::Malformed("file shorter than header".into()))?;
    if header[0..4] != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let width = u32::from_le_bytes(header[4..8].try_into().unwrap());
    let height = u32::from_le_bytes(header[8..12].try_into().unwrap());
    let count = u64::from_le_bytes(header[12..20].try_into().unwrap());

    let mut events = Vec::with_capacity(count.min(1 << 28) as usize);
    let mut record = [0u8; 16];
    for i in 0..count {
        if let Err(e) = reader.read_exact(&mut record) {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                return Err(FormatError::TruncatedRecord { last_whole_index: i as i64 - 1 });
            }
            return Err(e.into());
        }
        let x = u16::from_le_bytes(record[0..2].try_into().unwrap());
        let y = u16::from_le_bytes(record[2..4].try_into().unwrap());
        let polarity = Polarity::from_byte(record[4])
            .ok_or_else(|| FormatError::Malformed(format!("bad polarity byte in record {i}")))?;
        let t_us = u64::from_le_bytes(record[8..16].try_into().unwrap());
        events.push(Event { x, y, polarity, t_us });
    }
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(FormatError::Malformed("trailing bytes after last record".into()));
    }
    Ok(EventStream { width, height, events })
}

/// Write a trajectory as the truth CSV.
pub fn write_truth(traj: &Trajectory, path: &Path) -> Result<(), FormatError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t_us,qw,qx,qy,qz,wx,wy,wz")?;
    for s in traj.samples() {
        let [w, x, y, z] = s.q.wxyz();
        writeln!(
            out,
            "{},{:.15},{:.15},{:.15},{:.15},{:.12},{:.12},{:.12}",
            s.t_us, w, x, y, z, s.omega.x, s.omega.y, s.omega.z
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Read a truth CSV back into a trajectory.
pub fn read_truth(path: &Path) -> Result<Trajectory, FormatError> {
    let content = std::fs::read_to_string(path)?;
    let mut samples: Vec<TrajectorySample> = Vec::new();
    let mut header_seen = false;
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if !header_seen {
            if t != "t_us,qw,qx,qy,qz,wx,wy,wz" {
                return Err(FormatError::TruthParse {
                    line: line_no,
                    message: format!("expected truth header, got `{t}`"),
                });
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = t.split(',').collect();
        if fields.len() != 8 {
            return Err(FormatError::TruthParse {
                line: line_no,
                message: format!("expected 8 fields, got {}", fields.len()),
            });
        }
        let num = |i: usize| -> Result<f64, FormatError> {
            fields[i].trim().parse().map_err(|e| FormatError::TruthParse {
                line: line_no,
                message: format!("bad field {}: {e}", i + 1),
            })
        };
        let t_us: u64 = fields[0].trim().parse().map_err(|e| FormatError::TruthParse {
            line: line_no,
            message: format!("bad t_us: {e}"),
        })?;
        if let Some(prev) = samples.last() {
            if t_us <= prev.t_us {
                return Err(FormatError::TruthParse {
                    line: line_no,
                    message: format!("non-monotone timestamp {t_us}"),
                });
            }
        }
        samples.push(TrajectorySample {
            t_us,
            q: UnitQuat::new(num(1)?, num(2)?, num(3)?, num(4)?),
            omega: Vector3::new(num(5)?, num(6)?, num(7)?),
        });
    }
    Trajectory::new(samples).map_err(|e| FormatError::TruthParse {
        line: 0,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CelestialAttitude;
    use crate::trajectory::{gen_trajectory, TrajectoryProfile};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn temp(name: &str) -> std::path::PathBuf {
        std::env::temp_dir().join(format!("evstar-format-{}-{name}", std::process::id()))
    }

    fn random_stream(n: usize, seed: u64) -> EventStream {
        let mut rng = StdRng::seed_from_u64(seed);
        let events = (0..n)
            .map(|_| Event {
                x: rng.random_range(0..1280),
                y: rng.random_range(0..720),
                polarity: if rng.random::<bool>() { Polarity::Positive } else { Polarity::Negative },
                t_us: rng.random_range(0..60_000_000),
            })
            .collect();
        EventStream::new(1280, 720, events)
    }

    #[test]
    fn event_round_trip_is_byte_identical() {
        let stream = random_stream(100_000, 5);
        let p1 = temp("events-a.ebs");
        let p2 = temp("events-b.ebs");
        write_events(&stream, &p1).unwrap();
        let back = read_events(&p1).unwrap();
        assert_eq!(back, stream);
        write_events(&back, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        std::fs::remove_file(p1).ok();
        std::fs::remove_file(p2).ok();
    }

    #[test]
    fn bad_magic_rejected() {
        let p = temp("badmagic.ebs");
        std::fs::write(&p, b"NOPE````````````````````").unwrap();
        match read_events(&p) {
            Err(FormatError::BadMagic) => {}
            other => panic!("expected BadMagic, got {other:?}"),
        }
        std::fs::remove_file(p).ok();
    }

    #[test]
    fn truncated_record_reports_last_whole_index() {
        let stream = random_stream(6, 7);
        let p = temp("truncated.ebs");
        write_events(&stream, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        // Chop into the middle of the final record.
        std::fs::write(&p, &bytes[..bytes.len() - 7]).unwrap();
        match read_events(&p) {
            Err(FormatError::TruncatedRecord { last_whole_index }) => {
                assert_eq!(last_whole_index, 4)
            }
            other => panic!("expected TruncatedRecord, got {other:?}"),
        }
        std::fs::remove_file(p).ok();
    }

    #[test]
    fn truth_round_trip() {
        let traj = gen_trajectory(
            &TrajectoryProfile::SmoothSine { amp_deg_s: 1.0, period_s: 5.0 },
            &CelestialAttitude::new(33.0, -12.0, 7.0),
            3.0,
            0.01,
        );
        let p = temp("truth.csv");
        write_truth(&traj, &p).unwrap();
        let back = read_truth(&p).unwrap();
        assert_eq!(back.samples().len(), traj.samples().len());
        for (a, b) in traj.samples().iter().zip(back.samples()) {
            assert_eq!(a.t_us, b.t_us);
            assert!(a.q.angle_to(&b.q) < 1e-9);
            assert!((a.q.norm() - 1.0).abs() < 1e-9);
            assert!((a.omega - b.omega).norm() < 1e-9);
        }
        std::fs::remove_file(p).ok();
    }

    #[test]
    fn truth_rejects_non_monotone_and_empty() {
        let p = temp("truth-bad.csv");
        std::fs::write(
            &p,
            "t_us,qw,qx,qy,qz,wx,wy,wz\n1000,1,0,0,0,0,0,0\n500,1,0,0,0,0,0,0\n",
        )
        .unwrap();
        match read_truth(&p) {
            Err(FormatError::TruthParse { line: 3, .. }) => {}
            other => panic!("expected parse error on line 3, got {other:?}"),
        }
        std::fs::write(&p, "").unwrap();
        assert!(matches!(read_truth(&p), Err(FormatError::TruthParse { .. })));
        std::fs::remove_file(p).ok();
    }
}
