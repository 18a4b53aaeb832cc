//! DFF ("Doppler Field File") container.
//!
//! Layout: `DFLD`, version byte (1), little-endian u32 header length, UTF-8
//! JSON header, then one `n_radial x n_angular` plane per listed channel in
//! header order (f32 LE for velocity and power, i8 for labels).

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{DopplerFrame, LabelMap, PolarGrid};
use crate::io::write_atomic;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"DFLD";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Velocity,
    Power,
    Labels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DffHeader {
    pub n_radial: usize,
    pub n_angular: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub v_nyquist: f64,
    pub channels: Vec<Channel>,
    pub wrapped: bool,
}

impl DffHeader {
    pub fn grid(&self) -> Result<PolarGrid> {
        PolarGrid::new(
            self.n_radial,
            self.n_angular,
            (self.r_min, self.r_max),
            (self.theta_min, self.theta_max),
        )
        .map_err(|e| Error::Format(format!("header grid: {e}")))
    }
}

/// Decoded DFF contents. Planes are present exactly when listed in `channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct DffRecord {
    pub header: DffHeader,
    pub velocity: Option<Array2<f32>>,
    pub power: Option<Array2<f32>>,
    pub labels: Option<LabelMap>,
}

impl DffRecord {
    pub fn from_frame<T: Scalar>(frame: &DopplerFrame<T>, labels: Option<&LabelMap>) -> Self {
        let g = frame.grid;
        let mut channels = vec![Channel::Velocity, Channel::Power];
        if labels.is_some() {
            channels.push(Channel::Labels);
        }
        DffRecord {
            header: DffHeader {
                n_radial: g.n_radial,
                n_angular: g.n_angular,
                r_min: g.r_min,
                r_max: g.r_max,
                theta_min: g.theta_min,
                theta_max: g.theta_max,
                v_nyquist: frame.nyquist_velocity.as_f32() as f64,
                channels,
                wrapped: frame.wrapped,
            },
            velocity: Some(frame.velocity.mapv(|v| v.as_f32())),
            power: Some(frame.power.mapv(|v| v.as_f32())),
            labels: labels.cloned(),
        }
    }

    /// Frame built from the velocity and power planes.
    pub fn to_frame<T: Scalar>(&self) -> Result<DopplerFrame<T>> {
        let grid = self.header.grid()?;
        let velocity = self
            .velocity
            .as_ref()
            .ok_or_else(|| Error::Format("missing velocity channel".into()))?;
        let power = self
            .power
            .as_ref()
            .ok_or_else(|| Error::Format("missing power channel".into()))?;
        DopplerFrame::new(
            grid,
            velocity.mapv(T::of_f32),
            power.mapv(T::of_f32),
            T::of_f32(self.header.v_nyquist as f32),
            self.header.wrapped,
        )
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let shape = (self.header.n_radial, self.header.n_angular);
        let json = serde_json::to_vec(&self.header)?;
        let len = u32::try_from(json.len()).map_err(|_| Error::Format("header too long".into()))?;
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(&json)?;
        for ch in &self.header.channels {
            match ch {
                Channel::Velocity | Channel::Power => {
                    let plane = if *ch == Channel::Velocity { &self.velocity } else { &self.power };
                    let plane = plane
                        .as_ref()
                        .ok_or_else(|| Error::Format(format!("{ch:?} listed but absent")))?;
                    check_shape(plane.dim(), shape)?;
                    let mut buf = Vec::with_capacity(plane.len() * 4);
                    for v in plane.iter() {
                        buf.extend_from_slice(&v.to_le_bytes());
                    }
                    w.write_all(&buf)?;
                }
                Channel::Labels => {
                    let labels = self
                        .labels
                        .as_ref()
                        .ok_or_else(|| Error::Format("labels listed but absent".into()))?;
                    check_shape(labels.dim(), shape)?;
                    let buf: Vec<u8> = labels.as_array().iter().map(|&l| l as u8).collect();
                    w.write_all(&buf)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 9];
        r.read_exact(&mut head).map_err(truncated)?;
        if &head[..4] != MAGIC {
            return Err(Error::Format("bad magic, not a DFF file".into()));
        }
        if head[4] != VERSION {
            return Err(Error::Format(format!("unsupported DFF version {}", head[4])));
        }
        let len = u32::from_le_bytes([head[5], head[6], head[7], head[8]]) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(truncated)?;
        let header: DffHeader = serde_json::from_slice(&json)
            .map_err(|e| Error::Format(format!("header: {e}")))?;
        let grid = header.grid()?;
        let n = grid.pixel_count();
        let shape = grid.shape();
        let mut record = DffRecord { header, velocity: None, power: None, labels: None };
        for ch in record.header.channels.clone() {
            match ch {
                Channel::Velocity | Channel::Power => {
                    let mut buf = vec![0u8; n * 4];
                    r.read_exact(&mut buf).map_err(truncated)?;
                    let values: Vec<f32> = buf
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                        .collect();
                    let plane = Array2::from_shape_vec(shape, values).expect("length checked");
                    let slot =
                        if ch == Channel::Velocity { &mut record.velocity } else { &mut record.power };
                    if slot.replace(plane).is_some() {
                        return Err(Error::Format(format!("duplicate channel {ch:?}")));
                    }
                }
                Channel::Labels => {
                    let mut buf = vec![0u8; n];
                    r.read_exact(&mut buf).map_err(truncated)?;
                    let plane = Array2::from_shape_vec(shape, buf.into_iter().map(|b| b as i8).collect())
                        .expect("length checked");
                    let labels =
                        LabelMap::new(plane).map_err(|e| Error::Format(format!("labels: {e}")))?;
                    if record.labels.replace(labels).is_some() {
                        return Err(Error::Format("duplicate channel Labels".into()));
                    }
                }
            }
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after last plane".into()));
        }
        Ok(record)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(bytes.as_slice())
    }
}

fn check_shape(got: (usize, usize), want: (usize, usize)) -> Result<()> {
    if got != want {
        return Err(Error::Format(format!("plane shape {got:?} does not match header {want:?}")));
    }
    Ok(())
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated DFF file".into())
    } else {
        Error::Io(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn record() -> DffRecord {
        let grid = PolarGrid::with_shape(2, 3).unwrap();
        let frame = DopplerFrame::new(
            grid,
            array![[0.1f32, -0.2, 0.3], [0.0, 0.5, -0.6]],
            array![[1.0f32, 0.5, 0.25], [0.0, 0.75, 1.0]],
            0.6,
            true,
        )
        .unwrap();
        let labels = LabelMap::new(array![[0, 1, -1], [0, 0, 1]]).unwrap();
        DffRecord::from_frame(&frame, Some(&labels))
    }

    #[test]
    fn byte_layout() {
        let bytes = record().to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"DFLD");
        assert_eq!(bytes[4], 1);
        let len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[9..9 + len]).unwrap();
        assert_eq!(header["channels"], serde_json::json!(["velocity", "power", "labels"]));
        assert_eq!(header["wrapped"], serde_json::json!(true));
        assert_eq!(bytes.len(), 9 + len + 6 * 4 * 2 + 6);
        // first velocity value, then the label plane at the end
        assert_eq!(f32::from_le_bytes(bytes[9 + len..13 + len].try_into().unwrap()), 0.1);
        assert_eq!(&bytes[bytes.len() - 6..], &[0u8, 1, 0xff, 0, 0, 1]);
    }

    #[test]
    fn read_back() {
        let rec = record();
        let again = DffRecord::read_from(rec.to_bytes().unwrap().as_slice()).unwrap();
        assert_eq!(again, rec);
        let frame: DopplerFrame<f32> = again.to_frame().unwrap();
        assert_eq!(frame.nyquist_velocity, 0.6f32);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = record().to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(DffRecord::read_from(bad.as_slice()).is_err());
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(DffRecord::read_from(bad.as_slice()).is_err());
        assert!(DffRecord::read_from(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(DffRecord::read_from(long.as_slice()).is_err());
        let mut bad_label = bytes;
        let last = bad_label.len() - 1;
        bad_label[last] = 3;
        assert!(DffRecord::read_from(bad_label.as_slice()).is_err());
    }

    #[test]
    fn unknown_header_keys_rejected() {
        let json = br#"{"n_radial":2,"n_angular":2,"r_min":0,"r_max":1,"theta_min":-1,"theta_max":1,"v_nyquist":0.6,"channels":[],"wrapped":false,"extra":1}"#;
        let mut bytes = b"DFLD\x01".to_vec();
        bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
        bytes.extend_from_slice(json);
        assert!(DffRecord::read_from(bytes.as_slice()).is_err());
    }
}
