//! Binary PPM (P6) colour images and PGM (P5) heat maps, maxval 255.
//!
//! Pixels map to [−1, 1] as v/127.5 − 1; writing inverts that with
//! round-half-away-from-zero and clamps to [0, 255].

use std::fs;
use std::path::Path;

use crate::cli::archive::write_atomic;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

struct Header {
    width: usize,
    height: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8], magic: &[u8; 2], what: &str) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::BadMagic(format!(
            "{what}: expected `{}`",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in fields.iter_mut() {
        // Whitespace and `#` comments may separate header fields.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::Truncated(format!("{what} header"))),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format(format!("{what}: malformed header")));
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("{what}: header value out of range")))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Truncated(format!("{what} header")));
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Format(format!("{what}: maxval {maxval}, only 255 is supported")));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("{what}: empty image")));
    }
    Ok(Header {
        width,
        height,
        data_start: pos + 1,
    })
}

pub fn to_byte(v: f64) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

pub fn from_byte(b: u8) -> f64 {
    f64::from(b) / 127.5 - 1.0
}

/// Decodes a P6 image to `[3, H, W]`.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    let h = parse_header(bytes, b"P6", "PPM")?;
    let hw = h.width * h.height;
    let body = &bytes[h.data_start..];
    if body.len() < 3 * hw {
        return Err(Error::Truncated(format!(
            "PPM payload: {} of {} bytes",
            body.len(),
            3 * hw
        )));
    }
    let mut data = vec![0.0; 3 * hw];
    for (i, px) in body[..3 * hw].chunks(3).enumerate() {
        for c in 0..3 {
            data[c * hw + i] = from_byte(px[c]);
        }
    }
    Tensor::new(vec![3, h.height, h.width], data)
}

pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>> {
    let &[3, height, width] = image.shape() else {
        return Err(Error::shape("write_ppm", image.shape(), &[3, 0, 0]));
    };
    let hw = height * width;
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    let d = image.data();
    for i in 0..hw {
        for c in 0..3 {
            out.push(to_byte(d[c * hw + i]));
        }
    }
    Ok(out)
}

pub fn read_ppm(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes).map_err(|e| match e {
        Error::BadMagic(m) => Error::BadMagic(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_ppm(path: &Path, image: &Tensor) -> Result<()> {
    write_atomic(path, &encode_ppm(image)?)
}

/// Decodes a P5 image to `[H, W]` on the same [−1, 1] scale as PPM.
pub fn decode_pgm(bytes: &[u8]) -> Result<Tensor> {
    let h = parse_header(bytes, b"P5", "PGM")?;
    let hw = h.width * h.height;
    let body = &bytes[h.data_start..];
    if body.len() < hw {
        return Err(Error::Truncated(format!("PGM payload: {} of {hw} bytes", body.len())));
    }
    Tensor::new(
        vec![h.height, h.width],
        body[..hw].iter().map(|&b| from_byte(b)).collect(),
    )
}

/// A `[H, W]` heat map with values in [0, 2] (differences of [−1, 1]
/// images) as a P5 image: 0 is black, 2 is white.
pub fn encode_heat_pgm(map: &Tensor) -> Result<Vec<u8>> {
    let &[height, width] = map.shape() else {
        return Err(Error::shape("write_pgm", map.shape(), &[0, 0]));
    };
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(map.data().iter().map(|&v| to_byte(v - 1.0)));
    Ok(out)
}

pub fn write_heat_pgm(path: &Path, map: &Tensor) -> Result<()> {
    write_atomic(path, &encode_heat_pgm(map)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        assert_eq!(from_byte(255), 1.0);
        assert_eq!(from_byte(0), -1.0);
        assert_eq!(to_byte(1.0), 255);
        assert_eq!(to_byte(-1.0), 0);
        assert_eq!(to_byte(7.0), 255);
        assert_eq!(to_byte(-3.0), 0);
        // 127.5 rounds away from zero.
        assert_eq!(to_byte(0.0), 128);
    }

    #[test]
    fn every_byte_survives() {
        for b in 0..=255u8 {
            assert_eq!(to_byte(from_byte(b)), b);
        }
    }

    #[test]
    fn ppm_round_trip_with_comment() {
        let mut bytes = b"P6\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 10, 255, 128, 7, 9]);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!(img.shape(), &[3, 1, 2]);
        assert_eq!(img.data()[0], -1.0);
        assert_eq!(img.data()[4], 1.0);
        let again = encode_ppm(&img).unwrap();
        assert_eq!(decode_ppm(&again).unwrap(), img);
        assert!(again.ends_with(&[0, 10, 255, 128, 7, 9]));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(decode_ppm(b"P3\n1 1\n255\n\0\0\0"), Err(Error::BadMagic(_))));
        assert!(matches!(decode_ppm(b"P6\n1 1\n65535\n\0\0\0"), Err(Error::Format(_))));
        assert!(matches!(decode_ppm(b"P6\n2 2\n255\n\0\0\0"), Err(Error::Truncated(_))));
        assert!(matches!(decode_ppm(b"P6\n2 2"), Err(Error::Truncated(_))));
    }

    #[test]
    fn heat_map_scale() {
        let m = Tensor::from_slice(&[1, 3], &[0.0, 1.0, 2.0]).unwrap();
        let bytes = encode_heat_pgm(&m).unwrap();
        assert!(bytes.ends_with(&[0, 128, 255]));
        assert_eq!(decode_pgm(&bytes).unwrap().shape(), &[1, 3]);
    }
}
