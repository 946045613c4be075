use crate::error::{Error, Result};

use super::Frame;

/// Binary portable pixmap: `P6\n<w> <h>\n255\n` followed by RGB bytes.
pub fn encode_ppm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.pixels());
    out
}

/// Parse a P6 file. Whitespace and `#` comments between header fields are accepted.
pub fn decode_ppm(bytes: &[u8]) -> Result<Frame> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(Error::Format("not a binary PPM (missing P6 magic)".into()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        skip_space_and_comments(bytes, &mut pos);
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated or malformed PPM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("PPM header value out of range".into()))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Format(format!("PPM maxval {maxval} unsupported, need 255")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("missing whitespace after PPM header".into()));
    }
    pos += 1;
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| Error::Format("PPM dimensions overflow".into()))?;
    let raster = &bytes[pos..];
    if raster.len() != need {
        return Err(Error::Format(format!("PPM raster has {} bytes, expected {need}", raster.len())));
    }
    Frame::new(width, height, raster.to_vec()).map_err(|e| Error::Format(e.to_string()))
}

fn skip_space_and_comments(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        match bytes[*pos] {
            b'#' => {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            }
            c if c.is_ascii_whitespace() => *pos += 1,
            _ => break,
        }
    }
}
