use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::soft::SilhouetteImage;
use crate::error::{Error, Result};

/// Maps `[0, 1]` to `0..=255` with round-half-up.
fn quantize(v: f64) -> u32 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u32
}

/// Writes an ASCII (P2) graymap with maxval 255.
pub fn export_pgm<W: Write>(image: &SilhouetteImage, mut sink: W) -> Result<()> {
    writeln!(sink, "P2")?;
    writeln!(sink, "{} {}", image.width, image.height)?;
    writeln!(sink, "255")?;
    for row in image.values.chunks(image.width.max(1)) {
        let line: Vec<String> = row.iter().map(|&v| quantize(v).to_string()).collect();
        writeln!(sink, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Reads an ASCII (P2) graymap; values are scaled by the file's maxval.
pub fn import_pgm<R: BufRead>(source: R) -> Result<SilhouetteImage> {
    let mut tokens: Vec<(usize, String)> = Vec::new();
    for (n, line) in source.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("");
        tokens.extend(content.split_whitespace().map(|t| (n + 1, t.to_string())));
    }
    let mut it = tokens.into_iter();
    let parse_err = |line: usize, message: String| Error::Parse { line, message };
    match it.next() {
        Some((_, m)) if m == "P2" => {}
        Some((line, m)) => return Err(parse_err(line, format!("expected P2 magic, found {m:?}"))),
        None => return Err(parse_err(1, "empty file".into())),
    }
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        let (line, tok) = it.next().ok_or_else(|| parse_err(0, format!("missing {name}")))?;
        *slot = tok
            .parse()
            .map_err(|_| parse_err(line, format!("invalid {name} {tok:?}")))?;
    }
    let [width, height, maxval] = header;
    if maxval == 0 || maxval > 65535 {
        return Err(parse_err(0, format!("maxval {maxval} outside 1..=65535")));
    }
    let mut values = Vec::with_capacity(width * height);
    for (line, tok) in it.by_ref().take(width * height) {
        let v: usize = tok
            .parse()
            .map_err(|_| parse_err(line, format!("invalid pixel value {tok:?}")))?;
        if v > maxval {
            return Err(parse_err(line, format!("pixel value {v} exceeds maxval {maxval}")));
        }
        values.push(v as f64 / maxval as f64);
    }
    if values.len() != width * height {
        return Err(parse_err(
            0,
            format!("expected {} pixels, found {}", width * height, values.len()),
        ));
    }
    if let Some((line, tok)) = it.next() {
        return Err(parse_err(line, format!("trailing data {tok:?}")));
    }
    SilhouetteImage::from_values(width, height, values)
}

pub fn write_pgm(image: &SilhouetteImage, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    export_pgm(image, &mut file)?;
    file.flush()?;
    Ok(())
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<SilhouetteImage> {
    import_pgm(BufReader::new(std::fs::File::open(path)?))
}
