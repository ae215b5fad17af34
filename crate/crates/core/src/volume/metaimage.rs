//! MetaImage (`.mhd` header + raw data) reader and writer.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use super::{Geometry, Volume3D};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementType {
    UChar,
    Short,
    Float,
    /// Only written when no narrower type is lossless.
    Double,
}

impl ElementType {
    fn tag(self) -> &'static str {
        match self {
            ElementType::UChar => "MET_UCHAR",
            ElementType::Short => "MET_SHORT",
            ElementType::Float => "MET_FLOAT",
            ElementType::Double => "MET_DOUBLE",
        }
    }

    fn parse(tag: &str) -> Result<Self> {
        match tag {
            "MET_UCHAR" => Ok(ElementType::UChar),
            "MET_SHORT" => Ok(ElementType::Short),
            "MET_FLOAT" => Ok(ElementType::Float),
            "MET_DOUBLE" => Ok(ElementType::Double),
            other => Err(Error::Format(format!("unsupported ElementType {other}"))),
        }
    }

    pub fn size(self) -> usize {
        match self {
            ElementType::UChar => 1,
            ElementType::Short => 2,
            ElementType::Float => 4,
            ElementType::Double => 8,
        }
    }

    /// Narrowest type that stores every value exactly.
    pub fn narrowest_lossless(data: &[f64]) -> Self {
        let integral = |lo: f64, hi: f64| data.iter().all(|&v| v.fract() == 0.0 && v >= lo && v <= hi);
        if integral(0.0, 255.0) {
            ElementType::UChar
        } else if integral(i16::MIN as f64, i16::MAX as f64) {
            ElementType::Short
        } else if data.iter().all(|&v| (v as f32) as f64 == v || v.is_nan()) {
            ElementType::Float
        } else {
            ElementType::Double
        }
    }
}

fn parse_header(text: &str) -> HashMap<String, String> {
    text.lines()
        .filter_map(|line| {
            let (k, v) = line.split_once('=')?;
            Some((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn triple<T: std::str::FromStr>(fields: &HashMap<String, String>, keys: &[&str]) -> Result<Option<[T; 3]>> {
    let Some(raw) = keys.iter().find_map(|k| fields.get(*k)) else {
        return Ok(None);
    };
    let parts: Vec<&str> = raw.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(Error::Format(format!("{} expects 3 values, got {raw:?}", keys[0])));
    }
    let mut out = Vec::with_capacity(3);
    for p in parts {
        out.push(
            p.parse::<T>()
                .map_err(|_| Error::Format(format!("cannot parse {p:?} in {}", keys[0])))?,
        );
    }
    let mut it = out.into_iter();
    Ok(Some([it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]))
}

fn truthy(fields: &HashMap<String, String>, keys: &[&str]) -> bool {
    keys.iter()
        .filter_map(|k| fields.get(*k))
        .any(|v| v.eq_ignore_ascii_case("true"))
}

/// Reads a 3D MetaImage volume. The header's byte order flag is honoured.
pub fn load_metaimage(path: impl AsRef<Path>) -> Result<Volume3D> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;

    // The header is ASCII up to and including the ElementDataFile line.
    let mut header_end = None;
    let mut pos = 0;
    for line in bytes.split(|&b| b == b'\n') {
        pos += line.len() + 1;
        if line.starts_with(b"ElementDataFile") {
            header_end = Some(pos.min(bytes.len()));
            break;
        }
    }
    let header_end = header_end.ok_or_else(|| Error::Format("missing ElementDataFile".into()))?;
    let text = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| Error::Format("header is not valid text".into()))?;
    let fields = parse_header(text);

    if let Some(t) = fields.get("ObjectType") {
        if t != "Image" {
            return Err(Error::Format(format!("ObjectType {t} is not Image")));
        }
    }
    let ndims: usize = fields
        .get("NDims")
        .ok_or_else(|| Error::Format("missing NDims".into()))?
        .parse()
        .map_err(|_| Error::Format("bad NDims".into()))?;
    if ndims != 3 {
        return Err(Error::Format(format!("only 3D images are supported, NDims = {ndims}")));
    }
    if truthy(&fields, &["CompressedData"]) {
        return Err(Error::Format("compressed MetaImage data is not supported".into()));
    }
    if fields.get("ElementNumberOfChannels").is_some_and(|c| c != "1") {
        return Err(Error::Format("multi-channel images are not supported".into()));
    }

    let dims: [usize; 3] =
        triple(&fields, &["DimSize"])?.ok_or_else(|| Error::Format("missing DimSize".into()))?;
    let spacing: [f64; 3] = triple(&fields, &["ElementSpacing", "ElementSize"])?.unwrap_or([1.0; 3]);
    let origin: [f64; 3] = triple(&fields, &["Offset", "Origin", "Position"])?.unwrap_or([0.0; 3]);
    let etype = ElementType::parse(
        fields
            .get("ElementType")
            .ok_or_else(|| Error::Format("missing ElementType".into()))?,
    )?;
    let msb = truthy(&fields, &["ElementByteOrderMSB", "BinaryDataByteOrderMSB"]);
    let geometry = Geometry::new(dims, spacing, origin)?;

    let data_file = &fields["ElementDataFile"];
    let expected = geometry.len() * etype.size();
    let raw: Vec<u8>;
    let payload: &[u8] = if data_file == "LOCAL" {
        &bytes[header_end..]
    } else if data_file == "LIST" || data_file.contains('%') {
        return Err(Error::Format(format!("multi-file data ({data_file}) is not supported")));
    } else {
        let raw_path = path.parent().unwrap_or(Path::new(".")).join(data_file);
        raw = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
        &raw
    };
    if payload.len() != expected {
        return Err(Error::io(
            path,
            io::Error::new(
                io::ErrorKind::InvalidData,
                format!("raw data holds {} bytes, header implies {expected}", payload.len()),
            ),
        ));
    }

    let data = decode(payload, etype, msb);
    Volume3D::new(geometry, data)
}

fn decode(bytes: &[u8], etype: ElementType, msb: bool) -> Vec<f64> {
    macro_rules! conv {
        ($t:ty, $n:expr) => {
            bytes
                .chunks_exact($n)
                .map(|c| {
                    let arr: [u8; $n] = c.try_into().unwrap();
                    (if msb { <$t>::from_be_bytes(arr) } else { <$t>::from_le_bytes(arr) }) as f64
                })
                .collect()
        };
    }
    match etype {
        ElementType::UChar => bytes.iter().map(|&b| b as f64).collect(),
        ElementType::Short => conv!(i16, 2),
        ElementType::Float => conv!(f32, 4),
        ElementType::Double => conv!(f64, 8),
    }
}

fn encode(data: &[f64], etype: ElementType) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() * etype.size());
    for &v in data {
        match etype {
            ElementType::UChar => out.push(v as u8),
            ElementType::Short => out.extend_from_slice(&(v as i16).to_le_bytes()),
            ElementType::Float => out.extend_from_slice(&(v as f32).to_le_bytes()),
            ElementType::Double => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

fn join3(v: [f64; 3]) -> String {
    format!("{:?} {:?} {:?}", v[0], v[1], v[2])
}

fn raw_path_for(path: &Path) -> Result<PathBuf> {
    if path.as_os_str().is_empty() {
        return Err(Error::io(
            path,
            io::Error::new(io::ErrorKind::InvalidInput, "empty output path"),
        ));
    }
    Ok(path.with_extension("raw"))
}

/// Writes `vol` with the narrowest element type that stores it losslessly.
pub fn save_metaimage(vol: &Volume3D, path: impl AsRef<Path>) -> Result<()> {
    save_metaimage_as(vol, path, ElementType::narrowest_lossless(vol.data()))
}

/// Writes a little-endian header/raw pair; values are cast to `etype`.
pub fn save_metaimage_as(vol: &Volume3D, path: impl AsRef<Path>, etype: ElementType) -> Result<()> {
    let path = path.as_ref();
    let raw_path = raw_path_for(path)?;
    let g = vol.geometry();
    let raw_name = raw_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Format(format!("unusable raw file name for {}", path.display())))?;
    let header = format!(
        "ObjectType = Image\nNDims = 3\nBinaryData = True\nBinaryDataByteOrderMSB = False\n\
         CompressedData = False\nOffset = {}\nElementSpacing = {}\nDimSize = {} {} {}\n\
         ElementType = {}\nElementDataFile = {}\n",
        join3(g.origin),
        join3(g.spacing),
        g.dims[0],
        g.dims[1],
        g.dims[2],
        etype.tag(),
        raw_name
    );
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
    fs::write(&raw_path, encode(vol.data(), etype)).map_err(|e| Error::io(&raw_path, e))?;
    Ok(())
}
