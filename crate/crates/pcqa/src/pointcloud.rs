//! Colored point cloud storage and PLY file I/O.
//!
//! Supports PLY 1.0 in `ascii` and `binary_little_endian` form with an
//! `element vertex` carrying `x,y,z` (float or double) and `red,green,blue`
//! (uchar) properties. Extra properties (alpha, normals, ...) are skipped,
//! as are comments, `obj_info` lines, and trailing elements.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

/// Errors raised while loading, writing, or constructing point clouds.
#[derive(Debug, Error)]
pub enum PlyError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("truncated body: expected {expected} vertices, got {got}")]
    TruncatedBody { expected: usize, got: usize },
    #[error("non-finite coordinate at vertex {index}")]
    NonFiniteCoordinate { index: usize },
    #[error("point cloud must contain at least one point")]
    EmptyCloud,
    #[error("positions ({positions}) and colors ({colors}) differ in length")]
    MismatchedLengths { positions: usize, colors: usize },
}

/// A colored point cloud: N points with 3D coordinates and RGB attributes.
///
/// Immutable after construction; coordinates are stored as `f64` regardless
/// of the source precision so downstream eigen computations never narrow.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    name: String,
    positions: Vec<[f64; 3]>,
    colors: Vec<[u8; 3]>,
}

impl PointCloud {
    /// Builds a cloud, validating the type invariants: at least one point,
    /// matching array lengths, and finite coordinates.
    pub fn new(
        name: impl Into<String>,
        positions: Vec<[f64; 3]>,
        colors: Vec<[u8; 3]>,
    ) -> Result<Self, PlyError> {
        if positions.is_empty() {
            return Err(PlyError::EmptyCloud);
        }
        if positions.len() != colors.len() {
            return Err(PlyError::MismatchedLengths {
                positions: positions.len(),
                colors: colors.len(),
            });
        }
        for (index, p) in positions.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(PlyError::NonFiniteCoordinate { index });
            }
        }
        Ok(Self {
            name: name.into(),
            positions,
            colors,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn colors(&self) -> &[[u8; 3]] {
        &self.colors
    }
}

/// Axis-aligned bounding box with `min[d] <= max[d]` for every axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    /// Box center, coordinate-wise midpoint.
    pub fn center(&self) -> [f64; 3] {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        ]
    }

    /// Per-axis extent.
    pub fn extent(&self) -> [f64; 3] {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn contains(&self, p: &[f64; 3]) -> bool {
        (0..3).all(|d| self.min[d] <= p[d] && p[d] <= self.max[d])
    }
}

impl fmt::Display for Aabb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}, {}, {}]..[{}, {}, {}]",
            self.min[0], self.min[1], self.min[2], self.max[0], self.max[1], self.max[2]
        )
    }
}

/// Coordinate-wise extrema over all points of the cloud.
pub fn bounding_box(pc: &PointCloud) -> Aabb {
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for p in pc.positions() {
        for d in 0..3 {
            min[d] = min[d].min(p[d]);
            max[d] = max[d].max(p[d]);
        }
    }
    Aabb { min, max }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(token: &str) -> Option<Self> {
        Some(match token {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 => 4,
            ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { ty: ScalarType, name: String },
    List { count: ScalarType, elem: ScalarType },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

/// On-disk encoding selector for [`write_ply`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

struct Header {
    encoding: PlyEncoding,
    elements: Vec<Element>,
}

fn read_header_line<R: BufRead>(reader: &mut R) -> Result<Option<String>, PlyError> {
    let mut buf = Vec::new();
    let n = reader.read_until(b'\n', &mut buf)?;
    if n == 0 {
        return Ok(None);
    }
    let line = String::from_utf8_lossy(&buf);
    Ok(Some(line.trim_end_matches(['\n', '\r']).to_string()))
}

fn parse_header<R: BufRead>(reader: &mut R) -> Result<Header, PlyError> {
    let magic = read_header_line(reader)?
        .ok_or_else(|| PlyError::MalformedHeader("empty file".into()))?;
    if magic.trim() != "ply" {
        return Err(PlyError::MalformedHeader("missing 'ply' magic line".into()));
    }

    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = read_header_line(reader)?
            .ok_or_else(|| PlyError::MalformedHeader("missing end_header".into()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let keyword = tokens.next().unwrap_or_default();
        match keyword {
            "comment" | "obj_info" => {}
            "format" => {
                let kind = tokens
                    .next()
                    .ok_or_else(|| PlyError::MalformedHeader("format line without kind".into()))?;
                encoding = Some(match kind {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    "binary_big_endian" => {
                        return Err(PlyError::UnsupportedFormat(
                            "binary_big_endian is not supported".into(),
                        ))
                    }
                    other => {
                        return Err(PlyError::MalformedHeader(format!(
                            "unknown format '{other}'"
                        )))
                    }
                });
            }
            "element" => {
                let name = tokens
                    .next()
                    .ok_or_else(|| PlyError::MalformedHeader("element without name".into()))?;
                let count: usize = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| PlyError::MalformedHeader("element without count".into()))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let element = elements.last_mut().ok_or_else(|| {
                    PlyError::MalformedHeader("property before any element".into())
                })?;
                let first = tokens
                    .next()
                    .ok_or_else(|| PlyError::MalformedHeader("property without type".into()))?;
                if first == "list" {
                    let count = tokens
                        .next()
                        .and_then(ScalarType::parse)
                        .ok_or_else(|| PlyError::MalformedHeader("bad list count type".into()))?;
                    let elem = tokens
                        .next()
                        .and_then(ScalarType::parse)
                        .ok_or_else(|| PlyError::MalformedHeader("bad list element type".into()))?;
                    tokens
                        .next()
                        .ok_or_else(|| PlyError::MalformedHeader("list without name".into()))?;
                    element.properties.push(Property::List { count, elem });
                } else {
                    let ty = ScalarType::parse(first).ok_or_else(|| {
                        PlyError::MalformedHeader(format!("unknown property type '{first}'"))
                    })?;
                    let name = tokens
                        .next()
                        .ok_or_else(|| PlyError::MalformedHeader("property without name".into()))?;
                    element.properties.push(Property::Scalar {
                        ty,
                        name: name.to_string(),
                    });
                }
            }
            "end_header" => break,
            other => {
                return Err(PlyError::MalformedHeader(format!(
                    "unexpected header keyword '{other}'"
                )))
            }
        }
    }

    let encoding =
        encoding.ok_or_else(|| PlyError::MalformedHeader("header missing format line".into()))?;
    Ok(Header { encoding, elements })
}

/// Column layout of the vertex element: indices of the seven properties we
/// read, plus the coordinate storage type.
struct VertexLayout {
    x: usize,
    y: usize,
    z: usize,
    r: usize,
    g: usize,
    b: usize,
}

fn vertex_layout(element: &Element) -> Result<VertexLayout, PlyError> {
    let mut x = None;
    let mut y = None;
    let mut z = None;
    let mut r = None;
    let mut g = None;
    let mut b = None;
    for (idx, prop) in element.properties.iter().enumerate() {
        let (ty, name) = match prop {
            Property::Scalar { ty, name } => (*ty, name.to_ascii_lowercase()),
            Property::List { .. } => continue,
        };
        let slot = match name.as_str() {
            "x" => &mut x,
            "y" => &mut y,
            "z" => &mut z,
            "red" | "r" => &mut r,
            "green" | "g" => &mut g,
            "blue" | "b" => &mut b,
            _ => continue,
        };
        match name.as_str() {
            "x" | "y" | "z" => {
                if !matches!(ty, ScalarType::F32 | ScalarType::F64) {
                    return Err(PlyError::UnsupportedFormat(format!(
                        "coordinate property '{name}' must be float or double"
                    )));
                }
            }
            _ => {
                if ty != ScalarType::U8 {
                    return Err(PlyError::UnsupportedFormat(format!(
                        "color property '{name}' must be uchar"
                    )));
                }
            }
        }
        *slot = Some(idx);
    }
    match (x, y, z, r, g, b) {
        (Some(x), Some(y), Some(z), Some(r), Some(g), Some(b)) => {
            Ok(VertexLayout { x, y, z, r, g, b })
        }
        _ => Err(PlyError::UnsupportedFormat(
            "vertex element must declare x,y,z and red,green,blue (or r,g,b)".into(),
        )),
    }
}

fn read_exact_or_truncated<R: Read>(
    reader: &mut R,
    buf: &mut [u8],
    expected: usize,
    got: usize,
) -> Result<(), PlyError> {
    reader
        .read_exact(buf)
        .map_err(|_| PlyError::TruncatedBody { expected, got })
}

fn binary_scalar_to_f64<R: Read>(
    reader: &mut R,
    ty: ScalarType,
    expected: usize,
    got: usize,
) -> Result<f64, PlyError> {
    let mut buf = [0u8; 8];
    let n = ty.size();
    read_exact_or_truncated(reader, &mut buf[..n], expected, got)?;
    Ok(match ty {
        ScalarType::I8 => buf[0] as i8 as f64,
        ScalarType::U8 => buf[0] as f64,
        ScalarType::I16 => i16::from_le_bytes([buf[0], buf[1]]) as f64,
        ScalarType::U16 => u16::from_le_bytes([buf[0], buf[1]]) as f64,
        ScalarType::I32 => i32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
        ScalarType::U32 => u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
        ScalarType::F32 => f32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
        ScalarType::F64 => f64::from_le_bytes(buf),
    })
}

/// Loads a colored point cloud from a PLY file.
///
/// The cloud's name is the file stem. The declared vertex count is enforced:
/// fewer data rows than declared raise [`PlyError::TruncatedBody`].
pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloud, PlyError> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cloud".to_string());
    let file = File::open(path)?;
    let mut reader = BufReader::with_capacity(1 << 20, file);
    load_ply_from_reader(&mut reader, name)
}

/// Same as [`load_ply`] but over any buffered reader; used by tests and the
/// in-memory round-trip checks.
pub fn load_ply_from_reader<R: BufRead>(
    reader: &mut R,
    name: impl Into<String>,
) -> Result<PointCloud, PlyError> {
    let header = parse_header(reader)?;
    let mut positions = Vec::new();
    let mut colors = Vec::new();

    for element in &header.elements {
        if element.name == "vertex" {
            let layout = vertex_layout(element)?;
            match header.encoding {
                PlyEncoding::Ascii => {
                    read_vertices_ascii(reader, element, &layout, &mut positions, &mut colors)?
                }
                PlyEncoding::BinaryLittleEndian => {
                    read_vertices_binary(reader, element, &layout, &mut positions, &mut colors)?
                }
            }
            // Elements after vertex are irrelevant to the cloud.
            break;
        }
        skip_element(reader, element, header.encoding)?;
    }

    if positions.is_empty() && !header.elements.iter().any(|e| e.name == "vertex") {
        return Err(PlyError::MalformedHeader(
            "no vertex element declared".into(),
        ));
    }
    PointCloud::new(name, positions, colors)
}

fn skip_element<R: BufRead>(
    reader: &mut R,
    element: &Element,
    encoding: PlyEncoding,
) -> Result<(), PlyError> {
    match encoding {
        PlyEncoding::Ascii => {
            for row in 0..element.count {
                let line = read_header_line(reader)?.ok_or(PlyError::TruncatedBody {
                    expected: element.count,
                    got: row,
                })?;
                let _ = line;
            }
        }
        PlyEncoding::BinaryLittleEndian => {
            for row in 0..element.count {
                for prop in &element.properties {
                    match prop {
                        Property::Scalar { ty, .. } => {
                            let mut buf = [0u8; 8];
                            read_exact_or_truncated(
                                reader,
                                &mut buf[..ty.size()],
                                element.count,
                                row,
                            )?;
                        }
                        Property::List { count, elem, .. } => {
                            let n =
                                binary_scalar_to_f64(reader, *count, element.count, row)? as usize;
                            let mut remaining = n * elem.size();
                            let mut chunk = [0u8; 64];
                            while remaining > 0 {
                                let take = remaining.min(chunk.len());
                                read_exact_or_truncated(
                                    reader,
                                    &mut chunk[..take],
                                    element.count,
                                    row,
                                )?;
                                remaining -= take;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

fn read_vertices_ascii<R: BufRead>(
    reader: &mut R,
    element: &Element,
    layout: &VertexLayout,
    positions: &mut Vec<[f64; 3]>,
    colors: &mut Vec<[u8; 3]>,
) -> Result<(), PlyError> {
    positions.reserve(element.count);
    colors.reserve(element.count);
    for row in 0..element.count {
        let line = loop {
            let l = read_header_line(reader)?.ok_or(PlyError::TruncatedBody {
                expected: element.count,
                got: row,
            })?;
            if !l.trim().is_empty() {
                break l;
            }
        };
        let mut tokens = line.split_whitespace();
        let mut values: Vec<f64> = Vec::with_capacity(element.properties.len());
        for prop in &element.properties {
            match prop {
                Property::Scalar { .. } => {
                    let tok = tokens.next().ok_or(PlyError::TruncatedBody {
                        expected: element.count,
                        got: row,
                    })?;
                    let v: f64 = tok.parse().map_err(|_| {
                        PlyError::MalformedHeader(format!("bad numeric token '{tok}'"))
                    })?;
                    values.push(v);
                }
                Property::List { .. } => {
                    let tok = tokens.next().ok_or(PlyError::TruncatedBody {
                        expected: element.count,
                        got: row,
                    })?;
                    let n: usize = tok.parse().map_err(|_| {
                        PlyError::MalformedHeader(format!("bad list count '{tok}'"))
                    })?;
                    for _ in 0..n {
                        tokens.next().ok_or(PlyError::TruncatedBody {
                            expected: element.count,
                            got: row,
                        })?;
                    }
                    values.push(f64::NAN); // placeholder, lists are never referenced
                }
            }
        }
        push_vertex(&values, layout, row, positions, colors)?;
    }
    Ok(())
}

fn read_vertices_binary<R: BufRead>(
    reader: &mut R,
    element: &Element,
    layout: &VertexLayout,
    positions: &mut Vec<[f64; 3]>,
    colors: &mut Vec<[u8; 3]>,
) -> Result<(), PlyError> {
    positions.reserve(element.count);
    colors.reserve(element.count);
    for row in 0..element.count {
        let mut values: Vec<f64> = Vec::with_capacity(element.properties.len());
        for prop in &element.properties {
            match prop {
                Property::Scalar { ty, .. } => {
                    values.push(binary_scalar_to_f64(reader, *ty, element.count, row)?);
                }
                Property::List { count, elem, .. } => {
                    let n = binary_scalar_to_f64(reader, *count, element.count, row)? as usize;
                    for _ in 0..n {
                        binary_scalar_to_f64(reader, *elem, element.count, row)?;
                    }
                    values.push(f64::NAN);
                }
            }
        }
        push_vertex(&values, layout, row, positions, colors)?;
    }
    Ok(())
}

fn push_vertex(
    values: &[f64],
    layout: &VertexLayout,
    row: usize,
    positions: &mut Vec<[f64; 3]>,
    colors: &mut Vec<[u8; 3]>,
) -> Result<(), PlyError> {
    let p = [values[layout.x], values[layout.y], values[layout.z]];
    if !p.iter().all(|c| c.is_finite()) {
        return Err(PlyError::NonFiniteCoordinate { index: row });
    }
    let clamp = |v: f64| -> u8 { v.clamp(0.0, 255.0) as u8 };
    positions.push(p);
    colors.push([
        clamp(values[layout.r]),
        clamp(values[layout.g]),
        clamp(values[layout.b]),
    ]);
    Ok(())
}

/// Writes a cloud as PLY with double-precision coordinates and uchar colors,
/// so `load_ply(write_ply(pc))` reproduces coordinates bit-for-bit.
pub fn write_ply(pc: &PointCloud, path: impl AsRef<Path>, format: PlyFormat) -> io::Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_ply_to_writer(pc, &mut w, format)
}

pub fn write_ply_to_writer<W: Write>(
    pc: &PointCloud,
    w: &mut W,
    format: PlyFormat,
) -> io::Result<()> {
    let format_line = match format {
        PlyFormat::Ascii => "format ascii 1.0",
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0",
    };
    write!(
        w,
        "ply\n{format_line}\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        pc.len()
    )?;
    match format {
        PlyFormat::Ascii => {
            for (p, c) in pc.positions().iter().zip(pc.colors()) {
                writeln!(w, "{} {} {} {} {} {}", p[0], p[1], p[2], c[0], c[1], c[2])?;
            }
        }
        PlyFormat::BinaryLittleEndian => {
            for (p, c) in pc.positions().iter().zip(pc.colors()) {
                for coord in p {
                    w.write_all(&coord.to_le_bytes())?;
                }
                w.write_all(c)?;
            }
        }
    }
    w.flush()
}
