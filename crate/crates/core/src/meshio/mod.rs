//! Reading and writing OFF meshes and PLY/XYZ point clouds, plus Lambertian
//! appearance synthesis.
//!
//! Formats are sniffed from the leading bytes, never from the file extension.

mod off;
mod ply;
mod shade;
mod xyz;

use std::path::Path;

pub use shade::{shade_lambertian, shade_with_lights, DirectionalLight};

use crate::cloud::{PointCloud, TriangleMesh};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Off,
    PlyAscii,
    PlyBinaryLittleEndian,
    Xyz,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "off" => Ok(Format::Off),
            "ply" | "ply-binary" | "ply-binary-little-endian" | "binary" => {
                Ok(Format::PlyBinaryLittleEndian)
            }
            "ply-ascii" | "ascii" => Ok(Format::PlyAscii),
            "xyz" => Ok(Format::Xyz),
            other => Err(Error::param("format", format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Mesh(TriangleMesh),
    Cloud(PointCloud),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryFile {
    pub format: Format,
    pub payload: Geometry,
    /// Header comments (PLY `comment` lines, `#` lines in XYZ/OFF).
    pub comments: Vec<String>,
}

impl GeometryFile {
    /// The payload as a point cloud; a mesh yields its vertices.
    pub fn into_cloud(self) -> PointCloud {
        match self.payload {
            Geometry::Cloud(c) => c,
            Geometry::Mesh(m) => {
                PointCloud::new(m.vertices().to_vec()).expect("mesh vertices are validated")
            }
        }
    }

    pub fn into_mesh(self) -> Result<TriangleMesh> {
        match self.payload {
            Geometry::Mesh(m) => Ok(m),
            Geometry::Cloud(_) => Err(Error::InvalidData(
                "expected a triangle mesh, found a point cloud".into(),
            )),
        }
    }
}

pub fn read_geometry(path: impl AsRef<Path>) -> Result<GeometryFile> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let label = path.display().to_string();
    let mut file = parse_geometry(&bytes, &label)?;
    if let Geometry::Cloud(c) = &mut file.payload {
        if c.id.is_empty() {
            c.id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
    }
    Ok(file)
}

/// Parses an in-memory geometry file. `label` names the source in errors.
pub fn parse_geometry(bytes: &[u8], label: &str) -> Result<GeometryFile> {
    let head = &bytes[..bytes.len().min(4)];
    if head.starts_with(b"ply") {
        ply::parse(bytes, label)
    } else if head.starts_with(b"OFF") {
        off::parse(bytes, label)
    } else {
        xyz::parse(bytes, label)
    }
}

pub fn write_pointcloud(cloud: &PointCloud, path: impl AsRef<Path>, format: Format) -> Result<()> {
    write_pointcloud_with_comments(cloud, path, format, &[])
}

pub fn write_pointcloud_with_comments(
    cloud: &PointCloud,
    path: impl AsRef<Path>,
    format: Format,
    comments: &[String],
) -> Result<()> {
    let bytes = encode_pointcloud(cloud, format, comments)?;
    let path = path.as_ref();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_pointcloud(cloud: &PointCloud, format: Format, comments: &[String]) -> Result<Vec<u8>> {
    match format {
        Format::PlyAscii => Ok(ply::encode(cloud, false, comments)),
        Format::PlyBinaryLittleEndian => Ok(ply::encode(cloud, true, comments)),
        Format::Xyz => Ok(xyz::encode(cloud, comments)),
        Format::Off => Err(Error::param(
            "format",
            "OFF stores meshes; write point clouds as PLY or XYZ",
        )),
    }
}

pub fn write_mesh_off(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, off::encode(mesh)).map_err(|e| Error::io(path, e))
}

pub(crate) fn parse_err(label: &str, location: crate::error::Location, message: impl Into<String>) -> Error {
    Error::Parse {
        path: label.to_string(),
        location,
        message: message.into(),
    }
}
