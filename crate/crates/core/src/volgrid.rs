//! Volumetric grids and the `rvol` container.
//!
//! A grid stores `channels * nz * ny * nx` values in `(c, z, y, x)` order with
//! `x` varying fastest. The on-disk form is a JSON header `<name>.json` next
//! to a little-endian payload `<name>.raw` with no compression or padding.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Debug;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QaError, Result};
use crate::scalar::Scalar;

/// Grid extents in `(nz, ny, nx)` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub nz: usize,
    pub ny: usize,
    pub nx: usize,
}

impl Dims {
    pub const fn new(nz: usize, ny: usize, nx: usize) -> Self {
        Dims { nz, ny, nx }
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nz, self.ny, self.nx]
    }

    /// Number of voxels in one channel.
    pub fn len(&self) -> usize {
        self.nz * self.ny * self.nx
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.ny + y) * self.nx + x
    }

    #[inline]
    pub fn coords(&self, i: usize) -> (usize, usize, usize) {
        let x = i % self.nx;
        let y = (i / self.nx) % self.ny;
        let z = i / (self.nx * self.ny);
        (z, y, x)
    }

    fn validate(&self) -> Result<()> {
        if self.nz == 0 || self.ny == 0 || self.nx == 0 {
            return Err(QaError::Dims(self.as_array()));
        }
        Ok(())
    }
}

impl From<[usize; 3]> for Dims {
    fn from(d: [usize; 3]) -> Self {
        Dims::new(d[0], d[1], d[2])
    }
}

/// Physical voxel size in millimetres, `(sz, sy, sx)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub z: f64,
    pub y: f64,
    pub x: f64,
}

impl Spacing {
    pub fn new(z: f64, y: f64, x: f64) -> Result<Self> {
        let s = Spacing { z, y, x };
        s.validate()?;
        Ok(s)
    }

    pub fn isotropic(s: f64) -> Result<Self> {
        Self::new(s, s, s)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.z, self.y, self.x]
    }

    fn validate(&self) -> Result<()> {
        let a = self.as_array();
        if a.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(QaError::Spacing(a))
        }
    }
}

impl TryFrom<[f64; 3]> for Spacing {
    type Error = QaError;
    fn try_from(s: [f64; 3]) -> Result<Self> {
        Spacing::new(s[0], s[1], s[2])
    }
}

/// Element types a grid may hold.
pub trait Voxel: Copy + Send + Sync + PartialEq + Debug + 'static {
    /// Values that may be written to a container (finite for floats).
    fn is_storable(&self) -> bool {
        true
    }
}

impl Voxel for u8 {}
impl Voxel for f32 {
    fn is_storable(&self) -> bool {
        self.is_finite()
    }
}
impl Voxel for f64 {
    fn is_storable(&self) -> bool {
        self.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DType {
    #[serde(rename = "f32")]
    F32,
    #[serde(rename = "u8")]
    U8,
}

impl DType {
    pub fn bytes(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::U8 => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::U8 => "u8",
        }
    }
}

/// Voxel types with a container encoding.
pub trait StoredVoxel: Voxel {
    const DTYPE: DType;
    fn push_le(&self, out: &mut Vec<u8>);
    fn from_le(bytes: &[u8]) -> Self;
}

impl StoredVoxel for f32 {
    const DTYPE: DType = DType::F32;
    fn push_le(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn from_le(b: &[u8]) -> Self {
        f32::from_le_bytes([b[0], b[1], b[2], b[3]])
    }
}

impl StoredVoxel for u8 {
    const DTYPE: DType = DType::U8;
    fn push_le(&self, out: &mut Vec<u8>) {
        out.push(*self);
    }
    fn from_le(b: &[u8]) -> Self {
        b[0]
    }
}

/// A 3D (optionally multi-channel) scalar field with anisotropic spacing.
///
/// Grids are immutable once built; every transform returns a new grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid<T> {
    dims: Dims,
    spacing: Spacing,
    channels: usize,
    data: Vec<T>,
}

impl<T: Voxel> VoxelGrid<T> {
    pub fn new(dims: Dims, spacing: Spacing, channels: usize, data: Vec<T>) -> Result<Self> {
        dims.validate()?;
        spacing.validate()?;
        if channels == 0 {
            return Err(QaError::invalid("channels must be positive"));
        }
        let expected = channels * dims.len();
        if data.len() != expected {
            return Err(QaError::DataLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(VoxelGrid {
            dims,
            spacing,
            channels,
            data,
        })
    }

    /// Single-channel grid.
    pub fn scalar(dims: Dims, spacing: Spacing, data: Vec<T>) -> Result<Self> {
        Self::new(dims, spacing, 1, data)
    }

    pub fn filled(dims: Dims, spacing: Spacing, value: T) -> Result<Self> {
        Self::new(dims, spacing, 1, vec![value; dims.len()])
    }

    pub fn from_fn(
        dims: Dims,
        spacing: Spacing,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.len());
        for z in 0..dims.nz {
            for y in 0..dims.ny {
                for x in 0..dims.nx {
                    data.push(f(z, y, x));
                }
            }
        }
        Self::new(dims, spacing, 1, data)
    }

    /// Grid on the same geometry as `self` with new single-channel data.
    pub fn with_data<U: Voxel>(&self, data: Vec<U>) -> Result<VoxelGrid<U>> {
        VoxelGrid::new(self.dims, self.spacing, 1, data)
    }

    pub(crate) fn like<U: Voxel>(&self, data: Vec<U>) -> VoxelGrid<U> {
        debug_assert_eq!(data.len(), self.dims.len());
        VoxelGrid {
            dims: self.dims,
            spacing: self.spacing,
            channels: 1,
            data,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Voxels per channel.
    pub fn voxel_count(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.dims.len();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> T {
        self.data[self.dims.index(z, y, x)]
    }

    pub fn same_geometry<U>(&self, other: &VoxelGrid<U>) -> Result<()> {
        if self.dims != other.dims {
            return Err(QaError::GridMismatch(format!(
                "dims {:?} vs {:?}",
                self.dims.as_array(),
                other.dims.as_array()
            )));
        }
        if self.spacing != other.spacing {
            return Err(QaError::GridMismatch(format!(
                "spacing {:?} vs {:?}",
                self.spacing.as_array(),
                other.spacing.as_array()
            )));
        }
        Ok(())
    }

    pub fn expect_channels(&self, expected: usize) -> Result<()> {
        if self.channels != expected {
            return Err(QaError::Channels {
                expected,
                actual: self.channels,
            });
        }
        Ok(())
    }

    pub fn all_storable(&self) -> bool {
        self.data.par_iter().all(|v| v.is_storable())
    }
}

impl<F: Scalar + Voxel> VoxelGrid<F> {
    /// Rejects values outside `[0, 1]` (NaN included).
    pub fn ensure_unit_range(&self, what: &'static str) -> Result<()> {
        let bad = self
            .data
            .par_iter()
            .find_any(|v| !(**v >= F::zero() && **v <= F::one()));
        match bad {
            Some(v) => Err(QaError::OutOfRange {
                what,
                value: v.f64(),
                lo: 0.0,
                hi: 1.0,
            }),
            None => Ok(()),
        }
    }

    pub fn ensure_finite(&self, what: &'static str) -> Result<()> {
        if self.data.par_iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(QaError::NonFinite(what))
        }
    }

    /// Converts the element type, e.g. `f32` payloads into `f64` math.
    pub fn cast<G: Scalar + Voxel>(&self) -> VoxelGrid<G> {
        VoxelGrid {
            dims: self.dims,
            spacing: self.spacing,
            channels: self.channels,
            data: self.data.iter().map(|v| G::of(v.f64())).collect(),
        }
    }
}

impl VoxelGrid<u8> {
    pub fn ensure_binary(&self) -> Result<()> {
        if self.data.par_iter().all(|v| *v <= 1) {
            Ok(())
        } else {
            Err(QaError::NotBinary)
        }
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|v| **v == 1).count()
    }
}

/// Single-channel foreground probability / uncertainty grid as stored on disk.
pub type FloatGrid = VoxelGrid<f32>;
/// Binary mask grid.
pub type MaskGrid = VoxelGrid<u8>;

/// A grid read from a container of either dtype.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyGrid {
    F32(VoxelGrid<f32>),
    U8(VoxelGrid<u8>),
}

impl AnyGrid {
    pub fn dtype(&self) -> DType {
        match self {
            AnyGrid::F32(_) => DType::F32,
            AnyGrid::U8(_) => DType::U8,
        }
    }

    pub fn into_f32(self) -> Result<VoxelGrid<f32>> {
        match self {
            AnyGrid::F32(g) => Ok(g),
            AnyGrid::U8(_) => Err(QaError::DType {
                expected: "f32",
                actual: "u8",
            }),
        }
    }

    pub fn into_u8(self) -> Result<VoxelGrid<u8>> {
        match self {
            AnyGrid::U8(g) => Ok(g),
            AnyGrid::F32(_) => Err(QaError::DType {
                expected: "u8",
                actual: "f32",
            }),
        }
    }
}

/// Container header, serialized as `<name>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerHeader {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub dtype: DType,
    pub channels: usize,
}

impl ContainerHeader {
    pub fn payload_bytes(&self) -> usize {
        self.dtype.bytes() * self.channels * self.dims.iter().product::<usize>()
    }
}

/// Resolves `(header, payload)` paths. A trailing `.json` or `.raw` is
/// stripped; any other suffix is part of the name.
pub fn container_paths(path: &Path) -> (PathBuf, PathBuf) {
    let base: PathBuf = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let with = |ext: &str| {
        let mut s: OsString = base.clone().into_os_string();
        s.push(ext);
        PathBuf::from(s)
    };
    (with(".json"), with(".raw"))
}

pub fn read_header(path: &Path) -> Result<ContainerHeader> {
    let (json_path, _) = container_paths(path);
    let text = fs::read_to_string(&json_path).map_err(|e| QaError::io(&json_path, e))?;
    let header: ContainerHeader =
        serde_json::from_str(&text).map_err(|e| QaError::Header {
            path: json_path.clone(),
            msg: e.to_string(),
        })?;
    Dims::from(header.dims).validate()?;
    Spacing::try_from(header.spacing_mm)?;
    if header.channels == 0 {
        return Err(QaError::Header {
            path: json_path,
            msg: "channels must be positive".into(),
        });
    }
    Ok(header)
}

/// Reads a container, validating header fields, payload length and finiteness.
pub fn read_volume(path: &Path) -> Result<AnyGrid> {
    let header = read_header(path)?;
    let (_, raw_path) = container_paths(path);
    let bytes = fs::read(&raw_path).map_err(|e| QaError::io(&raw_path, e))?;
    let expected = header.payload_bytes();
    if bytes.len() != expected {
        return Err(QaError::PayloadLength {
            expected,
            actual: bytes.len(),
        });
    }
    let dims = Dims::from(header.dims);
    let spacing = Spacing::try_from(header.spacing_mm)?;
    match header.dtype {
        DType::F32 => {
            let grid = VoxelGrid::new(dims, spacing, header.channels, decode::<f32>(&bytes))?;
            if !grid.all_storable() {
                return Err(QaError::NonFinite("stored volume"));
            }
            Ok(AnyGrid::F32(grid))
        }
        DType::U8 => Ok(AnyGrid::U8(VoxelGrid::new(
            dims,
            spacing,
            header.channels,
            decode::<u8>(&bytes),
        )?)),
    }
}

pub fn read_f32(path: &Path) -> Result<VoxelGrid<f32>> {
    read_volume(path)?.into_f32()
}

pub fn read_mask(path: &Path) -> Result<VoxelGrid<u8>> {
    let g = read_volume(path)?.into_u8()?;
    g.ensure_binary()?;
    Ok(g)
}

fn decode<T: StoredVoxel>(bytes: &[u8]) -> Vec<T> {
    bytes.chunks_exact(T::DTYPE.bytes()).map(T::from_le).collect()
}

/// Writes the canonical container; NaN/Inf payloads are rejected.
pub fn write_volume<T: StoredVoxel>(grid: &VoxelGrid<T>, path: &Path) -> Result<()> {
    if !grid.all_storable() {
        return Err(QaError::NonFinite("stored volume"));
    }
    let header = ContainerHeader {
        dims: grid.dims.as_array(),
        spacing_mm: grid.spacing.as_array(),
        dtype: T::DTYPE,
        channels: grid.channels,
    };
    let (json_path, raw_path) = container_paths(path);
    if let Some(parent) = json_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| QaError::io(parent, e))?;
        }
    }
    let mut payload = Vec::with_capacity(header.payload_bytes());
    for v in &grid.data {
        v.push_le(&mut payload);
    }
    let mut text = serde_json::to_string(&header).expect("header serializes");
    text.push('\n');
    fs::write(&json_path, text).map_err(|e| QaError::io(&json_path, e))?;
    fs::write(&raw_path, payload).map_err(|e| QaError::io(&raw_path, e))?;
    Ok(())
}

/// Foreground mask `p >= threshold` (ties go to foreground).
pub fn binarize<F: Scalar + Voxel>(prob: &VoxelGrid<F>, threshold: F) -> Result<VoxelGrid<u8>> {
    prob.expect_channels(1)?;
    if !(threshold > F::zero() && threshold < F::one()) {
        return Err(QaError::OutOfRange {
            what: "threshold",
            value: threshold.f64(),
            lo: 0.0,
            hi: 1.0,
        });
    }
    prob.ensure_unit_range("probability")?;
    let data = prob
        .data()
        .par_iter()
        .map(|p| u8::from(*p >= threshold))
        .collect();
    Ok(prob.like(data))
}

/// One case: optional CT, ground truth, and where each method's members live.
#[derive(Debug, Clone)]
pub struct CaseRecord {
    pub case_id: String,
    pub ct: Option<VoxelGrid<f32>>,
    pub ground_truth: VoxelGrid<u8>,
    /// method id -> member container paths
    pub predictions: BTreeMap<String, Vec<PathBuf>>,
}

impl CaseRecord {
    pub fn new(case_id: impl Into<String>, ground_truth: VoxelGrid<u8>) -> Result<Self> {
        ground_truth.expect_channels(1)?;
        ground_truth.ensure_binary()?;
        Ok(CaseRecord {
            case_id: case_id.into(),
            ct: None,
            ground_truth,
            predictions: BTreeMap::new(),
        })
    }

    pub fn with_ct(mut self, ct: VoxelGrid<f32>) -> Result<Self> {
        ct.same_geometry(&self.ground_truth)?;
        ct.expect_channels(1)?;
        self.ct = Some(ct);
        Ok(self)
    }

    pub fn dims(&self) -> Dims {
        self.ground_truth.dims()
    }

    pub fn spacing(&self) -> Spacing {
        self.ground_truth.spacing()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp() -> Spacing {
        Spacing::new(5.0, 1.171875, 1.171875).unwrap()
    }

    #[test]
    fn smallest_container_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("v");
        fs::write(
            dir.path().join("v.json"),
            r#"{"dims":[2,2,2],"spacing_mm":[1,1,1],"dtype":"f32","channels":1}"#,
        )
        .unwrap();
        fs::write(dir.path().join("v.raw"), vec![0u8; 32]).unwrap();
        let g = read_f32(&base).unwrap();
        assert_eq!(g.voxel_count(), 8);
        assert!(g.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("v.json"),
            r#"{"dims":[2,2,2],"spacing_mm":[1,1,1],"dtype":"f32","channels":1}"#,
        )
        .unwrap();
        fs::write(dir.path().join("v.raw"), vec![0u8; 31]).unwrap();
        let err = read_volume(&dir.path().join("v.json")).unwrap_err();
        assert!(matches!(
            err,
            QaError::PayloadLength {
                expected: 32,
                actual: 31
            }
        ));
    }

    #[test]
    fn bad_headers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h");
        fs::write(dir.path().join("h.json"), "{not json").unwrap();
        fs::write(dir.path().join("h.raw"), vec![0u8; 8]).unwrap();
        assert!(matches!(read_volume(&p), Err(QaError::Header { .. })));

        fs::write(
            dir.path().join("h.json"),
            r#"{"dims":[2,2,2],"spacing_mm":[1,0,1],"dtype":"u8","channels":1}"#,
        )
        .unwrap();
        assert!(matches!(read_volume(&p), Err(QaError::Spacing(_))));

        fs::write(
            dir.path().join("h.json"),
            r#"{"dims":[2,2,2],"spacing_mm":[1,1,1],"dtype":"f64","channels":1}"#,
        )
        .unwrap();
        assert!(matches!(read_volume(&p), Err(QaError::Header { .. })));
    }

    #[test]
    fn zero_mask_writes_64_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let g = VoxelGrid::<u8>::filled(Dims::new(4, 4, 4), sp(), 0).unwrap();
        let p = dir.path().join("mask");
        write_volume(&g, &p).unwrap();
        assert_eq!(fs::metadata(dir.path().join("mask.raw")).unwrap().len(), 64);
        let header = read_header(&p).unwrap();
        assert_eq!(header.dtype, DType::U8);
        assert_eq!(read_mask(&p).unwrap(), g);
    }

    #[test]
    fn nan_is_not_storable() {
        let dir = tempfile::tempdir().unwrap();
        let mut data = vec![0.0f32; 8];
        data[3] = f32::NAN;
        let g = VoxelGrid::scalar(Dims::new(2, 2, 2), sp(), data).unwrap();
        assert!(matches!(
            write_volume(&g, &dir.path().join("n")),
            Err(QaError::NonFinite(_))
        ));
    }

    #[test]
    fn ct_sized_payload_arithmetic() {
        let h = ContainerHeader {
            dims: [237, 512, 512],
            spacing_mm: [5.0, 1.171875, 1.171875],
            dtype: DType::F32,
            channels: 1,
        };
        assert_eq!(h.payload_bytes(), 248_512_512);
    }

    #[test]
    fn multichannel_layout_is_channel_major() {
        let dims = Dims::new(1, 1, 3);
        let g = VoxelGrid::new(dims, sp(), 2, vec![0.0f32, 1.0, 2.0, 10.0, 11.0, 12.0]).unwrap();
        assert_eq!(g.channel(1), &[10.0, 11.0, 12.0]);
        assert!(VoxelGrid::new(dims, sp(), 2, vec![0.0f32; 5]).is_err());
    }

    #[test]
    fn binarize_ties_go_to_foreground() {
        let dims = Dims::new(2, 2, 2);
        let half = VoxelGrid::filled(dims, sp(), 0.5f32).unwrap();
        assert!(binarize(&half, 0.5).unwrap().data().iter().all(|v| *v == 1));
        let zero = VoxelGrid::filled(dims, sp(), 0.0f64).unwrap();
        assert!(binarize(&zero, 0.5).unwrap().data().iter().all(|v| *v == 0));
        let bad = VoxelGrid::filled(dims, sp(), 1.5f32).unwrap();
        assert!(binarize(&bad, 0.5).is_err());
        assert!(binarize(&half, 1.0).is_err());
    }

    #[test]
    fn geometry_mismatch_detected() {
        let a = VoxelGrid::<u8>::filled(Dims::new(2, 2, 2), sp(), 0).unwrap();
        let b = VoxelGrid::<u8>::filled(Dims::new(2, 2, 3), sp(), 0).unwrap();
        let c = VoxelGrid::<u8>::filled(Dims::new(2, 2, 2), Spacing::isotropic(1.0).unwrap(), 0)
            .unwrap();
        assert!(a.same_geometry(&b).is_err());
        assert!(a.same_geometry(&c).is_err());
        assert!(a.same_geometry(&a.clone()).is_ok());
    }

    #[test]
    fn container_path_suffixes() {
        let (j, r) = container_paths(Path::new("/x/DE+TS.v1"));
        assert_eq!(j, PathBuf::from("/x/DE+TS.v1.json"));
        assert_eq!(r, PathBuf::from("/x/DE+TS.v1.raw"));
        let (j, _) = container_paths(Path::new("/x/a.raw"));
        assert_eq!(j, PathBuf::from("/x/a.json"));
    }
}
