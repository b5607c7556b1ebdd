//! Dense 2-D planes and 3-D slice stacks shared by every pipeline stage.

use std::fmt;

/// Row-major 2-D array.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Plane<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone> Plane<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Plane {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }
}

impl<T> Plane<T> {
    /// Wraps `data`; returns `None` when its length is not `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == rows * cols).then_some(Plane { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Plane { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> &T {
        &self.data[r * self.cols + c]
    }

    #[inline]
    pub fn get_mut(&mut self, r: usize, c: usize) -> &mut T {
        &mut self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: T) {
        self.data[r * self.cols + c] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Plane<U> {
        Plane {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn zip_map<U, V>(&self, other: &Plane<U>, mut f: impl FnMut(&T, &U) -> V) -> Plane<V> {
        assert_eq!(self.dims(), other.dims(), "plane dimensions differ");
        Plane {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }
}

/// Ordered stack of equally sized planes (slice index first).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Volume<T> {
    rows: usize,
    cols: usize,
    planes: Vec<Plane<T>>,
}

impl<T: Clone> Volume<T> {
    pub fn filled(slices: usize, rows: usize, cols: usize, value: T) -> Self {
        Volume {
            rows,
            cols,
            planes: (0..slices)
                .map(|_| Plane::filled(rows, cols, value.clone()))
                .collect(),
        }
    }

    /// Flattened voxels in (slice, row, col) order.
    pub fn to_flat(&self) -> Vec<T> {
        self.planes
            .iter()
            .flat_map(|p| p.as_slice().iter().cloned())
            .collect()
    }

    pub fn from_flat(dims: VolumeDims, data: &[T]) -> Option<Self> {
        if data.len() != dims.voxel_count() {
            return None;
        }
        let per = dims.rows * dims.cols;
        let planes = (0..dims.slices)
            .map(|z| Plane::from_vec(dims.rows, dims.cols, data[z * per..(z + 1) * per].to_vec()))
            .collect::<Option<Vec<_>>>()?;
        Some(Volume {
            rows: dims.rows,
            cols: dims.cols,
            planes,
        })
    }
}

impl<T> Volume<T> {
    /// Stacks planes; `None` if they disagree in size.
    pub fn from_planes(planes: Vec<Plane<T>>) -> Option<Self> {
        let (rows, cols) = planes.first().map(Plane::dims).unwrap_or((0, 0));
        if planes.iter().any(|p| p.dims() != (rows, cols)) {
            return None;
        }
        Some(Volume { rows, cols, planes })
    }

    pub fn dims(&self) -> VolumeDims {
        VolumeDims {
            slices: self.planes.len(),
            rows: self.rows,
            cols: self.cols,
        }
    }

    pub fn slice_count(&self) -> usize {
        self.planes.len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn plane(&self, z: usize) -> &Plane<T> {
        &self.planes[z]
    }

    pub fn plane_mut(&mut self, z: usize) -> &mut Plane<T> {
        &mut self.planes[z]
    }

    pub fn planes(&self) -> &[Plane<T>] {
        &self.planes
    }

    pub fn into_planes(self) -> Vec<Plane<T>> {
        self.planes
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.planes.iter().flat_map(|p| p.as_slice().iter())
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Volume<U> {
        Volume {
            rows: self.rows,
            cols: self.cols,
            planes: self.planes.iter().map(|p| p.map(&mut f)).collect(),
        }
    }
}

/// Extent of a volume as (slices, rows, cols).
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub struct VolumeDims {
    pub slices: usize,
    pub rows: usize,
    pub cols: usize,
}

impl VolumeDims {
    pub fn new(slices: usize, rows: usize, cols: usize) -> Self {
        VolumeDims { slices, rows, cols }
    }

    pub fn voxel_count(&self) -> usize {
        self.slices * self.rows * self.cols
    }
}

impl fmt::Display for VolumeDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.slices, self.rows, self.cols)
    }
}

/// Per-voxel lung membership.
pub type BinaryMask = Volume<bool>;

impl Volume<bool> {
    /// Number of set voxels, |A|.
    pub fn cardinality(&self) -> usize {
        self.iter().filter(|&&v| v).count()
    }
}

/// CT stack in Hounsfield units for one patient series.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct HuVolume {
    pub patient_id: String,
    pub voxels: Volume<i32>,
}

impl HuVolume {
    pub fn dims(&self) -> VolumeDims {
        self.voxels.dims()
    }
}

/// Expert tissue class of a voxel.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash, PartialOrd, Ord)]
pub enum TissueClass {
    Unlabeled = 0,
    Healthy = 1,
    GroundGlass = 2,
    Honeycombing = 3,
}

impl TissueClass {
    /// Decodes a label-file code (0..=3).
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(TissueClass::Unlabeled),
            1 => Some(TissueClass::Healthy),
            2 => Some(TissueClass::GroundGlass),
            3 => Some(TissueClass::Honeycombing),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

/// The three classes a block can carry. Index order is the network's output order.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash, PartialOrd, Ord)]
pub enum Tissue {
    Honeycombing = 0,
    GroundGlass = 1,
    Healthy = 2,
}

impl Tissue {
    pub const ALL: [Tissue; 3] = [Tissue::Honeycombing, Tissue::GroundGlass, Tissue::Healthy];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Tissue::ALL.get(i).copied()
    }

    pub fn label_class(self) -> TissueClass {
        match self {
            Tissue::Honeycombing => TissueClass::Honeycombing,
            Tissue::GroundGlass => TissueClass::GroundGlass,
            Tissue::Healthy => TissueClass::Healthy,
        }
    }

    pub fn from_label_class(c: TissueClass) -> Option<Self> {
        match c {
            TissueClass::Honeycombing => Some(Tissue::Honeycombing),
            TissueClass::GroundGlass => Some(Tissue::GroundGlass),
            TissueClass::Healthy => Some(Tissue::Healthy),
            TissueClass::Unlabeled => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tissue::Honeycombing => "honeycombing",
            Tissue::GroundGlass => "groundglass",
            Tissue::Healthy => "healthy",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Tissue::ALL.into_iter().find(|t| t.name() == s)
    }
}

impl fmt::Display for Tissue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-voxel expert labels paired with a [`HuVolume`].
pub type LabelMask = Volume<TissueClass>;
