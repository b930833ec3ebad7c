//! Surface-fitting kernel that reconstructs a C⁰-continuous complex of
//! bicubic rational Bézier patches from a mesh or point cloud and exports it
//! as STEP parametric geometry.
//!
//! Pipeline: normalize the input to the unit cube, voxelize its surface,
//! flood-fill away internal faces, turn each boundary quad into a bicubic
//! patch sharing pooled control vertices with its neighbors, then optimize
//! deformations and weights against sampled target points with a Chamfer
//! objective plus tangent-continuity and Laplacian regularizers.

pub mod bezier;
pub mod complex;
pub mod error;
pub mod fit;
pub mod io;
pub mod kdtree;
pub mod math;
pub mod mesh;
pub mod metrics;
pub mod shapes;
pub mod voxel;

pub use bezier::{ControlGrid, PatchGradients, SurfacePoint};
pub use complex::{ControlVertexPool, PatchComplex, SharedEdge, TessellatedMesh};
pub use error::{Error, Result};
pub use fit::{FitConfig, FitReport};
pub use math::Vec3;
pub use mesh::{PointCloud, TriangleMesh};
pub use metrics::MetricReport;
pub use voxel::SparseVoxelGrid;
