pub mod eigen;
pub mod ldlt;
pub mod minnorm;
pub mod sparse;

pub use eigen::{dense_generalized, lowest_eigenpairs, lowest_eigenpairs_from, EigenPairs, KrylovOptions, ShiftInvertPencil};
pub use ldlt::{EnvelopeLdlt, Inertia};
pub use minnorm::{combine, gram_matrix, min_norm_point, MinNormPoint};
pub use sparse::{axpy, dot, norm, CsrMatrix};
