//! Structural learning and integrative decomposition of multi-view data.
//!
//! Given `d` matched views `X_i` (`n × p_i`), the model is
//! `X = U V(S)ᵀ + E`, where `U` has orthonormal columns and the loadings
//! `V` are block-sparse according to a binary structure `S`: each component
//! is globally shared, shared by a subset of views, or individual to one view.
//!
//! The workflow has three steps:
//!
//! 1. [`pmf::extract_candidates`] solves a group-penalised factorisation over a
//!    `λ` grid and collects the distinct supports as candidate structures.
//! 2. [`bcv::select_structure`] scores each candidate by bi-cross-validation.
//! 3. [`fit::fit_with_structure`] fits the chosen structure and orthogonalises
//!    the loadings within each pattern.
//!
//! [`simulate`] reproduces the synthetic benchmarks used to check all of this.

pub mod bcv;
pub mod error;
pub mod fit;
pub mod linalg;
pub mod pmf;
pub mod preprocess;
pub mod simulate;
pub mod structure;

pub use error::{Result, SlideError};
pub use fit::{fit_with_structure, FitOptions, SlideModel, VarianceReport};
pub use pmf::{extract_candidates, CandidateOptions, CandidateSet, LambdaGrid};
pub use preprocess::{center_and_scale, MultiViewData, RawViews};
pub use structure::{Pattern, StructureMatrix};
