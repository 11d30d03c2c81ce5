//! Anisotropic function spaces of Triebel-Lizorkin and Besov type on periodic grids.

pub mod anisotropy;
pub mod diffeo;
pub mod error;
pub mod faadibruno;
pub mod family;
pub mod grid;
pub mod jet;
pub mod littlewood_paley;
pub mod local_means;
pub mod mixed_norms;
pub mod multipliers;
pub mod numeric;
pub mod spaces;

pub use anisotropy::{aniso_dilate, aniso_distance, AnisoPoint, AnisotropyVector};
pub use error::{Error, Result};
pub use grid::{fft_forward, fft_inverse, resample, GridFunction, GridSpec, SpectralFunction};
pub use littlewood_paley::{build_partition, BumpProfile, DecompositionSystem, PartitionReport};
pub use mixed_norms::{lp_lq_norm, lp_vec_norm, IntegrabilityVector};
pub use multipliers::{apply_multiplier, axis_power_symbol, lambda_r, lift_roundtrip, symbol_seminorm, xi_symbol, MultiplierSymbol};
pub use numeric::RatioStats;
pub use spaces::{b_norm, f_norm, h_norm, holder_norm, SpaceParams};
pub use diffeo::{compose, compose_inverse, diffeo_constants, hypothesis_ok, invariance_experiment, Diffeomorphism, MapKind};
pub use faadibruno::{enumerate_terms, evaluate, term_count, ChainRuleExpansion, MultiIndex, PartitionTerm};
pub use jet::{Jet, JetSpace, Unary};
pub use local_means::{build_kernels, local_means_norm, peetre_maximal, KernelPair, LocalMeansSystem, MaximalParams};
