//! Non-parametric texture similarity built on the curvelet transform.
//!
//! An image is decomposed into scale/orientation wedges with a wrapping-based
//! fast discrete curvelet transform. Each wedge coefficient matrix is reduced
//! to its singular values, truncated adaptively at the matrix's effective rank
//! (the exponential of the entropy of the normalized singular values), and the
//! truncated spectra are concatenated into a feature vector. Two images are
//! compared with the Czekanowski coefficient of their feature vectors.
//!
//! ```no_run
//! use texsim::{curvelet, features, imgprep, similarity};
//!
//! let a = imgprep::load_gray("a.png")?;
//! let b = imgprep::load_gray("b.png")?;
//! let params = curvelet::make_params(a.height(), a.width(), None, None)?;
//! let fa = features::extract_features(&curvelet::forward(&a, &params)?)?;
//! let fb = features::extract_features(&curvelet::forward(&b, &params)?)?;
//! println!("{:.6}", similarity::czekanowski(&fa, &fb)?.value);
//! # Ok::<(), texsim::Error>(())
//! ```
//!
//! The [`retrieval`] module runs leave-one-out retrieval experiments and
//! reports P@1, MRR, MAP and the ROC curve with its AUC.

pub mod curvelet;
mod error;
pub mod features;
pub mod imgprep;
pub mod retrieval;
pub mod similarity;

pub use curvelet::{CurveletDecomposition, CurveletParams, CurveletTransform};
pub use error::{Error, Result};
pub use features::{FeatureFile, FeatureVector, WedgeSpectrum};
pub use imgprep::{DatasetLayout, GrayImage, RgbImage};
pub use retrieval::{RankedRetrieval, RetrievalReport, ScoreMatrix};
pub use similarity::{ScoreKind, SimilarityScore};
