//! Stylization terms: depth-warped pseudo views, feature guidance and the
//! five weighted losses.

pub mod features;
pub mod losses;
pub mod matching;
pub mod pseudo_view;
