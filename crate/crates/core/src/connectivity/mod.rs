//! Per-trial feature matrices from raw epochs: sample covariance and the
//! functional-connectivity estimators (coherence, imaginary coherence, phase
//! locking value, amplitude envelope correlation).

mod epochs;
mod features;
mod phase;
mod spectral;

pub use epochs::{sample_covariance, window_epochs, EpochSet, UNKNOWN_LABEL};
pub use features::{
    aec, extract_features, plv, ConnectivityMatrix, Estimator, FeatureBundle, FeatureConfig, FeatureRow,
    WelchConfig,
};
pub use phase::{aec_trial, analytic_signal, band_filter, plv_trial, AnalyticSignal, Coupling};
pub use spectral::{
    band_average, coherence, cross_spectral_density, imaginary_coherence, CrossSpectrum, SpectralMatrices, Taper,
    WelchParams,
};
