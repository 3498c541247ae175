//! Neural network building blocks with hand-written gradients.

pub mod adam;
pub mod discriminator;
pub mod generator;
pub mod lstm;
pub mod params;
pub mod spectral;

pub use adam::{Adam, AdamConfig};
pub use discriminator::{CriticTrace, Discriminator, DiscriminatorConfig, DiscriminatorParams, NormalizedCritic};
pub use generator::{Generator, GeneratorConfig, GeneratorTrace};
pub use params::Parameters;
pub use spectral::{spectral_normalize, PowerIteration, SpectralNorm};
