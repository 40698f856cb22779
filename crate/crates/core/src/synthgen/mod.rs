//! Toy style-based generator, discriminator, procedural data and GAN
//! pretraining.

mod dataset;
mod discriminator;
mod generator;
mod modconv;
mod pretrain;

pub use dataset::sample_dataset;
pub use discriminator::Discriminator;
pub use generator::{layer_table, ContentCode, Generator, GeneratorHash, LayerRole, LayerSpec};
pub use modconv::{modulated_conv2d, DEMOD_EPS};
pub use pretrain::{logit_gap, pretrain_gan, PretrainLog, PretrainedGan};
