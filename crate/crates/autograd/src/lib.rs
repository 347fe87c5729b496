//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Operations are methods on [`Var`], recorded on a [`Graph`] tape. The op
//! set is what convolutional restoration networks and windowed-attention
//! descriptor networks need: dense and depthwise convolutions, unitary 2-D
//! Fourier transforms, Haar wavelets, batched matrix products, axis
//! normalizations and soft-assignment residual aggregation.
//!
//! ```
//! use autograd::{Graph, Tensor};
//!
//! let g = Graph::new();
//! let x = g.variable(Tensor::new(&[3], vec![1.0, 2.0, 3.0]));
//! let y = x.square().sum();
//! let grads = g.backward(y);
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0, 6.0]);
//! ```

pub mod gradcheck;
mod graph;
mod ops;
pub mod optim;
mod params;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use ops::elementwise::scalar;
pub use ops::shape::bilinear_matrix;
pub use ops::wavelet::{haar_forward, haar_inverse, BANDS};
pub use params::{Binder, Params};
pub use tensor::Tensor;
