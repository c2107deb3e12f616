//! Finite quotients of finitely generated subgroups of `SL_d(Z)`: exact
//! arithmetic mod `q`, group enumeration, random walks, Fourier analysis on
//! `(Z/qZ)^D`, spectral gaps, p-adic exponentials and representation checks.

pub mod fourier;
pub mod grpenum;
pub mod modq;
pub mod padic;
pub mod qr;
pub mod spectral;
pub mod walk;
