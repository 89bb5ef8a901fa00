//! Traveling waves, patched peakon weak solutions and cusped planar curves
//! for the modified Camassa–Holm equation
//! `m_t + 2k u_x + [(u^2 - u_x^2) m]_x = 0`, `m = u - u_xx`.
//!
//! Modules follow the computation pipeline: [`phase_plane`] analyses the
//! level sets of the traveling-wave first integral, [`wave_builder`] turns
//! level-set arcs into profiles and patched peakons, [`peakon_dynamics`]
//! simulates interacting peakons, [`weak_verifier`] checks the weak form,
//! and [`curve_flows`] maps periodic profiles to closed planar curves.

pub mod curve_flows;
pub mod numerics;
pub mod peakon_dynamics;
pub mod phase_plane;
pub mod wave_builder;
pub mod weak_verifier;
