//! A numerical laboratory for the Möbius reparametrization action on
//! discretized maps from the 2-sphere.
//!
//! * [`mobius`]: PSL(2,C), its marked-point subgroups, KAK and exhaustions.
//! * [`sphere`]: icosphere mesh, stereographic chart, regions, point location.
//! * [`mapspace`]: discrete maps, the action `f ↦ f∘g`, stock generators.
//! * [`functionals`]: energy, Sobolev norms, diameter, volume.
//! * [`moment`]: the pseudo-moment map and moment-map centering.
//! * [`properness`]: orbit escape, separation, stabilizers, registration.

pub mod functionals;
pub mod mapspace;
pub mod mobius;
pub mod moment;
pub mod properness;
pub mod sphere;
