//! Construction of destabilizing slope-restricted nonlinearities for
//! discrete-time Lurye systems, and verification of the resulting periodic
//! cycles.
//!
//! The pipeline: check the phase condition of a plant at a rational frequency
//! ([`phase_cert`]), build a periodic input/output pair for the linear part
//! ([`lti`], [`plant`]), interpolate it by a monotone or slope-restricted
//! nonlinearity ([`interp`]), then close the loop and confirm the cycle
//! ([`lurye_sim`]). [`construct`] wires the stages together.

pub mod construct;
pub mod interp;
pub mod io;
pub mod lti;
pub mod lurye_sim;
pub mod phase_cert;
pub mod plant;
pub mod precision;

pub use construct::{construct, ConstructError, ConstructionCertificate, Variant};
pub use interp::{
    DataPair, DataPairSet, InterpError, Interval, PiecewiseNonlinearity, SlopeLimit,
};
pub use lti::{
    LtiError, PeriodicSignal, RationalFrequency, StateSpaceRealization, TransferFunction,
};
pub use lurye_sim::{verify_cycle, CycleVerdict, NyquistResult, SimError};
pub use num_complex::Complex64;
pub use phase_cert::{CriticalSlope, PhaseCheck, PhaseError, SlopeBound};
pub use plant::{AnchorPlant, FrequencyResponse, Plant, PlantFile};

/// Serializes a complex number as `{"re": .., "im": ..}`.
pub mod complex_serde {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Parts {
        re: f64,
        im: f64,
    }

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        Parts { re: z.re, im: z.im }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let p = Parts::deserialize(d)?;
        Ok(Complex64::new(p.re, p.im))
    }
}
