//! Fixtures shared by the benchmarks.

use lurye_core::{construct, ConstructionCertificate, Plant, RationalFrequency, SlopeLimit, TransferFunction};

/// `z / (z^2 - 1.8 z + 0.81)`.
pub fn example_plant() -> Plant {
    Plant::Rational(
        TransferFunction::new(vec![1.0, 0.0], vec![1.0, -1.8, 0.81]).expect("stable plant"),
    )
}

/// Slope construction at `(2, 7)` just above the critical slope.
pub fn example_certificate() -> ConstructionCertificate {
    let freq = RationalFrequency::new(2, 7).expect("coprime");
    construct(&example_plant(), freq, false, SlopeLimit::Finite(1.3028373692567092 * 1.0001))
        .expect("feasible construction")
}
