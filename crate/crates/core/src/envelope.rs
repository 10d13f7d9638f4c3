//! Algebraic-decay envelopes `c1 |phi| (1 + c2 |phi|^(mu-1) t)^(-1/(mu-1))`.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateCurve {
    pub c1: f64,
    pub c2: f64,
    pub mu: f64,
}

impl EstimateCurve {
    pub fn bound(&self, phi_norm: f64, t: f64) -> f64 {
        if phi_norm == 0.0 {
            return 0.0;
        }
        let e = self.mu - 1.0;
        self.c1 * phi_norm * (1.0 + self.c2 * phi_norm.powf(e) * t).powf(-1.0 / e)
    }
}

/// Serializes non-finite values as JSON `null` and reads `null` back as
/// `+inf`; caps are infinite when the delay vanishes.
pub(crate) mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
