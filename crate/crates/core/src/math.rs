// Float helpers routed through libm so results do not depend on the host libm.

#[inline]
pub(crate) fn pow(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}
