//! Float helpers that do not depend on `std`.

pub fn round(x: f64) -> f64 {
    libm::round(x)
}

pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

pub fn hypot(a: f64, b: f64) -> f64 {
    libm::hypot(a, b)
}
