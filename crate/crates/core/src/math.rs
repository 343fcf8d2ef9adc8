//! Float helpers routed through `libm`, so results do not depend on the
//! platform's libm and the crate builds without `std`.

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

/// `x - floor(x)`, in `[0, 1)`.
#[inline]
pub fn frac(x: f64) -> f64 {
    let f = x - floor(x);
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// `-x ln x` with the `0 ln 0 = 0` convention.
#[inline]
pub fn xlnx_neg(x: f64) -> f64 {
    if x > 0.0 {
        -x * ln(x)
    } else {
        0.0
    }
}

/// Length of the overlap of `[a0, a1)` and `[b0, b1)`.
#[inline]
pub fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    let lo = if a0 > b0 { a0 } else { b0 };
    let hi = if a1 < b1 { a1 } else { b1 };
    if hi > lo {
        hi - lo
    } else {
        0.0
    }
}
