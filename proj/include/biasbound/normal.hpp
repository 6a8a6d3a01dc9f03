#pragma once

namespace bb {

/// Standard normal CDF.
double normal_cdf(double z);

/// Standard normal quantile. Acklam's rational approximation followed by one
/// Halley step against erfc; absolute error below 1e-13 on (1e-300, 1 - 1e-16).
double normal_quantile(double p);

}  // namespace bb
