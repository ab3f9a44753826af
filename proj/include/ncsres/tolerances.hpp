#pragma once

namespace ncsres {

/// Relative strictness margin: a "< 0" matrix must satisfy
/// lambda_max <= -kFeasibilityMargin * ||M||_F (and symmetrically for "> 0").
inline constexpr double kFeasibilityMargin = 1e-7;

/// Relative slack allowed on non-strict "<= 0" conditions.
inline constexpr double kPsdSlack = 1e-9;

}  // namespace ncsres
