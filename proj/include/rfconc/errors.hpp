#pragma once

#include <stdexcept>
#include <string>

namespace rfconc {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct QuadratureNotConverged : Error { using Error::Error; };
struct UnboundedActivation : Error { using Error::Error; };
struct NegativeTail : Error { using Error::Error; };

struct DegenerateDraw : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct ZeroNormSample : Error { using Error::Error; };
struct AngleTooLarge : Error { using Error::Error; };
struct NoAdmissibleEll : Error { using Error::Error; };
struct NotUnitNorm : Error { using Error::Error; };

struct DimensionMismatch : Error { using Error::Error; };
struct TailNotConvergent : Error { using Error::Error; };
struct NotPositiveDefinite : Error { using Error::Error; };

struct SingularSystem : Error { using Error::Error; };
struct ZeroDiagonal : Error { using Error::Error; };
struct LambdaZero : Error { using Error::Error; };

struct InsufficientData : Error { using Error::Error; };
struct NonPositiveDiff : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

}  // namespace rfconc
