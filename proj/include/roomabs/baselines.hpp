#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "roomabs/core.hpp"
#include "roomabs/dsp.hpp"
#include "roomabs/rir.hpp"

namespace roomabs {

inline constexpr double kSabineConstant = 0.163;

// 0.163 V / (S rt). Throws InvalidArgument unless all inputs are positive.
double sabine(double volume, double surface, double rt);

// -ln(1 - alpha_sabine). Throws DomainError when alpha_sabine >= 1.
double eyring(double alpha_sabine);

enum class ClassicalMethod { kSabine, kEyring };

std::string_view method_name(ClassicalMethod m);

// One band of a classical estimate. alpha is empty when the band could not be
// estimated; `failure` then says why.
struct BandEstimate {
  std::optional<double> alpha;
  std::optional<RtEstimate> rt;
  std::string failure;
};

struct ClassicalEstimate {
  ClassicalMethod method = ClassicalMethod::kEyring;
  std::array<BandEstimate, kNumBands> bands;
  double volume = 0.0;
  double surface = 0.0;

  std::size_t available() const;
};

// Sabine or Eyring from precomputed Schroeder curves.
ClassicalEstimate estimate_alpha_from_curves(const SchroederCurve& curves,
                                             const RoomGeometry& geometry, double depth_db,
                                             ClassicalMethod method);

// Octave filter bank -> Schroeder integration -> RT -> Sabine (-> Eyring).
ClassicalEstimate estimate_alpha_classical(const Rir& rir, const RoomGeometry& geometry,
                                           double depth_db = 30.0,
                                           ClassicalMethod method = ClassicalMethod::kEyring);

enum class CurveClass { kA, kB };

inline constexpr double kScreeningDepthDb = 10.0;  // -5 to -15 dB
inline constexpr double kScreeningMinR2 = 0.985;

// A when the curve reaches -15 dB and the [-5,-15] dB line fit has
// R^2 >= 0.985, B otherwise.
CurveClass classify_schroeder(const DecayCurve& curve);

struct ReferenceBand {
  std::optional<double> alpha;  // median of the A-screened estimates
  std::size_t count = 0;

  // Throws EmptyInput when no A estimate existed for the band.
  double value() const;
};

// Per band, the median estimate over measurements whose curve in that band is
// in A. flags[i][b] screens estimates[i] band b. A band without any usable A
// estimate is left empty.
std::array<ReferenceBand, kNumBands> aggregate_reference(
    std::span<const ClassicalEstimate> estimates,
    std::span<const std::array<CurveClass, kNumBands>> flags);

double median(std::vector<double> values);

}  // namespace roomabs
