#include "roomabs/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "roomabs/error.hpp"

namespace roomabs {

double sabine(double volume, double surface, double rt) {
  if (!(volume > 0.0) || !(surface > 0.0) || !(rt > 0.0)) {
    throw InvalidArgument("Sabine needs positive volume, surface and reverberation time");
  }
  return kSabineConstant * volume / (surface * rt);
}

double eyring(double alpha_sabine) {
  if (!(alpha_sabine < 1.0)) {
    throw DomainError("Eyring undefined for Sabine absorption " + std::to_string(alpha_sabine));
  }
  return -std::log1p(-alpha_sabine);
}

std::string_view method_name(ClassicalMethod m) {
  return m == ClassicalMethod::kSabine ? "sabine" : "eyring";
}

std::size_t ClassicalEstimate::available() const {
  return static_cast<std::size_t>(
      std::count_if(bands.begin(), bands.end(), [](const BandEstimate& b) { return b.alpha.has_value(); }));
}

ClassicalEstimate estimate_alpha_from_curves(const SchroederCurve& curves,
                                             const RoomGeometry& geometry, double depth_db,
                                             ClassicalMethod method) {
  geometry.validate();
  ClassicalEstimate est;
  est.method = method;
  est.volume = geometry.volume();
  est.surface = geometry.surface_area();
  for (std::size_t b = 0; b < kNumBands; ++b) {
    auto& band = est.bands[b];
    try {
      band.rt = estimate_rt(curves[b], depth_db);
      const double a = sabine(est.volume, est.surface, band.rt->rt);
      band.alpha = method == ClassicalMethod::kSabine ? a : eyring(a);
    } catch (const Error& e) {
      band.alpha.reset();
      band.failure = e.what();
    }
  }
  return est;
}

ClassicalEstimate estimate_alpha_classical(const Rir& rir, const RoomGeometry& geometry,
                                           double depth_db, ClassicalMethod method) {
  const auto bands = octave_filter_bank(rir);
  SchroederCurve curves;
  std::array<std::string, kNumBands> undefined;
  for (std::size_t b = 0; b < kNumBands; ++b) {
    try {
      curves[b] = backward_integrate(bands[b], rir.sample_rate);
    } catch (const UndefinedCurve& e) {
      undefined[b] = e.what();
    }
  }
  auto est = estimate_alpha_from_curves(curves, geometry, depth_db, method);
  for (std::size_t b = 0; b < kNumBands; ++b) {
    if (!undefined[b].empty()) {
      est.bands[b] = BandEstimate{};
      est.bands[b].failure = undefined[b];
    }
  }
  return est;
}

CurveClass classify_schroeder(const DecayCurve& curve) {
  try {
    const RtEstimate rt = estimate_rt(curve, kScreeningDepthDb);
    return rt.r_squared >= kScreeningMinR2 ? CurveClass::kA : CurveClass::kB;
  } catch (const InsufficientDecay&) {
    return CurveClass::kB;
  }
}

double median(std::vector<double> values) {
  if (values.empty()) throw EmptyInput("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double ReferenceBand::value() const {
  if (!alpha) throw EmptyInput("no A-class estimate in this band");
  return *alpha;
}

std::array<ReferenceBand, kNumBands> aggregate_reference(
    std::span<const ClassicalEstimate> estimates,
    std::span<const std::array<CurveClass, kNumBands>> flags) {
  if (estimates.size() != flags.size()) {
    throw InvalidArgument("one screening flag set is needed per estimate");
  }
  std::array<ReferenceBand, kNumBands> out;
  for (std::size_t b = 0; b < kNumBands; ++b) {
    std::vector<double> kept;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
      if (flags[i][b] == CurveClass::kA && estimates[i].bands[b].alpha) {
        kept.push_back(*estimates[i].bands[b].alpha);
      }
    }
    out[b].count = kept.size();
    if (!kept.empty()) out[b].alpha = median(std::move(kept));
  }
  return out;
}

}  // namespace roomabs
