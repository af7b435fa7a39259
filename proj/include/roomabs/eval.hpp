#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "roomabs/core.hpp"
#include "roomabs/sampler.hpp"
#include "roomabs/simulator.hpp"

namespace roomabs::eval {

enum class Method { kEyring, kSabine, kCnnRb, kMlpRb, kCnnUnif, kMlpUnif, kCnnSpecular };

std::string_view method_name(Method m);
Method method_from_name(std::string_view name);
bool is_learned(Method m);

// Per-band estimates; nullopt marks a band the method could not produce.
using BandEstimates = std::array<std::optional<double>, kNumBands>;

struct ErrorRecord {
  std::size_t room = 0;
  std::size_t band = 0;
  double estimate = 0.0;
  double label = 0.0;
  double absolute_error = 0.0;
};

struct ErrorSet {
  std::vector<ErrorRecord> records;  // one per available (room, band)
  std::size_t unavailable = 0;
};

// Throws ShapeMismatch when the two lists differ in length.
ErrorSet absolute_errors(std::span<const BandEstimates> estimates,
                         std::span<const BandValues> labels);

struct BoxStats {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::size_t n = 0;
};

// Tukey box statistics with linearly interpolated quartiles. Throws
// EmptyInput on an empty list.
BoxStats box_stats(std::span<const double> values);
BoxStats box_stats(const ErrorSet& errors);
// Per band; bands without any record are nullopt.
std::array<std::optional<BoxStats>, kNumBands> band_stats(const ErrorSet& errors);

// Test-set RIRs are simulated for this long so the classical methods see the
// full decay; learned methods still get the first 500 ms.
inline constexpr double kEvalMaxTime = 2.0;

inline SimConfig evaluation_sim(SimConfig base) {
  base.max_time = kEvalMaxTime;
  return base;
}

struct ExperimentConfig {
  std::size_t n_rooms = 100;
  std::uint64_t seed = 0;
  SimConfig sim = evaluation_sim(SimConfig::fast());
  double snr_db = 30.0;  // noise on every family except snr_sweep, measured on the first 500 ms
  std::vector<double> snr_levels = {10.0, 20.0, 30.0, 40.0, 50.0, kNoNoise};
  double depth_db = 30.0;
  double fixed_value = 0.5;  // scattering_fixed / absorption_fixed
  double rt_lo = 0.3, rt_hi = 0.8;
  std::map<Method, std::filesystem::path> models;
  MaterialsTable materials = MaterialsTable::defaults();
};

struct MethodResult {
  Method method = Method::kEyring;
  std::vector<BandEstimates> estimates;
  ErrorSet errors;
};

struct Condition {
  std::string label;  // e.g. "snr=30"
  double snr_db = 30.0;
  std::vector<MethodResult> methods;
};

struct Report {
  std::string family;
  std::vector<RoomSpec> rooms;
  std::vector<BandValues> labels;
  std::vector<Condition> conditions;

  const MethodResult& result(Method m, std::size_t condition = 0) const;
};

// Families: the test-set families plus "specular_ablation" (the realistic set
// scored by the diffuse-trained and the specular-trained CNN). Learned
// methods need an entry in config.models, otherwise MissingModel is thrown
// before any simulation starts.
Report run_experiment(const std::string& family, const std::vector<Method>& methods,
                      const ExperimentConfig& config,
                      const std::function<void(const std::string&)>& log = {});

// Default method list for a family.
std::vector<Method> default_methods(const std::string& family);

// <family>_<method>.csv with raw records, <family>_boxstats.csv and
// <family>_summary.txt. `header` is written as a leading comment line.
void write_report(const Report& report, const std::filesystem::path& dir,
                  const std::string& header);

}  // namespace roomabs::eval
