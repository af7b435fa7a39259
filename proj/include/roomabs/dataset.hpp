#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "roomabs/core.hpp"
#include "roomabs/dsp.hpp"
#include "roomabs/nn.hpp"
#include "roomabs/sampler.hpp"
#include "roomabs/simulator.hpp"

namespace roomabs {

// Labels stored after each input vector: alpha_bar then s_bar.
inline constexpr std::size_t kLabelDim = 2 * kNumBands;

struct DatasetManifest {
  std::string name;
  std::uint64_t seed = 0;
  std::string strategy;     // "rb", "unif", or a free-form descriptor
  std::string sim_config;   // JSON text
  double snr_db = 30.0;
  std::size_t count = 0;
  double sample_rate = 16000.0;
  std::size_t vector_length = kInputLength;
  std::vector<std::string> label_schema{"alpha_bar[6]", "s_bar[6]"};
  std::string fingerprint;  // hash of data.f32
  std::string config;       // free-form run configuration echo

  std::size_t record_floats() const { return vector_length + kLabelDim; }
};

struct DatasetItem {
  std::vector<float> input;
  AbsorptionLabel label;
  RoomSpec room;
};

// Streams items into <dir>/data.f32 and <dir>/rooms/rooms.jsonl. finish()
// syncs both to disk and writes <dir>/manifest last, so a directory with a
// manifest is always complete.
class DatasetWriter {
 public:
  DatasetWriter(const std::filesystem::path& dir, DatasetManifest manifest);
  ~DatasetWriter();
  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  void append(const DatasetItem& item);
  DatasetManifest finish();

 private:
  struct Impl;
  Impl* impl_;
};

DatasetManifest write_dataset(const std::vector<DatasetItem>& items,
                              const std::filesystem::path& dir, DatasetManifest manifest);

// Random access reader. item(i) costs one positioned read; safe to call from
// several threads.
class DatasetReader {
 public:
  explicit DatasetReader(const std::filesystem::path& dir);
  ~DatasetReader();
  DatasetReader(const DatasetReader&) = delete;
  DatasetReader& operator=(const DatasetReader&) = delete;

  const DatasetManifest& manifest() const;
  std::size_t size() const { return manifest().count; }

  // Input vector and labels of item i; room specs come from room(i).
  void read_record(std::size_t i, std::span<float> input, std::span<float> labels) const;
  DatasetItem item(std::size_t i) const;
  const RoomSpec& room(std::size_t i) const;

  // Whole set as training data for the given head.
  nn::Samples load_samples(nn::OutputHead head) const;

 private:
  struct Impl;
  Impl* impl_;
};

// Shuffled index batches for one epoch. The permutation depends only on
// (seed, epoch); the last batch may be short.
std::vector<std::vector<std::size_t>> batches(std::size_t count, std::size_t batch_size,
                                              std::uint64_t seed, std::uint64_t epoch);

struct GenerationConfig {
  SamplingStrategy strategy = SamplingStrategy::rb();
  GeometryRanges geometry;
  SimConfig sim = SimConfig::fast();
  double snr_db = 30.0;
  std::string note;  // copied into the manifest's config field
};

// Samples, simulates and preprocesses `count` rooms. Item i depends only on
// (seed, i), so the result is independent of the worker count.
std::vector<DatasetItem> generate_items(const GenerationConfig& config, std::size_t count,
                                        std::uint64_t seed,
                                        const std::function<void(std::size_t)>& progress = {});

DatasetManifest generate_dataset(const GenerationConfig& config, std::size_t count,
                                 std::uint64_t seed, const std::filesystem::path& dir,
                                 const std::string& name,
                                 const std::function<void(std::size_t)>& progress = {});

std::string sim_config_json(const SimConfig& config);

}  // namespace roomabs
