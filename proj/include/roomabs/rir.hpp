#pragma once

#include <vector>

namespace roomabs {

// Sampled pressure waveform.
struct Rir {
  std::vector<double> samples;
  double sample_rate = 48000.0;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

}  // namespace roomabs
