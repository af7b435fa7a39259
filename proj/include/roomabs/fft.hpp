#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>

namespace roomabs {

// Real-input FFT of fixed length n. forward() produces the n/2+1 non-negative
// frequency bins; inverse() takes them back and applies the 1/n scale, so
// inverse(forward(x)) == x up to rounding. Instances are not thread-safe;
// create one per thread.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(RealFft&&) noexcept;
  RealFft& operator=(RealFft&&) noexcept;

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  // in.size() <= n (zero-padded); out.size() == bins().
  void forward(std::span<const double> in, std::span<std::complex<double>> out);
  // in.size() == bins(); out.size() <= n (truncated).
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

 private:
  struct Impl;
  std::size_t n_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace roomabs
