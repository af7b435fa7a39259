#include "roomabs/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "roomabs/baselines.hpp"
#include "roomabs/dsp.hpp"
#include "roomabs/error.hpp"
#include "roomabs/nn.hpp"
#include "roomabs/parallel.hpp"
#include "roomabs/random.hpp"

namespace roomabs::eval {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::pair<Method, std::string_view>, 7> kMethodNames = {{
    {Method::kEyring, "eyring"},
    {Method::kSabine, "sabine"},
    {Method::kCnnRb, "cnn_rb"},
    {Method::kMlpRb, "mlp_rb"},
    {Method::kCnnUnif, "cnn_unif"},
    {Method::kMlpUnif, "mlp_unif"},
    {Method::kCnnSpecular, "cnn_specular"},
}};

constexpr std::string_view kSpecularAblation = "specular_ablation";

}  // namespace

std::string_view method_name(Method m) {
  for (const auto& [k, n] : kMethodNames) {
    if (k == m) return n;
  }
  return "?";
}

Method method_from_name(std::string_view name) {
  for (const auto& [k, n] : kMethodNames) {
    if (n == name) return k;
  }
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

bool is_learned(Method m) { return m != Method::kEyring && m != Method::kSabine; }

ErrorSet absolute_errors(std::span<const BandEstimates> estimates,
                         std::span<const BandValues> labels) {
  if (estimates.size() != labels.size()) {
    throw ShapeMismatch(std::to_string(estimates.size()) + " estimates for " +
                        std::to_string(labels.size()) + " labels");
  }
  ErrorSet out;
  for (std::size_t r = 0; r < estimates.size(); ++r) {
    for (std::size_t b = 0; b < kNumBands; ++b) {
      if (!estimates[r][b]) {
        ++out.unavailable;
        continue;
      }
      const double e = *estimates[r][b];
      out.records.push_back({r, b, e, labels[r][b], std::abs(e - labels[r][b])});
    }
  }
  return out;
}

namespace {

// Linear interpolation between order statistics (position p·(n-1)).
double quantile_sorted(const std::vector<double>& v, double p) {
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

BoxStats box_stats(std::span<const double> values) {
  if (values.empty()) throw EmptyInput("box statistics of an empty list");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  BoxStats s;
  s.n = v.size();
  s.median = quantile_sorted(v, 0.5);
  s.q1 = quantile_sorted(v, 0.25);
  s.q3 = quantile_sorted(v, 0.75);
  const double iqr = s.q3 - s.q1;
  const double lo_fence = s.q1 - 1.5 * iqr, hi_fence = s.q3 + 1.5 * iqr;
  s.whisker_low = *std::lower_bound(v.begin(), v.end(), lo_fence);
  s.whisker_high = *(std::upper_bound(v.begin(), v.end(), hi_fence) - 1);
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(v.size()));
  return s;
}

BoxStats box_stats(const ErrorSet& errors) {
  std::vector<double> v;
  v.reserve(errors.records.size());
  for (const auto& r : errors.records) v.push_back(r.absolute_error);
  return box_stats(v);
}

std::array<std::optional<BoxStats>, kNumBands> band_stats(const ErrorSet& errors) {
  std::array<std::vector<double>, kNumBands> per;
  for (const auto& r : errors.records) per[r.band].push_back(r.absolute_error);
  std::array<std::optional<BoxStats>, kNumBands> out;
  for (std::size_t b = 0; b < kNumBands; ++b) {
    if (!per[b].empty()) out[b] = box_stats(per[b]);
  }
  return out;
}

const MethodResult& Report::result(Method m, std::size_t condition) const {
  for (const auto& r : conditions.at(condition).methods) {
    if (r.method == m) return r;
  }
  throw InvalidArgument("report has no results for " + std::string(method_name(m)));
}

std::vector<Method> default_methods(const std::string& family) {
  if (family == kSpecularAblation) return {Method::kCnnRb, Method::kCnnSpecular};
  return {Method::kEyring, Method::kSabine};
}

namespace {

std::string snr_label(double snr) {
  if (!std::isfinite(snr)) return "snr=inf";
  std::ostringstream s;
  s << "snr=" << snr;
  return s.str();
}

}  // namespace

Report run_experiment(const std::string& family, const std::vector<Method>& methods,
                      const ExperimentConfig& config,
                      const std::function<void(const std::string&)>& log) {
  const auto say = [&](const std::string& msg) {
    if (log) log(msg);
  };
  const bool ablation = family == kSpecularAblation;
  const TestFamily test_family = ablation ? TestFamily::kRealistic : family_from_name(family);
  if (methods.empty()) throw InvalidArgument("no methods requested");

  std::map<Method, nn::Model> models;
  for (Method m : methods) {
    if (!is_learned(m)) continue;
    const auto it = config.models.find(m);
    if (it == config.models.end() || !fs::exists(it->second)) {
      throw MissingModel("method " + std::string(method_name(m)) + " needs a model file" +
                         (it == config.models.end() ? std::string()
                                                    : " ('" + it->second.string() + "' missing)"));
    }
    models.emplace(m, nn::load_model(it->second, kInputLength));
  }

  Report report;
  report.family = family;

  TestSetRequest req;
  req.family = test_family;
  req.n = config.n_rooms;
  req.value = config.fixed_value;
  req.rt_lo = config.rt_lo;
  req.rt_hi = config.rt_hi;
  req.snr_levels = config.snr_levels;
  Rng rng(derive_seed(config.seed, 0xE7A1));
  say("crafting " + std::to_string(config.n_rooms) + " rooms (" +
      std::string(family_name(test_family)) + ")");
  report.rooms = craft_test_set(req, rng, config.sim, config.materials).rooms;
  for (const auto& room : report.rooms) report.labels.push_back(mean_absorption(room).alpha_bar);

  const std::size_t n = report.rooms.size();
  say("simulating " + std::to_string(n) + " rooms");
  const std::uint64_t sim_seed = derive_seed(config.seed, 0x51A1);
  const std::uint64_t noise_seed = derive_seed(config.seed, 0x7015E);
  const std::uint64_t classical_noise_seed = derive_seed(config.seed, 0xC1A5);
  std::vector<Rir> rirs(n);
  parallel_for(n, [&](std::size_t i) {
    rirs[i] = simulate(report.rooms[i], config.sim, derive_seed(sim_seed, i));
  });

  std::vector<double> levels{config.snr_db};
  if (test_family == TestFamily::kSnrSweep) levels = config.snr_levels;

  for (double snr : levels) {
    Condition cond;
    cond.label = snr_label(snr);
    cond.snr_db = snr;
    say("scoring " + cond.label);
    // Same noise realization at every level: only its scale changes.
    std::vector<float> inputs(n * kInputLength);
    parallel_for(n, [&](std::size_t i) {
      Rng noise(derive_seed(noise_seed, i));
      const auto v = preprocess(rirs[i], snr, noise);
      std::copy(v.begin(), v.end(), inputs.begin() + i * kInputLength);
    });

    for (Method m : methods) {
      MethodResult res;
      res.method = m;
      res.estimates.resize(n);
      if (is_learned(m)) {
        const auto pred = nn::predict_batch(models.at(m), {n, kInputLength, inputs});
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t b = 0; b < kNumBands; ++b) res.estimates[i][b] = pred[i][b];
        }
      } else {
        const auto cm = m == Method::kSabine ? ClassicalMethod::kSabine : ClassicalMethod::kEyring;
        parallel_for(n, [&](std::size_t i) {
          // Full-length 48 kHz response; the SNR refers to its first 500 ms.
          Rng noise(derive_seed(classical_noise_seed, i));
          try {
            const Rir noisy = add_noise_snr(rirs[i], snr, noise, kInputLength / kModelSampleRate);
            const auto est =
                estimate_alpha_classical(noisy, report.rooms[i].geometry, config.depth_db, cm);
            for (std::size_t b = 0; b < kNumBands; ++b) {
              if (est.bands[b].alpha) res.estimates[i][b] = std::clamp(*est.bands[b].alpha, 0.0, 1.0);
            }
          } catch (const Error&) {
            // every band stays unavailable
          }
        });
      }
      res.errors = absolute_errors(res.estimates, report.labels);
      cond.methods.push_back(std::move(res));
    }
    report.conditions.push_back(std::move(cond));
  }
  return report;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

std::string stats_row(const std::string& cond, std::string_view method, const std::string& band,
                      const BoxStats& s, std::size_t unavailable) {
  std::ostringstream o;
  o << cond << ',' << method << ',' << band << ',' << s.n << ',' << unavailable << ','
    << num(s.median) << ',' << num(s.q1) << ',' << num(s.q3) << ',' << num(s.whisker_low) << ','
    << num(s.whisker_high) << ',' << num(s.mean) << ',' << num(s.std) << '\n';
  return o.str();
}

}  // namespace

void write_report(const Report& report, const fs::path& dir, const std::string& header) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  const std::string comment = header.empty() ? "" : "# " + header + "\n";

  std::ostringstream stats;
  stats << comment
        << "condition,method,band,n,unavailable,median,q1,q3,whisker_low,whisker_high,mean,std\n";
  std::ostringstream summary;
  summary << comment << "family " << report.family << ", " << report.rooms.size() << " rooms\n";

  const auto& first = report.conditions.front().methods;
  for (std::size_t mi = 0; mi < first.size(); ++mi) {
    const Method m = first[mi].method;
    std::ostringstream raw;
    raw << comment << "condition,room,band_hz,estimate,label,absolute_error\n";
    for (const auto& cond : report.conditions) {
      const auto& res = cond.methods[mi];
      for (const auto& r : res.errors.records) {
        raw << cond.label << ',' << r.room << ',' << num(kBandCenters[r.band]) << ','
            << num(r.estimate) << ',' << num(r.label) << ',' << num(r.absolute_error) << '\n';
      }
      if (res.errors.records.empty()) {
        summary << cond.label << "  " << method_name(m) << ": no available estimates ("
                << res.errors.unavailable << " bands unavailable)\n";
        continue;
      }
      const auto pooled = box_stats(res.errors);
      stats << stats_row(cond.label, method_name(m), "all", pooled, res.errors.unavailable);
      const auto per = band_stats(res.errors);
      for (std::size_t b = 0; b < kNumBands; ++b) {
        if (!per[b]) continue;
        std::size_t missing = 0;
        for (const auto& e : res.estimates) missing += e[b] ? 0 : 1;
        stats << stats_row(cond.label, method_name(m), num(kBandCenters[b]), *per[b], missing);
      }
      char line[160];
      std::snprintf(line, sizeof line,
                    "%-10s %-13s median %.4f  mean %.4f  q1 %.4f  q3 %.4f  n %zu  unavailable %zu\n",
                    cond.label.c_str(), std::string(method_name(m)).c_str(), pooled.median,
                    pooled.mean, pooled.q1, pooled.q3, pooled.n, res.errors.unavailable);
      summary << line;
    }
    write_file(dir / (report.family + "_" + std::string(method_name(m)) + ".csv"), raw.str());
  }
  write_file(dir / (report.family + "_boxstats.csv"), stats.str());
  write_file(dir / (report.family + "_summary.txt"), summary.str());
}

}  // namespace roomabs::eval
