// roomabs command-line front end.

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "roomabs/baselines.hpp"
#include "roomabs/dataset.hpp"
#include "roomabs/dsp.hpp"
#include "roomabs/error.hpp"
#include "roomabs/eval.hpp"
#include "roomabs/nn.hpp"
#include "roomabs/parallel.hpp"
#include "roomabs/sampler.hpp"
#include "roomabs/simulator.hpp"
#include "roomabs/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace roomabs;

namespace {

struct Global {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool paper = false;
  bool fast = false;
};

SimConfig profile_sim(const Global& g) { return g.paper ? SimConfig::paper() : SimConfig::fast(); }

// Resolved configuration, echoed on stderr and into every output file.
std::string echo(const std::string& command, const Global& g, json args) {
  json j{{"tool", "roomabs"},
         {"command", command},
         {"seed", g.seed},
         {"threads", g.threads},
         {"profile", g.paper ? "paper" : "fast"},
         {"args", std::move(args)}};
  const auto text = j.dump();
  std::cerr << "# config " << text << "\n";
  return text;
}

std::string fmt(double v, int prec = 4) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw IoError("cannot open '" + p.string() + "'");
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

double parse_snr(const std::string& s) {
  if (s == "inf" || s == "none") return kNoNoise;
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw InvalidArgument("bad SNR '" + s + "' (number of dB or 'inf')");
  }
}

// Input vector for a model from a waveform file at 48 or 16 kHz.
std::vector<float> model_input(const Rir& rir) {
  if (std::abs(rir.sample_rate - 48000.0) < 0.5) {
    Rng unused(0);
    return preprocess(rir, kNoNoise, unused);
  }
  if (std::abs(rir.sample_rate - kModelSampleRate) < 0.5) {
    std::vector<double> w(rir.samples);
    w.resize(kInputLength, 0.0);
    double peak = 0.0;
    for (double v : w) peak = std::max(peak, std::abs(v));
    if (!(peak > 0.0)) throw ZeroSignal("cannot normalize a silent signal");
    std::vector<float> out(kInputLength);
    for (std::size_t i = 0; i < kInputLength; ++i) out[i] = static_cast<float>(w[i] / peak);
    return out;
  }
  throw SampleRateError("waveform must be sampled at 48 or 16 kHz, got " +
                        fmt(rir.sample_rate, 0) + " Hz");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Room acoustics toolkit: simulation, datasets, classical and learned "
               "mean absorption estimation."};
  app.require_subcommand(1);
  Global g;
  app.add_option("--seed", g.seed, "Master random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (1 gives bit-reproducible output)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  auto* paper_flag = app.add_flag("--paper", g.paper,
                                  "Paper-scale profile: 50,000 rays, 500-room test sets");
  auto* fast_flag = app.add_flag("--fast", g.fast, "Desk-scale profile (default): 10,000 rays");
  paper_flag->excludes(fast_flag);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate a room spec into a 48 kHz RIR");
  std::string sim_room, sim_out, sim_echogram;
  bool sim_specular = false;
  double sim_max_time = 0.5;
  int sim_order = -1;
  std::size_t sim_rays = 0;
  sim->add_option("room", sim_room, "Room spec JSON file")->required()->check(CLI::ExistingFile);
  sim->add_option("output", sim_out, "Output WAV file")->required();
  sim->add_option("--echogram", sim_echogram, "Also write the echogram as CSV");
  sim->add_flag("--specular-only", sim_specular, "Disable diffuse rain");
  sim->add_option("--max-time", sim_max_time, "Simulated duration in seconds")
      ->capture_default_str();
  sim->add_option("--order", sim_order, "Image-source order (default from profile)");
  sim->add_option("--rays", sim_rays, "Diffuse-rain rays (default from profile)");

  // dataset
  auto* ds = app.add_subcommand("dataset", "Generate training and development sets");
  std::string ds_strategy = "rb", ds_out, ds_snr = "30", ds_ranges;
  std::size_t ds_train = 15000, ds_dev = 5000;
  bool ds_specular = false;
  ds->add_option("--strategy", ds_strategy, "Sampling strategy")
      ->check(CLI::IsMember({"rb", "unif"}))
      ->capture_default_str();
  ds->add_option("--train", ds_train, "Training set size")->capture_default_str();
  ds->add_option("--dev", ds_dev, "Development set size")->capture_default_str();
  ds->add_option("--out", ds_out, "Output directory (default: data_<strategy>)");
  ds->add_option("--snr", ds_snr, "Noise level in dB, or inf")->capture_default_str();
  ds->add_option("--ranges", ds_ranges, "Material range file (JSON) for the RB strategy")
      ->check(CLI::ExistingFile);
  ds->add_flag("--specular-only", ds_specular, "Disable diffuse rain (ablation data)");

  // analyze
  auto* an = app.add_subcommand("analyze", "Classical RT / Sabine / Eyring analysis of an RIR");
  std::string an_wav, an_room;
  double an_lx = 0, an_ly = 0, an_lz = 0, an_depth = 30.0;
  an->add_option("rir", an_wav, "RIR WAV file")->required()->check(CLI::ExistingFile);
  an->add_option("--lx", an_lx, "Room length in x (m)");
  an->add_option("--ly", an_ly, "Room length in y (m)");
  an->add_option("--lz", an_lz, "Room height (m)");
  an->add_option("--room", an_room, "Take the geometry from a room spec JSON file")
      ->check(CLI::ExistingFile);
  an->add_option("--depth", an_depth, "Decay depth X of RT_X in dB")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Train a network on dataset directories");
  std::string tr_arch = "cnn", tr_head = "alpha", tr_train, tr_dev, tr_out, tr_curve;
  nn::TrainConfig tc;
  tr->add_option("--arch", tr_arch, "Architecture")
      ->check(CLI::IsMember({"cnn", "mlp"}))
      ->capture_default_str();
  tr->add_option("--head", tr_head, "Output head")
      ->check(CLI::IsMember({"alpha", "inverse_alpha", "alpha_and_scattering"}))
      ->capture_default_str();
  tr->add_option("--train", tr_train, "Training set directory")->required();
  tr->add_option("--dev", tr_dev, "Development set directory")->required();
  tr->add_option("--out", tr_out, "Model file")->required();
  tr->add_option("--curve", tr_curve, "Loss curve CSV (default: <out>.loss.csv)");
  tr->add_option("--epochs", tc.epochs, "Epochs")->capture_default_str();
  tr->add_option("--batch", tc.batch_size, "Batch size")->capture_default_str();
  tr->add_option("--lr", tc.learning_rate, "ADAM learning rate")->capture_default_str();

  // eval
  auto* ev = app.add_subcommand("eval", "Run a simulated evaluation experiment");
  std::string ev_family = "realistic", ev_out = "report", ev_snr = "30";
  std::vector<std::string> ev_methods, ev_models;
  std::size_t ev_rooms = 0;
  double ev_depth = 30.0, ev_value = 0.5, ev_rt_lo = 0.3, ev_rt_hi = 0.8;
  ev->add_option("--family", ev_family,
                 "realistic, cube_like, flat, elongated, rt_constrained, snr_sweep, "
                 "scattering_fixed, absorption_fixed or specular_ablation")
      ->capture_default_str();
  ev->add_option("--methods", ev_methods,
                 "eyring, sabine, cnn_rb, mlp_rb, cnn_unif, mlp_unif, cnn_specular")
      ->delimiter(',');
  ev->add_option("--model", ev_models, "Model for a learned method, as method=path")
      ->delimiter(',');
  ev->add_option("--rooms", ev_rooms, "Rooms in the test set (default 100, 500 with --paper)");
  ev->add_option("--out", ev_out, "Report directory")->capture_default_str();
  ev->add_option("--snr", ev_snr, "Noise level in dB for non-sweep families")
      ->capture_default_str();
  ev->add_option("--depth", ev_depth, "Decay depth for the classical methods")
      ->capture_default_str();
  ev->add_option("--value", ev_value, "Fixed coefficient for *_fixed families")
      ->capture_default_str();
  ev->add_option("--rt-lo", ev_rt_lo, "rt_constrained lower RT30 bound (s)")
      ->capture_default_str();
  ev->add_option("--rt-hi", ev_rt_hi, "rt_constrained upper RT30 bound (s)")
      ->capture_default_str();

  // infer
  auto* inf = app.add_subcommand("infer", "Estimate mean absorption with a trained model");
  std::string inf_model, inf_wav;
  inf->add_option("--model", inf_model, "Model file")->required()->check(CLI::ExistingFile);
  inf->add_option("rir", inf_wav, "RIR WAV file at 48 or 16 kHz")
      ->required()
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  set_thread_count(g.threads);

  try {
    if (*sim) {
      auto cfg = profile_sim(g);
      cfg.max_time = sim_max_time;
      cfg.diffuse = !sim_specular;
      if (sim_order >= 0) cfg.max_image_order = sim_order;
      if (sim_rays > 0) cfg.n_rays = sim_rays;
      const auto header = echo("simulate", g,
                               {{"room", sim_room},
                                {"output", sim_out},
                                {"sim", json::parse(sim_config_json(cfg))}});
      const auto spec = room_spec_from_json(read_text(sim_room));
      const auto eg = simulate_echogram(spec, cfg, g.seed);
      write_wav(sim_out, render_rir(eg, cfg), header);
      if (!sim_echogram.empty()) {
        std::ofstream f(sim_echogram);
        if (!f) throw IoError("cannot open '" + sim_echogram + "' for writing");
        f << "# " << header << "\n";
        write_echogram(f, eg);
      }
      std::cout << "wrote " << sim_out << " (" << eg.specular.size() << " specular, "
                << eg.diffuse.size() << " diffuse arrivals)\n";
    } else if (*ds) {
      GenerationConfig gc;
      gc.strategy = ds_strategy == "rb" ? SamplingStrategy::rb() : SamplingStrategy::unif();
      if (!ds_ranges.empty()) gc.strategy.materials = MaterialRanges::load(ds_ranges);
      gc.sim = profile_sim(g);
      gc.sim.diffuse = !ds_specular;
      gc.snr_db = parse_snr(ds_snr);
      const fs::path out = ds_out.empty() ? "data_" + ds_strategy : ds_out;
      const auto header = echo("dataset", g,
                               {{"strategy", ds_strategy},
                                {"train", ds_train},
                                {"dev", ds_dev},
                                {"out", out.string()},
                                {"snr", ds_snr},
                                {"sim", json::parse(sim_config_json(gc.sim))}});
      gc.note = header;
      const std::pair<std::string, std::size_t> sets[] = {{"train", ds_train}, {"dev", ds_dev}};
      for (std::size_t k = 0; k < 2; ++k) {
        const auto& [name, count] = sets[k];
        if (count == 0) continue;
        const auto progress = [&, name = name, count = count](std::size_t done) {
          std::cerr << "\r" << name << ": " << done << "/" << count << std::flush;
        };
        const auto m =
            generate_dataset(gc, count, derive_seed(g.seed, k + 1), out / name, name, progress);
        std::cerr << "\n";
        std::cout << name << ": " << m.count << " items in " << (out / name).string()
                  << " (fingerprint " << m.fingerprint << ")\n";
      }
    } else if (*an) {
      RoomGeometry geom;
      if (!an_room.empty()) {
        geom = room_spec_from_json(read_text(an_room)).geometry;
      } else {
        geom = {an_lx, an_ly, an_lz};
      }
      geom.validate();
      echo("analyze", g,
           {{"rir", an_wav}, {"lx", geom.lx}, {"ly", geom.ly}, {"lz", geom.lz}, {"depth", an_depth}});
      const auto rir = read_wav(an_wav);
      const auto curves = schroeder_curves(rir);
      const auto sab = estimate_alpha_from_curves(curves, geom, an_depth, ClassicalMethod::kSabine);
      const auto eyr = estimate_alpha_from_curves(curves, geom, an_depth, ClassicalMethod::kEyring);
      std::cout << "band_hz\trt" << an_depth << "_s\tsabine\teyring\tclass\tr2\n";
      for (std::size_t b = 0; b < kNumBands; ++b) {
        const auto& e = eyr.bands[b];
        const auto cls = classify_schroeder(curves[b]) == CurveClass::kA ? "A" : "B";
        std::cout << fmt(kBandCenters[b], 0) << '\t' << (e.rt ? fmt(e.rt->rt) : "nan") << '\t'
                  << (sab.bands[b].alpha ? fmt(*sab.bands[b].alpha) : "nan") << '\t'
                  << (e.alpha ? fmt(*e.alpha) : "nan") << '\t' << cls << '\t'
                  << (e.rt ? fmt(e.rt->r_squared) : "nan") << '\n';
      }
    } else if (*tr) {
      tc.seed = g.seed;
      const auto head = nn::head_from_name(tr_head);
      const auto spec = tr_arch == "cnn" ? nn::ModelSpec::cnn(head) : nn::ModelSpec::mlp(head);
      const auto header = echo("train", g,
                               {{"arch", tr_arch},
                                {"head", tr_head},
                                {"train", tr_train},
                                {"dev", tr_dev},
                                {"out", tr_out},
                                {"epochs", tc.epochs},
                                {"batch", tc.batch_size},
                                {"lr", tc.learning_rate}});
      const auto train_set = DatasetReader(tr_train).load_samples(head);
      const auto dev_set = DatasetReader(tr_dev).load_samples(head);
      std::cerr << "training " << tr_arch << " on " << train_set.size() << " items, dev "
                << dev_set.size() << "\n";
      auto result = nn::train(spec, train_set, dev_set, tc, [&](const nn::EpochRecord& r) {
        std::cerr << "epoch " << r.epoch << "  train " << fmt(r.train_loss, 6) << "  dev "
                  << fmt(r.dev_loss, 6) << "\n";
      });
      result.model.provenance.config = header;
      nn::save_model(result.model, tr_out);
      const std::string curve = tr_curve.empty() ? tr_out + ".loss.csv" : tr_curve;
      std::ofstream f(curve);
      if (!f) throw IoError("cannot open '" + curve + "' for writing");
      f << "# " << header << "\nepoch,train_loss,dev_loss\n";
      for (const auto& r : result.curve) {
        f << r.epoch << ',' << fmt(r.train_loss, 9) << ',' << fmt(r.dev_loss, 9) << '\n';
      }
      std::cout << "wrote " << tr_out << " (best epoch " << result.model.provenance.best_epoch
                << ", dev loss " << fmt(result.model.provenance.dev_loss, 6) << ")\n";
    } else if (*ev) {
      eval::ExperimentConfig ec;
      ec.seed = g.seed;
      ec.sim = eval::evaluation_sim(profile_sim(g));
      ec.n_rooms = ev_rooms > 0 ? ev_rooms : (g.paper ? 500 : 100);
      ec.snr_db = parse_snr(ev_snr);
      ec.depth_db = ev_depth;
      ec.fixed_value = ev_value;
      ec.rt_lo = ev_rt_lo;
      ec.rt_hi = ev_rt_hi;
      json models = json::object();
      for (const auto& m : ev_models) {
        const auto eq = m.find('=');
        if (eq == std::string::npos) throw InvalidArgument("--model expects method=path, got '" + m + "'");
        const auto method = eval::method_from_name(m.substr(0, eq));
        ec.models[method] = m.substr(eq + 1);
        models[m.substr(0, eq)] = m.substr(eq + 1);
      }
      std::vector<eval::Method> methods;
      for (const auto& m : ev_methods) methods.push_back(eval::method_from_name(m));
      if (methods.empty()) methods = eval::default_methods(ev_family);
      json method_names = json::array();
      for (auto m : methods) method_names.push_back(eval::method_name(m));
      const auto header = echo("eval", g,
                               {{"family", ev_family},
                                {"methods", method_names},
                                {"models", models},
                                {"rooms", ec.n_rooms},
                                {"snr", ev_snr},
                                {"depth", ev_depth},
                                {"value", ev_value},
                                {"rt_lo", ev_rt_lo},
                                {"rt_hi", ev_rt_hi},
                                {"sim", json::parse(sim_config_json(ec.sim))}});
      const auto report = eval::run_experiment(ev_family, methods, ec,
                                               [](const std::string& s) { std::cerr << s << "\n"; });
      eval::write_report(report, ev_out, header);
      std::cout << read_text(fs::path(ev_out) / (ev_family + "_summary.txt"));
    } else if (*inf) {
      echo("infer", g, {{"model", inf_model}, {"rir", inf_wav}});
      const auto model = nn::load_model(inf_model, kInputLength);
      const auto alpha = nn::predict(model, model_input(read_wav(inf_wav)));
      std::cout << "band_hz\talpha_bar\n";
      for (std::size_t b = 0; b < kNumBands; ++b) {
        std::cout << fmt(kBandCenters[b], 0) << '\t' << fmt(alpha[b]) << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
