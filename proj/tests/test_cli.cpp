#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "roomabs/core.hpp"
#include "roomabs/nn.hpp"

using namespace roomabs;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(ROOMABS_CLI) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p);
  std::array<char, 4096> buf;
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::vector<std::vector<std::string>> table(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream l(line);
    std::string c;
    while (std::getline(l, c, '\t')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

fs::path workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "roomabs_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    RoomSpec r;
    r.geometry = {4, 5, 3};
    r.source = {1, 1.5, 1.2};
    r.receiver = {3, 3.5, 1.6};
    for (auto& s : r.surfaces) s = {BandProfile::flat(0.15), BandProfile::flat(0.5)};
    std::ofstream(d / "room.json") << room_spec_to_json(r);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("exit codes") {
  CHECK(run("--help").code == 0);
  CHECK(run("").code == 2);
  CHECK(run("simulate --bogus").code == 2);
  CHECK(run("--paper --fast analyze x.wav").code == 2);
  CHECK(run("analyze " + (workdir() / "room.json").string() + " --lx 4 --ly 5 --lz 3").code == 1);
}

TEST_CASE("simulate then analyze") {
  const auto d = workdir();
  const auto wav = (d / "rir.wav").string();
  auto sim = run("--threads 1 simulate " + (d / "room.json").string() + " " + wav +
                 " --rays 2000 --max-time 1.0 --echogram " + (d / "echo.csv").string());
  REQUIRE(sim.code == 0);
  CHECK(fs::file_size(wav) > 48000 * 4);
  CHECK(fs::exists(d / "echo.csv"));

  const auto an = run("analyze --lx 4 --ly 5 --lz 3 --depth 30 " + wav);
  REQUIRE(an.code == 0);
  const auto rows = table(an.out);
  REQUIRE(rows.size() == 7);
  CHECK(rows[0][0] == "band_hz");
  CHECK(rows[0][1] == "rt30_s");
  for (std::size_t b = 1; b < 7; ++b) {
    REQUIRE(rows[b].size() == 6);
    CHECK(std::stod(rows[b][0]) == kBandCenters[b - 1]);
    const double sab = std::stod(rows[b][2]), eyr = std::stod(rows[b][3]);
    CHECK(eyr >= sab);
    CHECK(eyr == doctest::Approx(0.15).epsilon(0.5));
  }

  CHECK(run("analyze --lx 0 --ly 5 --lz 3 " + wav).code == 1);
  CHECK(run("analyze --room " + (d / "room.json").string() + " " + wav).out == an.out);
}

TEST_CASE("infer reports six coefficients in range") {
  const auto d = workdir();
  const auto wav = (d / "rir16.wav").string();
  REQUIRE(run("simulate " + (d / "room.json").string() + " " + wav + " --rays 500 --max-time 0.6").code == 0);
  const auto model = d / "m.absk";
  nn::save_model(nn::Model::initialize(nn::ModelSpec::mlp(), 1), model);
  const auto r = run("infer --model " + model.string() + " " + wav);
  REQUIRE(r.code == 0);
  const auto rows = table(r.out);
  REQUIRE(rows.size() == 7);
  for (std::size_t b = 1; b < 7; ++b) {
    const double a = std::stod(rows[b][1]);
    CHECK((a >= 0 && a <= 1));
  }
  nn::save_model(nn::Model::initialize(nn::ModelSpec::mlp(nn::OutputHead::kAlpha, 100), 1), model);
  CHECK(run("infer --model " + model.string() + " " + wav).code == 1);
}

TEST_CASE("dataset generation is reproducible through the CLI") {
  const auto d = workdir();
  const std::string common = "--seed 3 --threads 1 dataset --train 2 --dev 1 --strategy unif --out ";
  const auto a = run(common + (d / "ds_a").string());
  const auto b = run(common + (d / "ds_b").string());
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  const auto strip = [](std::string s, const std::string& dir) {
    for (auto p = s.find(dir); p != std::string::npos; p = s.find(dir)) s.erase(p, dir.size());
    return s;
  };
  CHECK(strip(a.out, (d / "ds_a").string()) == strip(b.out, (d / "ds_b").string()));
}

}
