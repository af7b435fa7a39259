#include "roomabs/dataset.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "json_io.hpp"
#include "roomabs/error.hpp"
#include "roomabs/parallel.hpp"
#include "roomabs/random.hpp"

namespace roomabs {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string errno_text() { return std::strerror(errno); }

void encode_floats(std::span<const float> values, std::string& out) {
  out.resize(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(values[i]);
    for (int k = 0; k < 4; ++k) out[i * 4 + k] = static_cast<char>((u >> (8 * k)) & 0xFF);
  }
}

void decode_floats(const unsigned char* bytes, std::span<float> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u = 0;
    for (int k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(bytes[i * 4 + k]) << (8 * k);
    out[i] = std::bit_cast<float>(u);
  }
}

// Thin POSIX file so we can fsync and pread.
class File {
 public:
  File(const fs::path& path, int flags) : path_(path) {
    fd_ = ::open(path.c_str(), flags | O_CLOEXEC, 0644);
    if (fd_ < 0) throw IoError("cannot open '" + path.string() + "': " + errno_text());
  }
  ~File() {
    if (fd_ >= 0) ::close(fd_);
  }
  File(const File&) = delete;
  File& operator=(const File&) = delete;

  void write_all(const std::string& bytes) {
    std::size_t done = 0;
    while (done < bytes.size()) {
      const auto n = ::write(fd_, bytes.data() + done, bytes.size() - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw IoError("write failed for '" + path_.string() + "' at offset " +
                      std::to_string(offset_ + done) + ": " + errno_text());
      }
      done += static_cast<std::size_t>(n);
    }
    offset_ += done;
  }

  void read_at(std::size_t offset, unsigned char* buf, std::size_t n) const {
    std::size_t done = 0;
    while (done < n) {
      const auto r = ::pread(fd_, buf + done, n - done, static_cast<off_t>(offset + done));
      if (r < 0 && errno == EINTR) continue;
      if (r <= 0) {
        throw IoError("read failed for '" + path_.string() + "' at offset " +
                      std::to_string(offset + done) +
                      (r == 0 ? std::string(": unexpected end of file") : ": " + errno_text()));
      }
      done += static_cast<std::size_t>(r);
    }
  }

  void sync() {
    if (::fsync(fd_) != 0) throw IoError("fsync failed for '" + path_.string() + "'");
  }

  std::size_t size() const {
    const auto end = ::lseek(fd_, 0, SEEK_END);
    if (end < 0) throw IoError("cannot size '" + path_.string() + "'");
    return static_cast<std::size_t>(end);
  }

 private:
  fs::path path_;
  int fd_ = -1;
  std::size_t offset_ = 0;
};

void sync_dir(const fs::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

json manifest_json(const DatasetManifest& m) {
  json sim = m.sim_config.empty() ? json::object() : json::parse(m.sim_config);
  return {{"name", m.name},
          {"seed", m.seed},
          {"strategy", m.strategy},
          {"sim_config", sim},
          {"snr_db", std::isfinite(m.snr_db) ? json(m.snr_db) : json(nullptr)},
          {"count", m.count},
          {"sample_rate", m.sample_rate},
          {"vector_length", m.vector_length},
          {"label_schema", m.label_schema},
          {"fingerprint", m.fingerprint},
          {"config", m.config},
          {"rooms", "rooms/rooms.jsonl"}};
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  m.name = j.at("name").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.strategy = j.at("strategy").get<std::string>();
  m.sim_config = j.at("sim_config").dump();
  m.snr_db = j.at("snr_db").is_null() ? kNoNoise : j.at("snr_db").get<double>();
  m.count = j.at("count").get<std::size_t>();
  m.sample_rate = j.at("sample_rate").get<double>();
  m.vector_length = j.at("vector_length").get<std::size_t>();
  m.label_schema = j.at("label_schema").get<std::vector<std::string>>();
  m.fingerprint = j.at("fingerprint").get<std::string>();
  m.config = j.value("config", std::string());
  return m;
}

}  // namespace

struct DatasetWriter::Impl {
  fs::path dir;
  DatasetManifest manifest;
  File data;
  File rooms;
  std::uint64_t hash = kFnvOffset;
  std::size_t count = 0;
  std::string buffer;
  bool finished = false;

  Impl(const fs::path& d, DatasetManifest m)
      : dir(d),
        manifest(std::move(m)),
        data(prepare(d) / "data.f32", O_WRONLY | O_CREAT | O_TRUNC),
        rooms(d / "rooms" / "rooms.jsonl", O_WRONLY | O_CREAT | O_TRUNC) {}

  static fs::path prepare(const fs::path& d) {
    std::error_code ec;
    fs::create_directories(d / "rooms", ec);
    if (ec) throw IoError("cannot create '" + (d / "rooms").string() + "': " + ec.message());
    fs::remove(d / "manifest", ec);  // an unfinished set must not look complete
    return d;
  }
};

DatasetWriter::DatasetWriter(const fs::path& dir, DatasetManifest manifest)
    : impl_(new Impl(dir, std::move(manifest))) {}

DatasetWriter::~DatasetWriter() { delete impl_; }

void DatasetWriter::append(const DatasetItem& item) {
  auto& s = *impl_;
  if (s.finished) throw InvalidArgument("dataset already finished");
  if (item.input.size() != s.manifest.vector_length) {
    throw ShapeMismatch("item " + std::to_string(s.count) + " has length " +
                        std::to_string(item.input.size()) + ", dataset vectors have " +
                        std::to_string(s.manifest.vector_length));
  }
  std::vector<float> record(item.input);
  for (double a : item.label.alpha_bar) record.push_back(static_cast<float>(a));
  for (std::size_t b = 0; b < kNumBands; ++b) {
    record.push_back(item.label.s_bar ? static_cast<float>((*item.label.s_bar)[b])
                                      : std::numeric_limits<float>::quiet_NaN());
  }
  encode_floats(record, s.buffer);
  for (char c : s.buffer) {
    s.hash ^= static_cast<unsigned char>(c);
    s.hash *= kFnvPrime;
  }
  s.data.write_all(s.buffer);
  s.rooms.write_all(json(item.room).dump() + "\n");
  ++s.count;
}

DatasetManifest DatasetWriter::finish() {
  auto& s = *impl_;
  if (s.finished) return s.manifest;
  s.data.sync();
  s.rooms.sync();
  s.manifest.count = s.count;
  s.manifest.fingerprint = hex64(s.hash);
  const auto tmp = s.dir / "manifest.tmp";
  {
    File f(tmp, O_WRONLY | O_CREAT | O_TRUNC);
    f.write_all(manifest_json(s.manifest).dump(2) + "\n");
    f.sync();
  }
  std::error_code ec;
  fs::rename(tmp, s.dir / "manifest", ec);
  if (ec) throw IoError("cannot publish manifest in '" + s.dir.string() + "': " + ec.message());
  sync_dir(s.dir);
  s.finished = true;
  return s.manifest;
}

DatasetManifest write_dataset(const std::vector<DatasetItem>& items, const fs::path& dir,
                              DatasetManifest manifest) {
  if (!items.empty()) manifest.vector_length = items.front().input.size();
  DatasetWriter w(dir, std::move(manifest));
  for (const auto& it : items) w.append(it);
  return w.finish();
}

struct DatasetReader::Impl {
  fs::path dir;
  DatasetManifest manifest;
  File data;
  std::vector<RoomSpec> rooms;

  static DatasetManifest read_manifest(const fs::path& d) {
    std::ifstream f(d / "manifest");
    if (!f) throw IoError("no manifest in '" + d.string() + "' (missing or unfinished set)");
    try {
      return manifest_from_json(json::parse(f));
    } catch (const json::exception& e) {
      throw CorruptFile((d / "manifest").string() + ": " + e.what());
    }
  }

  explicit Impl(const fs::path& d)
      : dir(d), manifest(read_manifest(d)), data(d / "data.f32", O_RDONLY) {}
};

DatasetReader::DatasetReader(const fs::path& dir) : impl_(new Impl(dir)) {
  auto& s = *impl_;
  const std::size_t record_bytes = s.manifest.record_floats() * 4;
  const std::size_t expected = s.manifest.count * record_bytes;
  const std::size_t actual = s.data.size();
  if (actual != expected) {
    const auto at = std::min(actual, expected);
    delete impl_;
    throw CorruptFile((dir / "data.f32").string() + ": size " + std::to_string(actual) +
                      " bytes, manifest implies " + std::to_string(expected) + " (mismatch at offset " +
                      std::to_string(at) + ")");
  }
  std::ifstream rooms(dir / "rooms" / "rooms.jsonl");
  std::string line;
  std::size_t line_no = 0;
  try {
    while (std::getline(rooms, line)) {
      ++line_no;
      if (!line.empty()) s.rooms.push_back(json::parse(line).get<RoomSpec>());
    }
  } catch (const std::exception& e) {
    delete impl_;
    throw CorruptFile((dir / "rooms" / "rooms.jsonl").string() + ": line " +
                      std::to_string(line_no) + ": " + e.what());
  }
  if (s.rooms.size() != s.manifest.count) {
    const auto n = s.rooms.size();
    delete impl_;
    throw CorruptFile((dir / "rooms" / "rooms.jsonl").string() + ": " + std::to_string(n) +
                      " rooms for " + std::to_string(expected / record_bytes) + " records");
  }
}

DatasetReader::~DatasetReader() { delete impl_; }

const DatasetManifest& DatasetReader::manifest() const { return impl_->manifest; }

void DatasetReader::read_record(std::size_t i, std::span<float> input,
                                std::span<float> labels) const {
  const auto& m = impl_->manifest;
  if (i >= m.count) throw InvalidArgument("item index " + std::to_string(i) + " out of range");
  if (input.size() != m.vector_length || labels.size() != kLabelDim) {
    throw ShapeMismatch("record buffers do not match the dataset layout");
  }
  const std::size_t rec = m.record_floats();
  std::vector<unsigned char> bytes(rec * 4);
  impl_->data.read_at(i * rec * 4, bytes.data(), bytes.size());
  decode_floats(bytes.data(), input);
  decode_floats(bytes.data() + m.vector_length * 4, labels);
}

DatasetItem DatasetReader::item(std::size_t i) const {
  DatasetItem it;
  it.input.resize(manifest().vector_length);
  std::array<float, kLabelDim> labels{};
  read_record(i, it.input, labels);
  BandValues s{};
  bool has_s = true;
  for (std::size_t b = 0; b < kNumBands; ++b) {
    it.label.alpha_bar[b] = labels[b];
    s[b] = labels[kNumBands + b];
    has_s = has_s && !std::isnan(labels[kNumBands + b]);
  }
  if (has_s) it.label.s_bar = s;
  it.room = room(i);
  return it;
}

const RoomSpec& DatasetReader::room(std::size_t i) const {
  if (i >= impl_->rooms.size()) throw InvalidArgument("room index out of range");
  return impl_->rooms[i];
}

nn::Samples DatasetReader::load_samples(nn::OutputHead head) const {
  const auto& m = manifest();
  nn::Samples s;
  s.input_dim = m.vector_length;
  s.target_dim = nn::head_dim(head);
  s.fingerprint = m.fingerprint;
  s.inputs.resize(m.count * m.vector_length);
  s.targets.reserve(m.count * s.target_dim);
  std::array<float, kLabelDim> labels{};
  for (std::size_t i = 0; i < m.count; ++i) {
    read_record(i, std::span(s.inputs).subspan(i * m.vector_length, m.vector_length), labels);
    BandValues a{}, sc{};
    for (std::size_t b = 0; b < kNumBands; ++b) {
      a[b] = labels[b];
      sc[b] = labels[kNumBands + b];
    }
    if (head == nn::OutputHead::kAlphaAndScattering &&
        std::any_of(sc.begin(), sc.end(), [](double v) { return std::isnan(v); })) {
      throw ShapeMismatch("dataset has no scattering labels for the multi-task head");
    }
    const auto t = nn::make_target(head, a, sc);
    s.targets.insert(s.targets.end(), t.begin(), t.end());
  }
  return s;
}

std::vector<std::vector<std::size_t>> batches(std::size_t count, std::size_t batch_size,
                                              std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size == 0) throw InvalidArgument("batch size must be at least 1");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed ^ 0xBA7C4E5ull, epoch));
  for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < count; i += batch_size) {
    out.emplace_back(order.begin() + i, order.begin() + std::min(count, i + batch_size));
  }
  return out;
}

std::string sim_config_json(const SimConfig& c) {
  return json{{"sample_rate", c.sample_rate},
              {"n_rays", c.n_rays},
              {"max_image_order", c.max_image_order == kUnboundedOrder ? json(nullptr)
                                                                       : json(c.max_image_order)},
              {"max_time", c.max_time},
              {"air", {{"enabled", c.air.enabled},
                       {"temperature_c", c.air.temperature_c},
                       {"humidity", c.air.relative_humidity},
                       {"pressure_kpa", c.air.pressure_kpa}}},
              {"receiver_radius", c.receiver_radius},
              {"speed_of_sound", c.speed_of_sound},
              {"diffuse", c.diffuse}}
      .dump();
}

namespace {

DatasetItem make_item(const GenerationConfig& config, std::uint64_t seed, std::size_t i) {
  Rng rng(derive_seed(seed, i));
  DatasetItem it;
  it.room = sample_room(rng, config.strategy, config.geometry);
  const auto rir = simulate(it.room, config.sim, rng.next_u64());
  it.input = preprocess(rir, config.snr_db, rng);
  it.label = mean_absorption(it.room);
  it.label.s_bar = mean_scattering(it.room);
  return it;
}

}  // namespace

std::vector<DatasetItem> generate_items(const GenerationConfig& config, std::size_t count,
                                        std::uint64_t seed,
                                        const std::function<void(std::size_t)>& progress) {
  std::vector<DatasetItem> items(count);
  std::atomic<std::size_t> done{0};
  parallel_for(count, [&](std::size_t i) {
    items[i] = make_item(config, seed, i);
    const auto n = ++done;
    if (progress) progress(n);
  });
  return items;
}

DatasetManifest generate_dataset(const GenerationConfig& config, std::size_t count,
                                 std::uint64_t seed, const fs::path& dir, const std::string& name,
                                 const std::function<void(std::size_t)>& progress) {
  DatasetManifest m;
  m.name = name;
  m.seed = seed;
  m.strategy = config.strategy.name();
  m.sim_config = sim_config_json(config.sim);
  m.snr_db = config.snr_db;
  m.sample_rate = kModelSampleRate;
  m.vector_length = kInputLength;
  m.config = config.note;
  DatasetWriter w(dir, m);
  // Chunked so memory stays bounded for large sets.
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < count; start += kChunk) {
    const std::size_t n = std::min(kChunk, count - start);
    std::vector<DatasetItem> items(n);
    parallel_for(n, [&](std::size_t k) { items[k] = make_item(config, seed, start + k); });
    for (const auto& it : items) w.append(it);
    if (progress) progress(start + n);
  }
  return w.finish();
}

}  // namespace roomabs
