#include "dataset.hpp"

#include <cmath>
#include <cstdio>
#include <memory>

#include "binio.hpp"
#include "errors.hpp"

namespace bci {

namespace {

constexpr char kMagic[4] = {'B', 'C', 'I', 'E'};
constexpr uint16_t kVersion = 1;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

std::vector<int> Dataset::class_counts() const {
  std::vector<int> counts(static_cast<size_t>(n_classes), 0);
  for (const EegEpoch& t : trials) {
    if (t.label < 0 || t.label >= n_classes) fail_data("dataset: trial label out of range");
    ++counts[static_cast<size_t>(t.label)];
  }
  return counts;
}

std::vector<uint8_t> encode_bcie(const Dataset& ds) {
  std::vector<uint8_t> buf;
  buf.reserve(64 + ds.trials.size() *
                       (1 + static_cast<size_t>(ds.channels) * ds.samples_per_trial * 4));
  buf.insert(buf.end(), kMagic, kMagic + 4);
  binio::put_u16(buf, kVersion);
  binio::put_u32(buf, static_cast<uint32_t>(std::lround(ds.fs * 1000.0)));
  binio::put_u16(buf, static_cast<uint16_t>(ds.channels));
  binio::put_u16(buf, static_cast<uint16_t>(ds.n_classes));
  binio::put_u32(buf, static_cast<uint32_t>(ds.trials.size()));
  binio::put_u32(buf, static_cast<uint32_t>(ds.samples_per_trial));
  binio::put_u32(buf, static_cast<uint32_t>(ds.baseline_samples));
  for (const EegEpoch& t : ds.trials) {
    if (t.channels != ds.channels || t.samples != ds.samples_per_trial) {
      fail_data("save_bcie: trial dimensions do not match dataset header");
    }
    binio::put_u8(buf, static_cast<uint8_t>(t.label));
    for (double v : t.data) binio::put_f32(buf, static_cast<float>(v));
  }
  return buf;
}

void save_bcie(const Dataset& ds, const std::string& path) {
  const std::vector<uint8_t> buf = encode_bcie(ds);
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) fail_data("save_bcie: cannot open " + path + " for writing");
  if (std::fwrite(buf.data(), 1, buf.size(), f.get()) != buf.size()) {
    fail_data("save_bcie: short write to " + path);
  }
}

Dataset decode_bcie(const uint8_t* bytes, size_t size) {
  binio::Reader r{bytes, size, 0};
  uint8_t magic[4];
  for (auto& m : magic) {
    if (!r.get_u8(m)) fail_data("load_bcie: truncated header");
  }
  if (std::memcmp(magic, kMagic, 4) != 0) fail_data("load_bcie: bad magic, not a BCIE file");
  uint16_t version = 0, channels = 0, n_classes = 0;
  uint32_t fs_millihz = 0, n_trials = 0, samples = 0, baseline = 0;
  if (!r.get_u16(version) || !r.get_u32(fs_millihz) || !r.get_u16(channels) ||
      !r.get_u16(n_classes) || !r.get_u32(n_trials) || !r.get_u32(samples) ||
      !r.get_u32(baseline)) {
    fail_data("load_bcie: truncated header");
  }
  if (version != kVersion) {
    fail_data("load_bcie: unsupported version " + std::to_string(version));
  }
  if (channels == 0 || samples == 0) fail_data("load_bcie: empty geometry");

  Dataset ds;
  ds.channels = channels;
  ds.fs = static_cast<double>(fs_millihz) / 1000.0;
  ds.n_classes = n_classes;
  ds.samples_per_trial = static_cast<int>(samples);
  ds.baseline_samples = static_cast<int>(baseline);
  ds.trials.reserve(n_trials);
  const size_t values = static_cast<size_t>(channels) * samples;
  for (uint32_t ti = 0; ti < n_trials; ++ti) {
    EegEpoch e;
    e.channels = channels;
    e.samples = static_cast<int>(samples);
    e.fs = ds.fs;
    e.onset_index = static_cast<int>(baseline);
    uint8_t label = 0;
    if (!r.get_u8(label)) fail_data("load_bcie: truncated trial header");
    if (label >= n_classes) fail_data("load_bcie: trial label out of range");
    e.label = label;
    e.data.resize(values);
    for (size_t i = 0; i < values; ++i) {
      float v = 0.0f;
      if (!r.get_f32(v)) fail_data("load_bcie: truncated trial data");
      e.data[i] = static_cast<double>(v);
    }
    ds.trials.push_back(std::move(e));
  }
  if (r.remaining() != 0) fail_data("load_bcie: trailing bytes after last trial");
  return ds;
}

Dataset load_bcie(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) fail_data("load_bcie: cannot open " + path);
  std::fseek(f.get(), 0, SEEK_END);
  const long fsize = std::ftell(f.get());
  std::fseek(f.get(), 0, SEEK_SET);
  std::vector<uint8_t> buf(static_cast<size_t>(fsize));
  if (std::fread(buf.data(), 1, buf.size(), f.get()) != buf.size()) {
    fail_data("load_bcie: short read from " + path);
  }
  return decode_bcie(buf.data(), buf.size());
}

}  // namespace bci
