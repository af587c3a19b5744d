#include "checkpoint.hpp"

#include <cstdio>
#include <memory>

#include <json.hpp>

#include "binio.hpp"
#include "errors.hpp"

namespace bci {

namespace {

constexpr char kMagic[4] = {'B', 'C', 'I', 'M'};
constexpr uint16_t kVersion = 1;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

nlohmann::json config_document(const ModelConfig& mc, int T, double s, const TrainConfig& tc,
                               uint64_t seed, const std::string& fingerprint) {
  nlohmann::json doc;
  doc["model"] = {
      {"channels_in", mc.channels_in}, {"length_in", mc.length_in},
      {"base_width", mc.base_width},   {"level_mult", mc.level_mult},
      {"kernel_len", mc.kernel_len},   {"emb_dim", mc.emb_dim},
      {"n_classes", mc.n_classes},     {"dropout_p", mc.dropout_p},
      {"groups", mc.groups},
  };
  doc["schedule"] = {{"T", T}, {"s", s}};
  doc["train"] = {
      {"lr", tc.lr},
      {"batch_size", tc.batch_size},
      {"max_epochs", tc.max_epochs},
      {"early_stop_train_acc", tc.early_stop_train_acc},
      {"early_stop_val_acc", tc.early_stop_val_acc},
      {"val_fraction", tc.val_fraction},
      {"w_ddpm", tc.w_ddpm},
      {"w_rec", tc.w_rec},
      {"w_ce", tc.w_ce},
  };
  doc["seed"] = seed;
  doc["dataset_fingerprint"] = fingerprint;
  return doc;
}

std::vector<uint8_t> read_file(const std::string& path, const char* who) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) fail_data(std::string(who) + ": cannot open " + path);
  std::fseek(f.get(), 0, SEEK_END);
  const long size = std::ftell(f.get());
  std::fseek(f.get(), 0, SEEK_SET);
  std::vector<uint8_t> buf(static_cast<size_t>(size));
  if (std::fread(buf.data(), 1, buf.size(), f.get()) != buf.size()) {
    fail_data(std::string(who) + ": short read from " + path);
  }
  return buf;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const TrainConfig& train_config,
                     const std::string& dataset_fingerprint) {
  const std::string doc = config_document(model.config, model.schedule.T, model.schedule.s,
                                          train_config, train_config.seed, dataset_fingerprint)
                              .dump();
  std::vector<uint8_t> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  binio::put_u16(buf, kVersion);
  binio::put_u32(buf, static_cast<uint32_t>(doc.size()));
  buf.insert(buf.end(), doc.begin(), doc.end());
  for (float v : model.params.to_f32()) binio::put_f32(buf, v);

  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) fail_data("save_checkpoint: cannot open " + path + " for writing");
  if (std::fwrite(buf.data(), 1, buf.size(), f.get()) != buf.size()) {
    fail_data("save_checkpoint: short write to " + path);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::vector<uint8_t> buf = read_file(path, "load_checkpoint");
  binio::Reader r{buf.data(), buf.size(), 0};
  uint8_t magic[4];
  for (auto& m : magic) {
    if (!r.get_u8(m)) fail_data("load_checkpoint: truncated header");
  }
  if (std::memcmp(magic, kMagic, 4) != 0) {
    fail_data("load_checkpoint: bad magic, not a BCIM file");
  }
  uint16_t version = 0;
  uint32_t doc_len = 0;
  if (!r.get_u16(version) || !r.get_u32(doc_len)) fail_data("load_checkpoint: truncated header");
  if (version != kVersion) {
    fail_data("load_checkpoint: unsupported version " + std::to_string(version));
  }
  if (r.remaining() < doc_len) fail_data("load_checkpoint: truncated config document");
  const std::string doc(reinterpret_cast<const char*>(buf.data()) + r.pos, doc_len);
  r.pos += doc_len;

  nlohmann::json j = nlohmann::json::parse(doc, nullptr, false);
  if (j.is_discarded()) fail_data("load_checkpoint: config document is not valid JSON");

  Checkpoint ckpt;
  try {
    const auto& m = j.at("model");
    ckpt.model_config.channels_in = m.at("channels_in").get<int>();
    ckpt.model_config.length_in = m.at("length_in").get<int>();
    ckpt.model_config.base_width = m.at("base_width").get<int>();
    ckpt.model_config.level_mult = m.at("level_mult").get<std::array<int, 3>>();
    ckpt.model_config.kernel_len = m.at("kernel_len").get<std::array<int, 3>>();
    ckpt.model_config.emb_dim = m.at("emb_dim").get<int>();
    ckpt.model_config.n_classes = m.at("n_classes").get<int>();
    ckpt.model_config.dropout_p = m.at("dropout_p").get<double>();
    ckpt.model_config.groups = m.at("groups").get<int>();
    ckpt.schedule_T = j.at("schedule").at("T").get<int>();
    ckpt.schedule_s = j.at("schedule").at("s").get<double>();
    const auto& t = j.at("train");
    ckpt.train_config.lr = t.at("lr").get<double>();
    ckpt.train_config.batch_size = t.at("batch_size").get<int>();
    ckpt.train_config.max_epochs = t.at("max_epochs").get<int>();
    ckpt.train_config.early_stop_train_acc = t.at("early_stop_train_acc").get<double>();
    ckpt.train_config.early_stop_val_acc = t.at("early_stop_val_acc").get<double>();
    ckpt.train_config.val_fraction = t.at("val_fraction").get<double>();
    ckpt.train_config.w_ddpm = t.at("w_ddpm").get<double>();
    ckpt.train_config.w_rec = t.at("w_rec").get<double>();
    ckpt.train_config.w_ce = t.at("w_ce").get<double>();
    ckpt.seed = j.at("seed").get<uint64_t>();
    ckpt.train_config.seed = ckpt.seed;
    ckpt.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail_data(std::string("load_checkpoint: config document invalid: ") + e.what());
  }

  ckpt.params = param_layout(ckpt.model_config);
  const int64_t expected = ckpt.params.total_size();
  if (r.remaining() != static_cast<size_t>(expected) * 4) {
    fail_data("load_checkpoint: parameter payload does not match the config document");
  }
  std::vector<float> flat(static_cast<size_t>(expected));
  for (float& v : flat) r.get_f32(v);
  ckpt.params.from_f32(flat);
  return ckpt;
}

Model to_model(const Checkpoint& ckpt) {
  Model m;
  m.config = ckpt.model_config;
  m.schedule = NoiseSchedule::cosine(ckpt.schedule_T, ckpt.schedule_s);
  m.params = ckpt.params;
  return m;
}

std::string fingerprint_bytes(const uint8_t* data, size_t size) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

std::string file_fingerprint(const std::string& path) {
  const std::vector<uint8_t> buf = read_file(path, "file_fingerprint");
  return fingerprint_bytes(buf.data(), buf.size());
}

}  // namespace bci
