#pragma once

#include <cstdint>
#include <string>

#include "model.hpp"
#include "train.hpp"

namespace bci {

// BCIM container: "BCIM" magic, u16 version, u32-length-prefixed JSON config
// document (model config, schedule constants, train config, seed, dataset
// fingerprint), then the flat f32 little-endian parameters in declaration
// order. Round-trips byte-exactly.
struct Checkpoint {
  ModelConfig model_config;
  int schedule_T = 1000;
  double schedule_s = 0.008;
  TrainConfig train_config;
  uint64_t seed = 0;
  std::string dataset_fingerprint;
  nn::ParamStore params;
};

void save_checkpoint(const std::string& path, const Model& model, const TrainConfig& train_config,
                     const std::string& dataset_fingerprint);

Checkpoint load_checkpoint(const std::string& path);

Model to_model(const Checkpoint& ckpt);

// FNV-1a 64 hash as 16 hex digits.
std::string fingerprint_bytes(const uint8_t* data, size_t size);
std::string file_fingerprint(const std::string& path);

}  // namespace bci
