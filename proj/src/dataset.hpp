#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bci {

// One trial: channel-major [channels x samples] window with its label and the
// absolute sample index of imagery onset inside the window.
struct EegEpoch {
  int channels = 0;
  int samples = 0;
  double fs = 0.0;
  std::vector<double> data;  // channel-major
  int label = -1;            // -1 = unlabeled
  int onset_index = 0;

  double* channel(int c) { return data.data() + static_cast<size_t>(c) * samples; }
  const double* channel(int c) const { return data.data() + static_cast<size_t>(c) * samples; }
};

struct Dataset {
  int channels = 0;
  double fs = 0.0;
  int n_classes = 0;
  int samples_per_trial = 0;
  int baseline_samples = 0;
  std::vector<EegEpoch> trials;

  std::vector<int> class_counts() const;
};

// BCIE container: "BCIE" magic, u16 version, u32 fs_millihz, u16 channels,
// u16 n_classes, u32 n_trials, u32 samples_per_trial, u32 baseline_samples,
// then per trial a u8 label and channel-major f32 samples. Little-endian.
std::vector<uint8_t> encode_bcie(const Dataset& ds);
Dataset decode_bcie(const uint8_t* bytes, size_t size);
void save_bcie(const Dataset& ds, const std::string& path);
Dataset load_bcie(const std::string& path);

}  // namespace bci
