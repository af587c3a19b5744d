#pragma once

#include <vector>

#include "dataset.hpp"
#include "dsp.hpp"
#include "model.hpp"

namespace bci {

// Offline/online shared preprocessing chain: fifth-order Butterworth low-pass,
// mains notch, baseline correction, common average reference, in that order.
struct PreprocessConfig {
  int butter_order = 5;
  double lowpass_hz = 120.0;
  double notch_hz = 60.0;
  double notch_q = 30.0;
};

// Filters the trial record as one continuous stream from zero state, then
// baseline-corrects over the pre-onset window and re-references.
EegEpoch preprocess_trial(const EegEpoch& raw, const PreprocessConfig& cfg);

// The decoder's input: channel-major copy of [onset, end) of a processed epoch.
std::vector<double> imagery_window(const EegEpoch& processed);

// Whole-dataset preprocessing into training examples (label + imagery window).
std::vector<TrainingExample> preprocess_dataset(const Dataset& ds, const PreprocessConfig& cfg);

}  // namespace bci
