#include "pipeline.hpp"

#include "errors.hpp"

namespace bci {

namespace {

void run_chain(EegEpoch& e, dsp::BiquadCascade& lp, dsp::BiquadCascade& notch) {
  lp.reset();
  notch.reset();
  lp.process(e.data.data(), e.channels, e.samples);
  notch.process(e.data.data(), e.channels, e.samples);
  dsp::baseline_correct(e, e.onset_index);
  dsp::common_average_reference(e.data.data(), e.channels, e.samples);
}

}  // namespace

EegEpoch preprocess_trial(const EegEpoch& raw, const PreprocessConfig& cfg) {
  EegEpoch e = raw;
  dsp::BiquadCascade lp = dsp::design_butterworth_lowpass(cfg.butter_order, cfg.lowpass_hz, e.fs);
  dsp::BiquadCascade notch = dsp::design_notch(cfg.notch_hz, cfg.notch_q, e.fs);
  lp.init_state(e.channels);
  notch.init_state(e.channels);
  run_chain(e, lp, notch);
  return e;
}

std::vector<double> imagery_window(const EegEpoch& processed) {
  const int len = processed.samples - processed.onset_index;
  if (len < 1) fail_data("imagery_window: epoch has no post-onset samples");
  std::vector<double> out(static_cast<size_t>(processed.channels) * len);
  for (int c = 0; c < processed.channels; ++c) {
    const double* src = processed.channel(c) + processed.onset_index;
    std::copy(src, src + len, out.begin() + static_cast<size_t>(c) * len);
  }
  return out;
}

std::vector<TrainingExample> preprocess_dataset(const Dataset& ds, const PreprocessConfig& cfg) {
  if (ds.trials.empty()) fail_data("preprocess_dataset: dataset has no trials");
  dsp::BiquadCascade lp = dsp::design_butterworth_lowpass(cfg.butter_order, cfg.lowpass_hz, ds.fs);
  dsp::BiquadCascade notch = dsp::design_notch(cfg.notch_hz, cfg.notch_q, ds.fs);
  lp.init_state(ds.channels);
  notch.init_state(ds.channels);
  std::vector<TrainingExample> out;
  out.reserve(ds.trials.size());
  for (const EegEpoch& raw : ds.trials) {
    EegEpoch e = raw;
    run_chain(e, lp, notch);
    out.push_back({imagery_window(e), e.label});
  }
  return out;
}

}  // namespace bci
