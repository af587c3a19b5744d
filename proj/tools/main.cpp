// bci: synthesize data, calibrate the decoder, evaluate it, replay an online
// session, and benchmark decode latency. Links the C API only.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bci.h"

namespace {

// exit codes: 0 ok, 1 usage, 2 data/format, 3 numeric
int exit_code(bci_status s) {
  switch (s) {
    case BCI_OK: return 0;
    case BCI_E_USAGE: return 1;
    case BCI_E_DATA: return 2;
    case BCI_E_NUMERIC: return 3;
    case BCI_E_INTERNAL: return 3;
  }
  return 3;
}

[[noreturn]] void die(bci_status s) {
  std::fprintf(stderr, "error: %s\n", bci_last_error());
  std::exit(exit_code(s));
}

void check(bci_status s) {
  if (s != BCI_OK) die(s);
}

struct DatasetDeleter {
  void operator()(bci_dataset* d) const { bci_dataset_free(d); }
};
struct ModelDeleter {
  void operator()(bci_model* m) const { bci_model_free(m); }
};
struct ReportDeleter {
  void operator()(bci_session_report* r) const { bci_session_report_free(r); }
};
using DatasetPtr = std::unique_ptr<bci_dataset, DatasetDeleter>;
using ModelPtr = std::unique_ptr<bci_model, ModelDeleter>;
using ReportPtr = std::unique_ptr<bci_session_report, ReportDeleter>;

DatasetPtr load_dataset(const std::string& path) {
  bci_dataset* ds = nullptr;
  check(bci_dataset_load(path.c_str(), &ds));
  return DatasetPtr(ds);
}

ModelPtr load_model(const std::string& path) {
  bci_model* m = nullptr;
  check(bci_model_load(path.c_str(), &m));
  return ModelPtr(m);
}

std::vector<std::string> class_names(uint32_t k) {
  if (k == 4) return {"Clock", "Toilet", "Water", "Resting state"};
  std::vector<std::string> names;
  for (uint32_t i = 0; i < k; ++i) names.push_back("class" + std::to_string(i));
  return names;
}

int cmd_synth(const std::string& out, uint32_t trials_per_class, uint32_t channels, double fs,
              double snr, uint64_t seed) {
  bci_synth_params p;
  bci_synth_params_init(&p);
  p.trials_per_class = trials_per_class;
  p.channels = channels;
  p.fs_hz = fs;
  p.snr = snr;
  p.seed = seed;
  bci_dataset* raw = nullptr;
  check(bci_dataset_synth(&p, &raw));
  DatasetPtr ds(raw);
  check(bci_dataset_save(ds.get(), out.c_str()));
  uint32_t n_classes = 0, n_trials = 0;
  check(bci_dataset_info(ds.get(), nullptr, nullptr, &n_classes, &n_trials, nullptr, nullptr));
  std::vector<uint32_t> counts(n_classes);
  check(bci_dataset_class_counts(ds.get(), counts.data(), n_classes));
  std::printf("wrote %s: %u trials\n", out.c_str(), n_trials);
  const std::vector<std::string> names = class_names(n_classes);
  std::printf("class,count\n");
  for (uint32_t i = 0; i < n_classes; ++i) {
    std::printf("%s,%u\n", names[i].c_str(), counts[i]);
  }
  return 0;
}

int cmd_train(const std::string& data, const std::string& out_model, uint64_t seed,
              uint32_t base_width, uint32_t max_epochs) {
  const auto t0 = std::chrono::steady_clock::now();
  DatasetPtr ds = load_dataset(data);
  bci_train_params p;
  bci_train_params_init(&p);
  p.seed = seed;
  p.base_width = base_width;
  p.max_epochs = max_epochs;
  bci_model* raw = nullptr;
  check(bci_model_train(ds.get(), &p, &raw));
  ModelPtr model(raw);
  check(bci_model_save(model.get(), out_model.c_str()));

  char* reason = nullptr;
  check(bci_model_stop_reason(model.get(), &reason));
  char* history = nullptr;
  check(bci_model_history_csv(model.get(), &history));
  uint64_t params = 0;
  check(bci_model_param_count(model.get(), &params));
  const double wall_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::printf("%s", history);
  std::printf("stop_reason,%s\n", reason);
  std::printf("parameters,%llu\n", static_cast<unsigned long long>(params));
  std::printf("wall_clock_s,%.1f\n", wall_s);
  std::printf("model,%s\n", out_model.c_str());
  bci_string_free(history);
  bci_string_free(reason);
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data, uint32_t topk) {
  ModelPtr model = load_model(model_path);
  DatasetPtr ds = load_dataset(data);
  uint32_t k = 0;
  check(bci_model_classes(model.get(), &k));
  if (topk < 1 || topk > k) {
    std::fprintf(stderr, "error: --topk must lie in [1, %u]\n", k);
    return 1;
  }
  std::vector<double> overall(topk), per_class(static_cast<size_t>(k) * topk);
  std::vector<int64_t> confusion(static_cast<size_t>(k) * k);
  check(bci_model_evaluate(model.get(), ds.get(), topk, overall.data(), per_class.data(),
                           confusion.data()));
  const std::vector<std::string> names = class_names(k);
  std::printf("class");
  for (uint32_t kk = 1; kk <= topk; ++kk) std::printf(",top%u", kk);
  std::printf("\n");
  for (uint32_t c = 0; c < k; ++c) {
    std::printf("%s", names[c].c_str());
    for (uint32_t kk = 0; kk < topk; ++kk) {
      std::printf(",%.4f", per_class[c * topk + kk]);
    }
    std::printf("\n");
  }
  std::printf("All");
  for (uint32_t kk = 0; kk < topk; ++kk) std::printf(",%.4f", overall[kk]);
  std::printf("\n\nconfusion");
  for (uint32_t c = 0; c < k; ++c) std::printf(",%s", names[c].c_str());
  std::printf("\n");
  for (uint32_t i = 0; i < k; ++i) {
    std::printf("%s", names[i].c_str());
    for (uint32_t j = 0; j < k; ++j) {
      std::printf(",%lld", static_cast<long long>(confusion[i * k + j]));
    }
    std::printf("\n");
  }
  return 0;
}

int cmd_online(const std::string& model_path, const std::string& source, uint32_t trials,
               uint64_t seed, const std::string& report_path) {
  ModelPtr model = load_model(model_path);
  bci_session_params p;
  bci_session_params_init(&p);
  p.n_trials = trials;
  p.seed = seed;

  bci_session_report* raw = nullptr;
  if (source.rfind("tcp:", 0) == 0) {
    const std::string rest = source.substr(4);
    const size_t colon = rest.find(':');
    if (colon == std::string::npos) {
      std::fprintf(stderr, "error: --source tcp form is tcp:host:port\n");
      return 1;
    }
    const std::string host = rest.substr(0, colon);
    const int port = std::atoi(rest.c_str() + colon + 1);
    if (port <= 0 || port > 65535) {
      std::fprintf(stderr, "error: bad tcp port in --source\n");
      return 1;
    }
    check(bci_session_tcp(model.get(), host.c_str(), static_cast<uint16_t>(port), &p, &raw));
  } else {
    DatasetPtr ds = load_dataset(source);
    check(bci_session_replay(model.get(), ds.get(), &p, &raw));
  }
  ReportPtr report(raw);

  char* csv = nullptr;
  check(bci_session_report_csv(report.get(), &csv));
  if (!report_path.empty()) {
    std::FILE* f = std::fopen(report_path.c_str(), "wb");
    if (!f) {
      std::fprintf(stderr, "error: cannot write %s\n", report_path.c_str());
      bci_string_free(csv);
      return 2;
    }
    std::fputs(csv, f);
    std::fclose(f);
  }
  bci_string_free(csv);

  double top1 = 0, top2 = 0, mean_ms = 0, p95_ms = 0;
  uint32_t dropped = 0, rows = 0;
  check(bci_session_report_summary(report.get(), &top1, &top2, &mean_ms, &p95_ms, &dropped,
                                   &rows));
  std::printf("trials,%u\ntop1,%.4f\ntop2,%.4f\ndropped,%u\n", rows, top1, top2, dropped);
  std::printf("latency_mean_ms,%.3f\nlatency_p95_ms,%.3f\n", mean_ms, p95_ms);
  if (!report_path.empty()) std::printf("report,%s\n", report_path.c_str());
  return 0;
}

int cmd_bench(const std::string& model_path, uint32_t n) {
  ModelPtr model = load_model(model_path);
  double mean = 0, p50 = 0, p95 = 0, first = 0;
  check(bci_model_benchmark(model.get(), n, 0, &mean, &p50, &p95, &first));
  std::printf("n,mean_ms,p50_ms,p95_ms,first_call_ms\n");
  std::printf("%u,%.3f,%.3f,%.3f,%.3f\n", n, mean, p50, p95, first);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"real-time imagined-speech EEG decoding pipeline"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset file");
  std::string synth_out;
  uint32_t synth_tpc = 100, synth_channels = 64;
  double synth_fs = 500.0, synth_snr = 1.0;
  uint64_t synth_seed = 42;
  synth->add_option("--out", synth_out, "output .bcie path")->required();
  synth->add_option("--trials-per-class", synth_tpc, "trials per class");
  synth->add_option("--channels", synth_channels, "electrode count");
  synth->add_option("--fs", synth_fs, "sampling rate in Hz");
  synth->add_option("--snr", synth_snr, "signature scale vs unit noise");
  synth->add_option("--seed", synth_seed, "generator seed");

  auto* train = app.add_subcommand("train", "calibrate a decoder on a dataset");
  std::string train_data, train_out;
  uint64_t train_seed = 42;
  uint32_t train_bw = 8, train_epochs = 200;
  train->add_option("--data", train_data, "input .bcie dataset")->required();
  train->add_option("--out-model", train_out, "output .bcim checkpoint")->required();
  train->add_option("--seed", train_seed, "training seed");
  train->add_option("--base-width", train_bw, "level-1 feature maps");
  train->add_option("--max-epochs", train_epochs, "epoch cap");

  auto* eval = app.add_subcommand("eval", "offline metrics for a checkpoint");
  std::string eval_model, eval_data;
  uint32_t eval_topk = 2;
  eval->add_option("--model", eval_model, "checkpoint path")->required();
  eval->add_option("--data", eval_data, "dataset path")->required();
  eval->add_option("--topk", eval_topk, "report top-1..top-k");

  auto* online = app.add_subcommand("online", "closed-loop replay/stream session");
  std::string online_model, online_source, online_report;
  uint32_t online_trials = 20;
  uint64_t online_seed = 42;
  online->add_option("--model", online_model, "checkpoint path")->required();
  online->add_option("--source", online_source, "dataset file or tcp:host:port")->required();
  online->add_option("--trials", online_trials, "trial count");
  online->add_option("--seed", online_seed, "cue-order seed");
  online->add_option("--report", online_report, "write per-trial report here");

  auto* bench = app.add_subcommand("bench", "decode latency statistics");
  std::string bench_model;
  uint32_t bench_n = 100;
  bench->add_option("--model", bench_model, "checkpoint path")->required();
  bench->add_option("--n", bench_n, "window count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (synth->parsed()) {
    return cmd_synth(synth_out, synth_tpc, synth_channels, synth_fs, synth_snr, synth_seed);
  }
  if (train->parsed()) {
    return cmd_train(train_data, train_out, train_seed, train_bw, train_epochs);
  }
  if (eval->parsed()) return cmd_eval(eval_model, eval_data, eval_topk);
  if (online->parsed()) {
    return cmd_online(online_model, online_source, online_trials, online_seed, online_report);
  }
  if (bench->parsed()) {
    if (bench_n == 0) {
      std::fprintf(stderr, "error: --n must be positive\n");
      return 1;
    }
    return cmd_bench(bench_model, bench_n);
  }
  return 1;
}
