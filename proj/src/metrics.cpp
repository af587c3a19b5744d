#include "metrics.hpp"

#include <algorithm>
#include <numeric>

#include "errors.hpp"

namespace bci {

std::vector<int> ranked_classes(std::span<const double> probs) {
  if (probs.empty()) fail_usage("ranked_classes: empty probability vector");
  std::vector<int> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (probs[static_cast<size_t>(a)] != probs[static_cast<size_t>(b)]) {
      return probs[static_cast<size_t>(a)] > probs[static_cast<size_t>(b)];
    }
    return a < b;
  });
  return order;
}

std::vector<int64_t> confusion_matrix(std::span<const int> truth, std::span<const int> predicted,
                                      int n_classes) {
  if (truth.size() != predicted.size()) fail_usage("confusion_matrix: length mismatch");
  if (n_classes < 1) fail_usage("confusion_matrix: need at least one class");
  std::vector<int64_t> m(static_cast<size_t>(n_classes) * n_classes, 0);
  for (size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 0 || t >= n_classes || p < 0 || p >= n_classes) {
      fail_usage("confusion_matrix: label out of range");
    }
    ++m[static_cast<size_t>(t) * n_classes + p];
  }
  return m;
}

double topk_accuracy(const std::vector<std::vector<int>>& rankings, std::span<const int> truth,
                     int k) {
  if (rankings.size() != truth.size()) fail_usage("topk_accuracy: length mismatch");
  if (rankings.empty()) fail_usage("topk_accuracy: empty input");
  const int n_classes = static_cast<int>(rankings.front().size());
  if (k < 1 || k > n_classes) fail_usage("topk_accuracy: k out of range");
  int64_t hits = 0;
  for (size_t i = 0; i < truth.size(); ++i) {
    const std::vector<int>& r = rankings[i];
    if (static_cast<int>(r.size()) != n_classes) fail_usage("topk_accuracy: ragged rankings");
    for (int j = 0; j < k; ++j) {
      if (r[static_cast<size_t>(j)] == truth[i]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

std::string confusion_to_csv(std::span<const int64_t> matrix, int n_classes,
                             std::span<const std::string> class_names) {
  if (static_cast<int>(class_names.size()) != n_classes ||
      matrix.size() != static_cast<size_t>(n_classes) * n_classes) {
    fail_usage("confusion_to_csv: size mismatch");
  }
  std::string out = "confusion";
  for (const std::string& name : class_names) out += "," + name;
  out += "\n";
  for (int i = 0; i < n_classes; ++i) {
    out += class_names[static_cast<size_t>(i)];
    for (int j = 0; j < n_classes; ++j) {
      out += "," + std::to_string(matrix[static_cast<size_t>(i) * n_classes + j]);
    }
    out += "\n";
  }
  return out;
}

}  // namespace bci
