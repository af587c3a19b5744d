#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bci {

// Class indices ordered by descending probability; ties break toward the
// lowest class index.
std::vector<int> ranked_classes(std::span<const double> probs);

// Entry (i, j) counts true class i predicted as j; row-major K x K.
std::vector<int64_t> confusion_matrix(std::span<const int> truth, std::span<const int> predicted,
                                      int n_classes);

// Fraction of trials whose true label appears within the first k ranked classes.
double topk_accuracy(const std::vector<std::vector<int>>& rankings, std::span<const int> truth,
                     int k);

std::string confusion_to_csv(std::span<const int64_t> matrix, int n_classes,
                             std::span<const std::string> class_names);

}  // namespace bci
