// Confusion-matrix detection metrics.
#pragma once

#include <cstddef>

namespace rainsense {

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  void add(bool predicted, bool actual) {
    if (predicted && actual) ++tp;
    else if (predicted) ++fp;
    else if (actual) ++fn;
    else ++tn;
  }

  std::size_t total() const { return tp + fp + fn + tn; }
  double accuracy() const { return total() ? static_cast<double>(tp + tn) / total() : 0.0; }
  double precision() const { return tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0; }
  double recall() const { return tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0; }
  /// 2PR/(P+R); 0 when P+R = 0.
  double f1() const {
    double p = precision(), r = recall();
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
};

}  // namespace rainsense
