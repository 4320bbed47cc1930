// Classification metrics: accuracy, per-class and macro precision/recall/F1,
// confusion matrix.

#pragma once

#include "json.hpp"

#include <string>
#include <vector>

namespace usda {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int support = 0;      // gold count
  bool counted = false; // present in gold or predictions
};

struct ClassificationReport {
  int num_classes = 0;
  std::size_t total = 0;
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
  std::vector<std::vector<int>> confusion;  // [gold][pred]

  nlohmann::json to_json(const std::vector<std::string>& class_names = {}) const;
};

/// Macro averages run over classes that occur in gold or predictions; a class
/// never predicted has precision 0. Throws on empty or mismatched input.
ClassificationReport classification_report(const std::vector<int>& gold,
                                           const std::vector<int>& predicted, int num_classes);

}  // namespace usda
