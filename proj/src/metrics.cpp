#include "usda/metrics.hpp"

#include "usda/error.hpp"

namespace usda {

ClassificationReport classification_report(const std::vector<int>& gold,
                                           const std::vector<int>& predicted, int num_classes) {
  if (gold.empty()) throw Error("empty evaluation set");
  if (gold.size() != predicted.size()) throw Error("gold and predicted lengths differ");
  if (num_classes < 1) throw Error("num_classes must be positive");
  ClassificationReport r;
  r.num_classes = num_classes;
  r.total = gold.size();
  r.confusion.assign(static_cast<std::size_t>(num_classes),
                     std::vector<int>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] < 0 || gold[i] >= num_classes || predicted[i] < 0 || predicted[i] >= num_classes) {
      throw Error("label out of range at position " + std::to_string(i));
    }
    ++r.confusion[static_cast<std::size_t>(gold[i])][static_cast<std::size_t>(predicted[i])];
  }
  int correct = 0;
  int counted = 0;
  r.per_class.resize(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    const auto k = static_cast<std::size_t>(c);
    int tp = r.confusion[k][k];
    int gold_n = 0, pred_n = 0;
    for (int o = 0; o < num_classes; ++o) {
      gold_n += r.confusion[k][static_cast<std::size_t>(o)];
      pred_n += r.confusion[static_cast<std::size_t>(o)][k];
    }
    correct += tp;
    auto& m = r.per_class[k];
    m.support = gold_n;
    m.counted = gold_n > 0 || pred_n > 0;
    m.precision = pred_n > 0 ? static_cast<double>(tp) / pred_n : 0.0;
    m.recall = gold_n > 0 ? static_cast<double>(tp) / gold_n : 0.0;
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                                        : 0.0;
    if (!m.counted) continue;
    ++counted;
    r.macro_precision += m.precision;
    r.macro_recall += m.recall;
    r.macro_f1 += m.f1;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.total);
  r.macro_precision /= counted;
  r.macro_recall /= counted;
  r.macro_f1 /= counted;
  return r;
}

nlohmann::json ClassificationReport::to_json(const std::vector<std::string>& class_names) const {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const auto& m = per_class[c];
    nlohmann::json j{{"class", c < class_names.size() ? class_names[c] : std::to_string(c)},
                     {"precision", m.precision},
                     {"recall", m.recall},
                     {"f1", m.f1},
                     {"support", m.support},
                     {"in_macro", m.counted}};
    classes.push_back(std::move(j));
  }
  return {{"n", total},
          {"accuracy", accuracy},
          {"macro_precision", macro_precision},
          {"macro_recall", macro_recall},
          {"macro_f1", macro_f1},
          {"per_class", std::move(classes)},
          {"confusion", confusion}};
}

}  // namespace usda
