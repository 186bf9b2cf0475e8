// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace easwin {

/// Positive class is 1 (generated).
struct Confusion {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::int64_t n() const { return tp + fp + tn + fn; }
  bool operator==(const Confusion&) const = default;
};

Confusion confusion(std::span<const int> preds, std::span<const int> labels);

struct Rates {
  double precision = 0, recall = 0, f1 = 0, accuracy = 0;
};

/// Precision and recall use 0/0 -> 0; f1 is 0 when p + r == 0.
Rates prf1(const Confusion& c);

/// Mann-Whitney AUC; tied positive/negative pairs count 1/2. Throws
/// UndefinedMetricError unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

struct EvalReport {
  std::string group = "all";
  Confusion counts;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0, auc = 0;
};

/// Thresholds probabilities at 0.5 (ties are class 1) and scores AUC on the
/// probabilities themselves.
EvalReport evaluate(std::span<const double> probs, std::span<const int> labels,
                    const std::string& group = "all");

/// Unweighted mean of the metric columns; counts are summed.
EvalReport average_reports(std::span<const EvalReport> reports, const std::string& group = "Avg");

/// One report per generator, each pairing that generator's videos with a
/// random real subset of equal size (without replacement, seeded), then an
/// "Avg" row over the generators and an "all" row over the whole split.
/// `generator` is -1 for real videos.
std::vector<EvalReport> evaluate_groups(std::span<const double> probs, std::span<const int> labels,
                                        std::span<const int> generator,
                                        std::span<const std::string> generator_names,
                                        std::uint64_t seed);

inline constexpr const char* kMetricsCsvHeader = "epoch,split,acc,prec,recall,f1,auc,loss,lr";

/// One metrics.csv line (no newline). Reals use 17 significant digits so the
/// file reproduces bit-identically.
std::string metrics_csv_row(std::int64_t epoch, const std::string& split, const EvalReport& r,
                            double loss, double lr);

nlohmann::json to_json(const EvalReport& r);

}  // namespace easwin
