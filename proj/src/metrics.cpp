// SPDX-License-Identifier: Apache-2.0
#include "easwin/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "easwin/errors.hpp"
#include "easwin/random.hpp"

namespace easwin {

namespace {

void check_labels(std::span<const int> labels) {
  for (int l : labels) {
    if (l != 0 && l != 1) throw ContractError("labels must be 0 or 1");
  }
}

double safe_div(double num, double den) { return den == 0 ? 0.0 : num / den; }

}  // namespace

Confusion confusion(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) {
    throw DimensionError("confusion: " + std::to_string(preds.size()) + " predictions for " +
                         std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw ContractError("confusion: empty input");
  check_labels(preds);
  check_labels(labels);
  Confusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == 1) {
      (labels[i] == 1 ? c.tp : c.fp) += 1;
    } else {
      (labels[i] == 0 ? c.tn : c.fn) += 1;
    }
  }
  return c;
}

Rates prf1(const Confusion& c) {
  if (c.n() < 1) throw ContractError("prf1: no samples");
  Rates r;
  r.precision = safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  r.recall = safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  r.f1 = safe_div(2 * r.precision * r.recall, r.precision + r.recall);
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.n());
  return r;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("auc: scores and labels differ in length");
  check_labels(labels);
  for (double s : scores) {
    if (std::isnan(s)) throw NumericError("auc: NaN score");
  }
  const auto pos = static_cast<std::int64_t>(std::count(labels.begin(), labels.end(), 1));
  const auto neg = static_cast<std::int64_t>(labels.size()) - pos;
  if (pos == 0 || neg == 0) throw UndefinedMetricError("auc: needs both classes present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the rank sum of the positives keeps tied (half) ranks integral.
  std::int64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const auto twice_rank = static_cast<std::int64_t>(i + 1 + j);  // (i+1) + j in 1-based ranks
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) twice_rank_sum += twice_rank;
    }
    i = j;
  }
  const std::int64_t twice_u = twice_rank_sum - pos * (pos + 1);
  return static_cast<double>(twice_u) / static_cast<double>(2 * pos * neg);
}

EvalReport evaluate(std::span<const double> probs, std::span<const int> labels, const std::string& group) {
  std::vector<int> preds(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) preds[i] = probs[i] >= 0.5 ? 1 : 0;
  EvalReport r;
  r.group = group;
  r.counts = confusion(preds, labels);
  const Rates rates = prf1(r.counts);
  r.accuracy = rates.accuracy;
  r.precision = rates.precision;
  r.recall = rates.recall;
  r.f1 = rates.f1;
  r.auc = auc(probs, labels);
  return r;
}

EvalReport average_reports(std::span<const EvalReport> reports, const std::string& group) {
  if (reports.empty()) throw ContractError("average_reports: no reports");
  EvalReport out;
  out.group = group;
  for (const auto& r : reports) {
    out.counts.tp += r.counts.tp;
    out.counts.fp += r.counts.fp;
    out.counts.tn += r.counts.tn;
    out.counts.fn += r.counts.fn;
    out.accuracy += r.accuracy;
    out.precision += r.precision;
    out.recall += r.recall;
    out.f1 += r.f1;
    out.auc += r.auc;
  }
  const auto k = static_cast<double>(reports.size());
  out.accuracy /= k;
  out.precision /= k;
  out.recall /= k;
  out.f1 /= k;
  out.auc /= k;
  return out;
}

std::vector<EvalReport> evaluate_groups(std::span<const double> probs, std::span<const int> labels,
                                        std::span<const int> generator,
                                        std::span<const std::string> generator_names,
                                        std::uint64_t seed) {
  if (probs.size() != labels.size() || generator.size() != labels.size()) {
    throw DimensionError("evaluate_groups: inputs differ in length");
  }
  std::vector<std::size_t> reals;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 0) reals.push_back(i);
  }
  std::vector<EvalReport> groups;
  for (std::size_t g = 0; g < generator_names.size(); ++g) {
    std::vector<std::size_t> fakes;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == 1 && generator[i] == static_cast<int>(g)) fakes.push_back(i);
    }
    if (fakes.empty() || reals.empty()) continue;
    std::vector<std::size_t> pool = reals;
    Rng rng(derive_seed(seed, g));
    rng.shuffle(pool.begin(), pool.end());
    pool.resize(std::min(pool.size(), fakes.size()));
    std::sort(pool.begin(), pool.end());
    std::vector<double> p;
    std::vector<int> l;
    for (std::size_t i : pool) {
      p.push_back(probs[i]);
      l.push_back(0);
    }
    for (std::size_t i : fakes) {
      p.push_back(probs[i]);
      l.push_back(1);
    }
    groups.push_back(evaluate(p, l, generator_names[g]));
  }
  std::vector<EvalReport> out = groups;
  if (!groups.empty()) out.push_back(average_reports(groups, "Avg"));
  out.push_back(evaluate(probs, labels, "all"));
  return out;
}

std::string metrics_csv_row(std::int64_t epoch, const std::string& split, const EvalReport& r,
                            double loss, double lr) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%lld,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                static_cast<long long>(epoch), split.c_str(), r.accuracy, r.precision, r.recall, r.f1,
                r.auc, loss, lr);
  return buf;
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"group", r.group},   {"tp", r.counts.tp},   {"fp", r.counts.fp},
          {"tn", r.counts.tn},  {"fn", r.counts.fn},   {"accuracy", r.accuracy},
          {"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1},
          {"auc", r.auc}};
}

}  // namespace easwin
