#include "emerg/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include "emerg/errors.hpp"
#include "emerg/params.hpp"
#include "json.hpp"

namespace emerg::eval {

namespace {

void check_sizes(std::span<const double> scores, std::span<const int> labels, const char* what) {
  if (scores.size() != labels.size())
    throw DimensionError(std::string(what) + ": " + std::to_string(scores.size()) + " scores for " +
                         std::to_string(labels.size()) + " labels");
  for (int y : labels)
    if (y != 0 && y != 1) throw ContractError(std::string(what) + ": labels must be 0 or 1");
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores, labels, "auc");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Mann-Whitney: sum of positive ranks with tied groups sharing their mean rank.
  double rank_sum = 0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double mean_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]] == 1) {
        rank_sum += mean_rank;
        ++pos;
      }
    i = j;
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw MetricError("auc: needs at least one positive and one negative label");
  const double np = static_cast<double>(pos), nn = static_cast<double>(neg);
  return (rank_sum - np * (np + 1) / 2.0) / (np * nn);
}

double f1(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_sizes(scores, labels, "f1");
  if (scores.empty()) throw ContractError("f1: empty input");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (pred && labels[i] == 1) ++tp;
    else if (pred) ++fp;
    else if (labels[i] == 1) ++fn;
  }
  if (tp == 0) return 0.0;  // P = R = 0, or one of them undefined with the other 0
  const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2 * p * r / (p + r);
}

MetricReport make_report(std::string phase, std::span<const double> scores, std::span<const int> labels,
                         std::string fingerprint, std::uint64_t seed) {
  MetricReport r;
  r.phase = std::move(phase);
  r.auc = auc(scores, labels);
  r.f1 = f1(scores, labels);
  r.n = scores.size();
  r.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  r.fingerprint = std::move(fingerprint);
  r.seed = seed;
  return r;
}

void write_reports_csv(std::ostream& os, const std::vector<MetricReport>& reports) {
  os << "phase,auc,f1,n,positives\n";
  for (const auto& r : reports)
    os << r.phase << ',' << ad::format_double(r.auc) << ',' << ad::format_double(r.f1) << ',' << r.n << ','
       << r.positives << '\n';
}

void write_reports_json(std::ostream& os, const std::vector<MetricReport>& reports, const std::string& fingerprint,
                        std::uint64_t seed, const std::vector<std::string>& notes) {
  nlohmann::ordered_json doc;
  doc["fingerprint"] = fingerprint;
  doc["seed"] = seed;
  doc["phases"] = nlohmann::ordered_json::array();
  for (const auto& r : reports)
    doc["phases"].push_back({{"phase", r.phase}, {"auc", r.auc}, {"f1", r.f1}, {"n", r.n}, {"positives", r.positives}});
  doc["notes"] = notes;
  os << doc.dump(2) << '\n';
}

}  // namespace emerg::eval
