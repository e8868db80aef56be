#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace emerg::eval {

// Probability that a random positive outscores a random negative, ties
// counting 1/2. Throws MetricError unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

// predictions = score >= threshold; 0 when precision + recall = 0.
double f1(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

struct MetricReport {
  std::string phase;
  double auc = 0.0;
  double f1 = 0.0;
  std::size_t n = 0;
  std::size_t positives = 0;
  std::string fingerprint;
  std::uint64_t seed = 0;
};

MetricReport make_report(std::string phase, std::span<const double> scores, std::span<const int> labels,
                         std::string fingerprint = {}, std::uint64_t seed = 0);

// Columns exactly: phase,auc,f1,n,positives
void write_reports_csv(std::ostream& os, const std::vector<MetricReport>& reports);
// JSON document with the reports, fingerprint, seed and free-form notes.
void write_reports_json(std::ostream& os, const std::vector<MetricReport>& reports, const std::string& fingerprint,
                        std::uint64_t seed, const std::vector<std::string>& notes = {});

}  // namespace emerg::eval
