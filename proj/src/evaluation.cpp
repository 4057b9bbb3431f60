#include "smered/evaluation.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace smered {

namespace {

void check_truth(std::size_t records, const GroundTruth& truth) {
  if (truth.size() != records) throw std::invalid_argument("ground truth does not cover every record");
}

struct PairTotals {
  std::uint64_t estimated = 0;
  std::uint64_t actual = 0;
  std::uint64_t both = 0;
};

PairTotals pair_totals(std::span<const Label> partition, const GroundTruth& truth) {
  check_truth(partition.size(), truth);
  std::unordered_map<Label, std::uint64_t> est;
  std::unordered_map<std::uint32_t, std::uint64_t> act;
  std::unordered_map<std::uint64_t, std::uint64_t> joint;
  for (RecordId r = 0; r < partition.size(); ++r) {
    ++est[partition[r]];
    ++act[truth.entity[r]];
    ++joint[(std::uint64_t{partition[r]} << 32) | truth.entity[r]];
  }
  PairTotals t;
  auto choose2 = [](std::uint64_t n) { return n * (n - (n > 0)) / 2; };
  for (const auto& [k, n] : est) t.estimated += choose2(n);
  for (const auto& [k, n] : act) t.actual += choose2(n);
  for (const auto& [k, n] : joint) t.both += choose2(n);
  return t;
}

}  // namespace

GroundTruth GroundTruth::from_ids(std::span<const std::string> ids) {
  GroundTruth t;
  std::unordered_map<std::string, std::uint32_t> index;
  t.entity.reserve(ids.size());
  for (const auto& id : ids) {
    auto [it, inserted] = index.emplace(id, static_cast<std::uint32_t>(t.names.size()));
    if (inserted) t.names.push_back(id);
    t.entity.push_back(it->second);
  }
  return t;
}

std::size_t GroundTruth::num_entities() const { return count_individuals(entity); }

std::vector<Label> GroundTruth::partition() const { return canonicalize_partition(entity); }

LinkCounts LinkCounts::from_counts(double true_links, double false_links, double missing_links) {
  LinkCounts c;
  c.true_links = true_links;
  c.false_links = false_links;
  c.missing_links = missing_links;
  const double truth = true_links + missing_links;
  if (truth > 0.0) {
    c.fnr = missing_links / truth;
    c.fpr = false_links / truth;
  } else {
    c.fnr = 0.0;
    c.fpr = false_links > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  const double found = false_links + true_links;
  c.precision_complement = found > 0.0 ? false_links / found : 0.0;
  return c;
}

LinkCounts link_counts(std::span<const Label> partition, const GroundTruth& truth) {
  const auto t = pair_totals(partition, truth);
  return LinkCounts::from_counts(static_cast<double>(t.both), static_cast<double>(t.estimated - t.both),
                                 static_cast<double>(t.actual - t.both));
}

LinkCounts link_counts(const PosteriorSamples& samples, const GroundTruth& truth) {
  if (samples.partitions.empty()) throw std::invalid_argument("no stored partitions");
  std::uint64_t both = 0, falses = 0, missing = 0;
  for (const auto& p : samples.partitions) {
    const auto t = pair_totals(p, truth);
    both += t.both;
    falses += t.estimated - t.both;
    missing += t.actual - t.both;
  }
  const double s = static_cast<double>(samples.size());
  return LinkCounts::from_counts(static_cast<double>(both) / s, static_cast<double>(falses) / s,
                                 static_cast<double>(missing) / s);
}

double ConfusionMatrix::row_sum(FileMask estimated) const {
  double sum = 0.0;
  for (std::size_t c = 0; c < dim(); ++c) sum += cells.at(estimated * dim() + c);
  return sum;
}

double ConfusionMatrix::total() const {
  double sum = 0.0;
  for (double v : cells) sum += v;
  return sum;
}

std::vector<double> ConfusionMatrix::row_normalized() const {
  std::vector<double> out = cells;
  for (std::size_t r = 0; r < dim(); ++r) {
    const double sum = row_sum(static_cast<FileMask>(r));
    if (sum <= 0.0) continue;
    for (std::size_t c = 0; c < dim(); ++c) out[r * dim() + c] /= sum;
  }
  return out;
}

ConfusionMatrix confusion_matrix(std::span<const Label> partition, const GroundTruth& truth, const RecordStore& data) {
  check_truth(partition.size(), truth);
  const auto est_masks = cluster_patterns(partition, data);
  const auto true_masks = cluster_patterns(truth.partition(), data);
  const auto true_part = truth.partition();
  ConfusionMatrix m;
  m.num_files = data.num_files();
  m.cells.assign(m.dim() * m.dim(), 0.0);
  for (RecordId r = 0; r < partition.size(); ++r)
    m.cells[est_masks[partition[r]] * m.dim() + true_masks[true_part[r]]] += 1.0;
  return m;
}

ConfusionMatrix confusion_matrix(const PosteriorSamples& samples, const GroundTruth& truth, const RecordStore& data) {
  if (samples.partitions.empty()) throw std::invalid_argument("no stored partitions");
  ConfusionMatrix total;
  for (const auto& p : samples.partitions) {
    const auto m = confusion_matrix(p, truth, data);
    if (total.cells.empty()) total = m;
    else
      for (std::size_t i = 0; i < m.cells.size(); ++i) total.cells[i] += m.cells[i];
  }
  for (double& v : total.cells) v /= static_cast<double>(samples.size());
  return total;
}

std::vector<std::optional<double>> relative_errors(const PatternCounts& estimate, const PatternCounts& truth) {
  if (estimate.num_patterns() != truth.num_patterns())
    throw std::invalid_argument("pattern tables cover different numbers of files");
  std::vector<std::optional<double>> out(estimate.num_patterns());
  for (std::size_t m = 1; m < out.size(); ++m) {
    const double t = truth.mean(static_cast<FileMask>(m));
    if (t == 0.0) continue;
    out[m] = 100.0 * (estimate.mean(static_cast<FileMask>(m)) - t) / t;
  }
  return out;
}

std::vector<std::optional<double>> relative_errors(const PatternCounts& estimate, const GroundTruth& truth,
                                                   const RecordStore& data, Multiplicity multiplicity) {
  check_truth(data.n_max(), truth);
  return relative_errors(estimate, pattern_counts(truth.partition(), data, multiplicity));
}

}  // namespace smered
