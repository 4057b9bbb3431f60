#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smered/analysis.hpp"
#include "smered/core_model.hpp"
#include "smered/sampler.hpp"

namespace smered {

/// True entity of every record. Entity ids are dense, 0-based, in order of
/// first appearance.
struct GroundTruth {
  std::vector<std::uint32_t> entity;
  /// Original identifier strings, indexed by entity id (may be empty).
  std::vector<std::string> names;

  static GroundTruth from_ids(std::span<const std::string> ids);
  std::size_t size() const { return entity.size(); }
  std::size_t num_entities() const;
  /// Canonical partition induced by the entities.
  std::vector<Label> partition() const;
};

/// Pairwise link counts against the truth. Counts are integers for a single
/// partition and posterior means for a set of samples.
struct LinkCounts {
  double true_links = 0.0;
  double false_links = 0.0;
  double missing_links = 0.0;
  /// missing / (true + missing)
  double fnr = 0.0;
  /// false / (true + missing): false links relative to the number of truth links.
  double fpr = 0.0;
  /// false / (false + true)
  double precision_complement = 0.0;

  /// Rates from raw counts. When the truth has no links, fnr is 0 and fpr is
  /// 0 without false links and +infinity with them.
  static LinkCounts from_counts(double true_links, double false_links, double missing_links);
  double truth_links() const { return true_links + missing_links; }
};

LinkCounts link_counts(std::span<const Label> partition, const GroundTruth& truth);
/// Counts averaged over the stored partitions, rates from the averaged counts.
LinkCounts link_counts(const PosteriorSamples& samples, const GroundTruth& truth);

/// Records by estimated pattern (rows) and true pattern (columns), both
/// indexed by FileMask. Entries are record counts (posterior means for samples).
struct ConfusionMatrix {
  std::size_t num_files = 0;
  std::vector<double> cells;

  std::size_t dim() const { return std::size_t{1} << num_files; }
  double at(FileMask estimated, FileMask actual) const { return cells.at(estimated * dim() + actual); }
  double row_sum(FileMask estimated) const;
  double total() const;
  /// Each nonempty row divided by its sum.
  std::vector<double> row_normalized() const;
};

ConfusionMatrix confusion_matrix(std::span<const Label> partition, const GroundTruth& truth, const RecordStore& data);
ConfusionMatrix confusion_matrix(const PosteriorSamples& samples, const GroundTruth& truth, const RecordStore& data);

/// 100 * (estimate - truth) / truth per pattern; nullopt where the truth
/// count is zero (and for the unused pattern 0).
std::vector<std::optional<double>> relative_errors(const PatternCounts& estimate, const PatternCounts& truth);
std::vector<std::optional<double>> relative_errors(const PatternCounts& estimate, const GroundTruth& truth,
                                                   const RecordStore& data,
                                                   Multiplicity multiplicity = Multiplicity::AtLeastOne);

}  // namespace smered
