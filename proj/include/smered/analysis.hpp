#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "smered/core_model.hpp"
#include "smered/sampler.hpp"

namespace smered {

/// Bit i set = the cluster holds at least one record of file i.
using FileMask = std::uint32_t;

/// Largest number of files handled by the pattern-based summaries.
inline constexpr std::size_t kMaxPatternFiles = 16;

/// Records sorted ascending; a candidate maximal matching set.
using RecordSet = std::vector<RecordId>;

struct MmsReport {
  RecordId record = 0;
  RecordSet best_set;
  double probability = 0.0;
};

/// Fraction of stored partitions in which r1 and r2 share a cluster (1 when r1 == r2).
double pairwise_match_prob(const PosteriorSamples& samples, RecordId r1, RecordId r2);

/// Fraction of stored partitions in which every queried record lies in one
/// cluster (other records may belong to it too). Requires >= 2 records.
double set_match_prob(const PosteriorSamples& samples, std::span<const RecordId> query);

/// Fraction of stored partitions in which the queried records form exactly one cluster.
double mms_prob(const PosteriorSamples& samples, std::span<const RecordId> query);

/// Among the clusters containing `record` across the samples, the one observed
/// most often. Ties go to the smaller set, then the lexicographically smaller.
MmsReport most_probable_mms(const PosteriorSamples& samples, RecordId record);

/// Every observed cluster with its empirical MMS probability.
class MmsCatalog {
 public:
  explicit MmsCatalog(const PosteriorSamples& samples);

  double probability(const RecordSet& set) const;
  /// Most probable MMS of every record (same tie-breaking as most_probable_mms).
  const std::vector<MmsReport>& most_probable() const { return best_; }
  /// Observed sets containing `record` with their probabilities, most probable first.
  std::vector<std::pair<RecordSet, double>> sets_containing(RecordId record) const;
  std::size_t num_sets() const { return sets_.size(); }

 private:
  std::size_t samples_ = 0;
  std::map<RecordSet, std::size_t> sets_;
  std::vector<std::vector<const RecordSet*>> by_record_;
  std::vector<MmsReport> best_;
};

/// Transitive point estimate: records are linked iff they belong to the same
/// shared most probable MMS (a set that is the most probable MMS of each of
/// its members). Records in no shared set stay singletons. Canonical labels.
std::vector<Label> shared_mms_partition(const PosteriorSamples& samples);

/// Pairs whose match probability exceeds `threshold`. Not transitive.
std::vector<std::pair<RecordId, RecordId>> threshold_links(const PosteriorSamples& samples, double threshold);

/// For each record, the distribution of the file pattern of its cluster, kept
/// as occurrence counts out of `samples`.
struct KwayMatchProbs {
  std::vector<std::map<FileMask, std::size_t>> counts;
  std::size_t samples = 0;

  double probability(RecordId record, FileMask pattern) const;
  std::map<FileMask, double> distribution(RecordId record) const;
};

KwayMatchProbs kway_match_probs(const PosteriorSamples& samples, const RecordStore& data);

struct NSummary {
  std::map<std::size_t, std::size_t> histogram;
  /// Sum of N over the stored partitions.
  std::uint64_t total = 0;
  double mean = 0.0;
  double sd = 0.0;
};

/// Distribution of the number of individuals across stored partitions.
NSummary posterior_N(const PosteriorSamples& samples);

/// How an individual counts as "appearing in file i".
enum class Multiplicity {
  /// At least one record in file i.
  AtLeastOne,
  /// Exactly one record in every file of the pattern; individuals with a
  /// within-file duplicate are left out.
  ExactlyOne,
};

/// Number of individuals per file pattern, indexed by FileMask (entry 0
/// unused). Totals are exact integer sums over the stored partitions, so the
/// identity sum over patterns = sum of N holds without rounding.
struct PatternCounts {
  std::vector<std::uint64_t> totals;
  std::size_t samples = 0;

  double mean(FileMask mask) const { return static_cast<double>(totals.at(mask)) / static_cast<double>(samples); }
  std::vector<double> means() const;
  std::uint64_t grand_total() const;
  std::size_t num_patterns() const { return totals.size(); }
};

PatternCounts pattern_counts(std::span<const Label> partition, const RecordStore& data,
                             Multiplicity multiplicity = Multiplicity::AtLeastOne);

/// Posterior mean of pattern_counts over the stored partitions.
PatternCounts pattern_counts(const PosteriorSamples& samples, const RecordStore& data,
                             Multiplicity multiplicity = Multiplicity::AtLeastOne);

/// Pattern of each cluster, indexed by canonical label.
std::vector<FileMask> cluster_patterns(std::span<const Label> partition, const RecordStore& data);

/// 1-based file list, e.g. "1,3" for mask 0b101.
std::string pattern_name(FileMask mask);

}  // namespace smered
