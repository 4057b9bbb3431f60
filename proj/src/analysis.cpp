#include "smered/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "smered/error.hpp"

namespace smered {

namespace {

void check_record(const PosteriorSamples& samples, RecordId r) {
  if (r >= samples.n_records) throw std::out_of_range("record " + std::to_string(r) + " out of range");
}

void check_query(const PosteriorSamples& samples, std::span<const RecordId> query) {
  if (query.empty()) throw std::invalid_argument("empty record query");
  std::vector<RecordId> sorted(query.begin(), query.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("record query contains duplicates");
  for (RecordId r : sorted) check_record(samples, r);
}

void check_nonempty(const PosteriorSamples& samples) {
  if (samples.partitions.empty()) throw std::invalid_argument("no stored partitions");
}

void check_files(const RecordStore& data) {
  if (data.num_files() > kMaxPatternFiles)
    throw ConfigError("pattern summaries support at most " + std::to_string(kMaxPatternFiles) + " files");
}

// Clusters of a canonical partition as sorted record lists.
std::vector<RecordSet> clusters_of(std::span<const Label> partition) {
  Label max_label = 0;
  for (Label lab : partition) max_label = std::max(max_label, lab);
  std::vector<RecordSet> clusters(partition.empty() ? 0 : max_label + 1);
  for (RecordId r = 0; r < partition.size(); ++r) clusters[partition[r]].push_back(r);
  std::erase_if(clusters, [](const RecordSet& c) { return c.empty(); });
  return clusters;
}

// Higher count first, then smaller set, then lexicographically smaller set.
bool better_candidate(std::size_t count, const RecordSet& set, std::size_t best_count, const RecordSet* best) {
  if (!best) return true;
  if (count != best_count) return count > best_count;
  if (set.size() != best->size()) return set.size() < best->size();
  return set < *best;
}

}  // namespace

double pairwise_match_prob(const PosteriorSamples& samples, RecordId r1, RecordId r2) {
  check_record(samples, r1);
  check_record(samples, r2);
  if (r1 == r2) return 1.0;
  check_nonempty(samples);
  std::size_t hits = 0;
  for (const auto& p : samples.partitions) hits += p[r1] == p[r2];
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

double set_match_prob(const PosteriorSamples& samples, std::span<const RecordId> query) {
  check_query(samples, query);
  if (query.size() < 2) throw std::invalid_argument("set_match_prob needs at least two records");
  check_nonempty(samples);
  std::size_t hits = 0;
  for (const auto& p : samples.partitions) {
    const Label lab = p[query.front()];
    hits += std::all_of(query.begin(), query.end(), [&](RecordId r) { return p[r] == lab; });
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

double mms_prob(const PosteriorSamples& samples, std::span<const RecordId> query) {
  check_query(samples, query);
  check_nonempty(samples);
  std::size_t hits = 0;
  for (const auto& p : samples.partitions) {
    const Label lab = p[query.front()];
    if (!std::all_of(query.begin(), query.end(), [&](RecordId r) { return p[r] == lab; })) continue;
    const auto size = static_cast<std::size_t>(std::count(p.begin(), p.end(), lab));
    hits += size == query.size();
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

MmsReport most_probable_mms(const PosteriorSamples& samples, RecordId record) {
  check_record(samples, record);
  check_nonempty(samples);
  std::map<RecordSet, std::size_t> counts;
  for (const auto& p : samples.partitions) {
    RecordSet set;
    const Label lab = p[record];
    for (RecordId r = 0; r < p.size(); ++r)
      if (p[r] == lab) set.push_back(r);
    ++counts[std::move(set)];
  }
  const RecordSet* best = nullptr;
  std::size_t best_count = 0;
  for (const auto& [set, count] : counts) {
    if (better_candidate(count, set, best_count, best)) {
      best = &set;
      best_count = count;
    }
  }
  return {record, *best, static_cast<double>(best_count) / static_cast<double>(samples.size())};
}

MmsCatalog::MmsCatalog(const PosteriorSamples& samples) : samples_(samples.size()) {
  check_nonempty(samples);
  for (const auto& p : samples.partitions)
    for (auto& c : clusters_of(p)) ++sets_[std::move(c)];

  by_record_.resize(samples.n_records);
  for (const auto& [set, count] : sets_)
    for (RecordId r : set) by_record_[r].push_back(&set);

  best_.resize(samples.n_records);
  for (RecordId r = 0; r < samples.n_records; ++r) {
    const RecordSet* best = nullptr;
    std::size_t best_count = 0;
    for (const RecordSet* set : by_record_[r]) {
      const std::size_t count = sets_.at(*set);
      if (better_candidate(count, *set, best_count, best)) {
        best = set;
        best_count = count;
      }
    }
    best_[r] = {r, *best, static_cast<double>(best_count) / static_cast<double>(samples_)};
  }
}

double MmsCatalog::probability(const RecordSet& set) const {
  auto it = sets_.find(set);
  return it == sets_.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(samples_);
}

std::vector<std::pair<RecordSet, double>> MmsCatalog::sets_containing(RecordId record) const {
  std::vector<std::pair<RecordSet, double>> out;
  for (const RecordSet* set : by_record_.at(record))
    out.emplace_back(*set, static_cast<double>(sets_.at(*set)) / static_cast<double>(samples_));
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    if (a.first.size() != b.first.size()) return a.first.size() < b.first.size();
    return a.first < b.first;
  });
  return out;
}

std::vector<Label> shared_mms_partition(const PosteriorSamples& samples) {
  const MmsCatalog catalog(samples);
  const auto& best = catalog.most_probable();
  const std::size_t n = samples.n_records;
  constexpr Label kUnset = std::numeric_limits<Label>::max();
  std::vector<Label> labels(n, kUnset);
  Label next = 0;
  for (RecordId r = 0; r < n; ++r) {
    if (labels[r] != kUnset) continue;
    const RecordSet& candidate = best[r].best_set;
    const bool shared = std::all_of(candidate.begin(), candidate.end(),
                                    [&](RecordId m) { return best[m].best_set == candidate; });
    if (shared) {
      for (RecordId m : candidate) labels[m] = next;
    } else {
      labels[r] = next;
    }
    ++next;
  }
  return canonicalize_partition(labels);
}

std::vector<std::pair<RecordId, RecordId>> threshold_links(const PosteriorSamples& samples, double threshold) {
  check_nonempty(samples);
  std::unordered_map<std::uint64_t, std::size_t> counts;
  for (const auto& p : samples.partitions) {
    for (const auto& c : clusters_of(p))
      for (std::size_t i = 0; i < c.size(); ++i)
        for (std::size_t j = i + 1; j < c.size(); ++j) ++counts[(std::uint64_t{c[i]} << 32) | c[j]];
  }
  std::vector<std::pair<RecordId, RecordId>> out;
  for (const auto& [key, count] : counts) {
    if (static_cast<double>(count) / static_cast<double>(samples.size()) > threshold)
      out.emplace_back(static_cast<RecordId>(key >> 32), static_cast<RecordId>(key & 0xffffffffu));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<FileMask> cluster_patterns(std::span<const Label> partition, const RecordStore& data) {
  check_files(data);
  if (partition.size() != data.n_max()) throw std::invalid_argument("partition does not cover the records");
  Label max_label = 0;
  for (Label lab : partition) max_label = std::max(max_label, lab);
  std::vector<FileMask> masks(partition.empty() ? 0 : max_label + 1, 0);
  for (RecordId r = 0; r < partition.size(); ++r) masks[partition[r]] |= FileMask{1} << data.file_of(r);
  return masks;
}

KwayMatchProbs kway_match_probs(const PosteriorSamples& samples, const RecordStore& data) {
  check_nonempty(samples);
  const std::size_t n = samples.n_records;
  KwayMatchProbs out;
  out.counts.resize(n);
  out.samples = samples.size();
  for (const auto& p : samples.partitions) {
    const auto masks = cluster_patterns(p, data);
    for (RecordId r = 0; r < n; ++r) ++out.counts[r][masks[p[r]]];
  }
  return out;
}

double KwayMatchProbs::probability(RecordId record, FileMask pattern) const {
  const auto& dist = counts.at(record);
  auto it = dist.find(pattern);
  return it == dist.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(samples);
}

std::map<FileMask, double> KwayMatchProbs::distribution(RecordId record) const {
  std::map<FileMask, double> out;
  for (const auto& [mask, count] : counts.at(record))
    out[mask] = static_cast<double>(count) / static_cast<double>(samples);
  return out;
}

NSummary posterior_N(const PosteriorSamples& samples) {
  check_nonempty(samples);
  NSummary summary;
  for (const auto& p : samples.partitions) {
    const std::size_t n = count_individuals(p);
    ++summary.histogram[n];
    summary.total += n;
  }
  const double s = static_cast<double>(samples.size());
  summary.mean = static_cast<double>(summary.total) / s;
  double var = 0.0;
  for (const auto& [n, count] : summary.histogram) {
    const double d = static_cast<double>(n) - summary.mean;
    var += static_cast<double>(count) * d * d;
  }
  summary.sd = std::sqrt(var / s);
  return summary;
}

PatternCounts pattern_counts(std::span<const Label> partition, const RecordStore& data, Multiplicity multiplicity) {
  check_files(data);
  if (partition.size() != data.n_max()) throw std::invalid_argument("partition does not cover the records");
  Label max_label = 0;
  for (Label lab : partition) max_label = std::max(max_label, lab);
  const std::size_t clusters = partition.empty() ? 0 : max_label + 1;
  std::vector<FileMask> masks(clusters, 0);
  std::vector<std::uint8_t> duplicated(clusters, 0);
  for (RecordId r = 0; r < partition.size(); ++r) {
    const FileMask bit = FileMask{1} << data.file_of(r);
    if (masks[partition[r]] & bit) duplicated[partition[r]] = 1;
    masks[partition[r]] |= bit;
  }
  PatternCounts counts;
  counts.totals.assign(std::size_t{1} << data.num_files(), 0);
  counts.samples = 1;
  for (std::size_t c = 0; c < clusters; ++c) {
    if (masks[c] == 0) continue;
    if (multiplicity == Multiplicity::ExactlyOne && duplicated[c]) continue;
    ++counts.totals[masks[c]];
  }
  return counts;
}

PatternCounts pattern_counts(const PosteriorSamples& samples, const RecordStore& data, Multiplicity multiplicity) {
  check_nonempty(samples);
  PatternCounts total;
  total.totals.assign(std::size_t{1} << data.num_files(), 0);
  total.samples = samples.size();
  for (const auto& p : samples.partitions) {
    const auto counts = pattern_counts(p, data, multiplicity);
    for (std::size_t m = 0; m < counts.totals.size(); ++m) total.totals[m] += counts.totals[m];
  }
  return total;
}

std::vector<double> PatternCounts::means() const {
  std::vector<double> out(totals.size());
  for (std::size_t m = 0; m < totals.size(); ++m) out[m] = mean(static_cast<FileMask>(m));
  return out;
}

std::uint64_t PatternCounts::grand_total() const {
  std::uint64_t sum = 0;
  for (auto t : totals) sum += t;
  return sum;
}

std::string pattern_name(FileMask mask) {
  std::string out;
  for (std::size_t i = 0; i < 32; ++i) {
    if (!(mask & (FileMask{1} << i))) continue;
    if (!out.empty()) out += ',';
    out += std::to_string(i + 1);
  }
  return out;
}

}  // namespace smered
