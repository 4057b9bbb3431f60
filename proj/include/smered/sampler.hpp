#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "smered/blocking.hpp"
#include "smered/core_model.hpp"
#include "smered/rng.hpp"

namespace smered {

/// Loop bounds and bookkeeping for one chain.
///
/// Each of the `sg` outer sweeps runs `sm` middle iterations; each middle
/// iteration makes `st` split/merge proposals and then resamples y and z.
/// theta and beta are resampled once per outer sweep. After `burn_in` sweeps
/// every `thin`-th sweep is stored.
struct ChainConfig {
  std::size_t sg = 100000;
  std::size_t sm = 100000;
  std::size_t st = 1;
  std::size_t burn_in = 1000;
  std::size_t thin = 100;
  Mode mode = Mode::Smere;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
  /// Use the exact split/merge acceptance ratio (y and z summed out, with the
  /// proposal ratio) instead of the plain posterior ratio.
  bool corrected_mh = false;
  bool record_theta = false;

  /// Long-run defaults: 10^5 outer sweeps, 10^5 (SMERE) or 10^4 (SMERED)
  /// middle iterations, burn-in 1000, thinning 100.
  static ChainConfig defaults(Mode mode);

  /// Throws ConfigError when a count is zero or burn_in >= sg.
  void validate() const;
  /// floor((sg - burn_in) / thin)
  std::size_t expected_samples() const { return (sg - burn_in) / thin; }

  bool operator==(const ChainConfig&) const = default;
};

struct ChainStats {
  std::uint64_t split_proposals = 0;
  std::uint64_t split_accepts = 0;
  std::uint64_t merge_proposals = 0;
  std::uint64_t merge_accepts = 0;
  /// Steps skipped because no eligible pair exists.
  std::uint64_t exhausted = 0;
  /// Proposals rejected outright because they break within-file injectivity.
  std::uint64_t infeasible = 0;

  double split_rate() const { return split_proposals ? double(split_accepts) / double(split_proposals) : 0.0; }
  double merge_rate() const { return merge_proposals ? double(merge_accepts) / double(merge_proposals) : 0.0; }
  double acceptance_rate() const {
    const auto total = split_proposals + merge_proposals;
    return total ? double(split_accepts + merge_accepts) / double(total) : 0.0;
  }
  ChainStats& operator+=(const ChainStats& other);
  bool operator==(const ChainStats&) const = default;
};

/// Stored partitions (canonical labels, 0-based) and traces of one chain.
struct PosteriorSamples {
  std::size_t n_records = 0;
  ChainConfig config;
  ChainStats stats;
  std::vector<std::vector<Label>> partitions;
  std::vector<std::uint32_t> n_trace;
  std::vector<std::vector<double>> beta_trace;
  std::vector<std::vector<std::vector<double>>> theta_trace;

  std::size_t size() const { return partitions.size(); }
  bool operator==(const PosteriorSamples&) const = default;
};

/// Relabel clusters 0, 1, 2, ... in order of first appearance.
std::vector<Label> canonicalize_partition(std::span<const Label> labels);

/// Every record its own individual, y copied from x, z = 0, theta from its
/// Dirichlet prior and beta from its Beta prior (0 on blocked fields).
LatentState init_state(const RecordStore& data, const Hyperparameters& hyper, Rng& rng);
LatentState init_state(const RecordStore& data, const Hyperparameters& hyper, std::uint64_t seed);

// Full-conditional updates. Each requires a consistent state and leaves it consistent.
void resample_beta(LatentState& state, const RecordStore& data, const Hyperparameters& hyper, Rng& rng);
void resample_theta(LatentState& state, const RecordStore& data, const Hyperparameters& hyper, Rng& rng);
void resample_z(LatentState& state, const RecordStore& data, const Hyperparameters& hyper, Rng& rng);
/// Throws std::logic_error if two z = 0 records of one individual disagree.
void resample_y(LatentState& state, const RecordStore& data, const Hyperparameters& hyper, Rng& rng);

/// Member lists per label plus a pool of free labels.
class ClusterIndex {
 public:
  ClusterIndex() = default;
  ClusterIndex(std::span<const Label> labels, std::size_t n_max);

  std::span<const RecordId> members(Label label) const { return members_.at(label); }
  std::size_t count() const { return occupied_; }
  bool occupied(Label label) const { return !members_.at(label).empty(); }

  /// Replace the members of `label` (empty releases it).
  void assign(Label label, std::vector<RecordId> records);
  /// Take an unoccupied label out of the free pool; it stays unoccupied until
  /// assigned members.
  Label acquire();

 private:
  std::vector<std::vector<RecordId>> members_;
  std::vector<Label> free_;
  std::vector<std::uint8_t> in_free_;
  std::size_t occupied_ = 0;
};

enum class MoveKind { None, Split, Merge };

struct MoveOptions {
  Mode mode = Mode::Smere;
  bool corrected = false;
};

/// A proposed split or merge. For a split, side_a holds the cluster seeded
/// with `first` and side_b the cluster seeded with `second`; for a merge,
/// side_a is the union and side_b is empty.
struct Proposal {
  MoveKind kind = MoveKind::None;
  RecordId first = 0;
  RecordId second = 0;
  Label label_a = 0;
  Label label_b = 0;
  std::vector<RecordId> side_a;
  std::vector<RecordId> side_b;
  /// Seed-copied latent values for the new clusters (plain mode).
  std::vector<Level> y_a;
  std::vector<Level> y_b;
  /// False when the move would break within-file injectivity.
  bool feasible = true;
  /// Change in log target: the joint posterior (plain mode), or the collapsed
  /// likelihood with y, z summed out plus the log count of labelings of the
  /// partition, log n_max! / (n_max - N)! (corrected mode).
  double log_target_ratio = 0.0;
  /// log q(reverse) - log q(forward); zero in plain mode.
  double log_proposal_ratio = 0.0;

  double log_acceptance() const { return log_target_ratio + log_proposal_ratio; }
};

/// Draw a record pair and build the corresponding split or merge proposal.
/// Returns nullopt when the blocks hold no eligible pair.
std::optional<Proposal> propose_move(const LatentState& state, const ClusterIndex& clusters, const RecordStore& data,
                                     const Hyperparameters& hyper, const BlockIndex& blocks,
                                     const MoveOptions& options, Rng& rng);

/// Build the proposal for a given pair (the pair draw is left to the caller).
Proposal propose_for_pair(const LatentState& state, const ClusterIndex& clusters, const RecordStore& data,
                          const Hyperparameters& hyper, RecordId first, RecordId second,
                          const MoveOptions& options, Rng& rng);

/// Commit a feasible proposal. Plain mode installs the seed-copied y and sets
/// z = 1 exactly where a member disagrees with its new y; corrected mode draws
/// y and z of the new clusters from their full conditionals.
void apply_move(LatentState& state, ClusterIndex& clusters, const RecordStore& data, const Proposal& proposal,
                const MoveOptions& options, Rng& rng);

struct StepResult {
  MoveKind kind = MoveKind::None;
  bool accepted = false;
  double log_acceptance = 0.0;
};

/// One Metropolis split/merge step; on rejection the state is unchanged.
StepResult split_merge_step(LatentState& state, ClusterIndex& clusters, const RecordStore& data,
                            const Hyperparameters& hyper, const BlockIndex& blocks, const MoveOptions& options,
                            Rng& rng, ChainStats* stats = nullptr);

enum class Transition { SplitMerge, LatentUpdate, ParameterUpdate };

struct RunOptions {
  /// Progress line destination; nullptr disables progress output.
  std::ostream* progress = nullptr;
  std::size_t progress_every = 0;
  /// Called after every transition of the chain.
  std::function<void(const LatentState&, Transition)> observer;
};

/// Run one chain from init_state. Deterministic given config.seed and config.stream.
PosteriorSamples run_chain(const RecordStore& data, const Hyperparameters& hyper, const BlockIndex& blocks,
                           const ChainConfig& config, const RunOptions& options = {});

/// Run `chains` independent chains concurrently; chain c uses stream
/// config.stream + c.
std::vector<PosteriorSamples> run_chains(const RecordStore& data, const Hyperparameters& hyper,
                                         const BlockIndex& blocks, const ChainConfig& config, std::size_t chains,
                                         const RunOptions& options = {});

/// Concatenate the stored samples of several chains over the same records.
PosteriorSamples pool_samples(std::span<const PosteriorSamples> chains);

}  // namespace smered
