#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "smered/analysis.hpp"
#include "smered/core_model.hpp"
#include "smered/evaluation.hpp"
#include "smered/rng.hpp"
#include "smered/sampler.hpp"

namespace smered {

/// Which individual each record of each file belongs to.
struct TruthSpec {
  /// assignment[i][j] = individual of record j in file i.
  std::vector<std::vector<std::uint32_t>> assignment;
  /// Allow one individual to own several records of one file.
  bool allow_duplicates = false;

  /// Each of `individuals` joins file i independently with probability
  /// inclusion[i]; individuals in no file are dropped and the rest renumbered.
  static TruthSpec by_inclusion(std::size_t individuals, std::span<const double> inclusion, Rng& rng);
  /// File i holds sizes[i] distinct individuals drawn without replacement from
  /// a population of `population`.
  static TruthSpec by_file_sizes(std::size_t population, std::span<const std::size_t> sizes, Rng& rng);

  /// Throws ConfigError on an empty file, or when an individual appears twice
  /// in one file and duplicates are not allowed.
  void validate() const;
  /// Largest individual id + 1.
  std::size_t num_individuals() const;
  std::size_t num_records() const;
};

/// Give each record of file i, with probability `rate`, one extra copy in the
/// same file (appended at the end). Sets allow_duplicates.
TruthSpec add_duplicates(TruthSpec spec, double rate, Rng& rng);

/// Level distributions for the generator: explicit, or drawn from a
/// symmetric Dirichlet(mu) per field.
struct ThetaSource {
  std::optional<std::vector<std::vector<double>>> theta;
  double mu = 1.0;

  static ThetaSource fixed(std::vector<std::vector<double>> theta) { return {std::move(theta), 1.0}; }
  static ThetaSource dirichlet(double mu) { return {std::nullopt, mu}; }
};

struct SimulatedData {
  RecordStore data;
  GroundTruth truth;
  /// y of each individual, num_individuals x p row-major.
  std::vector<Level> y;
  /// z of each record, n_max x p row-major.
  std::vector<std::uint8_t> z;
  std::vector<std::vector<double>> theta;

  /// State with the true partition, y, z, theta and the given beta.
  LatentState true_state(std::vector<double> beta) const;
};

/// Draw every individual's values from theta, then copy them into that
/// individual's records; each non-blocked cell is replaced with probability
/// `distortion` by a fresh draw from theta (z = 1 even when the draw repeats
/// the true value). Fields listed in `undistorted` always copy.
SimulatedData generate(const TruthSpec& spec, const FieldSchema& schema, const ThetaSource& source,
                       double distortion, std::span<const std::size_t> undistorted, std::uint64_t seed);

/// All files concatenated into a single file, record order preserved.
RecordStore combine_files(const RecordStore& data);

struct SweepSettings {
  TruthSpec spec;
  FieldSchema schema;
  ThetaSource theta;
  /// Blocking key fields; they are blocked (b = infinity) and never distorted.
  std::vector<std::size_t> block_fields;
  double a = 5.0;
  double b = 10.0;
  double mu = 1.0;
  ChainConfig chain;
  std::uint64_t data_seed = 1;
  /// Run the levels on separate threads.
  bool parallel = false;
};

struct SweepRow {
  double level = 0.0;
  LinkCounts links;
  NSummary n;
  std::size_t true_n = 0;
  ChainStats stats;
  double seconds = 0.0;
};

/// For each level: generate with data_seed, run one chain on stream = level
/// index, score against the truth.
std::vector<SweepRow> distortion_sweep(std::span<const double> levels, const SweepSettings& settings);

}  // namespace smered
