#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace smered {

/// Encoded categorical value. Levels are 0-based: field l takes values in
/// [0, levels(l)).
using Level = std::uint32_t;
/// Global record index in [0, n_max). Records of file i occupy the
/// contiguous range [file_offset(i), file_offset(i + 1)).
using RecordId = std::uint32_t;
/// Latent individual label in [0, n_max).
using Label = std::uint32_t;

/// SMERE forbids two records of one file from sharing a latent individual;
/// SMERED allows within-file duplicates.
enum class Mode { Smere, Smered };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);

/// (file, row) coordinates of a record, both 0-based.
struct RecordRef {
  std::uint32_t file = 0;
  std::uint32_t row = 0;
  auto operator<=>(const RecordRef&) const = default;
};

class FieldSchema {
 public:
  FieldSchema() = default;
  /// `labels[l]` lists the distinct level strings of field l, in encoding order.
  FieldSchema(std::vector<std::string> names, std::vector<std::vector<std::string>> labels);

  /// Schema with fields "f1".."fp" whose labels are "0".."M-1", zero-padded
  /// to equal width so that sorted label order is numeric order.
  static FieldSchema with_levels(std::span<const std::size_t> levels);

  std::size_t num_fields() const { return names_.size(); }
  std::size_t levels(std::size_t field) const { return labels_.at(field).size(); }
  const std::string& name(std::size_t field) const { return names_.at(field); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<std::string>& labels(std::size_t field) const { return labels_.at(field); }
  std::optional<std::size_t> field_index(std::string_view name) const;
  /// Average level count M over fields.
  double mean_levels() const;

  bool operator==(const FieldSchema&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<std::string>> labels_;
};

/// k files of complete, integer-encoded categorical records sharing one schema.
class RecordStore {
 public:
  RecordStore() = default;
  /// `files[i][j]` is the value vector of record j in file i.
  RecordStore(FieldSchema schema, const std::vector<std::vector<std::vector<Level>>>& files);

  const FieldSchema& schema() const { return schema_; }
  std::size_t num_files() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t num_fields() const { return schema_.num_fields(); }
  std::size_t file_size(std::size_t file) const { return offsets_.at(file + 1) - offsets_.at(file); }
  std::size_t file_offset(std::size_t file) const { return offsets_.at(file); }
  /// Total record count, the upper bound on the number of latent individuals.
  std::size_t n_max() const { return file_of_.size(); }

  std::span<const Level> record(RecordId r) const {
    return {values_.data() + static_cast<std::size_t>(r) * num_fields(), num_fields()};
  }
  Level value(RecordId r, std::size_t field) const {
    return values_[static_cast<std::size_t>(r) * num_fields() + field];
  }
  std::uint32_t file_of(RecordId r) const { return file_of_[r]; }
  RecordRef ref(RecordId r) const;
  RecordId id(RecordRef ref) const;
  /// Row-major n_max x p matrix of encoded values.
  std::span<const Level> values() const { return values_; }

  bool operator==(const RecordStore&) const = default;

 private:
  FieldSchema schema_;
  std::vector<Level> values_;
  std::vector<std::uint32_t> file_of_;
  std::vector<std::size_t> offsets_;
};

/// Beta(a, b) prior on each field's distortion probability and Dirichlet(mu)
/// prior on its level distribution. b = +infinity marks a blocked field: its
/// distortion probability is fixed at zero.
struct Hyperparameters {
  std::vector<double> a;
  std::vector<double> b;
  std::vector<std::vector<double>> mu;

  /// Same a, b and symmetric mu for every field.
  static Hyperparameters uniform(const FieldSchema& schema, double a = 5.0, double b = 10.0,
                                 double mu = 1.0);

  bool is_blocked(std::size_t field) const;
  void set_blocked(std::size_t field);
  /// Throws ConfigError when dimensions or values are invalid.
  void validate(const FieldSchema& schema) const;
};

/// One MCMC state. Only occupied labels carry meaningful latent values; the y
/// rows of unoccupied labels are ignored.
struct LatentState {
  std::size_t num_fields = 0;
  std::vector<Label> labels;        // per record
  std::vector<Level> y;             // n_max x p, row = label
  std::vector<std::uint8_t> z;      // n_max x p, row = record
  std::vector<std::vector<double>> theta;
  std::vector<double> beta;

  Level& y_at(Label label, std::size_t field) { return y[static_cast<std::size_t>(label) * num_fields + field]; }
  Level y_at(Label label, std::size_t field) const { return y[static_cast<std::size_t>(label) * num_fields + field]; }
  std::uint8_t& z_at(RecordId r, std::size_t field) { return z[static_cast<std::size_t>(r) * num_fields + field]; }
  std::uint8_t z_at(RecordId r, std::size_t field) const { return z[static_cast<std::size_t>(r) * num_fields + field]; }

  bool operator==(const LatentState&) const = default;
};

/// Throws std::invalid_argument when state dimensions do not match data/hyper.
void check_dimensions(const LatentState& state, const RecordStore& data, const Hyperparameters& hyper);

/// Log of the unnormalized joint posterior of (labels, y, z, theta, beta).
///
/// Per non-blocked field l the density is
///   prod_records [(1 - z) 1{y = x} (1 - beta) + z beta theta_x]
///   * prod_{occupied j'} theta_{y_j'}
///   * Dirichlet(theta; mu) * Beta(beta; a, b)
/// with both prior normalizing constants included. Blocked fields contribute
/// only the occupied-y and Dirichlet terms, and require z = 0 and y = x.
/// Returns -infinity when the state violates the z = 0 => y = x constraint.
/// The prior on labels is flat over partitions and contributes nothing.
double log_joint_posterior(const LatentState& state, const RecordStore& data, const Hyperparameters& hyper);

/// Log-likelihood of the data given the partition, theta and beta, with y and
/// z summed out cluster by cluster:
///   sum_c sum_l log sum_m theta_lm prod_{r in c} [(1 - beta_l) 1{x_rl = m} + beta_l theta_{l, x_rl}].
double log_collapsed_likelihood(std::span<const Label> labels, const RecordStore& data,
                                const std::vector<std::vector<double>>& theta,
                                std::span<const double> beta);

/// Collapsed log-likelihood of a single cluster on one field.
double log_cluster_field_marginal(std::span<const RecordId> members, std::size_t field,
                                  const RecordStore& data, std::span<const double> theta,
                                  double beta);

/// True iff every LatentState invariant holds, including within-file
/// injectivity of labels in SMERE mode.
bool state_consistent(const LatentState& state, const RecordStore& data, const Hyperparameters& hyper,
                      Mode mode);

/// Number of distinct labels.
std::size_t count_individuals(std::span<const Label> labels);

/// Dirichlet parameters of the full conditional of theta:
/// mu_lm + #{occupied j' : y_j'l = m} + #{records : z_rl = 1, x_rl = m}.
std::vector<std::vector<double>> theta_conditional_params(const LatentState& state, const RecordStore& data,
                                                          const Hyperparameters& hyper);

/// Occupancy flag per label.
std::vector<std::uint8_t> occupied_labels(std::span<const Label> labels, std::size_t n_max);

}  // namespace smered
