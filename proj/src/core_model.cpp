#include "smered/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "smered/error.hpp"

namespace smered {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_beta_fn(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

double log_multivariate_beta(std::span<const double> alpha) {
  double sum = 0.0;
  double acc = 0.0;
  for (double v : alpha) {
    acc += std::lgamma(v);
    sum += v;
  }
  return acc - std::lgamma(sum);
}

// x * log(y) with the 0 * log(0) = 0 convention.
double xlogy(double x, double y) { return x == 0.0 ? 0.0 : x * std::log(y); }

double log_sum_exp(std::span<const double> terms) {
  double hi = kNegInf;
  for (double t : terms) hi = std::max(hi, t);
  if (hi == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - hi);
  return hi + std::log(acc);
}

}  // namespace

std::string_view to_string(Mode mode) { return mode == Mode::Smere ? "smere" : "smered"; }

Mode parse_mode(std::string_view text) {
  if (text == "smere" || text == "SMERE") return Mode::Smere;
  if (text == "smered" || text == "SMERED") return Mode::Smered;
  throw ConfigError("unknown mode '" + std::string(text) + "' (expected smere or smered)");
}

// ---------------------------------------------------------------------------
// FieldSchema

FieldSchema::FieldSchema(std::vector<std::string> names, std::vector<std::vector<std::string>> labels)
    : names_(std::move(names)), labels_(std::move(labels)) {
  if (names_.empty()) throw ConfigError("schema needs at least one field");
  if (names_.size() != labels_.size()) throw ConfigError("schema names/labels size mismatch");
  std::unordered_set<std::string> seen_names;
  for (std::size_t l = 0; l < names_.size(); ++l) {
    if (!seen_names.insert(names_[l]).second) throw ConfigError("duplicate field name '" + names_[l] + "'");
    if (labels_[l].empty()) throw ConfigError("field '" + names_[l] + "' has no levels");
    std::unordered_set<std::string> seen(labels_[l].begin(), labels_[l].end());
    if (seen.size() != labels_[l].size())
      throw ConfigError("field '" + names_[l] + "' has duplicate level labels");
  }
}

FieldSchema FieldSchema::with_levels(std::span<const std::size_t> levels) {
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> labels;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    names.push_back("f" + std::to_string(l + 1));
    std::vector<std::string> field_labels;
    const std::size_t width = std::to_string(levels[l] > 0 ? levels[l] - 1 : 0).size();
    for (std::size_t m = 0; m < levels[l]; ++m) {
      std::string text = std::to_string(m);
      field_labels.push_back(std::string(width - text.size(), '0') + text);
    }
    labels.push_back(std::move(field_labels));
  }
  return FieldSchema(std::move(names), std::move(labels));
}

std::optional<std::size_t> FieldSchema::field_index(std::string_view name) const {
  for (std::size_t l = 0; l < names_.size(); ++l)
    if (names_[l] == name) return l;
  return std::nullopt;
}

double FieldSchema::mean_levels() const {
  double total = 0.0;
  for (const auto& l : labels_) total += static_cast<double>(l.size());
  return names_.empty() ? 0.0 : total / static_cast<double>(names_.size());
}

// ---------------------------------------------------------------------------
// RecordStore

RecordStore::RecordStore(FieldSchema schema, const std::vector<std::vector<std::vector<Level>>>& files)
    : schema_(std::move(schema)) {
  if (files.empty()) throw ConfigError("record store needs at least one file");
  const std::size_t p = schema_.num_fields();
  offsets_.push_back(0);
  for (std::size_t i = 0; i < files.size(); ++i) {
    for (std::size_t j = 0; j < files[i].size(); ++j) {
      const auto& rec = files[i][j];
      if (rec.size() != p)
        throw FormatError("file " + std::to_string(i) + " record " + std::to_string(j) + " has " +
                          std::to_string(rec.size()) + " fields, expected " + std::to_string(p));
      for (std::size_t l = 0; l < p; ++l) {
        if (rec[l] >= schema_.levels(l))
          throw FormatError("file " + std::to_string(i) + " record " + std::to_string(j) + " field '" +
                            schema_.name(l) + "' has invalid level " + std::to_string(rec[l]));
      }
      values_.insert(values_.end(), rec.begin(), rec.end());
      file_of_.push_back(static_cast<std::uint32_t>(i));
    }
    offsets_.push_back(file_of_.size());
  }
  if (file_of_.size() >= std::numeric_limits<RecordId>::max())
    throw ConfigError("too many records");
}

RecordRef RecordStore::ref(RecordId r) const {
  std::uint32_t f = file_of_.at(r);
  return {f, static_cast<std::uint32_t>(r - offsets_[f])};
}

RecordId RecordStore::id(RecordRef ref) const {
  if (ref.file >= num_files() || ref.row >= file_size(ref.file))
    throw std::out_of_range("record reference (" + std::to_string(ref.file) + ", " +
                            std::to_string(ref.row) + ") out of range");
  return static_cast<RecordId>(offsets_[ref.file] + ref.row);
}

// ---------------------------------------------------------------------------
// Hyperparameters

Hyperparameters Hyperparameters::uniform(const FieldSchema& schema, double a, double b, double mu) {
  Hyperparameters h;
  for (std::size_t l = 0; l < schema.num_fields(); ++l) {
    h.a.push_back(a);
    h.b.push_back(b);
    h.mu.emplace_back(schema.levels(l), mu);
  }
  return h;
}

bool Hyperparameters::is_blocked(std::size_t field) const { return std::isinf(b.at(field)); }

void Hyperparameters::set_blocked(std::size_t field) { b.at(field) = std::numeric_limits<double>::infinity(); }

void Hyperparameters::validate(const FieldSchema& schema) const {
  const std::size_t p = schema.num_fields();
  if (a.size() != p || b.size() != p || mu.size() != p)
    throw ConfigError("hyperparameters have " + std::to_string(a.size()) + " fields, schema has " +
                      std::to_string(p));
  for (std::size_t l = 0; l < p; ++l) {
    if (!(a[l] > 0.0) || std::isinf(a[l])) throw ConfigError("a must be positive and finite for field " + schema.name(l));
    if (!(b[l] > 0.0)) throw ConfigError("b must be positive (or infinite) for field " + schema.name(l));
    if (mu[l].size() != schema.levels(l))
      throw ConfigError("mu for field " + schema.name(l) + " has wrong length");
    for (double m : mu[l])
      if (!(m > 0.0) || std::isinf(m)) throw ConfigError("mu entries must be positive for field " + schema.name(l));
  }
}

// ---------------------------------------------------------------------------
// Posterior

void check_dimensions(const LatentState& state, const RecordStore& data, const Hyperparameters& hyper) {
  const std::size_t n = data.n_max();
  const std::size_t p = data.num_fields();
  if (state.num_fields != p || state.labels.size() != n || state.y.size() != n * p || state.z.size() != n * p ||
      state.theta.size() != p || state.beta.size() != p || hyper.a.size() != p || hyper.b.size() != p ||
      hyper.mu.size() != p)
    throw std::invalid_argument("latent state dimensions do not match data/hyperparameters");
  for (std::size_t l = 0; l < p; ++l) {
    if (state.theta[l].size() != data.schema().levels(l) || hyper.mu[l].size() != data.schema().levels(l))
      throw std::invalid_argument("theta/mu length does not match field levels");
  }
  for (Label lab : state.labels)
    if (lab >= n) throw std::invalid_argument("label out of range");
}

std::vector<std::uint8_t> occupied_labels(std::span<const Label> labels, std::size_t n_max) {
  std::vector<std::uint8_t> occ(n_max, 0);
  for (Label lab : labels) occ.at(lab) = 1;
  return occ;
}

double log_joint_posterior(const LatentState& state, const RecordStore& data, const Hyperparameters& hyper) {
  check_dimensions(state, data, hyper);
  const std::size_t n = data.n_max();
  const std::size_t p = data.num_fields();
  const auto occ = occupied_labels(state.labels, n);

  double total = 0.0;
  for (std::size_t l = 0; l < p; ++l) {
    const auto& theta = state.theta[l];
    const bool blocked = hyper.is_blocked(l);
    const double beta = blocked ? 0.0 : state.beta[l];
    const double log_beta = std::log(beta);
    const double log_1m_beta = std::log1p(-beta);

    for (RecordId r = 0; r < n; ++r) {
      const Level x = data.value(r, l);
      if (state.z_at(r, l)) {
        if (blocked) return kNegInf;
        total += log_beta + std::log(theta[x]);
      } else {
        if (state.y_at(state.labels[r], l) != x) return kNegInf;
        total += log_1m_beta;
      }
    }
    for (Label lab = 0; lab < n; ++lab)
      if (occ[lab]) total += std::log(theta[state.y_at(lab, l)]);

    for (std::size_t m = 0; m < theta.size(); ++m) total += xlogy(hyper.mu[l][m] - 1.0, theta[m]);
    total -= log_multivariate_beta(hyper.mu[l]);

    if (!blocked) {
      total += xlogy(hyper.a[l] - 1.0, beta) + xlogy(hyper.b[l] - 1.0, 1.0 - beta);
      total -= log_beta_fn(hyper.a[l], hyper.b[l]);
    }
  }
  return total;
}

double log_cluster_field_marginal(std::span<const RecordId> members, std::size_t field, const RecordStore& data,
                                  std::span<const double> theta, double beta) {
  const std::size_t levels = theta.size();
  if (beta <= 0.0) {
    // No distortion: every member must carry y.
    const Level v = data.value(members.front(), field);
    for (RecordId r : members)
      if (data.value(r, field) != v) return kNegInf;
    return std::log(theta[v]);
  }
  // Each member contributes beta * theta_x when y differs from x, and
  // (1 - beta) + beta * theta_x when y equals x.
  double base = 0.0;
  std::vector<double> bonus(levels, 0.0);
  const double log_beta = std::log(beta);
  for (RecordId r : members) {
    const Level x = data.value(r, field);
    const double distorted = log_beta + std::log(theta[x]);
    base += distorted;
    bonus[x] += std::log((1.0 - beta) + beta * theta[x]) - distorted;
  }
  std::vector<double> terms(levels);
  for (std::size_t m = 0; m < levels; ++m) terms[m] = std::log(theta[m]) + base + bonus[m];
  return log_sum_exp(terms);
}

double log_collapsed_likelihood(std::span<const Label> labels, const RecordStore& data,
                                const std::vector<std::vector<double>>& theta, std::span<const double> beta) {
  const std::size_t n = data.n_max();
  if (labels.size() != n || theta.size() != data.num_fields() || beta.size() != data.num_fields())
    throw std::invalid_argument("collapsed likelihood: dimension mismatch");
  std::vector<std::vector<RecordId>> members(n);
  for (RecordId r = 0; r < n; ++r) members.at(labels[r]).push_back(r);
  double total = 0.0;
  for (const auto& c : members) {
    if (c.empty()) continue;
    for (std::size_t l = 0; l < data.num_fields(); ++l)
      total += log_cluster_field_marginal(c, l, data, theta[l], beta[l]);
  }
  return total;
}

bool state_consistent(const LatentState& state, const RecordStore& data, const Hyperparameters& hyper, Mode mode) {
  const std::size_t n = data.n_max();
  const std::size_t p = data.num_fields();
  try {
    check_dimensions(state, data, hyper);
  } catch (const std::invalid_argument&) {
    return false;
  }
  if (n == 0) return false;

  for (std::size_t l = 0; l < p; ++l) {
    double sum = 0.0;
    for (double t : state.theta[l]) {
      if (!(t >= 0.0)) return false;
      sum += t;
    }
    if (std::abs(sum - 1.0) > 1e-12) return false;
    const double beta = state.beta[l];
    if (!(beta >= 0.0 && beta <= 1.0)) return false;
    if (hyper.is_blocked(l) && beta != 0.0) return false;
  }

  const auto occ = occupied_labels(state.labels, n);
  for (Label lab = 0; lab < n; ++lab) {
    if (!occ[lab]) continue;
    for (std::size_t l = 0; l < p; ++l)
      if (state.y_at(lab, l) >= data.schema().levels(l)) return false;
  }

  for (RecordId r = 0; r < n; ++r) {
    for (std::size_t l = 0; l < p; ++l) {
      const std::uint8_t z = state.z_at(r, l);
      if (z > 1) return false;
      if (z == 1 && hyper.is_blocked(l)) return false;
      if (z == 0 && state.y_at(state.labels[r], l) != data.value(r, l)) return false;
    }
  }

  if (mode == Mode::Smere) {
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(n * 2);
    for (RecordId r = 0; r < n; ++r) {
      const std::uint64_t key = (static_cast<std::uint64_t>(state.labels[r]) << 32) | data.file_of(r);
      if (!seen.insert(key).second) return false;
    }
  }
  return true;
}

std::size_t count_individuals(std::span<const Label> labels) {
  std::vector<Label> sorted(labels.begin(), labels.end());
  std::sort(sorted.begin(), sorted.end());
  return static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
}

std::vector<std::vector<double>> theta_conditional_params(const LatentState& state, const RecordStore& data,
                                                          const Hyperparameters& hyper) {
  check_dimensions(state, data, hyper);
  const std::size_t n = data.n_max();
  const std::size_t p = data.num_fields();
  std::vector<std::vector<double>> params = hyper.mu;
  const auto occ = occupied_labels(state.labels, n);
  for (Label lab = 0; lab < n; ++lab) {
    if (!occ[lab]) continue;
    for (std::size_t l = 0; l < p; ++l) params[l][state.y_at(lab, l)] += 1.0;
  }
  for (RecordId r = 0; r < n; ++r)
    for (std::size_t l = 0; l < p; ++l)
      if (state.z_at(r, l)) params[l][data.value(r, l)] += 1.0;
  return params;
}

}  // namespace smered
