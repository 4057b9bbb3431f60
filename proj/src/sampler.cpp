#include "smered/sampler.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "smered/error.hpp"

namespace smered {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Joint-posterior contribution of one cluster with its current y and z: the
// occupied-y term plus the record terms of its members.
double cluster_term_current(const LatentState& state, const RecordStore& data, Label label,
                            std::span<const RecordId> members) {
  double total = 0.0;
  for (std::size_t l = 0; l < data.num_fields(); ++l) {
    const auto& theta = state.theta[l];
    const double beta = state.beta[l];
    const Level y = state.y_at(label, l);
    total += std::log(theta[y]);
    for (RecordId r : members) {
      const Level x = data.value(r, l);
      if (state.z_at(r, l))
        total += std::log(beta) + std::log(theta[x]);
      else if (x == y)
        total += std::log1p(-beta);
      else
        return kNegInf;
    }
  }
  return total;
}

// Same contribution for latent values y with z = 1 exactly where a member
// disagrees with y.
double cluster_term_minimal(const LatentState& state, const RecordStore& data, std::span<const Level> y,
                            std::span<const RecordId> members) {
  double total = 0.0;
  for (std::size_t l = 0; l < data.num_fields(); ++l) {
    const auto& theta = state.theta[l];
    const double beta = state.beta[l];
    total += std::log(theta[y[l]]);
    const double log_keep = std::log1p(-beta);
    const double log_distort = std::log(beta);
    for (RecordId r : members) {
      const Level x = data.value(r, l);
      total += x == y[l] ? log_keep : log_distort + std::log(theta[x]);
    }
  }
  return total;
}

double cluster_collapsed(const LatentState& state, const RecordStore& data, std::span<const RecordId> members) {
  double total = 0.0;
  for (std::size_t l = 0; l < data.num_fields(); ++l)
    total += log_cluster_field_marginal(members, l, data, state.theta[l], state.beta[l]);
  return total;
}

bool files_distinct(const RecordStore& data, std::span<const RecordId> members) {
  std::vector<std::uint32_t> files;
  files.reserve(members.size());
  for (RecordId r : members) files.push_back(data.file_of(r));
  std::sort(files.begin(), files.end());
  return std::adjacent_find(files.begin(), files.end()) == files.end();
}

// Draw y and z of one cluster from their full conditionals given theta, beta.
void draw_cluster_latents(LatentState& state, const RecordStore& data, Label label,
                          std::span<const RecordId> members, Rng& rng) {
  std::vector<double> weights;
  for (std::size_t l = 0; l < data.num_fields(); ++l) {
    const auto& theta = state.theta[l];
    const double beta = state.beta[l];
    Level y;
    if (beta <= 0.0) {
      y = data.value(members.front(), l);
    } else {
      const std::size_t levels = theta.size();
      weights.assign(levels, 0.0);
      double base = 0.0;
      const double log_beta = std::log(beta);
      std::vector<double> bonus(levels, 0.0);
      for (RecordId r : members) {
        const Level x = data.value(r, l);
        const double distorted = log_beta + std::log(theta[x]);
        base += distorted;
        bonus[x] += std::log((1.0 - beta) + beta * theta[x]) - distorted;
      }
      double hi = kNegInf;
      for (std::size_t m = 0; m < levels; ++m) {
        weights[m] = std::log(theta[m]) + base + bonus[m];
        hi = std::max(hi, weights[m]);
      }
      for (double& w : weights) w = std::exp(w - hi);
      y = static_cast<Level>(rng.categorical(weights));
    }
    state.y_at(label, l) = y;
    for (RecordId r : members) {
      const Level x = data.value(r, l);
      if (x != y) {
        state.z_at(r, l) = 1;
      } else if (beta <= 0.0) {
        state.z_at(r, l) = 0;
      } else {
        const double distort = beta * theta[x];
        state.z_at(r, l) = rng.bernoulli(distort / (distort + (1.0 - beta))) ? 1 : 0;
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------

ChainConfig ChainConfig::defaults(Mode mode) {
  ChainConfig c;
  c.mode = mode;
  c.sg = 100000;
  c.sm = mode == Mode::Smere ? 100000 : 10000;
  c.st = 1;
  c.burn_in = 1000;
  c.thin = 100;
  return c;
}

void ChainConfig::validate() const {
  if (sg == 0 || sm == 0 || st == 0 || thin == 0) throw ConfigError("chain loop counts and thinning must be >= 1");
  if (burn_in >= sg) throw ConfigError("burn-in must be smaller than the number of outer sweeps");
}

ChainStats& ChainStats::operator+=(const ChainStats& other) {
  split_proposals += other.split_proposals;
  split_accepts += other.split_accepts;
  merge_proposals += other.merge_proposals;
  merge_accepts += other.merge_accepts;
  exhausted += other.exhausted;
  infeasible += other.infeasible;
  return *this;
}

std::vector<Label> canonicalize_partition(std::span<const Label> labels) {
  std::vector<Label> out(labels.size());
  std::vector<Label> remap;
  Label max_label = 0;
  for (Label lab : labels) max_label = std::max(max_label, lab);
  remap.assign(labels.empty() ? 0 : static_cast<std::size_t>(max_label) + 1, std::numeric_limits<Label>::max());
  Label next = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    Label& slot = remap[labels[r]];
    if (slot == std::numeric_limits<Label>::max()) slot = next++;
    out[r] = slot;
  }
  return out;
}

LatentState init_state(const RecordStore& data, const Hyperparameters& hyper, Rng& rng) {
  hyper.validate(data.schema());
  const std::size_t n = data.n_max();
  const std::size_t p = data.num_fields();
  LatentState s;
  s.num_fields = p;
  s.labels.resize(n);
  for (RecordId r = 0; r < n; ++r) s.labels[r] = r;
  s.y.assign(data.values().begin(), data.values().end());
  s.z.assign(n * p, 0);
  s.theta.resize(p);
  s.beta.assign(p, 0.0);
  for (std::size_t l = 0; l < p; ++l) {
    s.theta[l].resize(data.schema().levels(l));
    rng.dirichlet(hyper.mu[l], s.theta[l]);
    if (!hyper.is_blocked(l)) s.beta[l] = rng.beta(hyper.a[l], hyper.b[l]);
  }
  return s;
}

LatentState init_state(const RecordStore& data, const Hyperparameters& hyper, std::uint64_t seed) {
  Rng rng(seed);
  return init_state(data, hyper, rng);
}

void resample_beta(LatentState& state, const RecordStore& data, const Hyperparameters& hyper, Rng& rng) {
  const std::size_t n = data.n_max();
  const std::size_t p = data.num_fields();
  std::vector<std::size_t> distorted(p, 0);
  for (RecordId r = 0; r < n; ++r)
    for (std::size_t l = 0; l < p; ++l) distorted[l] += state.z_at(r, l);
  for (std::size_t l = 0; l < p; ++l) {
    if (hyper.is_blocked(l)) {
      state.beta[l] = 0.0;
      continue;
    }
    const double s = static_cast<double>(distorted[l]);
    state.beta[l] = rng.beta(hyper.a[l] + s, hyper.b[l] + static_cast<double>(n) - s);
  }
}

void resample_theta(LatentState& state, const RecordStore& data, const Hyperparameters& hyper, Rng& rng) {
  const auto params = theta_conditional_params(state, data, hyper);
  for (std::size_t l = 0; l < params.size(); ++l) rng.dirichlet(params[l], state.theta[l]);
}

void resample_z(LatentState& state, const RecordStore& data, const Hyperparameters& hyper, Rng& rng) {
  const std::size_t n = data.n_max();
  const std::size_t p = data.num_fields();
  // P(z = 1 | y = x = m) per field and level
  std::vector<std::vector<double>> keep_prob(p);
  std::vector<std::uint8_t> blocked(p);
  for (std::size_t l = 0; l < p; ++l) {
    blocked[l] = hyper.is_blocked(l) || state.beta[l] <= 0.0;
    const double beta = state.beta[l];
    keep_prob[l].resize(state.theta[l].size());
    for (std::size_t m = 0; m < state.theta[l].size(); ++m) {
      const double distort = beta * state.theta[l][m];
      keep_prob[l][m] = blocked[l] ? 0.0 : distort / (distort + (1.0 - beta));
    }
  }
  const Level* x = data.values().data();
  for (RecordId r = 0; r < n; ++r) {
    const std::size_t yrow = static_cast<std::size_t>(state.labels[r]) * p;
    const std::size_t row = static_cast<std::size_t>(r) * p;
    for (std::size_t l = 0; l < p; ++l) {
      const Level xv = x[row + l];
      std::uint8_t& z = state.z[row + l];
      if (hyper.is_blocked(l))
        z = 0;
      else if (state.y[yrow + l] != xv)
        z = 1;
      else
        z = rng.uniform() < keep_prob[l][xv] ? 1 : 0;
    }
  }
}

void resample_y(LatentState& state, const RecordStore& data, const Hyperparameters& hyper, Rng& rng) {
  (void)hyper;
  const std::size_t n = data.n_max();
  const std::size_t p = data.num_fields();
  std::vector<std::uint8_t> pinned(n * p, 0);
  std::vector<std::uint8_t> occupied(n, 0);
  const Level* x = data.values().data();
  for (RecordId r = 0; r < n; ++r) {
    const Label lab = state.labels[r];
    occupied[lab] = 1;
    const std::size_t yrow = static_cast<std::size_t>(lab) * p;
    const std::size_t row = static_cast<std::size_t>(r) * p;
    for (std::size_t l = 0; l < p; ++l) {
      if (state.z[row + l]) continue;
      const Level xv = x[row + l];
      if (pinned[yrow + l]) {
        if (state.y[yrow + l] != xv)
          throw std::logic_error("resample_y: undistorted records of one individual disagree");
      } else {
        pinned[yrow + l] = 1;
        state.y[yrow + l] = xv;
      }
    }
  }
  std::vector<std::vector<double>> cumulative(p);
  for (std::size_t l = 0; l < p; ++l) {
    cumulative[l].resize(state.theta[l].size());
    double acc = 0.0;
    for (std::size_t m = 0; m < state.theta[l].size(); ++m) cumulative[l][m] = (acc += state.theta[l][m]);
  }
  for (Label lab = 0; lab < n; ++lab) {
    if (!occupied[lab]) continue;
    const std::size_t yrow = static_cast<std::size_t>(lab) * p;
    for (std::size_t l = 0; l < p; ++l)
      if (!pinned[yrow + l]) state.y[yrow + l] = static_cast<Level>(rng.categorical_cumulative(cumulative[l]));
  }
}

// ---------------------------------------------------------------------------
// ClusterIndex

ClusterIndex::ClusterIndex(std::span<const Label> labels, std::size_t n_max) : members_(n_max) {
  for (RecordId r = 0; r < labels.size(); ++r) members_.at(labels[r]).push_back(r);
  in_free_.assign(n_max, 0);
  for (Label lab = static_cast<Label>(n_max); lab-- > 0;) {
    if (members_[lab].empty()) {
      free_.push_back(lab);
      in_free_[lab] = 1;
    } else {
      ++occupied_;
    }
  }
}

void ClusterIndex::assign(Label label, std::vector<RecordId> records) {
  auto& slot = members_.at(label);
  const bool was = !slot.empty();
  const bool now = !records.empty();
  slot = std::move(records);
  if (was && !now) {
    --occupied_;
    free_.push_back(label);
    in_free_[label] = 1;
  } else if (!was && now) {
    ++occupied_;
    if (in_free_[label]) {
      free_.erase(std::find(free_.begin(), free_.end(), label));
      in_free_[label] = 0;
    }
  }
}

Label ClusterIndex::acquire() {
  if (free_.empty()) throw std::logic_error("no free label");
  const Label label = free_.back();
  free_.pop_back();
  in_free_[label] = 0;
  return label;
}

// ---------------------------------------------------------------------------
// Split/merge

Proposal propose_for_pair(const LatentState& state, const ClusterIndex& clusters, const RecordStore& data,
                          const Hyperparameters& hyper, RecordId first, RecordId second,
                          const MoveOptions& options, Rng& rng) {
  (void)hyper;
  Proposal prop;
  prop.first = first;
  prop.second = second;
  const Label la = state.labels[first];
  const Label lb = state.labels[second];
  const bool smere = options.mode == Mode::Smere;
  const std::uint32_t file_first = data.file_of(first);
  const std::uint32_t file_second = data.file_of(second);
  std::size_t free_members = 0;

  if (la == lb) {
    prop.kind = MoveKind::Split;
    prop.label_a = la;
    prop.side_a.push_back(first);
    prop.side_b.push_back(second);
    for (RecordId m : clusters.members(la)) {
      if (m == first || m == second) continue;
      const std::uint32_t f = data.file_of(m);
      const bool clash_a = smere && f == file_first;
      const bool clash_b = smere && f == file_second;
      if (clash_a && clash_b) {
        prop.feasible = false;
      } else if (clash_a) {
        prop.side_b.push_back(m);
      } else if (clash_b) {
        prop.side_a.push_back(m);
      } else {
        ++free_members;
        (rng.coin() ? prop.side_a : prop.side_b).push_back(m);
      }
    }
    if (smere && prop.feasible)
      prop.feasible = files_distinct(data, prop.side_a) && files_distinct(data, prop.side_b);
  } else {
    prop.kind = MoveKind::Merge;
    prop.label_a = la;
    prop.label_b = lb;
    const auto ma = clusters.members(la);
    const auto mb = clusters.members(lb);
    prop.side_a.assign(ma.begin(), ma.end());
    prop.side_a.insert(prop.side_a.end(), mb.begin(), mb.end());
    if (smere) prop.feasible = files_distinct(data, prop.side_a);
    for (RecordId m : prop.side_a) {
      if (m == first || m == second) continue;
      const std::uint32_t f = data.file_of(m);
      if (!(smere && (f == file_first || f == file_second))) ++free_members;
    }
  }

  if (!prop.feasible) {
    prop.log_target_ratio = kNegInf;
    return prop;
  }

  if (options.corrected) {
    const double flips = static_cast<double>(free_members) * std::numbers::ln2;
    // a partition with N clusters has n_max! / (n_max - N)! labelings
    const double free_labels = static_cast<double>(data.n_max() - clusters.count());
    if (prop.kind == MoveKind::Split) {
      prop.log_target_ratio = cluster_collapsed(state, data, prop.side_a) +
                              cluster_collapsed(state, data, prop.side_b) -
                              cluster_collapsed(state, data, clusters.members(la)) + std::log(free_labels);
      prop.log_proposal_ratio = flips;
    } else {
      prop.log_target_ratio = cluster_collapsed(state, data, prop.side_a) -
                              cluster_collapsed(state, data, clusters.members(la)) -
                              cluster_collapsed(state, data, clusters.members(lb)) - std::log(free_labels + 1.0);
      prop.log_proposal_ratio = -flips;
    }
    return prop;
  }

  if (prop.kind == MoveKind::Split) {
    const auto ya = data.record(first);
    const auto yb = data.record(second);
    prop.y_a.assign(ya.begin(), ya.end());
    prop.y_b.assign(yb.begin(), yb.end());
    prop.log_target_ratio = cluster_term_minimal(state, data, prop.y_a, prop.side_a) +
                            cluster_term_minimal(state, data, prop.y_b, prop.side_b) -
                            cluster_term_current(state, data, la, clusters.members(la));
  } else {
    const auto ya = data.record(std::min(first, second));
    prop.y_a.assign(ya.begin(), ya.end());
    prop.log_target_ratio = cluster_term_minimal(state, data, prop.y_a, prop.side_a) -
                            cluster_term_current(state, data, la, clusters.members(la)) -
                            cluster_term_current(state, data, lb, clusters.members(lb));
  }
  return prop;
}

std::optional<Proposal> propose_move(const LatentState& state, const ClusterIndex& clusters, const RecordStore& data,
                                     const Hyperparameters& hyper, const BlockIndex& blocks,
                                     const MoveOptions& options, Rng& rng) {
  const auto pair = blocks.draw_pair(options.mode, rng);
  if (!pair) return std::nullopt;
  return propose_for_pair(state, clusters, data, hyper, pair->first, pair->second, options, rng);
}

void apply_move(LatentState& state, ClusterIndex& clusters, const RecordStore& data, const Proposal& proposal,
                const MoveOptions& options, Rng& rng) {
  if (!proposal.feasible || proposal.kind == MoveKind::None) throw std::logic_error("apply_move: infeasible proposal");
  const std::size_t p = data.num_fields();

  auto install_minimal = [&](Label label, std::span<const Level> y, std::span<const RecordId> members) {
    for (std::size_t l = 0; l < p; ++l) {
      state.y_at(label, l) = y[l];
      for (RecordId r : members) state.z_at(r, l) = data.value(r, l) != y[l] ? 1 : 0;
    }
  };

  if (proposal.kind == MoveKind::Split) {
    const Label la = proposal.label_a;
    const Label lb = clusters.acquire();
    for (RecordId r : proposal.side_b) state.labels[r] = lb;
    clusters.assign(la, proposal.side_a);
    clusters.assign(lb, proposal.side_b);
    if (options.corrected) {
      draw_cluster_latents(state, data, la, proposal.side_a, rng);
      draw_cluster_latents(state, data, lb, proposal.side_b, rng);
    } else {
      install_minimal(la, proposal.y_a, proposal.side_a);
      install_minimal(lb, proposal.y_b, proposal.side_b);
    }
  } else {
    const Label la = proposal.label_a;
    const Label lb = proposal.label_b;
    for (RecordId r : clusters.members(lb)) state.labels[r] = la;
    clusters.assign(lb, {});
    clusters.assign(la, proposal.side_a);
    if (options.corrected)
      draw_cluster_latents(state, data, la, proposal.side_a, rng);
    else
      install_minimal(la, proposal.y_a, proposal.side_a);
  }
}

StepResult split_merge_step(LatentState& state, ClusterIndex& clusters, const RecordStore& data,
                            const Hyperparameters& hyper, const BlockIndex& blocks, const MoveOptions& options,
                            Rng& rng, ChainStats* stats) {
  StepResult result;
  auto proposal = propose_move(state, clusters, data, hyper, blocks, options, rng);
  if (!proposal) {
    if (stats) ++stats->exhausted;
    return result;
  }
  result.kind = proposal->kind;
  const bool split = proposal->kind == MoveKind::Split;
  if (stats) ++(split ? stats->split_proposals : stats->merge_proposals);
  if (!proposal->feasible) {
    if (stats) ++stats->infeasible;
    result.log_acceptance = kNegInf;
    return result;
  }
  const double log_alpha = proposal->log_acceptance();
  result.log_acceptance = log_alpha;
  bool accept = false;
  if (log_alpha >= 0.0)
    accept = true;
  else if (log_alpha > kNegInf)
    accept = std::log(rng.uniform()) < log_alpha;
  if (accept) {
    apply_move(state, clusters, data, *proposal, options, rng);
    result.accepted = true;
    if (stats) ++(split ? stats->split_accepts : stats->merge_accepts);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Chains

PosteriorSamples run_chain(const RecordStore& data, const Hyperparameters& hyper, const BlockIndex& blocks,
                           const ChainConfig& config, const RunOptions& options) {
  config.validate();
  hyper.validate(data.schema());
  blocks.validate_against(hyper);
  if (data.n_max() == 0) throw ConfigError("no records to link");

  Rng rng(config.seed, config.stream);
  LatentState state = init_state(data, hyper, rng);
  ClusterIndex clusters(state.labels, data.n_max());
  const MoveOptions move{config.mode, config.corrected_mh};

  PosteriorSamples out;
  out.n_records = data.n_max();
  out.config = config;
  out.partitions.reserve(config.expected_samples());

  for (std::size_t sweep = 1; sweep <= config.sg; ++sweep) {
    for (std::size_t mid = 0; mid < config.sm; ++mid) {
      for (std::size_t t = 0; t < config.st; ++t) {
        split_merge_step(state, clusters, data, hyper, blocks, move, rng, &out.stats);
        if (options.observer) options.observer(state, Transition::SplitMerge);
      }
      resample_y(state, data, hyper, rng);
      resample_z(state, data, hyper, rng);
      if (options.observer) options.observer(state, Transition::LatentUpdate);
    }
    resample_theta(state, data, hyper, rng);
    resample_beta(state, data, hyper, rng);
    if (options.observer) options.observer(state, Transition::ParameterUpdate);
    assert(state_consistent(state, data, hyper, config.mode));

    if (sweep > config.burn_in && (sweep - config.burn_in) % config.thin == 0) {
      out.partitions.push_back(canonicalize_partition(state.labels));
      out.n_trace.push_back(static_cast<std::uint32_t>(clusters.count()));
      out.beta_trace.push_back(state.beta);
      if (config.record_theta) out.theta_trace.push_back(state.theta);
    }
    if (options.progress && options.progress_every && sweep % options.progress_every == 0) {
      *options.progress << "chain=" << config.stream << " sweep=" << sweep << " N=" << clusters.count()
                         << " split_accept=" << out.stats.split_rate()
                         << " merge_accept=" << out.stats.merge_rate() << '\n';
    }
  }
  return out;
}

std::vector<PosteriorSamples> run_chains(const RecordStore& data, const Hyperparameters& hyper,
                                         const BlockIndex& blocks, const ChainConfig& config, std::size_t chains,
                                         const RunOptions& options) {
  if (chains == 0) throw ConfigError("need at least one chain");
  std::vector<PosteriorSamples> results(chains);
  std::vector<std::exception_ptr> errors(chains);
  std::vector<std::thread> workers;
  for (std::size_t c = 0; c < chains; ++c) {
    workers.emplace_back([&, c] {
      try {
        ChainConfig cfg = config;
        cfg.stream = config.stream + c;
        results[c] = run_chain(data, hyper, blocks, cfg, c == 0 ? options : RunOptions{});
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

PosteriorSamples pool_samples(std::span<const PosteriorSamples> chains) {
  if (chains.empty()) throw std::invalid_argument("pool_samples: no chains");
  PosteriorSamples out;
  out.n_records = chains.front().n_records;
  out.config = chains.front().config;
  for (const auto& c : chains) {
    if (c.n_records != out.n_records) throw std::invalid_argument("pool_samples: chains cover different records");
    out.stats += c.stats;
    out.partitions.insert(out.partitions.end(), c.partitions.begin(), c.partitions.end());
    out.n_trace.insert(out.n_trace.end(), c.n_trace.begin(), c.n_trace.end());
    out.beta_trace.insert(out.beta_trace.end(), c.beta_trace.begin(), c.beta_trace.end());
    out.theta_trace.insert(out.theta_trace.end(), c.theta_trace.begin(), c.theta_trace.end());
  }
  return out;
}

}  // namespace smered
