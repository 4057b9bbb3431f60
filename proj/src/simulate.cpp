#include "smered/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>
#include <unordered_set>

#include "smered/blocking.hpp"
#include "smered/error.hpp"

namespace smered {

TruthSpec TruthSpec::by_inclusion(std::size_t individuals, std::span<const double> inclusion, Rng& rng) {
  if (inclusion.empty()) throw ConfigError("no inclusion probabilities");
  for (double p : inclusion)
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("inclusion probability outside [0, 1]");
  std::vector<std::vector<std::uint8_t>> in(individuals, std::vector<std::uint8_t>(inclusion.size()));
  for (auto& row : in)
    for (std::size_t i = 0; i < inclusion.size(); ++i) row[i] = rng.bernoulli(inclusion[i]);
  TruthSpec spec;
  spec.assignment.resize(inclusion.size());
  std::uint32_t next = 0;
  for (const auto& row : in) {
    if (std::none_of(row.begin(), row.end(), [](std::uint8_t v) { return v != 0; })) continue;
    for (std::size_t i = 0; i < row.size(); ++i)
      if (row[i]) spec.assignment[i].push_back(next);
    ++next;
  }
  return spec;
}

TruthSpec TruthSpec::by_file_sizes(std::size_t population, std::span<const std::size_t> sizes, Rng& rng) {
  if (sizes.empty()) throw ConfigError("no file sizes");
  std::vector<std::uint32_t> ids(population);
  std::iota(ids.begin(), ids.end(), 0u);
  TruthSpec spec;
  for (std::size_t n : sizes) {
    if (n > population) throw ConfigError("file larger than the population");
    std::vector<std::uint32_t> file(n);
    // partial Fisher-Yates
    for (std::size_t j = 0; j < n; ++j) {
      std::swap(ids[j], ids[j + rng.below(population - j)]);
      file[j] = ids[j];
    }
    std::sort(file.begin(), file.end());
    spec.assignment.push_back(std::move(file));
  }
  // renumber to the individuals actually used
  std::vector<std::uint32_t> remap(population, UINT32_MAX);
  std::uint32_t next = 0;
  for (std::uint32_t id = 0; id < population; ++id) {
    bool used = false;
    for (const auto& f : spec.assignment) used = used || std::binary_search(f.begin(), f.end(), id);
    if (used) remap[id] = next++;
  }
  for (auto& f : spec.assignment)
    for (auto& id : f) id = remap[id];
  return spec;
}

void TruthSpec::validate() const {
  if (assignment.empty()) throw ConfigError("truth spec has no files");
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i].empty()) throw ConfigError("file " + std::to_string(i + 1) + " has no records");
    if (allow_duplicates) continue;
    std::unordered_set<std::uint32_t> seen;
    for (auto id : assignment[i])
      if (!seen.insert(id).second)
        throw ConfigError("individual " + std::to_string(id) + " appears twice in file " + std::to_string(i + 1) +
                          " but duplicates are not allowed");
  }
}

std::size_t TruthSpec::num_individuals() const {
  std::size_t n = 0;
  for (const auto& f : assignment)
    for (auto id : f) n = std::max<std::size_t>(n, id + 1);
  return n;
}

std::size_t TruthSpec::num_records() const {
  std::size_t n = 0;
  for (const auto& f : assignment) n += f.size();
  return n;
}

TruthSpec add_duplicates(TruthSpec spec, double rate, Rng& rng) {
  for (auto& file : spec.assignment) {
    const std::size_t n = file.size();
    for (std::size_t j = 0; j < n; ++j)
      if (rng.bernoulli(rate)) file.push_back(file[j]);
  }
  spec.allow_duplicates = true;
  return spec;
}

LatentState SimulatedData::true_state(std::vector<double> beta) const {
  const std::size_t p = data.num_fields();
  LatentState s;
  s.num_fields = p;
  s.labels = truth.entity;
  s.y.assign(data.n_max() * p, 0);
  for (RecordId r = 0; r < data.n_max(); ++r)
    for (std::size_t l = 0; l < p; ++l) s.y_at(s.labels[r], l) = y[std::size_t{truth.entity[r]} * p + l];
  s.z = z;
  s.theta = theta;
  s.beta = std::move(beta);
  return s;
}

SimulatedData generate(const TruthSpec& spec, const FieldSchema& schema, const ThetaSource& source,
                       double distortion, std::span<const std::size_t> undistorted, std::uint64_t seed) {
  spec.validate();
  if (!(distortion >= 0.0 && distortion <= 1.0)) throw ConfigError("distortion outside [0, 1]");
  const std::size_t p = schema.num_fields();
  if (p == 0) throw ConfigError("schema has no fields");
  std::vector<std::uint8_t> fixed(p, 0);
  for (std::size_t f : undistorted) {
    if (f >= p) throw ConfigError("undistorted field index out of range");
    fixed[f] = 1;
  }

  Rng rng(seed);
  SimulatedData out;
  if (source.theta) {
    out.theta = *source.theta;
    if (out.theta.size() != p) throw ConfigError("theta has the wrong number of fields");
    for (std::size_t l = 0; l < p; ++l) {
      if (out.theta[l].size() != schema.levels(l)) throw ConfigError("theta has the wrong number of levels");
      double sum = 0.0;
      for (double v : out.theta[l]) {
        if (!(v >= 0.0)) throw ConfigError("negative theta entry");
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("theta does not sum to one");
    }
  } else {
    if (!(source.mu > 0.0)) throw ConfigError("Dirichlet mu must be positive");
    out.theta.resize(p);
    for (std::size_t l = 0; l < p; ++l) {
      std::vector<double> alpha(schema.levels(l), source.mu);
      out.theta[l].resize(alpha.size());
      rng.dirichlet(alpha, out.theta[l]);
    }
  }
  std::vector<std::vector<double>> cumulative(p);
  for (std::size_t l = 0; l < p; ++l) {
    cumulative[l].resize(out.theta[l].size());
    std::partial_sum(out.theta[l].begin(), out.theta[l].end(), cumulative[l].begin());
  }

  const std::size_t n_ind = spec.num_individuals();
  out.y.resize(n_ind * p);
  for (std::size_t j = 0; j < n_ind; ++j)
    for (std::size_t l = 0; l < p; ++l)
      out.y[j * p + l] = static_cast<Level>(rng.categorical_cumulative(cumulative[l]));

  std::vector<std::vector<std::vector<Level>>> files(spec.assignment.size());
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < spec.assignment.size(); ++i) {
    for (std::uint32_t ind : spec.assignment[i]) {
      std::vector<Level> rec(p);
      for (std::size_t l = 0; l < p; ++l) {
        const bool distort = !fixed[l] && rng.bernoulli(distortion);
        out.z.push_back(distort);
        rec[l] = distort ? static_cast<Level>(rng.categorical_cumulative(cumulative[l])) : out.y[ind * p + l];
      }
      files[i].push_back(std::move(rec));
      ids.push_back(std::to_string(ind));
    }
  }
  out.data = RecordStore(schema, files);
  out.truth = GroundTruth::from_ids(ids);
  // from_ids numbers entities by first appearance; keep y aligned with it
  std::vector<Level> y_by_entity(out.truth.num_entities() * p);
  for (std::uint32_t e = 0; e < out.truth.names.size(); ++e) {
    const std::size_t ind = std::stoul(out.truth.names[e]);
    std::copy_n(out.y.begin() + ind * p, p, y_by_entity.begin() + std::size_t{e} * p);
  }
  out.y = std::move(y_by_entity);
  return out;
}

RecordStore combine_files(const RecordStore& data) {
  std::vector<std::vector<std::vector<Level>>> one(1);
  one[0].reserve(data.n_max());
  for (RecordId r = 0; r < data.n_max(); ++r) {
    auto rec = data.record(r);
    one[0].emplace_back(rec.begin(), rec.end());
  }
  return RecordStore(data.schema(), one);
}

std::vector<SweepRow> distortion_sweep(std::span<const double> levels, const SweepSettings& settings) {
  if (levels.empty()) throw ConfigError("no distortion levels");
  for (double d : levels)
    if (!(d >= 0.0 && d <= 1.0)) throw ConfigError("distortion level outside [0, 1]");
  settings.chain.validate();

  Hyperparameters hyper = Hyperparameters::uniform(settings.schema, settings.a, settings.b, settings.mu);
  for (std::size_t f : settings.block_fields) hyper.set_blocked(f);

  std::vector<SweepRow> rows(levels.size());
  auto run_level = [&](std::size_t k) {
    const auto start = std::chrono::steady_clock::now();
    const auto sim = generate(settings.spec, settings.schema, settings.theta, levels[k], settings.block_fields,
                              settings.data_seed);
    const auto blocks = build_blocks(sim.data, settings.block_fields);
    ChainConfig config = settings.chain;
    config.stream = settings.chain.stream + k;
    const auto samples = run_chain(sim.data, hyper, blocks, config);
    SweepRow& row = rows[k];
    row.level = levels[k];
    row.links = link_counts(samples, sim.truth);
    row.n = posterior_N(samples);
    row.true_n = sim.truth.num_entities();
    row.stats = samples.stats;
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  if (!settings.parallel) {
    for (std::size_t k = 0; k < levels.size(); ++k) run_level(k);
    return rows;
  }
  std::vector<std::exception_ptr> errors(levels.size());
  std::vector<std::thread> threads;
  for (std::size_t k = 0; k < levels.size(); ++k)
    threads.emplace_back([&, k] {
      try {
        run_level(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return rows;
}

}  // namespace smered
