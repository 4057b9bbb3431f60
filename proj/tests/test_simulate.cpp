#include <doctest.h>

#include <cmath>
#include <set>

#include "smered/error.hpp"
#include "smered/simulate.hpp"

using namespace smered;

namespace {

TruthSpec three_files(std::size_t population, std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> sizes(3, size);
  return TruthSpec::by_file_sizes(population, sizes, rng);
}

}  // namespace

TEST_CASE("truth specs") {
  auto spec = three_files(100, 40, 1);
  CHECK_NOTHROW(spec.validate());
  CHECK(spec.num_records() == 120);
  CHECK(spec.num_individuals() <= 100);
  for (const auto& file : spec.assignment) {
    std::set<std::uint32_t> seen(file.begin(), file.end());
    CHECK(seen.size() == file.size());
  }
  // every id below num_individuals is used
  std::set<std::uint32_t> used;
  for (const auto& file : spec.assignment) used.insert(file.begin(), file.end());
  CHECK(used.size() == spec.num_individuals());

  Rng rng(2);
  std::vector<double> incl{0.5, 0.5};
  auto by_incl = TruthSpec::by_inclusion(200, incl, rng);
  CHECK_NOTHROW(by_incl.validate());
  CHECK(by_incl.num_individuals() < 200);

  TruthSpec bad;
  bad.assignment = {{0, 1, 0}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.allow_duplicates = true;
  CHECK_NOTHROW(bad.validate());
  bad.assignment = {{0}, {}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  std::vector<std::size_t> too_big{5, 20};
  CHECK_THROWS_AS(TruthSpec::by_file_sizes(10, too_big, rng), ConfigError);
}

TEST_CASE("add_duplicates appends copies in the same file") {
  auto spec = three_files(100, 50, 3);
  Rng rng(4);
  auto dup = add_duplicates(spec, 0.2, rng);
  CHECK(dup.allow_duplicates);
  CHECK_NOTHROW(dup.validate());
  for (std::size_t i = 0; i < 3; ++i) {
    REQUIRE(dup.assignment[i].size() >= 50);
    for (std::size_t j = 50; j < dup.assignment[i].size(); ++j) {
      std::set<std::uint32_t> originals(spec.assignment[i].begin(), spec.assignment[i].end());
      CHECK(originals.count(dup.assignment[i][j]) == 1);
    }
  }
  CHECK(dup.num_records() > spec.num_records());
}

TEST_CASE("zero distortion copies every individual exactly") {
  auto spec = three_files(200, 100, 5);
  auto schema = FieldSchema::with_levels(std::vector<std::size_t>{4, 6, 3});
  auto sim = generate(spec, schema, ThetaSource::dirichlet(1.0), 0.0, {}, 11);
  const std::size_t p = 3;
  for (RecordId r = 0; r < sim.data.n_max(); ++r)
    for (std::size_t l = 0; l < p; ++l) {
      CHECK(sim.z[r * p + l] == 0);
      CHECK(sim.data.value(r, l) == sim.y[sim.truth.entity[r] * p + l]);
    }
  CHECK(sim.truth.num_entities() == spec.num_individuals());
}

TEST_CASE("full distortion reproduces theta") {
  TruthSpec spec;
  spec.assignment.assign(1, {});
  const std::size_t n = 100000;
  for (std::uint32_t i = 0; i < n; ++i) spec.assignment[0].push_back(i);
  auto schema = FieldSchema::with_levels(std::vector<std::size_t>{4});
  std::vector<double> theta{0.1, 0.2, 0.3, 0.4};
  auto sim = generate(spec, schema, ThetaSource::fixed({theta}), 1.0, {}, 12);
  std::vector<double> count(4, 0.0);
  for (RecordId r = 0; r < n; ++r) count[sim.data.value(r, 0)] += 1.0;
  for (std::size_t k = 0; k < 4; ++k) {
    const double se = std::sqrt(theta[k] * (1 - theta[k]) / n);
    CHECK(std::abs(count[k] / n - theta[k]) <= 3 * se);
  }
}

TEST_CASE("distorted fraction at one percent") {
  TruthSpec spec;
  spec.assignment.assign(1, {});
  const std::size_t n = 50000;
  for (std::uint32_t i = 0; i < n; ++i) spec.assignment[0].push_back(i);
  auto schema = FieldSchema::with_levels(std::vector<std::size_t>{5, 5});
  auto sim = generate(spec, schema, ThetaSource::dirichlet(1.0), 0.01, {}, 13);
  double distorted = 0.0;
  for (auto z : sim.z) distorted += z;
  const double cells = 2.0 * n;
  const double se = std::sqrt(0.01 * 0.99 / cells);
  CHECK(std::abs(distorted / cells - 0.01) <= 3 * se);
}

TEST_CASE("undistorted fields never change") {
  auto spec = three_files(300, 100, 6);
  auto schema = FieldSchema::with_levels(std::vector<std::size_t>{5, 5});
  std::vector<std::size_t> fixed{1};
  auto sim = generate(spec, schema, ThetaSource::dirichlet(1.0), 0.5, fixed, 14);
  for (RecordId r = 0; r < sim.data.n_max(); ++r) CHECK(sim.z[r * 2 + 1] == 0);
}

TEST_CASE("generated truth is a consistent state") {
  auto spec = three_files(60, 25, 7);
  auto schema = FieldSchema::with_levels(std::vector<std::size_t>{4, 3, 5});
  std::vector<std::size_t> fixed{0};
  auto sim = generate(spec, schema, ThetaSource::dirichlet(1.0), 0.2, fixed, 15);
  auto h = Hyperparameters::uniform(schema);
  h.set_blocked(0);
  auto state = sim.true_state({0.0, 0.2, 0.2});
  CHECK(std::isfinite(log_joint_posterior(state, sim.data, h)));
  CHECK(state_consistent(state, sim.data, h, Mode::Smere));
  const std::size_t p = 3;
  for (RecordId r = 0; r < sim.data.n_max(); ++r)
    for (std::size_t l = 0; l < p; ++l)
      if (sim.z[r * p + l] == 0) CHECK(sim.data.value(r, l) == sim.y[sim.truth.entity[r] * p + l]);
  CHECK(generate(spec, schema, ThetaSource::dirichlet(1.0), 0.2, fixed, 15).data == sim.data);
}

TEST_CASE("combine_files keeps record order") {
  auto spec = three_files(50, 10, 8);
  auto sim = generate(spec, FieldSchema::with_levels(std::vector<std::size_t>{3, 3}), ThetaSource::dirichlet(1.0), 0.1, {}, 16);
  auto one = combine_files(sim.data);
  CHECK(one.num_files() == 1);
  CHECK(one.n_max() == sim.data.n_max());
  for (RecordId r = 0; r < one.n_max(); ++r)
    for (std::size_t l = 0; l < 2; ++l) CHECK(one.value(r, l) == sim.data.value(r, l));
}

TEST_CASE("noiseless sweep level blocked on every field is exact") {
  SweepSettings st;
  st.spec = three_files(300, 150, 9);
  st.schema = FieldSchema::with_levels(std::vector<std::size_t>{100, 100, 100});
  st.theta = ThetaSource::dirichlet(1.0);
  st.block_fields = {0, 1, 2};
  st.chain.sg = 30;
  st.chain.sm = 10;
  st.chain.st = 500;
  st.chain.burn_in = 10;
  st.chain.thin = 5;
  st.chain.corrected_mh = true;
  std::vector<double> levels{0.0};
  auto rows = distortion_sweep(levels, st);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].links.fnr <= 0.02);
  CHECK(rows[0].links.fpr <= 0.02);
  CHECK(rows[0].true_n == st.spec.num_individuals());
}

TEST_CASE("sweep rows are deterministic and the parallel run matches") {
  SweepSettings st;
  st.spec = three_files(120, 50, 10);
  st.schema = FieldSchema::with_levels(std::vector<std::size_t>{10, 30, 30});
  st.theta = ThetaSource::dirichlet(1.0);
  st.block_fields = {0};
  st.chain.sg = 20;
  st.chain.sm = 3;
  st.chain.st = 100;
  st.chain.burn_in = 5;
  st.chain.thin = 5;
  st.chain.corrected_mh = true;
  std::vector<double> levels{0.0, 0.05};
  auto a = distortion_sweep(levels, st);
  st.parallel = true;
  auto b = distortion_sweep(levels, st);
  REQUIRE(a.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(a[k].level == levels[k]);
    CHECK(a[k].links.true_links == b[k].links.true_links);
    CHECK(a[k].links.false_links == b[k].links.false_links);
    CHECK(a[k].n.histogram == b[k].n.histogram);
  }
}
