#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracle.hpp"
#include "smered/error.hpp"
#include "smered/sampler.hpp"

using namespace smered;

namespace {

const double kNegInf = -std::numeric_limits<double>::infinity();

LatentState fresh(const RecordStore& data, const Hyperparameters& h, std::uint64_t seed = 3) {
  return init_state(data, h, seed);
}

// Randomize theta, beta and z of a state while keeping it consistent.
void scramble(LatentState& s, const RecordStore& data, const Hyperparameters& h, Rng& rng) {
  for (std::size_t l = 0; l < s.theta.size(); ++l) {
    std::vector<double> alpha(s.theta[l].size(), 2.0);
    rng.dirichlet(alpha, s.theta[l]);
    s.beta[l] = h.is_blocked(l) ? 0.0 : 0.05 + 0.9 * rng.uniform();
  }
  for (RecordId r = 0; r < data.n_max(); ++r)
    for (std::size_t l = 0; l < data.num_fields(); ++l) s.z_at(r, l) = h.is_blocked(l) ? 0 : 1;
  resample_y(s, data, h, rng);
  resample_z(s, data, h, rng);
}

}  // namespace

TEST_CASE("schema validation") {
  CHECK_THROWS_AS(FieldSchema({"a"}, {{}}), ConfigError);
  CHECK_THROWS_AS(FieldSchema({"a"}, {{"x", "x"}}), ConfigError);
  CHECK_THROWS_AS(FieldSchema({}, {}), ConfigError);
  CHECK_THROWS_AS(FieldSchema({"a", "a"}, {{"x"}, {"y"}}), ConfigError);
  FieldSchema s({"sex", "state"}, {{"F", "M"}, {"AL", "AK", "AZ"}});
  CHECK(s.num_fields() == 2);
  CHECK(s.levels(1) == 3);
  CHECK(s.field_index("state") == 1u);
  CHECK_FALSE(s.field_index("dob"));
}

TEST_CASE("with_levels pads labels so sorting keeps numeric order") {
  std::vector<std::size_t> levels{12, 3};
  auto s = FieldSchema::with_levels(levels);
  CHECK(s.labels(0).front() == "00");
  CHECK(s.labels(0).back() == "11");
  CHECK(std::is_sorted(s.labels(0).begin(), s.labels(0).end()));
  CHECK(s.labels(1) == std::vector<std::string>{"0", "1", "2"});
}

TEST_CASE("record store layout") {
  auto data = oracle::make_store({{{0, 1}, {1, 1}}, {{1, 0}}, {{0, 0}, {1, 0}, {0, 1}}}, {2, 2});
  CHECK(data.n_max() == 6);
  CHECK(data.num_files() == 3);
  CHECK(data.file_offset(2) == 3);
  CHECK(data.file_of(4) == 2);
  CHECK(data.ref(4) == RecordRef{2, 1});
  CHECK(data.id({1, 0}) == 2);
  CHECK(data.value(1, 0) == 1);
  CHECK_THROWS_AS(oracle::make_store({{{0, 2}}}, {2, 2}), FormatError);
  CHECK_THROWS_AS(oracle::make_store({{{0}}}, {2, 2}), FormatError);
}

TEST_CASE("hyperparameter validation") {
  auto data = oracle::make_store({{{0, 1}}}, {2, 2});
  auto h = Hyperparameters::uniform(data.schema());
  CHECK(h.a == std::vector<double>{5.0, 5.0});
  CHECK(h.b == std::vector<double>{10.0, 10.0});
  CHECK_NOTHROW(h.validate(data.schema()));
  h.set_blocked(1);
  CHECK(h.is_blocked(1));
  CHECK_FALSE(h.is_blocked(0));
  CHECK_NOTHROW(h.validate(data.schema()));
  auto bad = h;
  bad.a[0] = 0.0;
  CHECK_THROWS_AS(bad.validate(data.schema()), ConfigError);
  bad = h;
  bad.mu[0] = {1.0};
  CHECK_THROWS_AS(bad.validate(data.schema()), ConfigError);
  bad = h;
  bad.mu[0][1] = -1.0;
  CHECK_THROWS_AS(bad.validate(data.schema()), ConfigError);
}

TEST_CASE("count_individuals") {
  std::vector<Label> labels{1, 1, 2, 5, 5, 5};
  CHECK(count_individuals(labels) == 3);
  std::vector<Label> distinct(7);
  std::iota(distinct.begin(), distinct.end(), 0u);
  CHECK(count_individuals(distinct) == 7);
  CHECK(count_individuals(std::vector<Label>(5, 4)) == 1);
}

TEST_CASE("single record, single field, z = 1") {
  auto data = oracle::make_store({{{1}}}, {3});
  auto h = Hyperparameters::uniform(data.schema(), 2.0, 3.0, 1.0);
  LatentState s = fresh(data, h);
  s.theta[0] = {0.2, 0.5, 0.3};
  s.beta[0] = 0.25;
  s.z[0] = 1;
  s.y_at(0, 0) = 2;
  // y term + record term + Dirichlet(1,1,1) + Beta(2,3)
  const double expected = std::log(0.3) + std::log(0.25) + std::log(0.5) + std::lgamma(3.0) +
                          std::log(0.25) + 2.0 * std::log(0.75) - oracle::log_beta_fn(2.0, 3.0);
  CHECK(log_joint_posterior(s, data, h) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("z = 0 with y != x gives -infinity") {
  auto data = oracle::make_store({{{0, 1}}, {{1, 1}}}, {2, 2});
  auto h = Hyperparameters::uniform(data.schema());
  LatentState s = fresh(data, h);
  s.labels[1] = 0;
  s.z_at(1, 1) = 0;
  s.z_at(1, 0) = 0;  // x = 1 but y = 0
  CHECK(log_joint_posterior(s, data, h) == kNegInf);
  CHECK_FALSE(state_consistent(s, data, h, Mode::Smere));
  s.z_at(1, 0) = 1;
  CHECK(std::isfinite(log_joint_posterior(s, data, h)));
  CHECK(state_consistent(s, data, h, Mode::Smere));
}

TEST_CASE("log joint matches the term-by-term oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto data = oracle::random_store({2, 1}, {2, 2}, rng);
    auto h = Hyperparameters::uniform(data.schema(), 1.0, 1.0, 1.0);
    if (trial % 3 == 0) h = Hyperparameters::uniform(data.schema(), 2.5, 4.0, 0.7);
    LatentState s = fresh(data, h, trial);
    // random partition of the 3 records
    for (RecordId r = 0; r < 3; ++r) s.labels[r] = static_cast<Label>(rng.below(3));
    scramble(s, data, h, rng);
    const double expected = oracle::log_joint(s, data, h);
    const double got = log_joint_posterior(s, data, h);
    REQUIRE(std::isfinite(expected));
    CHECK(got == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("blocked fields drop the Beta factor and force agreement") {
  Rng rng(5);
  auto data = oracle::random_store({3, 3}, {2, 3, 2}, rng);
  auto h = Hyperparameters::uniform(data.schema());
  h.set_blocked(1);
  LatentState s = fresh(data, h);
  CHECK(s.beta[1] == 0.0);
  scramble(s, data, h, rng);
  CHECK(log_joint_posterior(s, data, h) == doctest::Approx(oracle::log_joint(s, data, h)).epsilon(1e-10));
  s.z_at(0, 1) = 1;
  CHECK_FALSE(state_consistent(s, data, h, Mode::Smere));
  CHECK(log_joint_posterior(s, data, h) == kNegInf);
}

TEST_CASE("finite exactly when consistent") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    auto data = oracle::random_store({2, 2}, {2, 3}, rng);
    auto h = Hyperparameters::uniform(data.schema());
    LatentState s = fresh(data, h, trial);
    for (RecordId r = 0; r < 4; ++r) s.labels[r] = static_cast<Label>(rng.below(4));
    for (auto& z : s.z) z = rng.coin();
    for (auto& y : s.y) y = static_cast<Level>(rng.below(2));
    CHECK(std::isfinite(log_joint_posterior(s, data, h)) == state_consistent(s, data, h, Mode::Smered));
  }
}

TEST_CASE("relabeling occupied individuals leaves the log joint unchanged") {
  Rng rng(8);
  auto data = oracle::random_store({3, 2, 2}, {3, 2}, rng);
  auto h = Hyperparameters::uniform(data.schema());
  LatentState s = fresh(data, h);
  s.labels = {0, 1, 2, 0, 1, 2, 3};
  scramble(s, data, h, rng);
  const double before = log_joint_posterior(s, data, h);
  std::vector<Label> perm{6, 4, 0, 5, 1, 2, 3};
  LatentState t = s;
  for (RecordId r = 0; r < data.n_max(); ++r) t.labels[r] = perm[s.labels[r]];
  for (Label j = 0; j < data.n_max(); ++j)
    for (std::size_t l = 0; l < 2; ++l) t.y_at(perm[j], l) = s.y_at(j, l);
  CHECK(log_joint_posterior(t, data, h) == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("all z = 1 reduces the record terms to theta at x") {
  Rng rng(9);
  auto data = oracle::random_store({2, 2}, {3}, rng);
  auto h = Hyperparameters::uniform(data.schema(), 1.0, 1.0, 1.0);
  LatentState s = fresh(data, h);
  s.theta[0] = {0.5, 0.3, 0.2};
  s.beta[0] = 0.4;
  for (auto& z : s.z) z = 1;
  double expected = std::lgamma(3.0);  // Dirichlet(1,1,1) density
  for (Label j = 0; j < 4; ++j) expected += std::log(s.theta[0][s.y_at(j, 0)]);
  for (RecordId r = 0; r < 4; ++r) expected += std::log(0.4) + std::log(s.theta[0][data.value(r, 0)]);
  CHECK(log_joint_posterior(s, data, h) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("theta exponent bookkeeping against a brute-force counter") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto data = oracle::random_store({4, 3}, {3, 4}, rng);
    auto h = Hyperparameters::uniform(data.schema(), 5.0, 10.0, 0.5);
    LatentState s = fresh(data, h, trial);
    for (RecordId r = 0; r < data.n_max(); ++r) s.labels[r] = static_cast<Label>(rng.below(3));
    scramble(s, data, h, rng);
    const auto params = theta_conditional_params(s, data, h);
    for (std::size_t l = 0; l < 2; ++l)
      for (Level m = 0; m < data.schema().levels(l); ++m) {
        double count = h.mu[l][m];
        std::set<Label> done;
        for (RecordId r = 0; r < data.n_max(); ++r) {
          if (done.insert(s.labels[r]).second && s.y_at(s.labels[r], l) == m) count += 1.0;
          if (s.z_at(r, l) && data.value(r, l) == m) count += 1.0;
        }
        CHECK(params[l][m] == doctest::Approx(count));
      }
  }
}

TEST_CASE("state_consistent examples") {
  auto data = oracle::make_store({{{0, 1}, {1, 0}}, {{0, 0}}}, {2, 2});
  auto h = Hyperparameters::uniform(data.schema());
  LatentState s = fresh(data, h);
  CHECK(state_consistent(s, data, h, Mode::Smere));
  CHECK(count_individuals(s.labels) == data.n_max());

  LatentState dup = s;
  dup.labels[1] = 0;
  dup.z_at(1, 0) = 1;
  dup.z_at(1, 1) = 1;
  CHECK_FALSE(state_consistent(dup, data, h, Mode::Smere));
  CHECK(state_consistent(dup, data, h, Mode::Smered));

  // merge records 0 (file 1) and 2 (file 2), masking disagreements with z
  LatentState merged = s;
  merged.labels[2] = 0;
  for (std::size_t l = 0; l < 2; ++l) merged.z_at(2, l) = data.value(2, l) != merged.y_at(0, l);
  CHECK(state_consistent(merged, data, h, Mode::Smere));

  LatentState bad_theta = s;
  bad_theta.theta[0] = {0.6, 0.6};
  CHECK_FALSE(state_consistent(bad_theta, data, h, Mode::Smere));
  LatentState bad_beta = s;
  bad_beta.beta[0] = 1.5;
  CHECK_FALSE(state_consistent(bad_beta, data, h, Mode::Smere));
}

TEST_CASE("dimension mismatch is an error") {
  auto data = oracle::make_store({{{0, 1}}}, {2, 2});
  auto h = Hyperparameters::uniform(data.schema());
  LatentState s = fresh(data, h);
  s.z.pop_back();
  CHECK_THROWS(log_joint_posterior(s, data, h));
}

TEST_CASE("collapsed cluster marginal equals the explicit sum over y and z") {
  Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    auto data = oracle::random_store({3}, {3}, rng);
    std::vector<double> theta(3);
    std::vector<double> alpha{1.0, 1.0, 1.0};
    rng.dirichlet(alpha, theta);
    const double beta = rng.uniform();
    std::vector<RecordId> members{0, 1, 2};
    double sum = 0.0;
    for (Level y = 0; y < 3; ++y) {
      double prod = theta[y];
      for (RecordId r : members) {
        const Level x = data.value(r, 0);
        prod *= (x == y ? 1.0 - beta : 0.0) + beta * theta[x];
      }
      sum += prod;
    }
    CHECK(log_cluster_field_marginal(members, 0, data, theta, beta) == doctest::Approx(std::log(sum)).epsilon(1e-12));
  }
}
