// One PASS/FAIL line per criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "oracle.hpp"
#include "smered/analysis.hpp"
#include "smered/evaluation.hpp"
#include "smered/sampler.hpp"
#include "smered/simulate.hpp"

using namespace smered;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

bool within_3se(double got, double mean, double var, int n) { return std::abs(got - mean) <= 3.0 * std::sqrt(var / n); }

// 1. sampler against the enumerated posterior
Verdict exact_posterior() {
  const auto start = Clock::now();
  auto data = oracle::make_store({{{0, 1}, {1, 1}, {0, 0}}, {{0, 1}, {1, 0}}}, {2, 2});
  auto h = Hyperparameters::uniform(data.schema(), 1.0, 4.0, 1.0);
  const auto exact = oracle::exact_partition_posterior(data, h, true);
  ChainConfig c;
  c.sg = 200000;
  c.sm = 1;
  c.st = 1;
  c.burn_in = 10000;
  c.thin = 1;
  c.corrected_mh = true;
  c.seed = 2024;
  auto s = run_chain(data, h, build_blocks(data, {}), c);
  std::map<std::vector<Label>, double> freq;
  for (const auto& p : s.partitions) freq[p] += 1.0 / double(s.size());
  double tv = 0.0;
  for (const auto& [p, prob] : exact) tv += std::abs(prob - (freq.count(p) ? freq[p] : 0.0));
  for (const auto& [p, f] : freq)
    if (!exact.count(p)) tv += f;
  tv /= 2.0;
  const double secs = seconds_since(start);
  return {tv <= 0.05 && secs < 120.0,
          fmt("TV = %.4f (<= 0.05)", tv) + fmt(", %.1f s (< 120 s)", secs) +
              ", partitions = " + std::to_string(exact.size())};
}

// 2. full-conditional moments
Verdict conditional_moments() {
  const int draws = 100000;
  std::vector<std::string> failed;
  Rng rng(77);

  {
    auto data = oracle::make_store({{{0}, {1}, {0}, {1}, {0}, {0}, {1}}}, {2});
    auto h = Hyperparameters::uniform(data.schema(), 5.0, 10.0, 1.0);
    auto st = init_state(data, h, 1);
    st.z = {1, 0, 1, 0, 0, 0, 0};
    double sum = 0.0;
    for (int i = 0; i < draws; ++i) {
      resample_beta(st, data, h, rng);
      sum += st.beta[0];
    }
    const double a = 7.0, b = 15.0;
    if (!within_3se(sum / draws, a / (a + b), a * b / ((a + b) * (a + b) * (a + b + 1)), draws)) failed.push_back("beta");
  }
  {
    auto data = oracle::make_store({{{2}, {2}, {0}}}, {4});
    auto h = Hyperparameters::uniform(data.schema(), 5.0, 10.0, 1.0);
    auto st = init_state(data, h, 1);
    // y = (2, 2, 0); record 1 distorted on top
    st.z = {0, 1, 0};
    std::vector<double> alpha{2.0, 1.0, 4.0, 1.0};
    const double total = 8.0;
    std::vector<double> sum(4, 0.0);
    for (int i = 0; i < draws; ++i) {
      resample_theta(st, data, h, rng);
      for (int k = 0; k < 4; ++k) sum[k] += st.theta[0][k];
    }
    for (int k = 0; k < 4; ++k) {
      const double m = alpha[k] / total;
      if (!within_3se(sum[k] / draws, m, m * (1 - m) / (total + 1), draws)) failed.push_back("theta");
    }
  }
  {
    auto data = oracle::make_store({{{0}}}, {2});
    auto h = Hyperparameters::uniform(data.schema());
    auto st = init_state(data, h, 1);
    st.theta[0] = {0.2, 0.8};
    st.beta[0] = 0.5;
    int ones = 0;
    for (int i = 0; i < draws; ++i) {
      resample_z(st, data, h, rng);
      ones += st.z[0];
    }
    const double p = 0.5 * 0.2 / (0.5 * 0.2 + 0.5);
    if (!within_3se(double(ones) / draws, p, p * (1 - p), draws)) failed.push_back("z");
  }
  {
    auto data = oracle::make_store({{{0}}, {{2}}}, {3});
    auto h = Hyperparameters::uniform(data.schema());
    auto st = init_state(data, h, 1);
    st.theta[0] = {0.5, 0.3, 0.2};
    st.labels = {0, 0};
    st.z = {1, 1};
    std::vector<int> count(3, 0);
    for (int i = 0; i < draws; ++i) {
      resample_y(st, data, h, rng);
      ++count[st.y_at(0, 0)];
    }
    for (int k = 0; k < 3; ++k) {
      const double p = st.theta[0][k];
      if (!within_3se(double(count[k]) / draws, p, p * (1 - p), draws)) failed.push_back("y");
    }
  }
  std::string detail = "beta, theta, z, y within 3 SE over 10^5 draws";
  if (!failed.empty()) {
    detail += "; outside:";
    for (const auto& f : failed) detail += " " + f;
  }
  return {failed.empty(), detail};
}

// 3. invariants on every visited state
Verdict invariants() {
  Rng rng(5);
  auto data = oracle::random_store({12, 10, 8}, {3, 2, 4}, rng);
  auto h = Hyperparameters::uniform(data.schema());
  h.set_blocked(1);
  auto blocks = build_blocks(data, {1});
  std::uint64_t states = 0, z_violations = 0, dup_violations = 0;
  auto check = [&](const LatentState& s, Transition) {
    ++states;
    for (RecordId r = 0; r < data.n_max(); ++r)
      for (std::size_t l = 0; l < data.num_fields(); ++l)
        if (s.z_at(r, l) == 0 && s.y_at(s.labels[r], l) != data.value(r, l)) ++z_violations;
    if (!oracle::no_within_file_links(s.labels, data)) ++dup_violations;
  };
  RunOptions opts;
  opts.observer = check;
  for (bool corrected : {false, true}) {
    ChainConfig c;
    c.sg = 200000;
    c.sm = 1;
    c.st = 1;
    c.burn_in = 0;
    c.thin = 1000;
    c.corrected_mh = corrected;
    c.seed = corrected ? 2 : 1;
    run_chain(data, h, blocks, c, opts);
  }
  const bool pass = states >= 1000000 && z_violations == 0 && dup_violations == 0;
  return {pass, std::to_string(states) + " states, " + std::to_string(z_violations) + " z=0 violations, " +
                    std::to_string(dup_violations) + " within-file duplicates"};
}

RecordStore scaling_data(std::size_t n_max, std::uint64_t seed) {
  Rng rng(seed, 1);
  std::vector<std::size_t> sizes{n_max / 2, n_max - n_max / 2};
  auto spec = TruthSpec::by_file_sizes(n_max, sizes, rng);
  std::vector<std::size_t> levels(4, 30);
  return generate(spec, FieldSchema::with_levels(levels), ThetaSource::dirichlet(1.0), 0.01, {}, seed).data;
}

double sweep_seconds(const RecordStore& data, std::size_t sm, std::size_t sweeps) {
  auto h = Hyperparameters::uniform(data.schema());
  auto blocks = build_blocks(data, {});
  ChainConfig c;
  c.sg = sweeps;
  c.sm = sm;
  c.st = 1;
  c.burn_in = 0;
  c.thin = sweeps;
  const auto start = Clock::now();
  run_chain(data, h, blocks, c);
  return seconds_since(start) / double(sweeps);
}

// 4. per-sweep cost is linear in N_max and in S_M
Verdict scaling() {
  const std::vector<std::size_t> sizes{1000, 10000, 100000};
  std::vector<double> lx, ly;
  std::string detail = "per-sweep s:";
  for (std::size_t n : sizes) {
    auto data = scaling_data(n, 11);
    const std::size_t sweeps = n >= 100000 ? 2 : (n >= 10000 ? 5 : 30);
    const double t = sweep_seconds(data, 1000, sweeps);
    lx.push_back(std::log(double(n)));
    ly.push_back(std::log(t));
    detail += fmt(" %.3g", t);
  }
  const double mx = (lx[0] + lx[1] + lx[2]) / 3, my = (ly[0] + ly[1] + ly[2]) / 3;
  double sxy = 0, sxx = 0;
  for (int i = 0; i < 3; ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  const double slope = sxy / sxx;

  auto data = scaling_data(10000, 12);
  const double t_small = sweep_seconds(data, 250, 10);
  const double t_big = sweep_seconds(data, 1000, 5);
  const double ratio = t_big / t_small;
  const bool pass = std::abs(slope - 1.0) <= 0.2 && std::abs(ratio / 4.0 - 1.0) <= 0.2;
  return {pass, fmt("slope in N_max = %.3f (1.0 +- 0.2)", slope) +
                    fmt(", S_M 1000/250 time ratio = %.2f (4 +- 20%%); ", ratio) + detail};
}

// 5. distortion sweep
Verdict distortion_shape() {
  const auto start = Clock::now();
  SweepSettings st;
  Rng spec_rng(7, 1);
  std::vector<std::size_t> sizes(3, 2000);
  st.spec = TruthSpec::by_file_sizes(3000, sizes, spec_rng);
  std::vector<std::size_t> levels(4, 150);
  st.schema = FieldSchema::with_levels(levels);
  st.theta = ThetaSource::dirichlet(1.0);
  st.block_fields = {0};
  st.a = 5.0;
  st.b = 10.0;
  st.chain.sg = 600;
  st.chain.sm = 10;
  st.chain.st = 2000;
  st.chain.burn_in = 200;
  st.chain.thin = 10;
  st.chain.corrected_mh = true;
  st.chain.seed = 7;
  st.data_seed = 7;
  const std::vector<double> grid{0.0, 0.0025, 0.005, 0.01, 0.02, 0.05};
  const auto rows = distortion_sweep(grid, st);
  const double secs = seconds_since(start);

  int inversions = 0;
  bool small_inversions = true;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].links.fnr < rows[i - 1].links.fnr) {
      ++inversions;
      if (rows[i - 1].links.fnr - rows[i].links.fnr > 0.02) small_inversions = false;
    }
  const bool fnr_ok = inversions <= 1 && small_inversions;
  const double fpr1 = rows[3].links.fpr, fpr5 = rows[5].links.fpr;
  const bool fpr_ok = fpr5 > 3.0 * fpr1;
  auto rel = [&](std::size_t i) { return std::abs(rows[i].n.mean - double(rows[i].true_n)) / double(rows[i].true_n); };
  double worst_low = 0.0;
  for (std::size_t i = 0; i <= 3; ++i) worst_low = std::max(worst_low, rel(i));
  const bool n_ok = worst_low <= 0.03 && rel(5) > worst_low;
  const bool time_ok = secs < 1800.0;

  std::string detail = "fnr:";
  for (const auto& r : rows) detail += fmt(" %.4f", r.links.fnr);
  detail += "; fpr:";
  for (const auto& r : rows) detail += fmt(" %.5f", r.links.fpr);
  detail += fmt("; fpr(5%%)/fpr(1%%) = %.2f", fpr5 / fpr1);
  detail += fmt("; N rel err <=1%%: %.4f, 5%%: %.4f", worst_low, rel(5));
  detail += fmt("; %.0f s", secs);
  return {fnr_ok && fpr_ok && n_ok && time_ok, detail};
}

// 6. rates from fixed link counts
Verdict table_rates() {
  auto lc = LinkCounts::from_counts(25196.0, 1298.9, 3050.0);
  const bool pass = std::abs(lc.fnr - 0.108) <= 0.0005 && std::abs(lc.fpr - 0.046) <= 0.0005;
  return {pass, fmt("FNR = %.4f, FPR = %.4f", lc.fnr, lc.fpr)};
}

// 7. shared-MMS clusters are disjoint
Verdict shared_mms_disjoint() {
  Rng rng(9);
  int bad = 0;
  for (int run = 0; run < 100; ++run) {
    auto data = oracle::random_store({3 + rng.below(5), 3 + rng.below(5), 2 + rng.below(4)}, {2, 3}, rng);
    auto h = Hyperparameters::uniform(data.schema());
    ChainConfig c;
    c.sg = 200;
    c.sm = 3;
    c.st = 2;
    c.burn_in = 20;
    c.thin = 3;
    c.seed = 100 + run;
    c.corrected_mh = run % 2 == 0;
    auto s = run_chain(data, h, build_blocks(data, {}), c);
    auto part = shared_mms_partition(s);
    MmsCatalog cat(s);
    std::map<Label, RecordSet> clusters;
    for (RecordId r = 0; r < part.size(); ++r) clusters[part[r]].push_back(r);
    std::vector<int> seen(data.n_max(), 0);
    for (const auto& [l, members] : clusters)
      for (RecordId r : members) {
        ++seen[r];
        if (members.size() > 1 && cat.most_probable()[r].best_set != members) ++bad;
      }
    for (int k : seen)
      if (k != 1) ++bad;
  }
  return {bad == 0, "100 runs, " + std::to_string(bad) + " overlapping or unsupported clusters"};
}

// 8. exact identities of the posterior summaries
Verdict analysis_identities() {
  Rng rng(10);
  auto data = oracle::random_store({8, 7, 6}, {3, 3, 2}, rng);
  auto h = Hyperparameters::uniform(data.schema());
  ChainConfig c;
  c.sg = 3000;
  c.sm = 3;
  c.burn_in = 100;
  c.thin = 3;
  c.corrected_mh = true;
  auto s = run_chain(data, h, build_blocks(data, {}), c);
  const auto pc = pattern_counts(s, data);
  const auto n = posterior_N(s);
  double mean_sum = 0.0;
  for (double m : pc.means()) mean_sum += m;
  bool ok = pc.grand_total() == n.total;
  const double n_mean_from_total = double(n.total) / double(s.size());
  ok = ok && double(pc.grand_total()) / double(pc.samples) == n_mean_from_total;

  const auto kw = kway_match_probs(s, data);
  std::size_t bad_kway = 0;
  for (RecordId r = 0; r < data.n_max(); ++r) {
    std::size_t total = 0;
    for (const auto& [mask, count] : kw.counts[r]) total += count;
    if (total != kw.samples) ++bad_kway;
  }
  MmsCatalog cat(s);
  std::size_t bad_mms = 0, checked = 0;
  for (RecordId r = 0; r < data.n_max(); ++r)
    for (const auto& [set, p] : cat.sets_containing(r)) {
      if (set.size() < 2) continue;
      ++checked;
      if (mms_prob(s, set) > set_match_prob(s, set)) ++bad_mms;
    }
  ok = ok && bad_kway == 0 && bad_mms == 0;
  return {ok, "pattern total " + std::to_string(pc.grand_total()) + " vs N total " + std::to_string(n.total) +
                  fmt(" (mean %.4f vs %.4f)", mean_sum, n.mean) + ", k-way rows off: " + std::to_string(bad_kway) +
                  ", mms > set_match: " + std::to_string(bad_mms) + "/" + std::to_string(checked)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"exact-posterior oracle", exact_posterior},
      {"full-conditional moments", conditional_moments},
      {"state invariants", invariants},
      {"per-sweep scaling", scaling},
      {"distortion sweep shape", distortion_shape},
      {"rates from link counts", table_rates},
      {"shared MMS disjointness", shared_mms_disjoint},
      {"analysis identities", analysis_identities},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v = criteria[i].second();
    if (!v.pass) ++failures;
    std::printf("%s criterion %zu (%s): %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
