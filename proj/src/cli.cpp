#include "smered/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "smered/analysis.hpp"
#include "smered/blocking.hpp"
#include "smered/error.hpp"
#include "smered/evaluation.hpp"
#include "smered/io.hpp"
#include "smered/sampler.hpp"
#include "smered/simulate.hpp"

namespace smered {

const char* const kHeatmapScript = R"(import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

src = sys.argv[1] if len(sys.argv) > 1 else "heatmap.tsv"
dst = sys.argv[2] if len(sys.argv) > 2 else "heatmap.png"

with open(src) as f:
    rows = [line.rstrip("\n").split("\t") for line in f if not line.startswith("#")]
cols = rows[0][1:]
names = [r[0] for r in rows[1:]]
values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])

fig, ax = plt.subplots(figsize=(1 + 0.45 * len(cols), 1 + 0.45 * len(names)))
im = ax.imshow(values, cmap="viridis", vmin=0.0, vmax=1.0)
ax.set_xticks(range(len(cols)), cols, rotation=90)
ax.set_yticks(range(len(names)), names)
ax.set_xlabel("true pattern")
ax.set_ylabel("estimated pattern")
fig.colorbar(im, ax=ax)
fig.tight_layout()
fig.savefig(dst, dpi=150)
)";

namespace {

struct Settings {
  std::string config;
  std::vector<std::string> inputs;
  std::vector<std::string> blocks;
  double a = 5.0;
  double b = 10.0;
  double mu = 1.0;
  std::optional<std::size_t> sg, sm, st, burnin, thin;
  std::uint64_t seed = 1;
  std::string mode;
  std::string truth_column;
  std::string out = ".";
  std::size_t chains = 1;
  bool corrected = false;
  std::string delimiter = ",";
  std::size_t progress = 0;

  // evaluate / report
  std::string samples;
  std::string estimate;
  std::vector<std::string> queries;
  double threshold = 0.5;

  // simulate
  std::size_t files = 3;
  std::size_t records = 500;
  std::size_t population = 0;
  std::size_t fields = 4;
  std::size_t levels = 20;
  double distortion = 0.0;
  double duplicates = 0.0;
  std::vector<double> sweep;
};

// key = value lines; '#' starts a comment
std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  while (std::getline(in, line)) {
    ++no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(no) + ": expected key = value");
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(path + ":" + std::to_string(no) + ": empty key");
    entries.emplace_back(std::move(key), std::move(value));
  }
  return entries;
}

void add_common(CLI::App* cmd, Settings& s) {
  cmd->add_option("--config", s.config, "Key-value config file; flags override it");
  cmd->add_option("--out", s.out, "Output directory");
  cmd->add_option("--seed", s.seed, "Random seed");
  cmd->add_option("--delimiter", s.delimiter, "Field delimiter of input files")->check([](const std::string& d) {
    return d.size() == 1 ? std::string() : std::string("delimiter must be one character");
  });
}

void add_inputs(CLI::App* cmd, Settings& s, bool required) {
  auto* opt = cmd->add_option("--input", s.inputs, "Input file (repeat for several files)");
  if (required) opt->required();
  cmd->add_option("--truth-column", s.truth_column, "Column holding true entity identifiers");
}

void add_chain(CLI::App* cmd, Settings& s) {
  cmd->add_option("--block", s.blocks, "Blocking field (repeatable)");
  cmd->add_option("--a", s.a, "Beta prior a for every field");
  cmd->add_option("--b", s.b, "Beta prior b for every non-blocking field");
  cmd->add_option("--mu", s.mu, "Symmetric Dirichlet prior mu");
  cmd->add_option("--sg", s.sg, "Outer sweeps");
  cmd->add_option("--sm", s.sm, "Middle iterations per sweep");
  cmd->add_option("--st", s.st, "Split/merge proposals per middle iteration");
  cmd->add_option("--burnin", s.burnin, "Burn-in sweeps");
  cmd->add_option("--thin", s.thin, "Thinning interval");
  cmd->add_option("--mode", s.mode, "smere or smered");
  cmd->add_option("--chains", s.chains, "Independent chains run concurrently");
  cmd->add_flag("--corrected-mh", s.corrected, "Exact split/merge acceptance ratio");
  cmd->add_option("--progress", s.progress, "Print a progress line every n sweeps");
}

void build(CLI::App& app, Settings& s, bool strict = true) {
  app.require_subcommand(1);
  auto* link = app.add_subcommand("link", "Link records across files (no duplicates within a file)");
  auto* dedup = app.add_subcommand("dedup", "Link and de-duplicate all files combined into one");
  auto* simulate = app.add_subcommand("simulate", "Generate synthetic files, or run a distortion sweep");
  auto* evaluate = app.add_subcommand("evaluate", "Score samples or a point estimate against the truth");
  auto* report = app.add_subcommand("report", "Posterior summaries of stored samples");
  for (auto* cmd : {link, dedup}) {
    add_common(cmd, s);
    add_inputs(cmd, s, strict);
    add_chain(cmd, s);
  }
  add_common(simulate, s);
  add_chain(simulate, s);
  simulate->add_option("--files", s.files, "Number of files");
  simulate->add_option("--records", s.records, "Records per file");
  simulate->add_option("--population", s.population, "Population size (default 1.5 x records)");
  simulate->add_option("--fields", s.fields, "Number of fields");
  simulate->add_option("--levels", s.levels, "Levels per field");
  simulate->add_option("--distortion", s.distortion, "Distortion probability");
  simulate->add_option("--duplicates", s.duplicates, "Within-file duplicate rate");
  simulate->add_option("--sweep", s.sweep, "Distortion levels to sweep (runs chains)")->delimiter(',');

  add_common(evaluate, s);
  add_inputs(evaluate, s, strict);
  evaluate->add_option("--samples", s.samples, "Sample file written by link or dedup");
  evaluate->add_option("--estimate", s.estimate, "Point estimate TSV (file, row, cluster)");
  evaluate->add_option("--mode", s.mode, "smere or smered (default: from the samples)");

  add_common(report, s);
  add_inputs(report, s, strict);
  auto* samples = report->add_option("--samples", s.samples, "Sample file written by link or dedup");
  if (strict) samples->required();
  report->add_option("--query", s.queries, "Records as file:row, comma separated (repeatable)");
  report->add_option("--threshold", s.threshold, "Match probability threshold for pairwise links");
}

std::string joined(const std::vector<std::string>& v, const char* sep = ",") {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

class Output {
 public:
  explicit Output(const std::string& dir) : dir_(dir) { std::filesystem::create_directories(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::ofstream open(const std::string& name) const {
    std::ofstream f(path(name));
    if (!f) throw IoError("cannot write '" + path(name) + "'");
    f << std::setprecision(12);
    return f;
  }

 private:
  std::filesystem::path dir_;
};

struct KeyValues {
  std::vector<std::pair<std::string, std::string>> items;
  template <class T>
  void add(const std::string& key, const T& value) {
    std::ostringstream os;
    os << std::setprecision(12) << value;
    items.emplace_back(key, os.str());
  }
  void write(std::ostream& os) const {
    for (const auto& [k, v] : items) os << k << " = " << v << '\n';
  }
};

ChainConfig chain_config(const Settings& s, Mode mode) {
  ChainConfig c = ChainConfig::defaults(mode);
  if (s.sg) c.sg = *s.sg;
  if (s.sm) c.sm = *s.sm;
  if (s.st) c.st = *s.st;
  if (s.burnin) c.burn_in = *s.burnin;
  if (s.thin) c.thin = *s.thin;
  c.seed = s.seed;
  c.corrected_mh = s.corrected;
  c.validate();
  return c;
}

std::vector<std::size_t> block_fields(const FieldSchema& schema, const std::vector<std::string>& names) {
  std::vector<std::size_t> fields;
  for (const auto& name : names) {
    auto f = schema.field_index(name);
    if (!f) throw ConfigError("unknown blocking field '" + name + "'");
    fields.push_back(*f);
  }
  return fields;
}

Hyperparameters hyperparameters(const FieldSchema& schema, const Settings& s, std::span<const std::size_t> blocks) {
  if (!(s.a > 0.0) || !(s.b > 0.0) || !(s.mu > 0.0)) throw ConfigError("a, b and mu must be positive");
  auto hyper = Hyperparameters::uniform(schema, s.a, s.b, s.mu);
  for (std::size_t f : blocks) hyper.set_blocked(f);
  return hyper;
}

void describe_chain(KeyValues& kv, const ChainConfig& c, const Settings& s) {
  kv.add("mode", to_string(c.mode));
  kv.add("a", s.a);
  kv.add("b", s.b);
  kv.add("mu", s.mu);
  kv.add("block", s.blocks.empty() ? std::string("(none)") : joined(s.blocks));
  kv.add("sg", c.sg);
  kv.add("sm", c.sm);
  kv.add("st", c.st);
  kv.add("burnin", c.burn_in);
  kv.add("thin", c.thin);
  kv.add("seed", c.seed);
  kv.add("chains", s.chains);
  kv.add("corrected_mh", c.corrected_mh ? "true" : "false");
}

void describe_data(KeyValues& kv, const Settings& s, const RecordStore& data) {
  kv.add("input", joined(s.inputs));
  kv.add("delimiter", s.delimiter);
  kv.add("truth_column", s.truth_column.empty() ? std::string("(none)") : s.truth_column);
  kv.add("files", data.num_files());
  kv.add("records", data.n_max());
  kv.add("fields", joined(data.schema().names()));
  std::vector<std::string> levels;
  for (std::size_t l = 0; l < data.num_fields(); ++l) levels.push_back(std::to_string(data.schema().levels(l)));
  kv.add("levels", joined(levels));
}

LoadedData load(const Settings& s) {
  LoadOptions opts;
  opts.delimiter = s.delimiter.at(0);
  if (!s.truth_column.empty()) opts.truth_column = s.truth_column;
  return load_files(s.inputs, opts);
}

std::string record_name(const RecordStore& data, RecordId r) {
  const auto ref = data.ref(r);
  return std::to_string(ref.file + 1) + ":" + std::to_string(ref.row + 1);
}

void write_partition(std::ostream& os, const RecordStore& data, std::span<const Label> partition) {
  os << "file\trow\tcluster\n";
  for (RecordId r = 0; r < data.n_max(); ++r) {
    const auto ref = data.ref(r);
    os << ref.file + 1 << '\t' << ref.row + 1 << '\t' << partition[r] << '\n';
  }
}

std::vector<Label> read_partition(const std::string& path, const RecordStore& data) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open estimate file '" + path + "'");
  std::vector<Label> labels(data.n_max());
  std::vector<std::uint8_t> seen(data.n_max(), 0);
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (no == 1 || line.empty()) continue;
    std::istringstream is(line);
    std::size_t file = 0, row = 0;
    Label label = 0;
    if (!(is >> file >> row >> label) || file == 0 || row == 0 || file > data.num_files() ||
        row > data.file_size(file - 1))
      throw FormatError(path + ": line " + std::to_string(no) + ": expected file, row and cluster");
    const RecordId r = data.id({static_cast<std::uint32_t>(file - 1), static_cast<std::uint32_t>(row - 1)});
    labels[r] = label;
    seen[r] = 1;
  }
  for (RecordId r = 0; r < data.n_max(); ++r)
    if (!seen[r]) throw FormatError(path + ": no cluster for record " + record_name(data, r));
  return labels;
}

void write_summary(std::ostream& os, const PosteriorSamples& samples, const std::string& prefix) {
  const auto n = posterior_N(samples);
  os << prefix << "samples = " << samples.size() << '\n';
  os << prefix << "posterior_n_mean = " << n.mean << '\n';
  os << prefix << "posterior_n_sd = " << n.sd << '\n';
  os << prefix << "split_accept = " << samples.stats.split_rate() << '\n';
  os << prefix << "merge_accept = " << samples.stats.merge_rate() << '\n';
  os << prefix << "split_proposals = " << samples.stats.split_proposals << '\n';
  os << prefix << "merge_proposals = " << samples.stats.merge_proposals << '\n';
  os << prefix << "infeasible = " << samples.stats.infeasible << '\n';
  os << prefix << "exhausted = " << samples.stats.exhausted << '\n';
}

void write_heatmap(const Output& dir, const ConfusionMatrix& m) {
  const auto normalized = m.row_normalized();
  auto write = [&](const std::string& name, const std::vector<double>& cells, const char* note) {
    auto f = dir.open(name);
    f << "# " << note << '\n' << "estimated\\true";
    for (std::size_t c = 1; c < m.dim(); ++c) f << '\t' << pattern_name(static_cast<FileMask>(c));
    f << '\n';
    for (std::size_t r = 1; r < m.dim(); ++r) {
      f << pattern_name(static_cast<FileMask>(r));
      for (std::size_t c = 1; c < m.dim(); ++c) f << '\t' << cells[r * m.dim() + c];
      f << '\n';
    }
  };
  write("confusion.tsv", m.cells, "records by estimated pattern (rows) and true pattern (columns)");
  write("heatmap.tsv", normalized, "row-normalized confusion matrix");
  dir.open("plot_heatmap.py") << kHeatmapScript;
}

void write_links(std::ostream& os, const LinkCounts& c, const std::string& prefix) {
  os << prefix << "true_links = " << c.true_links << '\n';
  os << prefix << "false_links = " << c.false_links << '\n';
  os << prefix << "missing_links = " << c.missing_links << '\n';
  os << prefix << "fnr = " << c.fnr << '\n';
  os << prefix << "fpr = " << c.fpr << '\n';
  os << prefix << "precision_complement = " << c.precision_complement << '\n';
}

// ---------------------------------------------------------------------------

int cmd_run(const Settings& s, Mode mode, bool combine, std::ostream& out, std::ostream& err) {
  const auto loaded = load(s);
  const RecordStore& data = loaded.store;
  const RecordStore modeled = combine ? combine_files(data) : data;
  const auto blocks_idx = block_fields(modeled.schema(), s.blocks);
  const auto hyper = hyperparameters(modeled.schema(), s, blocks_idx);
  const auto blocks = build_blocks(modeled, blocks_idx);
  ChainConfig config = chain_config(s, mode);
  config.mode = mode;
  if (s.chains == 0) throw ConfigError("--chains must be at least 1");

  const Output dir(s.out);
  KeyValues meta;
  meta.add("command", combine ? "dedup" : "link");
  describe_chain(meta, config, s);
  describe_data(meta, s, data);
  meta.add("blocks", blocks.num_blocks());
  meta.add("sample_format_version", kSampleFormatVersion);
  {
    auto f = dir.open("metadata.txt");
    meta.write(f);
  }
  meta.write(out);

  RunOptions run;
  run.progress = s.progress ? &err : nullptr;
  run.progress_every = s.progress;
  auto chains = run_chains(modeled, hyper, blocks, config, s.chains, run);
  const PosteriorSamples pooled = chains.size() == 1 ? chains.front() : pool_samples(chains);
  if (pooled.size() == 0) throw ConfigError("no samples stored; increase --sg or lower --burnin/--thin");

  save_samples(pooled, dir.path("samples.bin"));
  std::ostringstream summary;
  summary << std::setprecision(12);
  if (chains.size() > 1) {
    for (std::size_t c = 0; c < chains.size(); ++c) {
      save_samples(chains[c], dir.path("samples_chain" + std::to_string(c + 1) + ".bin"));
      write_summary(summary, chains[c], "chain" + std::to_string(c + 1) + ".");
    }
  }
  write_summary(summary, pooled, "");
  {
    auto f = dir.open("summary.txt");
    f << summary.str();
  }
  out << summary.str();

  const auto estimate = shared_mms_partition(pooled);
  auto f = dir.open("point_estimate.tsv");
  write_partition(f, data, estimate);
  return kExitOk;
}

int cmd_simulate(const Settings& s, std::ostream& out) {
  if (s.files == 0 || s.records == 0 || s.fields == 0 || s.levels == 0)
    throw ConfigError("files, records, fields and levels must be positive");
  const std::size_t population = s.population ? s.population : s.records + s.records / 2;
  std::vector<std::size_t> sizes(s.files, s.records);
  Rng spec_rng(s.seed, 1);
  TruthSpec spec = TruthSpec::by_file_sizes(population, sizes, spec_rng);
  if (s.duplicates > 0.0) {
    Rng dup_rng(s.seed, 2);
    spec = add_duplicates(std::move(spec), s.duplicates, dup_rng);
  }
  std::vector<std::size_t> levels(s.fields, s.levels);
  const auto schema = FieldSchema::with_levels(levels);
  const auto fixed = block_fields(schema, s.blocks);
  const ThetaSource theta = ThetaSource::dirichlet(s.mu);
  const Output dir(s.out);

  KeyValues meta;
  meta.add("command", "simulate");
  meta.add("files", s.files);
  meta.add("records", s.records);
  meta.add("population", population);
  meta.add("fields", s.fields);
  meta.add("levels", s.levels);
  meta.add("mu", s.mu);
  meta.add("duplicates", s.duplicates);
  meta.add("block", s.blocks.empty() ? std::string("(none)") : joined(s.blocks));
  meta.add("seed", s.seed);

  if (s.sweep.empty()) {
    meta.add("distortion", s.distortion);
    const auto sim = generate(spec, schema, theta, s.distortion, fixed, s.seed);
    for (std::size_t i = 0; i < sim.data.num_files(); ++i)
      write_file(dir.path("file" + std::to_string(i + 1) + ".csv"), sim.data, i, &sim.truth, "id");
    meta.add("true_individuals", sim.truth.num_entities());
    auto f = dir.open("metadata.txt");
    meta.write(f);
    meta.write(out);
    return kExitOk;
  }

  SweepSettings sw;
  sw.spec = spec;
  sw.schema = schema;
  sw.theta = theta;
  sw.block_fields = fixed;
  sw.a = s.a;
  sw.b = s.b;
  sw.mu = s.mu;
  const Mode mode = s.mode.empty() ? Mode::Smere : parse_mode(s.mode);
  sw.chain = chain_config(s, mode);
  sw.chain.mode = mode;
  sw.data_seed = s.seed;
  describe_chain(meta, sw.chain, s);
  meta.add("sweep", [&] {
    std::ostringstream os;
    for (std::size_t i = 0; i < s.sweep.size(); ++i) os << (i ? "," : "") << s.sweep[i];
    return os.str();
  }());
  {
    auto f = dir.open("metadata.txt");
    meta.write(f);
  }
  meta.write(out);

  const auto rows = distortion_sweep(s.sweep, sw);
  auto table = dir.open("sweep.tsv");
  auto hist = dir.open("sweep_n_histogram.tsv");
  table << "level\tfnr\tfpr\tprecision_complement\ttrue_links\tfalse_links\tmissing_links\tposterior_n_mean\t"
           "posterior_n_sd\ttrue_n\tsplit_accept\tmerge_accept\tseconds\n";
  hist << "level\tn\tcount\n";
  for (const auto& r : rows) {
    table << r.level << '\t' << r.links.fnr << '\t' << r.links.fpr << '\t' << r.links.precision_complement << '\t'
          << r.links.true_links << '\t' << r.links.false_links << '\t' << r.links.missing_links << '\t' << r.n.mean
          << '\t' << r.n.sd << '\t' << r.true_n << '\t' << r.stats.split_rate() << '\t' << r.stats.merge_rate()
          << '\t' << r.seconds << '\n';
    for (const auto& [n, count] : r.n.histogram) hist << r.level << '\t' << n << '\t' << count << '\n';
    out << "level = " << r.level << " fnr = " << r.links.fnr << " fpr = " << r.links.fpr
        << " posterior_n_mean = " << r.n.mean << " true_n = " << r.true_n << '\n';
  }
  return kExitOk;
}

int cmd_evaluate(const Settings& s, std::ostream& out) {
  if (s.truth_column.empty()) throw ConfigError("evaluate needs --truth-column");
  if (s.samples.empty() == s.estimate.empty()) throw ConfigError("evaluate needs exactly one of --samples, --estimate");
  const auto loaded = load(s);
  const RecordStore& data = loaded.store;
  const GroundTruth& truth = *loaded.truth;
  const Output dir(s.out);

  KeyValues meta;
  meta.add("command", "evaluate");
  describe_data(meta, s, data);

  std::ostringstream report;
  report << std::setprecision(12);
  ConfusionMatrix confusion;
  PatternCounts estimate_patterns;
  Mode mode = Mode::Smere;
  if (!s.samples.empty()) {
    const auto samples = load_samples(s.samples);
    if (samples.n_records != data.n_max())
      throw FormatError(s.samples + ": samples cover " + std::to_string(samples.n_records) + " records, inputs have " +
                        std::to_string(data.n_max()));
    mode = s.mode.empty() ? samples.config.mode : parse_mode(s.mode);
    meta.add("samples", s.samples);
    meta.add("mode", to_string(mode));
    meta.add("stored_samples", samples.size());
    write_links(report, link_counts(samples, truth), "");
    write_links(report, link_counts(shared_mms_partition(samples), truth), "point_estimate.");
    confusion = confusion_matrix(samples, truth, data);
    estimate_patterns = pattern_counts(samples, data);
  } else {
    const auto partition = read_partition(s.estimate, data);
    mode = s.mode.empty() ? Mode::Smere : parse_mode(s.mode);
    meta.add("estimate", s.estimate);
    meta.add("mode", to_string(mode));
    write_links(report, link_counts(partition, truth), "");
    confusion = confusion_matrix(partition, truth, data);
    estimate_patterns = pattern_counts(partition, data);
  }
  report << "truth_links = " << link_counts(truth.partition(), truth).true_links << '\n';
  if (mode == Mode::Smered)
    report << "# note: fnr = missing / (true + missing); within-file duplicate pairs count as truth links\n";

  {
    auto f = dir.open("metadata.txt");
    meta.write(f);
  }
  {
    auto f = dir.open("evaluation.txt");
    f << report.str();
  }
  meta.write(out);
  out << report.str();

  write_heatmap(dir, confusion);
  const auto truth_patterns = pattern_counts(truth.partition(), data);
  const auto errors = relative_errors(estimate_patterns, truth_patterns);
  auto f = dir.open("relative_errors.tsv");
  f << "pattern\testimate\ttruth\trelative_error_percent\n";
  for (std::size_t m = 1; m < errors.size(); ++m) {
    const auto mask = static_cast<FileMask>(m);
    f << pattern_name(mask) << '\t' << estimate_patterns.mean(mask) << '\t' << truth_patterns.mean(mask) << '\t';
    if (errors[m])
      f << *errors[m];
    else
      f << "undefined";
    f << '\n';
  }
  return kExitOk;
}

RecordId parse_record(const std::string& text, const RecordStore& data) {
  const auto colon = text.find(':');
  std::size_t file = 0, row = 0;
  try {
    if (colon == std::string::npos) throw std::invalid_argument(text);
    file = std::stoul(text.substr(0, colon));
    row = std::stoul(text.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("record '" + text + "' is not file:row");
  }
  if (file == 0 || file > data.num_files() || row == 0 || row > data.file_size(file - 1))
    throw ConfigError("record '" + text + "' does not exist");
  return data.id({static_cast<std::uint32_t>(file - 1), static_cast<std::uint32_t>(row - 1)});
}

std::string set_name(const RecordStore& data, const RecordSet& set) {
  std::vector<std::string> names;
  for (RecordId r : set) names.push_back(record_name(data, r));
  return "{" + joined(names, " ") + "}";
}

int cmd_report(const Settings& s, std::ostream& out) {
  const auto loaded = load(s);
  const RecordStore& data = loaded.store;
  const auto samples = load_samples(s.samples);
  if (samples.n_records != data.n_max())
    throw FormatError(s.samples + ": samples cover " + std::to_string(samples.n_records) + " records, inputs have " +
                      std::to_string(data.n_max()));
  if (!(s.threshold >= 0.0 && s.threshold <= 1.0)) throw ConfigError("--threshold must lie in [0, 1]");
  const Mode mode = s.mode.empty() ? samples.config.mode : parse_mode(s.mode);
  const Output dir(s.out);

  KeyValues meta;
  meta.add("command", "report");
  describe_data(meta, s, data);
  meta.add("samples", s.samples);
  meta.add("mode", to_string(mode));
  meta.add("stored_samples", samples.size());
  meta.add("threshold", s.threshold);
  {
    auto f = dir.open("metadata.txt");
    meta.write(f);
  }
  meta.write(out);

  const auto n = posterior_N(samples);
  out << "posterior_n_mean = " << n.mean << '\n' << "posterior_n_sd = " << n.sd << '\n';
  {
    auto f = dir.open("n_histogram.tsv");
    f << "n\tcount\tprobability\n";
    for (const auto& [value, count] : n.histogram)
      f << value << '\t' << count << '\t' << static_cast<double>(count) / static_cast<double>(samples.size()) << '\n';
  }
  {
    const auto at_least = pattern_counts(samples, data, Multiplicity::AtLeastOne);
    auto f = dir.open("patterns.tsv");
    f << "pattern\tposterior_mean";
    std::optional<PatternCounts> exact;
    if (mode == Mode::Smered) {
      exact = pattern_counts(samples, data, Multiplicity::ExactlyOne);
      f << "\texact_multiplicity_mean";
    }
    f << '\n';
    for (std::size_t m = 1; m < at_least.num_patterns(); ++m) {
      const auto mask = static_cast<FileMask>(m);
      f << pattern_name(mask) << '\t' << at_least.mean(mask);
      if (exact) f << '\t' << exact->mean(mask);
      f << '\n';
    }
  }
  const MmsCatalog catalog(samples);
  {
    auto f = dir.open("point_estimate.tsv");
    write_partition(f, data, shared_mms_partition(samples));
  }
  {
    auto f = dir.open("threshold_links.tsv");
    f << "# pairwise links with match probability > " << s.threshold
      << "; not transitive, unlike point_estimate.tsv\n";
    f << "record1\trecord2\tprobability\n";
    for (const auto& [r1, r2] : threshold_links(samples, s.threshold))
      f << record_name(data, r1) << '\t' << record_name(data, r2) << '\t' << pairwise_match_prob(samples, r1, r2)
        << '\n';
  }
  if (loaded.truth) write_heatmap(dir, confusion_matrix(samples, *loaded.truth, data));

  auto f = dir.open("mms.txt");
  for (const auto& query : s.queries) {
    std::vector<RecordId> records;
    std::stringstream ss(query);
    std::string item;
    while (std::getline(ss, item, ',')) records.push_back(parse_record(item, data));
    std::ostringstream line;
    line << std::setprecision(12);
    if (records.size() == 1) {
      const auto& best = catalog.most_probable().at(records[0]);
      line << "record " << record_name(data, records[0]) << ": most probable mms = " << set_name(data, best.best_set)
           << " probability = " << best.probability << '\n';
    } else {
      RecordSet set(records.begin(), records.end());
      std::sort(set.begin(), set.end());
      set.erase(std::unique(set.begin(), set.end()), set.end());
      if (set.size() < 2) throw ConfigError("query '" + query + "' names one record twice");
      line << "set " << set_name(data, set) << ": set_match_prob = " << set_match_prob(samples, set)
           << " mms_prob = " << mms_prob(samples, set) << '\n';
    }
    f << line.str();
    out << line.str();
  }
  return kExitOk;
}

int dispatch(CLI::App& app, const Settings& s, std::ostream& out, std::ostream& err) {
  if (app.got_subcommand("link")) {
    const Mode mode = s.mode.empty() ? Mode::Smere : parse_mode(s.mode);
    return cmd_run(s, mode, false, out, err);
  }
  if (app.got_subcommand("dedup")) {
    const Mode mode = s.mode.empty() ? Mode::Smered : parse_mode(s.mode);
    return cmd_run(s, mode, true, out, err);
  }
  if (app.got_subcommand("simulate")) return cmd_simulate(s, out);
  if (app.got_subcommand("evaluate")) return cmd_evaluate(s, out);
  return cmd_report(s, out);
}

// Parse the command line once to find the subcommand and config file, then
// again with the config entries that no flag overrides.
void parse(const std::vector<std::string>& args, CLI::App& app) {
  std::vector<std::string> rest(args.begin() + (args.empty() ? 0 : 1), args.end());
  {
    CLI::App probe;
    Settings tmp;
    build(probe, tmp, false);
    auto reversed = rest;
    std::reverse(reversed.begin(), reversed.end());
    probe.parse(reversed);
    if (tmp.config.empty()) {
      auto again = rest;
      std::reverse(again.begin(), again.end());
      app.parse(again);
      return;
    }
    CLI::App* sub = probe.get_subcommands().front();
    std::vector<std::string> extra;
    for (const auto& [key, value] : read_config(tmp.config)) {
      CLI::Option* opt = nullptr;
      try {
        opt = sub->get_option("--" + key);
      } catch (const CLI::OptionNotFound&) {
        throw ConfigError(tmp.config + ": unknown key '" + key + "' for " + sub->get_name());
      }
      if (key == "config") throw ConfigError(tmp.config + ": config files cannot include others");
      if (opt->count() > 0) continue;
      extra.push_back("--" + key + "=" + value);
    }
    auto all = rest;
    all.insert(all.end(), extra.begin(), extra.end());
    std::reverse(all.begin(), all.end());
    app.parse(all);
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Bayesian record linkage and de-duplication over categorical files", "smered");
  Settings settings;
  build(app, settings);
  try {
    parse(args, app);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    return dispatch(app, settings, out, err);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace smered
