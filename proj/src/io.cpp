#include "smered/io.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <unordered_map>

#include "smered/error.hpp"

namespace smered {

namespace {

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

struct RawFile {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

RawFile read_raw(const std::string& path, char delimiter) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open input file '" + path + "'");
  RawFile raw;
  raw.path = path;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (blank(line)) continue;
    auto cells = split_line(line, delimiter);
    if (raw.header.empty()) {
      raw.header = std::move(cells);
      continue;
    }
    raw.rows.push_back(std::move(cells));
    raw.line_numbers.push_back(line_no);
  }
  if (in.bad()) throw IoError("error reading '" + path + "'");
  if (raw.header.empty()) throw FormatError(path + ": empty file");
  if (raw.rows.empty()) throw FormatError(path + ": no records");
  return raw;
}

std::string locate(const RawFile& raw, std::size_t row) {
  return raw.path + ": line " + std::to_string(raw.line_numbers[row]) + " (record " + std::to_string(row + 1) + ")";
}

// FNV-1a
std::uint64_t checksum(const char* data, std::size_t n) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ull;
  }
  return h;
}

constexpr char kMagic[8] = {'S', 'M', 'R', 'D', 'S', 'M', 'P', 'L'};
constexpr char kEnd[8] = {'S', 'M', 'R', 'D', 'E', 'N', 'D', '.'};

class Writer {
 public:
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  template <class T>
  void put_array(const std::vector<T>& v) {
    put<std::uint64_t>(v.size());
    const auto* p = reinterpret_cast<const char*>(v.data());
    buf_.insert(buf_.end(), p, p + v.size() * sizeof(T));
  }
  void raw(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  std::vector<char>& buffer() { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const std::vector<char>& buf, std::size_t end) : buf_(buf), end_(end) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  template <class T>
  std::vector<T> get_array() {
    const auto n = get<std::uint64_t>();
    if (n > (end_ - pos_) / sizeof(T)) throw FormatError("sample file truncated");
    std::vector<T> v(n);
    std::memcpy(v.data(), buf_.data() + pos_, n * sizeof(T));
    pos_ += n * sizeof(T);
    return v;
  }
  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw FormatError("sample file truncated");
  }
  const std::vector<char>& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::string> split_line(const std::string& line, char delimiter) {
  std::vector<std::string> cells(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cells.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delimiter) {
      cells.emplace_back();
    } else {
      cells.back() += c;
    }
  }
  return cells;
}

LoadedData load_files(std::span<const std::string> paths, const LoadOptions& options) {
  if (paths.empty()) throw ConfigError("no input files");
  std::vector<RawFile> raws;
  for (const auto& path : paths) raws.push_back(read_raw(path, options.delimiter));

  // field names from the first file; every file must carry the same set
  const auto& first = raws.front().header;
  std::vector<std::string> names;
  std::optional<std::size_t> truth_pos0;
  for (std::size_t c = 0; c < first.size(); ++c) {
    if (options.truth_column && first[c] == *options.truth_column) {
      truth_pos0 = c;
      continue;
    }
    if (blank(first[c])) throw FormatError(raws.front().path + ": header column " + std::to_string(c + 1) + " is empty");
    names.push_back(first[c]);
  }
  if (options.truth_column && !truth_pos0)
    throw FormatError(raws.front().path + ": no truth column '" + *options.truth_column + "'");
  if (names.empty()) throw FormatError(raws.front().path + ": no data columns");
  {
    auto sorted = names;
    std::sort(sorted.begin(), sorted.end());
    auto dup = std::adjacent_find(sorted.begin(), sorted.end());
    if (dup != sorted.end()) throw FormatError(raws.front().path + ": column '" + *dup + "' appears twice");
  }

  // column position of every field (and the truth column) in every file
  const std::size_t p = names.size();
  std::vector<std::vector<std::size_t>> column(raws.size(), std::vector<std::size_t>(p));
  std::vector<std::size_t> truth_col(raws.size(), 0);
  for (std::size_t i = 0; i < raws.size(); ++i) {
    const auto& header = raws[i].header;
    const std::size_t expected = p + (options.truth_column ? 1 : 0);
    std::map<std::string, std::size_t> where;
    for (std::size_t c = 0; c < header.size(); ++c) where.emplace(header[c], c);
    if (header.size() != expected || where.size() != header.size())
      throw FormatError(raws[i].path + ": header does not match " + raws.front().path);
    for (std::size_t l = 0; l < p; ++l) {
      auto it = where.find(names[l]);
      if (it == where.end())
        throw FormatError(raws[i].path + ": header mismatch, missing column '" + names[l] + "'");
      column[i][l] = it->second;
    }
    if (options.truth_column) {
      auto it = where.find(*options.truth_column);
      if (it == where.end())
        throw FormatError(raws[i].path + ": no truth column '" + *options.truth_column + "'");
      truth_col[i] = it->second;
    }
  }

  // validate rows and collect the level sets
  std::vector<std::vector<std::string>> labels(p);
  for (std::size_t i = 0; i < raws.size(); ++i) {
    const auto& raw = raws[i];
    for (std::size_t j = 0; j < raw.rows.size(); ++j) {
      const auto& row = raw.rows[j];
      if (row.size() != raw.header.size())
        throw FormatError(locate(raw, j) + ": expected " + std::to_string(raw.header.size()) + " cells, found " +
                          std::to_string(row.size()));
      for (std::size_t c = 0; c < row.size(); ++c)
        if (blank(row[c])) throw FormatError(locate(raw, j) + ": empty value in column '" + raw.header[c] + "'");
      for (std::size_t l = 0; l < p; ++l) labels[l].push_back(row[column[i][l]]);
    }
  }
  for (auto& set : labels) {
    std::sort(set.begin(), set.end());
    set.erase(std::unique(set.begin(), set.end()), set.end());
  }

  std::vector<std::unordered_map<std::string, Level>> code(p);
  for (std::size_t l = 0; l < p; ++l)
    for (Level m = 0; m < labels[l].size(); ++m) code[l].emplace(labels[l][m], m);

  std::vector<std::vector<std::vector<Level>>> files(raws.size());
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < raws.size(); ++i) {
    for (const auto& row : raws[i].rows) {
      std::vector<Level> rec(p);
      for (std::size_t l = 0; l < p; ++l) rec[l] = code[l].at(row[column[i][l]]);
      files[i].push_back(std::move(rec));
      if (options.truth_column) ids.push_back(row[truth_col[i]]);
    }
  }

  LoadedData out;
  out.store = RecordStore(FieldSchema(names, std::move(labels)), files);
  if (options.truth_column) out.truth = GroundTruth::from_ids(ids);
  out.paths.assign(paths.begin(), paths.end());
  return out;
}

void write_file(const std::string& path, const RecordStore& data, std::size_t file, const GroundTruth* truth,
                const std::string& truth_column, char delimiter) {
  if (file >= data.num_files()) throw std::invalid_argument("file index out of range");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  const auto& schema = data.schema();
  auto cell = [&](const std::string& s) {
    if (s.find(delimiter) == std::string::npos && s.find('"') == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  for (std::size_t l = 0; l < schema.num_fields(); ++l) out << (l ? std::string(1, delimiter) : "") << cell(schema.name(l));
  if (truth) out << delimiter << cell(truth_column);
  out << '\n';
  const std::size_t begin = data.file_offset(file);
  for (std::size_t r = begin; r < begin + data.file_size(file); ++r) {
    for (std::size_t l = 0; l < schema.num_fields(); ++l)
      out << (l ? std::string(1, delimiter) : "") << cell(schema.labels(l)[data.value(static_cast<RecordId>(r), l)]);
    if (truth) {
      const auto e = truth->entity.at(r);
      out << delimiter << cell(truth->names.empty() ? std::to_string(e) : truth->names.at(e));
    }
    out << '\n';
  }
  if (!out) throw IoError("error writing '" + path + "'");
}

void save_samples(const PosteriorSamples& samples, const std::string& path) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kSampleFormatVersion);
  w.put<std::uint64_t>(samples.n_records);

  const auto& c = samples.config;
  for (std::uint64_t v : {c.sg, c.sm, c.st, c.burn_in, c.thin}) w.put<std::uint64_t>(v);
  w.put<std::uint8_t>(c.mode == Mode::Smered);
  w.put<std::uint64_t>(c.seed);
  w.put<std::uint64_t>(c.stream);
  w.put<std::uint8_t>(c.corrected_mh);
  w.put<std::uint8_t>(c.record_theta);

  const auto& s = samples.stats;
  for (std::uint64_t v : {s.split_proposals, s.split_accepts, s.merge_proposals, s.merge_accepts, s.exhausted,
                          s.infeasible})
    w.put<std::uint64_t>(v);

  w.put<std::uint64_t>(samples.partitions.size());
  for (const auto& p : samples.partitions) {
    if (p.size() != samples.n_records) throw std::invalid_argument("partition length differs from n_records");
    w.put_array(p);
  }
  w.put_array(samples.n_trace);
  w.put<std::uint64_t>(samples.beta_trace.size());
  for (const auto& b : samples.beta_trace) w.put_array(b);
  w.put<std::uint64_t>(samples.theta_trace.size());
  for (const auto& t : samples.theta_trace) {
    w.put<std::uint64_t>(t.size());
    for (const auto& field : t) w.put_array(field);
  }

  auto& buf = w.buffer();
  const std::uint64_t body = buf.size();
  const std::uint64_t sum = checksum(buf.data(), buf.size());
  w.raw(kEnd, sizeof kEnd);
  w.put<std::uint64_t>(body);
  w.put<std::uint64_t>(sum);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("error writing '" + path + "'");
}

PosteriorSamples load_samples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open sample file '" + path + "'");
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading '" + path + "'");

  constexpr std::size_t trailer = sizeof kEnd + 2 * sizeof(std::uint64_t);
  if (buf.size() < sizeof kMagic + sizeof(std::uint32_t) || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0)
    throw FormatError(path + ": not a sample file");
  std::uint32_t version;
  std::memcpy(&version, buf.data() + sizeof kMagic, sizeof version);
  if (version != kSampleFormatVersion)
    throw FormatError(path + ": sample format version " + std::to_string(version) + ", expected " +
                      std::to_string(kSampleFormatVersion));
  if (buf.size() < sizeof kMagic + sizeof(std::uint32_t) + trailer) throw FormatError(path + ": sample file truncated");

  const std::size_t body = buf.size() - trailer;
  std::uint64_t recorded_body, recorded_sum;
  std::memcpy(&recorded_body, buf.data() + body + sizeof kEnd, sizeof recorded_body);
  std::memcpy(&recorded_sum, buf.data() + body + sizeof kEnd + 8, sizeof recorded_sum);
  if (std::memcmp(buf.data() + body, kEnd, sizeof kEnd) != 0 || recorded_body != body) {
    if (recorded_body < body && std::memcmp(buf.data() + body, kEnd, sizeof kEnd) == 0)
      throw FormatError(path + ": trailing bytes after sample data");
    throw FormatError(path + ": sample file truncated or corrupted (end marker missing)");
  }
  if (checksum(buf.data(), body) != recorded_sum) throw FormatError(path + ": sample file checksum mismatch");

  try {
    Reader r(buf, body);
    r.skip(sizeof kMagic + sizeof(std::uint32_t));
    PosteriorSamples s;
    s.n_records = r.get<std::uint64_t>();
    auto& c = s.config;
    c.sg = r.get<std::uint64_t>();
    c.sm = r.get<std::uint64_t>();
    c.st = r.get<std::uint64_t>();
    c.burn_in = r.get<std::uint64_t>();
    c.thin = r.get<std::uint64_t>();
    c.mode = r.get<std::uint8_t>() ? Mode::Smered : Mode::Smere;
    c.seed = r.get<std::uint64_t>();
    c.stream = r.get<std::uint64_t>();
    c.corrected_mh = r.get<std::uint8_t>() != 0;
    c.record_theta = r.get<std::uint8_t>() != 0;
    auto& st = s.stats;
    st.split_proposals = r.get<std::uint64_t>();
    st.split_accepts = r.get<std::uint64_t>();
    st.merge_proposals = r.get<std::uint64_t>();
    st.merge_accepts = r.get<std::uint64_t>();
    st.exhausted = r.get<std::uint64_t>();
    st.infeasible = r.get<std::uint64_t>();

    const auto n_part = r.get<std::uint64_t>();
    s.partitions.reserve(std::min<std::uint64_t>(n_part, body));
    for (std::uint64_t k = 0; k < n_part; ++k) {
      s.partitions.push_back(r.get_array<Label>());
      if (s.partitions.back().size() != s.n_records) throw FormatError("partition length differs from record count");
    }
    s.n_trace = r.get_array<std::uint32_t>();
    const auto n_beta = r.get<std::uint64_t>();
    for (std::uint64_t k = 0; k < n_beta; ++k) s.beta_trace.push_back(r.get_array<double>());
    const auto n_theta = r.get<std::uint64_t>();
    for (std::uint64_t k = 0; k < n_theta; ++k) {
      const auto fields = r.get<std::uint64_t>();
      std::vector<std::vector<double>> t;
      for (std::uint64_t l = 0; l < fields; ++l) t.push_back(r.get_array<double>());
      s.theta_trace.push_back(std::move(t));
    }
    if (r.pos() != body) throw FormatError("unexpected bytes before the end marker");
    return s;
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace smered
