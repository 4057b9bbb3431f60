#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smered/core_model.hpp"
#include "smered/evaluation.hpp"
#include "smered/sampler.hpp"

namespace smered {

struct LoadOptions {
  char delimiter = ',';
  /// Column holding the entity identifier; excluded from the fields.
  std::optional<std::string> truth_column;
};

struct LoadedData {
  RecordStore store;
  std::optional<GroundTruth> truth;
  std::vector<std::string> paths;
};

/// Read delimited text files with a header row, one file per list. Fields take
/// the column order of the first file; the other files may order their
/// columns differently. Level labels are the sorted union of the values seen
/// in all files. Throws IoError when a file cannot be read and FormatError
/// (with file, row and column) on malformed content.
LoadedData load_files(std::span<const std::string> paths, const LoadOptions& options = {});

/// Write file `file` of `data` in the format load_files reads, with an
/// optional truth column appended.
void write_file(const std::string& path, const RecordStore& data, std::size_t file,
                const GroundTruth* truth = nullptr, const std::string& truth_column = "id", char delimiter = ',');

/// Split one line into cells; double quotes group and "" escapes a quote.
std::vector<std::string> split_line(const std::string& line, char delimiter);

/// Binary sample store. Little-endian hosts only.
void save_samples(const PosteriorSamples& samples, const std::string& path);
/// Throws IoError when unreadable and FormatError on a bad magic, a version
/// mismatch, truncation, trailing bytes or a checksum mismatch.
PosteriorSamples load_samples(const std::string& path);

inline constexpr std::uint32_t kSampleFormatVersion = 1;

}  // namespace smered
