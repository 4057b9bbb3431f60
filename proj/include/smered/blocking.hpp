#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "smered/core_model.hpp"
#include "smered/rng.hpp"

namespace smered {

using RecordPair = std::pair<RecordId, RecordId>;

/// Records agreeing exactly on every key field. Records are sorted by id, so
/// records of one file form a contiguous group.
struct Block {
  std::vector<Level> key;
  std::vector<RecordId> records;

  // Per-file groups: records[group_start[g], group_start[g + 1]) share file group_file[g].
  std::vector<std::uint32_t> group_file;
  std::vector<std::size_t> group_start;
  // Cross-file group pairs (g < h) with cumulative weights |g| * |h|.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> cross_groups;
  std::vector<std::uint64_t> cross_cumulative;

  /// Unordered pairs of distinct records (SMERED) or of records from distinct
  /// files (SMERE).
  std::uint64_t eligible_pairs(Mode mode) const;
};

/// Uniform draw of an eligible unordered pair from one block. Returns nullopt
/// when the block has no eligible pair ("block exhausted").
std::optional<RecordPair> pairs_in_block(const Block& block, Mode mode, Rng& rng);

class BlockIndex {
 public:
  BlockIndex() = default;

  const std::vector<std::size_t>& key_fields() const { return key_fields_; }
  std::size_t num_blocks() const { return blocks_.size(); }
  const Block& block(std::size_t b) const { return blocks_.at(b); }
  const std::vector<Block>& blocks() const { return blocks_; }
  std::size_t block_of(RecordId r) const { return record_to_block_.at(r); }

  std::uint64_t eligible_pairs(Mode mode) const;

  /// Uniform draw over all eligible pairs in the index: a block is picked with
  /// probability proportional to its eligible pair count, then a pair within
  /// it. Returns nullopt when no block has an eligible pair.
  std::optional<RecordPair> draw_pair(Mode mode, Rng& rng) const;

  /// Throws ConfigError unless every key field is a blocked (b = infinity)
  /// field in `hyper`.
  void validate_against(const Hyperparameters& hyper) const;

  friend BlockIndex build_blocks(const RecordStore& data, std::vector<std::size_t> key_fields);

 private:
  std::vector<std::size_t> key_fields_;
  std::vector<Block> blocks_;
  std::vector<std::uint32_t> record_to_block_;
  std::vector<std::uint64_t> smere_cumulative_;
  std::vector<std::uint64_t> smered_cumulative_;
};

/// Partition records by exact agreement on `key_fields` (empty: one block).
/// Blocks are ordered by key tuple. Throws ConfigError on an invalid or
/// repeated field index.
BlockIndex build_blocks(const RecordStore& data, std::vector<std::size_t> key_fields);

}  // namespace smered
