#include "smered/blocking.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "smered/error.hpp"

namespace smered {

namespace {

std::size_t draw_cumulative(const std::vector<std::uint64_t>& cumulative, Rng& rng) {
  const std::uint64_t u = rng.below(cumulative.back());
  return static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
}

}  // namespace

std::uint64_t Block::eligible_pairs(Mode mode) const {
  const std::uint64_t s = records.size();
  if (mode == Mode::Smered) return s < 2 ? 0 : s * (s - 1) / 2;
  return cross_cumulative.empty() ? 0 : cross_cumulative.back();
}

std::optional<RecordPair> pairs_in_block(const Block& block, Mode mode, Rng& rng) {
  if (block.eligible_pairs(mode) == 0) return std::nullopt;
  if (mode == Mode::Smered) {
    const std::uint64_t s = block.records.size();
    const std::uint64_t i = rng.below(s);
    std::uint64_t j = rng.below(s - 1);
    if (j >= i) ++j;
    return RecordPair{block.records[i], block.records[j]};
  }
  const auto [g, h] = block.cross_groups[draw_cumulative(block.cross_cumulative, rng)];
  const std::size_t g_size = block.group_start[g + 1] - block.group_start[g];
  const std::size_t h_size = block.group_start[h + 1] - block.group_start[h];
  const RecordId first = block.records[block.group_start[g] + rng.below(g_size)];
  const RecordId second = block.records[block.group_start[h] + rng.below(h_size)];
  return RecordPair{first, second};
}

BlockIndex build_blocks(const RecordStore& data, std::vector<std::size_t> key_fields) {
  std::set<std::size_t> unique;
  for (std::size_t f : key_fields) {
    if (f >= data.num_fields()) throw ConfigError("blocking field index " + std::to_string(f) + " out of range");
    if (!unique.insert(f).second) throw ConfigError("blocking field " + data.schema().name(f) + " listed twice");
  }

  std::map<std::vector<Level>, std::vector<RecordId>> grouped;
  std::vector<Level> key(key_fields.size());
  for (RecordId r = 0; r < data.n_max(); ++r) {
    for (std::size_t k = 0; k < key_fields.size(); ++k) key[k] = data.value(r, key_fields[k]);
    grouped[key].push_back(r);
  }

  BlockIndex index;
  index.key_fields_ = std::move(key_fields);
  index.record_to_block_.assign(data.n_max(), 0);
  std::uint64_t smere_total = 0;
  std::uint64_t smered_total = 0;
  for (auto& [block_key, records] : grouped) {
    Block block;
    block.key = block_key;
    block.records = std::move(records);
    for (std::size_t pos = 0; pos < block.records.size(); ++pos) {
      const std::uint32_t f = data.file_of(block.records[pos]);
      if (block.group_file.empty() || block.group_file.back() != f) {
        block.group_file.push_back(f);
        block.group_start.push_back(pos);
      }
      index.record_to_block_[block.records[pos]] = static_cast<std::uint32_t>(index.blocks_.size());
    }
    block.group_start.push_back(block.records.size());
    std::uint64_t acc = 0;
    for (std::uint32_t g = 0; g < block.group_file.size(); ++g) {
      for (std::uint32_t h = g + 1; h < block.group_file.size(); ++h) {
        acc += static_cast<std::uint64_t>(block.group_start[g + 1] - block.group_start[g]) *
               (block.group_start[h + 1] - block.group_start[h]);
        block.cross_groups.emplace_back(g, h);
        block.cross_cumulative.push_back(acc);
      }
    }
    smere_total += block.eligible_pairs(Mode::Smere);
    smered_total += block.eligible_pairs(Mode::Smered);
    index.smere_cumulative_.push_back(smere_total);
    index.smered_cumulative_.push_back(smered_total);
    index.blocks_.push_back(std::move(block));
  }
  return index;
}

std::uint64_t BlockIndex::eligible_pairs(Mode mode) const {
  const auto& cum = mode == Mode::Smere ? smere_cumulative_ : smered_cumulative_;
  return cum.empty() ? 0 : cum.back();
}

std::optional<RecordPair> BlockIndex::draw_pair(Mode mode, Rng& rng) const {
  const auto& cum = mode == Mode::Smere ? smere_cumulative_ : smered_cumulative_;
  if (cum.empty() || cum.back() == 0) return std::nullopt;
  return pairs_in_block(blocks_[draw_cumulative(cum, rng)], mode, rng);
}

void BlockIndex::validate_against(const Hyperparameters& hyper) const {
  for (std::size_t f : key_fields_) {
    if (f >= hyper.b.size()) throw ConfigError("blocking field index out of range for hyperparameters");
    if (!hyper.is_blocked(f))
      throw ConfigError("blocking field " + std::to_string(f) + " must have b = infinity");
  }
}

}  // namespace smered
