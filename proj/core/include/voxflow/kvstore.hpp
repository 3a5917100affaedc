#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "voxflow/fields.hpp"
#include "voxflow/lattice.hpp"

namespace voxflow {

// Key of one cached attention entry. eval_time must match bitwise between
// capture and lookup — schedule times and midpoints are computed canonically
// so inversion and the edit pass agree. `branch` disambiguates the two
// guidance-branch evaluations that share an evaluation time.
struct KVKey {
    Stage stage = Stage::st;
    double eval_time = 0.0;
    int layer_id = 0;
    enum class AttnType { self_attn } attn = AttnType::self_attn;
    int block_order = 0;
    CondMode branch = CondMode::conditional;

    friend bool operator<(const KVKey& a, const KVKey& b) {
        if (a.stage != b.stage) return a.stage < b.stage;
        if (a.eval_time != b.eval_time) return a.eval_time < b.eval_time;
        if (a.layer_id != b.layer_id) return a.layer_id < b.layer_id;
        if (a.attn != b.attn) return a.attn < b.attn;
        if (a.block_order != b.block_order) return a.block_order < b.block_order;
        return a.branch < b.branch;
    }
    friend bool operator==(const KVKey& a, const KVKey& b) {
        return !(a < b) && !(b < a);
    }

    std::string to_string() const;
};

// One layer's keys and values for every token: tokens x (heads * head_dim),
// row-major by token. Values are rounded to f32 at capture so in-memory and
// spilled entries are bit-identical.
struct KVEntry {
    int tokens = 0;
    int heads = 0;
    int head_dim = 0;
    std::vector<float> k;
    std::vector<float> v;

    std::size_t row_width() const { return std::size_t(heads) * std::size_t(head_dim); }
    void validate() const;
};

// Per-stage cache of attention K/V captured during inversion. All entries
// conform to one token-coordinate layout; a layout change between inversion
// and editing is a hard error.
class KVCacheStore {
public:
    KVCacheStore() = default;
    KVCacheStore(Stage stage, std::vector<Coord3> token_layout)
        : stage_(stage), token_layout_(std::move(token_layout)) {}

    Stage stage() const { return stage_; }
    const std::vector<Coord3>& token_layout() const { return token_layout_; }
    std::size_t size() const { return entries_.size(); }
    bool contains(const KVKey& key) const { return entries_.count(key) != 0; }

    // Duplicate keys are a collision (cache error); entry token count must
    // match the layout.
    void put(const KVKey& key, KVEntry entry);

    // Missing keys raise a cache error naming the full key.
    const KVEntry& get(const KVKey& key) const;

    // Hard error (cache category) unless `layout` equals the stored layout.
    void require_layout(std::span<const Coord3> layout) const;

    const std::map<KVKey, KVEntry>& entries() const { return entries_; }

    // On-disk spill: one raw little-endian f32 file per entry plus a JSON
    // manifest with exact (hexfloat) evaluation times. Reload is bit-exact.
    void spill(const std::filesystem::path& dir) const;
    static KVCacheStore load(const std::filesystem::path& dir);

private:
    Stage stage_ = Stage::st;
    std::vector<Coord3> token_layout_;
    std::map<KVKey, KVEntry> entries_;
};

// out = W (.) fresh + (1 - W) (.) cached, applied row-wise per token: weight
// w is broadcast across a token's row. w == 0 and w == 1 are exact
// selections (bit copies), anything between blends. Shapes must agree.
void replace_kv(std::span<const double> fresh, std::span<const double> cached,
                std::span<const double> token_weights, int tokens, int row_width,
                std::span<double> out);

}  // namespace voxflow
