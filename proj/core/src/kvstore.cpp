#include "voxflow/kvstore.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "voxflow/io.hpp"

namespace voxflow {

std::string KVKey::to_string() const {
    std::ostringstream os;
    os << "KVKey{stage=" << stage_name(stage) << " time=" << double_to_hex(eval_time) << " ("
       << eval_time << ") layer=" << layer_id << " attn=self block=" << block_order
       << " branch=" << cond_mode_name(branch) << "}";
    return os.str();
}

void KVEntry::validate() const {
    if (tokens <= 0 || heads <= 0 || head_dim <= 0) {
        throw numeric_error("kv entry has non-positive shape");
    }
    const std::size_t n = std::size_t(tokens) * row_width();
    if (k.size() != n || v.size() != n) throw numeric_error("kv entry size does not match shape");
    for (float x : k)
        if (!std::isfinite(x)) throw numeric_error("kv entry K contains a non-finite value");
    for (float x : v)
        if (!std::isfinite(x)) throw numeric_error("kv entry V contains a non-finite value");
}

void KVCacheStore::put(const KVKey& key, KVEntry entry) {
    entry.validate();
    if (key.stage != stage_) {
        throw cache_error("kv put: key stage does not match store stage: " + key.to_string());
    }
    if (std::size_t(entry.tokens) != token_layout_.size()) {
        throw cache_error("kv put: entry token count does not match store layout: " + key.to_string());
    }
    auto [it, inserted] = entries_.emplace(key, std::move(entry));
    if (!inserted) throw cache_error("kv put: key collision: " + key.to_string());
}

const KVEntry& KVCacheStore::get(const KVKey& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw cache_error("kv cache miss: " + key.to_string());
    return it->second;
}

void KVCacheStore::require_layout(std::span<const Coord3> layout) const {
    if (layout.size() != token_layout_.size() ||
        !std::equal(layout.begin(), layout.end(), token_layout_.begin())) {
        std::ostringstream os;
        os << "kv token layout mismatch: store has " << token_layout_.size()
           << " tokens, caller has " << layout.size()
           << " (layout changes between inversion and editing are not allowed)";
        throw cache_error(os.str());
    }
}

namespace {

std::string entry_file_name(const KVKey& key, int index) {
    // Hexfloat sanitized for file names; the manifest holds the exact key.
    std::string t = double_to_hex(key.eval_time);
    for (char& c : t) {
        if (c == '.') c = '_';
        if (c == '+') c = 'P';
        if (c == '-') c = 'm';
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%04d_%s_l%02d_b%02d_%s_%s.kv", index, stage_name(key.stage),
                  key.layer_id, key.block_order, cond_mode_name(key.branch), t.c_str());
    return buf;
}

void write_f32_block(std::ostream& os, const std::vector<float>& v) {
    os.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * 4));
}

CondMode cond_mode_from(const std::string& s) {
    if (s == "cond") return CondMode::conditional;
    if (s == "neg") return CondMode::negative;
    if (s == "uncond") return CondMode::unconditional;
    throw io_error("unknown condition branch in kv manifest: " + s);
}

}  // namespace

void KVCacheStore::spill(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["stage"] = stage_name(stage_);
    nlohmann::json layout = nlohmann::json::array();
    for (const Coord3& c : token_layout_) layout.push_back({c[0], c[1], c[2]});
    manifest["token_layout"] = std::move(layout);
    nlohmann::json items = nlohmann::json::array();
    int index = 0;
    for (const auto& [key, entry] : entries_) {
        std::string name = entry_file_name(key, index++);
        std::ofstream os(dir / name, std::ios::binary | std::ios::trunc);
        if (!os) throw io_error("cannot write kv entry " + (dir / name).string());
        write_f32_block(os, entry.k);
        write_f32_block(os, entry.v);
        if (!os) throw io_error("write failed for kv entry " + (dir / name).string());
        nlohmann::json j;
        j["file"] = name;
        j["time_hex"] = double_to_hex(key.eval_time);
        j["layer"] = key.layer_id;
        j["block"] = key.block_order;
        j["branch"] = cond_mode_name(key.branch);
        j["attn"] = "self";
        j["tokens"] = entry.tokens;
        j["heads"] = entry.heads;
        j["head_dim"] = entry.head_dim;
        items.push_back(std::move(j));
    }
    manifest["entries"] = std::move(items);
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    if (!os) throw io_error("cannot write kv manifest in " + dir.string());
    os << manifest.dump(2) << "\n";
}

KVCacheStore KVCacheStore::load(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw io_error("cannot open kv manifest " + (dir / "manifest.json").string());
    nlohmann::json manifest;
    try {
        is >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw io_error("malformed kv manifest: " + std::string(e.what()));
    }
    try {
        Stage stage = manifest.at("stage").get<std::string>() == "st" ? Stage::st : Stage::slat;
        std::vector<Coord3> layout;
        for (const auto& c : manifest.at("token_layout")) {
            layout.push_back({c.at(0).get<int>(), c.at(1).get<int>(), c.at(2).get<int>()});
        }
        KVCacheStore store(stage, std::move(layout));
        for (const auto& j : manifest.at("entries")) {
            KVKey key;
            key.stage = stage;
            key.eval_time = hex_to_double(j.at("time_hex").get<std::string>());
            key.layer_id = j.at("layer").get<int>();
            key.block_order = j.at("block").get<int>();
            key.branch = cond_mode_from(j.at("branch").get<std::string>());
            KVEntry e;
            e.tokens = j.at("tokens").get<int>();
            e.heads = j.at("heads").get<int>();
            e.head_dim = j.at("head_dim").get<int>();
            const std::size_t n = std::size_t(e.tokens) * e.row_width();
            e.k.resize(n);
            e.v.resize(n);
            std::filesystem::path file = dir / j.at("file").get<std::string>();
            std::ifstream fs(file, std::ios::binary);
            if (!fs) throw io_error("cannot open kv entry " + file.string());
            fs.read(reinterpret_cast<char*>(e.k.data()), std::streamsize(n * 4));
            fs.read(reinterpret_cast<char*>(e.v.data()), std::streamsize(n * 4));
            if (std::size_t(fs.gcount()) != n * 4) throw io_error("truncated kv entry " + file.string());
            char extra;
            fs.read(&extra, 1);
            if (!fs.eof()) throw io_error("trailing bytes in kv entry " + file.string());
            store.put(key, std::move(e));
        }
        return store;
    } catch (const nlohmann::json::exception& e) {
        throw io_error("malformed kv manifest: " + std::string(e.what()));
    }
}

void replace_kv(std::span<const double> fresh, std::span<const double> cached,
                std::span<const double> token_weights, int tokens, int row_width,
                std::span<double> out) {
    const std::size_t n = std::size_t(tokens) * std::size_t(row_width);
    if (tokens <= 0 || row_width <= 0) throw numeric_error("replace_kv: non-positive shape");
    if (fresh.size() != n || cached.size() != n || out.size() != n) {
        throw numeric_error("replace_kv: array shapes do not match tokens*row_width");
    }
    if (token_weights.size() != std::size_t(tokens)) {
        throw numeric_error("replace_kv: weight count does not match token count");
    }
    for (int t = 0; t < tokens; ++t) {
        const double w = token_weights[std::size_t(t)];
        if (!std::isfinite(w) || w < 0.0 || w > 1.0) {
            throw numeric_error("replace_kv: token weight outside [0,1]");
        }
        double* o = out.data() + std::size_t(t) * std::size_t(row_width);
        const double* f = fresh.data() + std::size_t(t) * std::size_t(row_width);
        const double* c = cached.data() + std::size_t(t) * std::size_t(row_width);
        if (w == 1.0) {
            for (int i = 0; i < row_width; ++i) o[i] = f[i];  // exact selection
        } else if (w == 0.0) {
            for (int i = 0; i < row_width; ++i) o[i] = c[i];
        } else {
            for (int i = 0; i < row_width; ++i) o[i] = w * f[i] + (1.0 - w) * c[i];
        }
    }
}

}  // namespace voxflow
