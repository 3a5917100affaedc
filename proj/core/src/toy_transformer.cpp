#include "voxflow/toy_transformer.hpp"

#include <cmath>
#include <sstream>

#include "voxflow/kvstore.hpp"
#include "voxflow/rng.hpp"

namespace voxflow {

void ToyArch::validate() const {
    if (layers <= 0) throw usage_error("toy arch needs at least one layer");
    if (model_dim <= 0 || heads <= 0 || model_dim % heads != 0) {
        throw usage_error("toy arch model_dim must be a positive multiple of heads");
    }
    if (ffn_mult <= 0) throw usage_error("toy arch ffn_mult must be positive");
}

TokenLayout TokenLayout::dense_grid(int side) {
    if (side <= 0) throw usage_error("token grid side must be positive");
    TokenLayout l;
    l.grid_side = side;
    l.dense = true;
    l.coords.reserve(std::size_t(side) * std::size_t(side) * std::size_t(side));
    for (int x = 0; x < side; ++x)
        for (int y = 0; y < side; ++y)
            for (int z = 0; z < side; ++z) l.coords.push_back({x, y, z});
    l.validate();
    return l;
}

TokenLayout TokenLayout::sparse_set(int side, std::vector<Coord3> coords) {
    if (side <= 0) throw usage_error("token grid side must be positive");
    TokenLayout l;
    l.grid_side = side;
    l.dense = false;
    l.coords = std::move(coords);
    l.validate();
    return l;
}

void TokenLayout::validate() const {
    if (grid_side <= 0) throw usage_error("token grid side must be positive");
    if (coords.empty()) throw usage_error("token layout has no tokens");
    if (coords.size() > kToyMaxTokens) {
        std::ostringstream os;
        os << "token layout has " << coords.size() << " tokens, cap is " << kToyMaxTokens;
        throw usage_error(os.str());
    }
    for (std::size_t i = 0; i < coords.size(); ++i) {
        for (int a = 0; a < 3; ++a) {
            if (coords[i][a] < 0 || coords[i][a] >= grid_side) {
                throw usage_error("token coordinate outside the position grid");
            }
        }
        if (i > 0 && !(coords[i - 1] < coords[i])) {
            throw usage_error("token layout coordinates must be in canonical order");
        }
    }
}

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr int kPosFreqs = 4;   // per axis, sin+cos each
constexpr int kTimeFreqs = 4;  // sin+cos each
constexpr int kPosCodeDim = 3 * 2 * kPosFreqs;
constexpr int kTimeCodeDim = 2 * kTimeFreqs;

struct Matrix {
    int rows = 0, cols = 0;
    std::vector<double> a;  // row-major

    const double* row(int r) const { return a.data() + std::size_t(r) * std::size_t(cols); }
};

Matrix random_matrix(SeededRng& rng, int rows, int cols, double scale) {
    Matrix m;
    m.rows = rows;
    m.cols = cols;
    m.a.resize(std::size_t(rows) * std::size_t(cols));
    const double s = scale / std::sqrt(double(cols));
    for (double& v : m.a) v = s * rng.gaussian();
    return m;
}

std::vector<double> random_bias(SeededRng& rng, int n) {
    std::vector<double> b(std::size_t(n), 0.0);
    for (double& v : b) v = 0.02 * rng.gaussian();
    return b;
}

// y = W x + b, fixed summation order.
void affine_apply(const Matrix& w, const std::vector<double>& b, const double* x, double* y) {
    for (int r = 0; r < w.rows; ++r) {
        const double* wr = w.row(r);
        double acc = b[std::size_t(r)];
        for (int c = 0; c < w.cols; ++c) acc += wr[c] * x[c];
        y[r] = acc;
    }
}

struct LayerWeights {
    Matrix wq, wk, wv, wo, w1, w2;
    std::vector<double> bq, bk, bv, bo, b1, b2;
};

class ToyTransformerField : public VelocityField {
public:
    ToyTransformerField(const ToyArch& arch, int channels, TokenLayout layout, std::uint64_t seed)
        : arch_(arch), channels_(channels), layout_(std::move(layout)) {
        arch_.validate();
        layout_.validate();
        if (channels_ <= 0) throw usage_error("toy field channel count must be positive");

        const int d = arch_.model_dim;
        const int in_dim = channels_ + kPosCodeDim + kTimeCodeDim + kToyCondWidth;
        const int hidden = d * arch_.ffn_mult;

        // Weight generation order is part of the field's identity: changing
        // it changes every seeded field.
        SeededRng rng(sub_seed(seed, "toy-transformer-weights"));
        w_in_ = random_matrix(rng, d, in_dim, 1.0);
        b_in_ = random_bias(rng, d);
        layers_.resize(std::size_t(arch_.layers));
        for (LayerWeights& lw : layers_) {
            lw.wq = random_matrix(rng, d, d, 1.0);
            lw.bq = random_bias(rng, d);
            lw.wk = random_matrix(rng, d, d, 1.0);
            lw.bk = random_bias(rng, d);
            lw.wv = random_matrix(rng, d, d, 1.0);
            lw.bv = random_bias(rng, d);
            lw.wo = random_matrix(rng, d, d, 0.6);
            lw.bo = random_bias(rng, d);
            lw.w1 = random_matrix(rng, hidden, d, 1.0);
            lw.b1 = random_bias(rng, hidden);
            lw.w2 = random_matrix(rng, d, hidden, 0.6);
            lw.b2 = random_bias(rng, d);
        }
        w_out_ = random_matrix(rng, channels_, d, 0.25);
        b_out_ = random_bias(rng, channels_);

        // Precompute position codes; they depend on the layout only.
        const std::size_t n = layout_.tokens();
        pos_codes_.resize(n * kPosCodeDim);
        for (std::size_t i = 0; i < n; ++i) {
            double* pc = pos_codes_.data() + i * kPosCodeDim;
            int k = 0;
            for (int axis = 0; axis < 3; ++axis) {
                const double p = (double(layout_.coords[i][axis]) + 0.5) / double(layout_.grid_side);
                for (int f = 0; f < kPosFreqs; ++f) {
                    const double ang = kTwoPi * double(1 << f) * p;
                    pc[k++] = std::sin(ang);
                    pc[k++] = std::cos(ang);
                }
            }
        }
    }

    std::size_t state_size() const override { return layout_.tokens() * std::size_t(channels_); }
    int condition_width() const override { return kToyCondWidth; }
    AttentionHook* hook() const override { return &hook_; }

    void eval(std::span<const double> state, double t, const ConditionInput& cond,
              std::span<double> out) const override {
        const std::size_t n = layout_.tokens();
        const int d = arch_.model_dim;
        const int heads = arch_.heads;
        const int hd = d / heads;
        const int hidden = d * arch_.ffn_mult;

        const std::vector<double>& emb =
            cond.embedding.empty() ? zero_embedding_ : cond.embedding;
        if (emb.size() != kToyCondWidth) {
            throw numeric_error("toy field: condition embedding width mismatch");
        }

        double time_code[kTimeCodeDim];
        for (int f = 0; f < kTimeFreqs; ++f) {
            const double ang = kTwoPi * double(1 << f) * t;
            time_code[2 * f] = std::sin(ang);
            time_code[2 * f + 1] = std::cos(ang);
        }

        // Token embedding.
        const int in_dim = channels_ + kPosCodeDim + kTimeCodeDim + kToyCondWidth;
        std::vector<double> u(n * std::size_t(d));
        {
            std::vector<double> in(std::size_t(in_dim), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                gather_token(state, i, in.data());
                std::copy(pos_codes_.begin() + std::ptrdiff_t(i * kPosCodeDim),
                          pos_codes_.begin() + std::ptrdiff_t((i + 1) * kPosCodeDim),
                          in.begin() + channels_);
                std::copy(time_code, time_code + kTimeCodeDim,
                          in.begin() + channels_ + kPosCodeDim);
                std::copy(emb.begin(), emb.end(),
                          in.begin() + channels_ + kPosCodeDim + kTimeCodeDim);
                affine_apply(w_in_, b_in_, in.data(), u.data() + i * std::size_t(d));
            }
        }

        std::vector<double> q(n * std::size_t(d)), k(n * std::size_t(d)), v(n * std::size_t(d));
        std::vector<double> k_used, v_used, attn(n * std::size_t(d)), scores(n), tmp;
        const double inv_sqrt_hd = 1.0 / std::sqrt(double(hd));

        for (int layer = 0; layer < arch_.layers; ++layer) {
            const LayerWeights& lw = layers_[std::size_t(layer)];
            for (std::size_t i = 0; i < n; ++i) {
                affine_apply(lw.wq, lw.bq, u.data() + i * std::size_t(d), q.data() + i * std::size_t(d));
                affine_apply(lw.wk, lw.bk, u.data() + i * std::size_t(d), k.data() + i * std::size_t(d));
                affine_apply(lw.wv, lw.bv, u.data() + i * std::size_t(d), v.data() + i * std::size_t(d));
            }

            const double* k_eff = k.data();
            const double* v_eff = v.data();
            if (hook_.mode == HookMode::capture) {
                capture_layer(layer, int(n), heads, hd, k, v);
            } else if (hook_.mode == HookMode::inject) {
                inject_layer(layer, int(n), heads, hd, k, v, k_used, v_used);
                k_eff = k_used.data();
                v_eff = v_used.data();
            }

            const AttentionMask* mask = hook_.attn_mask ? &*hook_.attn_mask : nullptr;
            if (mask && mask->roles.size() != n) {
                throw numeric_error("toy field: attention mask role count mismatch");
            }

            // Scaled dot-product attention, head loop outside, fixed order.
            for (int h = 0; h < heads; ++h) {
                const int off = h * hd;
                for (std::size_t qi = 0; qi < n; ++qi) {
                    const double* qrow = q.data() + qi * std::size_t(d) + off;
                    double maxs = -1e300;
                    for (std::size_t kj = 0; kj < n; ++kj) {
                        if (mask && !mask->allowed(qi, kj)) {
                            scores[kj] = 0.0;  // skipped below
                            continue;
                        }
                        const double* krow = k_eff + kj * std::size_t(d) + off;
                        double s = 0.0;
                        for (int c = 0; c < hd; ++c) s += qrow[c] * krow[c];
                        s *= inv_sqrt_hd;
                        scores[kj] = s;
                        if (s > maxs) maxs = s;
                    }
                    double denom = 0.0;
                    for (std::size_t kj = 0; kj < n; ++kj) {
                        if (mask && !mask->allowed(qi, kj)) continue;
                        scores[kj] = std::exp(scores[kj] - maxs);
                        denom += scores[kj];
                    }
                    double* arow = attn.data() + qi * std::size_t(d) + off;
                    for (int c = 0; c < hd; ++c) arow[c] = 0.0;
                    for (std::size_t kj = 0; kj < n; ++kj) {
                        if (mask && !mask->allowed(qi, kj)) continue;
                        const double wgt = scores[kj] / denom;
                        const double* vrow = v_eff + kj * std::size_t(d) + off;
                        for (int c = 0; c < hd; ++c) arow[c] += wgt * vrow[c];
                    }
                }
            }

            // Output projection + residual, then FFN + residual.
            tmp.resize(std::size_t(std::max(d, hidden)));
            for (std::size_t i = 0; i < n; ++i) {
                affine_apply(lw.wo, lw.bo, attn.data() + i * std::size_t(d), tmp.data());
                double* ui = u.data() + i * std::size_t(d);
                for (int c = 0; c < d; ++c) ui[c] += tmp[std::size_t(c)];
            }
            std::vector<double>& hbuf = tmp;
            hbuf.resize(std::size_t(hidden));
            std::vector<double> ff(std::size_t(d), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                double* ui = u.data() + i * std::size_t(d);
                affine_apply(lw.w1, lw.b1, ui, hbuf.data());
                for (int c = 0; c < hidden; ++c) hbuf[std::size_t(c)] = std::tanh(hbuf[std::size_t(c)]);
                affine_apply(lw.w2, lw.b2, hbuf.data(), ff.data());
                for (int c = 0; c < d; ++c) ui[c] += ff[std::size_t(c)];
            }
        }

        // Project back to per-token velocity and scatter into the state layout.
        std::vector<double> vel(std::size_t(channels_), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            affine_apply(w_out_, b_out_, u.data() + i * std::size_t(d), vel.data());
            scatter_token(out, i, vel.data());
        }
    }

private:
    void gather_token(std::span<const double> state, std::size_t i, double* dst) const {
        if (layout_.dense) {
            const int s = layout_.grid_side;
            const Coord3& c = layout_.coords[i];
            const std::size_t plane = std::size_t(s) * std::size_t(s) * std::size_t(s);
            const std::size_t base =
                std::size_t(c[0]) + std::size_t(s) * (std::size_t(c[1]) + std::size_t(s) * std::size_t(c[2]));
            for (int ch = 0; ch < channels_; ++ch) dst[ch] = state[base + plane * std::size_t(ch)];
        } else {
            const std::size_t base = i * std::size_t(channels_);
            for (int ch = 0; ch < channels_; ++ch) dst[ch] = state[base + std::size_t(ch)];
        }
    }

    void scatter_token(std::span<double> out, std::size_t i, const double* src) const {
        if (layout_.dense) {
            const int s = layout_.grid_side;
            const Coord3& c = layout_.coords[i];
            const std::size_t plane = std::size_t(s) * std::size_t(s) * std::size_t(s);
            const std::size_t base =
                std::size_t(c[0]) + std::size_t(s) * (std::size_t(c[1]) + std::size_t(s) * std::size_t(c[2]));
            for (int ch = 0; ch < channels_; ++ch) out[base + plane * std::size_t(ch)] = src[ch];
        } else {
            const std::size_t base = i * std::size_t(channels_);
            for (int ch = 0; ch < channels_; ++ch) out[base + std::size_t(ch)] = src[ch];
        }
    }

    KVKey make_key(int layer) const {
        KVKey key;
        key.stage = hook_.tag.stage;
        key.eval_time = hook_.tag.time;
        key.layer_id = layer;
        key.block_order = layer;
        key.branch = hook_.tag.branch;
        return key;
    }

    void capture_layer(int layer, int tokens, int heads, int hd, const std::vector<double>& k,
                       const std::vector<double>& v) const {
        if (!hook_.sink) throw cache_error("toy field: capture mode armed without a sink store");
        KVEntry e;
        e.tokens = tokens;
        e.heads = heads;
        e.head_dim = hd;
        e.k.resize(k.size());
        e.v.resize(v.size());
        // Rounded to f32 at capture so memory and spill are bit-identical.
        for (std::size_t i = 0; i < k.size(); ++i) e.k[i] = float(k[i]);
        for (std::size_t i = 0; i < v.size(); ++i) e.v[i] = float(v[i]);
        hook_.sink->put(make_key(layer), std::move(e));
    }

    void inject_layer(int layer, int tokens, int heads, int hd, const std::vector<double>& k,
                      const std::vector<double>& v, std::vector<double>& k_out,
                      std::vector<double>& v_out) const {
        if (!hook_.source) throw cache_error("toy field: inject mode armed without a source store");
        hook_.source->require_layout(layout_.coords);
        if (hook_.token_weights.size() != std::size_t(tokens)) {
            throw numeric_error("toy field: token weight count does not match token count");
        }
        const KVEntry& e = hook_.source->get(make_key(layer));
        if (e.tokens != tokens || e.heads != heads || e.head_dim != hd) {
            throw cache_error("toy field: cached kv shape mismatch at " + make_key(layer).to_string());
        }
        const std::size_t sz = k.size();
        cache_widen_.resize(2 * sz);
        double* kc = cache_widen_.data();
        double* vc = cache_widen_.data() + sz;
        for (std::size_t i = 0; i < sz; ++i) kc[i] = double(e.k[i]);
        for (std::size_t i = 0; i < sz; ++i) vc[i] = double(e.v[i]);
        k_out.resize(sz);
        v_out.resize(sz);
        const int row_width = heads * hd;
        replace_kv(k, std::span<const double>(kc, sz), hook_.token_weights, tokens, row_width, k_out);
        replace_kv(v, std::span<const double>(vc, sz), hook_.token_weights, tokens, row_width, v_out);
    }

    ToyArch arch_;
    int channels_;
    TokenLayout layout_;
    Matrix w_in_, w_out_;
    std::vector<double> b_in_, b_out_;
    std::vector<LayerWeights> layers_;
    std::vector<double> pos_codes_;
    std::vector<double> zero_embedding_ = std::vector<double>(kToyCondWidth, 0.0);
    mutable AttentionHook hook_;
    mutable std::vector<double> cache_widen_;
};

}  // namespace

std::unique_ptr<VelocityField> make_toy_transformer(const ToyArch& arch, int channels,
                                                    TokenLayout layout, std::uint64_t seed) {
    return std::make_unique<ToyTransformerField>(arch, channels, std::move(layout), seed);
}

}  // namespace voxflow
