#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voxflow/errors.hpp"
#include "voxflow/lattice.hpp"

namespace voxflow {

class KVCacheStore;

// Pipeline stage a latent (and its caches) belongs to.
enum class Stage { st, slat };

inline const char* stage_name(Stage s) { return s == Stage::st ? "st" : "slat"; }

// Which guidance branch an evaluation serves. Tags cache keys so the two
// branch evaluations inside the guidance interval never collide.
enum class CondMode { conditional, negative, unconditional };

inline const char* cond_mode_name(CondMode m) {
    switch (m) {
        case CondMode::conditional: return "cond";
        case CondMode::negative: return "neg";
        default: return "uncond";
    }
}

// A named condition resolved to a fixed seeded embedding. Unconditional
// inputs carry an all-zero embedding.
struct ConditionInput {
    CondMode mode = CondMode::unconditional;
    std::vector<double> embedding;

    // Embedding derived deterministically from the name (same name, same
    // width -> bitwise identical vector).
    static ConditionInput named(CondMode mode, const std::string& name, int width);
    static ConditionInput unconditional(int width);
};

// Classifier-free guidance configuration. Guidance applies only when the
// evaluation time lies in the closed interval [lo, hi]; outside it the
// conditional branch is used unmodified.
struct GuidanceConfig {
    double omega = 5.0;
    double lo = 0.5;
    double hi = 1.0;

    bool gated(double t) const { return t >= lo && t <= hi; }
    void validate() const;
};

// Hard attention mask: token i may attend token j iff their roles match
// (role 1 = edited, 0 = preserved). Every row keeps at least itself.
struct AttentionMask {
    std::vector<std::uint8_t> roles;

    bool allowed(std::size_t q, std::size_t k) const { return roles[q] == roles[k]; }
};

enum class HookMode { off, capture, inject };

// Identity of one field evaluation, stamped by the solver before each call.
struct EvalTag {
    Stage stage = Stage::st;
    double time = 0.0;
    CondMode branch = CondMode::conditional;
};

// Side-channel between solver/editor and attention layers. In capture mode
// every self-attention layer writes its K/V to `sink` (exclusive writer); in
// inject mode layers blend cached rows from `source` using `token_weights`
// (1 = keep new, 0 = take cached). `attn_mask`, when set, hard-partitions
// attention by token role independently of the mode.
struct AttentionHook {
    HookMode mode = HookMode::off;
    KVCacheStore* sink = nullptr;
    const KVCacheStore* source = nullptr;
    std::vector<double> token_weights;
    std::optional<AttentionMask> attn_mask;
    EvalTag tag;

    void disarm() {
        mode = HookMode::off;
        sink = nullptr;
        source = nullptr;
        token_weights.clear();
        // attn_mask intentionally kept; it is armed independently
    }
};

// Velocity field f(x, t, cond) over a fixed latent layout. Evaluations must
// be pure and bitwise deterministic for identical inputs.
class VelocityField {
public:
    virtual ~VelocityField() = default;

    virtual std::size_t state_size() const = 0;
    virtual int condition_width() const { return 0; }

    virtual void eval(std::span<const double> state, double t, const ConditionInput& cond,
                      std::span<double> out) const = 0;

    // Non-null only for fields with attention layers.
    virtual AttentionHook* hook() const { return nullptr; }

    // Closed-form flow map (analytic fields only).
    virtual bool has_exact_flow() const { return false; }
    virtual void exact_flow(std::span<const double> x0, double t0, double t1,
                            std::span<double> out) const;
};

// Checked evaluation: validates sizes, t in [0,1], finite input and output.
std::vector<double> eval_velocity(const VelocityField& field, std::span<const double> state,
                                  double t, const ConditionInput& cond);

// f = (1 + omega) * f_cond - omega * f_neg, elementwise.
void cfg_combine(std::span<const double> f_cond, std::span<const double> f_neg, double omega,
                 std::span<double> out);

// Gated guidance: inside [lo, hi] evaluates both branches and combines,
// outside evaluates the conditional branch only. Stamps the field's hook tag
// (time, branch) before every evaluation. Returns the number of field
// evaluations performed (1 or 2).
int guided_velocity(const VelocityField& field, std::span<const double> state, double t,
                    const GuidanceConfig& guidance, const ConditionInput& cond,
                    const ConditionInput& neg, std::span<double> out);

// Analytic fields with closed-form flows (x' = f):
//   constant:  f = c            flow x0 + c (t1 - t0)
//   time_poly: f = t            flow x0 + (t1^2 - t0^2)/2
//   linear:    f = lambda x     flow x0 exp(lambda (t1 - t0))
//   affine:    f = a.x + b      flow per element, a is a diagonal
std::unique_ptr<VelocityField> make_constant_field(std::size_t size, double c);
std::unique_ptr<VelocityField> make_time_poly_field(std::size_t size);
std::unique_ptr<VelocityField> make_linear_field(std::size_t size, double lambda);
std::unique_ptr<VelocityField> make_affine_field(std::vector<double> diag, std::vector<double> b);

}  // namespace voxflow
