#include "voxflow/fields.hpp"

#include <cmath>
#include <sstream>

#include "voxflow/rng.hpp"

namespace voxflow {

ConditionInput ConditionInput::named(CondMode mode, const std::string& name, int width) {
    if (width <= 0) throw usage_error("condition embedding width must be positive");
    if (mode == CondMode::unconditional) return unconditional(width);
    ConditionInput c;
    c.mode = mode;
    SeededRng rng(sub_seed(fnv1a64(name), "condition-embedding"));
    c.embedding.resize(std::size_t(width));
    for (double& v : c.embedding) v = 0.5 * rng.gaussian();
    return c;
}

ConditionInput ConditionInput::unconditional(int width) {
    if (width <= 0) throw usage_error("condition embedding width must be positive");
    ConditionInput c;
    c.mode = CondMode::unconditional;
    c.embedding.assign(std::size_t(width), 0.0);
    return c;
}

void GuidanceConfig::validate() const {
    if (!std::isfinite(omega) || omega < 0.0) throw usage_error("guidance omega must be finite and >= 0");
    if (!std::isfinite(lo) || !std::isfinite(hi) || lo < 0.0 || hi > 1.0 || lo > hi) {
        throw usage_error("guidance interval must satisfy 0 <= lo <= hi <= 1");
    }
}

void VelocityField::exact_flow(std::span<const double>, double, double, std::span<double>) const {
    throw numeric_error("field has no closed-form flow");
}

namespace {

void check_time(double t) {
    if (!std::isfinite(t) || t < 0.0 || t > 1.0) {
        std::ostringstream os;
        os << "evaluation time " << t << " outside [0,1]";
        throw numeric_error(os.str());
    }
}

void check_finite(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw numeric_error(std::string(what) + " contains a non-finite value");
    }
}

// Analytic fields ignore the condition input entirely, so conditional and
// negative branches coincide and guidance cancels by construction.
class AnalyticField : public VelocityField {
public:
    enum class Kind { constant, time_poly, linear, affine };

    AnalyticField(Kind kind, std::size_t size, double c, double lambda, std::vector<double> diag,
                  std::vector<double> b)
        : kind_(kind), size_(size), c_(c), lambda_(lambda), diag_(std::move(diag)), b_(std::move(b)) {}

    std::size_t state_size() const override { return size_; }

    void eval(std::span<const double> state, double t, const ConditionInput&,
              std::span<double> out) const override {
        switch (kind_) {
            case Kind::constant:
                for (std::size_t i = 0; i < size_; ++i) out[i] = c_;
                break;
            case Kind::time_poly:
                for (std::size_t i = 0; i < size_; ++i) out[i] = t;
                break;
            case Kind::linear:
                for (std::size_t i = 0; i < size_; ++i) out[i] = lambda_ * state[i];
                break;
            case Kind::affine:
                for (std::size_t i = 0; i < size_; ++i) out[i] = diag_[i] * state[i] + b_[i];
                break;
        }
    }

    bool has_exact_flow() const override { return true; }

    void exact_flow(std::span<const double> x0, double t0, double t1,
                    std::span<double> out) const override {
        if (x0.size() != size_ || out.size() != size_) {
            throw numeric_error("exact_flow: state size mismatch");
        }
        const double dt = t1 - t0;
        switch (kind_) {
            case Kind::constant:
                for (std::size_t i = 0; i < size_; ++i) out[i] = x0[i] + c_ * dt;
                break;
            case Kind::time_poly:
                for (std::size_t i = 0; i < size_; ++i) out[i] = x0[i] + (t1 * t1 - t0 * t0) / 2.0;
                break;
            case Kind::linear: {
                const double g = std::exp(lambda_ * dt);
                for (std::size_t i = 0; i < size_; ++i) out[i] = x0[i] * g;
                break;
            }
            case Kind::affine:
                for (std::size_t i = 0; i < size_; ++i) {
                    const double a = diag_[i];
                    if (a == 0.0) {
                        out[i] = x0[i] + b_[i] * dt;
                    } else {
                        const double g = std::exp(a * dt);
                        out[i] = x0[i] * g + (g - 1.0) / a * b_[i];
                    }
                }
                break;
        }
    }

private:
    Kind kind_;
    std::size_t size_;
    double c_;
    double lambda_;
    std::vector<double> diag_, b_;
};

}  // namespace

std::vector<double> eval_velocity(const VelocityField& field, std::span<const double> state,
                                  double t, const ConditionInput& cond) {
    if (state.size() != field.state_size()) {
        std::ostringstream os;
        os << "state size " << state.size() << " does not match field size " << field.state_size();
        throw numeric_error(os.str());
    }
    check_time(t);
    check_finite(state, "state");
    if (field.condition_width() > 0 && cond.embedding.size() != std::size_t(field.condition_width())) {
        throw numeric_error("condition embedding width does not match the field's conditioning width");
    }
    std::vector<double> out(field.state_size());
    field.eval(state, t, cond, out);
    check_finite(out, "velocity");
    return out;
}

void cfg_combine(std::span<const double> f_cond, std::span<const double> f_neg, double omega,
                 std::span<double> out) {
    if (f_cond.size() != f_neg.size() || f_cond.size() != out.size()) {
        throw numeric_error("cfg_combine: branch shapes differ");
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = (1.0 + omega) * f_cond[i] - omega * f_neg[i];
    }
}

int guided_velocity(const VelocityField& field, std::span<const double> state, double t,
                    const GuidanceConfig& guidance, const ConditionInput& cond,
                    const ConditionInput& neg, std::span<double> out) {
    guidance.validate();
    if (out.size() != field.state_size()) throw numeric_error("guided_velocity: output size mismatch");
    AttentionHook* hook = field.hook();
    auto stamp = [&](CondMode branch) {
        if (hook) {
            hook->tag.time = t;
            hook->tag.branch = branch;
        }
    };
    // omega = 0 reduces to (1+0) f_cond - 0 f_neg = f_cond exactly, so the
    // negative branch is skipped: guidance off and omega 0 are bit-identical.
    if (!guidance.gated(t) || guidance.omega == 0.0) {
        stamp(cond.mode);
        std::vector<double> f = eval_velocity(field, state, t, cond);
        std::copy(f.begin(), f.end(), out.begin());
        return 1;
    }
    stamp(cond.mode);
    std::vector<double> f_cond = eval_velocity(field, state, t, cond);
    stamp(neg.mode);
    std::vector<double> f_neg = eval_velocity(field, state, t, neg);
    cfg_combine(f_cond, f_neg, guidance.omega, out);
    check_finite(out, "guided velocity");
    return 2;
}

std::unique_ptr<VelocityField> make_constant_field(std::size_t size, double c) {
    if (size == 0) throw usage_error("field size must be positive");
    if (!std::isfinite(c)) throw usage_error("constant field value must be finite");
    return std::make_unique<AnalyticField>(AnalyticField::Kind::constant, size, c, 0.0,
                                           std::vector<double>{}, std::vector<double>{});
}

std::unique_ptr<VelocityField> make_time_poly_field(std::size_t size) {
    if (size == 0) throw usage_error("field size must be positive");
    return std::make_unique<AnalyticField>(AnalyticField::Kind::time_poly, size, 0.0, 0.0,
                                           std::vector<double>{}, std::vector<double>{});
}

std::unique_ptr<VelocityField> make_linear_field(std::size_t size, double lambda) {
    if (size == 0) throw usage_error("field size must be positive");
    if (!std::isfinite(lambda)) throw usage_error("linear field lambda must be finite");
    return std::make_unique<AnalyticField>(AnalyticField::Kind::linear, size, 0.0, lambda,
                                           std::vector<double>{}, std::vector<double>{});
}

std::unique_ptr<VelocityField> make_affine_field(std::vector<double> diag, std::vector<double> b) {
    if (diag.empty() || diag.size() != b.size()) {
        throw usage_error("affine field requires matching nonempty diag and offset");
    }
    for (double v : diag)
        if (!std::isfinite(v)) throw usage_error("affine field diag must be finite");
    for (double v : b)
        if (!std::isfinite(v)) throw usage_error("affine field offset must be finite");
    std::size_t size = diag.size();
    return std::make_unique<AnalyticField>(AnalyticField::Kind::affine, size, 0.0, 0.0,
                                           std::move(diag), std::move(b));
}

}  // namespace voxflow
