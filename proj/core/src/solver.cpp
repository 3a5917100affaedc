#include "voxflow/solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "voxflow/io.hpp"
#include "voxflow/kvstore.hpp"

namespace voxflow {

void Schedule::validate() const {
    if (times.size() < 2) throw usage_error("schedule needs at least one step");
    if (times.front() != 0.0 || times.back() != 1.0) {
        throw usage_error("schedule must start at 0 and end at 1");
    }
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (!(times[i] > times[i - 1])) throw usage_error("schedule times must be strictly increasing");
    }
}

Schedule make_schedule(int steps, Schedule::Kind kind, double exponent) {
    if (steps < 1) throw usage_error("schedule step count must be >= 1");
    if (kind == Schedule::Kind::shifted && (!std::isfinite(exponent) || exponent <= 0.0)) {
        throw usage_error("shifted schedule exponent must be > 0");
    }
    Schedule s;
    s.kind = kind;
    s.exponent = (kind == Schedule::Kind::shifted) ? exponent : 1.0;
    s.times.resize(std::size_t(steps) + 1);
    for (int k = 0; k <= steps; ++k) {
        const double frac = double(k) / double(steps);
        s.times[std::size_t(k)] = (kind == Schedule::Kind::uniform) ? frac : std::pow(frac, exponent);
    }
    s.times.front() = 0.0;
    s.times.back() = 1.0;
    s.validate();
    return s;
}

const std::vector<double>& TrajectoryCache::state_at_index(int k) const {
    if (k < 0 || std::size_t(k) >= states.size()) {
        std::ostringstream os;
        os << "trajectory index " << k << " out of range [0," << states.size() << ")";
        throw cache_error(os.str());
    }
    return states[std::size_t(k)];
}

const std::vector<double>& TrajectoryCache::state_at_time(double t) const {
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] == t) return states[i];  // bitwise time match required
    }
    throw cache_error(std::string("trajectory cache miss: stage=") + stage_name(stage) +
                      " time=" + double_to_hex(t));
}

const std::vector<double>& TrajectoryCache::terminal() const {
    if (states.empty()) throw cache_error("trajectory cache is empty");
    return states.back();
}

namespace {

double canonical_midpoint(double a, double b) {
    const double lo = std::min(a, b), hi = std::max(a, b);
    return lo + (hi - lo) / 2.0;
}

void check_step_times(double a, double b) {
    if (!std::isfinite(a) || !std::isfinite(b) || a < 0.0 || a > 1.0 || b < 0.0 || b > 1.0) {
        throw numeric_error("step endpoints must lie in [0,1]");
    }
    if (a == b) throw numeric_error("degenerate step: endpoints are bitwise equal");
}

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

std::vector<double> taylor_step(const VelocityField& field, std::span<const double> x_a, double a,
                                double b, const GuidanceConfig& guidance, const ConditionInput& cond,
                                const ConditionInput& neg, StepReport* report) {
    check_step_times(a, b);
    const std::size_t n = field.state_size();
    if (x_a.size() != n) throw numeric_error("taylor_step: state size mismatch");

    const double h = b - a;
    const double m = canonical_midpoint(a, b);
    const double dt_half = m - a;  // signed half step toward the midpoint

    std::vector<double> f_a(n);
    int evals = guided_velocity(field, x_a, a, guidance, cond, neg, f_a);

    std::vector<double> x_mid(n);
    for (std::size_t i = 0; i < n; ++i) x_mid[i] = x_a[i] + dt_half * f_a[i];

    std::vector<double> f_m(n);
    evals += guided_velocity(field, x_mid, m, guidance, cond, neg, f_m);

    std::vector<double> x_b(n);
    const double half_h2 = 0.5 * h * h;
    for (std::size_t i = 0; i < n; ++i) {
        const double df = (f_m[i] - f_a[i]) / dt_half;
        x_b[i] = x_a[i] + h * f_a[i] + half_h2 * df;
        if (!std::isfinite(x_b[i])) throw numeric_error("taylor_step produced a non-finite value");
    }
    if (report) {
        report->t_from = a;
        report->t_to = b;
        report->field_evals = evals;
        report->guided_calls = 2;
        report->max_abs_velocity = std::max(max_abs(f_a), max_abs(f_m));
    }
    return x_b;
}

std::vector<double> euler_step(const VelocityField& field, std::span<const double> x_a, double a,
                               double b, const GuidanceConfig& guidance, const ConditionInput& cond,
                               const ConditionInput& neg, StepReport* report) {
    check_step_times(a, b);
    const std::size_t n = field.state_size();
    if (x_a.size() != n) throw numeric_error("euler_step: state size mismatch");
    const double h = b - a;
    std::vector<double> f_a(n);
    int evals = guided_velocity(field, x_a, a, guidance, cond, neg, f_a);
    std::vector<double> x_b(n);
    for (std::size_t i = 0; i < n; ++i) {
        x_b[i] = x_a[i] + h * f_a[i];
        if (!std::isfinite(x_b[i])) throw numeric_error("euler_step produced a non-finite value");
    }
    if (report) {
        report->t_from = a;
        report->t_to = b;
        report->field_evals = evals;
        report->guided_calls = 1;
        report->max_abs_velocity = max_abs(f_a);
    }
    return x_b;
}

namespace {

// RAII: arm capture on entry, disarm on exit (exceptions included).
class CaptureGuard {
public:
    CaptureGuard(const VelocityField& field, KVCacheStore* store) : hook_(field.hook()) {
        if (hook_ && store) {
            if (hook_->mode != HookMode::off) {
                throw cache_error("attention hook already armed; capture requires exclusive access");
            }
            hook_->mode = HookMode::capture;
            hook_->sink = store;
            hook_->tag.stage = store->stage();
        } else {
            hook_ = nullptr;
        }
    }
    ~CaptureGuard() {
        if (hook_) hook_->disarm();
    }
    CaptureGuard(const CaptureGuard&) = delete;
    CaptureGuard& operator=(const CaptureGuard&) = delete;

private:
    AttentionHook* hook_;
};

}  // namespace

TraversalResult invert(const VelocityField& field, const Schedule& schedule,
                       std::span<const double> data, const GuidanceConfig& guidance,
                       const ConditionInput& cond, const ConditionInput& neg,
                       KVCacheStore* capture) {
    schedule.validate();
    guidance.validate();
    if (data.size() != field.state_size()) throw numeric_error("invert: state size mismatch");

    CaptureGuard guard(field, capture);

    TraversalResult r;
    r.trajectory.stage = capture ? capture->stage() : Stage::st;
    r.trajectory.times = schedule.times;
    r.trajectory.states.reserve(schedule.times.size());

    std::vector<double> x(data.begin(), data.end());
    r.trajectory.states.push_back(x);
    const int T = schedule.steps();
    for (int k = 0; k < T; ++k) {
        StepReport rep;
        x = taylor_step(field, x, schedule.times[std::size_t(k)], schedule.times[std::size_t(k) + 1],
                        guidance, cond, neg, &rep);
        r.reports.push_back(rep);
        r.total_field_evals += rep.field_evals;
        r.trajectory.states.push_back(x);
    }
    r.final_state = std::move(x);
    return r;
}

TraversalResult sample(const VelocityField& field, const Schedule& schedule,
                       std::span<const double> noise, const GuidanceConfig& guidance,
                       const ConditionInput& cond, const ConditionInput& neg,
                       const StepCallback& on_step) {
    schedule.validate();
    guidance.validate();
    if (noise.size() != field.state_size()) throw numeric_error("sample: state size mismatch");

    const int T = schedule.steps();
    TraversalResult r;
    r.trajectory.stage = Stage::st;
    r.trajectory.times = schedule.times;
    r.trajectory.states.assign(schedule.times.size(), {});

    std::vector<double> x(noise.begin(), noise.end());
    r.trajectory.states[std::size_t(T)] = x;
    for (int k = T; k >= 1; --k) {
        StepReport rep;
        x = taylor_step(field, x, schedule.times[std::size_t(k)], schedule.times[std::size_t(k) - 1],
                        guidance, cond, neg, &rep);
        r.reports.push_back(rep);
        r.total_field_evals += rep.field_evals;
        if (on_step) on_step(k - 1, x);
        r.trajectory.states[std::size_t(k) - 1] = x;  // state that continues
    }
    r.final_state = std::move(x);
    return r;
}

ConvergenceReport convergence_probe(const VelocityField& field, std::span<const int> step_counts,
                                    StepMethod method, std::span<const double> x_at_one) {
    if (!field.has_exact_flow()) throw usage_error("convergence probe needs a field with a closed-form flow");
    if (step_counts.empty()) throw usage_error("convergence probe needs at least one step count");
    if (x_at_one.size() != field.state_size()) throw numeric_error("convergence probe: state size mismatch");

    // Guidance plays no role: analytic fields ignore conditions, so run ungated.
    GuidanceConfig off;
    off.omega = 0.0;
    off.lo = 1.0;
    off.hi = 1.0;
    ConditionInput uncond = ConditionInput::unconditional(std::max(1, field.condition_width()));

    std::vector<double> exact(field.state_size());
    field.exact_flow(x_at_one, 1.0, 0.0, exact);

    ConvergenceReport rep;
    for (int T : step_counts) {
        Schedule sched = make_schedule(T);
        std::vector<double> x(x_at_one.begin(), x_at_one.end());
        for (int k = T; k >= 1; --k) {
            const double a = sched.times[std::size_t(k)];
            const double b = sched.times[std::size_t(k) - 1];
            x = (method == StepMethod::taylor) ? taylor_step(field, x, a, b, off, uncond, uncond)
                                               : euler_step(field, x, a, b, off, uncond, uncond);
        }
        double err = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) err = std::max(err, std::abs(x[i] - exact[i]));
        rep.step_counts.push_back(T);
        rep.errors.push_back(err);
        if (err == 0.0) rep.exact = true;
    }

    if (!rep.exact && rep.errors.size() >= 2) {
        // Least squares of log(err) against log(1/T).
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double n = double(rep.errors.size());
        for (std::size_t i = 0; i < rep.errors.size(); ++i) {
            const double lx = std::log(1.0 / double(rep.step_counts[i]));
            const double ly = std::log(rep.errors[i]);
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
        }
        rep.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }
    return rep;
}

}  // namespace voxflow
