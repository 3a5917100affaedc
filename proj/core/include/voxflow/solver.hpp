#pragma once

#include <functional>
#include <vector>

#include "voxflow/fields.hpp"

namespace voxflow {

class KVCacheStore;

// Time grid over [0, 1]: strictly increasing, s_0 = 0, s_T = 1. t = 1 is
// noise, t = 0 is data; inversion walks k = 0..T-1, sampling walks T..1.
// Times are computed directly per index (never by accumulation) so caches
// keyed by them align bitwise across traversals.
struct Schedule {
    enum class Kind { uniform, shifted };

    Kind kind = Kind::uniform;
    double exponent = 1.0;  // shifted: s_k = (k/T)^exponent
    std::vector<double> times;

    int steps() const { return int(times.size()) - 1; }

    // Canonical midpoint time of segment [s_k, s_{k+1}]; identical bitwise
    // whichever direction a traversal crosses the segment.
    double midpoint(int k) const { return times[std::size_t(k)] + (times[std::size_t(k) + 1] - times[std::size_t(k)]) / 2.0; }

    void validate() const;
};

Schedule make_schedule(int steps, Schedule::Kind kind = Schedule::Kind::uniform,
                       double exponent = 1.0);

// Diagnostics for one solver step.
struct StepReport {
    double t_from = 0.0;
    double t_to = 0.0;
    int field_evals = 0;       // 2 per guided call inside the CFG interval, else 1
    int guided_calls = 0;      // always 2 for the second-order step
    double max_abs_velocity = 0.0;
};

// Latent states recorded at every schedule time of a traversal, keyed by the
// exact time values. Lookups by time require bitwise equality.
struct TrajectoryCache {
    Stage stage = Stage::st;
    std::vector<double> times;
    std::vector<std::vector<double>> states;

    const std::vector<double>& state_at_index(int k) const;
    const std::vector<double>& state_at_time(double t) const;  // cache error if absent
    const std::vector<double>& terminal() const;               // state at s_T
};

struct TraversalResult {
    std::vector<double> final_state;
    TrajectoryCache trajectory;
    std::vector<StepReport> reports;
    long total_field_evals = 0;
};

// One second-order step from (x_a, a) to b (either direction, a != b):
//   x_mid = x_a + (m - a) f(x_a, a),        m = canonical midpoint time
//   df    = (f(x_mid, m) - f(x_a, a)) / (m - a)
//   x_b   = x_a + h f(x_a, a) + (h^2 / 2) df,   h = b - a
// Both evaluations go through guidance. Cost: 2 guided calls.
std::vector<double> taylor_step(const VelocityField& field, std::span<const double> x_a, double a,
                                double b, const GuidanceConfig& guidance, const ConditionInput& cond,
                                const ConditionInput& neg, StepReport* report = nullptr);

// First-order baseline: x_b = x_a + h f(x_a, a). Cost: 1 guided call.
std::vector<double> euler_step(const VelocityField& field, std::span<const double> x_a, double a,
                               double b, const GuidanceConfig& guidance, const ConditionInput& cond,
                               const ConditionInput& neg, StepReport* report = nullptr);

// Invert data (t=0) to noise (t=1) over the schedule. Records the state at
// every schedule time (trajectory[k] is the state at s_k). When `capture` is
// non-null and the field has a hook, every evaluation's K/V is captured.
TraversalResult invert(const VelocityField& field, const Schedule& schedule,
                       std::span<const double> data, const GuidanceConfig& guidance,
                       const ConditionInput& cond, const ConditionInput& neg,
                       KVCacheStore* capture = nullptr);

// Called after the step landing at schedule index k (time s_k); may mutate
// the state in place before the traversal continues.
using StepCallback = std::function<void(int k, std::vector<double>& state)>;

// Sample noise (t=1) back to data (t=0) over the schedule. Records the state
// at every schedule time after the callback has run.
TraversalResult sample(const VelocityField& field, const Schedule& schedule,
                       std::span<const double> noise, const GuidanceConfig& guidance,
                       const ConditionInput& cond, const ConditionInput& neg,
                       const StepCallback& on_step = {});

enum class StepMethod { taylor, euler };

struct ConvergenceReport {
    std::vector<int> step_counts;
    std::vector<double> errors;  // max-abs at t=0 vs the exact flow
    double slope = 0.0;          // least-squares slope of log(err) vs log(1/T)
    bool exact = false;          // any error was exactly zero; slope undefined
};

// Integrates x from t=1 to t=0 for each step count on a uniform schedule and
// compares against the field's closed-form flow.
ConvergenceReport convergence_probe(const VelocityField& field, std::span<const int> step_counts,
                                    StepMethod method, std::span<const double> x_at_one);

}  // namespace voxflow
