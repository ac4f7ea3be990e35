#pragma once

#include <chrono>
#include <limits>

namespace i2rl {

/// How learning time is measured.
///
/// `wall` uses a steady clock. `work` counts elementary dynamic-programming
/// cell updates charged by the algorithms and converts them to nominal
/// seconds at a fixed rate, so durations and deadlines are reproducible
/// bit-for-bit across machines and runs.
enum class ClockKind { wall, work };

inline constexpr double kWorkUnitsPerSecond = 1e7;

/// Learning-time accumulator with an optional deadline.
///
/// Wall time only accrues between `start()` and `stop()`; work units accrue
/// through `charge()` regardless of the clock kind, so both figures are
/// always available.
class LearningBudget {
public:
    explicit LearningBudget(ClockKind kind = ClockKind::wall,
                            double limit_seconds = std::numeric_limits<double>::infinity())
        : kind_(kind), limit_(limit_seconds) {}

    ClockKind kind() const noexcept { return kind_; }
    double limit() const noexcept { return limit_; }

    void start() {
        if (!running_) {
            running_ = true;
            segment_start_ = Clock::now();
        }
    }

    void stop() {
        if (running_) {
            wall_ += std::chrono::duration<double>(Clock::now() - segment_start_).count();
            running_ = false;
        }
    }

    void charge(double units) noexcept { work_ += units; }

    /// Adds another budget's accumulated time, e.g. one session's into a run total.
    void absorb(const LearningBudget& other) {
        work_ += other.work_units();
        wall_ += other.wall_seconds();
    }

    double work_units() const noexcept { return work_; }

    double wall_seconds() const {
        double w = wall_;
        if (running_) w += std::chrono::duration<double>(Clock::now() - segment_start_).count();
        return w;
    }

    /// Elapsed seconds on the configured clock.
    double elapsed() const {
        return kind_ == ClockKind::wall ? wall_seconds() : work_ / kWorkUnitsPerSecond;
    }

    bool expired() const { return elapsed() > limit_; }

private:
    using Clock = std::chrono::steady_clock;

    ClockKind kind_;
    double limit_;
    double wall_ = 0.0;
    double work_ = 0.0;
    bool running_ = false;
    Clock::time_point segment_start_{};
};

/// Starts a budget for the lifetime of the guard.
class BudgetScope {
public:
    explicit BudgetScope(LearningBudget* budget) : budget_(budget) {
        if (budget_) budget_->start();
    }
    ~BudgetScope() {
        if (budget_) budget_->stop();
    }
    BudgetScope(const BudgetScope&) = delete;
    BudgetScope& operator=(const BudgetScope&) = delete;

private:
    LearningBudget* budget_;
};

inline void charge(LearningBudget* budget, double units) {
    if (budget) budget->charge(units);
}

inline bool expired(const LearningBudget* budget) { return budget && budget->expired(); }

} // namespace i2rl
