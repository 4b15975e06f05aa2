#pragma once

// Mode-switch heuristics and the background thread that drives the
// Q -> QtoU -> U -> UtoQ -> Q cycle and unversions stale buckets in Mode Q.

#include <atomic>
#include <cstdint>
#include <limits>
#include <thread>
#include <vector>

#include "mv/config.hpp"
#include "mv/core_runtime.hpp"
#include "mv/reclamation.hpp"
#include "mv/version_store.hpp"

namespace mv {

// Read-only attempt just aborted; `attempts` already counts it.
inline bool shouldSwitchToVersioned(const HeuristicParams& h, uint32_t attempts, bool versioned) {
    return versioned || attempts >= h.k1;
}

inline bool shouldAttemptModeCas(const HeuristicParams& h, uint32_t attempts, uint64_t readCnt, bool versioned,
                                 uint64_t minModeUReadCount) {
    return (attempts >= h.k2 && readCnt >= minModeUReadCount) || (versioned && attempts >= h.k3);
}

// Per-thread sticky-bit bookkeeping.
class SmallTxnTracker {
public:
    explicit SmallTxnTracker(uint32_t s = 10) : s_(s) {}

    bool sticky() const { return sticky_; }
    bool pendingCapture() const { return pendingCapture_; }
    uint64_t threshold() const { return threshold_; }
    uint32_t consecutiveSmall() const { return consecSmall_; }

    // Any CAS attempt, successful or not.
    void onCasAttempt() {
        sticky_ = true;
        pendingCapture_ = true;
        consecSmall_ = 0;
    }

    void onCommit(bool versioned, uint64_t readCnt) {
        if (pendingCapture_) {
            threshold_ = readCnt / s_;
            pendingCapture_ = false;
        }
        const bool small = !versioned || readCnt <= threshold_;
        consecSmall_ = small ? consecSmall_ + 1 : 0;
        if (consecSmall_ >= s_) sticky_ = false;
    }

private:
    uint32_t s_;
    bool sticky_{false};
    bool pendingCapture_{false};
    uint64_t threshold_{0};
    uint32_t consecSmall_{0};
};

// Turns announced commit-timestamp deltas into an unversioning threshold.
class UnversionSampler {
public:
    static constexpr Timestamp kNoThreshold = std::numeric_limits<Timestamp>::max();

    UnversionSampler(uint32_t l, double p) : l_(l), p_(p) {}

    // Adds the mean of `deltas` as one sample; empty input adds nothing.
    // Returns true when the threshold was recomputed.
    bool addRound(const std::vector<uint64_t>& deltas);
    void addSample(double mean);

    Timestamp threshold() const { return threshold_; }
    std::size_t pending() const { return samples_.size(); }

private:
    uint32_t l_;
    double p_;
    std::vector<double> samples_;
    Timestamp threshold_{kNoThreshold};
};

struct ModeControllerStats {
    uint64_t cycles;
    uint64_t unversionPasses;
    uint64_t bucketsUnversioned;
    Timestamp threshold;
};

class ModeController {
public:
    ModeController(GlobalState& g, LockTable& locks, VersionStore& vs, Ebr& ebr, const HeuristicParams& h,
                   ThreadId selfTid);
    ~ModeController();
    ModeController(const ModeController&) = delete;
    ModeController& operator=(const ModeController&) = delete;

    void start();
    void stop();

    // Returns once no active registered thread announces a counter below `c`.
    void waitForWorkers(uint64_t c) const;
    bool anySticky() const;
    // One sampler round plus, if a threshold exists, one sweep over the VLT.
    // Returns the number of buckets unversioned.
    std::size_t unversionPass();

    ModeControllerStats stats() const;

private:
    void loop();
    void runTransitionCycle(uint64_t c);
    bool stopping() const { return stop_.load(std::memory_order_acquire); }
    void idle() const;

    GlobalState& g_;
    LockTable& locks_;
    VersionStore& vs_;
    Ebr& ebr_;
    HeuristicParams h_;
    ThreadId self_;
    UnversionSampler sampler_;
    std::atomic<bool> stop_{false};
    std::thread thread_;

    std::atomic<uint64_t> cycles_{0};
    std::atomic<uint64_t> passes_{0};
    std::atomic<uint64_t> unversioned_{0};
    std::atomic<Timestamp> threshold_{UnversionSampler::kNoThreshold};
};

}  // namespace mv
