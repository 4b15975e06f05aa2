#include "mv/mode_controller.hpp"

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cmath>
#include <functional>

namespace mv {

bool UnversionSampler::addRound(const std::vector<uint64_t>& deltas) {
    if (deltas.empty()) return false;
    double sum = 0;
    for (uint64_t d : deltas) sum += static_cast<double>(d);
    const std::size_t before = pending();
    addSample(sum / static_cast<double>(deltas.size()));
    return pending() < before + 1;
}

void UnversionSampler::addSample(double mean) {
    samples_.push_back(mean);
    if (samples_.size() < l_) return;
    std::sort(samples_.begin(), samples_.end(), std::greater<>());
    const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(p_ * l_)));
    double sum = 0;
    for (std::size_t i = 0; i < k; ++i) sum += samples_[i];
    threshold_ = static_cast<Timestamp>(std::llround(sum / static_cast<double>(k)));
    samples_.clear();
}

ModeController::ModeController(GlobalState& g, LockTable& locks, VersionStore& vs, Ebr& ebr,
                               const HeuristicParams& h, ThreadId selfTid)
    : g_(g), locks_(locks), vs_(vs), ebr_(ebr), h_(h), self_(selfTid), sampler_(h.l, h.p) {}

ModeController::~ModeController() { stop(); }

void ModeController::start() {
    assert(!thread_.joinable());
    stop_.store(false);
    thread_ = std::thread([this] { loop(); });
}

void ModeController::stop() {
    stop_.store(true, std::memory_order_release);
    if (thread_.joinable()) thread_.join();
}

void ModeController::idle() const { std::this_thread::sleep_for(std::chrono::microseconds(100)); }

void ModeController::waitForWorkers(uint64_t c) const {
    for (;;) {
        bool straggler = false;
        for (ThreadId t = 0; t < g_.slots() && !straggler; ++t) {
            const Announcement& a = g_.announcement(t);
            if (!a.registered.load(std::memory_order_seq_cst)) continue;
            const uint64_t w = a.modeWord.load(std::memory_order_seq_cst);
            straggler = (w & 1) != 0 && (w >> 1) < c;
        }
        if (!straggler || stopping()) return;
        idle();
    }
}

bool ModeController::anySticky() const {
    for (ThreadId t = 0; t < g_.slots(); ++t) {
        const Announcement& a = g_.announcement(t);
        if (a.registered.load(std::memory_order_seq_cst) && a.sticky.load(std::memory_order_seq_cst)) return true;
    }
    return false;
}

void ModeController::loop() {
    using Clock = std::chrono::steady_clock;
    auto nextScan = Clock::now() + h_.scanPeriod;
    while (!stopping()) {
        const uint64_t c = g_.modeCounter();
        if (getMode(c) != Mode::Q) {
            runTransitionCycle(c);
            nextScan = Clock::now() + h_.scanPeriod;
            continue;
        }
        if (Clock::now() >= nextScan) {
            unversionPass();
            nextScan = Clock::now() + h_.scanPeriod;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
}

void ModeController::runTransitionCycle(uint64_t c) {
    assert(getMode(c) == Mode::QtoU && "only workers leave Mode Q");
    waitForWorkers(c);
    if (stopping()) return;
    g_.storeModeCounter(c + 1);
    g_.setFirstObsModeUTs(g_.clock.read());

    waitForWorkers(c + 1);
    while (anySticky() && !stopping()) idle();
    if (stopping()) return;
    g_.storeModeCounter(c + 2);

    waitForWorkers(c + 2);
    if (stopping()) return;
    g_.setFirstObsModeUTs(kInvalidTs);
    g_.resetMinModeUReadCount();
    g_.storeModeCounter(c + 3);
    cycles_.fetch_add(1, std::memory_order_relaxed);
}

std::size_t ModeController::unversionPass() {
    passes_.fetch_add(1, std::memory_order_relaxed);
    std::vector<uint64_t> deltas;
    for (ThreadId t = 0; t < g_.slots(); ++t) {
        const Announcement& a = g_.announcement(t);
        if (!a.registered.load(std::memory_order_acquire)) continue;
        const uint64_t d = a.commitTsDelta.load(std::memory_order_acquire);
        if (d != kNoDelta) deltas.push_back(d);
    }
    sampler_.addRound(deltas);
    const Timestamp threshold = sampler_.threshold();
    threshold_.store(threshold, std::memory_order_relaxed);
    if (threshold == UnversionSampler::kNoThreshold || !vs_.anyVersioned()) return 0;

    constexpr std::size_t kChunk = 4096;
    std::size_t count = 0;
    for (std::size_t base = 0; base < vs_.size(); base += kChunk) {
        if (stopping()) break;
        ebr_.enter(self_);
        bool leftQ = false;
        const std::size_t end = std::min(vs_.size(), base + kChunk);
        for (std::size_t i = base; i < end; ++i) {
            const auto s = static_cast<SlotIndex>(i);
            if (vs_.bucketHead(s) == nullptr) continue;
            const LockWord prior = locks_.lockAndFlag(s, self_);
            // Checked under the lock: a writer in any later mode needs this
            // slot first, so it can only re-version after we are done.
            if (g_.mode() != Mode::Q) {
                locks_.unlock(s, prior.version());
                leftQ = true;
                break;
            }
            const Timestamp latest = vs_.latestTimestampInBucket(s);
            const Timestamp now = g_.clock.read();
            if (vs_.bucketHead(s) != nullptr && now >= latest && now - latest >= threshold) {
                vs_.unversionBucket(s, self_);
                ++count;
            }
            locks_.unlock(s, prior.version());
        }
        ebr_.exit(self_);
        if (leftQ) break;
    }
    unversioned_.fetch_add(count, std::memory_order_relaxed);
    return count;
}

ModeControllerStats ModeController::stats() const {
    return {cycles_.load(std::memory_order_relaxed), passes_.load(std::memory_order_relaxed),
            unversioned_.load(std::memory_order_relaxed), threshold_.load(std::memory_order_relaxed)};
}

}  // namespace mv
