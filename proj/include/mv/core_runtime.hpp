#pragma once

// Global clock, versioned-lock table, address-to-slot mapping, the global mode
// counter and per-thread announcement slots.

#include <atomic>
#include <cassert>
#include <cstdint>
#include <limits>
#include <memory>

#include "mv/types.hpp"

namespace mv {

using SlotIndex = uint32_t;
using ThreadId = uint32_t;

// Packed versioned lock: bit 0 locked, bit 1 versioning flag, bits 2..17
// owner tid, bits 18..63 version.
struct LockWord {
    static constexpr uint64_t kLockedBit = 1;
    static constexpr uint64_t kFlagBit = 2;
    static constexpr unsigned kTidShift = 2;
    static constexpr uint64_t kTidMask = 0xFFFF;
    static constexpr unsigned kVersionShift = 18;
    static constexpr Timestamp kMaxVersion = (Timestamp{1} << (64 - kVersionShift)) - 1;

    uint64_t raw{0};

    bool locked() const { return (raw & kLockedBit) != 0; }
    bool flagged() const { return (raw & kFlagBit) != 0; }
    ThreadId tid() const { return static_cast<ThreadId>((raw >> kTidShift) & kTidMask); }
    Timestamp version() const { return raw >> kVersionShift; }

    static LockWord unlocked(Timestamp version) {
        assert(version <= kMaxVersion);
        return LockWord{version << kVersionShift};
    }
    static LockWord lockedBy(ThreadId tid, Timestamp version, bool flag = false) {
        assert(tid <= kTidMask && version <= kMaxVersion);
        return LockWord{(version << kVersionShift) | (uint64_t{tid} << kTidShift) |
                        (flag ? kFlagBit : 0) | kLockedBit};
    }
    friend bool operator==(LockWord, LockWord) = default;
};

// True iff the lock is ours, or free with a version older than the read clock.
inline bool validateLock(LockWord w, Timestamp rClock, ThreadId self) {
    if (w.locked()) return w.tid() == self;
    return w.version() < rClock;
}

class GlobalClock {
public:
    Timestamp read() const { return clock_.load(std::memory_order_acquire); }
    // Returns the post-increment value.
    Timestamp increment() { return clock_.fetch_add(1, std::memory_order_acq_rel) + 1; }
    // Moves the clock past `observed` unless somebody already did.
    void advancePast(Timestamp observed) {
        Timestamp cur = observed;
        clock_.compare_exchange_strong(cur, observed + 1, std::memory_order_acq_rel);
    }

private:
    alignas(kCacheLine) std::atomic<Timestamp> clock_{1};
};

inline SlotIndex hashToSlot(const void* cell, uint32_t bits) {
    // Cells are word aligned: drop the dead low bits, then Fibonacci-mix.
    const uint64_t x = reinterpret_cast<uintptr_t>(cell) >> 3;
    return static_cast<SlotIndex>((x * 0x9E3779B97F4A7C15ull) >> (64 - bits));
}

class LockTable {
public:
    explicit LockTable(uint32_t bits) : bits_(bits), locks_(std::size_t{1} << bits) {}

    std::size_t size() const { return locks_.size(); }
    uint32_t bits() const { return bits_; }
    SlotIndex slotFor(const void* cell) const { return hashToSlot(cell, bits_); }

    LockWord load(SlotIndex s) const { return LockWord{locks_[s].load(std::memory_order_acquire)}; }

    // Spins while a versioner holds the slot with the flag set.
    LockWord readLockWaitFlag(SlotIndex s) const {
        LockWord w = load(s);
        Backoff bo;
        while (w.flagged()) {
            bo.pause();
            w = load(s);
        }
        return w;
    }

    // Acquire the slot iff it still holds `observed`. Re-entrant for the owner.
    bool tryLock(SlotIndex s, LockWord observed, ThreadId self) {
        if (observed.locked()) return observed.tid() == self && !observed.flagged();
        uint64_t expect = observed.raw;
        return locks_[s].compare_exchange_strong(expect, LockWord::lockedBy(self, observed.version()).raw,
                                                 std::memory_order_acq_rel);
    }

    // Spins until the slot is acquired with the versioning flag set. Returns
    // the word that was replaced.
    LockWord lockAndFlag(SlotIndex s, ThreadId self) {
        Backoff bo;
        for (;;) {
            LockWord w = load(s);
            assert(!(w.locked() && w.tid() == self) && "lockAndFlag on a self-held slot");
            if (!w.locked()) {
                uint64_t expect = w.raw;
                if (locks_[s].compare_exchange_weak(expect, LockWord::lockedBy(self, w.version(), true).raw,
                                                    std::memory_order_acq_rel)) {
                    return w;
                }
            }
            bo.pause();
        }
    }

    void unlock(SlotIndex s, Timestamp newVersion) {
        assert(load(s).locked() && "unlock of a free slot");
        // Release versions never go backwards for a slot.
        assert(newVersion >= load(s).version());
        locks_[s].store(LockWord::unlocked(newVersion).raw, std::memory_order_release);
    }

private:
    uint32_t bits_;
    ZeroedArray<std::atomic<uint64_t>> locks_;
};

enum class Mode : uint8_t { Q = 0, QtoU = 1, U = 2, UtoQ = 3 };

inline Mode getMode(uint64_t counter) { return static_cast<Mode>(counter & 3); }
const char* modeName(Mode m);

inline constexpr uint64_t kNoDelta = std::numeric_limits<uint64_t>::max();
inline constexpr uint64_t kNoReadCount = std::numeric_limits<uint64_t>::max();

struct alignas(kCacheLine) Announcement {
    std::atomic<uint64_t> modeWord{0};  // localModeCounter << 1 | active
    std::atomic<bool> sticky{false};
    std::atomic<bool> registered{false};
    std::atomic<uint64_t> commitTsDelta{kNoDelta};

    static uint64_t pack(uint64_t counter, bool active) { return (counter << 1) | (active ? 1 : 0); }
    uint64_t localModeCounter() const { return modeWord.load(std::memory_order_seq_cst) >> 1; }
    bool active() const { return (modeWord.load(std::memory_order_seq_cst) & 1) != 0; }
};

class GlobalState {
public:
    explicit GlobalState(uint32_t slots, uint64_t initialCounter = 0);

    GlobalClock clock;

    uint64_t modeCounter() const { return modeCounter_.load(std::memory_order_seq_cst); }
    Mode mode() const { return getMode(modeCounter()); }
    // Worker-side Q -> QtoU transition; succeeds for exactly one caller per Q period.
    bool casModeCounter(uint64_t expected) {
        return modeCounter_.compare_exchange_strong(expected, expected + 1, std::memory_order_seq_cst);
    }
    // Background-thread transitions are plain stores of counter + 1.
    void storeModeCounter(uint64_t v) { modeCounter_.store(v, std::memory_order_seq_cst); }

    Timestamp firstObsModeUTs() const { return firstObs_.load(std::memory_order_seq_cst); }
    void setFirstObsModeUTs(Timestamp ts) { firstObs_.store(ts, std::memory_order_seq_cst); }

    uint64_t minModeUReadCount() const { return minModeURead_.load(std::memory_order_acquire); }
    void updateMinModeUReadCount(uint64_t readCnt);
    void resetMinModeUReadCount() { minModeURead_.store(kNoReadCount, std::memory_order_release); }

    uint32_t slots() const { return slots_; }
    Announcement& announcement(ThreadId tid) { return ann_[tid]; }
    const Announcement& announcement(ThreadId tid) const { return ann_[tid]; }

    // Publishes (counter, active=true, sticky) for `tid` and returns the
    // counter the thread must run under. Re-announces if the counter moved
    // while publishing, so the background scan can never miss this thread.
    uint64_t announceBegin(ThreadId tid, bool sticky);
    void announce(ThreadId tid, uint64_t localModeCounter, bool sticky);
    void announceInactive(ThreadId tid);

    ThreadId claimSlot(uint32_t limit);
    void releaseSlot(ThreadId tid);

private:
    alignas(kCacheLine) std::atomic<uint64_t> modeCounter_;
    alignas(kCacheLine) std::atomic<Timestamp> firstObs_{kInvalidTs};
    alignas(kCacheLine) std::atomic<uint64_t> minModeURead_{kNoReadCount};
    uint32_t slots_;
    std::unique_ptr<Announcement[]> ann_;
};

}  // namespace mv
