#include "mv/core_runtime.hpp"

#include <stdexcept>

namespace mv {

const char* modeName(Mode m) {
    switch (m) {
        case Mode::Q: return "Q";
        case Mode::QtoU: return "QtoU";
        case Mode::U: return "U";
        case Mode::UtoQ: return "UtoQ";
    }
    return "?";
}

GlobalState::GlobalState(uint32_t slots, uint64_t initialCounter)
    : modeCounter_(initialCounter), slots_(slots), ann_(std::make_unique<Announcement[]>(slots)) {}

void GlobalState::updateMinModeUReadCount(uint64_t readCnt) {
    uint64_t cur = minModeURead_.load(std::memory_order_acquire);
    while (readCnt < cur && !minModeURead_.compare_exchange_weak(cur, readCnt, std::memory_order_acq_rel)) {
    }
}

uint64_t GlobalState::announceBegin(ThreadId tid, bool sticky) {
    Announcement& a = ann_[tid];
    a.sticky.store(sticky, std::memory_order_relaxed);
    uint64_t c = modeCounter();
    for (;;) {
        a.modeWord.store(Announcement::pack(c, true), std::memory_order_seq_cst);
        const uint64_t again = modeCounter();
        if (again == c) return c;
        c = again;
    }
}

void GlobalState::announce(ThreadId tid, uint64_t localModeCounter, bool sticky) {
    Announcement& a = ann_[tid];
    a.sticky.store(sticky, std::memory_order_seq_cst);
    a.modeWord.store(Announcement::pack(localModeCounter, true), std::memory_order_seq_cst);
}

void GlobalState::announceInactive(ThreadId tid) {
    Announcement& a = ann_[tid];
    const uint64_t c = a.modeWord.load(std::memory_order_relaxed) >> 1;
    a.modeWord.store(Announcement::pack(c, false), std::memory_order_seq_cst);
}

ThreadId GlobalState::claimSlot(uint32_t limit) {
    for (ThreadId t = 0; t < limit && t < slots_; ++t) {
        bool expect = false;
        if (ann_[t].registered.compare_exchange_strong(expect, true)) {
            ann_[t].sticky.store(false);
            ann_[t].commitTsDelta.store(kNoDelta);
            ann_[t].modeWord.store(Announcement::pack(modeCounter(), false));
            return t;
        }
    }
    throw std::runtime_error("too many registered threads");
}

void GlobalState::releaseSlot(ThreadId tid) {
    ann_[tid].sticky.store(false);
    ann_[tid].commitTsDelta.store(kNoDelta);
    ann_[tid].modeWord.store(Announcement::pack(modeCounter(), false));
    ann_[tid].registered.store(false, std::memory_order_release);
}

}  // namespace mv
