#pragma once

// Epoch-based reclamation tied to the transaction lifecycle: a thread enters
// at begin and exits at commit/abort. Objects retired in epoch e are
// reclaimed once the global epoch reaches e + 2.

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <type_traits>
#include <vector>

#include "mv/core_runtime.hpp"
#include "mv/types.hpp"

namespace mv {

struct Retired {
    void* obj{nullptr};
    std::size_t bytes{0};
    void (*destroy)(void*){nullptr};
    // Optional hook run right before the storage is released or poisoned, on
    // the reclaiming thread (which may retire further objects).
    void (*prepare)(void* obj, std::size_t bytes, void* ctx, ThreadId reclaimer){nullptr};
    void* ctx{nullptr};

    template <class T>
    static Retired of(T* p, void (*prepare)(void*, std::size_t, void*, ThreadId) = nullptr, void* ctx = nullptr) {
        static_assert(std::is_trivially_destructible_v<T>);
        return Retired{p, sizeof(T), [](void* o) { delete static_cast<T*>(o); }, prepare, ctx};
    }
};

class Ebr {
public:
    // `slots` per-thread records, indexed by ThreadId.
    Ebr(uint32_t slots, bool poison, bool disabled);
    ~Ebr();
    Ebr(const Ebr&) = delete;
    Ebr& operator=(const Ebr&) = delete;

    void enter(ThreadId tid);
    // Announces inactivity, then reclaims whatever this thread may free.
    void exit(ThreadId tid);
    bool inEpoch(ThreadId tid) const;

    // Never reclaims synchronously: callers may hold locks that a prepare
    // hook would need.
    void retire(ThreadId tid, Retired r);

    // Hands a departing thread's pending objects to the shared orphan list.
    void detach(ThreadId tid);
    // Reclaims everything, running hooks as thread `as`. Only valid when no
    // thread is inside an epoch.
    void drainAll(ThreadId as = 0);

    bool tryAdvance();
    uint64_t epoch() const { return global_.load(std::memory_order_seq_cst); }

    bool poisoning() const { return poison_; }
    bool disabled() const { return disabled_; }
    void notePoisonHit() { poisonHits_.fetch_add(1, std::memory_order_relaxed); }
    uint64_t poisonHits() const { return poisonHits_.load(std::memory_order_relaxed); }

    uint64_t retiredCount() const { return retired_.load(std::memory_order_relaxed); }
    uint64_t reclaimedCount() const { return reclaimed_.load(std::memory_order_relaxed); }

    // Fills `bytes` of `obj` with the poison pattern.
    static void poisonFill(void* obj, std::size_t bytes);

private:
    struct Bag {
        uint64_t epoch{0};
        std::vector<Retired> items;
    };
    struct alignas(kCacheLine) Record {
        std::atomic<uint64_t> state{0};  // epoch << 1 | active
        Bag bags[3];
        std::vector<Retired> ready;
        uint32_t exitsSinceAdvance{0};
    };

    void collectEligible(Record& rec, uint64_t g);
    void reclaimList(std::vector<Retired>& items, ThreadId by);
    void reclaimOne(const Retired& r, ThreadId by);
    void reclaimOrphans(uint64_t g, ThreadId by);

    const uint32_t slots_;
    const bool poison_;
    const bool disabled_;
    alignas(kCacheLine) std::atomic<uint64_t> global_{2};
    std::unique_ptr<Record[]> recs_;

    std::mutex orphanMu_;
    std::vector<Bag> orphans_;

    std::mutex quarantineMu_;
    std::vector<Retired> quarantine_;

    std::atomic<uint64_t> retired_{0};
    std::atomic<uint64_t> reclaimed_{0};
    std::atomic<uint64_t> poisonHits_{0};
};

}  // namespace mv
