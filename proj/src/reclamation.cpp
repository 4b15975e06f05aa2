#include "mv/reclamation.hpp"

#include <cassert>
#include <utility>

namespace mv {

namespace {

// Exits between attempts to advance the global epoch.
constexpr uint32_t kAdvanceEvery = 3;

}  // namespace

Ebr::Ebr(uint32_t slots, bool poison, bool disabled)
    : slots_(slots), poison_(poison), disabled_(disabled), recs_(std::make_unique<Record[]>(slots)) {}

Ebr::~Ebr() {
    drainAll();
    for (const Retired& r : quarantine_) r.destroy(r.obj);
}

void Ebr::enter(ThreadId tid) {
    Record& rec = recs_[tid];
    assert((rec.state.load(std::memory_order_relaxed) & 1) == 0 && "nested epoch enter");
    const uint64_t g = global_.load(std::memory_order_seq_cst);
    rec.state.store((g << 1) | 1, std::memory_order_seq_cst);
}

bool Ebr::inEpoch(ThreadId tid) const { return (recs_[tid].state.load(std::memory_order_relaxed) & 1) != 0; }

void Ebr::exit(ThreadId tid) {
    Record& rec = recs_[tid];
    const uint64_t s = rec.state.load(std::memory_order_relaxed);
    assert((s & 1) != 0 && "epoch exit without enter");
    rec.state.store(s & ~uint64_t{1}, std::memory_order_seq_cst);

    if (++rec.exitsSinceAdvance >= kAdvanceEvery) {
        rec.exitsSinceAdvance = 0;
        tryAdvance();
        reclaimOrphans(epoch(), tid);
    }
    collectEligible(rec, epoch());
    while (!rec.ready.empty()) {
        std::vector<Retired> batch;
        batch.swap(rec.ready);
        reclaimList(batch, tid);
    }
}

void Ebr::retire(ThreadId tid, Retired r) {
    retired_.fetch_add(1, std::memory_order_relaxed);
    Record& rec = recs_[tid];
    if (disabled_) {
        rec.ready.push_back(r);
        return;
    }
    const uint64_t g = global_.load(std::memory_order_seq_cst);
    Bag& bag = rec.bags[g % 3];
    if (bag.epoch != g) {
        assert(bag.epoch + 2 <= g);
        for (Retired& old : bag.items) rec.ready.push_back(old);
        bag.items.clear();
        bag.epoch = g;
    }
    bag.items.push_back(r);
}

bool Ebr::tryAdvance() {
    uint64_t g = global_.load(std::memory_order_seq_cst);
    for (uint32_t t = 0; t < slots_; ++t) {
        const uint64_t s = recs_[t].state.load(std::memory_order_seq_cst);
        if ((s & 1) != 0 && (s >> 1) != g) return false;
    }
    return global_.compare_exchange_strong(g, g + 1, std::memory_order_seq_cst);
}

void Ebr::collectEligible(Record& rec, uint64_t g) {
    for (Bag& bag : rec.bags) {
        if (!bag.items.empty() && bag.epoch + 2 <= g) {
            for (Retired& r : bag.items) rec.ready.push_back(r);
            bag.items.clear();
        }
    }
}

void Ebr::detach(ThreadId tid) {
    Record& rec = recs_[tid];
    assert(!inEpoch(tid));
    std::lock_guard<std::mutex> lk(orphanMu_);
    for (Bag& bag : rec.bags) {
        if (!bag.items.empty()) orphans_.push_back(std::move(bag));
        bag = Bag{};
    }
    if (!rec.ready.empty()) {
        orphans_.push_back(Bag{0, std::move(rec.ready)});
        rec.ready.clear();
    }
}

void Ebr::reclaimOrphans(uint64_t g, ThreadId by) {
    std::vector<Retired> batch;
    {
        std::unique_lock<std::mutex> lk(orphanMu_, std::try_to_lock);
        if (!lk.owns_lock() || orphans_.empty()) return;
        std::vector<Bag> keep;
        for (Bag& bag : orphans_) {
            if (bag.epoch + 2 <= g) {
                for (Retired& r : bag.items) batch.push_back(r);
            } else {
                keep.push_back(std::move(bag));
            }
        }
        orphans_.swap(keep);
    }
    reclaimList(batch, by);
}

void Ebr::drainAll(ThreadId as) {
    for (;;) {
        std::vector<Retired> batch;
        for (uint32_t t = 0; t < slots_; ++t) {
            Record& rec = recs_[t];
            for (Bag& bag : rec.bags) {
                for (Retired& r : bag.items) batch.push_back(r);
                bag.items.clear();
            }
            for (Retired& r : rec.ready) batch.push_back(r);
            rec.ready.clear();
        }
        {
            std::lock_guard<std::mutex> lk(orphanMu_);
            for (Bag& bag : orphans_) {
                for (Retired& r : bag.items) batch.push_back(r);
            }
            orphans_.clear();
        }
        if (batch.empty()) return;
        reclaimList(batch, as);
    }
}

void Ebr::reclaimList(std::vector<Retired>& items, ThreadId by) {
    for (const Retired& r : items) reclaimOne(r, by);
    items.clear();
}

void Ebr::poisonFill(void* obj, std::size_t bytes) {
    auto* p = static_cast<unsigned char*>(obj);
    std::size_t i = 0;
    for (; i + sizeof(Word) <= bytes; i += sizeof(Word)) {
        std::memcpy(p + i, &kPoisonWord, sizeof(Word));
    }
    for (; i < bytes; ++i) p[i] = 0xDE;
}

void Ebr::reclaimOne(const Retired& r, ThreadId by) {
    if (r.prepare != nullptr) r.prepare(r.obj, r.bytes, r.ctx, by);
    reclaimed_.fetch_add(1, std::memory_order_relaxed);
    if (poison_) {
        // Concurrent stale readers may still load from here; keep the
        // memory mapped and make every word recognizable.
        for (std::size_t i = 0; i + sizeof(Word) <= r.bytes; i += sizeof(Word)) {
            reinterpret_cast<std::atomic<Word>*>(static_cast<char*>(r.obj) + i)
                ->store(kPoisonWord, std::memory_order_relaxed);
        }
        std::lock_guard<std::mutex> lk(quarantineMu_);
        quarantine_.push_back(r);
        return;
    }
    r.destroy(r.obj);
}

}  // namespace mv
