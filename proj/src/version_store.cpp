#include "mv/version_store.hpp"

#include <algorithm>
#include <cassert>

namespace mv {

namespace {

uint64_t fmix64(uint64_t k) {
    k ^= k >> 33;
    k *= 0xff51afd7ed558ccdull;
    k ^= k >> 33;
    k *= 0xc4ceb9fe1a85ec53ull;
    k ^= k >> 33;
    return k;
}

void countNodeReclaim(void*, std::size_t, void* ctx, ThreadId) {
    static_cast<std::atomic<uint64_t>*>(ctx)->fetch_sub(1, std::memory_order_relaxed);
}

}  // namespace

VersionStore::VersionStore(uint32_t bits, Ebr& ebr)
    : bits_(bits), ebr_(ebr), buckets_(std::size_t{1} << bits), blooms_(std::size_t{1} << bits) {}

VersionStore::~VersionStore() {
    // Superseded nodes were handed to EBR when their successor committed;
    // only each list's head is still owned here.
    for (std::size_t s = 0; s < buckets_.size(); ++s) {
        VersionList* l = buckets_[s].load(std::memory_order_relaxed);
        while (l != nullptr) {
            delete l->head.load(std::memory_order_relaxed);
            VersionList* next = l->next.load(std::memory_order_relaxed);
            delete l;
            l = next;
        }
    }
}

uint64_t VersionStore::bloomMask(const void* cell) {
    // Independent of the slot hash, which consumes the high bits of a
    // different multiplicative mix.
    const uint64_t h = fmix64(reinterpret_cast<uintptr_t>(cell) >> 3);
    return (uint64_t{1} << (h & 63)) | (uint64_t{1} << ((h >> 6) & 63));
}

bool VersionStore::bloomTryAdd(SlotIndex s, const void* cell) {
    const uint64_t m = bloomMask(cell);
    const uint64_t old = blooms_[s].fetch_or(m, std::memory_order_acq_rel);
    return (old & m) != m;
}

bool VersionStore::bloomContains(SlotIndex s, const void* cell) const {
    const uint64_t m = bloomMask(cell);
    return (blooms_[s].load(std::memory_order_acquire) & m) == m;
}

VersionList* VersionStore::tryGetVList(SlotIndex s, const void* cell) const {
    for (VersionList* l = buckets_[s].load(std::memory_order_acquire); l != nullptr;
         l = l->next.load(std::memory_order_acquire)) {
        if (l->cellId == cell) return l;
    }
    return nullptr;
}

VersionList* VersionStore::createVersionList(SlotIndex s, const void* cell, Timestamp ts, Word data) {
    assert(tryGetVList(s, cell) == nullptr && "cell already versioned");
    auto* node = new VersionNode;
    node->stamp.store(VersionNode::packStamp(ts, false), std::memory_order_relaxed);
    node->data.store(data, std::memory_order_relaxed);
    liveNodes_.fetch_add(1, std::memory_order_relaxed);

    auto* list = new VersionList;
    list->cellId = cell;
    list->head.store(node, std::memory_order_relaxed);
    list->next.store(buckets_[s].load(std::memory_order_relaxed), std::memory_order_relaxed);

    linkedLists_.fetch_add(1, std::memory_order_seq_cst);
    blooms_[s].fetch_or(bloomMask(cell), std::memory_order_acq_rel);
    buckets_[s].store(list, std::memory_order_release);
    return list;
}

TraverseResult VersionStore::traverse(const VersionList& list, Timestamp rClock) const {
    using S = TraverseResult::Status;
    const bool poison = ebr_.poisoning();
    auto* const poisonPtr = reinterpret_cast<VersionNode*>(kPoisonWord);

    VersionNode* n = list.head.load(std::memory_order_acquire);
    Backoff bo;
    for (;;) {
        if (poison && n == poisonPtr) return {S::Poisoned};
        if (n == nullptr) return {S::NoSuitableVersion};
        const uint64_t st = n->stamp.load(std::memory_order_acquire);
        if (poison && st == kPoisonWord) return {S::Poisoned};
        // A TBD head with a provisional stamp below our clock may commit
        // below it too; its final stamp is unknown until it resolves.
        if ((st & 1) != 0 && (st >> 1) < rClock) {
            bo.pause();
            n = list.head.load(std::memory_order_acquire);
            continue;
        }
        break;
    }
    for (;;) {
        if (poison && n == poisonPtr) return {S::Poisoned};
        if (n == nullptr) return {S::NoSuitableVersion};
        const uint64_t st = n->stamp.load(std::memory_order_acquire);
        if (poison && st == kPoisonWord) return {S::Poisoned};
        if ((st & 1) == 0 && (st >> 1) < rClock) {
            const Word v = n->data.load(std::memory_order_acquire);
            if (poison && v == kPoisonWord) return {S::Poisoned};
            return {S::Found, v};
        }
        n = n->older.load(std::memory_order_acquire);
    }
}

VersionNode* VersionStore::appendTBD(VersionList& list, Timestamp writerRClock, Word data) {
    VersionNode* head = list.head.load(std::memory_order_relaxed);
    if (head != nullptr && head->tbd()) {
        head->data.store(data, std::memory_order_release);
        return nullptr;
    }
    auto* n = new VersionNode;
    n->older.store(head, std::memory_order_relaxed);
    n->stamp.store(VersionNode::packStamp(writerRClock, true), std::memory_order_relaxed);
    n->data.store(data, std::memory_order_relaxed);
    liveNodes_.fetch_add(1, std::memory_order_relaxed);
    list.head.store(n, std::memory_order_release);
    return head;
}

void VersionStore::resolveTBD(VersionList& list, Timestamp commitClock) {
    VersionNode* head = list.head.load(std::memory_order_relaxed);
    assert(head != nullptr && head->tbd() && "resolving a list without a TBD head");
    // One store publishes the final timestamp together with the cleared mark.
    head->stamp.store(VersionNode::packStamp(commitClock, false), std::memory_order_release);
}

void VersionStore::rollbackTBD(VersionList& list, ThreadId retirer) {
    VersionNode* head = list.head.load(std::memory_order_relaxed);
    assert(head != nullptr && head->tbd() && "rolling back a list without a TBD head");
    head->stamp.store(VersionNode::packStamp(kDeletedTs, false), std::memory_order_release);
    list.head.store(head->older.load(std::memory_order_relaxed), std::memory_order_release);
    retireNode(retirer, head);
}

void VersionStore::retireNode(ThreadId retirer, VersionNode* n) {
    ebr_.retire(retirer, Retired::of(n, &countNodeReclaim, &liveNodes_));
}

void VersionStore::retireList(ThreadId retirer, VersionList* list) {
    // Older nodes were retired by the commits that superseded them.
    retireNode(retirer, list->head.load(std::memory_order_relaxed));
    linkedLists_.fetch_sub(1, std::memory_order_seq_cst);
    ebr_.retire(retirer, Retired::of(list));
}

std::size_t VersionStore::unversionBucket(SlotIndex s, ThreadId retirer) {
    VersionList* l = buckets_[s].exchange(nullptr, std::memory_order_acq_rel);
    blooms_[s].store(0, std::memory_order_release);
    if (l == nullptr) return 0;
    std::size_t lists = 0;
    while (l != nullptr) {
        VersionList* next = l->next.load(std::memory_order_relaxed);
        retireList(retirer, l);
        ++lists;
        l = next;
    }
    unversionedBuckets_.fetch_add(1, std::memory_order_relaxed);
    return lists;
}

Timestamp VersionStore::latestTimestampInBucket(SlotIndex s) const {
    Timestamp latest = 0;
    for (VersionList* l = buckets_[s].load(std::memory_order_acquire); l != nullptr;
         l = l->next.load(std::memory_order_acquire)) {
        for (VersionNode* n = l->head.load(std::memory_order_acquire); n != nullptr;
             n = n->older.load(std::memory_order_acquire)) {
            const uint64_t st = n->stamp.load(std::memory_order_acquire);
            const Timestamp ts = st >> 1;
            if ((st & 1) != 0 || ts == kDeletedTs) continue;
            latest = std::max(latest, ts);
            break;
        }
    }
    return latest;
}

bool VersionStore::unversionCell(SlotIndex s, const void* cell, ThreadId retirer) {
    std::atomic<VersionList*>* link = &buckets_[s];
    for (VersionList* l = link->load(std::memory_order_acquire); l != nullptr; l = link->load(std::memory_order_acquire)) {
        if (l->cellId == cell) {
            link->store(l->next.load(std::memory_order_relaxed), std::memory_order_release);
            retireList(retirer, l);
            return true;
        }
        link = &l->next;
    }
    return false;
}

VersionStoreStats VersionStore::stats() const {
    return {liveNodes_.load(std::memory_order_relaxed), linkedLists_.load(std::memory_order_relaxed),
            unversionedBuckets_.load(std::memory_order_relaxed)};
}

}  // namespace mv
