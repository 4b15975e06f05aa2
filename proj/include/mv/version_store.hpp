#pragma once

// Version-list table (VLT): one bucket per lock slot, each bucket a linked set
// of (cell, version list) nodes, plus a 64-bit bloom filter per bucket.
// Every mutation happens under the slot's lock; readers walk lock-free inside
// a reclamation epoch.

#include <atomic>
#include <cstdint>

#include "mv/core_runtime.hpp"
#include "mv/reclamation.hpp"
#include "mv/types.hpp"

namespace mv {

struct VersionNode {
    std::atomic<VersionNode*> older{nullptr};
    std::atomic<uint64_t> stamp{0};  // ts << 1 | tbd
    std::atomic<Word> data{0};

    static uint64_t packStamp(Timestamp ts, bool tbd) { return (ts << 1) | (tbd ? 1 : 0); }
    Timestamp timestamp() const { return stamp.load(std::memory_order_acquire) >> 1; }
    bool tbd() const { return (stamp.load(std::memory_order_acquire) & 1) != 0; }
};

// A VLT bucket node; it owns the version list of one cell.
struct VersionList {
    const void* cellId{nullptr};
    std::atomic<VersionNode*> head{nullptr};
    std::atomic<VersionList*> next{nullptr};
};

struct TraverseResult {
    enum class Status { Found, NoSuitableVersion, Poisoned };
    Status status;
    Word value{0};
    bool found() const { return status == Status::Found; }
};

struct VersionStoreStats {
    uint64_t liveVersionNodes;
    uint64_t linkedLists;
    uint64_t unversionedBuckets;
};

class VersionStore {
public:
    VersionStore(uint32_t bits, Ebr& ebr);
    ~VersionStore();
    VersionStore(const VersionStore&) = delete;
    VersionStore& operator=(const VersionStore&) = delete;

    std::size_t size() const { return buckets_.size(); }

    // True iff at least one of the cell's bits went 0 -> 1.
    bool bloomTryAdd(SlotIndex s, const void* cell);
    bool bloomContains(SlotIndex s, const void* cell) const;
    uint64_t bloomBits(SlotIndex s) const { return blooms_[s].load(std::memory_order_acquire); }
    static uint64_t bloomMask(const void* cell);

    VersionList* tryGetVList(SlotIndex s, const void* cell) const;
    VersionList* bucketHead(SlotIndex s) const { return buckets_[s].load(std::memory_order_acquire); }

    // Caller holds the slot lock and the cell has no list yet.
    VersionList* createVersionList(SlotIndex s, const void* cell, Timestamp ts, Word data);

    // Newest version with ts < rClock; waits out a TBD head that could still
    // resolve below rClock.
    TraverseResult traverse(const VersionList& list, Timestamp rClock) const;

    // Caller holds the slot lock. Pushes a TBD node and returns the node it
    // superseded, or nullptr if the head already was the caller's TBD node
    // (whose data is overwritten in place).
    VersionNode* appendTBD(VersionList& list, Timestamp writerRClock, Word data);
    void resolveTBD(VersionList& list, Timestamp commitClock);
    void rollbackTBD(VersionList& list, ThreadId retirer);

    // Background unversioning of a whole bucket; caller holds the slot lock.
    // Retires every list with its head (older nodes were retired when they
    // were superseded). Returns the number of lists dropped.
    std::size_t unversionBucket(SlotIndex s, ThreadId retirer);
    // Max committed head timestamp in the bucket, 0 when empty.
    Timestamp latestTimestampInBucket(SlotIndex s) const;
    // Drops a single cell's list (its storage is being reclaimed). Caller holds
    // the slot lock. Returns false if the cell was not versioned.
    bool unversionCell(SlotIndex s, const void* cell, ThreadId retirer);

    void retireNode(ThreadId retirer, VersionNode* n);

    // Any list linked anywhere. Read under a slot lock it is exact for that slot.
    bool anyVersioned() const { return linkedLists_.load(std::memory_order_acquire) != 0; }
    VersionStoreStats stats() const;

private:
    void retireList(ThreadId retirer, VersionList* list);

    uint32_t bits_;
    Ebr& ebr_;
    ZeroedArray<std::atomic<VersionList*>> buckets_;
    ZeroedArray<std::atomic<uint64_t>> blooms_;
    alignas(kCacheLine) std::atomic<uint64_t> liveNodes_{0};
    alignas(kCacheLine) std::atomic<uint64_t> linkedLists_{0};
    std::atomic<uint64_t> unversionedBuckets_{0};
};

}  // namespace mv
