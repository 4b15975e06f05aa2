#pragma once

// Event recording for the opacity checker. Each thread appends to its own
// buffer; a global atomic sequence number orders events across threads.

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "mv/core_runtime.hpp"
#include "mv/types.hpp"

namespace mv {

enum class EventKind : uint8_t { Begin, Read, Write, Commit, Abort };

const char* eventKindName(EventKind k);

struct HistoryEvent {
    uint64_t seq{0};
    uint64_t txn{0};
    uint32_t attempt{0};
    EventKind kind{EventKind::Begin};
    uint64_t cell{0};
    Word value{0};

    friend bool operator==(const HistoryEvent&, const HistoryEvent&) = default;
};

using History = std::vector<HistoryEvent>;

class HistoryRecorder {
public:
    explicit HistoryRecorder(uint32_t slots);

    uint64_t newTxnId() { return nextTxn_.fetch_add(1, std::memory_order_relaxed); }

    void begin(ThreadId t, uint64_t txn, uint32_t attempt) { push(t, txn, attempt, EventKind::Begin, 0, 0); }
    void read(ThreadId t, const void* cell, Word v) { pushCur(t, EventKind::Read, cell, v); }
    void write(ThreadId t, const void* cell, Word v) { pushCur(t, EventKind::Write, cell, v); }
    void commit(ThreadId t) { pushCur(t, EventKind::Commit, nullptr, 0); }
    void abort(ThreadId t) { pushCur(t, EventKind::Abort, nullptr, 0); }

    // All events ordered by seq. Call only while no thread is recording.
    History collect() const;
    void clear();

private:
    struct alignas(kCacheLine) Buffer {
        uint64_t txn{0};
        uint32_t attempt{0};
        std::vector<HistoryEvent> events;
    };

    void push(ThreadId t, uint64_t txn, uint32_t attempt, EventKind k, uint64_t cell, Word v);
    void pushCur(ThreadId t, EventKind k, const void* cell, Word v) {
        push(t, bufs_[t].txn, bufs_[t].attempt, k, reinterpret_cast<uintptr_t>(cell), v);
    }

    uint32_t slots_;
    std::unique_ptr<Buffer[]> bufs_;
    alignas(kCacheLine) std::atomic<uint64_t> seq_{0};
    std::atomic<uint64_t> nextTxn_{1};
};

// Line format: `seq txn attempt kind cell value`, kind in
// {begin, read, write, commit, abort}.
void writeHistory(std::ostream& out, const History& h);
// Throws std::runtime_error on malformed input.
History readHistory(std::istream& in);

}  // namespace mv
